//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Pass criterion numbers as arguments to run a subset,
//! e.g. `cargo test --test acceptance -- 1 2 5`.

mod common;

use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::Rng;

use morphbench::bench::{run_benchmark_with, BenchConfig, DataSource, REPORT_DIR};
use morphbench::catalog::GalaxyRecord;
use morphbench::dirichlet::{dm_log_pmf, dm_nll_gradient, dm_nll_loss, record_nll};
use morphbench::eval::{compute_metrics, discretize, predict_records, question_mask, EvalOptions, PredictionRecord};
use morphbench::image::AugmentOptions;
use morphbench::nn::{build_model, parameter_count, Family, Preset, DEFAULT_DROPOUT};
use morphbench::schema::{build_gzd5_schema, DecisionTreeSchema};
use morphbench::seed;
use morphbench::synth::{generate_synthetic, SyntheticSpec};
use morphbench::train::StopReason;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed <= limit, || {
        format!(
            "took {:.1} s, limit {:.0} s",
            elapsed.as_secs_f64(),
            limit.as_secs_f64()
        )
    })
}

/// All count vectors of length `k` summing to `n`.
fn compositions(n: u32, k: usize) -> Vec<Vec<u32>> {
    if k == 1 {
        return vec![vec![n]];
    }
    (0..=n)
        .flat_map(|first| {
            compositions(n - first, k - 1).into_iter().map(move |mut rest| {
                rest.insert(0, first);
                rest
            })
        })
        .collect()
}

fn random_alpha(rng: &mut impl Rng, k: usize) -> Vec<f64> {
    (0..k).map(|_| rng.random_range(1.0001..99.999)).collect()
}

fn dm_normalization() -> Check {
    let start = Instant::now();
    let schema = build_gzd5_schema();
    let mut shapes: Vec<usize> = schema
        .questions()
        .iter()
        .map(|q| q.num_options())
        .filter(|&k| k <= 3)
        .collect();
    shapes.sort();
    shapes.dedup();
    let mut rng = seed::rng(101);
    let (mut worst, mut cases) = (0.0f64, 0);
    for &k in &shapes {
        for _ in 0..200 {
            let alpha = random_alpha(&mut rng, k);
            for n in 0..=6 {
                let total: f64 = compositions(n, k)
                    .iter()
                    .map(|v| dm_log_pmf(v, &alpha, true).unwrap().exp())
                    .sum();
                worst = worst.max((total - 1.0).abs());
                cases += 1;
            }
        }
    }
    ensure(worst < 1e-8, || format!("max |sum - 1| = {worst:e}"))?;
    within(start.elapsed(), Duration::from_secs(10))?;
    Ok(format!(
        "shapes K in {shapes:?}, {cases} (alpha, N) cases, max |sum - 1| = {worst:.1e}"
    ))
}

fn loss_gradient() -> Check {
    let start = Instant::now();
    let schema = build_gzd5_schema();
    let mut rng = seed::rng(202);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let alpha = random_alpha(&mut rng, 34);
        let votes: Vec<u32> = (0..34)
            .map(|_| {
                if rng.random_bool(0.3) {
                    0
                } else {
                    rng.random_range(0..40)
                }
            })
            .collect();
        let grad = dm_nll_gradient(&votes, &alpha, &schema).unwrap();
        for i in 0..34 {
            // Only the question owning slot i depends on it; differencing that
            // term alone keeps the other terms' roundoff out.
            let q = (0..schema.num_questions())
                .find(|&q| schema.range(q).contains(&i))
                .unwrap();
            let loss = |a: &[f64]| record_nll(&votes, a, &schema).unwrap()[q];
            let h = 1e-3 * alpha[i];
            let mut a = alpha.clone();
            a[i] = alpha[i] + h;
            let up = loss(&a);
            a[i] = alpha[i] - h;
            let down = loss(&a);
            // Fourth-order central difference keeps truncation error far below 1e-6.
            a[i] = alpha[i] + 2.0 * h;
            let up2 = loss(&a);
            a[i] = alpha[i] - 2.0 * h;
            let down2 = loss(&a);
            let numeric = (8.0 * (up - down) - (up2 - down2)) / (12.0 * h);
            let scale = numeric.abs().max(grad[i].abs());
            if scale > 0.0 {
                worst = worst.max((numeric - grad[i]).abs() / scale);
            }
        }
    }
    ensure(worst < 1e-6, || format!("worst relative error {worst:e}"))?;
    within(start.elapsed(), Duration::from_secs(5))?;
    Ok(format!("100 draws x 34 slots, worst relative error {worst:.1e}"))
}

fn network_gradient() -> Check {
    let mut parts = Vec::new();
    for family in Family::ALL {
        let start = Instant::now();
        let (worst, redrawn) = common::gradcheck::gradient_check(family, 200);
        ensure(worst < 1e-3, || format!("{family}: worst relative error {worst:e}"))?;
        within(start.elapsed(), Duration::from_secs(120)).map_err(|e| format!("{family}: {e}"))?;
        parts.push(format!(
            "{family} {worst:.1e} ({redrawn} kinked redrawn, {:.0} s)",
            start.elapsed().as_secs_f64()
        ));
    }
    Ok(format!("200 components each: {}", parts.join(", ")))
}

fn parameter_counts() -> Check {
    let start = Instant::now();
    let schema = build_gzd5_schema();
    let mut parts = Vec::new();
    for (family, target) in [
        (Family::CompoundScaled, 4.0e6),
        (Family::DenseConnect, 7.0e6),
        (Family::Residual, 23.6e6),
    ] {
        let (_, params) =
            build_model::<f32>(family, Preset::Paper, &schema, DEFAULT_DROPOUT, 1).map_err(|e| e.to_string())?;
        let count = parameter_count(&params);
        let dev = count as f64 / target - 1.0;
        ensure(dev.abs() <= 0.05, || format!("{family}: {count} vs {target}"))?;
        parts.push(format!("{family} {count} ({:+.2}%)", dev * 100.0));
    }
    within(start.elapsed(), Duration::from_secs(60))?;
    Ok(parts.join(", "))
}

fn aggregation() -> Check {
    let start = Instant::now();
    let reports = common::reports();
    let want = [[0.838, 0.848, 0.836], [0.843, 0.851, 0.840], [0.831, 0.841, 0.829]];
    let mut parts = Vec::new();
    for (r, w) in reports.iter().zip(want) {
        let got = [r.overall.precision, r.overall.recall, r.overall.f1];
        for (g, x) in got.iter().zip(w) {
            ensure((g - x).abs() <= 0.001, || format!("{}: {g:.5} vs {x}", r.model))?;
        }
        parts.push(format!("{} {:.4}/{:.4}/{:.4}", r.model, got[0], got[1], got[2]));
    }
    within(start.elapsed(), Duration::from_secs(1))?;
    Ok(parts.join(", "))
}

/// Support-weighted precision / recall / F1 of each question from a full
/// confusion matrix, plus the support-weighted overall row.
fn brute_force_metrics(
    predicted: &[Vec<usize>],
    truth: &[Vec<Option<usize>>],
    masks: &[Vec<bool>],
    schema: &DecisionTreeSchema,
) -> (Vec<[f64; 3]>, Vec<usize>, [f64; 3]) {
    let mut rows = Vec::new();
    let mut supports = Vec::new();
    for (q, question) in schema.questions().iter().enumerate() {
        let k = question.num_options();
        let mut confusion = vec![vec![0usize; k]; k];
        for g in 0..predicted.len() {
            if let (Some(t), true) = (truth[g][q], masks[g][q]) {
                confusion[t][predicted[g][q]] += 1;
            }
        }
        let row_sum = |c: usize| confusion[c].iter().sum::<usize>();
        let col_sum = |c: usize| (0..k).map(|r| confusion[r][c]).sum::<usize>();
        let div = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let (mut acc, mut weight) = ([0.0; 3], 0.0);
        for c in 0..k {
            let p = div(confusion[c][c], col_sum(c));
            let r = div(confusion[c][c], row_sum(c));
            let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
            let w = row_sum(c) as f64;
            for (a, v) in acc.iter_mut().zip([p, r, f]) {
                *a += v * w;
            }
            weight += w;
        }
        rows.push(acc.map(|a| if weight == 0.0 { 0.0 } else { a / weight }));
        supports.push((0..k).map(row_sum).sum());
    }
    let total: f64 = supports.iter().map(|&s| s as f64).sum();
    let mut overall = [0.0; 3];
    for m in 0..3 {
        let num: f64 = rows.iter().zip(&supports).map(|(r, &s)| r[m] * s as f64).sum();
        overall[m] = if total == 0.0 { 0.0 } else { num / total };
    }
    (rows, supports, overall)
}

fn metrics_oracle() -> Check {
    let start = Instant::now();
    let schema = build_gzd5_schema();
    let mut rng = seed::rng(606);
    let mut scored = 0;
    for set in 0..50 {
        let n = rng.random_range(1..=20);
        let threshold = [0.5, 0.3, 0.7][set % 3];
        let mut preds = Vec::new();
        let mut truths = Vec::new();
        for g in 0..n {
            let votes: Vec<u32> = (0..34)
                .map(|_| {
                    if rng.random_bool(0.25) {
                        0
                    } else {
                        rng.random_range(0..4)
                    }
                })
                .collect();
            truths.push(GalaxyRecord::new(format!("g{g}"), "g.mb01", votes, &schema).unwrap());
            // Coarse fractions make prediction ties common.
            let fractions: Vec<f64> = (0..34).map(|_| rng.random_range(0..4) as f64 / 4.0).collect();
            preds.push(PredictionRecord {
                id: format!("g{g}"),
                pass_concentrations: Vec::new(),
                discrete: discretize(&fractions, &schema),
                mean_fractions: fractions,
            });
        }
        let masks: Vec<Vec<bool>> = truths.iter().map(|t| question_mask(t, &schema, threshold)).collect();
        let report = compute_metrics(&preds, &truths, &masks, &schema).map_err(|e| e.to_string())?;

        let predicted: Vec<Vec<usize>> = preds
            .iter()
            .map(|p| {
                schema
                    .ranges()
                    .iter()
                    .map(|r| p.discrete[r.clone()].iter().position(|&x| x == 1.0).unwrap())
                    .collect()
            })
            .collect();
        let truth: Vec<Vec<Option<usize>>> = truths
            .iter()
            .map(|t| {
                schema
                    .ranges()
                    .iter()
                    .map(|r| {
                        let v = &t.votes()[r.clone()];
                        let max = *v.iter().max().unwrap();
                        (max > 0).then(|| v.iter().position(|&x| x == max).unwrap())
                    })
                    .collect()
            })
            .collect();
        let (rows, supports, overall) = brute_force_metrics(&predicted, &truth, &masks, &schema);
        for (q, m) in report.questions.iter().enumerate() {
            let got = [m.precision, m.recall, m.f1];
            ensure(got == rows[q] && m.support == supports[q], || {
                format!(
                    "set {set}, {}: {got:?}/{} vs {:?}/{}",
                    m.question, m.support, rows[q], supports[q]
                )
            })?;
            scored += m.support;
        }
        let got = [report.overall.precision, report.overall.recall, report.overall.f1];
        ensure(got == overall, || format!("set {set} overall: {got:?} vs {overall:?}"))?;
    }
    within(start.elapsed(), Duration::from_secs(10))?;
    Ok(format!(
        "50 sets, {scored} scored (galaxy, question) pairs, all values bit-identical"
    ))
}

fn protocol_invariants() -> Check {
    let schema = build_gzd5_schema();
    let slot = |a: &str| schema.slot(a).unwrap();

    // Zero-vote questions.
    let mut votes = vec![0u32; 34];
    votes[slot("smooth-or-featured_smooth")] = 7;
    votes[slot("smooth-or-featured_artifact")] = 1;
    votes[slot("how-rounded_round")] = 7;
    let alpha: Vec<f64> = (0..34).map(|i| 1.5 + i as f64).collect();
    let per_q = record_nll(&votes, &alpha, &schema).unwrap();
    let grad = dm_nll_gradient(&votes, &alpha, &schema).unwrap();
    let loss = dm_nll_loss(&[votes.as_slice()], &[alpha.as_slice()], &schema).unwrap();
    for (q, r) in schema.ranges().iter().enumerate() {
        if votes[r.clone()].iter().all(|&v| v == 0) {
            ensure(per_q[q] == 0.0 && loss.per_question[q] == 0.0, || {
                format!("question {q} contributes to the loss")
            })?;
            ensure(grad[r.clone()].iter().all(|&g| g == 0.0), || {
                format!("question {q} has gradient")
            })?;
        }
    }

    // Mask boundary: 5 of 10 volunteers asked is scored, 4 of 10 is not.
    let mut v = vec![0u32; 34];
    v[slot("smooth-or-featured_smooth")] = 5;
    v[slot("smooth-or-featured_featured-or-disk")] = 5;
    v[slot("how-rounded_round")] = 5;
    v[slot("disk-edge-on_yes")] = 4;
    let r = GalaxyRecord::new("m", "m.mb01", v, &schema).unwrap();
    let mask = question_mask(&r, &schema, 0.5);
    ensure(mask[schema.question_index("how-rounded").unwrap()], || {
        "5/10 excluded".into()
    })?;
    ensure(!mask[schema.question_index("disk-edge-on").unwrap()], || {
        "4/10 included".into()
    })?;

    // Tie-break.
    let mut f = vec![0.0f64; 34];
    for s in schema.range(schema.root()) {
        f[s] = 1.0 / 3.0;
    }
    let d = discretize(&f, &schema);
    ensure(d[schema.range(schema.root()).start] == 1.0, || {
        "tie not resolved to the lowest index".into()
    })?;

    // Five passes without dropout or augmentation collapse to one.
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let spec = SyntheticSpec {
        count: 3,
        side: 40,
        seed: 8,
        ..SyntheticSpec::default()
    };
    let catalog = generate_synthetic(&spec, Arc::new(schema.clone()), dir.path()).map_err(|e| e.to_string())?;
    let (net, params) =
        build_model::<f32>(Family::Residual, Preset::Tiny, &schema, 0.0, 4).map_err(|e| e.to_string())?;
    let opts = |passes| EvalOptions {
        passes,
        augment: AugmentOptions {
            enabled: false,
            ..AugmentOptions::default()
        },
        ..EvalOptions::default()
    };
    let five = predict_records(&net, &params, &catalog.records, &schema, &opts(5)).map_err(|e| e.to_string())?;
    let one = predict_records(&net, &params, &catalog.records, &schema, &opts(1)).map_err(|e| e.to_string())?;
    for (a, b) in five.iter().zip(&one) {
        ensure(
            a.pass_concentrations.iter().all(|c| *c == b.pass_concentrations[0]),
            || "passes differ".into(),
        )?;
        ensure(a.mean_fractions == b.mean_fractions && a.discrete == b.discrete, || {
            "mean differs".into()
        })?;
    }
    Ok("zero-vote questions inert; 5/10 scored, 4/10 not; ties to lowest index; 5 passes == 1 pass".into())
}

fn toy_benchmark() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let spec = SyntheticSpec {
        count: 2000,
        seed: 2024,
        ..SyntheticSpec::default()
    };
    let mut config = BenchConfig::new(DataSource::Synthetic(spec), dir.path());
    config.train.max_epochs = 60;
    config.seed = 1;
    let cap = config.train.max_epochs;
    let patience = config.train.patience;

    let mut mark = Instant::now();
    let mut spent = Vec::new();
    let outcome = run_benchmark_with(&config, |msg| {
        eprintln!("  {msg}");
        if msg.contains(": precision") || msg.contains("failed") {
            spent.push(mark.elapsed());
            mark = Instant::now();
        }
    })
    .map_err(|e| e.to_string())?;

    let mut parts = Vec::new();
    let mut problems = Vec::new();
    for (r, elapsed) in outcome
        .results
        .iter()
        .zip(spent.iter().chain(std::iter::repeat(&Duration::ZERO)))
    {
        let family = r.family;
        if let Some(f) = &r.failure {
            problems.push(format!("{family} failed: {f}"));
            continue;
        }
        let (Some(s), Some(m)) = (&r.summary, &r.metrics) else {
            problems.push(format!("{family}: missing results"));
            continue;
        };
        let minutes = elapsed.as_secs_f64() / 60.0;
        parts.push(format!(
            "{family} F1 {:.3}, {} epochs (best {}), {:.1} min",
            m.overall.f1, s.epochs_run, s.best_epoch, minutes
        ));
        if m.overall.f1 < 0.90 {
            problems.push(format!("{family}: F1 {:.3} < 0.90", m.overall.f1));
        }
        if s.stop_reason != StopReason::EarlyStop || s.epochs_run >= cap || s.epochs_run < patience + 1 {
            problems.push(format!(
                "{family}: stopped by {:?} after {} epochs (cap {cap})",
                s.stop_reason, s.epochs_run
            ));
        }
        if minutes > 30.0 {
            problems.push(format!("{family}: {minutes:.1} min > 30"));
        }
    }
    if problems.is_empty() {
        Ok(parts.join("; "))
    } else {
        Err(format!("{} [{}]", problems.join("; "), parts.join("; ")))
    }
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn determinism() -> Check {
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let spec = SyntheticSpec {
        count: 40,
        side: 48,
        seed: 77,
        ..SyntheticSpec::default()
    };
    let mut reports = Vec::new();
    for run in ["a", "b"] {
        let mut config = BenchConfig::new(DataSource::Synthetic(spec.clone()), root.path().join(run));
        config.train.max_epochs = 2;
        config.train.batch_size = 16;
        config.eval.options.passes = 2;
        config.seed = 5;
        let path = root.path().join(format!("{run}.json"));
        std::fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).map_err(|e| e.to_string())?;
        let status = Command::new(env!("CARGO_BIN_EXE_bench"))
            .args(["all", "--config"])
            .arg(&path)
            .output()
            .map_err(|e| e.to_string())?;
        ensure(status.status.success(), || {
            format!(
                "bench all exited with {}: {}",
                status.status,
                String::from_utf8_lossy(&status.stderr)
            )
        })?;
        let files: Vec<(String, Vec<u8>)> = read_dir_sorted(&root.path().join(run).join(REPORT_DIR))
            .into_iter()
            .filter(|(name, _)| name != "training_time.csv")
            .collect();
        reports.push(files);
    }
    ensure(reports[0].len() >= 5, || {
        format!("only {} report files", reports[0].len())
    })?;
    for (a, b) in reports[0].iter().zip(&reports[1]) {
        ensure(a == b, || format!("{} differs between runs", a.0))?;
    }
    let names: Vec<&str> = reports[0].iter().map(|(n, _)| n.as_str()).collect();
    Ok(format!("two `bench all` runs, identical {}", names.join(", ")))
}

fn main() {
    let criteria: [(u32, &str, fn() -> Check); 9] = [
        (1, "Dirichlet-Multinomial normalization", dm_normalization),
        (2, "loss gradient vs finite differences", loss_gradient),
        (3, "network gradient vs finite differences", network_gradient),
        (4, "paper-config parameter counts", parameter_counts),
        (5, "weighted aggregation of reference tables", aggregation),
        (6, "metrics vs brute-force confusion matrices", metrics_oracle),
        (7, "end-to-end toy benchmark", toy_benchmark),
        (8, "protocol invariants", protocol_invariants),
        (9, "determinism of `bench all`", determinism),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (n, name, check) in criteria {
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {n} ({name}): PASS [{secs:.1} s] {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n} ({name}): FAIL [{secs:.1} s] {detail}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
