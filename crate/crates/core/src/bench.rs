//! Benchmark orchestration: data, per-family training and evaluation, and the
//! comparison report.
//!
//! Output layout under the configured directory:
//!
//! ```text
//! bench_config.json
//! data/                      synthetic catalog and images (synthetic source only)
//! <family>/checkpoint.mbck
//! <family>/train_log.csv, train_summary.json
//! <family>/metrics.json, metrics.csv, metrics.txt, predictions.csv
//! <family>/failure.txt       only when the family failed
//! report/report.md           comparison tables, config echo and seeds
//! report/{epochs,precision,recall,f1}.csv
//! report/training_time.csv   wall-clock hours (not reproducible between runs)
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::catalog::{load_catalog, split_catalog, Catalog};
use crate::error::{Error, Result};
use crate::eval::{evaluate, write_predictions_csv, EvalOptions, MetricsReport};
use crate::nn::{load_model, write_checkpoint, CheckpointMeta, Family, Preset};
use crate::schema::{build_gzd5_schema, DecisionTreeSchema};
use crate::synth::{generate_synthetic, SyntheticSpec};
use crate::train::{train_with, EpochRecord, StopReason, TrainLog, TrainOptions, TrainSummary};

pub const CHECKPOINT_FILE: &str = "checkpoint.mbck";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";
pub const TRAIN_SUMMARY_FILE: &str = "train_summary.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const FAILURE_FILE: &str = "failure.txt";
pub const CONFIG_FILE: &str = "bench_config.json";
pub const REPORT_DIR: &str = "report";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataSource {
    /// Existing catalog CSV.
    Catalog(PathBuf),
    /// Generated into `<out>/data` before training.
    Synthetic(SyntheticSpec),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSettings {
    #[serde(flatten)]
    pub options: EvalOptions,
    /// Draw a fresh train/test split with this seed for evaluation instead of
    /// reusing the training hold-out.
    pub resplit: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub data: DataSource,
    #[serde(default = "default_families")]
    pub families: Vec<Family>,
    #[serde(default = "default_preset")]
    pub preset: Preset,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    /// `seed` here is ignored; the global seed is used.
    #[serde(default)]
    pub train: TrainOptions,
    #[serde(default)]
    pub eval: EvalSettings,
    pub out_dir: PathBuf,
    /// Drives the split, initialization, shuffling, augmentation and dropout.
    #[serde(default)]
    pub seed: u64,
}

fn default_families() -> Vec<Family> {
    vec![Family::CompoundScaled, Family::DenseConnect, Family::Residual]
}

fn default_preset() -> Preset {
    Preset::Tiny
}

fn default_test_fraction() -> f64 {
    0.2
}

impl BenchConfig {
    pub fn new(data: DataSource, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            data,
            families: default_families(),
            preset: default_preset(),
            test_fraction: default_test_fraction(),
            train: TrainOptions::default(),
            eval: EvalSettings::default(),
            out_dir: out_dir.into(),
            seed: 0,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.families.is_empty() {
            return Err(Error::InvalidArgument("no families to run".into()));
        }
        for (i, f) in self.families.iter().enumerate() {
            if self.families[..i].contains(f) {
                return Err(Error::InvalidArgument(format!("family {f} listed twice")));
            }
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "test fraction {} not in (0, 1)",
                self.test_fraction
            )));
        }
        if self.eval.options.passes == 0 || self.eval.options.batch_size == 0 {
            return Err(Error::InvalidArgument(
                "evaluation needs at least one pass and batch size 1".into(),
            ));
        }
        if let DataSource::Synthetic(spec) = &self.data {
            spec.validate()?;
        }
        self.train.validate()?;
        std::fs::create_dir_all(&self.out_dir).map_err(|e| Error::io(&self.out_dir, e))?;
        let probe = self.out_dir.join(".write-probe");
        std::fs::write(&probe, b"").map_err(|e| Error::io(&self.out_dir, e))?;
        let _ = std::fs::remove_file(&probe);
        Ok(())
    }

    pub fn train_options(&self) -> TrainOptions {
        TrainOptions {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    pub fn eval_options(&self) -> EvalOptions {
        EvalOptions {
            seed: self.seed,
            ..self.eval.options.clone()
        }
    }

    /// Everything needed to reproduce a run. The output directory is left out
    /// so identical runs into different directories echo identically.
    pub fn echo(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = value.as_object_mut() {
            map.remove("out_dir");
        }
        serde_json::to_string_pretty(&value).expect("config serializes")
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<D: for<'de> Deserialize<'de>>(path: &Path) -> Result<D> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Load `<dir>/catalog.csv`, or `dir` itself when it names a file.
pub fn load_data(path: &Path, schema: Arc<DecisionTreeSchema>) -> Result<Catalog> {
    let file = if path.is_dir() {
        path.join("catalog.csv")
    } else {
        path.to_path_buf()
    };
    let (catalog, _) = load_catalog(&file, schema)?;
    if catalog.is_empty() {
        return Err(Error::EmptyCatalog);
    }
    Ok(catalog)
}

/// Train one family on the `1 - test_fraction` part of `catalog`, validating
/// on the held-out part, and write checkpoint, log and summary into `dir`.
pub fn train_family(
    family: Family,
    preset: Preset,
    catalog: &Catalog,
    test_fraction: f64,
    opts: &TrainOptions,
    dir: &Path,
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainLog> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (train, test) = split_catalog(catalog, test_fraction, opts.seed)?;
    let (_, params, log) = train_with::<f32>(family, preset, &train, &test, opts, on_epoch)?;
    let meta = CheckpointMeta {
        family,
        preset,
        dropout_rate: opts.dropout_rate,
        seed: opts.seed,
        test_fraction,
        split_seed: opts.seed,
    };
    write_checkpoint(&dir.join(CHECKPOINT_FILE), &meta, &params)?;
    log.write_csv(&dir.join(TRAIN_LOG_FILE))?;
    log.write_summary(&dir.join(TRAIN_SUMMARY_FILE))?;
    Ok(log)
}

/// Evaluate a checkpoint on the hold-out it was trained against (or on a fresh
/// split when `resplit` is given) and write metrics and predictions into `dir`.
pub fn evaluate_checkpoint(
    checkpoint: &Path,
    catalog: &Catalog,
    opts: &EvalOptions,
    resplit: Option<u64>,
    dir: &Path,
) -> Result<MetricsReport> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (meta, net, params) = load_model(checkpoint, &catalog.schema)?;
    let (_, test) = split_catalog(catalog, meta.test_fraction, resplit.unwrap_or(meta.split_seed))?;
    let (predictions, report) = evaluate(&net, &params, &test.records, &catalog.schema, opts)?;
    write_text(
        &dir.join(METRICS_FILE),
        &(serde_json::to_string_pretty(&report)? + "\n"),
    )?;
    report.write_csv(&dir.join("metrics.csv"))?;
    write_text(&dir.join("metrics.txt"), &report.to_table())?;
    write_predictions_csv(&dir.join("predictions.csv"), &predictions, &catalog.schema)?;
    Ok(report)
}

/// What one family produced; a failed family keeps whatever finished before the error.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyResult {
    pub family: Family,
    pub summary: Option<TrainSummary>,
    pub metrics: Option<MetricsReport>,
    pub failure: Option<String>,
}

impl FamilyResult {
    /// Read a family directory written by [`run_benchmark`] or the per-step commands.
    pub fn load(family: Family, dir: &Path) -> Result<Self> {
        let opt = |name: &str| {
            let p = dir.join(name);
            p.exists().then_some(p)
        };
        let summary = opt(TRAIN_SUMMARY_FILE).map(|p| read_json(&p)).transpose()?;
        let metrics = opt(METRICS_FILE).map(|p| read_json(&p)).transpose()?;
        let failure = opt(FAILURE_FILE)
            .map(|p| std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e)))
            .transpose()?
            .map(|s| s.trim_end().to_string());
        Ok(Self {
            family,
            summary,
            metrics,
            failure,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportInput {
    /// Config echo (JSON); empty when unknown.
    pub config: String,
    pub seeds: Vec<(String, u64)>,
    pub results: Vec<FamilyResult>,
}

/// Rendered report files, as `(file name, contents)` in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedReport {
    pub files: Vec<(String, String)>,
}

impl RenderedReport {
    pub fn get(&self, name: &str) -> Option<&str> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, s)| s.as_str())
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, text) in &self.files {
            write_text(&dir.join(name), text)?;
        }
        Ok(())
    }
}

/// Best and worst marks for one row, compared at the displayed precision.
/// Ties share a mark; a row whose values are all equal is only marked best.
/// Nothing is marked with fewer than two values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mark {
    None,
    Best,
    Worst,
}

pub fn mark_row(values: &[Option<f64>]) -> Vec<Mark> {
    let shown: Vec<Option<f64>> = values
        .iter()
        .map(|v| v.map(|x| format!("{x:.3}").parse::<f64>().expect("formatted number")))
        .collect();
    let present: Vec<f64> = shown.iter().flatten().copied().collect();
    if present.len() < 2 {
        return vec![Mark::None; values.len()];
    }
    let hi = present.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = present.iter().copied().fold(f64::INFINITY, f64::min);
    shown
        .iter()
        .map(|v| match v {
            Some(x) if *x == hi => Mark::Best,
            Some(x) if *x == lo => Mark::Worst,
            _ => Mark::None,
        })
        .collect()
}

fn cell(value: Option<f64>, mark: Mark) -> String {
    match (value, mark) {
        (None, _) => "-".into(),
        (Some(v), Mark::Best) => format!("**{v:.3}**"),
        (Some(v), Mark::Worst) => format!("<u>{v:.3}</u>"),
        (Some(v), Mark::None) => format!("{v:.3}"),
    }
}

#[derive(Clone, Copy)]
enum Metric {
    Precision,
    Recall,
    F1,
}

impl Metric {
    fn name(self) -> &'static str {
        match self {
            Metric::Precision => "precision",
            Metric::Recall => "recall",
            Metric::F1 => "f1",
        }
    }

    fn title(self) -> &'static str {
        match self {
            Metric::Precision => "Precision comparison",
            Metric::Recall => "Recall comparison",
            Metric::F1 => "F1-score comparison",
        }
    }

    fn of_question(self, q: &crate::eval::QuestionMetrics) -> f64 {
        match self {
            Metric::Precision => q.precision,
            Metric::Recall => q.recall,
            Metric::F1 => q.f1,
        }
    }

    fn of_overall(self, m: &MetricsReport) -> f64 {
        match self {
            Metric::Precision => m.overall.precision,
            Metric::Recall => m.overall.recall,
            Metric::F1 => m.overall.f1,
        }
    }
}

/// Question ids in report order with the support shown for each.
fn question_rows(results: &[FamilyResult]) -> Vec<(String, usize)> {
    let first = results.iter().find_map(|r| r.metrics.as_ref());
    match first {
        Some(m) => m.questions.iter().map(|q| (q.question.clone(), q.support)).collect(),
        None => build_gzd5_schema()
            .questions()
            .iter()
            .map(|q| (q.id.clone(), 0))
            .collect(),
    }
}

fn metric_value(r: &FamilyResult, metric: Metric, question: &str) -> Option<f64> {
    let q = r.metrics.as_ref()?.questions.iter().find(|q| q.question == question)?;
    (q.support > 0).then(|| metric.of_question(q))
}

fn markdown_row(cells: &[String]) -> String {
    format!("| {} |\n", cells.join(" | "))
}

fn render_metric_table(results: &[FamilyResult], metric: Metric, md: &mut String, csv: &mut String) {
    let rows = question_rows(results);
    let _ = writeln!(md, "## {}\n", metric.title());
    let mut header = vec!["Question".to_string(), "Support".to_string()];
    header.extend(results.iter().map(|r| r.family.reference_name().to_string()));
    md.push_str(&markdown_row(&header));
    md.push_str(&markdown_row(&vec!["---".to_string(); header.len()]));
    let _ = write!(csv, "question,support");
    for r in results {
        let _ = write!(csv, ",{}", r.family.as_str());
    }
    csv.push('\n');

    let mut line = |label: String, support: usize, values: Vec<Option<f64>>| {
        let marks = mark_row(&values);
        let mut cells = vec![label.clone(), support.to_string()];
        cells.extend(values.iter().zip(&marks).map(|(&v, &m)| cell(v, m)));
        md.push_str(&markdown_row(&cells));
        let plain = label.trim_matches('*');
        let _ = write!(csv, "{plain},{support}");
        for v in &values {
            match v {
                Some(x) => {
                    let _ = write!(csv, ",{x}");
                }
                None => csv.push_str(",-"),
            }
        }
        csv.push('\n');
    };
    for (question, support) in &rows {
        let values = results.iter().map(|r| metric_value(r, metric, question)).collect();
        line(question.clone(), *support, values);
    }
    let total: usize = rows.iter().map(|(_, s)| s).sum();
    let overall = results
        .iter()
        .map(|r| r.metrics.as_ref().map(|m| metric.of_overall(m)))
        .collect();
    line("**Weighted Average**".into(), total, overall);
    md.push_str("\nBest model result in bold, worst underlined. Questions with no support are shown as dashes.\n\n");
}

fn stop_text(reason: StopReason) -> &'static str {
    match reason {
        StopReason::EarlyStop => "early stop",
        StopReason::MaxEpochs => "epoch cap",
    }
}

/// Render the comparison document and its CSV companions. Identical inputs
/// give byte-identical output. Wall-clock hours go to `training_time.csv` only.
pub fn render_report(input: &ReportInput) -> RenderedReport {
    let results = &input.results;
    let mut md = String::from("# Galaxy morphology benchmark\n\n");

    md.push_str("## Training statistics\n\n");
    let mut header = vec![String::new()];
    header.extend(results.iter().map(|r| r.family.reference_name().to_string()));
    md.push_str(&markdown_row(&header));
    md.push_str(&markdown_row(&vec!["---".to_string(); header.len()]));
    let summary_row = |label: &str, f: &dyn Fn(&TrainSummary) -> String| {
        let mut cells = vec![label.to_string()];
        cells.extend(
            results
                .iter()
                .map(|r| r.summary.as_ref().map(f).unwrap_or_else(|| "-".into())),
        );
        markdown_row(&cells)
    };
    md.push_str(&summary_row("Total epochs", &|s| s.epochs_run.to_string()));
    md.push_str(&summary_row("Best epoch", &|s| s.best_epoch.to_string()));
    md.push_str(&summary_row("Best validation loss", &|s| {
        format!("{:.4}", s.best_val_loss)
    }));
    md.push_str(&summary_row("Stopped by", &|s| stop_text(s.stop_reason).to_string()));
    md.push_str("\nWall-clock training hours are in `training_time.csv`.\n\n");

    let mut epochs = String::from("family,model,epochs,best_epoch,best_val_loss,stop_reason\n");
    let mut hours = String::from("family,model,hours\n");
    for r in results {
        if let Some(s) = &r.summary {
            let stop = serde_json::to_value(s.stop_reason).expect("enum serializes");
            let _ = writeln!(
                epochs,
                "{},{},{},{},{},{}",
                r.family.as_str(),
                r.family.reference_name(),
                s.epochs_run,
                s.best_epoch,
                s.best_val_loss,
                stop.as_str().unwrap_or_default()
            );
            let _ = writeln!(
                hours,
                "{},{},{:.3}",
                r.family.as_str(),
                r.family.reference_name(),
                s.total_hours
            );
        }
    }

    let mut files = Vec::new();
    let mut tables = Vec::new();
    for metric in [Metric::Precision, Metric::Recall, Metric::F1] {
        let mut csv = String::new();
        render_metric_table(results, metric, &mut md, &mut csv);
        tables.push((format!("{}.csv", metric.name()), csv));
    }

    let failed: Vec<&FamilyResult> = results.iter().filter(|r| r.failure.is_some()).collect();
    if !failed.is_empty() {
        md.push_str("## Failures\n\n");
        for r in failed {
            let msg = r.failure.as_deref().unwrap_or_default().replace('\n', " ");
            let _ = writeln!(md, "- {}: {msg}", r.family.reference_name());
        }
        md.push('\n');
    }

    md.push_str("## Reproducibility\n\n");
    for (name, value) in &input.seeds {
        let _ = writeln!(md, "- {name}: {value}");
    }
    if !input.config.is_empty() {
        let _ = write!(md, "\n```json\n{}\n```\n", input.config.trim_end());
    }

    files.push(("report.md".to_string(), md));
    files.push(("epochs.csv".to_string(), epochs));
    files.extend(tables);
    files.push(("training_time.csv".to_string(), hours));
    RenderedReport { files }
}

fn seeds_of(config: &BenchConfig) -> Vec<(String, u64)> {
    let mut seeds = vec![
        ("global seed".to_string(), config.seed),
        ("training split seed".to_string(), config.seed),
    ];
    if let Some(s) = config.eval.resplit {
        seeds.push(("evaluation resplit seed".to_string(), s));
    }
    if let DataSource::Synthetic(spec) = &config.data {
        seeds.push(("synthetic data seed".to_string(), spec.seed));
    }
    seeds
}

/// Collect the family directories under `dir` and render the report. Uses
/// `bench_config.json` for family order and the config echo when present.
pub fn report_from_dir(dir: &Path) -> Result<RenderedReport> {
    let config_path = dir.join(CONFIG_FILE);
    let config = config_path
        .exists()
        .then(|| BenchConfig::load(&config_path))
        .transpose()?;
    let families = match &config {
        Some(c) => c.families.clone(),
        None => default_families()
            .into_iter()
            .filter(|f| dir.join(f.as_str()).is_dir())
            .collect(),
    };
    if families.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no family results under {}",
            dir.display()
        )));
    }
    let results = families
        .iter()
        .map(|&f| FamilyResult::load(f, &dir.join(f.as_str())))
        .collect::<Result<Vec<_>>>()?;
    Ok(render_report(&ReportInput {
        config: config.as_ref().map(BenchConfig::echo).unwrap_or_default(),
        seeds: config.as_ref().map(seeds_of).unwrap_or_default(),
        results,
    }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchOutcome {
    pub results: Vec<FamilyResult>,
    pub report_dir: PathBuf,
}

impl BenchOutcome {
    pub fn failed(&self) -> bool {
        self.results.iter().any(|r| r.failure.is_some())
    }
}

fn run_family(
    config: &BenchConfig,
    family: Family,
    catalog: &Catalog,
    dir: &Path,
    on_event: &mut dyn FnMut(&str),
) -> std::result::Result<(), String> {
    let opts = config.train_options();
    train_family(family, config.preset, catalog, config.test_fraction, &opts, dir, |e| {
        on_event(&format!(
            "{family} epoch {}: train {:.4} val {:.4} ({:.1} s)",
            e.epoch, e.train_loss, e.val_loss, e.seconds
        ))
    })
    .map_err(|e| format!("training failed: {e}"))?;
    let report = evaluate_checkpoint(
        &dir.join(CHECKPOINT_FILE),
        catalog,
        &config.eval_options(),
        config.eval.resplit,
        dir,
    )
    .map_err(|e| format!("evaluation failed: {e}"))?;
    on_event(&format!(
        "{family}: precision {:.3} recall {:.3} f1 {:.3}",
        report.overall.precision, report.overall.recall, report.overall.f1
    ));
    Ok(())
}

/// Run every configured family, then write the report. A family that fails is
/// recorded in its directory and in the report; the others still run.
pub fn run_benchmark_with(config: &BenchConfig, mut on_event: impl FnMut(&str)) -> Result<BenchOutcome> {
    config.validate()?;
    let out = &config.out_dir;
    write_text(&out.join(CONFIG_FILE), &(serde_json::to_string_pretty(config)? + "\n"))?;
    let schema = Arc::new(build_gzd5_schema());
    let catalog = match &config.data {
        DataSource::Catalog(path) => load_data(path, schema)?,
        DataSource::Synthetic(spec) => {
            on_event(&format!("generating {} synthetic galaxies", spec.count));
            generate_synthetic(spec, schema, &out.join("data"))?
        }
    };
    for &family in &config.families {
        let dir = out.join(family.as_str());
        if dir.exists() {
            std::fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        if let Err(message) = run_family(config, family, &catalog, &dir, &mut on_event) {
            on_event(&format!("{family}: {message}"));
            write_text(&dir.join(FAILURE_FILE), &(message + "\n"))?;
        }
    }
    let report_dir = out.join(REPORT_DIR);
    report_from_dir(out)?.write(&report_dir)?;
    let results = config
        .families
        .iter()
        .map(|&f| FamilyResult::load(f, &out.join(f.as_str())))
        .collect::<Result<Vec<_>>>()?;
    Ok(BenchOutcome { results, report_dir })
}

pub fn run_benchmark(config: &BenchConfig) -> Result<BenchOutcome> {
    run_benchmark_with(config, |_| {})
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn marks_follow_the_displayed_value() {
        use Mark::*;
        assert_eq!(mark_row(&[Some(0.5)]), vec![None]);
        assert_eq!(mark_row(&[Some(0.5), Some(0.5)]), vec![Best, Best]);
        assert_eq!(mark_row(&[Some(0.9), Some(0.9), Some(0.1)]), vec![Best, Best, Worst]);
        assert_eq!(mark_row(&[Some(0.1), Some(0.9), Some(0.1)]), vec![Worst, Best, Worst]);
        assert_eq!(
            mark_row(&[Some(0.8001), Some(0.8004), Some(0.7)]),
            vec![Best, Best, Worst]
        );
        assert_eq!(mark_row(&[Option::None, Some(0.2), Some(0.3)]), vec![None, Worst, Best]);
    }

    #[test]
    fn config_round_trips_and_defaults() {
        let c = BenchConfig::new(DataSource::Synthetic(SyntheticSpec::default()), "/tmp/x");
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<BenchConfig>(&text).unwrap(), c);
        let minimal: BenchConfig =
            serde_json::from_str(r#"{"data": {"catalog": "cat.csv"}, "out_dir": "o", "eval": {"resplit": 3}}"#)
                .unwrap();
        assert_eq!(minimal.families.len(), 3);
        assert_eq!(minimal.eval.resplit, Some(3));
        assert_eq!(minimal.eval.options.passes, 5);
        assert!(!c.echo().contains("out_dir"));
    }
}
