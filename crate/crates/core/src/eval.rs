//! Monte-Carlo prediction, discretization, applicability masking and
//! support-weighted precision / recall / F1.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::catalog::{applicability_fraction, GalaxyRecord};
use crate::data::assemble_batch;
use crate::dirichlet::expected_fractions;
use crate::error::{Error, Result};
use crate::image::AugmentOptions;
use crate::nn::{ForwardMode, NetworkDescription, ParameterSet};
use crate::scalar::Scalar;
use crate::schema::DecisionTreeSchema;
use crate::seed::{self, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    /// Forward passes per galaxy, each with its own dropout mask and augmentation.
    pub passes: usize,
    /// Minimum fraction of a galaxy's volunteers asked a question for it to be scored.
    pub threshold: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub augment: AugmentOptions,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            passes: 5,
            threshold: 0.5,
            batch_size: 64,
            seed: 0,
            augment: AugmentOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord<T> {
    pub id: String,
    /// Concentrations of every pass, in pass order.
    pub pass_concentrations: Vec<Vec<T>>,
    /// Mean over passes of the expected vote fractions.
    pub mean_fractions: Vec<T>,
    /// One-hot per question (34 slots).
    pub discrete: Vec<T>,
}

/// Index of the largest value in each question's slot range; ties go to the lowest index.
pub fn argmax_per_question<T: PartialOrd + Copy>(values: &[T], schema: &DecisionTreeSchema) -> Vec<usize> {
    schema
        .ranges()
        .iter()
        .map(|r| {
            let slice = &values[r.clone()];
            let mut best = 0;
            for (i, v) in slice.iter().enumerate().skip(1) {
                if *v > slice[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

/// Round each question's largest fraction to 1 and the rest to 0.
pub fn discretize<T: Scalar>(fractions: &[T], schema: &DecisionTreeSchema) -> Vec<T> {
    let mut out = vec![T::zero(); fractions.len()];
    for (r, best) in schema.ranges().iter().zip(argmax_per_question(fractions, schema)) {
        out[r.start + best] = T::one();
    }
    out
}

/// Questions scored for this galaxy: asked of at least `threshold` of its
/// volunteers. The root question is always scored.
pub fn question_mask(record: &GalaxyRecord, schema: &DecisionTreeSchema, threshold: f64) -> Vec<bool> {
    (0..schema.num_questions())
        .map(|q| q == schema.root() || applicability_fraction(record, q) >= threshold)
        .collect()
}

/// Majority volunteer answer per question, `None` where nobody answered.
pub fn ground_truth_labels(record: &GalaxyRecord, schema: &DecisionTreeSchema) -> Vec<Option<usize>> {
    argmax_per_question(record.votes(), schema)
        .into_iter()
        .zip(record.question_totals())
        .map(|(best, &n)| (n > 0).then_some(best))
        .collect()
}

/// Predict every record with `opts.passes` mc-dropout passes.
///
/// Augmentation is seeded per galaxy and pass. Dropout masks are drawn per
/// batch, so results depend on `opts.batch_size` as well as the seed.
pub fn predict_records<T: Scalar>(
    net: &NetworkDescription,
    params: &ParameterSet<T>,
    records: &[GalaxyRecord],
    schema: &DecisionTreeSchema,
    opts: &EvalOptions,
) -> Result<Vec<PredictionRecord<T>>> {
    if opts.passes == 0 || opts.batch_size == 0 {
        return Err(Error::InvalidArgument(
            "passes and batch size must be at least 1".into(),
        ));
    }
    let mut out = Vec::with_capacity(records.len());
    for (b, chunk) in records.chunks(opts.batch_size).enumerate() {
        let recs: Vec<&GalaxyRecord> = chunk.iter().collect();
        let mut concentrations: Vec<Vec<Vec<T>>> = vec![Vec::with_capacity(opts.passes); recs.len()];
        let mut means: Vec<Vec<T>> = vec![vec![T::zero(); schema.total_answers()]; recs.len()];
        for p in 0..opts.passes {
            let batch = assemble_batch::<T>(&recs, opts.seed, stream::EVAL_AUGMENT, p as u64, &opts.augment)?;
            let mut rng = seed::rng(seed::derive(opts.seed, &[stream::EVAL_DROPOUT, p as u64, b as u64]));
            let pass = net.forward(params, &batch, ForwardMode::McDropout, &mut rng)?;
            // Running mean, so identical passes reproduce the single-pass value exactly.
            let weight = T::one() / T::from_usize_lossy(p + 1);
            for (i, c) in pass.concentrations.into_iter().enumerate() {
                let fractions = expected_fractions(c.as_slice(), schema)?;
                for (m, f) in means[i].iter_mut().zip(fractions) {
                    *m += (f - *m) * weight;
                }
                concentrations[i].push(c.into_inner());
            }
        }
        for ((r, pass_concentrations), mean_fractions) in recs.iter().zip(concentrations).zip(means) {
            out.push(PredictionRecord {
                id: r.id.clone(),
                discrete: discretize(&mean_fractions, schema),
                pass_concentrations,
                mean_fractions,
            });
        }
    }
    Ok(out)
}

/// Single-galaxy form of [`predict_records`].
pub fn predict<T: Scalar>(
    net: &NetworkDescription,
    params: &ParameterSet<T>,
    record: &GalaxyRecord,
    schema: &DecisionTreeSchema,
    opts: &EvalOptions,
) -> Result<PredictionRecord<T>> {
    Ok(predict_records(net, params, std::slice::from_ref(record), schema, opts)?.remove(0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptionMetrics {
    pub answer: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Galaxies whose true label is this option.
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionMetrics {
    pub question: String,
    pub options: Vec<OptionMetrics>,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Galaxies scored on this question (masked in and labelled).
    pub support: usize,
    /// Some option had a zero precision, recall or F1 denominator, scored as 0.
    pub zero_denominator: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model: String,
    pub options: EvalOptions,
    pub questions: Vec<QuestionMetrics>,
    /// Question metrics weighted by question support.
    pub overall: WeightedMetrics,
}

fn ratio(num: usize, den: usize, flag: &mut bool) -> f64 {
    if den == 0 {
        *flag = true;
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1_score(p: f64, r: f64, flag: &mut bool) -> f64 {
    if p + r == 0.0 {
        *flag = true;
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Support-weighted mean of `(value, weight)` pairs; 0 when all weights are 0.
pub fn weighted_mean(items: impl IntoIterator<Item = (f64, f64)>) -> f64 {
    let (num, den) = items.into_iter().fold((0.0, 0.0), |(n, d), (v, w)| (n + v * w, d + w));
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Overall row from per-question rows.
pub fn aggregate(questions: &[QuestionMetrics]) -> WeightedMetrics {
    let w = |f: fn(&QuestionMetrics) -> f64| weighted_mean(questions.iter().map(|q| (f(q), q.support as f64)));
    WeightedMetrics {
        precision: w(|q| q.precision),
        recall: w(|q| q.recall),
        f1: w(|q| q.f1),
    }
}

/// One-vs-rest metrics per option over galaxies that are masked in and
/// labelled, weighted by true-label support within each question.
pub fn compute_metrics<T: Scalar>(
    predictions: &[PredictionRecord<T>],
    truths: &[GalaxyRecord],
    masks: &[Vec<bool>],
    schema: &DecisionTreeSchema,
) -> Result<MetricsReport> {
    if predictions.len() != truths.len() || predictions.len() != masks.len() {
        return Err(Error::Shape(format!(
            "{} predictions, {} truths, {} masks",
            predictions.len(),
            truths.len(),
            masks.len()
        )));
    }
    for (index, (p, t)) in predictions.iter().zip(truths).enumerate() {
        if p.id != t.id {
            return Err(Error::IdMismatch {
                index,
                prediction: p.id.clone(),
                truth: t.id.clone(),
            });
        }
    }
    let predicted: Vec<Vec<usize>> = predictions
        .iter()
        .map(|p| argmax_per_question(&p.discrete, schema))
        .collect();
    let labels: Vec<Vec<Option<usize>>> = truths.iter().map(|t| ground_truth_labels(t, schema)).collect();

    let mut questions = Vec::with_capacity(schema.num_questions());
    for (q, question) in schema.questions().iter().enumerate() {
        let k = question.answer_slots.len();
        let (mut tp, mut fp, mut fn_) = (vec![0usize; k], vec![0usize; k], vec![0usize; k]);
        let mut support = 0;
        for g in 0..predictions.len() {
            let Some(truth) = labels[g][q] else { continue };
            if !masks[g][q] {
                continue;
            }
            support += 1;
            let guess = predicted[g][q];
            if guess == truth {
                tp[truth] += 1;
            } else {
                fp[guess] += 1;
                fn_[truth] += 1;
            }
        }
        // Only options carrying weight can affect the reported averages.
        let mut zero_denominator = false;
        let options: Vec<OptionMetrics> = (0..k)
            .map(|o| {
                let support = tp[o] + fn_[o];
                let mut flag = false;
                let precision = ratio(tp[o], tp[o] + fp[o], &mut flag);
                let recall = ratio(tp[o], support, &mut flag);
                let f1 = f1_score(precision, recall, &mut flag);
                zero_denominator |= flag && support > 0;
                OptionMetrics {
                    answer: question.answer_slots[o].clone(),
                    precision,
                    recall,
                    f1,
                    support,
                }
            })
            .collect();
        let w = |f: fn(&OptionMetrics) -> f64| weighted_mean(options.iter().map(|o| (f(o), o.support as f64)));
        questions.push(QuestionMetrics {
            question: question.id.clone(),
            precision: w(|o| o.precision),
            recall: w(|o| o.recall),
            f1: w(|o| o.f1),
            support,
            zero_denominator,
            options,
        });
    }
    Ok(MetricsReport {
        model: String::new(),
        options: EvalOptions::default(),
        overall: aggregate(&questions),
        questions,
    })
}

/// Predict, mask and score `records`.
pub fn evaluate<T: Scalar>(
    net: &NetworkDescription,
    params: &ParameterSet<T>,
    records: &[GalaxyRecord],
    schema: &DecisionTreeSchema,
    opts: &EvalOptions,
) -> Result<(Vec<PredictionRecord<T>>, MetricsReport)> {
    let predictions = predict_records(net, params, records, schema, opts)?;
    let masks: Vec<Vec<bool>> = records
        .iter()
        .map(|r| question_mask(r, schema, opts.threshold))
        .collect();
    let mut report = compute_metrics(&predictions, records, &masks, schema)?;
    report.model = format!("{} ({})", net.family.reference_name(), net.preset);
    report.options = opts.clone();
    Ok((predictions, report))
}

/// `id,question,option,mean_fraction,discrete`, one row per galaxy and answer.
pub fn write_predictions_csv<T: Scalar>(
    path: &Path,
    predictions: &[PredictionRecord<T>],
    schema: &DecisionTreeSchema,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    let io = |e: csv::Error| Error::io(path, e.into());
    w.write_record(["id", "question", "option", "mean_fraction", "discrete"])
        .map_err(io)?;
    for p in predictions {
        for (question, r) in schema.questions().iter().zip(schema.ranges()) {
            for (slot, answer) in r.clone().zip(&question.answer_slots) {
                w.write_record([
                    p.id.as_str(),
                    question.id.as_str(),
                    answer.as_str(),
                    &format!("{:.6}", p.mean_fractions[slot].to_f64_lossy()),
                    &format!("{}", p.discrete[slot].to_f64_lossy() as u8),
                ])
                .map_err(io)?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

impl MetricsReport {
    /// `question,precision,recall,f1,support` plus a `weighted-average` row.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
        let io = |e: csv::Error| Error::io(path, e.into());
        w.write_record(["question", "precision", "recall", "f1", "support"])
            .map_err(io)?;
        for q in &self.questions {
            w.write_record([
                q.question.clone(),
                format!("{:.4}", q.precision),
                format!("{:.4}", q.recall),
                format!("{:.4}", q.f1),
                q.support.to_string(),
            ])
            .map_err(io)?;
        }
        let total: usize = self.questions.iter().map(|q| q.support).sum();
        w.write_record([
            "weighted-average".to_string(),
            format!("{:.4}", self.overall.precision),
            format!("{:.4}", self.overall.recall),
            format!("{:.4}", self.overall.f1),
            total.to_string(),
        ])
        .map_err(io)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Aligned text table: one row per question and a weighted-average footer.
    pub fn to_table(&self) -> String {
        let width = self
            .questions
            .iter()
            .map(|q| q.question.len())
            .max()
            .unwrap_or(8)
            .max(16);
        let mut s = String::new();
        let _ = writeln!(s, "{}", self.model);
        let _ = writeln!(
            s,
            "{:<width$}  {:>9}  {:>6}  {:>8}  {:>7}",
            "question", "precision", "recall", "f1-score", "support"
        );
        for q in &self.questions {
            if q.support == 0 {
                let _ = writeln!(
                    s,
                    "{:<width$}  {:>9}  {:>6}  {:>8}  {:>7}",
                    q.question, "-", "-", "-", 0
                );
            } else {
                let mark = if q.zero_denominator { " *" } else { "" };
                let _ = writeln!(
                    s,
                    "{:<width$}  {:>9.3}  {:>6.3}  {:>8.3}  {:>7}{mark}",
                    q.question, q.precision, q.recall, q.f1, q.support
                );
            }
        }
        let total: usize = self.questions.iter().map(|q| q.support).sum();
        let _ = writeln!(
            s,
            "{:<width$}  {:>9.3}  {:>6.3}  {:>8.3}  {:>7}",
            "weighted average", self.overall.precision, self.overall.recall, self.overall.f1, total
        );
        if self.questions.iter().any(|q| q.zero_denominator) {
            let _ = writeln!(s, "* an option had a zero denominator and was scored 0");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::build_gzd5_schema;

    fn record(schema: &DecisionTreeSchema, id: &str, set: &[(&str, u32)]) -> GalaxyRecord {
        let mut votes = vec![0; schema.total_answers()];
        for (a, v) in set {
            votes[schema.slot(a).unwrap()] = *v;
        }
        GalaxyRecord::new(id, format!("{id}.mb01"), votes, schema).unwrap()
    }

    fn prediction(schema: &DecisionTreeSchema, id: &str, choose: &[&str]) -> PredictionRecord<f64> {
        // Uniform fractions, then bump the chosen answers.
        let mut fractions = vec![0.0; schema.total_answers()];
        for r in schema.ranges() {
            let k = r.len() as f64;
            fractions[r.clone()].iter_mut().for_each(|f| *f = 1.0 / k);
        }
        for a in choose {
            fractions[schema.slot(a).unwrap()] += 0.5;
        }
        PredictionRecord {
            id: id.into(),
            pass_concentrations: Vec::new(),
            discrete: discretize(&fractions, schema),
            mean_fractions: fractions,
        }
    }

    #[test]
    fn discretize_examples() {
        let s = build_gzd5_schema();
        let mut f = vec![0.0f64; 34];
        let r = s.range(0);
        f[r.clone()].copy_from_slice(&[0.2, 0.5, 0.3]);
        let d = discretize(&f, &s);
        assert_eq!(&d[r], &[0.0, 1.0, 0.0]);

        let r = s.range(1);
        f[r.clone()].copy_from_slice(&[0.5, 0.5]);
        assert_eq!(&discretize(&f, &s)[r], &[1.0, 0.0]);
    }

    #[test]
    fn mask_boundary_is_inclusive() {
        let s = build_gzd5_schema();
        let root = s.questions()[s.root()].answer_slots[1].clone();
        let bar = s.question_index("bar").unwrap();
        let bar_answer = s.questions()[bar].answer_slots[0].clone();
        let at = record(&s, "a", &[(root.as_str(), 40), (bar_answer.as_str(), 20)]);
        assert!(question_mask(&at, &s, 0.5)[bar]);
        let below = record(&s, "b", &[(root.as_str(), 40), (bar_answer.as_str(), 19)]);
        assert!(!question_mask(&below, &s, 0.5)[bar]);
        assert!(question_mask(&below, &s, 0.99)[s.root()]);
    }

    #[test]
    fn ground_truth_examples() {
        let s = build_gzd5_schema();
        let r = record(
            &s,
            "a",
            &[
                ("smooth-or-featured_smooth", 10),
                ("smooth-or-featured_featured-or-disk", 2),
            ],
        );
        let labels = ground_truth_labels(&r, &s);
        assert_eq!(labels[0], Some(0));
        assert_eq!(labels[1], None);
        let tie = record(
            &s,
            "b",
            &[
                ("disk-edge-on_yes", 5),
                ("disk-edge-on_no", 5),
                ("smooth-or-featured_smooth", 10),
            ],
        );
        assert_eq!(
            ground_truth_labels(&tie, &s)[s.question_index("disk-edge-on").unwrap()],
            Some(0)
        );
    }

    #[test]
    fn perfect_predictions_score_one() {
        let s = build_gzd5_schema();
        let truths = vec![
            record(
                &s,
                "a",
                &[
                    ("smooth-or-featured_smooth", 8),
                    ("smooth-or-featured_artifact", 1),
                    ("merging_none", 9),
                ],
            ),
            record(&s, "b", &[("smooth-or-featured_artifact", 5), ("merging_merger", 5)]),
        ];
        let preds = vec![
            prediction(&s, "a", &["smooth-or-featured_smooth", "merging_none"]),
            prediction(&s, "b", &["smooth-or-featured_artifact", "merging_merger"]),
        ];
        let masks: Vec<Vec<bool>> = truths.iter().map(|t| question_mask(t, &s, 0.5)).collect();
        let m = compute_metrics(&preds, &truths, &masks, &s).unwrap();
        assert_eq!((m.overall.precision, m.overall.recall, m.overall.f1), (1.0, 1.0, 1.0));
        assert_eq!(m.questions[0].support, 2);
    }

    #[test]
    fn id_mismatch_is_an_error() {
        let s = build_gzd5_schema();
        let truths = vec![record(&s, "a", &[("smooth-or-featured_smooth", 3)])];
        let preds = vec![prediction(&s, "z", &[])];
        let masks = vec![vec![true; 10]];
        assert!(matches!(
            compute_metrics(&preds, &truths, &masks, &s),
            Err(Error::IdMismatch { .. })
        ));
    }

    #[test]
    fn weighted_recall_is_accuracy() {
        let s = build_gzd5_schema();
        let answers = [
            "smooth-or-featured_smooth",
            "smooth-or-featured_featured-or-disk",
            "smooth-or-featured_artifact",
        ];
        let mut truths = Vec::new();
        let mut preds = Vec::new();
        for i in 0..12 {
            let t = answers[i % 3];
            let p = answers[(i * 7 / 5) % 3];
            truths.push(record(&s, &format!("g{i}"), &[(t, 5)]));
            preds.push(prediction(&s, &format!("g{i}"), &[p]));
        }
        let masks: Vec<Vec<bool>> = truths.iter().map(|t| question_mask(t, &s, 0.5)).collect();
        let m = compute_metrics(&preds, &truths, &masks, &s).unwrap();
        let correct = (0..12).filter(|&i| i % 3 == (i * 7 / 5) % 3).count();
        assert!((m.questions[0].recall - correct as f64 / 12.0).abs() < 1e-12);
        let option_support: usize = m.questions[0].options.iter().map(|o| o.support).sum();
        assert_eq!(option_support, m.questions[0].support);
    }
}
