//! Reference per-question results for three models (columns: compound-scaled,
//! dense-connect, residual) with their published best/worst markup, and the
//! question supports they were computed over.
#![allow(dead_code)]

pub mod gradcheck;

use morphbench::eval::{aggregate, EvalOptions, MetricsReport, QuestionMetrics};
use morphbench::nn::Family;

pub const COLUMNS: [Family; 3] = [Family::CompoundScaled, Family::DenseConnect, Family::Residual];

pub const SUPPORTS: [(&str, usize); 10] = [
    ("smooth-or-featured", 49917),
    ("disk-edge-on", 15445),
    ("has-spiral-arms", 11380),
    ("bar", 11380),
    ("bulge-size", 11380),
    ("how-rounded", 32526),
    ("edge-on-bulge", 2475),
    ("spiral-winding", 7499),
    ("spiral-arm-count", 7499),
    ("merging", 49247),
];

pub const PRECISION: &str = r"
smooth-or-featured&0.877&\textbf{0.880}&\underline{0.869}
disk-edge-on&\underline{0.954}&\textbf{0.957}&0.955
has-spiral-arms&0.891&\textbf{0.893}&\underline{0.868}
bar&0.697&\textbf{0.698}&\underline{0.673}
bulge-size&0.684&\textbf{0.690}&\underline{0.675}
how-rounded&0.870&\textbf{0.876}&\underline{0.867}
edge-on-bulge&0.794&\textbf{0.826}&\underline{0.785}
spiral-winding&0.685&\textbf{0.695}&\underline{0.677}
spiral-arm-count&0.664&\textbf{0.695}&\underline{0.652}
merging&0.849&\textbf{0.851}&\underline{0.845}
Weighted Average&0.838&\textbf{0.843}&\underline{0.831}
";

pub const RECALL: &str = r"
smooth-or-featured&0.876&\textbf{0.881}&\underline{0.863}
disk-edge-on&\underline{0.955}&\textbf{0.957}&0.955
has-spiral-arms&0.887&\textbf{0.888}&\underline{0.875}
bar&\textbf{0.715}&0.710&\underline{0.696}
bulge-size&0.694&\textbf{0.696}&\underline{0.691}
how-rounded&0.867&\textbf{0.875}&\underline{0.864}
edge-on-bulge&0.820&\textbf{0.825}&\underline{0.816}
spiral-winding&0.698&\textbf{0.707}&\underline{0.690}
spiral-arm-count&\textbf{0.676}&0.674&\underline{0.664}
merging&0.881&\textbf{0.882}&\underline{0.880}
Weighted Average&0.848&\textbf{0.851}&\underline{0.841}
";

pub const F1: &str = r"
smooth-or-featured&0.876&\textbf{0.881}&\underline{0.865}
disk-edge-on&\underline{0.955}&\textbf{0.956}&0.955
has-spiral-arms&0.889&\textbf{0.890}&\underline{0.869}
bar&\textbf{0.693}&0.677&\underline{0.662}
bulge-size&\underline{0.669}&\textbf{0.674}&0.672
how-rounded&0.867&\textbf{0.875}&\underline{0.865}
edge-on-bulge&0.787&\textbf{0.794}&\underline{0.784}
spiral-winding&0.687&\textbf{0.696}&\underline{0.678}
spiral-arm-count&0.654&\textbf{0.668}&\underline{0.642}
merging&0.851&\textbf{0.855}&\underline{0.848}
Weighted Average&0.836&\textbf{0.840}&\underline{0.829}
";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefMark {
    Plain,
    Bold,
    Underline,
}

pub struct RefRow {
    pub label: String,
    pub values: [f64; 3],
    pub marks: [RefMark; 3],
}

pub fn parse(table: &str) -> Vec<RefRow> {
    table
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let mut cells = line.split('&');
            let label = cells.next().unwrap().to_string();
            let mut values = [0.0; 3];
            let mut marks = [RefMark::Plain; 3];
            for (i, c) in cells.enumerate() {
                let (inner, mark) = if let Some(s) = c.strip_prefix(r"\textbf{") {
                    (s.trim_end_matches('}'), RefMark::Bold)
                } else if let Some(s) = c.strip_prefix(r"\underline{") {
                    (s.trim_end_matches('}'), RefMark::Underline)
                } else {
                    (c, RefMark::Plain)
                };
                values[i] = inner.parse().unwrap();
                marks[i] = mark;
            }
            RefRow { label, values, marks }
        })
        .collect()
}

/// One metrics report per column, built from the per-question rows of the
/// three tables. Overall rows are recomputed from the question values.
pub fn reports() -> Vec<MetricsReport> {
    let (p, r, f) = (parse(PRECISION), parse(RECALL), parse(F1));
    (0..3)
        .map(|col| {
            let questions: Vec<QuestionMetrics> = SUPPORTS
                .iter()
                .enumerate()
                .map(|(i, &(id, support))| {
                    assert_eq!(p[i].label, id);
                    QuestionMetrics {
                        question: id.to_string(),
                        options: Vec::new(),
                        precision: p[i].values[col],
                        recall: r[i].values[col],
                        f1: f[i].values[col],
                        support,
                        zero_denominator: false,
                    }
                })
                .collect();
            MetricsReport {
                model: COLUMNS[col].reference_name().to_string(),
                options: EvalOptions::default(),
                overall: aggregate(&questions),
                questions,
            }
        })
        .collect()
}
