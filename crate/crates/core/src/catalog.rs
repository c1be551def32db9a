//! Galaxy catalogs: CSV ingestion, the minimum-classification filter, seeded
//! train/test splitting, and per-question applicability.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::schema::DecisionTreeSchema;
use crate::seed;

/// Galaxies with fewer root classifications than this are dropped at load.
pub const MIN_CLASSIFICATIONS: u32 = 3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GalaxyRecord {
    pub id: String,
    pub image_ref: PathBuf,
    votes: Vec<u32>,
    question_totals: Vec<u32>,
    root_total: u32,
}

impl GalaxyRecord {
    /// Totals are always recomputed from the per-slot votes.
    pub fn new(
        id: impl Into<String>,
        image_ref: impl Into<PathBuf>,
        votes: Vec<u32>,
        schema: &DecisionTreeSchema,
    ) -> Result<Self> {
        if votes.len() != schema.total_answers() {
            return Err(Error::Shape(format!(
                "{} votes for {} answer slots",
                votes.len(),
                schema.total_answers()
            )));
        }
        let question_totals: Vec<u32> = schema.ranges().iter().map(|r| votes[r.clone()].iter().sum()).collect();
        let root_total = question_totals[schema.root()];
        Ok(Self {
            id: id.into(),
            image_ref: image_ref.into(),
            votes,
            question_totals,
            root_total,
        })
    }

    pub fn votes(&self) -> &[u32] {
        &self.votes
    }

    pub fn question_totals(&self) -> &[u32] {
        &self.question_totals
    }

    /// Volunteers shown the galaxy; every one of them answers the root question.
    pub fn root_total(&self) -> u32 {
        self.root_total
    }
}

/// Fraction of the galaxy's volunteers who were asked question `q`.
pub fn applicability_fraction(record: &GalaxyRecord, q: usize) -> f64 {
    if record.root_total == 0 {
        return 0.0;
    }
    record.question_totals[q] as f64 / record.root_total as f64
}

#[derive(Debug, Clone)]
pub struct Catalog {
    pub records: Vec<GalaxyRecord>,
    pub schema: Arc<DecisionTreeSchema>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoadStats {
    pub loaded: usize,
    pub dropped: usize,
}

impl Catalog {
    pub fn new(records: Vec<GalaxyRecord>, schema: Arc<DecisionTreeSchema>) -> Self {
        Self { records, schema }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Parse a catalog CSV (`id,image_path,<answer ids in slot order>`).
///
/// Image paths are resolved relative to the catalog's directory and must exist.
pub fn load_catalog(path: &Path, schema: Arc<DecisionTreeSchema>) -> Result<(Catalog, LoadStats)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file);

    let header = reader
        .headers()
        .map_err(|e| Error::SchemaMismatch {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?
        .clone();
    let expected: Vec<&str> = ["id", "image_path"].into_iter().chain(schema.answer_ids()).collect();
    for (i, want) in expected.iter().enumerate() {
        match header.get(i) {
            Some(got) if got.trim() == *want => {}
            Some(got) => {
                return Err(Error::SchemaMismatch {
                    path: path.to_path_buf(),
                    message: format!("column {} is {got:?}, expected {want:?}", i + 1),
                })
            }
            None => {
                return Err(Error::SchemaMismatch {
                    path: path.to_path_buf(),
                    message: format!("missing column {want:?}"),
                })
            }
        }
    }
    if header.len() > expected.len() {
        return Err(Error::SchemaMismatch {
            path: path.to_path_buf(),
            message: format!("unexpected extra column {:?}", &header[expected.len()]),
        });
    }

    let mut records = Vec::new();
    let mut dropped = 0;
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::MalformedRow {
                path: path.to_path_buf(),
                line,
                column: String::new(),
                message: e.to_string(),
            }
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let malformed = |column: &str, message: String| Error::MalformedRow {
            path: path.to_path_buf(),
            line,
            column: column.to_string(),
            message,
        };
        if row.len() != expected.len() {
            return Err(malformed(
                "",
                format!("{} fields, expected {}", row.len(), expected.len()),
            ));
        }
        let id = row[0].trim();
        if id.is_empty() {
            return Err(malformed("id", "empty id".into()));
        }
        let image_field = row[1].trim();
        if image_field.is_empty() {
            return Err(malformed("image_path", "empty image path".into()));
        }
        let mut votes = Vec::with_capacity(schema.total_answers());
        for (i, col) in expected.iter().enumerate().skip(2) {
            let raw = row[i].trim();
            let v: u32 = raw
                .parse()
                .map_err(|_| malformed(col, format!("{raw:?} is not a non-negative integer")))?;
            votes.push(v);
        }
        let record = GalaxyRecord::new(id, base.join(image_field), votes, &schema)?;
        if let Some(q) = record.question_totals.iter().position(|&t| t > record.root_total) {
            return Err(malformed(
                &schema.questions()[q].id,
                format!(
                    "question total {} exceeds root total {}",
                    record.question_totals[q], record.root_total
                ),
            ));
        }
        if record.root_total < MIN_CLASSIFICATIONS {
            dropped += 1;
            continue;
        }
        if !record.image_ref.is_file() {
            return Err(Error::MissingImage {
                path: path.to_path_buf(),
                id: record.id,
                image: record.image_ref,
            });
        }
        records.push(record);
    }
    let stats = LoadStats {
        loaded: records.len(),
        dropped,
    };
    Ok((Catalog::new(records, schema), stats))
}

/// Write records as catalog CSV. Image paths are written relative to `base`
/// when possible.
pub fn write_catalog(path: &Path, records: &[GalaxyRecord], schema: &DecisionTreeSchema, base: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    let io = |e: csv::Error| Error::io(path, e.into());
    let header: Vec<&str> = ["id", "image_path"].into_iter().chain(schema.answer_ids()).collect();
    w.write_record(&header).map_err(io)?;
    for r in records {
        let rel = r.image_ref.strip_prefix(base).unwrap_or(&r.image_ref);
        let mut fields = vec![r.id.clone(), rel.to_string_lossy().into_owned()];
        fields.extend(r.votes.iter().map(u32::to_string));
        w.write_record(&fields).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Test-set size for `n` records: `ceil(n * fraction)`; the train set gets the floor of the rest.
pub fn split_sizes(n: usize, test_fraction: f64) -> (usize, usize) {
    // Guard against representation error pushing an exact product over an integer.
    let test = ((n as f64 * test_fraction) - 1e-9).ceil().max(0.0) as usize;
    let test = test.min(n);
    (n - test, test)
}

/// Seeded random partition into (train, test). Each part keeps catalog order.
pub fn split_catalog(catalog: &Catalog, test_fraction: f64, seed_value: u64) -> Result<(Catalog, Catalog)> {
    if catalog.is_empty() {
        return Err(Error::EmptyCatalog);
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test fraction {test_fraction} not in (0, 1)"
        )));
    }
    let n = catalog.len();
    let (_, n_test) = split_sizes(n, test_fraction);
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = seed::rng(seed::derive(seed_value, &[seed::stream::SPLIT]));
    order.shuffle(&mut rng);
    let mut in_test = vec![false; n];
    for &i in &order[..n_test] {
        in_test[i] = true;
    }
    let (mut train, mut test) = (Vec::with_capacity(n - n_test), Vec::with_capacity(n_test));
    for (i, r) in catalog.records.iter().enumerate() {
        if in_test[i] {
            test.push(r.clone());
        } else {
            train.push(r.clone());
        }
    }
    Ok((
        Catalog::new(train, catalog.schema.clone()),
        Catalog::new(test, catalog.schema.clone()),
    ))
}
