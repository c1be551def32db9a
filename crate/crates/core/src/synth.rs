//! Synthetic galaxy catalogs with a known generative model.
//!
//! Each galaxy is one of a few rendered morphologies. Its volunteer votes are
//! drawn question by question from Dirichlet-Multinomial distributions whose
//! concentrations depend on the morphology, walking down the tree so a child
//! question only sees the voters who gave one of its triggering answers.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::{write_catalog, Catalog, GalaxyRecord, MIN_CLASSIFICATIONS};
use crate::error::{Error, Result};
use crate::image::{write_image, Image};
use crate::schema::DecisionTreeSchema;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Morphology {
    /// Smooth, nearly circular light profile.
    RoundBlob,
    /// Thin elongated disk with a small central bulge, read as edge-on.
    ElongatedDisk,
    /// Two smooth blobs close together.
    Merger,
}

impl Morphology {
    /// Answers the volunteers lean towards for this morphology. Questions not
    /// listed fall back to [`DEFAULT_TARGETS`].
    fn targets(self) -> &'static [&'static str] {
        match self {
            Morphology::RoundBlob => &["smooth-or-featured_smooth", "how-rounded_round", "merging_none"],
            Morphology::ElongatedDisk => &[
                "smooth-or-featured_featured-or-disk",
                "disk-edge-on_yes",
                "edge-on-bulge_rounded",
                "merging_none",
            ],
            Morphology::Merger => &["smooth-or-featured_smooth", "how-rounded_in-between", "merging_merger"],
        }
    }
}

const DEFAULT_TARGETS: &[&str] = &[
    "disk-edge-on_no",
    "has-spiral-arms_no",
    "bar_no",
    "bulge-size_moderate",
    "how-rounded_round",
    "edge-on-bulge_none",
    "spiral-winding_medium",
    "spiral-arm-count_2",
    "merging_none",
];

/// Rendering parameters of one class. Lengths are fractions of the image side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub morphology: Morphology,
    /// Relative frequency of the class.
    pub weight: f64,
    /// Gaussian scale length along the major axis.
    pub radius: f64,
    /// Minor over major axis.
    pub axis_ratio: f64,
    /// Peak intensity above the background.
    pub brightness: f64,
    /// Centre-to-centre distance of the two blobs (mergers only).
    #[serde(default)]
    pub separation: f64,
}

impl ClassSpec {
    pub fn round_blob() -> Self {
        Self {
            morphology: Morphology::RoundBlob,
            weight: 1.0,
            radius: 0.08,
            axis_ratio: 0.95,
            brightness: 0.8,
            separation: 0.0,
        }
    }

    pub fn elongated_disk() -> Self {
        Self {
            morphology: Morphology::ElongatedDisk,
            weight: 1.0,
            radius: 0.14,
            axis_ratio: 0.22,
            brightness: 0.7,
            separation: 0.0,
        }
    }

    pub fn merger() -> Self {
        Self {
            morphology: Morphology::Merger,
            weight: 1.0,
            radius: 0.055,
            axis_ratio: 0.9,
            brightness: 0.75,
            separation: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub count: usize,
    /// Rendered side in pixels; loading resizes to the stored side.
    pub side: usize,
    pub classes: Vec<ClassSpec>,
    /// Volunteers per galaxy are uniform on `[min_votes, max_votes]`.
    pub min_votes: u32,
    pub max_votes: u32,
    /// Concentration on a class's target answer, and on every other answer.
    pub target_concentration: f64,
    pub base_concentration: f64,
    pub background: f64,
    /// Standard deviation of additive Gaussian pixel noise.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            count: 2000,
            side: 160,
            classes: vec![
                ClassSpec::round_blob(),
                ClassSpec::elongated_disk(),
                ClassSpec::merger(),
            ],
            min_votes: 20,
            max_votes: 40,
            target_concentration: 40.0,
            base_concentration: 2.0,
            background: 0.05,
            noise: 0.03,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.count == 0 {
            return bad("synthetic count must be positive".into());
        }
        if self.side < 16 {
            return bad(format!("image side {} below 16", self.side));
        }
        if self.classes.is_empty() {
            return bad("no synthetic classes".into());
        }
        if self.min_votes < MIN_CLASSIFICATIONS || self.max_votes < self.min_votes {
            return bad(format!(
                "vote range [{}, {}] must start at {MIN_CLASSIFICATIONS} or more",
                self.min_votes, self.max_votes
            ));
        }
        if !(self.target_concentration > 0.0 && self.base_concentration > 0.0) {
            return bad("concentrations must be positive".into());
        }
        if !(self.noise >= 0.0 && (0.0..1.0).contains(&self.background)) {
            return bad(format!(
                "noise {} / background {} out of range",
                self.noise, self.background
            ));
        }
        for c in &self.classes {
            if !(c.weight > 0.0 && c.radius > 0.0 && c.axis_ratio > 0.0 && c.axis_ratio <= 1.0 && c.brightness > 0.0) {
                return bad(format!("invalid class parameters {c:?}"));
            }
        }
        Ok(())
    }

    /// Generative concentrations (34 slots) for a class.
    pub fn concentrations(&self, morphology: Morphology, schema: &DecisionTreeSchema) -> Vec<f64> {
        let mut alpha = vec![self.base_concentration; schema.total_answers()];
        let targets = morphology.targets();
        for (q, question) in schema.questions().iter().enumerate() {
            let pick = question
                .answer_slots
                .iter()
                .find(|a| targets.contains(&a.as_str()))
                .or_else(|| {
                    question
                        .answer_slots
                        .iter()
                        .find(|a| DEFAULT_TARGETS.contains(&a.as_str()))
                });
            let slot = match pick {
                Some(a) => schema.slot(a).expect("answer of this schema"),
                None => schema.range(q).start,
            };
            alpha[slot] = self.target_concentration;
        }
        alpha
    }
}

/// One generated galaxy before it is written out.
#[derive(Debug, Clone)]
pub struct SyntheticGalaxy {
    pub id: String,
    pub morphology: Morphology,
    pub image: Image<f32>,
    pub votes: Vec<u32>,
}

/// Draw counts for `n` voters from a Dirichlet-Multinomial with concentrations `alpha`.
pub fn sample_dm(alpha: &[f64], n: u32, rng: &mut ChaCha8Rng) -> Vec<u32> {
    let g: Vec<f64> = alpha
        .iter()
        .map(|&a| Gamma::new(a, 1.0).expect("positive concentration").sample(rng))
        .collect();
    let total: f64 = g.iter().sum();
    let mut left = n as u64;
    let mut mass = 1.0;
    let mut out = vec![0u32; alpha.len()];
    for (k, &gk) in g.iter().enumerate() {
        if left == 0 {
            break;
        }
        let p = gk / total;
        let c = if k + 1 == g.len() || mass <= p {
            left
        } else {
            Binomial::new(left, (p / mass).clamp(0.0, 1.0))
                .expect("probability in range")
                .sample(rng)
        };
        out[k] = c as u32;
        left -= c;
        mass -= p;
    }
    out
}

/// Votes for every slot, descending from the root: each question is answered
/// by exactly the voters who chose one of its triggering parent answers.
pub fn sample_votes(alpha: &[f64], voters: u32, schema: &DecisionTreeSchema, rng: &mut ChaCha8Rng) -> Vec<u32> {
    let mut votes = vec![0u32; schema.total_answers()];
    let mut pending = vec![(schema.root(), voters)];
    while let Some((q, n)) = pending.pop() {
        let r = schema.range(q);
        let counts = sample_dm(&alpha[r.clone()], n, rng);
        votes[r].copy_from_slice(&counts);
        for child in schema.children(q) {
            let edge = schema.questions()[child]
                .parent
                .as_ref()
                .expect("child has a parent edge");
            let asked = edge
                .answers
                .iter()
                .map(|a| votes[schema.slot(a).expect("answer of this schema")])
                .sum();
            pending.push((child, asked));
        }
    }
    votes
}

fn gaussian(dx: f64, dy: f64, angle: f64, major: f64, minor: f64) -> f64 {
    let (s, c) = angle.sin_cos();
    let u = (dx * c + dy * s) / major;
    let v = (-dx * s + dy * c) / minor;
    (-0.5 * (u * u + v * v)).exp()
}

/// Render one galaxy of `class` with random size, orientation and offset.
pub fn render(spec: &SyntheticSpec, class: &ClassSpec, rng: &mut ChaCha8Rng) -> Result<Image<f32>> {
    let side = spec.side as f64;
    let scale = rng.random_range(0.85..1.15);
    let major = class.radius * scale * side;
    let minor = major * class.axis_ratio;
    let angle = rng.random_range(0.0..std::f64::consts::PI);
    let jitter = 0.04 * side;
    let cx = 0.5 * side + rng.random_range(-jitter..jitter);
    let cy = 0.5 * side + rng.random_range(-jitter..jitter);
    let brightness = class.brightness * rng.random_range(0.9..1.1);

    // (centre x, centre y, major, minor, peak)
    let mut parts = Vec::with_capacity(2);
    match class.morphology {
        Morphology::RoundBlob => parts.push((cx, cy, major, minor, brightness)),
        Morphology::ElongatedDisk => {
            parts.push((cx, cy, major, minor, brightness));
            parts.push((cx, cy, 0.3 * major, 0.3 * major, 0.5 * brightness));
        }
        Morphology::Merger => {
            let half = 0.5 * class.separation * scale * side;
            let (s, c) = angle.sin_cos();
            let ratio = rng.random_range(0.7..1.0);
            parts.push((cx + half * c, cy + half * s, major, minor, brightness));
            parts.push((
                cx - half * c,
                cy - half * s,
                major * ratio,
                minor * ratio,
                brightness * ratio,
            ));
        }
    }

    let n = spec.side;
    let mut pixels = Vec::with_capacity(n * n);
    for y in 0..n {
        for x in 0..n {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let mut v = spec.background;
            for &(ox, oy, a, b, peak) in &parts {
                v += peak * gaussian(px - ox, py - oy, angle, a, b);
            }
            if spec.noise > 0.0 {
                let z: f64 = rng.sample(StandardNormal);
                v += spec.noise * z;
            }
            pixels.push(v.clamp(0.0, 1.0) as f32);
        }
    }
    Image::new(n, n, 1, pixels)
}

fn pick_class<'a>(classes: &'a [ClassSpec], rng: &mut ChaCha8Rng) -> &'a ClassSpec {
    let total: f64 = classes.iter().map(|c| c.weight).sum();
    let mut u = rng.random_range(0.0..total);
    for c in classes {
        if u < c.weight {
            return c;
        }
        u -= c.weight;
    }
    classes.last().expect("at least one class")
}

pub fn synthetic_id(index: usize) -> String {
    format!("synth-{index:05}")
}

/// Generate galaxy `index` of the catalog. Depends only on the spec seed and the index.
pub fn generate_galaxy(spec: &SyntheticSpec, schema: &DecisionTreeSchema, index: usize) -> Result<SyntheticGalaxy> {
    let id = synthetic_id(index);
    let mut rng = seed::rng(seed::record_seed(spec.seed, &id, seed::stream::SYNTH, 0));
    let class = pick_class(&spec.classes, &mut rng);
    let image = render(spec, class, &mut rng)?;
    let voters = rng.random_range(spec.min_votes..=spec.max_votes);
    let alpha = spec.concentrations(class.morphology, schema);
    let votes = sample_votes(&alpha, voters, schema, &mut rng);
    Ok(SyntheticGalaxy {
        id,
        morphology: class.morphology,
        image,
        votes,
    })
}

/// Write `images/<id>.mb01` and `catalog.csv` under `out` and return the catalog.
pub fn generate_synthetic(spec: &SyntheticSpec, schema: Arc<DecisionTreeSchema>, out: &Path) -> Result<Catalog> {
    spec.validate()?;
    let images = out.join("images");
    std::fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
    let records = (0..spec.count)
        .into_par_iter()
        .map(|i| {
            let g = generate_galaxy(spec, &schema, i)?;
            let path: PathBuf = images.join(format!("{}.mb01", g.id));
            write_image(&path, &g.image)?;
            GalaxyRecord::new(g.id, path, g.votes, &schema)
        })
        .collect::<Result<Vec<_>>>()?;
    write_catalog(&out.join("catalog.csv"), &records, &schema, out)?;
    let spec_path = out.join("synthetic_spec.json");
    std::fs::write(&spec_path, serde_json::to_string_pretty(spec)?).map_err(|e| Error::io(&spec_path, e))?;
    Ok(Catalog::new(records, schema))
}
