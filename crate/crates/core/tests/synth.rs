use std::sync::Arc;

use morphbench::catalog::{load_catalog, MIN_CLASSIFICATIONS};
use morphbench::eval::ground_truth_labels;
use morphbench::schema::build_gzd5_schema;
use morphbench::synth::{generate_galaxy, generate_synthetic, ClassSpec, Morphology, SyntheticSpec};

#[test]
fn hundred_galaxies_all_pass_the_filter() {
    let dir = tempfile::tempdir().unwrap();
    let schema = Arc::new(build_gzd5_schema());
    let spec = SyntheticSpec {
        count: 100,
        side: 32,
        min_votes: 3,
        max_votes: 6,
        seed: 11,
        ..SyntheticSpec::default()
    };
    let generated = generate_synthetic(&spec, schema.clone(), dir.path()).unwrap();
    assert_eq!(generated.len(), 100);
    let (loaded, stats) = load_catalog(&dir.path().join("catalog.csv"), schema).unwrap();
    assert_eq!((stats.loaded, stats.dropped), (100, 0));
    assert!(loaded.records.iter().all(|r| r.root_total() >= MIN_CLASSIFICATIONS));
    assert_eq!(loaded.records, generated.records);
}

#[test]
fn generation_is_deterministic() {
    let schema = build_gzd5_schema();
    let spec = SyntheticSpec {
        side: 48,
        seed: 5,
        ..SyntheticSpec::default()
    };
    for i in [0, 17] {
        let a = generate_galaxy(&spec, &schema, i).unwrap();
        let b = generate_galaxy(&spec, &schema, i).unwrap();
        assert_eq!(a.votes, b.votes);
        assert_eq!(a.image, b.image);
    }
    let other = SyntheticSpec {
        seed: 6,
        ..spec.clone()
    };
    let a = generate_galaxy(&spec, &schema, 0).unwrap();
    let c = generate_galaxy(&other, &schema, 0).unwrap();
    assert!(a.votes != c.votes || a.image != c.image);
}

#[test]
fn children_never_see_more_voters_than_their_trigger() {
    let schema = build_gzd5_schema();
    let spec = SyntheticSpec {
        side: 16,
        base_concentration: 2.0,
        target_concentration: 3.0,
        min_votes: 3,
        max_votes: 60,
        seed: 2,
        ..SyntheticSpec::default()
    };
    for i in 0..300 {
        let g = generate_galaxy(&spec, &schema, i).unwrap();
        for (q, question) in schema.questions().iter().enumerate() {
            let Some(edge) = &question.parent else { continue };
            let asked: u32 = schema.range(q).map(|s| g.votes[s]).sum();
            let chose: u32 = edge.answers.iter().map(|a| g.votes[schema.slot(a).unwrap()]).sum();
            assert_eq!(asked, chose, "galaxy {i}, question {}", question.id);
        }
    }
}

/// Rotation-invariant pixel statistics: total flux above background and the
/// axis ratio of the intensity-weighted second moments.
fn features(img: &morphbench::image::Image<f32>, background: f64) -> [f64; 2] {
    let n = img.width();
    let (mut m, mut sx, mut sy) = (0.0, 0.0, 0.0);
    let w = |y: usize, x: usize| (img.get(y, x, 0) as f64 - background).max(0.0);
    for y in 0..n {
        for x in 0..n {
            let v = w(y, x);
            m += v;
            sx += v * x as f64;
            sy += v * y as f64;
        }
    }
    let (cx, cy) = (sx / m, sy / m);
    let (mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0);
    for y in 0..n {
        for x in 0..n {
            let v = w(y, x);
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            xx += v * dx * dx;
            yy += v * dy * dy;
            xy += v * dx * dy;
        }
    }
    let (tr, det) = ((xx + yy) / m, (xx * yy - xy * xy) / (m * m));
    let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
    let (l1, l2) = (tr / 2.0 + disc, tr / 2.0 - disc);
    [m / (n * n) as f64, (l2 / l1).sqrt()]
}

#[test]
fn noiseless_classes_are_separable_by_a_centroid_classifier() {
    let schema = build_gzd5_schema();
    let root = schema.root();
    let spec = SyntheticSpec {
        side: 64,
        noise: 0.0,
        classes: vec![ClassSpec::round_blob(), ClassSpec::elongated_disk()],
        seed: 9,
        ..SyntheticSpec::default()
    };
    let data: Vec<([f64; 2], usize)> = (0..200)
        .map(|i| {
            let g = generate_galaxy(&spec, &schema, i).unwrap();
            let r = morphbench::catalog::GalaxyRecord::new(&g.id, "", g.votes, &schema).unwrap();
            (
                features(&g.image, spec.background),
                ground_truth_labels(&r, &schema)[root].unwrap(),
            )
        })
        .collect();
    let (fit, held) = data.split_at(100);
    let mut centroids = [[0.0; 2]; 3];
    let mut counts = [0usize; 3];
    for (f, y) in fit {
        counts[*y] += 1;
        for k in 0..2 {
            centroids[*y][k] += f[k];
        }
    }
    assert!(counts[0] > 0 && counts[1] > 0, "both classes drawn: {counts:?}");
    for (c, n) in centroids.iter_mut().zip(counts) {
        for v in c.iter_mut() {
            *v /= n.max(1) as f64;
        }
    }
    let dist = |a: &[f64; 2], b: &[f64; 2]| (a[0] - b[0]).powi(2) * 100.0 + (a[1] - b[1]).powi(2);
    let correct = held
        .iter()
        .filter(|(f, y)| {
            let pred = (0..2)
                .min_by(|&i, &j| dist(f, &centroids[i]).total_cmp(&dist(f, &centroids[j])))
                .unwrap();
            pred == *y
        })
        .count();
    assert_eq!(correct, held.len());
}

#[test]
fn empirical_fractions_converge_to_generative_means() {
    let schema = build_gzd5_schema();
    let spec = SyntheticSpec {
        side: 16,
        min_votes: 1000,
        max_votes: 1000,
        classes: vec![ClassSpec {
            morphology: Morphology::RoundBlob,
            ..ClassSpec::round_blob()
        }],
        target_concentration: 6.0,
        base_concentration: 2.0,
        seed: 4,
        ..SyntheticSpec::default()
    };
    let alpha = spec.concentrations(Morphology::RoundBlob, &schema);
    let galaxies = 400;
    let mut mean = vec![0.0; schema.total_answers()];
    let mut asked = vec![0usize; schema.num_questions()];
    for i in 0..galaxies {
        let g = generate_galaxy(&spec, &schema, i).unwrap();
        for (q, r) in schema.ranges().iter().enumerate() {
            let n: u32 = g.votes[r.clone()].iter().sum();
            if n == 0 {
                continue;
            }
            asked[q] += 1;
            for s in r.clone() {
                mean[s] += g.votes[s] as f64 / n as f64;
            }
        }
    }
    // Root and the two questions every smooth voter reaches see hundreds of votes per galaxy.
    for id in ["smooth-or-featured", "how-rounded", "merging"] {
        let q = schema.question_index(id).unwrap();
        assert_eq!(asked[q], galaxies);
        let r = schema.range(q);
        let total: f64 = alpha[r.clone()].iter().sum();
        for s in r {
            let got = mean[s] / galaxies as f64;
            let want = alpha[s] / total;
            assert!((got - want).abs() <= 0.03, "{id} slot {s}: {got} vs {want}");
        }
    }
}
