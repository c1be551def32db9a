//! Finite-difference gradient check for the tiny networks.

use morphbench::dirichlet::{dm_nll_gradient, dm_nll_loss};
use morphbench::nn::*;
use morphbench::schema::build_gzd5_schema;
use morphbench::seed;
use rand::Rng;

pub const SIDE: usize = 224;

pub fn random_batch(n: usize, seed_value: u64) -> Tensor<f64> {
    let mut rng = seed::rng(seed_value);
    Tensor::from_vec(
        n,
        1,
        SIDE,
        SIDE,
        (0..n * SIDE * SIDE).map(|_| rng.random::<f64>()).collect(),
    )
}

pub fn random_votes(n: usize, seed_value: u64) -> Vec<Vec<u32>> {
    let mut rng = seed::rng(seed_value);
    (0..n)
        .map(|_| (0..34).map(|_| rng.random_range(0..6)).collect())
        .collect()
}

/// Per-record upstream gradient of the batch-mean loss.
pub fn upstream(votes: &[Vec<u32>], pass: &ForwardPass<f64>) -> Vec<Vec<f64>> {
    let schema = build_gzd5_schema();
    let b = votes.len() as f64;
    votes
        .iter()
        .zip(&pass.concentrations)
        .map(|(v, c)| {
            dm_nll_gradient(v, c.as_slice(), &schema)
                .unwrap()
                .iter()
                .map(|g| g / b)
                .collect()
        })
        .collect()
}

/// Loss of a training pass and the branch signature it took.
pub fn training_loss(
    net: &NetworkDescription,
    params: &ParameterSet<f64>,
    batch: &Tensor<f64>,
    votes: &[Vec<u32>],
) -> (f64, u64) {
    let schema = build_gzd5_schema();
    let mut rng = seed::rng(77);
    let pass = net.forward(params, batch, ForwardMode::Training, &mut rng).unwrap();
    let alpha: Vec<&[f64]> = pass.concentrations.iter().map(|c| c.as_slice()).collect();
    let loss = dm_nll_loss(votes, &alpha, &schema).unwrap().value;
    (loss, net.branch_signature(&pass).unwrap())
}

/// Worst relative error between backward and central differences over
/// `samples` parameter components. Components whose difference interval
/// crosses a ReLU or max-pool switch are not differentiable there and are
/// redrawn. Returns the worst error and how many components were redrawn.
pub fn gradient_check(family: Family, samples: usize) -> (f64, usize) {
    let schema = build_gzd5_schema();
    let (net, params) = build_model::<f64>(family, Preset::Tiny, &schema, 0.2, 11).unwrap();
    let batch = random_batch(2, 12);
    let votes = random_votes(2, 13);
    let mut rng = seed::rng(77);
    let pass = net.forward(&params, &batch, ForwardMode::Training, &mut rng).unwrap();
    let grads = net.backward(&params, &pass, &upstream(&votes, &pass)).unwrap();
    let base = net.branch_signature(&pass).unwrap();

    let trainable: Vec<(usize, usize)> = params
        .tensors
        .iter()
        .enumerate()
        .filter(|(_, t)| t.trainable)
        .flat_map(|(ti, t)| (0..t.numel()).map(move |j| (ti, j)))
        .collect();
    let mut pick = seed::rng(14);
    let h = 1e-4;
    let mut worst = 0.0f64;
    let (mut checked, mut redrawn) = (0, 0);
    while checked < samples {
        let (ti, j) = trainable[pick.random_range(0..trainable.len())];
        let mut p = params.clone();
        let orig = p.tensors[ti].data[j];
        p.tensors[ti].data[j] = orig + h;
        let (up, sig_up) = training_loss(&net, &p, &batch, &votes);
        p.tensors[ti].data[j] = orig - h;
        let (down, sig_down) = training_loss(&net, &p, &batch, &votes);
        if sig_up != base || sig_down != base {
            redrawn += 1;
            assert!(redrawn <= samples, "{family}: too many kinks");
            continue;
        }
        let numeric = (up - down) / (2.0 * h);
        let analytic = grads.tensors[ti].data[j];
        // Central differences here carry absolute roundoff noise near 1e-9,
        // so the denominator is floored well above it.
        let scale = numeric.abs().max(analytic.abs()).max(1e-5);
        worst = worst.max((numeric - analytic).abs() / scale);
        checked += 1;
    }
    (worst, redrawn)
}
