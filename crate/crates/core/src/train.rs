//! Adam optimization with validation-loss early stopping.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, GalaxyRecord};
use crate::data::assemble_batch;
use crate::dirichlet::{dm_nll_gradient, dm_nll_loss};
use crate::error::{Error, Result};
use crate::image::AugmentOptions;
use crate::nn::{build_model, Family, ForwardMode, NetworkDescription, ParameterSet, Preset, DEFAULT_DROPOUT};
use crate::scalar::Scalar;
use crate::seed::{self, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainOptions {
    pub batch_size: usize,
    /// Epochs without validation improvement tolerated before stopping.
    pub patience: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub max_epochs: usize,
    pub seed: u64,
    /// Passes over the validation set per epoch, each with fresh augmentation and dropout.
    pub validation_repeats: usize,
    pub dropout_rate: f64,
    pub augment: AugmentOptions,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            batch_size: 64,
            patience: 10,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-7,
            max_epochs: 200,
            seed: 0,
            validation_repeats: 2,
            dropout_rate: DEFAULT_DROPOUT,
            augment: AugmentOptions::default(),
        }
    }
}

impl TrainOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if self.batch_size == 0 {
            return bad("batch size must be at least 1");
        }
        if self.patience == 0 {
            return bad("patience must be at least 1");
        }
        if self.max_epochs == 0 {
            return bad("max epochs must be at least 1");
        }
        if self.validation_repeats == 0 {
            return bad("validation repeats must be at least 1");
        }
        if !(self.learning_rate > 0.0)
            || !(0.0..1.0).contains(&self.adam_beta1)
            || !(0.0..1.0).contains(&self.adam_beta2)
        {
            return bad("learning rate must be positive and Adam betas in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout rate must be in [0, 1)");
        }
        Ok(())
    }
}

/// First and second moment estimates shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: ParameterSet<T>,
    pub v: ParameterSet<T>,
    pub t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &ParameterSet<T>) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }
}

/// One Adam update of every trainable tensor. Non-trainable tensors are left alone.
pub fn adam_step<T: Scalar>(
    params: &mut ParameterSet<T>,
    grads: &ParameterSet<T>,
    state: &mut AdamState<T>,
    opts: &TrainOptions,
) -> Result<()> {
    params.check_aligned(grads)?;
    params.check_aligned(&state.m)?;
    params.check_aligned(&state.v)?;
    state.t += 1;
    let t = state.t as i32;
    let b1 = opts.adam_beta1;
    let b2 = opts.adam_beta2;
    let c1 = T::from_f64_lossy(1.0 - b1.powi(t));
    let c2 = T::from_f64_lossy(1.0 - b2.powi(t));
    let (b1, b2) = (T::from_f64_lossy(b1), T::from_f64_lossy(b2));
    let lr = T::from_f64_lossy(opts.learning_rate);
    let eps = T::from_f64_lossy(opts.adam_epsilon);
    for (((p, g), m), v) in params
        .tensors
        .iter_mut()
        .zip(&grads.tensors)
        .zip(&mut state.m.tensors)
        .zip(&mut state.v.tensors)
    {
        if !p.trainable {
            continue;
        }
        for (((theta, &gi), mi), vi) in p.data.iter_mut().zip(&g.data).zip(&mut m.data).zip(&mut v.data) {
            *mi = b1 * *mi + (T::one() - b1) * gi;
            *vi = b2 * *vi + (T::one() - b2) * gi * gi;
            let m_hat = *mi / c1;
            let v_hat = *vi / c2;
            *theta -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// True when none of the last `patience` losses improves (strictly) on the
/// best loss recorded before them.
pub fn early_stop_check(validation_losses: &[f64], patience: usize) -> bool {
    let n = validation_losses.len();
    if patience == 0 || n <= patience {
        return false;
    }
    let best = validation_losses[..n - patience]
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    validation_losses[n - patience..].iter().all(|&l| !(l < best))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    EarlyStop,
    MaxEpochs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub family: Family,
    pub preset: Preset,
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were returned.
    pub best_epoch: usize,
    pub stop_reason: StopReason,
}

/// Totals written next to the per-epoch CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub family: Family,
    pub preset: Preset,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stop_reason: StopReason,
    pub total_hours: f64,
}

impl TrainLog {
    pub fn epochs_run(&self) -> usize {
        self.epochs.len()
    }

    pub fn total_seconds(&self) -> f64 {
        self.epochs.iter().map(|e| e.seconds).sum()
    }

    pub fn total_hours(&self) -> f64 {
        self.total_seconds() / 3600.0
    }

    pub fn best_val_loss(&self) -> f64 {
        self.epochs[self.best_epoch - 1].val_loss
    }

    pub fn summary(&self) -> TrainSummary {
        TrainSummary {
            family: self.family,
            preset: self.preset,
            epochs_run: self.epochs_run(),
            best_epoch: self.best_epoch,
            best_val_loss: self.best_val_loss(),
            stop_reason: self.stop_reason,
            total_hours: self.total_hours(),
        }
    }

    /// `epoch,train_loss,val_loss,seconds`
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
        let io = |e: csv::Error| Error::io(path, e.into());
        w.write_record(["epoch", "train_loss", "val_loss", "seconds"])
            .map_err(io)?;
        for e in &self.epochs {
            w.write_record([
                e.epoch.to_string(),
                format!("{:.6}", e.train_loss),
                format!("{:.6}", e.val_loss),
                format!("{:.3}", e.seconds),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_summary(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(&mut f, &self.summary())?;
        writeln!(f).map_err(|e| Error::io(path, e))
    }
}

fn batch_loss<T: Scalar>(records: &[&GalaxyRecord], concentrations: &[&[T]], catalog: &Catalog) -> Result<f64> {
    let votes: Vec<&[u32]> = records.iter().map(|r| r.votes()).collect();
    Ok(dm_nll_loss(&votes, concentrations, &catalog.schema)?
        .value
        .to_f64_lossy())
}

/// Mean loss over `repeats` passes of `catalog` in mc-dropout mode.
pub fn validation_loss<T: Scalar>(
    net: &NetworkDescription,
    params: &ParameterSet<T>,
    catalog: &Catalog,
    opts: &TrainOptions,
    epoch: usize,
) -> Result<f64> {
    if catalog.is_empty() {
        return Err(Error::EmptyCatalog);
    }
    let mut total = 0.0;
    for r in 0..opts.validation_repeats {
        let pass_index = (epoch * opts.validation_repeats + r) as u64;
        for (b, chunk) in catalog.records.chunks(opts.batch_size).enumerate() {
            let recs: Vec<&GalaxyRecord> = chunk.iter().collect();
            let batch = assemble_batch::<T>(&recs, opts.seed, stream::VAL_AUGMENT, pass_index, &opts.augment)?;
            let mut rng = seed::rng(seed::derive(opts.seed, &[stream::VAL_DROPOUT, pass_index, b as u64]));
            let pass = net.forward(params, &batch, ForwardMode::McDropout, &mut rng)?;
            let alpha: Vec<&[T]> = pass.concentrations.iter().map(|c| c.as_slice()).collect();
            total += batch_loss(&recs, &alpha, catalog)? * recs.len() as f64;
        }
    }
    Ok(total / (catalog.len() * opts.validation_repeats) as f64)
}

/// One pass over the shuffled training set. Returns the record-weighted mean loss.
fn train_epoch<T: Scalar>(
    net: &NetworkDescription,
    params: &mut ParameterSet<T>,
    adam: &mut AdamState<T>,
    catalog: &Catalog,
    opts: &TrainOptions,
    epoch: usize,
) -> Result<f64> {
    let mut order: Vec<usize> = (0..catalog.len()).collect();
    order.shuffle(&mut seed::rng(seed::derive(
        opts.seed,
        &[stream::SHUFFLE, epoch as u64],
    )));
    let mut total = 0.0;
    for (b, chunk) in order.chunks(opts.batch_size).enumerate() {
        let recs: Vec<&GalaxyRecord> = chunk.iter().map(|&i| &catalog.records[i]).collect();
        let batch = assemble_batch::<T>(&recs, opts.seed, stream::TRAIN_AUGMENT, epoch as u64, &opts.augment)?;
        let mut rng = seed::rng(seed::derive(
            opts.seed,
            &[stream::TRAIN_DROPOUT, epoch as u64, b as u64],
        ));
        let pass = net.forward(params, &batch, ForwardMode::Training, &mut rng)?;
        let alpha: Vec<&[T]> = pass.concentrations.iter().map(|c| c.as_slice()).collect();
        let loss = batch_loss(&recs, &alpha, catalog)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                batch: b + 1,
                loss,
            });
        }
        let scale = T::one() / T::from_usize_lossy(recs.len());
        let upstream = recs
            .iter()
            .zip(&alpha)
            .map(|(r, a)| {
                Ok(dm_nll_gradient(r.votes(), a, &catalog.schema)?
                    .into_iter()
                    .map(|g| g * scale)
                    .collect())
            })
            .collect::<Result<Vec<Vec<T>>>>()?;
        let grads = net.backward(params, &pass, &upstream)?;
        adam_step(params, &grads, adam, opts)?;
        net.update_running_stats(params, &pass)?;
        total += loss * recs.len() as f64;
    }
    Ok(total / catalog.len() as f64)
}

/// Train a freshly initialized network, calling `on_epoch` after each epoch.
/// Returns the parameters of the epoch with the lowest validation loss.
pub fn train_with<T: Scalar>(
    family: Family,
    preset: Preset,
    train_catalog: &Catalog,
    val_catalog: &Catalog,
    opts: &TrainOptions,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(NetworkDescription, ParameterSet<T>, TrainLog)> {
    opts.validate()?;
    if train_catalog.is_empty() || val_catalog.is_empty() {
        return Err(Error::EmptyCatalog);
    }
    let (net, mut params) = build_model::<T>(family, preset, &train_catalog.schema, opts.dropout_rate, opts.seed)?;
    let mut adam = AdamState::new(&params);
    let mut best = params.clone();
    let mut log = TrainLog {
        family,
        preset,
        epochs: Vec::new(),
        best_epoch: 0,
        stop_reason: StopReason::MaxEpochs,
    };
    let mut val_losses = Vec::new();
    for epoch in 1..=opts.max_epochs {
        let start = Instant::now();
        let train_loss = train_epoch(&net, &mut params, &mut adam, train_catalog, opts, epoch)?;
        let val_loss = validation_loss(&net, &params, val_catalog, opts, epoch)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                batch: 0,
                loss: val_loss,
            });
        }
        let record = EpochRecord {
            epoch,
            train_loss,
            val_loss,
            seconds: start.elapsed().as_secs_f64(),
        };
        on_epoch(&record);
        log.epochs.push(record);
        if val_losses.iter().all(|&l| val_loss < l) {
            best = params.clone();
            log.best_epoch = epoch;
        }
        val_losses.push(val_loss);
        if early_stop_check(&val_losses, opts.patience) {
            log.stop_reason = StopReason::EarlyStop;
            break;
        }
    }
    Ok((net, best, log))
}

pub fn train<T: Scalar>(
    family: Family,
    preset: Preset,
    train_catalog: &Catalog,
    val_catalog: &Catalog,
    opts: &TrainOptions,
) -> Result<(NetworkDescription, ParameterSet<T>, TrainLog)> {
    train_with(family, preset, train_catalog, val_catalog, opts, |_| {})
}
