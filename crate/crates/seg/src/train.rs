//! Mini-batch training with a deterministic hash split, per-epoch
//! validation, and best-checkpoint selection.

use std::path::PathBuf;
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use vesselid_core::evaluation::{DiceReport, Prediction};
use vesselid_core::image::{GrayImage, LabelImage};
use vesselid_core::reslice::SyntheticSample;
use vesselid_core::rng::{self, streams};

use crate::config::{SegmenterConfig, Variant};
use crate::error::{Result, SegError};
use crate::loss::{loss_and_grad, LossValue};
use crate::model::{fit_to_model, UNetModel};
use crate::optim::Adam;
use crate::unet::CLASSES;

/// Smallest dataset `train` accepts.
pub const MIN_SAMPLES: usize = 20;

/// A sample at model resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainSample {
    pub image: GrayImage,
    pub mask: LabelImage,
}

impl TrainSample {
    pub fn new(image: &GrayImage, mask: &LabelImage, dims: (usize, usize)) -> Self {
        let (image, mask) = fit_to_model(image, mask, dims);
        Self { image, mask }
    }
}

pub fn prepare(samples: &[SyntheticSample], dims: (usize, usize)) -> Vec<TrainSample> {
    samples.par_iter().map(|s| TrainSample::new(&s.image, &s.mask, dims)).collect()
}

/// Assigns index `i` to validation when its hash falls in the top
/// `1 - ratio` of the u64 range.
pub fn is_validation(seed: u64, index: usize, ratio: f64) -> bool {
    let u = rng::derive(seed, "split", index as u64) as f64 / u64::MAX as f64;
    u >= ratio
}

pub fn split_indices(n: usize, ratio: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    (0..n).partition(|&i| !is_validation(seed, i, ratio))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Foreground DICE over validation frames (the selection metric).
    pub val_dice: f64,
    /// DICE averaged over all branches and frames, empty-vs-empty = 1.
    pub val_dice_all: f64,
    pub lr_last: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_val_dice: f64,
    pub checkpoint_id: String,
    pub train_samples: usize,
    pub val_samples: usize,
    pub param_count: usize,
    pub wall_clock_s: f64,
    pub config: SegmenterConfig,
}

impl TrainReport {
    /// Copy with wall-clock fields zeroed, for reproducibility comparisons.
    pub fn without_timing(&self) -> Self {
        let mut r = self.clone();
        r.wall_clock_s = 0.0;
        for e in &mut r.epochs {
            e.seconds = 0.0;
        }
        r
    }

    pub fn to_table(&self) -> String {
        let mut s = format!(
            "{:>5} {:>11} {:>11} {:>9} {:>9} {:>10} {:>8}\n",
            "epoch", "train loss", "val loss", "val DICE", "all DICE", "lr", "time s"
        );
        for e in &self.epochs {
            s += &format!(
                "{:>5} {:>11.5} {:>11.5} {:>9.4} {:>9.4} {:>10.2e} {:>8.1}{}\n",
                e.epoch,
                e.train_loss,
                e.val_loss,
                e.val_dice,
                e.val_dice_all,
                e.lr_last,
                e.seconds,
                if e.epoch == self.best_epoch { "  *" } else { "" }
            );
        }
        s += &format!(
            "best epoch {} (val DICE {:.4}), {} train / {} val samples, {} parameters, {:.1} s\n",
            self.best_epoch, self.best_val_dice, self.train_samples, self.val_samples, self.param_count, self.wall_clock_s
        );
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub loss: f64,
    pub dice: DiceReport,
}

impl Evaluation {
    pub fn foreground_dice(&self) -> f64 {
        self.dice.foreground_mean.unwrap_or(1.0)
    }
}

#[derive(Default)]
pub struct TrainHooks<'a> {
    /// Called after each epoch.
    pub on_epoch: Option<Box<dyn FnMut(&EpochStats) + 'a>>,
    /// Where to write the last finite parameters if the loss diverges.
    pub nan_dump: Option<PathBuf>,
}

fn check_dims(model: &UNetModel, samples: &[TrainSample]) -> Result<()> {
    let dims = model.input_dims();
    match samples.iter().position(|s| s.image.dims() != dims || s.mask.dims() != dims) {
        Some(i) => Err(SegError::shape(format!(
            "sample {i} is {}x{}, model expects {}x{}",
            samples[i].image.width(),
            samples[i].image.height(),
            dims.0,
            dims.1
        ))),
        None => Ok(()),
    }
}

fn sample_grad(model: &UNetModel, s: &TrainSample, cfg: &SegmenterConfig) -> Result<(LossValue, Vec<f32>)> {
    let net = model.network();
    let tape = net.forward(model.params(), s.image.data())?;
    let (value, dlogits) = loss_and_grad(&tape.logits, &tape.probabilities, s.mask.data(), cfg.train.loss);
    let mut g = vec![0.0f32; net.param_count()];
    net.backward(model.params(), &mut g, &tape, &dlogits);
    Ok((value, g))
}

fn sample_eval(model: &UNetModel, s: &TrainSample, cfg: &SegmenterConfig) -> Result<(LossValue, LabelImage)> {
    let tape = model.network().forward(model.params(), s.image.data())?;
    let (value, _) = loss_and_grad(&tape.logits, &tape.probabilities, s.mask.data(), cfg.train.loss);
    let (w, h) = model.input_dims();
    let mask = Prediction::from_probabilities(w, h, tape.probabilities)?.into_mask();
    Ok((value, mask))
}

/// Mean loss and DICE of `model` on `samples`.
pub fn evaluate(model: &UNetModel, samples: &[TrainSample], cfg: &SegmenterConfig) -> Result<Evaluation> {
    check_dims(model, samples)?;
    let out: Vec<(LossValue, LabelImage)> = samples
        .par_iter()
        .map(|s| sample_eval(model, s, cfg))
        .collect::<Result<_>>()?;
    let loss = out.iter().map(|(v, _)| v.total).sum::<f64>() / out.len().max(1) as f64;
    let dice = DiceReport::from_masks(out.iter().zip(samples).map(|((_, m), s)| (m, &s.mask)))?;
    Ok(Evaluation { loss, dice })
}

/// Splits `samples` by index hash and trains.
pub fn train(cfg: &SegmenterConfig, samples: &[TrainSample], hooks: TrainHooks<'_>) -> Result<(UNetModel, TrainReport)> {
    cfg.validate()?;
    if samples.len() < MIN_SAMPLES {
        return Err(SegError::Dataset(format!(
            "need at least {MIN_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    let (tr, va) = split_indices(samples.len(), cfg.train.split_ratio, cfg.train.seed);
    if tr.is_empty() || va.is_empty() {
        return Err(SegError::Dataset(format!(
            "split gave {} train / {} validation samples",
            tr.len(),
            va.len()
        )));
    }
    let train_set: Vec<TrainSample> = tr.iter().map(|&i| samples[i].clone()).collect();
    let val_set: Vec<TrainSample> = va.iter().map(|&i| samples[i].clone()).collect();
    fit(cfg, &train_set, &val_set, hooks)
}

/// Trains on `train_set`, selecting the epoch with the best validation
/// foreground DICE.
pub fn fit(
    cfg: &SegmenterConfig,
    train_set: &[TrainSample],
    val_set: &[TrainSample],
    mut hooks: TrainHooks<'_>,
) -> Result<(UNetModel, TrainReport)> {
    cfg.validate()?;
    if cfg.variant != Variant::AttentionUnet {
        return Err(SegError::config(format!("variant {:?} is not trainable", cfg.variant)));
    }
    if train_set.is_empty() || val_set.is_empty() {
        return Err(SegError::Dataset("training and validation sets must be non-empty".into()));
    }
    let start = Instant::now();
    let tc = &cfg.train;
    let mut model = UNetModel::init(&cfg.model, rng::derive(tc.seed, "model", 0))?;
    check_dims(&model, train_set)?;
    check_dims(&model, val_set)?;
    let n = model.network().param_count();
    let mut adam = Adam::new(n);
    let steps_per_epoch = train_set.len().div_ceil(tc.batch_size);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut best: Option<(usize, f64, Vec<f32>)> = None;
    let mut epochs = Vec::with_capacity(tc.epochs);

    for epoch in 0..tc.epochs {
        let t0 = Instant::now();
        order.sort_unstable();
        order.shuffle(&mut rng::stream(tc.seed, streams::TRAIN, epoch as u64));
        let (mut loss_sum, mut lr) = (0.0f64, tc.learning_rate);
        for (step, batch) in order.chunks(tc.batch_size).enumerate() {
            let results: Vec<(LossValue, Vec<f32>)> = batch
                .par_iter()
                .map(|&i| sample_grad(&model, &train_set[i], cfg))
                .collect::<Result<_>>()?;
            let mut grad = vec![0.0f32; n];
            let mut batch_loss = 0.0f64;
            for (v, g) in &results {
                batch_loss += v.total;
                for (a, &b) in grad.iter_mut().zip(g) {
                    *a += b;
                }
            }
            if !batch_loss.is_finite() || !grad.iter().all(|g| g.is_finite()) {
                let saved = match &hooks.nan_dump {
                    Some(path) => {
                        model.save(path, &format!("last-finite-epoch-{epoch}-step-{step}"))?;
                        Some(path.clone())
                    }
                    None => None,
                };
                return Err(SegError::NonFiniteLoss { epoch, step, saved });
            }
            let scale = 1.0 / batch.len() as f32;
            grad.iter_mut().for_each(|g| *g *= scale);
            lr = tc.schedule.lr(tc.learning_rate, epoch, step, steps_per_epoch);
            adam.step(model.params_mut(), &grad, lr);
            loss_sum += batch_loss;
        }
        let val = evaluate(&model, val_set, cfg)?;
        let stats = EpochStats {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            val_loss: val.loss,
            val_dice: val.foreground_dice(),
            val_dice_all: val.dice.overall_mean,
            lr_last: lr,
            seconds: t0.elapsed().as_secs_f64(),
        };
        if best.as_ref().is_none_or(|(_, d, _)| stats.val_dice > *d) {
            best = Some((epoch, stats.val_dice, model.params().to_vec()));
        }
        if let Some(f) = hooks.on_epoch.as_mut() {
            f(&stats);
        }
        epochs.push(stats);
    }

    let (best_epoch, best_val_dice, params) = best.expect("at least one epoch");
    let model = UNetModel::from_params(&cfg.model, params)?;
    let report = TrainReport {
        epochs,
        best_epoch,
        best_val_dice,
        checkpoint_id: format!("epoch-{best_epoch:03}"),
        train_samples: train_set.len(),
        val_samples: val_set.len(),
        param_count: n,
        wall_clock_s: start.elapsed().as_secs_f64(),
        config: cfg.clone(),
    };
    Ok((model, report))
}

/// Loss of the untrained model on `samples`; used to sanity-check the
/// initial loss against the uniform-prediction value.
pub fn initial_loss(cfg: &SegmenterConfig, samples: &[TrainSample]) -> Result<LossValue> {
    let model = UNetModel::init(&cfg.model, rng::derive(cfg.train.seed, "model", 0))?;
    check_dims(&model, samples)?;
    let vals: Vec<LossValue> = samples
        .par_iter()
        .map(|s| sample_eval(&model, s, cfg).map(|r| r.0))
        .collect::<Result<_>>()?;
    let k = 1.0 / vals.len().max(1) as f64;
    Ok(vals.iter().fold(LossValue::default(), |a, v| LossValue {
        ce: a.ce + k * v.ce,
        dice: a.dice + k * v.dice,
        total: a.total + k * v.total,
    }))
}

/// Uniform-prediction loss on labels balanced over the six classes.
pub fn uniform_loss(cfg: &SegmenterConfig) -> f64 {
    let k = CLASSES as f64;
    cfg.train.loss.ce * k.ln() + cfg.train.loss.dice * (1.0 - 1.0 / k)
}
