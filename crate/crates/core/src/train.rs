//! End-to-end training: distort, forward, BCE + λ·MSE, backprop, Adam.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::augment::{distort, AugmentConfig, AugmentedWindow};
use crate::data::window_origins;
use crate::error::{Error, Result};
use crate::model::{calibrate_threshold, grating_pattern, random_pattern, CoadModel, CoadParams, MaskPlan, Masking};
use crate::numerics::{AdamState, Matrix};

/// Probabilities are clamped to `[PROB_CLAMP, 1 − PROB_CLAMP]` inside the BCE.
pub const PROB_CLAMP: f64 = 1e-7;
pub const DEFAULT_LR: f64 = 0.002;
pub const DEFAULT_EPOCHS: usize = 300;
pub const DEFAULT_BATCH: usize = 128;
pub const DEFAULT_CLIP: f64 = 5.0;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    pub augment: AugmentConfig,
    /// Global gradient-norm limit; `None` disables clipping.
    pub clip: Option<f64>,
    /// Training stride; `None` means one window length.
    pub stride: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: DEFAULT_LR,
            epochs: DEFAULT_EPOCHS,
            batch: DEFAULT_BATCH,
            seed: 0,
            augment: AugmentConfig::default(),
            clip: Some(DEFAULT_CLIP),
            stride: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.batch == 0 {
            return Err(Error::Config("batch size must be ≥ 1".into()));
        }
        if self.stride == Some(0) {
            return Err(Error::Config("stride must be ≥ 1".into()));
        }
        if !(0.0..=1.0).contains(&self.augment.probability) {
            return Err(Error::Config("distortion probability must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub bce: f64,
    pub mse: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn new(bce: f64, mse: f64, lambda: f64) -> Self {
        Self {
            bce,
            mse,
            total: bce + lambda * mse,
        }
    }

    fn is_finite(&self) -> bool {
        self.bce.is_finite() && self.mse.is_finite() && self.total.is_finite()
    }
}

/// Mean binary cross-entropy with clamped probabilities.
pub fn bce_loss(probs: &[f64], targets: &[f64]) -> f64 {
    let n = probs.len().max(1) as f64;
    -probs
        .iter()
        .zip(targets)
        .map(|(&a, &y)| {
            let a = a.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            y * libm::log(a) + (1.0 - y) * libm::log(1.0 - a)
        })
        .sum::<f64>()
        / n
}

/// Gradient of [`bce_loss`]; zero where the clamp is active.
pub fn bce_grad(probs: &[f64], targets: &[f64]) -> Vec<f64> {
    let n = probs.len().max(1) as f64;
    probs
        .iter()
        .zip(targets)
        .map(|(&a, &y)| {
            if !(PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&a) {
                return 0.0;
            }
            (-(y / a) + (1.0 - y) / (1.0 - a)) / n
        })
        .collect()
}

pub fn mse_loss(reconstruction: &[f64], clean: &[f64]) -> f64 {
    let n = reconstruction.len().max(1) as f64;
    reconstruction.iter().zip(clean).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n
}

pub fn mse_grad(reconstruction: &[f64], clean: &[f64]) -> Vec<f64> {
    let n = reconstruction.len().max(1) as f64;
    reconstruction.iter().zip(clean).map(|(a, b)| 2.0 * (a - b) / n).collect()
}

/// Mask plan for one training window.
pub fn training_mask<R: Rng + ?Sized>(model: &CoadModel, rng: &mut R) -> MaskPlan {
    let n = model.config.patches();
    match model.config.masking {
        Masking::Soft => MaskPlan::Soft,
        Masking::Hard => MaskPlan::Threshold(model.params.hard_threshold),
        Masking::Random => MaskPlan::Fixed(random_pattern(n, model.config.mask_ratio, rng)),
        Masking::Grating => MaskPlan::Fixed(grating_pattern(n, rng.random_range(0..2))),
    }
}

/// Training loss of one window and its gradients accumulated into `grads`
/// with weight `scale`.
pub fn loss_and_grad(
    model: &CoadModel,
    clean: &[f64],
    augmented: &AugmentedWindow,
    mask: &MaskPlan,
    scale: f64,
    grads: &mut CoadParams,
) -> Result<(LossBreakdown, Vec<f64>)> {
    let lambda = model.config.lambda;
    let result = model.forward(&augmented.distorted, mask)?;
    let targets = model.targets(&augmented.point_mask);
    let probs = &result.probabilities.combined;
    let loss = LossBreakdown::new(
        bce_loss(probs, &targets),
        mse_loss(&result.reconstruction, clean),
        lambda,
    );
    if !loss.is_finite() {
        return Ok((loss, result.probabilities.fused));
    }
    let d_probs: Vec<f64> = bce_grad(probs, &targets).into_iter().map(|g| g * scale).collect();
    let d_recon: Vec<f64> = mse_grad(&result.reconstruction, clean)
        .into_iter()
        .map(|g| g * lambda * scale)
        .collect();
    model.backward(&result, &d_probs, &d_recon, grads)?;
    Ok((loss, result.probabilities.fused))
}

/// Loss of one window without gradients, for finite-difference checks.
pub fn window_loss(model: &CoadModel, clean: &[f64], augmented: &AugmentedWindow, mask: &MaskPlan) -> Result<LossBreakdown> {
    let result = model.forward(&augmented.distorted, mask)?;
    let targets = model.targets(&augmented.point_mask);
    Ok(LossBreakdown::new(
        bce_loss(&result.probabilities.combined, &targets),
        mse_loss(&result.reconstruction, clean),
        model.config.lambda,
    ))
}

/// Optimizer state that persists across epochs.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub config: TrainConfig,
    pub adam: AdamState,
    rng: ChaCha8Rng,
    epoch: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochReport {
    pub epoch: usize,
    pub loss: LossBreakdown,
    pub windows: usize,
    pub steps: usize,
    pub hard_threshold: f64,
}

impl Trainer {
    pub fn new(model: &CoadModel, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let adam = AdamState::new(model.params.tensors().into_iter().map(|(_, m)| m));
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Self {
            config,
            adam,
            rng,
            epoch: 0,
        })
    }

    pub fn epochs_run(&self) -> usize {
        self.epoch
    }

    /// One pass over shuffled training windows. Returns the epoch-mean loss.
    pub fn train_epoch(&mut self, model: &mut CoadModel, train: &[f64], period: usize) -> Result<EpochReport> {
        let t = model.config.window;
        if train.len() < t {
            return Err(Error::WindowTooLong {
                window: t,
                region: train.len(),
            });
        }
        let stride = self.config.stride.unwrap_or(t);
        let max_offset = (train.len() - t + 1).min(t);
        let offset = self.rng.random_range(0..max_offset);
        let mut origins = window_origins(offset..train.len(), t, stride)?;
        origins.shuffle(&mut self.rng);

        let mut sum = LossBreakdown::default();
        let mut fused_weights = Vec::new();
        let mut steps = 0;
        for (b, batch) in origins.chunks(self.config.batch).enumerate() {
            let mut grads = model.params.zeros_like();
            let scale = 1.0 / batch.len() as f64;
            for &o in batch {
                let clean = &train[o..o + t];
                let augmented = distort(clean, period, &self.config.augment, &mut self.rng);
                let mask = training_mask(model, &mut self.rng);
                let (loss, fused) = loss_and_grad(model, clean, &augmented, &mask, scale, &mut grads)?;
                if !loss.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "epoch {} batch {b} window origin {o}: bce={} mse={}",
                        self.epoch, loss.bce, loss.mse
                    )));
                }
                sum.bce += loss.bce;
                sum.mse += loss.mse;
                sum.total += loss.total;
                if model.config.masking == Masking::Hard {
                    fused_weights.extend(model.patch_weights(&fused));
                }
            }
            if let Some(limit) = self.config.clip {
                let norm = grads.global_norm();
                if norm > limit {
                    grads.scale(limit / norm);
                }
            }
            if !grads.is_finite() {
                return Err(Error::NonFinite(format!(
                    "epoch {} batch {b}: non-finite gradient",
                    self.epoch
                )));
            }
            let grad_list: Vec<&Matrix> = grads.tensors().into_iter().map(|(_, m)| m).collect();
            let mut param_list: Vec<&mut Matrix> = model.params.tensors_mut().into_iter().map(|(_, m)| m).collect();
            self.adam.step(&mut param_list, &grad_list, self.config.lr)?;
            steps += 1;
        }
        if model.config.masking == Masking::Hard {
            model.params.hard_threshold = calibrate_threshold(&fused_weights);
        }
        let count = origins.len() as f64;
        let report = EpochReport {
            epoch: self.epoch,
            loss: LossBreakdown {
                bce: sum.bce / count,
                mse: sum.mse / count,
                total: sum.total / count,
            },
            windows: origins.len(),
            steps,
            hard_threshold: model.params.hard_threshold,
        };
        self.epoch += 1;
        Ok(report)
    }
}

/// Recomputes the hard-mask threshold from fused patch probabilities on
/// clean, non-overlapping training windows.
pub fn recalibrate_threshold(model: &mut CoadModel, train: &[f64]) -> Result<f64> {
    let t = model.config.window;
    let mut weights = Vec::new();
    for o in window_origins(0..train.len(), t, t)? {
        let r = model.infer(&train[o..o + t], &MaskPlan::Soft)?;
        weights.extend(model.patch_weights(&r.probabilities.fused));
    }
    let threshold = calibrate_threshold(&weights);
    model.params.hard_threshold = threshold;
    Ok(threshold)
}

/// Trains for `config.epochs` epochs, calling `observer` after each one.
pub fn fit(
    model: &mut CoadModel,
    train: &[f64],
    period: usize,
    config: &TrainConfig,
    observer: &mut dyn FnMut(&EpochReport),
) -> Result<Vec<EpochReport>> {
    let mut trainer = Trainer::new(model, config.clone())?;
    let mut log = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        let report = trainer.train_epoch(model, train, period)?;
        observer(&report);
        log.push(report);
    }
    if config.epochs > 0 && model.config.masking == Masking::Hard {
        recalibrate_threshold(model, train)?;
    }
    Ok(log)
}

/// Mean fused probability over clean windows; used to observe training
/// pressure on the classifier.
pub fn mean_fused_probability(model: &CoadModel, train: &[f64]) -> Result<f64> {
    let t = model.config.window;
    let mut sum = 0.0;
    let mut count = 0usize;
    for o in window_origins(0..train.len(), t, t)? {
        let r = model.infer(&train[o..o + t], &MaskPlan::Soft)?;
        sum += r.probabilities.fused.iter().sum::<f64>();
        count += r.probabilities.fused.len();
    }
    Ok(sum / count.max(1) as f64)
}
