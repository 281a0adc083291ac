//! Resolved run configuration and the train / detect / evaluate pipeline.

use std::path::PathBuf;

use coad_core::augment::DistortionKind;
use coad_core::data::{estimate_period, zscore, NormalizationStats, RawSeries};
use coad_core::metrics::{evaluate, MetricsReport};
use coad_core::model::{
    window_for_period, CoadConfig, CoadModel, Fusion, Granularity, Masking, Scoring,
};
use coad_core::score::{detect, DetectOptions, ScoreSeries};
use coad_core::spectral::StftWindow;
use coad_core::train::{fit, EpochReport, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Failure, Outcome};

/// Everything needed to reproduce a run, with defaults materialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: u64,
    pub split: usize,
    pub period: usize,
    pub normalization: NormalizationStats,
    pub model: CoadConfig,
    pub train: TrainConfig,
    /// Moving-average width applied to stitched scores.
    pub smoothing: usize,
}

/// Command-line settings; `None` keeps the base or default value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub period: Option<usize>,
    pub window: Option<usize>,
    pub patch: Option<usize>,
    pub hidden: Option<usize>,
    pub bins: Option<usize>,
    pub layers: Option<usize>,
    pub lambda: Option<f64>,
    pub frame_len: Option<usize>,
    pub stft_window: Option<StftWindow>,
    pub masking: Option<Masking>,
    pub granularity: Option<Granularity>,
    pub fusion: Option<Fusion>,
    pub scoring: Option<Scoring>,
    pub bidirectional: Option<bool>,
    pub share_encoders: Option<bool>,
    pub mask_ratio: Option<f64>,
    pub epochs: Option<usize>,
    pub batch: Option<usize>,
    pub lr: Option<f64>,
    pub stride: Option<usize>,
    /// `Some(0.0)` disables clipping.
    pub clip: Option<f64>,
    pub distort_probability: Option<f64>,
    pub exclude_kinds: Vec<DistortionKind>,
    pub smoothing: Option<usize>,
}

macro_rules! apply {
    ($dst:expr, $src:expr; $($field:ident),+) => {
        $(if let Some(v) = $src.$field.clone() { $dst.$field = v; })+
    };
}

impl Overrides {
    pub fn model_config(&self, period: usize, base: Option<&CoadConfig>) -> CoadConfig {
        let mut c = base.cloned().unwrap_or_else(|| CoadConfig::from_period(period));
        if base.is_none() && self.window.is_none() {
            if let Some(p) = self.patch {
                c.window = window_for_period(period, p);
            }
        }
        apply!(c, self; window, patch, hidden, bins, layers, lambda, frame_len, stft_window,
            masking, granularity, fusion, scoring, bidirectional, share_encoders, mask_ratio);
        c
    }

    pub fn train_config(&self, seed: u64, base: Option<&TrainConfig>) -> TrainConfig {
        let mut t = base.cloned().unwrap_or_default();
        apply!(t, self; epochs, batch, lr);
        if self.stride.is_some() {
            t.stride = self.stride;
        }
        if let Some(c) = self.clip {
            t.clip = (c > 0.0).then_some(c);
        }
        if !self.exclude_kinds.is_empty() {
            t.augment.kinds.retain(|k| !self.exclude_kinds.contains(k));
        }
        if let Some(p) = self.distort_probability {
            t.augment.probability = p;
        }
        t.seed = seed;
        t
    }
}

/// Resolves the run for one series. Values from `base` (a loaded
/// `config.json`) take precedence over derived defaults; overrides win over both.
pub fn resolve(
    series: &RawSeries,
    base: Option<&RunConfig>,
    overrides: &Overrides,
    seed: u64,
    out: PathBuf,
) -> Outcome<RunConfig> {
    let normalization = NormalizationStats::from_train(series.train());
    let period = match (overrides.period, base) {
        (Some(p), _) => p,
        (None, Some(b)) => b.period,
        (None, None) => estimate_period(series.train(), None)?.period,
    };
    let model = overrides.model_config(period, base.map(|b| &b.model));
    model.validate()?;
    let train = overrides.train_config(seed, base.map(|b| &b.train));
    train.validate()?;
    let smoothing = overrides.smoothing.or(base.map(|b| b.smoothing)).unwrap_or(model.patch);
    if smoothing == 0 {
        return Err(Failure::usage("smoothing width must be ≥ 1"));
    }
    Ok(RunConfig {
        dataset: None,
        manifest: None,
        out,
        seed,
        split: series.split,
        period,
        normalization,
        model,
        train,
        smoothing,
    })
}

pub fn normalized(series: &RawSeries) -> Vec<f64> {
    zscore(&series.values, &NormalizationStats::from_train(series.train()))
}

/// Initializes from `run.seed` and fits on the normalized train region.
pub fn train_model(
    run: &RunConfig,
    series: &RawSeries,
    observer: &mut dyn FnMut(&EpochReport),
) -> Outcome<(CoadModel, Vec<EpochReport>)> {
    let values = normalized(series);
    let mut model = CoadModel::init(run.model.clone(), &mut ChaCha8Rng::seed_from_u64(run.seed))?;
    let log = fit(&mut model, &values[..series.split], run.period, &run.train, observer)?;
    Ok((model, log))
}

pub fn score_series(
    model: &CoadModel,
    series: &RawSeries,
    scoring: Scoring,
    smoothing: usize,
    seed: u64,
) -> Outcome<ScoreSeries> {
    let values = normalized(series);
    let opts = DetectOptions {
        scoring,
        smoothing,
        seed,
    };
    Ok(detect(model, &values, series.split..series.len(), &opts)?)
}

/// Metrics on the test region of `series`.
pub fn evaluate_series(series: &RawSeries, smoothed: &[f64]) -> Outcome<MetricsReport> {
    let labels = series
        .test_labels()
        .ok_or_else(|| Failure::data(format!("{} has no labels", series.name)))?;
    if labels.len() != smoothed.len() {
        return Err(Failure::data(format!(
            "{} scores for a test region of {} points",
            smoothed.len(),
            labels.len()
        )));
    }
    Ok(evaluate(&series.name, smoothed, labels)?)
}
