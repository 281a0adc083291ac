//! Seeded periodic series with injected anomalies.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::augment::{inject, DistortionEvent, DistortionKind};
use crate::data::RawSeries;
use crate::error::{Error, Result};

/// Anomaly placement; `end` is inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AnomalySpec {
    pub kind: DistortionKind,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SynthConfig {
    pub name: String,
    pub len: usize,
    pub split: usize,
    pub period: f64,
    pub noise_std: f64,
    pub anomalies: Vec<AnomalySpec>,
    pub seed: u64,
}

impl Default for SynthConfig {
    /// 20 000 points, clean first half, period 50, five mixed anomalies
    /// spread over the second half.
    fn default() -> Self {
        let kinds = [
            DistortionKind::UniformReplacement,
            DistortionKind::MirrorFlip,
            DistortionKind::LengthScale,
            DistortionKind::Jittering,
            DistortionKind::UniformReplacement,
        ];
        let lengths = [40, 50, 60, 50, 30];
        let anomalies = kinds
            .iter()
            .zip(lengths)
            .enumerate()
            .map(|(j, (&kind, len))| {
                let start = 11_000 + 2_000 * j + 7 * j;
                AnomalySpec {
                    kind,
                    start,
                    end: start + len - 1,
                }
            })
            .collect();
        Self {
            name: "synth".into(),
            len: 20_000,
            split: 10_000,
            period: 50.0,
            noise_std: 0.05,
            anomalies,
            seed: 7,
        }
    }
}

impl SynthConfig {
    /// Same layout with every anomaly of one kind.
    pub fn with_kind(mut self, kind: DistortionKind) -> Self {
        for a in &mut self.anomalies {
            a.kind = kind;
        }
        self
    }

    /// UCR-style file name; the encoded range is the first anomaly, so
    /// multi-anomaly fixtures need a label sidecar.
    pub fn file_name(&self) -> String {
        let (s, e) = self.anomalies.first().map_or((0, 0), |a| (a.start, a.end));
        format!("{}_{}_{}_{}.txt", self.name, self.split, s, e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Synthetic {
    pub series: RawSeries,
    pub events: Vec<DistortionEvent>,
}

/// `sin(2πi/period)` plus Gaussian noise, then each anomaly applied with the
/// training-time distortion code. Labels are the union of anomaly intervals.
pub fn gen_periodic(cfg: &SynthConfig) -> Result<Synthetic> {
    if cfg.period <= 0.0 || !cfg.noise_std.is_finite() || cfg.noise_std < 0.0 {
        return Err(Error::Config(format!(
            "period {} / noise {} invalid",
            cfg.period, cfg.noise_std
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, cfg.noise_std).map_err(|e| Error::Config(format!("{e}")))?;
    let mut values: Vec<f64> = (0..cfg.len)
        .map(|i| libm::sin(2.0 * PI * i as f64 / cfg.period) + noise.sample(&mut rng))
        .collect();
    let mut labels = vec![0u8; cfg.len];
    let mut events = Vec::with_capacity(cfg.anomalies.len());
    for a in &cfg.anomalies {
        if a.start > a.end || a.end >= cfg.len {
            return Err(Error::Config(format!(
                "anomaly {}..={} outside series of length {}",
                a.start, a.end, cfg.len
            )));
        }
        events.push(inject(&mut values, a.kind, a.start, a.end, &mut rng));
        labels[a.start..=a.end].fill(1);
    }
    let series = RawSeries::new(cfg.file_name().trim_end_matches(".txt"), values, Some(labels), cfg.split)?;
    Ok(Synthetic { series, events })
}

/// One value per line in shortest round-trip form.
pub fn values_to_text(values: &[f64]) -> String {
    let mut s = String::with_capacity(values.len() * 20);
    for v in values {
        let _ = writeln!(s, "{v}");
    }
    s
}

pub fn labels_to_text(labels: &[u8]) -> String {
    let mut s = String::with_capacity(labels.len() * 2);
    for l in labels {
        let _ = writeln!(s, "{l}");
    }
    s
}
