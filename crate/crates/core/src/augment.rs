//! Synthetic anomaly injection for outlier-exposure training.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Variance of the additive noise used by [`jittering`].
pub const JITTER_VARIANCE: f64 = 0.1;
/// Share of training windows that receive a distortion.
pub const DEFAULT_DISTORT_PROBABILITY: f64 = 0.9;
/// Resampling factors for [`length_scale`].
pub const SCALE_FACTORS: [f64; 2] = [0.5, 2.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum DistortionKind {
    UniformReplacement,
    MirrorFlip,
    LengthScale,
    Jittering,
    None,
}

impl DistortionKind {
    /// The four kinds that actually alter a window.
    pub const ACTIVE: [DistortionKind; 4] = [
        DistortionKind::UniformReplacement,
        DistortionKind::MirrorFlip,
        DistortionKind::LengthScale,
        DistortionKind::Jittering,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::UniformReplacement => "uniform_replacement",
            Self::MirrorFlip => "mirror_flip",
            Self::LengthScale => "length_scale",
            Self::Jittering => "jittering",
            Self::None => "none",
        }
    }
}

impl fmt::Display for DistortionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DistortionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "uniform_replacement" | "uniform" => Ok(Self::UniformReplacement),
            "mirror_flip" | "flip" => Ok(Self::MirrorFlip),
            "length_scale" | "scale" => Ok(Self::LengthScale),
            "jittering" | "jitter" => Ok(Self::Jittering),
            "none" => Ok(Self::None),
            other => Err(Error::Config(alloc::format!("unknown distortion kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlipAxis {
    /// Reflect values around the segment mean.
    X,
    /// Reverse time order.
    Y,
}

/// Realized parameters of one distortion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DistortionParams {
    None,
    Uniform { value: f64 },
    Flip { axis: FlipAxis },
    Scale { factor: f64 },
    Jitter { variance: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistortionEvent {
    pub kind: DistortionKind,
    /// Inclusive bounds within the window.
    pub start: usize,
    pub end: usize,
    pub params: DistortionParams,
}

impl DistortionEvent {
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedWindow {
    pub distorted: Vec<f64>,
    pub point_mask: Vec<u8>,
    pub event: Option<DistortionEvent>,
}

impl AugmentedWindow {
    pub fn clean(window: &[f64]) -> Self {
        Self {
            distorted: window.to_vec(),
            point_mask: vec![0; window.len()],
            event: None,
        }
    }

    pub fn patch_labels(&self, patch: usize) -> Vec<u8> {
        patch_labels(&self.point_mask, patch)
    }
}

/// `1` for every patch that contains at least one masked point.
pub fn patch_labels(point_mask: &[u8], patch: usize) -> Vec<u8> {
    point_mask
        .chunks(patch.max(1))
        .map(|c| u8::from(c.iter().any(|&m| m != 0)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AugmentConfig {
    pub probability: f64,
    /// Kinds eligible for injection; excluded kinds are simply absent.
    pub kinds: Vec<DistortionKind>,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            probability: DEFAULT_DISTORT_PROBABILITY,
            kinds: DistortionKind::ACTIVE.to_vec(),
        }
    }
}

impl AugmentConfig {
    pub fn excluding(excluded: &[DistortionKind]) -> Self {
        Self {
            kinds: DistortionKind::ACTIVE
                .into_iter()
                .filter(|k| !excluded.contains(k))
                .collect(),
            ..Self::default()
        }
    }
}

/// Injects at most one distortion into `window`. The interval length is
/// uniform in `[1, period]` (capped at the window length) and its position
/// uniform over the window.
pub fn distort<R: Rng + ?Sized>(window: &[f64], period: usize, config: &AugmentConfig, rng: &mut R) -> AugmentedWindow {
    let roll: f64 = rng.random();
    if config.kinds.is_empty() || window.is_empty() || roll >= config.probability {
        return AugmentedWindow::clean(window);
    }
    let kind = config.kinds[rng.random_range(0..config.kinds.len())];
    if kind == DistortionKind::None {
        return AugmentedWindow::clean(window);
    }
    let max_len = period.max(1).min(window.len());
    let len = rng.random_range(1..=max_len);
    let start = rng.random_range(0..=window.len() - len);
    let mut out = AugmentedWindow::clean(window);
    let event = inject(&mut out.distorted, kind, start, start + len - 1, rng);
    out.point_mask[start..start + len].fill(1);
    out.event = Some(event);
    out
}

/// Applies `kind` to `values[start..=end]` in place and returns the realized
/// event.
pub fn inject<R: Rng + ?Sized>(values: &mut [f64], kind: DistortionKind, start: usize, end: usize, rng: &mut R) -> DistortionEvent {
    let seg = &mut values[start..=end];
    let params = match kind {
        DistortionKind::UniformReplacement => {
            let (out, value) = uniform_replacement(seg, rng);
            seg.copy_from_slice(&out);
            DistortionParams::Uniform { value }
        }
        DistortionKind::MirrorFlip => {
            let axis = if rng.random_bool(0.5) { FlipAxis::X } else { FlipAxis::Y };
            let out = mirror_flip(seg, axis);
            seg.copy_from_slice(&out);
            DistortionParams::Flip { axis }
        }
        DistortionKind::LengthScale => {
            let factor = SCALE_FACTORS[rng.random_range(0..SCALE_FACTORS.len())];
            let out = length_scale(seg, factor);
            seg.copy_from_slice(&out);
            DistortionParams::Scale { factor }
        }
        DistortionKind::Jittering => {
            let out = jittering(seg, rng);
            seg.copy_from_slice(&out);
            DistortionParams::Jitter {
                variance: JITTER_VARIANCE,
            }
        }
        DistortionKind::None => DistortionParams::None,
    };
    DistortionEvent {
        kind,
        start,
        end,
        params,
    }
}

/// Constant segment at a level drawn uniformly in `[min, max]` of the input.
pub fn uniform_replacement<R: Rng + ?Sized>(segment: &[f64], rng: &mut R) -> (Vec<f64>, f64) {
    let lo = segment.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = segment.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if segment.is_empty() {
        return (Vec::new(), 0.0);
    }
    let value = if hi > lo { rng.random_range(lo..=hi) } else { lo };
    (vec![value; segment.len()], value)
}

pub fn mirror_flip(segment: &[f64], axis: FlipAxis) -> Vec<f64> {
    match axis {
        FlipAxis::Y => segment.iter().rev().copied().collect(),
        FlipAxis::X => {
            let mean = segment.iter().sum::<f64>() / segment.len().max(1) as f64;
            segment.iter().map(|v| 2.0 * mean - v).collect()
        }
    }
}

/// Resamples the segment by `factor` with linear interpolation, then crops
/// (stretched) or tiles (compressed) back to the original length.
pub fn length_scale(segment: &[f64], factor: f64) -> Vec<f64> {
    let m = segment.len();
    if m == 0 {
        return Vec::new();
    }
    let new_len = (libm::round(m as f64 * factor) as usize).max(1);
    let last = (m - 1) as f64;
    let resampled: Vec<f64> = (0..new_len)
        .map(|j| {
            let pos = (j as f64 / factor).min(last);
            let i = libm::floor(pos) as usize;
            let frac = pos - i as f64;
            if i + 1 < m {
                segment[i] * (1.0 - frac) + segment[i + 1] * frac
            } else {
                segment[m - 1]
            }
        })
        .collect();
    (0..m).map(|i| resampled[i % new_len]).collect()
}

/// Adds i.i.d. `N(0, 0.1)` noise.
pub fn jittering<R: Rng + ?Sized>(segment: &[f64], rng: &mut R) -> Vec<f64> {
    let normal = Normal::new(0.0, libm::sqrt(JITTER_VARIANCE)).expect("valid std");
    segment.iter().map(|v| v + normal.sample(rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sine(len: usize, period: f64) -> Vec<f64> {
        (0..len).map(|i| libm::sin(2.0 * PI * i as f64 / period)).collect()
    }

    #[test]
    fn none_leaves_window_clean() {
        let w = sine(64, 16.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = AugmentConfig {
            probability: 0.0,
            ..AugmentConfig::default()
        };
        let a = distort(&w, 16, &cfg, &mut rng);
        assert_eq!(a.distorted, w);
        assert!(a.point_mask.iter().all(|&m| m == 0));
        assert!(a.patch_labels(8).iter().all(|&m| m == 0));
        let only_none = AugmentConfig {
            probability: 1.0,
            kinds: vec![DistortionKind::None],
        };
        assert_eq!(distort(&w, 16, &only_none, &mut rng).distorted, w);
    }

    #[test]
    fn deterministic_for_seed() {
        let w = sine(128, 20.0);
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..20)
                .map(|_| distort(&w, 20, &AugmentConfig::default(), &mut rng))
                .collect::<Vec<_>>()
        };
        let a = run(5);
        let b = run(5);
        for (x, y) in a.iter().zip(&b) {
            let xb: Vec<u64> = x.distorted.iter().map(|v| v.to_bits()).collect();
            let yb: Vec<u64> = y.distorted.iter().map(|v| v.to_bits()).collect();
            assert_eq!(xb, yb);
            assert_eq!(x.point_mask, y.point_mask);
        }
    }

    #[test]
    fn uniform_replacement_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let seg = [0.5, -1.0, 2.0, 1.0];
        let (out, v) = uniform_replacement(&seg, &mut rng);
        assert!(out.iter().all(|&x| x == v));
        assert!((-1.0..=2.0).contains(&v));
        let (flat, v) = uniform_replacement(&[3.0; 5], &mut rng);
        assert_eq!(flat, [3.0; 5]);
        assert_eq!(v, 3.0);
    }

    #[test]
    fn mirror_flip_cases() {
        let x = mirror_flip(&[1.0, 2.0, 4.0], FlipAxis::X);
        for (a, b) in x.iter().zip([11.0 / 3.0, 8.0 / 3.0, 2.0 / 3.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(mirror_flip(&[1.0, 2.0, 3.0], FlipAxis::Y), [3.0, 2.0, 1.0]);
        let seg = [0.3, -1.7, 2.2, 0.9];
        for axis in [FlipAxis::X, FlipAxis::Y] {
            let twice = mirror_flip(&mirror_flip(&seg, axis), axis);
            for (a, b) in twice.iter().zip(&seg) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn length_scale_stretch_halves_slope() {
        let ramp: Vec<f64> = (0..10).map(|i| 2.0 * i as f64).collect();
        let out = length_scale(&ramp, 2.0);
        for (i, v) in out.iter().enumerate() {
            assert!((v - i as f64).abs() < 1e-12);
        }
        assert_eq!(length_scale(&[4.0; 7], 0.5), [4.0; 7]);
        assert_eq!(length_scale(&[4.0; 7], 2.0), [4.0; 7]);
    }

    fn zero_crossings(x: &[f64]) -> usize {
        x.windows(2).filter(|w| (w[0] < 0.0) != (w[1] < 0.0)).count()
    }

    #[test]
    fn length_scale_compress_halves_period() {
        // 4 periods of 25 points, phase-shifted so no sample sits on zero.
        let seg: Vec<f64> = (0..100)
            .map(|i| libm::sin(2.0 * PI * (i as f64 + 0.5) / 25.0))
            .collect();
        assert_eq!(zero_crossings(&seg), 7);
        let out = length_scale(&seg, 0.5);
        // twice the crossings ≈ half the period
        let c = zero_crossings(&out);
        assert!((14..=16).contains(&c), "{c}");
    }

    #[test]
    fn jitter_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let zeros = vec![0.0; 100_000];
        let noise = jittering(&zeros, &mut rng);
        let n = noise.len() as f64;
        let mean = noise.iter().sum::<f64>() / n;
        let var = noise.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        assert!(mean.abs() < 0.01, "{mean}");
        assert!((var - 0.1).abs() < 0.01, "{var}");
        assert!(jittering(&[], &mut rng).is_empty());
    }

    #[test]
    fn parse_kinds() {
        for k in DistortionKind::ACTIVE {
            assert_eq!(k.name().parse::<DistortionKind>().unwrap(), k);
        }
        assert!("bogus".parse::<DistortionKind>().is_err());
        let c = AugmentConfig::excluding(&[DistortionKind::Jittering]);
        assert_eq!(c.kinds.len(), 3);
    }

    proptest! {
        #[test]
        fn locality_labels_and_length(seed in 0u64..5000, t in 8usize..200, period in 2usize..80, patch in 1usize..16) {
            let w: Vec<f64> = (0..t).map(|i| libm::sin(i as f64 * 0.37) + 0.01 * i as f64).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cfg = AugmentConfig { probability: 1.0, ..AugmentConfig::default() };
            let a = distort(&w, period, &cfg, &mut rng);
            let ev = a.event.unwrap();
            prop_assert!(ev.start <= ev.end && ev.end < t);
            prop_assert!(ev.len() <= period);
            for i in 0..t {
                let inside = i >= ev.start && i <= ev.end;
                prop_assert_eq!(a.point_mask[i] == 1, inside);
                if !inside {
                    prop_assert_eq!(a.distorted[i].to_bits(), w[i].to_bits());
                }
            }
            let labels = a.patch_labels(patch);
            for (j, &l) in labels.iter().enumerate() {
                let lo = j * patch;
                let hi = ((j + 1) * patch).min(t);
                let any = a.point_mask[lo..hi].iter().any(|&m| m == 1);
                prop_assert_eq!(l == 1, any);
            }
        }
    }
}
