//! Inference over the test region: per-window scores, stitching and
//! moving-average smoothing.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::window_origins;
use crate::error::{Error, Result};
use crate::model::{grating_pattern, random_pattern, CoadModel, MaskPlan, Masking, Scoring};

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSeries {
    pub scores: Vec<f64>,
    pub smoothed: Vec<f64>,
    pub coverage: Vec<u32>,
}

/// Inference outputs of one window with any mask mode resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowOutput {
    /// Combined probabilities `A_c`.
    pub combined: Vec<f64>,
    /// First-stage fused probabilities `A`.
    pub fused: Vec<f64>,
    pub reconstruction: Vec<f64>,
}

/// Runs inference on one undistorted window. Random masks are seeded from
/// `seed` and the window origin; grating masks run both phases and take each
/// patch's reconstruction from the pass that masked it.
pub fn infer_window(model: &CoadModel, x: &[f64], origin: usize, seed: u64) -> Result<WindowOutput> {
    let n = model.config.patches();
    let single = |plan: MaskPlan| -> Result<WindowOutput> {
        let r = model.infer(x, &plan)?;
        Ok(WindowOutput {
            combined: r.probabilities.combined,
            fused: r.probabilities.fused,
            reconstruction: r.reconstruction,
        })
    };
    match model.config.masking {
        Masking::Soft => single(MaskPlan::Soft),
        Masking::Hard => single(MaskPlan::Threshold(model.params.hard_threshold)),
        Masking::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (origin as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            single(MaskPlan::Fixed(random_pattern(n, model.config.mask_ratio, &mut rng)))
        }
        Masking::Grating => {
            let even = single(MaskPlan::Fixed(grating_pattern(n, 0)))?;
            let odd = single(MaskPlan::Fixed(grating_pattern(n, 1)))?;
            let p = model.config.patch;
            let reconstruction = (0..x.len())
                .map(|i| {
                    if (i / p) % 2 == 0 {
                        even.reconstruction[i]
                    } else {
                        odd.reconstruction[i]
                    }
                })
                .collect();
            let avg = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| 0.5 * (u + v)).collect();
            Ok(WindowOutput {
                combined: avg(&even.combined, &odd.combined),
                fused: avg(&even.fused, &odd.fused),
                reconstruction,
            })
        }
    }
}

/// Per-point score: broadcast probability plus absolute reconstruction
/// error, or either term alone.
pub fn window_score(model: &CoadModel, x: &[f64], out: &WindowOutput, scoring: Scoring) -> Vec<f64> {
    let err = x.iter().zip(&out.reconstruction).map(|(a, b)| libm::fabs(a - b));
    match scoring {
        Scoring::Joint => model
            .point_probabilities(&out.combined)
            .into_iter()
            .zip(err)
            .map(|(p, e)| p + e)
            .collect(),
        Scoring::ReconOnly => err.collect(),
        Scoring::ClsOnly => model.point_probabilities(&out.fused),
    }
}

/// Averages overlapping window scores. `origins` are relative to the start
/// of the `len`-point output.
pub fn stitch(window_scores: &[Vec<f64>], origins: &[usize], len: usize, smoothing: usize) -> Result<ScoreSeries> {
    let mut sum = vec![0.0; len];
    let mut coverage = vec![0u32; len];
    for (w, &o) in window_scores.iter().zip(origins) {
        if o + w.len() > len {
            return Err(Error::WindowTooLong {
                window: o + w.len(),
                region: len,
            });
        }
        for (i, v) in w.iter().enumerate() {
            sum[o + i] += v;
            coverage[o + i] += 1;
        }
    }
    if let Some(gap) = coverage.iter().position(|&c| c == 0) {
        return Err(Error::Config(alloc::format!("point {gap} is not covered by any window")));
    }
    let scores: Vec<f64> = sum.iter().zip(&coverage).map(|(s, &c)| s / f64::from(c)).collect();
    let smoothed = smooth(&scores, smoothing);
    Ok(ScoreSeries {
        scores,
        smoothed,
        coverage,
    })
}

/// Centered moving average of width `w`, shrunk at the boundaries. For even
/// `w` the extra point falls on the right.
pub fn smooth(scores: &[f64], w: usize) -> Vec<f64> {
    let w = w.max(1);
    let left = (w - 1) / 2;
    let right = w - 1 - left;
    let mut prefix = Vec::with_capacity(scores.len() + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for &s in scores {
        acc += s;
        prefix.push(acc);
    }
    (0..scores.len())
        .map(|i| {
            let lo = i.saturating_sub(left);
            let hi = (i + right + 1).min(scores.len());
            // direct sum keeps constant inputs exact
            if hi - lo <= 64 {
                scores[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
            } else {
                (prefix[hi] - prefix[lo]) / (hi - lo) as f64
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectOptions {
    pub scoring: Scoring,
    /// Moving-average width; defaults to the patch length.
    pub smoothing: usize,
    pub seed: u64,
}

impl DetectOptions {
    pub fn for_model(model: &CoadModel) -> Self {
        Self {
            scoring: model.config.scoring,
            smoothing: model.config.patch,
            seed: 0,
        }
    }
}

/// Scores `values[test]` window by window. When the test region is shorter
/// than a window, the window reaches back into preceding values.
pub fn detect(model: &CoadModel, values: &[f64], test: Range<usize>, opts: &DetectOptions) -> Result<ScoreSeries> {
    let t = model.config.window;
    if test.end > values.len() || test.start >= test.end {
        return Err(Error::Config(alloc::format!(
            "test region {test:?} invalid for {} values",
            values.len()
        )));
    }
    if values.len() < t {
        return Err(Error::WindowTooLong {
            window: t,
            region: values.len(),
        });
    }
    let start = test.start.min(test.end - t.min(test.end));
    let origins = window_origins(start..test.end, t, t)?;
    let mut scores = Vec::with_capacity(origins.len());
    for &o in &origins {
        let x = &values[o..o + t];
        let out = infer_window(model, x, o, opts.seed)?;
        scores.push(window_score(model, x, &out, opts.scoring));
    }
    let rel: Vec<usize> = origins.iter().map(|o| o - start).collect();
    let full = stitch(&scores, &rel, test.end - start, 1)?;
    let skip = test.start - start;
    let scores: Vec<f64> = full.scores[skip..].to_vec();
    let coverage = full.coverage[skip..].to_vec();
    let smoothed = smooth(&scores, opts.smoothing);
    Ok(ScoreSeries {
        scores,
        smoothed,
        coverage,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CoadConfig;
    use proptest::prelude::*;
    use rand::Rng;

    fn model(masking: Masking) -> CoadModel {
        let config = CoadConfig {
            hidden: 6,
            layers: 1,
            masking,
            ..CoadConfig::from_period(8)
        };
        CoadModel::init(config, &mut ChaCha8Rng::seed_from_u64(1)).unwrap()
    }

    #[test]
    fn joint_score_arithmetic() {
        let m = model(Masking::Soft);
        let n = m.config.patches();
        let t = m.config.window;
        let x = vec![0.0; t];
        let mut out = WindowOutput {
            combined: vec![0.2; n],
            fused: vec![0.3; n],
            reconstruction: vec![0.0; t],
        };
        out.reconstruction[0] = 0.1;
        let s = window_score(&m, &x, &out, Scoring::Joint);
        assert!((s[0] - 0.3).abs() < 1e-15);
        assert_eq!(s[1], 0.2);
        out.reconstruction[0] = 0.0;
        assert!(window_score(&m, &x, &out, Scoring::ReconOnly).iter().all(|&v| v == 0.0));
        assert!(window_score(&m, &x, &out, Scoring::ClsOnly).iter().all(|&v| v == 0.3));
    }

    #[test]
    fn stitch_cases() {
        let one = stitch(&[vec![1.0, 2.0, 3.0]], &[0], 3, 1).unwrap();
        assert_eq!(one.scores, [1.0, 2.0, 3.0]);
        assert_eq!(one.smoothed, one.scores);
        let two = stitch(&[vec![1.0, 2.0], vec![1.0, 2.0]], &[0, 0], 2, 1).unwrap();
        assert_eq!(two.scores, [1.0, 2.0]);
        assert_eq!(two.coverage, [2, 2]);
        // windows [0,4) and [2,6): overlap at 2 and 3
        let part = stitch(&[vec![1.0; 4], vec![3.0; 4]], &[0, 2], 6, 1).unwrap();
        assert_eq!(part.scores, [1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        assert!(stitch(&[vec![1.0; 2]], &[0], 3, 1).is_err());
        assert!(stitch(&[vec![1.0; 2]], &[2], 3, 1).is_err());
    }

    #[test]
    fn smooth_cases() {
        assert_eq!(smooth(&[2.0; 10], 5), [2.0; 10]);
        let x = [0.3, -1.0, 4.0];
        assert_eq!(smooth(&x, 1), x);
        let mut imp = vec![0.0; 11];
        imp[5] = 1.0;
        let s = smooth(&imp, 5);
        for (i, v) in s.iter().enumerate() {
            let expect = if (3..=7).contains(&i) { 0.2 } else { 0.0 };
            assert!((v - expect).abs() < 1e-15, "{i}");
        }
        // shrink at the left boundary: mean of x[0..=2]
        assert!((smooth(&[3.0, 0.0, 0.0, 9.0], 5)[0] - 1.0).abs() < 1e-15);
        // even width puts the extra point on the right
        assert_eq!(smooth(&[0.0, 0.0, 4.0, 0.0], 2), [0.0, 2.0, 2.0, 0.0]);
    }

    proptest! {
        #[test]
        fn smoothing_conserves_interior_mass(seed in 0u64..1000, w in 1usize..12) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut x = vec![0.0; 60];
            for v in x.iter_mut().skip(15).take(30) {
                *v = rng.random_range(0.0..5.0);
            }
            let s = smooth(&x, w);
            let a: f64 = x.iter().sum();
            let b: f64 = s.iter().sum();
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn stitching_exact_cover_is_identity(seed in 0u64..1000, k in 1usize..6, w in 1usize..9) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let xs: Vec<Vec<f64>> = (0..k).map(|_| (0..w).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
            let origins: Vec<usize> = (0..k).map(|i| i * w).collect();
            let s = stitch(&xs, &origins, k * w, 1).unwrap();
            let flat: Vec<f64> = xs.concat();
            prop_assert_eq!(s.scores, flat);
            prop_assert!(s.coverage.iter().all(|&c| c == 1));
        }
    }

    #[test]
    fn detect_covers_test_region() {
        let m = model(Masking::Soft);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let values: Vec<f64> = (0..300).map(|_| rng.random_range(-1.0..1.0)).collect();
        let opts = DetectOptions::for_model(&m);
        let s = detect(&m, &values, 150..300, &opts).unwrap();
        assert_eq!(s.scores.len(), 150);
        assert!(s.coverage.iter().all(|&c| c >= 1));
        assert!(s.scores.iter().all(|&v| v >= 0.0));
        assert_eq!(s, detect(&m, &values, 150..300, &opts).unwrap());
        // short test region borrows context from before the split
        let short = detect(&m, &values, 290..300, &opts).unwrap();
        assert_eq!(short.scores.len(), 10);
    }

    #[test]
    fn every_mask_mode_scores() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let values: Vec<f64> = (0..200).map(|_| rng.random_range(-1.0..1.0)).collect();
        for mode in Masking::ALL {
            let m = model(*mode);
            let opts = DetectOptions::for_model(&m);
            let s = detect(&m, &values, 0..200, &opts).unwrap();
            assert!(s.scores.iter().all(|v| v.is_finite() && *v >= 0.0));
            assert_eq!(s, detect(&m, &values, 0..200, &opts).unwrap());
        }
    }

    #[test]
    fn grating_takes_masked_reconstruction() {
        let m = model(Masking::Grating);
        let x: Vec<f64> = (0..m.config.window).map(|i| (i as f64 * 0.4).sin()).collect();
        let out = infer_window(&m, &x, 0, 0).unwrap();
        let odd = m.infer(&x, &MaskPlan::Fixed(grating_pattern(m.config.patches(), 1))).unwrap();
        let p = m.config.patch;
        assert_eq!(out.reconstruction[p..2 * p], odd.reconstruction[p..2 * p]);
    }
}
