//! Series containers, train/test split, normalization, dominant-period
//! estimation and sliding windows.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Period used when the autocorrelation shows no usable peak.
pub const FALLBACK_PERIOD: usize = 64;
/// A local ACF maximum must exceed this to count as a period.
pub const MIN_PEAK_ACF: f64 = 0.1;
/// Standard deviations below this are treated as zero.
pub const MIN_STD: f64 = 1e-8;

/// A univariate series with its train/test boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSeries {
    pub name: String,
    pub values: Vec<f64>,
    /// Point labels over the whole series (0/1), when known.
    pub labels: Option<Vec<u8>>,
    /// Index of the first test point.
    pub split: usize,
}

impl RawSeries {
    pub fn new(name: impl Into<String>, values: Vec<f64>, labels: Option<Vec<u8>>, split: usize) -> Result<Self> {
        let s = Self {
            name: name.into(),
            values,
            labels,
            split,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let len = self.values.len();
        if len == 0 {
            return Err(Error::SeriesTooShort { len: 0, min: 1 });
        }
        if self.split == 0 || self.split >= len {
            return Err(Error::Metadata(format!("split {} outside (0, {len})", self.split)));
        }
        if let Some(l) = &self.labels {
            if l.len() != len {
                return Err(Error::Metadata(format!("{} labels for {len} values", l.len())));
            }
            if l.iter().any(|&v| v > 1) {
                return Err(Error::Metadata("labels must be 0 or 1".into()));
            }
        }
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("value at index {i}")));
        }
        Ok(())
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn train(&self) -> &[f64] {
        &self.values[..self.split]
    }

    pub fn test(&self) -> &[f64] {
        &self.values[self.split..]
    }

    pub fn test_labels(&self) -> Option<&[u8]> {
        self.labels.as_deref().map(|l| &l[self.split..])
    }
}

/// Metadata carried by a UCR Anomaly Archive filename
/// (`…_<split>_<anomStart>_<anomEnd>.txt`, zero-based, inclusive end).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UcrName {
    pub split: usize,
    pub anomaly_start: usize,
    pub anomaly_end: usize,
}

pub fn parse_ucr_name(file_name: &str) -> Result<UcrName> {
    let stem = file_name.rsplit(['/', '\\']).next().unwrap_or(file_name);
    let stem = stem.strip_suffix(".txt").unwrap_or(stem);
    let parts: Vec<&str> = stem.split('_').collect();
    if parts.len() < 3 {
        return Err(Error::Metadata(format!("`{file_name}` does not end in _<split>_<start>_<end>")));
    }
    let num = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::Metadata(format!("`{s}` in `{file_name}` is not an index")))
    };
    let n = parts.len();
    let name = UcrName {
        split: num(parts[n - 3])?,
        anomaly_start: num(parts[n - 2])?,
        anomaly_end: num(parts[n - 1])?,
    };
    if name.anomaly_start > name.anomaly_end {
        return Err(Error::Metadata(format!("anomaly range {}..={} is reversed", name.anomaly_start, name.anomaly_end)));
    }
    Ok(name)
}

/// Parses whitespace-separated numbers, reporting 1-based line numbers.
pub fn parse_values(text: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::Metadata(format!("line {}: cannot parse `{tok}`", i + 1)))?;
            out.push(v);
        }
    }
    Ok(out)
}

/// Builds a series from UCR-format text and its file name.
pub fn parse_ucr(file_name: &str, text: &str) -> Result<RawSeries> {
    let values = parse_values(text)?;
    if values.is_empty() {
        return Err(Error::SeriesTooShort { len: 0, min: 1 });
    }
    let meta = parse_ucr_name(file_name)?;
    if meta.anomaly_end >= values.len() {
        return Err(Error::Metadata(format!(
            "anomaly end {} beyond series length {}",
            meta.anomaly_end,
            values.len()
        )));
    }
    let mut labels = vec![0u8; values.len()];
    labels[meta.anomaly_start..=meta.anomaly_end].fill(1);
    let stem = file_name.rsplit(['/', '\\']).next().unwrap_or(file_name);
    let name = stem.strip_suffix(".txt").unwrap_or(stem).to_string();
    RawSeries::new(name, values, Some(labels), meta.split)
}

/// Mean and population standard deviation of the training region.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NormalizationStats {
    pub mean: f64,
    pub std: f64,
}

impl NormalizationStats {
    pub fn from_train(train: &[f64]) -> Self {
        let n = train.len().max(1) as f64;
        let mean = train.iter().sum::<f64>() / n;
        let var = train.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Self {
            mean,
            std: libm::sqrt(var),
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.std < MIN_STD
    }

    pub fn denormalize(&self, values: &[f64]) -> Vec<f64> {
        values.iter().map(|v| v * self.std + self.mean).collect()
    }
}

/// `(x − mean) / std`, or all zeros when the training region is constant.
pub fn zscore(values: &[f64], stats: &NormalizationStats) -> Vec<f64> {
    if stats.is_degenerate() {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - stats.mean) / stats.std).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodEstimate {
    pub period: usize,
    /// Autocorrelation at lags `0..=max_lag`.
    pub acf: Vec<f64>,
}

/// Sample autocorrelation of the mean-removed series, normalized by lag 0.
pub fn autocorrelation(values: &[f64], max_lag: usize) -> Vec<f64> {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n.max(1) as f64;
    let centered: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let c0: f64 = centered.iter().map(|v| v * v).sum();
    let mut acf = vec![0.0; max_lag + 1];
    if c0 <= 0.0 {
        return acf;
    }
    for (k, slot) in acf.iter_mut().enumerate().take(n) {
        let s = crate::numerics::dot(&centered[..n - k], &centered[k..]);
        *slot = s / c0;
    }
    acf
}

pub fn default_max_lag(train_len: usize) -> usize {
    (train_len / 3).min(1000)
}

/// Dominant period: the highest local ACF maximum in `[2, max_lag]`, or the
/// fallback when no local maximum exceeds [`MIN_PEAK_ACF`].
pub fn estimate_period(train: &[f64], max_lag: Option<usize>) -> Result<PeriodEstimate> {
    if train.len() < 8 {
        return Err(Error::SeriesTooShort { len: train.len(), min: 8 });
    }
    let max_lag = max_lag.unwrap_or_else(|| default_max_lag(train.len())).max(2);
    let acf = autocorrelation(train, max_lag);
    let mut best: Option<(usize, f64)> = None;
    for k in 2..=max_lag {
        let left = acf[k] > acf[k - 1];
        let right = k == max_lag || acf[k] >= acf[k + 1];
        if left && right && acf[k] > MIN_PEAK_ACF && best.is_none_or(|(_, v)| acf[k] > v) {
            best = Some((k, acf[k]));
        }
    }
    let period = best.map_or(FALLBACK_PERIOD.min(max_lag), |(k, _)| k);
    Ok(PeriodEstimate { period, acf })
}

/// Window start positions over `region`: `start, start+stride, …`, plus a
/// final window right-aligned to the region end when the stride leaves a
/// remainder.
pub fn window_origins(region: Range<usize>, window: usize, stride: usize) -> Result<Vec<usize>> {
    let len = region.end.saturating_sub(region.start);
    if window == 0 || window > len {
        return Err(Error::WindowTooLong { window, region: len });
    }
    let stride = stride.max(1);
    let last = region.end - window;
    let mut origins: Vec<usize> = (region.start..=last).step_by(stride).collect();
    if origins.last() != Some(&last) {
        origins.push(last);
    }
    Ok(origins)
}

/// A batch of windows cut from one series.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowBatch {
    /// `B × T`
    pub windows: Matrix,
    /// Start of each window in the source series.
    pub origins: Vec<usize>,
}

pub fn make_windows(series: &[f64], window: usize, stride: usize, region: Range<usize>) -> Result<WindowBatch> {
    if region.end > series.len() {
        return Err(Error::WindowTooLong {
            window: region.end,
            region: series.len(),
        });
    }
    let origins = window_origins(region, window, stride)?;
    let mut data = Vec::with_capacity(origins.len() * window);
    for &o in &origins {
        data.extend_from_slice(&series[o..o + window]);
    }
    Ok(WindowBatch {
        windows: Matrix::from_vec(origins.len(), window, data)?,
        origins,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn ucr_format() {
        let text = "1\n2\n3\n4\n5\n6\n7\n8\n9\n10\n";
        let s = parse_ucr("x_5_7_8.txt", text).unwrap();
        assert_eq!(s.len(), 10);
        assert_eq!(s.split, 5);
        let l = s.labels.unwrap();
        assert_eq!(l, [0, 0, 0, 0, 0, 0, 0, 1, 1, 0]);
        assert_eq!(s.name, "x_5_7_8");
    }

    #[test]
    fn ucr_errors() {
        assert!(matches!(parse_ucr("x_5_7_8.txt", ""), Err(Error::SeriesTooShort { .. })));
        let err = parse_ucr("x_5_7_8.txt", "1\n2\nabc\n").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        assert!(matches!(parse_ucr("x_a_7_8.txt", "1\n"), Err(Error::Metadata(_))));
        assert!(matches!(parse_ucr("plain.txt", "1\n"), Err(Error::Metadata(_))));
        assert!(parse_ucr("x_5_7_80.txt", "1\n2\n3\n4\n5\n6\n7\n8\n9\n").is_err());
    }

    #[test]
    fn ucr_name_from_path() {
        let m = parse_ucr_name("/data/001_UCR_Anomaly_DISTORTED1sddb40_35000_52000_52620.txt").unwrap();
        assert_eq!((m.split, m.anomaly_start, m.anomaly_end), (35000, 52000, 52620));
    }

    #[test]
    fn zscore_cases() {
        let c = NormalizationStats::from_train(&[3.0; 6]);
        assert_eq!(zscore(&[3.0, 4.0], &c), [0.0, 0.0]);
        let unit = NormalizationStats { mean: 0.0, std: 1.0 };
        assert_eq!(zscore(&[1.5, -2.0], &unit), [1.5, -2.0]);
        // mean 3, population variance (4+1+0+1+4)/5 = 2
        let train = [1.0, 2.0, 3.0, 4.0, 5.0];
        let s = NormalizationStats::from_train(&train);
        assert_eq!(s.mean, 3.0);
        assert!((s.std - 2f64.sqrt()).abs() < 1e-15);
        let z = zscore(&train, &s);
        let r2 = 2f64.sqrt();
        for (a, b) in z.iter().zip([-2.0 / r2, -1.0 / r2, 0.0, 1.0 / r2, 2.0 / r2]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    /// Direct ACF without the dot-product helper.
    fn brute_acf(x: &[f64], lag: usize) -> f64 {
        let m = x.iter().sum::<f64>() / x.len() as f64;
        let num: f64 = (0..x.len() - lag).map(|i| (x[i] - m) * (x[i + lag] - m)).sum();
        let den: f64 = x.iter().map(|v| (v - m) * (v - m)).sum();
        num / den
    }

    fn brute_period(x: &[f64], max_lag: usize) -> usize {
        let acf: Vec<f64> = (0..=max_lag).map(|k| brute_acf(x, k)).collect();
        let mut best = (FALLBACK_PERIOD.min(max_lag), f64::NEG_INFINITY);
        for k in 2..=max_lag {
            let peak = acf[k] > acf[k - 1] && (k == max_lag || acf[k] >= acf[k + 1]);
            if peak && acf[k] > MIN_PEAK_ACF && acf[k] > best.1 {
                best = (k, acf[k]);
            }
        }
        best.0
    }

    fn sine(len: usize, period: f64, noise: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = Normal::new(0.0, 1.0).unwrap();
        (0..len)
            .map(|i| libm::sin(2.0 * PI * i as f64 / period) + noise * n.sample(&mut rng))
            .collect()
    }

    #[test]
    fn period_of_sine() {
        let x = sine(2000, 50.0, 0.0, 0);
        let p = estimate_period(&x, None).unwrap();
        assert_eq!(brute_period(&x, default_max_lag(2000)), 50);
        assert!((p.period as i64 - 50).abs() <= 1);
        for k in [0, 1, 25, 50, 400] {
            assert!((p.acf[k] - brute_acf(&x, k)).abs() < 1e-10);
        }
    }

    #[test]
    fn period_of_noisy_sine() {
        let x = sine(2000, 50.0, 0.1, 3);
        let p = estimate_period(&x, None).unwrap();
        assert_eq!(p.period, brute_period(&x, default_max_lag(2000)));
        assert!((p.period as i64 - 50).abs() <= 1);
    }

    #[test]
    fn white_noise_falls_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = Normal::new(0.0, 1.0).unwrap();
        let noise: Vec<f64> = (0..2000).map(|_| n.sample(&mut rng)).collect();
        assert_eq!(brute_period(&noise, default_max_lag(2000)), FALLBACK_PERIOD);
        assert_eq!(estimate_period(&noise, None).unwrap().period, FALLBACK_PERIOD);
    }

    #[test]
    fn period_requires_eight_points() {
        assert!(estimate_period(&[1.0; 7], None).is_err());
        let p = estimate_period(&[1.0, 2.0, 1.0, 2.0, 1.0, 2.0, 1.0, 2.0], None).unwrap();
        assert!(p.period >= 2 && p.period <= 2);
    }

    #[test]
    fn period_scale_invariant() {
        let x = sine(1500, 37.0, 0.2, 4);
        let scaled: Vec<f64> = x.iter().map(|v| 3.7 * v + 11.0).collect();
        assert_eq!(
            estimate_period(&x, None).unwrap().period,
            estimate_period(&scaled, None).unwrap().period
        );
    }

    #[test]
    fn window_origin_rules() {
        assert_eq!(window_origins(0..100, 40, 40).unwrap(), [0, 40, 60]);
        assert_eq!(window_origins(0..40, 40, 7).unwrap(), [0]);
        assert_eq!(window_origins(0..97, 40, 20).unwrap(), [0, 20, 40, 57]);
        assert_eq!(window_origins(10..110, 40, 40).unwrap(), [10, 50, 70]);
        assert!(matches!(window_origins(0..30, 40, 40), Err(Error::WindowTooLong { .. })));
    }

    #[test]
    fn windows_copy_values() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let b = make_windows(&x, 4, 4, 2..10).unwrap();
        assert_eq!(b.origins, [2, 6]);
        assert_eq!(b.windows.row(1), &[6.0, 7.0, 8.0, 9.0]);
    }

    proptest! {
        #[test]
        fn windows_cover_region(start in 0usize..50, len in 1usize..300, window in 1usize..64, stride in 1usize..80) {
            prop_assume!(window <= len && stride <= window);
            let origins = window_origins(start..start + len, window, stride).unwrap();
            let mut covered = vec![false; len];
            for o in origins {
                prop_assert!(o >= start && o + window <= start + len);
                covered[o - start..o - start + window].iter_mut().for_each(|c| *c = true);
            }
            prop_assert!(covered.iter().all(|&c| c));
        }

        #[test]
        fn normalization_inverts(values in proptest::collection::vec(-1e3f64..1e3, 2..64)) {
            let s = NormalizationStats::from_train(&values);
            prop_assume!(!s.is_degenerate());
            let back = s.denormalize(&zscore(&values, &s));
            for (a, b) in back.iter().zip(&values) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
