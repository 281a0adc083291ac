//! Threshold-free evaluation: best F1, PR area, buffered PR area, volume
//! under the buffer surface, and top-k peak accuracy.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{Error, Result};

pub const TOPK_RADIUS: usize = 100;
pub const TOPK_EXCLUSION: usize = 100;
pub const VUS_STEPS: usize = 11;

/// Binary labels with their maximal runs of ones. Range ends are inclusive.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelSeries {
    pub labels: Vec<u8>,
    pub ranges: Vec<(usize, usize)>,
    pub avg_len: f64,
}

impl LabelSeries {
    pub fn new(labels: &[u8]) -> Self {
        let mut ranges = Vec::new();
        let mut start = None;
        for (i, &l) in labels.iter().enumerate() {
            match (l != 0, start) {
                (true, None) => start = Some(i),
                (false, Some(s)) => {
                    ranges.push((s, i - 1));
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            ranges.push((s, labels.len() - 1));
        }
        let avg_len = if ranges.is_empty() {
            0.0
        } else {
            ranges.iter().map(|(s, e)| (e - s + 1) as f64).sum::<f64>() / ranges.len() as f64
        };
        Self {
            labels: labels.iter().map(|&l| u8::from(l != 0)).collect(),
            ranges,
            avg_len,
        }
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }
}

/// Precision and recall at each distinct score, highest threshold first,
/// preceded by the `(recall 0, precision 1)` endpoint whose threshold is +inf.
#[derive(Debug, Clone, PartialEq)]
pub struct PrCurve {
    pub thresholds: Vec<f64>,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
}

impl PrCurve {
    /// Step-wise area `Σ (R_i − R_{i−1})·P_i`.
    pub fn area(&self) -> f64 {
        self.recall
            .windows(2)
            .zip(&self.precision[1..])
            .map(|(r, p)| (r[1] - r[0]) * p)
            .sum()
    }
}

/// How buffer points around a range are credited.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum BufferShape {
    /// Weight falls linearly from 1 at the range edge to 0 past `buffer`.
    #[default]
    Ramp,
    /// Full credit for every point within `buffer`.
    Flat,
}

fn check(scores: &[f64], labels: &[u8]) -> Result<usize> {
    if scores.len() != labels.len() {
        return Err(Error::Shape {
            op: "metric",
            left: (scores.len(), 1),
            right: (labels.len(), 1),
        });
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFinite(alloc::format!("score at index {i}")));
    }
    let p = labels.iter().filter(|&&l| l != 0).count();
    if p == 0 {
        return Err(Error::NoPositiveLabels);
    }
    Ok(p)
}

/// Indices sorted by descending score, grouped into runs of equal score.
fn tie_groups(scores: &[f64]) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(Ordering::Equal));
    let mut ends = Vec::new();
    for i in 1..=order.len() {
        if i == order.len() || scores[order[i]] != scores[order[i - 1]] {
            ends.push(i);
        }
    }
    (order, ends)
}

/// Curve with per-point true-positive credit `credit` against `positives`.
fn weighted_curve(scores: &[f64], credit: &[f64], positives: f64) -> PrCurve {
    let (order, ends) = tie_groups(scores);
    let mut curve = PrCurve {
        thresholds: vec![f64::INFINITY],
        precision: vec![1.0],
        recall: vec![0.0],
    };
    let mut tp = 0.0;
    let mut start = 0;
    for end in ends {
        for &i in &order[start..end] {
            tp += credit[i];
        }
        curve.thresholds.push(scores[order[start]]);
        curve.precision.push(tp / end as f64);
        curve.recall.push((tp / positives).min(1.0));
        start = end;
    }
    curve
}

pub fn pr_curve(scores: &[f64], labels: &[u8]) -> Result<PrCurve> {
    let p = check(scores, labels)?;
    let credit: Vec<f64> = labels.iter().map(|&l| f64::from(u8::from(l != 0))).collect();
    Ok(weighted_curve(scores, &credit, p as f64))
}

/// Best pointwise F1 over all thresholds `score ≥ τ`.
pub fn standard_f1(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let curve = pr_curve(scores, labels)?;
    Ok(curve
        .precision
        .iter()
        .zip(&curve.recall)
        .skip(1)
        .map(|(p, r)| if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 })
        .fold(0.0, f64::max))
}

pub fn auc_pr(scores: &[f64], labels: &[u8]) -> Result<f64> {
    Ok(pr_curve(scores, labels)?.area())
}

/// Per-point credit: 1 inside a range, decaying with distance `d` outside it
/// as `1 − d/(buffer+1)` for the ramp.
pub fn buffer_weights(labels: &[u8], buffer: f64, shape: BufferShape) -> Vec<f64> {
    let n = labels.len();
    let mut dist = vec![usize::MAX; n];
    let mut last = None;
    for i in 0..n {
        if labels[i] != 0 {
            last = Some(i);
        }
        if let Some(j) = last {
            dist[i] = i - j;
        }
    }
    last = None;
    for i in (0..n).rev() {
        if labels[i] != 0 {
            last = Some(i);
        }
        if let Some(j) = last {
            dist[i] = dist[i].min(j - i);
        }
    }
    dist.into_iter()
        .map(|d| match d {
            0 => 1.0,
            usize::MAX => 0.0,
            d => {
                let d = d as f64;
                match shape {
                    BufferShape::Ramp => (1.0 - d / (buffer + 1.0)).max(0.0),
                    BufferShape::Flat if d <= buffer => 1.0,
                    BufferShape::Flat => 0.0,
                }
            }
        })
        .collect()
}

/// PR area with buffered credit. Recall is capped at 1 since buffer credit
/// can exceed the labeled count; `buffer = 0` reduces to [`auc_pr`].
pub fn range_auc_pr_with(scores: &[f64], labels: &[u8], buffer: f64, shape: BufferShape) -> Result<f64> {
    let p = check(scores, labels)?;
    let credit = buffer_weights(labels, buffer.max(0.0), shape);
    Ok(weighted_curve(scores, &credit, p as f64).area())
}

pub fn range_auc_pr(scores: &[f64], labels: &[u8], buffer: f64) -> Result<f64> {
    range_auc_pr_with(scores, labels, buffer, BufferShape::Ramp)
}

/// Trapezoidal mean of [`range_auc_pr`] over `steps` evenly spaced buffers in
/// `[0, max_buffer]`.
pub fn vus_pr_with(scores: &[f64], labels: &[u8], max_buffer: f64, steps: usize, shape: BufferShape) -> Result<f64> {
    let steps = steps.max(1);
    let values = (0..steps)
        .map(|i| {
            let b = if steps == 1 {
                0.0
            } else {
                max_buffer * i as f64 / (steps - 1) as f64
            };
            range_auc_pr_with(scores, labels, b, shape)
        })
        .collect::<Result<Vec<f64>>>()?;
    if steps == 1 {
        return Ok(values[0]);
    }
    let area: f64 = values.windows(2).map(|v| 0.5 * (v[0] + v[1])).sum();
    Ok(area / (steps - 1) as f64)
}

pub fn vus_pr(scores: &[f64], labels: &[u8], max_buffer: f64, steps: usize) -> Result<f64> {
    vus_pr_with(scores, labels, max_buffer, steps, BufferShape::Ramp)
}

/// Greedy top-`k` peaks: each pick is the highest remaining score (lowest
/// index on ties) farther than `exclusion` from every earlier pick.
pub fn top_peaks(scores: &[f64], k: usize, exclusion: usize) -> Vec<usize> {
    let mut blocked = vec![false; scores.len()];
    let mut peaks = Vec::with_capacity(k);
    while peaks.len() < k {
        let best = (0..scores.len())
            .filter(|&i| !blocked[i])
            .fold(None, |acc: Option<usize>, i| match acc {
                Some(j) if scores[j] >= scores[i] => Some(j),
                _ => Some(i),
            });
        let Some(i) = best else { break };
        peaks.push(i);
        let lo = i.saturating_sub(exclusion);
        let hi = (i + exclusion + 1).min(scores.len());
        blocked[lo..hi].iter_mut().for_each(|b| *b = true);
    }
    peaks
}

/// 1 if any of the top `k` peaks lies in `[start − radius, end + radius]`.
pub fn topk_accuracy(scores: &[f64], range: (usize, usize), k: usize, radius: usize, exclusion: usize) -> u8 {
    let lo = range.0.saturating_sub(radius);
    let hi = range.1 + radius;
    u8::from(
        top_peaks(scores, k, exclusion)
            .into_iter()
            .any(|p| (lo..=hi).contains(&p)),
    )
}

/// Top-k accuracy for a series with one or more ranges. Each range is scored
/// on its own segment, with segments split halfway between neighbouring
/// ranges; the result is the fraction of ranges hit.
pub fn topk_fraction(scores: &[f64], labels: &LabelSeries, k: usize) -> Result<f64> {
    let ranges = &labels.ranges;
    if ranges.is_empty() {
        return Err(Error::NoPositiveLabels);
    }
    if ranges.len() == 1 {
        return Ok(f64::from(topk_accuracy(scores, ranges[0], k, TOPK_RADIUS, TOPK_EXCLUSION)));
    }
    let mut hits = 0usize;
    for (j, &(s, e)) in ranges.iter().enumerate() {
        let lo = if j == 0 { 0 } else { (ranges[j - 1].1 + s) / 2 + 1 };
        let hi = if j + 1 == ranges.len() {
            scores.len()
        } else {
            (e + ranges[j + 1].0) / 2 + 1
        };
        let local = (s - lo, e - lo);
        hits += usize::from(topk_accuracy(&scores[lo..hi], local, k, TOPK_RADIUS, TOPK_EXCLUSION));
    }
    Ok(hits as f64 / ranges.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricsReport {
    pub dataset: String,
    pub f1: f64,
    pub auc_pr: f64,
    pub r_auc_pr: f64,
    pub vus_pr: f64,
    pub top1: f64,
    pub top3: f64,
    pub top5: f64,
}

impl MetricsReport {
    pub const COLUMNS: [&'static str; 7] = ["f1", "auc_pr", "r_auc_pr", "vus_pr", "top1", "top3", "top5"];

    pub fn values(&self) -> [f64; 7] {
        [
            self.f1,
            self.auc_pr,
            self.r_auc_pr,
            self.vus_pr,
            self.top1,
            self.top3,
            self.top5,
        ]
    }

    /// Column-wise mean; `None` for an empty slice.
    pub fn mean(name: &str, reports: &[MetricsReport]) -> Option<MetricsReport> {
        if reports.is_empty() {
            return None;
        }
        let n = reports.len() as f64;
        let mut acc = [0.0; 7];
        for r in reports {
            for (a, v) in acc.iter_mut().zip(r.values()) {
                *a += v;
            }
        }
        let [f1, auc_pr, r_auc_pr, vus_pr, top1, top3, top5] = acc.map(|a| a / n);
        Some(MetricsReport {
            dataset: name.into(),
            f1,
            auc_pr,
            r_auc_pr,
            vus_pr,
            top1,
            top3,
            top5,
        })
    }
}

/// All metrics with default buffers: `avg_len` for the range area and
/// `2·avg_len` over 11 steps for the volume.
pub fn evaluate(dataset: &str, scores: &[f64], labels: &[u8]) -> Result<MetricsReport> {
    let series = LabelSeries::new(labels);
    Ok(MetricsReport {
        dataset: dataset.into(),
        f1: standard_f1(scores, labels)?,
        auc_pr: auc_pr(scores, labels)?,
        r_auc_pr: range_auc_pr(scores, labels, series.avg_len)?,
        vus_pr: vus_pr(scores, labels, 2.0 * series.avg_len, VUS_STEPS)?,
        top1: topk_fraction(scores, &series, 1)?,
        top3: topk_fraction(scores, &series, 3)?,
        top5: topk_fraction(scores, &series, 5)?,
    })
}

#[cfg(test)]
pub(crate) mod oracle {
    //! Quadratic reference implementations that share no code with the
    //! sorted-sweep versions above.
    use super::*;

    fn distinct_desc(scores: &[f64]) -> Vec<f64> {
        let mut t: Vec<f64> = scores.to_vec();
        t.sort_by(|a, b| b.partial_cmp(a).unwrap());
        t.dedup();
        t
    }

    /// `(precision, recall)` at each threshold by direct counting.
    fn points(scores: &[f64], credit: impl Fn(usize) -> f64, positives: f64) -> Vec<(f64, f64)> {
        distinct_desc(scores)
            .into_iter()
            .map(|tau| {
                let mut tp = 0.0;
                let mut predicted = 0.0;
                for (i, &s) in scores.iter().enumerate() {
                    if s >= tau {
                        predicted += 1.0;
                        tp += credit(i);
                    }
                }
                (tp / predicted, (tp / positives).min(1.0))
            })
            .collect()
    }

    fn area(pts: &[(f64, f64)]) -> f64 {
        let mut prev = 0.0;
        let mut sum = 0.0;
        for &(p, r) in pts {
            sum += (r - prev) * p;
            prev = r;
        }
        sum
    }

    fn positives(labels: &[u8]) -> f64 {
        labels.iter().map(|&l| f64::from(l)).sum()
    }

    pub fn f1(scores: &[f64], labels: &[u8]) -> f64 {
        points(scores, |i| f64::from(labels[i]), positives(labels))
            .into_iter()
            .map(|(p, r)| if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 })
            .fold(0.0, f64::max)
    }

    pub fn auc(scores: &[f64], labels: &[u8]) -> f64 {
        area(&points(scores, |i| f64::from(labels[i]), positives(labels)))
    }

    /// Weight from the explicit distance to every labeled point.
    pub fn weight(labels: &[u8], i: usize, buffer: f64) -> f64 {
        let d = (0..labels.len())
            .filter(|&j| labels[j] == 1)
            .map(|j| i.abs_diff(j))
            .min()
            .unwrap();
        if d == 0 {
            1.0
        } else {
            (1.0 - d as f64 / (buffer + 1.0)).max(0.0)
        }
    }

    pub fn range_auc(scores: &[f64], labels: &[u8], buffer: f64) -> f64 {
        area(&points(scores, |i| weight(labels, i, buffer), positives(labels)))
    }

    pub fn vus(scores: &[f64], labels: &[u8], max_buffer: f64, steps: usize) -> f64 {
        if steps == 1 {
            return range_auc(scores, labels, 0.0);
        }
        let v: Vec<f64> = (0..steps)
            .map(|i| range_auc(scores, labels, max_buffer * i as f64 / (steps - 1) as f64))
            .collect();
        let mut s = 0.0;
        for i in 0..steps - 1 {
            s += (v[i] + v[i + 1]) / 2.0;
        }
        s / (steps - 1) as f64
    }

    /// Sort by (score desc, index asc) and accept each index not within
    /// `exclusion` of an accepted one.
    pub fn topk(scores: &[f64], range: (usize, usize), k: usize, radius: usize, exclusion: usize) -> u8 {
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
        let mut picked: Vec<usize> = Vec::new();
        for i in order {
            if picked.len() == k {
                break;
            }
            if picked.iter().all(|&p| p.abs_diff(i) > exclusion) {
                picked.push(i);
            }
        }
        let lo = range.0 as i64 - radius as i64;
        let hi = (range.1 + radius) as i64;
        u8::from(picked.iter().any(|&p| (lo..=hi).contains(&(p as i64))))
    }
}
