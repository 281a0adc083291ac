//! Classifier heads over paired time/frequency feature sequences and their
//! fusion.

use alloc::vec;
use alloc::vec::Vec;

use super::config::Fusion;
use crate::numerics::{dot, sigmoid_scalar, Matrix, Sequence};

/// Elementwise fusion of branch probabilities. Feature-level modes are
/// resolved before the heads and fall back to `max` here.
pub fn fuse(freq: &[f64], time: &[f64], fusion: Fusion) -> Vec<f64> {
    freq.iter()
        .zip(time)
        .map(|(&f, &t)| match fusion {
            Fusion::Mean => 0.5 * (f + t),
            _ => f.max(t),
        })
        .collect()
}

pub(crate) struct Heads<'a> {
    pub time: &'a Matrix,
    pub freq: &'a Matrix,
    pub gate: Option<&'a Matrix>,
    pub fusion: Fusion,
    /// Only the last position is classified.
    pub last_only: bool,
}

#[derive(Debug, Clone)]
pub(crate) struct HeadCache {
    pub time_feats: Sequence,
    pub freq_feats: Sequence,
    /// Fused features for feature-level modes.
    pub fused: Option<Sequence>,
    pub gate: Option<Sequence>,
    pub a_time: Vec<f64>,
    pub a_freq: Vec<f64>,
    pub a: Vec<f64>,
}

impl Heads<'_> {
    fn positions(&self, len: usize) -> core::ops::Range<usize> {
        if self.last_only {
            len - 1..len
        } else {
            0..len
        }
    }

    fn feature_level(&self) -> bool {
        matches!(self.fusion, Fusion::FeatAdd | Fusion::FeatGate)
    }

    fn probs(head: &Matrix, feat: &[f64], out: &mut Vec<f64>) {
        for j in 0..head.rows() {
            out.push(sigmoid_scalar(dot(head.row(j), feat)));
        }
    }

    pub fn forward(&self, time: &Sequence, freq: &Sequence, keep: bool) -> HeadCache {
        let positions = self.positions(time.len());
        let mut a_time = Vec::new();
        let mut a_freq = Vec::new();
        let mut fused = None;
        let mut gates = None;
        let a = if self.feature_level() {
            let mut feats = Vec::with_capacity(time.len());
            let mut gs = Vec::new();
            for s in 0..time.len() {
                let (t, f) = (&time[s], &freq[s]);
                let v: Vec<f64> = match self.gate {
                    Some(w) if self.fusion == Fusion::FeatGate => {
                        let cat: Vec<f64> = t.iter().chain(f).copied().collect();
                        let g: Vec<f64> = w.matvec(&cat).into_iter().map(sigmoid_scalar).collect();
                        let v = (0..t.len()).map(|i| g[i] * t[i] + (1.0 - g[i]) * f[i]).collect();
                        gs.push(g);
                        v
                    }
                    _ => t.iter().zip(f).map(|(x, y)| x + y).collect(),
                };
                feats.push(v);
            }
            let mut a = Vec::new();
            for s in positions {
                Self::probs(self.time, &feats[s], &mut a);
            }
            a_time.clone_from(&a);
            a_freq.clone_from(&a);
            fused = Some(feats);
            if self.fusion == Fusion::FeatGate {
                gates = Some(gs);
            }
            a
        } else {
            for s in positions {
                Self::probs(self.time, &time[s], &mut a_time);
                Self::probs(self.freq, &freq[s], &mut a_freq);
            }
            fuse(&a_freq, &a_time, self.fusion)
        };
        HeadCache {
            time_feats: if keep { time.clone() } else { Vec::new() },
            freq_feats: if keep { freq.clone() } else { Vec::new() },
            fused: if keep { fused } else { None },
            gate: if keep { gates } else { None },
            a_time,
            a_freq,
            a,
        }
    }

    /// Accumulates head gradients and returns `(d time_feats, d freq_feats)`
    /// for an upstream gradient on the fused probabilities.
    pub fn backward(
        &self,
        cache: &HeadCache,
        da: &[f64],
        d_time: &mut Matrix,
        d_freq: &mut Matrix,
        d_gate: Option<&mut Matrix>,
    ) -> (Sequence, Sequence) {
        let len = cache.time_feats.len();
        let dim = cache.time_feats.first().map_or(0, Vec::len);
        let mut dt = vec![vec![0.0; dim]; len];
        let mut df = vec![vec![0.0; dim]; len];
        let width = self.time.rows();
        let positions = self.positions(len);

        if let Some(fused) = &cache.fused {
            let mut dfused = vec![vec![0.0; dim]; len];
            for (p, s) in positions.enumerate() {
                for j in 0..width {
                    let i = p * width + j;
                    let a = cache.a[i];
                    let dz = da[i] * a * (1.0 - a);
                    if dz == 0.0 {
                        continue;
                    }
                    add_row(d_time, j, dz, &fused[s]);
                    for (o, w) in dfused[s].iter_mut().zip(self.time.row(j)) {
                        *o += dz * w;
                    }
                }
            }
            match (&cache.gate, self.gate, d_gate) {
                (Some(gates), Some(w), Some(dw)) => {
                    for s in 0..len {
                        let (t, f, g) = (&cache.time_feats[s], &cache.freq_feats[s], &gates[s]);
                        let mut dpre = vec![0.0; dim];
                        for i in 0..dim {
                            let d = dfused[s][i];
                            dt[s][i] += d * g[i];
                            df[s][i] += d * (1.0 - g[i]);
                            dpre[i] = d * (t[i] - f[i]) * g[i] * (1.0 - g[i]);
                        }
                        let cat: Vec<f64> = t.iter().chain(f).copied().collect();
                        dw.add_outer(&dpre, &cat);
                        let mut dcat = vec![0.0; 2 * dim];
                        w.matvec_t_acc(&dpre, &mut dcat);
                        for i in 0..dim {
                            dt[s][i] += dcat[i];
                            df[s][i] += dcat[dim + i];
                        }
                    }
                }
                _ => {
                    for s in 0..len {
                        for i in 0..dim {
                            dt[s][i] += dfused[s][i];
                            df[s][i] += dfused[s][i];
                        }
                    }
                }
            }
            return (dt, df);
        }

        for (p, s) in positions.enumerate() {
            for j in 0..width {
                let i = p * width + j;
                let (at, af) = (cache.a_time[i], cache.a_freq[i]);
                let (gt, gf) = match self.fusion {
                    Fusion::Mean => (0.5 * da[i], 0.5 * da[i]),
                    // ties go to the frequency branch, matching `f.max(t)`
                    _ if af >= at => (0.0, da[i]),
                    _ => (da[i], 0.0),
                };
                let zt = gt * at * (1.0 - at);
                let zf = gf * af * (1.0 - af);
                if zt != 0.0 {
                    add_row(d_time, j, zt, &cache.time_feats[s]);
                    for (o, w) in dt[s].iter_mut().zip(self.time.row(j)) {
                        *o += zt * w;
                    }
                }
                if zf != 0.0 {
                    add_row(d_freq, j, zf, &cache.freq_feats[s]);
                    for (o, w) in df[s].iter_mut().zip(self.freq.row(j)) {
                        *o += zf * w;
                    }
                }
            }
        }
        (dt, df)
    }
}

fn add_row(m: &mut Matrix, row: usize, scale: f64, x: &[f64]) {
    let cols = m.cols();
    let data = &mut m.as_mut_slice()[row * cols..(row + 1) * cols];
    for (a, b) in data.iter_mut().zip(x) {
        *a += scale * b;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fuse_cases() {
        assert_eq!(fuse(&[0.3], &[0.7], Fusion::Max), [0.7]);
        assert_eq!(fuse(&[0.4], &[0.4], Fusion::Max), [0.4]);
        assert!((fuse(&[0.2], &[0.6], Fusion::Mean)[0] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn zero_heads_give_half() {
        let w = Matrix::zeros(1, 3);
        let heads = Heads {
            time: &w,
            freq: &w,
            gate: None,
            fusion: Fusion::Max,
            last_only: false,
        };
        let feats = vec![vec![1.0, -2.0, 0.5]; 4];
        let c = heads.forward(&feats, &feats, false);
        assert_eq!(c.a, [0.5; 4]);
    }
}
