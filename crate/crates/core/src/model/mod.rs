//! The cooperative detector: dual-branch patch classification, probability
//! guided masked reconstruction and residual classification.

mod config;
mod heads;
mod masking;
mod params;

use alloc::vec;
use alloc::vec::Vec;

pub use config::{
    frame_for_period, window_for_period, CoadConfig, Fusion, Granularity, Masking, Scoring, DEFAULT_BINS,
    DEFAULT_HIDDEN, DEFAULT_LAMBDA, DEFAULT_LAYERS, DEFAULT_MASK_RATIO, DEFAULT_PATCH, MAX_FRAME_LEN, MIN_FRAME_LEN,
    PERIODS_PER_WINDOW,
};
pub use heads::fuse;
pub use masking::{calibrate_threshold, grating_pattern, random_pattern, soft_mask, threshold_pattern, MaskPlan};
pub use params::{CoadParams, ResidualEncoders};

use heads::{HeadCache, Heads};
use masking::blend;

use crate::error::{Error, Result};
use crate::numerics::{ForwardCache, GruStack, Matrix, Sequence};
use crate::spectral::{patch_spectrogram, patch_time, unpatch_spectrogram, StftPlan};

/// Probability vectors of one forward pass. Length is `N` for patch
/// granularity, `T` for step and `1` for window.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchProbabilities {
    pub time: Vec<f64>,
    pub freq: Vec<f64>,
    pub fused: Vec<f64>,
    pub residual_time: Vec<f64>,
    pub residual_freq: Vec<f64>,
    pub residual: Vec<f64>,
    pub combined: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ForwardResult {
    pub probabilities: PatchProbabilities,
    /// `X_r`, length `T`.
    pub reconstruction: Vec<f64>,
    /// `E_m`, `H × N`.
    pub masked: Matrix,
    /// Per-patch weights used for masking.
    pub mask_weights: Vec<f64>,
    trace: Option<Trace>,
}

#[derive(Debug, Clone)]
struct Branch {
    feats: Sequence,
    cache: Option<ForwardCache>,
}

#[derive(Debug, Clone)]
struct Trace {
    x_patches: Matrix,
    f_patches: Matrix,
    time: Branch,
    freq: Branch,
    heads: HeadCache,
    soft: bool,
    /// `W_m x_n` per patch.
    projected: Sequence,
    recon: Branch,
    xr_patches: Matrix,
    fr_patches: Matrix,
    res_time: Branch,
    res_freq: Branch,
    res_heads: HeadCache,
}

/// Configuration, parameters and a prepared STFT plan.
#[derive(Debug, Clone)]
pub struct CoadModel {
    pub config: CoadConfig,
    pub params: CoadParams,
    plan: StftPlan,
}

fn encode(proj: &Matrix, gru: &GruStack, cols: &Matrix, keep: bool) -> Result<Branch> {
    let inputs: Sequence = (0..cols.cols()).map(|j| proj.matvec(&cols.column(j))).collect();
    if keep {
        let (feats, cache) = gru.forward(&inputs)?;
        Ok(Branch {
            feats,
            cache: Some(cache),
        })
    } else {
        Ok(Branch {
            feats: gru.infer(&inputs)?,
            cache: None,
        })
    }
}

/// Backpropagates an encoder branch; returns input-column gradients when
/// `want_inputs` is set.
fn encode_backward(
    proj: &Matrix,
    gru: &GruStack,
    branch: &Branch,
    cols: &Matrix,
    d_feats: &[Vec<f64>],
    d_proj: &mut Matrix,
    d_gru: &mut GruStack,
    want_inputs: bool,
) -> Result<Option<Matrix>> {
    let cache = branch.cache.as_ref().ok_or(Error::Config("forward ran without trace".into()))?;
    let d_in = gru.backward(cache, d_feats, d_gru)?;
    let mut d_cols = want_inputs.then(|| Matrix::zeros(cols.rows(), cols.cols()));
    for (j, g) in d_in.iter().enumerate() {
        d_proj.add_outer(g, &cols.column(j));
        if let Some(dc) = d_cols.as_mut() {
            let mut tmp = vec![0.0; cols.rows()];
            proj.matvec_t_acc(g, &mut tmp);
            for (i, v) in tmp.into_iter().enumerate() {
                dc[(i, j)] = v;
            }
        }
    }
    Ok(d_cols)
}

fn sub(a: &Sequence, b: &Sequence) -> Sequence {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p - q).collect())
        .collect()
}

fn add_into(acc: &mut Sequence, other: &Sequence, sign: f64) {
    for (a, b) in acc.iter_mut().zip(other) {
        for (x, y) in a.iter_mut().zip(b) {
            *x += sign * y;
        }
    }
}

impl CoadModel {
    pub fn new(config: CoadConfig, params: CoadParams) -> Result<Self> {
        config.validate()?;
        params.check_layout(&config)?;
        let plan = StftPlan::new(config.bins, config.frame_len, config.stft_window)?;
        Ok(Self { config, params, plan })
    }

    /// Freshly initialized model.
    pub fn init<R: rand::Rng + ?Sized>(config: CoadConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let params = CoadParams::init(&config, rng);
        Self::new(config, params)
    }

    pub fn plan(&self) -> &StftPlan {
        &self.plan
    }

    fn heads(&self, residual: bool) -> Heads<'_> {
        let p = &self.params;
        let (time, freq) = if residual {
            (&p.residual_head, &p.residual_head)
        } else {
            (&p.time_head, &p.freq_head)
        };
        Heads {
            time,
            freq,
            gate: p.gate.as_ref(),
            fusion: self.config.fusion,
            last_only: self.config.granularity == Granularity::Window,
        }
    }

    fn residual_encoders(&self) -> (&Matrix, &GruStack, &Matrix, &GruStack) {
        let p = &self.params;
        match &p.residual {
            Some(r) => (&r.time_proj, &r.time_gru, &r.freq_proj, &r.freq_gru),
            None => (&p.time_proj, &p.time_gru, &p.freq_proj, &p.freq_gru),
        }
    }

    /// Collapses a probability vector to one weight per patch.
    pub fn patch_weights(&self, probs: &[f64]) -> Vec<f64> {
        let n = self.config.patches();
        match self.config.granularity {
            Granularity::Patch => probs.to_vec(),
            Granularity::Step => probs
                .chunks(self.config.patch)
                .map(|c| c.iter().sum::<f64>() / c.len() as f64)
                .collect(),
            Granularity::Window => vec![probs[0]; n],
        }
    }

    /// Broadcasts a probability vector to one value per point.
    pub fn point_probabilities(&self, probs: &[f64]) -> Vec<f64> {
        let t = self.config.window;
        let p = self.config.patch;
        match self.config.granularity {
            Granularity::Patch => (0..t).map(|i| probs[i / p]).collect(),
            Granularity::Step => probs.to_vec(),
            Granularity::Window => vec![probs[0]; t],
        }
    }

    /// Classification targets matching [`CoadConfig::prob_len`].
    pub fn targets(&self, point_mask: &[u8]) -> Vec<f64> {
        let as_f = |b: bool| if b { 1.0 } else { 0.0 };
        match self.config.granularity {
            Granularity::Patch => point_mask
                .chunks(self.config.patch)
                .map(|c| as_f(c.iter().any(|&m| m != 0)))
                .collect(),
            Granularity::Step => point_mask.iter().map(|&m| as_f(m != 0)).collect(),
            Granularity::Window => vec![as_f(point_mask.iter().any(|&m| m != 0))],
        }
    }

    /// Residual-stage probabilities for a window and a reconstruction of it.
    pub fn residual_classify(&self, x: &[f64], reconstruction: &[f64]) -> Result<Vec<f64>> {
        let c = &self.config;
        let p = &self.params;
        let time = encode(&p.time_proj, &p.time_gru, &patch_time(x, c.patch)?, false)?;
        let freq = encode(&p.freq_proj, &p.freq_gru, &patch_spectrogram(&self.plan.forward(x)?, c.patch)?, false)?;
        let (rtp, rtg, rfp, rfg) = self.residual_encoders();
        let xr = patch_time(reconstruction, c.patch)?;
        let fr = patch_spectrogram(&self.plan.forward(reconstruction)?, c.patch)?;
        let res_time = encode(rtp, rtg, &xr, false)?;
        let res_freq = encode(rfp, rfg, &fr, false)?;
        let r_t = sub(&time.feats, &res_time.feats);
        let r_f = sub(&freq.feats, &res_freq.feats);
        Ok(self.heads(true).forward(&r_t, &r_f, false).a)
    }

    /// Forward pass keeping every activation needed by [`backward`](Self::backward).
    pub fn forward(&self, x: &[f64], mask: &MaskPlan) -> Result<ForwardResult> {
        self.run(x, mask, true)
    }

    /// Forward pass without a backward trace.
    pub fn infer(&self, x: &[f64], mask: &MaskPlan) -> Result<ForwardResult> {
        self.run(x, mask, false)
    }

    fn run(&self, x: &[f64], mask: &MaskPlan, keep: bool) -> Result<ForwardResult> {
        let c = &self.config;
        let p = &self.params;
        if x.len() != c.window {
            return Err(Error::Shape {
                op: "forward",
                left: (c.window, 1),
                right: (x.len(), 1),
            });
        }
        let n = c.patches();
        let x_patches = patch_time(x, c.patch)?;
        let f_patches = patch_spectrogram(&self.plan.forward(x)?, c.patch)?;
        let time = encode(&p.time_proj, &p.time_gru, &x_patches, keep)?;
        let freq = encode(&p.freq_proj, &p.freq_gru, &f_patches, keep)?;
        let heads = self.heads(false).forward(&time.feats, &freq.feats, keep);

        let (weights, soft) = match mask {
            MaskPlan::Soft => (self.patch_weights(&heads.a), true),
            MaskPlan::Threshold(t) => (threshold_pattern(&self.patch_weights(&heads.a), *t), false),
            MaskPlan::Fixed(v) => {
                if v.len() != n {
                    return Err(Error::Shape {
                        op: "mask_plan",
                        left: (n, 1),
                        right: (v.len(), 1),
                    });
                }
                (v.clone(), false)
            }
        };

        let mut projected = Vec::with_capacity(n);
        let mut masked = Matrix::zeros(c.hidden, n);
        let mut recon_inputs = Vec::with_capacity(n);
        for j in 0..n {
            let proj = p.mask_proj.matvec(&x_patches.column(j));
            let col: Vec<f64> = (0..c.hidden)
                .map(|i| blend(weights[j], p.mask_embedding[(i, j)], proj[i]))
                .collect();
            for (i, v) in col.iter().enumerate() {
                masked[(i, j)] = *v;
            }
            recon_inputs.push(col);
            projected.push(proj);
        }
        let recon = if keep {
            let (feats, cache) = p.recon_gru.forward(&recon_inputs)?;
            Branch {
                feats,
                cache: Some(cache),
            }
        } else {
            Branch {
                feats: p.recon_gru.infer(&recon_inputs)?,
                cache: None,
            }
        };
        let reconstruction: Vec<f64> = recon.feats.iter().flat_map(|h| p.out_proj.matvec(h)).collect();
        if !reconstruction.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("reconstruction".into()));
        }

        let xr_patches = patch_time(&reconstruction, c.patch)?;
        let fr_patches = patch_spectrogram(&self.plan.forward(&reconstruction)?, c.patch)?;
        let (rtp, rtg, rfp, rfg) = self.residual_encoders();
        let res_time = encode(rtp, rtg, &xr_patches, keep)?;
        let res_freq = encode(rfp, rfg, &fr_patches, keep)?;
        let r_t = sub(&time.feats, &res_time.feats);
        let r_f = sub(&freq.feats, &res_freq.feats);
        let res_heads = self.heads(true).forward(&r_t, &r_f, keep);

        let combined: Vec<f64> = heads.a.iter().zip(&res_heads.a).map(|(a, b)| 0.5 * (a + b)).collect();
        let probabilities = PatchProbabilities {
            time: heads.a_time.clone(),
            freq: heads.a_freq.clone(),
            fused: heads.a.clone(),
            residual_time: res_heads.a_time.clone(),
            residual_freq: res_heads.a_freq.clone(),
            residual: res_heads.a.clone(),
            combined,
        };
        let trace = keep.then(|| Trace {
            x_patches,
            f_patches,
            time,
            freq,
            heads,
            soft,
            projected,
            recon,
            xr_patches,
            fr_patches,
            res_time,
            res_freq,
            res_heads,
        });
        Ok(ForwardResult {
            probabilities,
            reconstruction,
            masked,
            mask_weights: weights,
            trace,
        })
    }

    /// Accumulates into `grads` the parameter gradients of a scalar loss with
    /// upstream gradients `d_combined` (on `A_c`) and `d_recon` (on `X_r`).
    pub fn backward(&self, result: &ForwardResult, d_combined: &[f64], d_recon: &[f64], grads: &mut CoadParams) -> Result<()> {
        let c = &self.config;
        let p = &self.params;
        let tr = result
            .trace
            .as_ref()
            .ok_or(Error::Config("backward needs a result from `forward`".into()))?;
        if d_combined.len() != c.prob_len() || d_recon.len() != c.window {
            return Err(Error::Shape {
                op: "model_backward",
                left: (c.prob_len(), c.window),
                right: (d_combined.len(), d_recon.len()),
            });
        }
        let n = c.patches();
        let half: Vec<f64> = d_combined.iter().map(|g| 0.5 * g).collect();

        // residual heads
        let mut d_res_head_f = Matrix::zeros(p.residual_head.rows(), p.residual_head.cols());
        let (d_rt, d_rf) = self.heads(true).backward(
            &tr.res_heads,
            &half,
            &mut grads.residual_head,
            &mut d_res_head_f,
            grads.gate.as_mut(),
        );
        grads.residual_head.add_assign(&d_res_head_f)?;
        let mut d_time_feats = d_rt.clone();
        let mut d_freq_feats = d_rf.clone();
        let neg_t: Sequence = d_rt.iter().map(|v| v.iter().map(|x| -x).collect()).collect();
        let neg_f: Sequence = d_rf.iter().map(|v| v.iter().map(|x| -x).collect()).collect();

        // residual encoders, through to the reconstruction
        let (rtp, rtg, rfp, rfg) = self.residual_encoders();
        let (dtp, dtg, dfp, dfg) = match grads.residual.as_mut() {
            Some(r) => (&mut r.time_proj, &mut r.time_gru, &mut r.freq_proj, &mut r.freq_gru),
            None => (&mut grads.time_proj, &mut grads.time_gru, &mut grads.freq_proj, &mut grads.freq_gru),
        };
        let d_xr_patches = encode_backward(rtp, rtg, &tr.res_time, &tr.xr_patches, &neg_t, dtp, dtg, true)?
            .expect("requested input gradient");
        let d_fr_patches = encode_backward(rfp, rfg, &tr.res_freq, &tr.fr_patches, &neg_f, dfp, dfg, true)?
            .expect("requested input gradient");
        let mut d_xr = d_recon.to_vec();
        for j in 0..n {
            for i in 0..c.patch {
                d_xr[j * c.patch + i] += d_xr_patches[(i, j)];
            }
        }
        let d_spec = unpatch_spectrogram(&d_fr_patches, 2 * c.bins)?;
        for (a, b) in d_xr.iter_mut().zip(self.plan.adjoint(&d_spec)?) {
            *a += b;
        }

        // output projection and reconstruction GRU
        let mut d_recon_feats = Vec::with_capacity(n);
        for (j, h) in tr.recon.feats.iter().enumerate() {
            let g = &d_xr[j * c.patch..(j + 1) * c.patch];
            grads.out_proj.add_outer(g, h);
            let mut dh = vec![0.0; h.len()];
            p.out_proj.matvec_t_acc(g, &mut dh);
            d_recon_feats.push(dh);
        }
        let recon_cache = tr.recon.cache.as_ref().expect("trace keeps caches");
        let d_masked = p.recon_gru.backward(recon_cache, &d_recon_feats, &mut grads.recon_gru)?;

        // masking blend
        let weights = &result.mask_weights;
        let mut d_weights = vec![0.0; n];
        for j in 0..n {
            let w = weights[j];
            let dm = &d_masked[j];
            let mut d_proj = vec![0.0; c.hidden];
            let mut dw = 0.0;
            for i in 0..c.hidden {
                grads.mask_embedding[(i, j)] += w * dm[i];
                d_proj[i] = (1.0 - w) * dm[i];
                dw += dm[i] * (p.mask_embedding[(i, j)] - tr.projected[j][i]);
            }
            grads.mask_proj.add_outer(&d_proj, &tr.x_patches.column(j));
            d_weights[j] = dw;
        }

        // first-stage heads
        let mut d_a = half;
        if tr.soft {
            match c.granularity {
                Granularity::Patch => {
                    for (a, w) in d_a.iter_mut().zip(&d_weights) {
                        *a += w;
                    }
                }
                Granularity::Step => {
                    let scale = 1.0 / c.patch as f64;
                    for (i, a) in d_a.iter_mut().enumerate() {
                        *a += d_weights[i / c.patch] * scale;
                    }
                }
                Granularity::Window => d_a[0] += d_weights.iter().sum::<f64>(),
            }
        }
        let (d_t, d_f) = self.heads(false).backward(
            &tr.heads,
            &d_a,
            &mut grads.time_head,
            &mut grads.freq_head,
            grads.gate.as_mut(),
        );
        add_into(&mut d_time_feats, &d_t, 1.0);
        add_into(&mut d_freq_feats, &d_f, 1.0);

        encode_backward(
            &p.time_proj,
            &p.time_gru,
            &tr.time,
            &tr.x_patches,
            &d_time_feats,
            &mut grads.time_proj,
            &mut grads.time_gru,
            false,
        )?;
        encode_backward(
            &p.freq_proj,
            &p.freq_gru,
            &tr.freq,
            &tr.f_patches,
            &d_freq_feats,
            &mut grads.freq_proj,
            &mut grads.freq_gru,
            false,
        )?;
        Ok(())
    }
}

#[cfg(test)]
mod tests;
