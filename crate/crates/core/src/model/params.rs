use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use super::config::{CoadConfig, Fusion};
use crate::error::{Error, Result};
use crate::numerics::init::uniform_init;
use crate::numerics::{GruStack, Matrix};

/// Separate encoders for the residual stage when weights are not shared.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualEncoders {
    pub time_proj: Matrix,
    pub freq_proj: Matrix,
    pub time_gru: GruStack,
    pub freq_gru: GruStack,
}

/// Every learnable tensor of the detector. Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct CoadParams {
    /// `W_m`, `H × P`: patch embedding fed to reconstruction.
    pub mask_proj: Matrix,
    /// `W_t^p`, `H × P`.
    pub time_proj: Matrix,
    /// `W_f^p`, `H × 2KP`.
    pub freq_proj: Matrix,
    pub time_gru: GruStack,
    pub freq_gru: GruStack,
    pub recon_gru: GruStack,
    /// `W_t`, `w × D` where `w` is the head width.
    pub time_head: Matrix,
    /// `W_f`.
    pub freq_head: Matrix,
    /// `W_r`, shared by both residual branches.
    pub residual_head: Matrix,
    /// `W_o`, `P × D`.
    pub out_proj: Matrix,
    /// `E_mask`, `H × N`.
    pub mask_embedding: Matrix,
    /// `D × 2D`, only for gated feature fusion.
    pub gate: Option<Matrix>,
    pub residual: Option<ResidualEncoders>,
    /// Patch-weight cut-off for hard masking. Not trained by gradient.
    pub hard_threshold: f64,
}

impl CoadParams {
    pub fn zeros(config: &CoadConfig) -> Self {
        let h = config.hidden;
        let p = config.patch;
        let d = config.feature_dim();
        let w = config.head_width();
        let spec_in = 2 * config.bins * p;
        let stack = |input| GruStack::zeros(input, h, config.layers, config.bidirectional);
        Self {
            mask_proj: Matrix::zeros(h, p),
            time_proj: Matrix::zeros(h, p),
            freq_proj: Matrix::zeros(h, spec_in),
            time_gru: stack(h),
            freq_gru: stack(h),
            recon_gru: stack(h),
            time_head: Matrix::zeros(w, d),
            freq_head: Matrix::zeros(w, d),
            residual_head: Matrix::zeros(w, d),
            out_proj: Matrix::zeros(p, d),
            mask_embedding: Matrix::zeros(h, config.patches()),
            gate: (config.fusion == Fusion::FeatGate).then(|| Matrix::zeros(d, 2 * d)),
            residual: (!config.share_encoders).then(|| ResidualEncoders {
                time_proj: Matrix::zeros(h, p),
                freq_proj: Matrix::zeros(h, spec_in),
                time_gru: stack(h),
                freq_gru: stack(h),
            }),
            hard_threshold: 0.5,
        }
    }

    /// Uniform `±1/√fan_in` weights, zero GRU biases.
    pub fn init<R: Rng + ?Sized>(config: &CoadConfig, rng: &mut R) -> Self {
        let mut params = Self::zeros(config);
        params.visit_mut(&mut |name, m| uniform_init(&name, m, rng));
        params
    }

    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        out.visit_mut(&mut |_, m| m.fill(0.0));
        out.hard_threshold = 0.0;
        out
    }

    /// Visits every trainable tensor in a fixed order with a stable name.
    pub fn visit<'a>(&'a self, f: &mut dyn FnMut(String, &'a Matrix)) {
        f("w_m".into(), &self.mask_proj);
        f("w_tp".into(), &self.time_proj);
        f("w_fp".into(), &self.freq_proj);
        self.time_gru.visit("gru_t", f);
        self.freq_gru.visit("gru_f", f);
        self.recon_gru.visit("gru_r", f);
        f("w_t".into(), &self.time_head);
        f("w_f".into(), &self.freq_head);
        f("w_r".into(), &self.residual_head);
        f("w_o".into(), &self.out_proj);
        f("e_mask".into(), &self.mask_embedding);
        if let Some(g) = &self.gate {
            f("w_g".into(), g);
        }
        if let Some(r) = &self.residual {
            f("res.w_tp".into(), &r.time_proj);
            f("res.w_fp".into(), &r.freq_proj);
            r.time_gru.visit("res.gru_t", f);
            r.freq_gru.visit("res.gru_f", f);
        }
    }

    pub fn visit_mut<'a>(&'a mut self, f: &mut dyn FnMut(String, &'a mut Matrix)) {
        f("w_m".into(), &mut self.mask_proj);
        f("w_tp".into(), &mut self.time_proj);
        f("w_fp".into(), &mut self.freq_proj);
        self.time_gru.visit_mut("gru_t", f);
        self.freq_gru.visit_mut("gru_f", f);
        self.recon_gru.visit_mut("gru_r", f);
        f("w_t".into(), &mut self.time_head);
        f("w_f".into(), &mut self.freq_head);
        f("w_r".into(), &mut self.residual_head);
        f("w_o".into(), &mut self.out_proj);
        f("e_mask".into(), &mut self.mask_embedding);
        if let Some(g) = &mut self.gate {
            f("w_g".into(), g);
        }
        if let Some(r) = &mut self.residual {
            f("res.w_tp".into(), &mut r.time_proj);
            f("res.w_fp".into(), &mut r.freq_proj);
            r.time_gru.visit_mut("res.gru_t", f);
            r.freq_gru.visit_mut("res.gru_f", f);
        }
    }

    pub fn tensors(&self) -> Vec<(String, &Matrix)> {
        let mut out = Vec::new();
        self.visit(&mut |name, m| out.push((name, m)));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        let mut out = Vec::new();
        self.visit_mut(&mut |name, m| out.push((name, m)));
        out
    }

    /// Total number of scalar parameters.
    pub fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, m| n += m.len());
        n
    }

    pub fn global_norm(&self) -> f64 {
        let mut s = 0.0;
        self.visit(&mut |_, m| s += m.sum_squares());
        libm::sqrt(s)
    }

    pub fn scale(&mut self, factor: f64) {
        self.visit_mut(&mut |_, m| m.scale(factor));
    }

    pub fn is_finite(&self) -> bool {
        let mut ok = true;
        self.visit(&mut |_, m| ok &= m.is_finite());
        ok
    }

    pub fn add_assign(&mut self, other: &CoadParams) -> Result<()> {
        let theirs = other.tensors();
        let mine = self.tensors_mut();
        if mine.len() != theirs.len() {
            return Err(Error::Config("parameter sets differ in layout".into()));
        }
        for ((_, a), (_, b)) in mine.into_iter().zip(theirs) {
            a.add_assign(b)?;
        }
        Ok(())
    }

    /// Fails unless names and shapes equal those implied by `config`.
    pub fn check_layout(&self, config: &CoadConfig) -> Result<()> {
        let expected = Self::zeros(config);
        let want = expected.tensors();
        let have = self.tensors();
        if want.len() != have.len() {
            return Err(Error::Config(format!(
                "expected {} tensors for this config, found {}",
                want.len(),
                have.len()
            )));
        }
        for ((wn, wm), (hn, hm)) in want.iter().zip(&have) {
            if wn != hn || wm.shape() != hm.shape() {
                return Err(Error::Config(format!(
                    "tensor {hn} {:?} does not match expected {wn} {:?}",
                    hm.shape(),
                    wm.shape()
                )));
            }
        }
        Ok(())
    }
}
