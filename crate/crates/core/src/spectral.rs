//! Sliding short-time Fourier transform (hop 1, centered frames) and
//! non-overlapping patching of time and spectral representations.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Analysis window applied to each frame before the DFT.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum StftWindow {
    #[default]
    Rectangular,
    /// Periodic Hann, `0.5 - 0.5 cos(2πn/M)`.
    Hann,
}

impl StftWindow {
    pub fn weights(self, frame_len: usize) -> Vec<f64> {
        match self {
            Self::Rectangular => vec![1.0; frame_len],
            Self::Hann => (0..frame_len)
                .map(|n| 0.5 - 0.5 * libm::cos(2.0 * PI * n as f64 / frame_len as f64))
                .collect(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Rectangular => "rectangular",
            Self::Hann => "hann",
        }
    }
}

impl fmt::Display for StftWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StftWindow {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rectangular" | "rect" | "boxcar" => Ok(Self::Rectangular),
            "hann" | "hanning" => Ok(Self::Hann),
            other => Err(Error::Config(alloc::format!("unknown STFT window `{other}`"))),
        }
    }
}

/// Precomputed DFT tables for `bins` lowest-frequency bins of `frame_len`
/// point frames. The window weights are folded into the tables.
#[derive(Debug, Clone, PartialEq)]
pub struct StftPlan {
    bins: usize,
    frame_len: usize,
    window: StftWindow,
    /// `w[n] cos(2πkn/M)`, row-major `bins × frame_len`.
    re: Vec<f64>,
    /// `-w[n] sin(2πkn/M)`.
    im: Vec<f64>,
}

impl StftPlan {
    pub fn new(bins: usize, frame_len: usize, window: StftWindow) -> Result<Self> {
        if frame_len < 2 || frame_len % 2 != 0 {
            return Err(Error::Config(alloc::format!("frame_len must be even and ≥ 2, got {frame_len}")));
        }
        if bins == 0 || bins > frame_len / 2 + 1 {
            return Err(Error::Config(alloc::format!(
                "bin count {bins} outside 1..={} for frame_len {frame_len}",
                frame_len / 2 + 1
            )));
        }
        let w = window.weights(frame_len);
        let mut re = Vec::with_capacity(bins * frame_len);
        let mut im = Vec::with_capacity(bins * frame_len);
        for k in 0..bins {
            for (n, wn) in w.iter().enumerate() {
                // Reduce kn mod M first so the angle stays small and exact
                // at multiples of π/2.
                let phase = 2.0 * PI * ((k * n) % frame_len) as f64 / frame_len as f64;
                let (s, c) = trig(phase, (k * n) % frame_len, frame_len);
                re.push(wn * c);
                im.push(-wn * s);
            }
        }
        Ok(Self {
            bins,
            frame_len,
            window,
            re,
            im,
        })
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    pub fn window(&self) -> StftWindow {
        self.window
    }

    pub fn channels(&self) -> usize {
        2 * self.bins
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len < self.frame_len {
            return Err(Error::Frame {
                frame_len: self.frame_len,
                len,
                bins: self.bins,
            });
        }
        Ok(())
    }

    /// Reflect-padded copy: `padded[t + n]` is sample `t + n - M/2`.
    fn pad(&self, x: &[f64]) -> Vec<f64> {
        let half = self.frame_len / 2;
        let len = x.len();
        (0..len + self.frame_len)
            .map(|i| x[reflect(i as isize - half as isize, len)])
            .collect()
    }

    /// `2K × T` spectrogram: real parts in rows `0..K`, imaginary parts in
    /// rows `K..2K`; column `t` is the frame centered on sample `t`.
    pub fn forward(&self, x: &[f64]) -> Result<Matrix> {
        self.check_len(x.len())?;
        let t_len = x.len();
        let m = self.frame_len;
        let padded = self.pad(x);
        let mut out = Matrix::zeros(2 * self.bins, t_len);
        for t in 0..t_len {
            let frame = &padded[t..t + m];
            for k in 0..self.bins {
                let row = k * m..(k + 1) * m;
                out[(k, t)] = crate::numerics::dot(&self.re[row.clone()], frame);
                out[(self.bins + k, t)] = crate::numerics::dot(&self.im[row], frame);
            }
        }
        Ok(out)
    }

    /// Transpose of [`forward`](Self::forward): maps a `2K × T` gradient back
    /// to the `T` input samples.
    pub fn adjoint(&self, grad: &Matrix) -> Result<Vec<f64>> {
        let t_len = grad.cols();
        if grad.rows() != 2 * self.bins {
            return Err(Error::Shape {
                op: "stft_adjoint",
                left: (2 * self.bins, t_len),
                right: grad.shape(),
            });
        }
        self.check_len(t_len)?;
        let m = self.frame_len;
        let mut padded = vec![0.0; t_len + m];
        for t in 0..t_len {
            let frame = &mut padded[t..t + m];
            for k in 0..self.bins {
                let gr = grad[(k, t)];
                let gi = grad[(self.bins + k, t)];
                if gr == 0.0 && gi == 0.0 {
                    continue;
                }
                let re = &self.re[k * m..(k + 1) * m];
                let im = &self.im[k * m..(k + 1) * m];
                for ((f, a), b) in frame.iter_mut().zip(re).zip(im) {
                    *f += gr * a + gi * b;
                }
            }
        }
        let half = m / 2;
        let mut out = vec![0.0; t_len];
        for (i, g) in padded.into_iter().enumerate() {
            out[reflect(i as isize - half as isize, t_len)] += g;
        }
        Ok(out)
    }
}

/// Sine and cosine of `2π·num/den`, exact at quarter turns.
fn trig(phase: f64, num: usize, den: usize) -> (f64, f64) {
    if (4 * num) % den == 0 {
        match 4 * num / den {
            0 => (0.0, 1.0),
            1 => (1.0, 0.0),
            2 => (0.0, -1.0),
            _ => (-1.0, 0.0),
        }
    } else {
        (libm::sin(phase), libm::cos(phase))
    }
}

/// Mirror index without repeating the edge sample (`-1 → 1`, `len → len-2`).
fn reflect(i: isize, len: usize) -> usize {
    let n = len as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let mut j = i.rem_euclid(period);
    if j >= n {
        j = period - j;
    }
    j as usize
}

/// Spectrogram with the default rectangular window.
pub fn stft(window: &[f64], bins: usize, frame_len: usize) -> Result<Matrix> {
    StftPlan::new(bins, frame_len, StftWindow::Rectangular)?.forward(window)
}

fn check_patch(len: usize, patch: usize) -> Result<()> {
    if patch == 0 || len % patch != 0 {
        return Err(Error::NotDivisible { len, patch });
    }
    Ok(())
}

/// Splits a window into `P × N` non-overlapping patches (one per column).
pub fn patch_time(window: &[f64], patch: usize) -> Result<Matrix> {
    check_patch(window.len(), patch)?;
    let n = window.len() / patch;
    let mut out = Matrix::zeros(patch, n);
    for (j, chunk) in window.chunks_exact(patch).enumerate() {
        for (i, &v) in chunk.iter().enumerate() {
            out[(i, j)] = v;
        }
    }
    Ok(out)
}

/// Inverse of [`patch_time`].
pub fn unpatch_time(patches: &Matrix) -> Vec<f64> {
    let mut out = Vec::with_capacity(patches.len());
    for j in 0..patches.cols() {
        out.extend(patches.column(j));
    }
    out
}

/// Column `j` holds spectrogram columns `[jP, (j+1)P)` stacked end to end.
pub fn patch_spectrogram(spec: &Matrix, patch: usize) -> Result<Matrix> {
    let (c, t_len) = spec.shape();
    check_patch(t_len, patch)?;
    let n = t_len / patch;
    let mut out = Matrix::zeros(c * patch, n);
    for j in 0..n {
        for p in 0..patch {
            for r in 0..c {
                out[(p * c + r, j)] = spec[(r, j * patch + p)];
            }
        }
    }
    Ok(out)
}

/// Inverse of [`patch_spectrogram`] for a spectrogram with `channels` rows.
pub fn unpatch_spectrogram(patches: &Matrix, channels: usize) -> Result<Matrix> {
    let (rows, n) = patches.shape();
    check_patch(rows, channels.max(1))?;
    let patch = rows / channels;
    let mut out = Matrix::zeros(channels, patch * n);
    for j in 0..n {
        for p in 0..patch {
            for r in 0..channels {
                out[(r, j * patch + p)] = patches[(p * channels + r, j)];
            }
        }
    }
    Ok(out)
}
