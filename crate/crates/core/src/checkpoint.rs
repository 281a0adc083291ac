//! Little-endian binary model format.
//!
//! Layout: magic `COAD`, u32 version, config block, u32 tensor count, then per
//! tensor a u32-prefixed UTF-8 name, u32 rows, u32 cols and f64 data in
//! row-major order. Non-trainable state is stored as `buffer.*` tensors.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::{CoadConfig, CoadModel, CoadParams, Fusion, Granularity, Masking, Scoring};
use crate::numerics::Matrix;
use crate::spectral::StftWindow;

pub const MAGIC: &[u8; 4] = b"COAD";
pub const VERSION: u32 = 1;
const HARD_THRESHOLD: &str = "buffer.hard_threshold";

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: usize) -> Result<()> {
        let v = u32::try_from(v).map_err(|_| Error::Checkpoint(format!("{v} does not fit in u32")))?;
        self.0.extend_from_slice(&v.to_le_bytes());
        Ok(())
    }

    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }

    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn tensor(&mut self, name: &str, m: &Matrix) -> Result<()> {
        self.u32(name.len())?;
        self.0.extend_from_slice(name.as_bytes());
        self.u32(m.rows())?;
        self.u32(m.cols())?;
        for &v in m.as_slice() {
            self.f64(v);
        }
        Ok(())
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn bool(&mut self) -> Result<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(Error::Checkpoint(format!("bad flag byte {b}"))),
        }
    }

    fn f64(&mut self) -> Result<f64> {
        let b = self.take(8)?;
        let mut a = [0u8; 8];
        a.copy_from_slice(b);
        Ok(f64::from_le_bytes(a))
    }

    fn tensor(&mut self) -> Result<(String, Matrix)> {
        let len = self.u32()?;
        let name = core::str::from_utf8(self.take(len)?)
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?
            .into();
        let rows = self.u32()?;
        let cols = self.u32()?;
        let count = rows
            .checked_mul(cols)
            .filter(|c| c.checked_mul(8).is_some_and(|b| b <= self.buf.len() - self.pos))
            .ok_or_else(|| Error::Checkpoint(format!("tensor `{name}` larger than file")))?;
        let data = (0..count).map(|_| self.f64()).collect::<Result<Vec<f64>>>()?;
        Ok((name, Matrix::from_vec(rows, cols, data)?))
    }
}

fn window_code(w: StftWindow) -> u8 {
    match w {
        StftWindow::Rectangular => 0,
        StftWindow::Hann => 1,
    }
}

pub fn encode(model: &CoadModel) -> Result<Vec<u8>> {
    let c = &model.config;
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.0.extend_from_slice(&VERSION.to_le_bytes());
    for v in [c.window, c.patch, c.hidden, c.bins, c.layers, c.frame_len] {
        w.u32(v)?;
    }
    w.f64(c.lambda);
    w.f64(c.mask_ratio);
    w.u8(window_code(c.stft_window));
    w.u8(c.masking.code());
    w.u8(c.granularity.code());
    w.u8(c.fusion.code());
    w.u8(c.scoring.code());
    w.u8(u8::from(c.bidirectional));
    w.u8(u8::from(c.share_encoders));
    let tensors = model.params.tensors();
    w.u32(tensors.len() + 1)?;
    for (name, m) in &tensors {
        w.tensor(name, m)?;
    }
    w.tensor(HARD_THRESHOLD, &Matrix::from_vec(1, 1, alloc::vec![model.params.hard_threshold])?)?;
    Ok(w.0)
}

pub fn decode(bytes: &[u8]) -> Result<CoadModel> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Checkpoint("not a model file (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != VERSION as usize {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let [window, patch, hidden, bins, layers, frame_len] =
        [r.u32()?, r.u32()?, r.u32()?, r.u32()?, r.u32()?, r.u32()?];
    let lambda = r.f64()?;
    let mask_ratio = r.f64()?;
    let stft_window = match r.u8()? {
        0 => StftWindow::Rectangular,
        1 => StftWindow::Hann,
        b => return Err(Error::Checkpoint(format!("bad STFT window code {b}"))),
    };
    let config = CoadConfig {
        window,
        patch,
        hidden,
        bins,
        layers,
        lambda,
        frame_len,
        stft_window,
        masking: Masking::from_code(r.u8()?)?,
        granularity: Granularity::from_code(r.u8()?)?,
        fusion: Fusion::from_code(r.u8()?)?,
        scoring: Scoring::from_code(r.u8()?)?,
        bidirectional: r.bool()?,
        share_encoders: r.bool()?,
        mask_ratio,
    };
    config.validate()?;
    let mut params = CoadParams::zeros(&config);
    let expected = params.tensors().len() + 1;
    let count = r.u32()?;
    if count != expected {
        return Err(Error::Checkpoint(format!("expected {expected} tensors, found {count}")));
    }
    let mut failure = None;
    let mut read = Vec::with_capacity(count);
    for _ in 0..count {
        read.push(r.tensor()?);
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    let mut it = read.into_iter();
    params.visit_mut(&mut |name, m| {
        if failure.is_some() {
            return;
        }
        match it.next() {
            Some((n, t)) if n == name && t.shape() == m.shape() => *m = t,
            Some((n, t)) => {
                failure = Some(format!(
                    "tensor `{n}` {:?} where `{name}` {:?} was expected",
                    t.shape(),
                    m.shape()
                ))
            }
            None => failure = Some(format!("missing tensor `{name}`")),
        }
    });
    if let Some(f) = failure {
        return Err(Error::Checkpoint(f));
    }
    match it.next() {
        Some((n, t)) if n == HARD_THRESHOLD && t.shape() == (1, 1) => params.hard_threshold = t[(0, 0)],
        _ => return Err(Error::Checkpoint(format!("missing `{HARD_THRESHOLD}`"))),
    }
    CoadModel::new(config, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(config: CoadConfig) -> CoadModel {
        CoadModel::init(config, &mut ChaCha8Rng::seed_from_u64(4)).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let variants = [
            CoadConfig::from_period(8),
            CoadConfig {
                fusion: Fusion::FeatGate,
                share_encoders: false,
                bidirectional: true,
                masking: Masking::Hard,
                stft_window: StftWindow::Hann,
                scoring: Scoring::ClsOnly,
                granularity: Granularity::Step,
                ..CoadConfig::from_period(8)
            },
        ];
        for cfg in variants {
            let mut m = model(cfg);
            m.params.hard_threshold = 0.123_456_789;
            let bytes = encode(&m).unwrap();
            let back = decode(&bytes).unwrap();
            assert_eq!(back.config, m.config);
            assert_eq!(back.params, m.params);
            assert_eq!(encode(&back).unwrap(), bytes);
        }
    }

    #[test]
    fn corrupt_files_rejected() {
        let bytes = encode(&model(CoadConfig::from_period(8))).unwrap();
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode(b"NOPE").is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode(&extra).is_err());
        let mut version = bytes.clone();
        version[4] = 9;
        assert!(decode(&version).is_err());
        let mut name = bytes.clone();
        // first tensor name starts after header, config and count
        let off = 4 + 4 + 6 * 4 + 16 + 7 + 4 + 4;
        name[off] = b'x';
        assert!(decode(&name).is_err());
    }
}
