use alloc::format;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::spectral::StftWindow;

pub const DEFAULT_HIDDEN: usize = 24;
pub const DEFAULT_LAYERS: usize = 3;
pub const DEFAULT_PATCH: usize = 8;
pub const DEFAULT_BINS: usize = 4;
pub const DEFAULT_LAMBDA: f64 = 10.0;
pub const DEFAULT_MASK_RATIO: f64 = 0.25;
/// Window length in dominant periods.
pub const PERIODS_PER_WINDOW: usize = 4;
pub const MIN_FRAME_LEN: usize = 8;
pub const MAX_FRAME_LEN: usize = 64;

macro_rules! named_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal $(| $alias:literal)*),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
        #[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
        #[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
        pub enum $name {
            #[default]
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn name(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }

            pub(crate) fn code(self) -> u8 {
                Self::ALL.iter().position(|v| *v == self).unwrap_or(0) as u8
            }

            pub(crate) fn from_code(code: u8) -> Result<Self> {
                Self::ALL
                    .get(code as usize)
                    .copied()
                    .ok_or_else(|| Error::Checkpoint(format!("bad {} code {code}", stringify!($name))))
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                let s = s.trim().to_ascii_lowercase().replace('-', "_");
                match s.as_str() {
                    $($text $(| $alias)* => Ok($name::$variant),)+
                    other => Err(Error::Config(format!(
                        "unknown {} `{other}`",
                        stringify!($name).to_ascii_lowercase()
                    ))),
                }
            }
        }
    };
}

named_enum!(
    /// How classifier output selects the patches hidden from the
    /// reconstruction network.
    Masking {
        Soft => "soft",
        Hard => "hard",
        Random => "random",
        Grating => "grating",
    }
);

named_enum!(
    /// Resolution of the classifier heads.
    Granularity {
        Patch => "patch",
        Step => "step",
        Window => "window",
    }
);

named_enum!(
    /// How time and frequency evidence are combined.
    Fusion {
        Max => "max",
        Mean => "mean",
        FeatAdd => "feat_add",
        FeatGate => "feat_gate",
    }
);

named_enum!(
    /// Which terms make up the per-point anomaly score.
    Scoring {
        Joint => "joint",
        ReconOnly => "recon_only",
        ClsOnly => "cls_only" | "classification_only",
    }
);

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CoadConfig {
    /// Window length `T`.
    pub window: usize,
    /// Patch length `P`.
    pub patch: usize,
    /// GRU hidden size `H`.
    pub hidden: usize,
    /// Kept STFT bins `K`.
    pub bins: usize,
    pub layers: usize,
    /// Weight of the reconstruction term in the training loss.
    pub lambda: f64,
    pub frame_len: usize,
    pub stft_window: StftWindow,
    pub masking: Masking,
    pub granularity: Granularity,
    pub fusion: Fusion,
    pub scoring: Scoring,
    pub bidirectional: bool,
    /// Residual stage reuses the branch encoders.
    pub share_encoders: bool,
    /// Bernoulli rate for random masking.
    pub mask_ratio: f64,
}

impl CoadConfig {
    /// Defaults with `T` and the STFT frame tied to the dominant period.
    pub fn from_period(period: usize) -> Self {
        let patch = DEFAULT_PATCH;
        Self {
            window: window_for_period(period, patch),
            patch,
            hidden: DEFAULT_HIDDEN,
            bins: DEFAULT_BINS,
            layers: DEFAULT_LAYERS,
            lambda: DEFAULT_LAMBDA,
            frame_len: frame_for_period(period),
            stft_window: StftWindow::default(),
            masking: Masking::Soft,
            granularity: Granularity::Patch,
            fusion: Fusion::Max,
            scoring: Scoring::Joint,
            bidirectional: false,
            share_encoders: true,
            mask_ratio: DEFAULT_MASK_RATIO,
        }
    }

    /// Number of patches `N`.
    pub fn patches(&self) -> usize {
        self.window / self.patch.max(1)
    }

    /// Width of encoder features (`2H` when bidirectional).
    pub fn feature_dim(&self) -> usize {
        self.hidden * if self.bidirectional { 2 } else { 1 }
    }

    /// Rows of each classifier head.
    pub fn head_width(&self) -> usize {
        match self.granularity {
            Granularity::Step => self.patch,
            _ => 1,
        }
    }

    /// Length of every probability vector the model emits.
    pub fn prob_len(&self) -> usize {
        match self.granularity {
            Granularity::Patch => self.patches(),
            Granularity::Step => self.window,
            Granularity::Window => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: alloc::string::String| Err(Error::Config(msg));
        if self.patch == 0 || self.window == 0 || self.window % self.patch != 0 {
            return Err(Error::NotDivisible {
                len: self.window,
                patch: self.patch,
            });
        }
        if self.hidden == 0 || self.layers == 0 {
            return bad(format!("hidden ({}) and layers ({}) must be ≥ 1", self.hidden, self.layers));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be finite and ≥ 0, got {}", self.lambda));
        }
        if self.frame_len > self.window {
            return bad(format!("frame_len {} exceeds window {}", self.frame_len, self.window));
        }
        if self.frame_len % 2 != 0 || self.frame_len < 2 || self.bins == 0 || self.bins > self.frame_len / 2 + 1 {
            return bad(format!("invalid STFT shape: frame_len {}, bins {}", self.frame_len, self.bins));
        }
        if !(0.0..=1.0).contains(&self.mask_ratio) {
            return bad(format!("mask_ratio must lie in [0, 1], got {}", self.mask_ratio));
        }
        Ok(())
    }
}

/// `4·period` rounded up to a multiple of `patch`.
pub fn window_for_period(period: usize, patch: usize) -> usize {
    let raw = PERIODS_PER_WINDOW * period.max(2);
    raw.div_ceil(patch) * patch
}

/// Period rounded to the nearest even number (halves round up), clamped to
/// `[MIN_FRAME_LEN, MAX_FRAME_LEN]`.
pub fn frame_for_period(period: usize) -> usize {
    (2 * period.div_ceil(2)).clamp(MIN_FRAME_LEN, MAX_FRAME_LEN)
}
