#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod error;
pub mod augment;
pub mod checkpoint;
pub mod data;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod score;
pub mod spectral;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
