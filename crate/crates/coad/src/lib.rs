//! File formats, pipeline orchestration and the `coad` command line on top
//! of [`coad_core`].

pub mod cli;
pub mod error;
pub mod io;
pub mod run;

pub use error::{Failure, Outcome};
