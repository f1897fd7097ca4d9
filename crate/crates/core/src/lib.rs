pub mod dsp;
pub mod error;
pub mod estimation;
pub mod gaussian;
pub mod harness;
pub mod parallel;
pub mod rng;
pub mod rx;
pub mod security;
pub mod tx;
pub mod waveform;

pub use error::{Error, Result};
