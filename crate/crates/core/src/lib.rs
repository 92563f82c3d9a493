//! Width-scaling laboratory for AdamW weight decay.
//!
//! Simulates the optimizer-governed steady state of linear sublayers under
//! AdamW, measures sublayer gains and singular-value spectra across widths,
//! and plans per-class hyperparameters where matrix-like parameters get
//! `η ∝ 1/d` and `λ ∝ √d`.

pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod ffn;
pub mod linalg;
pub mod optim;
pub mod scaling;

pub use error::{Error, Result};
