//! Dense linear algebra: matrices, seeded Gaussian sampling, norms,
//! singular-value spectra and log-log power-law fits. All `f64`.

mod fit;
mod matrix;
mod rng;
mod spectrum;

pub use fit::{fit_power_law, PowerLawFit};
pub use matrix::Matrix;
pub(crate) use matrix::{gemm, Trans};
pub(crate) use rng::fill_normal;
pub use rng::{derive_seed, gaussian_matrix, rng_from_seed, Rng};
pub use spectrum::{operator_norm, rms_norm, singular_spectrum, Spectrum, SUBSPACE_TOL};
