//! Seeded sampling.
//!
//! Every stochastic operation takes an explicit `u64` seed and draws from
//! `ChaCha8Rng` (a counter-based stream cipher generator). Normal variates
//! come from `rand_distr`'s ziggurat sampler, so a given seed yields the same
//! matrix on every run of the same binary. Independent sub-streams are keyed
//! with [`derive_seed`], a SplitMix64 mix of the parent seed and a path of
//! tags.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::Matrix;
use crate::error::{Error, Result};

pub type Rng = ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for the sub-stream named by `path`. Pure function of its inputs.
pub fn derive_seed(parent: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(parent), |acc, &tag| {
        splitmix64(acc ^ splitmix64(tag))
    })
}

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Fills `out` with i.i.d. `N(0, std^2)` draws.
pub(crate) fn fill_normal(rng: &mut Rng, std: f64, out: &mut [f64]) {
    for v in out.iter_mut() {
        let z: f64 = StandardNormal.sample(rng);
        *v = std * z;
    }
}

/// `rows x cols` matrix of i.i.d. `N(0, std^2)` entries, drawn in row-major
/// order from `ChaCha8Rng::seed_from_u64(seed)`.
pub fn gaussian_matrix(seed: u64, rows: usize, cols: usize, std: f64) -> Result<Matrix> {
    if !(std.is_finite() && std > 0.0) {
        return Err(Error::invalid(format!(
            "gaussian std must be positive and finite, got {std}"
        )));
    }
    let mut m = Matrix::from_vec(rows, cols, vec![0.0; rows * cols])?;
    fill_normal(&mut rng_from_seed(seed), std, m.as_mut_slice());
    Ok(m)
}
