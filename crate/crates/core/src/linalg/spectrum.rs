//! Norms and singular-value spectra.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::matrix::{gemm, Trans};
use super::rng::{fill_normal, rng_from_seed};
use super::Matrix;
use crate::error::{Error, Result};

/// Relative change of the leading Ritz values at which subspace iteration stops.
pub const SUBSPACE_TOL: f64 = 1e-10;

const SUBSPACE_SEED: u64 = 0x5eed_5b5b;
const EIGEN_MAX_SWEEPS: usize = 10_000;

/// `‖v‖₂ / √n`.
pub fn rms_norm(v: &[f64]) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::EmptyInput("rms_norm"));
    }
    let ss: f64 = v.iter().map(|x| x * x).sum();
    Ok((ss / v.len() as f64).sqrt())
}

impl Matrix {
    /// RMS norm of the flattened matrix, i.e. `‖W‖_F / √(rows·cols)`.
    pub fn rms_norm(&self) -> f64 {
        (self.sum_of_squares() / self.len() as f64).sqrt()
    }
}

/// `sup_x ‖Wx‖_rms / ‖x‖_rms = σ_max(W) · √(cols/rows)`.
pub fn operator_norm(w: &Matrix) -> Result<f64> {
    let top = singular_spectrum(w, Some(1))?;
    Ok(top.values[0] * (w.cols() as f64 / w.rows() as f64).sqrt())
}

/// Singular values sorted in non-increasing order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    values: Vec<f64>,
}

impl Spectrum {
    /// Sorts `values` descending. Rejects negative or non-finite entries.
    pub fn from_values(mut values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid(
                "singular values must be finite and non-negative",
            ));
        }
        values.sort_by(|a, b| b.total_cmp(a));
        Ok(Spectrum { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn top(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    pub fn truncated(&self, k: usize) -> Spectrum {
        Spectrum {
            values: self.values[..k.min(self.values.len())].to_vec(),
        }
    }

    pub fn sum_of_squares(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }
}

/// Top-`k` singular values of `w` (all `min(rows, cols)` of them when `k` is
/// `None`).
///
/// Full spectra come from a dense symmetric eigendecomposition of the
/// smaller Gram matrix. Short top-`k` requests on large matrices use
/// orthogonal subspace iteration on the Gram matrix with Rayleigh-Ritz
/// extraction; it stops when every leading Ritz value changes by at most
/// [`SUBSPACE_TOL`] relative, and fails with [`Error::NoConvergence`] after
/// `10 · min(rows, cols)` iterations.
pub fn singular_spectrum(w: &Matrix, k: Option<usize>) -> Result<Spectrum> {
    let n = w.rows().min(w.cols());
    let k = match k {
        None => return dense_spectrum(w),
        Some(0) => return Err(Error::invalid("spectrum k must be at least 1")),
        Some(k) if k > n => {
            return Err(Error::invalid(format!(
                "spectrum k = {k} exceeds min(rows, cols) = {n}"
            )))
        }
        Some(k) => k,
    };
    let block = (2 * k + 8).min(n);
    if 4 * block >= n {
        return Ok(dense_spectrum(w)?.truncated(k));
    }
    subspace_spectrum(w, k, block, 10 * n)
}

fn small_gram(w: &Matrix) -> Matrix {
    if w.cols() <= w.rows() {
        w.gram()
    } else {
        w.outer_gram()
    }
}

fn symmetric_eigenvalues(a: &Matrix, op: &'static str) -> Result<Vec<f64>> {
    let n = a.rows();
    let dm = DMatrix::from_row_slice(n, n, a.as_slice());
    let eig = SymmetricEigen::try_new(dm, f64::EPSILON, EIGEN_MAX_SWEEPS).ok_or(
        Error::NoConvergence {
            op,
            iterations: EIGEN_MAX_SWEEPS,
        },
    )?;
    Ok(eig.eigenvalues.iter().copied().collect())
}

fn eigen_sorted(t: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    let n = t.rows();
    let dm = DMatrix::from_row_slice(n, n, t.as_slice());
    let eig = SymmetricEigen::try_new(dm, f64::EPSILON, EIGEN_MAX_SWEEPS).ok_or(
        Error::NoConvergence {
            op: "ritz eigensolve",
            iterations: EIGEN_MAX_SWEEPS,
        },
    )?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    // rows of the returned matrix are the eigenvectors, descending
    let mut vecs = Matrix::zeros(n, n);
    for (r, &i) in order.iter().enumerate() {
        for c in 0..n {
            vecs.as_mut_slice()[r * n + c] = eig.eigenvectors[(c, i)];
        }
    }
    Ok((values, vecs))
}

fn dense_spectrum(w: &Matrix) -> Result<Spectrum> {
    let eigs = symmetric_eigenvalues(&small_gram(w), "dense spectrum")?;
    Spectrum::from_values(eigs.into_iter().map(|e| e.max(0.0).sqrt()).collect())
}

/// Orthonormalizes the rows of `basis` in place (modified Gram-Schmidt, two
/// passes). Rows that collapse numerically are replaced by fresh random
/// directions, so the result always has full row rank.
fn orthonormalize_rows(basis: &mut Matrix, refill_seed: u64) {
    let (b, n) = basis.shape();
    let mut rng = rng_from_seed(refill_seed);
    let data = basis.as_mut_slice();
    for i in 0..b {
        let orig_norm = data[i * n..(i + 1) * n]
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();
        let mut attempts = 0;
        loop {
            for _ in 0..2 {
                for j in 0..i {
                    let (head, tail) = data.split_at_mut(i * n);
                    let qj = &head[j * n..(j + 1) * n];
                    let vi = &mut tail[..n];
                    let dot: f64 = qj.iter().zip(vi.iter()).map(|(a, b)| a * b).sum();
                    for (x, q) in vi.iter_mut().zip(qj) {
                        *x -= dot * q;
                    }
                }
            }
            let row = &mut data[i * n..(i + 1) * n];
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 1e-10 * orig_norm.max(f64::MIN_POSITIVE) && norm > 0.0 && attempts < 8 {
                row.iter_mut().for_each(|v| *v /= norm);
                break;
            }
            if attempts >= 8 {
                // numerically impossible for b < n; keep the row finite
                row.iter_mut().for_each(|v| *v = 0.0);
                break;
            }
            fill_normal(&mut rng, 1.0, row);
            attempts += 1;
        }
    }
}

fn subspace_spectrum(w: &Matrix, k: usize, block: usize, budget: usize) -> Result<Spectrum> {
    let a = small_gram(w);
    let n = a.rows();
    if a.as_slice().iter().all(|&v| v == 0.0) {
        return Spectrum::from_values(vec![0.0; k]);
    }

    // rows of `q` span the current subspace
    let mut q = Matrix::zeros(block, n);
    fill_normal(&mut rng_from_seed(SUBSPACE_SEED), 1.0, q.as_mut_slice());
    orthonormalize_rows(&mut q, SUBSPACE_SEED + 1);

    let mut z = Matrix::zeros(block, n);
    let mut t = Matrix::zeros(block, block);
    let mut prev: Option<Vec<f64>> = None;
    for iter in 0..budget {
        // Zᵀ = Qᵀ A (A symmetric)
        gemm(1.0, &q, Trans::No, &a, Trans::No, 0.0, &mut z);
        gemm(1.0, &q, Trans::No, &z, Trans::Yes, 0.0, &mut t);
        let (ritz, vecs) = eigen_sorted(&t)?;
        let lead = ritz[0].abs();
        if let Some(p) = &prev {
            let converged = (0..k)
                .all(|i| (ritz[i] - p[i]).abs() <= SUBSPACE_TOL * ritz[i].abs() + 1e-15 * lead);
            if converged {
                return Spectrum::from_values(
                    ritz[..k].iter().map(|e| e.max(0.0).sqrt()).collect(),
                );
            }
        }
        prev = Some(ritz);
        // rotate onto Ritz directions of A·Q, then re-orthonormalize
        gemm(1.0, &vecs, Trans::No, &z, Trans::No, 0.0, &mut q);
        orthonormalize_rows(&mut q, SUBSPACE_SEED + 2 + iter as u64);
    }
    Err(Error::NoConvergence {
        op: "subspace iteration",
        iterations: budget,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::gaussian_matrix;

    /// Cyclic Jacobi eigenvalue routine, kept independent of the library path.
    #[allow(clippy::needless_range_loop)]
    fn jacobi_eigenvalues(a: &Matrix) -> Vec<f64> {
        let n = a.rows();
        let mut m: Vec<Vec<f64>> = (0..n).map(|r| a.row(r).to_vec()).collect();
        for _sweep in 0..100 {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| m[i][j] * m[i][j])
                .sum();
            if off < 1e-30 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    if m[p][q].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let mkp = m[k][p];
                        let mkq = m[k][q];
                        m[k][p] = c * mkp - s * mkq;
                        m[k][q] = s * mkp + c * mkq;
                    }
                    for k in 0..n {
                        let mpk = m[p][k];
                        let mqk = m[q][k];
                        m[p][k] = c * mpk - s * mqk;
                        m[q][k] = s * mpk + c * mqk;
                    }
                }
            }
        }
        let mut e: Vec<f64> = (0..n).map(|i| m[i][i]).collect();
        e.sort_by(|a, b| b.total_cmp(a));
        e
    }

    fn assert_rel(a: f64, b: f64, tol: f64) {
        assert!(
            (a - b).abs() <= tol * b.abs().max(1e-300),
            "{a} vs {b} (rel tol {tol})"
        );
    }

    #[test]
    fn rms_norm_examples() {
        assert!((rms_norm(&[3.0, 4.0]).unwrap() - 5.0 / 2f64.sqrt()).abs() < 1e-15);
        for n in [1, 2, 17] {
            assert_eq!(rms_norm(&vec![-2.5; n]).unwrap(), 2.5);
        }
        assert!(matches!(rms_norm(&[]), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn matrix_rms_matches_sum_of_squares_oracle() {
        let w = gaussian_matrix(7, 8, 8, 1.0).unwrap();
        let mut ss = 0.0;
        for r in 0..8 {
            for c in 0..8 {
                ss += w.get(r, c) * w.get(r, c);
            }
        }
        assert_rel(w.rms_norm(), ss.sqrt() / 8.0, 1e-14);
        assert_rel(rms_norm(w.as_slice()).unwrap(), w.rms_norm(), 1e-15);
    }

    #[test]
    fn operator_norm_examples() {
        for d in [1, 3, 50, 300] {
            assert_rel(operator_norm(&Matrix::identity(d)).unwrap(), 1.0, 1e-12);
        }
        assert_rel(
            operator_norm(&Matrix::from_diag(&[2.0, 1.0, 1.0])).unwrap(),
            2.0,
            1e-12,
        );
        let w = gaussian_matrix(3, 5, 3, 1.0).unwrap();
        let dm = DMatrix::from_row_slice(5, 3, w.as_slice());
        let smax = dm.singular_values().max();
        assert_rel(
            operator_norm(&w).unwrap(),
            smax * (3.0f64 / 5.0).sqrt(),
            1e-10,
        );
    }

    #[test]
    fn spectrum_of_diagonal_and_scaled_identity() {
        let s = singular_spectrum(&Matrix::from_diag(&[2.0, 3.0, 1.0]), None).unwrap();
        for (got, want) in s.values().iter().zip([3.0, 2.0, 1.0]) {
            assert_rel(*got, want, 1e-12);
        }
        let s = singular_spectrum(&Matrix::from_diag(&[0.7; 200]), Some(5)).unwrap();
        assert_eq!(s.len(), 5);
        s.values().iter().for_each(|v| assert_rel(*v, 0.7, 1e-10));
    }

    #[test]
    fn gaussian_16x16_matches_jacobi_oracle() {
        let w = gaussian_matrix(11, 16, 16, 1.0).unwrap();
        let oracle: Vec<f64> = jacobi_eigenvalues(&w.gram())
            .into_iter()
            .map(|e| e.max(0.0).sqrt())
            .collect();
        let s = singular_spectrum(&w, None).unwrap();
        for (a, b) in s.values().iter().zip(&oracle) {
            assert_rel(*a, *b, 1e-8);
        }
    }

    #[test]
    fn subspace_top_k_matches_reference_svd() {
        for (seed, rows, cols, k) in [(1, 300, 200, 8), (2, 150, 400, 3), (3, 256, 256, 1)] {
            let w = gaussian_matrix(seed, rows, cols, 0.5).unwrap();
            let dm = DMatrix::from_row_slice(rows, cols, w.as_slice());
            let mut reference: Vec<f64> = dm.singular_values().iter().copied().collect();
            reference.sort_by(|a, b| b.total_cmp(a));
            let s = singular_spectrum(&w, Some(k)).unwrap();
            assert_eq!(s.len(), k);
            for (a, b) in s.values().iter().zip(&reference) {
                assert_rel(*a, *b, 1e-6);
            }
        }
    }

    #[test]
    fn rank_deficient_and_zero_matrices() {
        let z = Matrix::zeros(200, 200);
        assert!(singular_spectrum(&z, Some(4))
            .unwrap()
            .values()
            .iter()
            .all(|&v| v == 0.0));
        // rank one: u vᵀ with ‖u‖ = ‖v‖ = √200
        let w = Matrix::from_vec(200, 200, vec![1.0; 40_000]).unwrap();
        let s = singular_spectrum(&w, Some(3)).unwrap();
        assert_rel(s.values()[0], 200.0, 1e-10);
        assert!(s.values()[1] < 1e-6);
    }

    #[test]
    fn k_out_of_range_is_rejected() {
        let w = Matrix::identity(3);
        assert!(singular_spectrum(&w, Some(0)).is_err());
        assert!(singular_spectrum(&w, Some(4)).is_err());
    }

    #[test]
    fn spectrum_requires_sorted_nonnegative() {
        let s = Spectrum::from_values(vec![1.0, 3.0, 2.0]).unwrap();
        assert_eq!(s.values(), &[3.0, 2.0, 1.0]);
        assert!(Spectrum::from_values(vec![-1.0]).is_err());
    }
}
