//! Sublayer gain, steady-state detection, cross-width spectrum alignment and
//! width-exponent estimation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{fit_power_law, Matrix, PowerLawFit, Spectrum};

/// Number of leading singular values compared across widths.
pub const DEFAULT_TOP_K: usize = 8;
pub const DEFAULT_WINDOW_FRACTION: f64 = 0.1;
pub const DEFAULT_STEADY_TOL: f64 = 0.02;

/// Largest acceptable worst-pair mean `|log₂ σ_i(d') / σ_i(d)|`.
pub const ALIGNMENT_TOL: f64 = 0.25;
/// Norm-law exponent must lie within this distance of 1.
pub const NORM_LAW_EXPONENT_TOL: f64 = 0.15;
pub const NORM_LAW_MIN_R2: f64 = 0.95;
/// Accepted range of the `σ₁ ∝ d^α` exponent at fixed `(η, λ)`.
pub const WIDTH_EXPONENT_RANGE: (f64, f64) = (0.60, 0.90);

/// `‖y‖_rms / ‖x‖_rms` for one batch through one linear sublayer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GainRecord {
    pub step: u64,
    pub in_rms: f64,
    pub out_rms: f64,
    pub gain: f64,
}

impl GainRecord {
    /// Builds a record from a batch and the sublayer's output on it.
    pub fn from_io(step: u64, x: &Matrix, y: &Matrix) -> Result<Self> {
        let in_rms = x.rms_norm();
        if in_rms == 0.0 {
            return Err(Error::invalid("sublayer gain needs a nonzero input batch"));
        }
        let out_rms = y.rms_norm();
        Ok(GainRecord {
            step,
            in_rms,
            out_rms,
            gain: out_rms / in_rms,
        })
    }
}

/// Gain of `y = W X` measured on the batch `X` (columns are samples).
pub fn sublayer_gain(w: &Matrix, x: &Matrix) -> Result<GainRecord> {
    if x.rms_norm() == 0.0 {
        return Err(Error::invalid("sublayer gain needs a nonzero input batch"));
    }
    let y = w.matmul(x)?;
    GainRecord::from_io(0, x, &y)
}

/// Empirical alignment factor `gain / ‖W‖_rms`.
pub fn implied_alignment_factor(record: &GainRecord, w: &Matrix) -> Result<f64> {
    let w_rms = w.rms_norm();
    if w_rms == 0.0 {
        return Err(Error::invalid(
            "alignment factor undefined for a zero matrix",
        ));
    }
    Ok(record.gain / w_rms)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SteadyStateVerdict {
    pub reached: bool,
    pub steady_value: f64,
    pub window_start: u64,
    pub relative_drift: f64,
}

/// Declares a trajectory steady when `(max − min) / mean` over its trailing
/// `window_fraction` of samples is at most `tol`.
pub fn steady_state(
    trajectory: &[(u64, f64)],
    window_fraction: f64,
    tol: f64,
) -> Result<SteadyStateVerdict> {
    if trajectory.len() < 10 {
        return Err(Error::invalid(format!(
            "steady-state check needs at least 10 samples, got {}",
            trajectory.len()
        )));
    }
    if !(window_fraction > 0.0 && window_fraction <= 1.0) {
        return Err(Error::invalid("window_fraction must lie in (0, 1]"));
    }
    let n = trajectory.len();
    let len = ((n as f64 * window_fraction).ceil() as usize).clamp(2, n);
    let window = &trajectory[n - len..];
    let (min, max, sum) = window.iter().fold(
        (f64::INFINITY, f64::NEG_INFINITY, 0.0),
        |(lo, hi, s), &(_, v)| (lo.min(v), hi.max(v), s + v),
    );
    let mean = sum / len as f64;
    let relative_drift = if mean == 0.0 {
        if max == min {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (max - min) / mean.abs()
    };
    Ok(SteadyStateVerdict {
        reached: relative_drift <= tol,
        steady_value: mean,
        window_start: window[0].0,
        relative_drift,
    })
}

/// Deviation of the top-`k` singular values between two widths.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairDeviation {
    pub from_width: usize,
    pub to_width: usize,
    pub mean_abs_log2_ratio: f64,
    pub max_abs_log2_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub k: usize,
    pub widths: Vec<usize>,
    /// Top-`k` singular values per width, in the order of `widths`.
    pub top_values: Vec<Vec<f64>>,
    /// Consecutive-width comparisons in ascending width order.
    pub pairs: Vec<PairDeviation>,
    /// Average of the per-pair means.
    pub mean_deviation: f64,
    /// Largest per-pair mean.
    pub worst_pair_deviation: f64,
    /// Largest single-index deviation over all pairs.
    pub max_deviation: f64,
    /// `σ₁` against width.
    pub sigma1_fit: PowerLawFit,
}

pub fn alignment_report(spectra: &BTreeMap<usize, Spectrum>, k: usize) -> Result<AlignmentReport> {
    if spectra.len() < 2 {
        return Err(Error::invalid(
            "alignment needs spectra at 2 or more widths",
        ));
    }
    if k == 0 {
        return Err(Error::invalid("alignment k must be at least 1"));
    }
    for (d, s) in spectra {
        if s.len() < k {
            return Err(Error::invalid(format!(
                "spectrum at width {d} has {} values, need k = {k}",
                s.len()
            )));
        }
        if s.values()[..k].iter().any(|&v| v <= 0.0) {
            return Err(Error::invalid(format!(
                "spectrum at width {d} has a zero among its top {k} values"
            )));
        }
    }
    let widths: Vec<usize> = spectra.keys().copied().collect();
    let top_values: Vec<Vec<f64>> = spectra.values().map(|s| s.values()[..k].to_vec()).collect();
    let pairs: Vec<PairDeviation> = widths
        .windows(2)
        .zip(top_values.windows(2))
        .map(|(w, t)| {
            let devs: Vec<f64> = t[0]
                .iter()
                .zip(&t[1])
                .map(|(a, b)| (b / a).log2().abs())
                .collect();
            PairDeviation {
                from_width: w[0],
                to_width: w[1],
                mean_abs_log2_ratio: devs.iter().sum::<f64>() / k as f64,
                max_abs_log2_ratio: devs.iter().copied().fold(0.0, f64::max),
            }
        })
        .collect();
    let mean_deviation =
        pairs.iter().map(|p| p.mean_abs_log2_ratio).sum::<f64>() / pairs.len() as f64;
    let worst_pair_deviation = pairs
        .iter()
        .map(|p| p.mean_abs_log2_ratio)
        .fold(0.0, f64::max);
    let max_deviation = pairs
        .iter()
        .map(|p| p.max_abs_log2_ratio)
        .fold(0.0, f64::max);
    let sigma1: Vec<(f64, f64)> = widths
        .iter()
        .zip(&top_values)
        .map(|(&d, t)| (d as f64, t[0]))
        .collect();
    Ok(AlignmentReport {
        k,
        widths,
        top_values,
        pairs,
        mean_deviation,
        worst_pair_deviation,
        max_deviation,
        sigma1_fit: fit_power_law(&sigma1)?,
    })
}

/// Power-law exponent of the top singular value against width, for runs
/// sharing one `(η, λ)`.
pub fn width_exponent(runs: &[(usize, f64)]) -> Result<PowerLawFit> {
    let mut widths: Vec<usize> = runs.iter().map(|r| r.0).collect();
    widths.sort_unstable();
    widths.dedup();
    if widths.len() < 3 {
        return Err(Error::invalid(
            "width exponent needs at least 3 distinct widths",
        ));
    }
    let pts: Vec<(f64, f64)> = runs.iter().map(|&(d, s)| (d as f64, s)).collect();
    fit_power_law(&pts)
}

/// Fits final `‖W‖_rms` against `√(η/λ)`; `points` holds `(η, λ, rms)`.
pub fn norm_law_fit(points: &[(f64, f64, f64)]) -> Result<PowerLawFit> {
    if points.iter().any(|&(_, l, _)| l <= 0.0) {
        return Err(Error::invalid("norm law needs positive weight decay"));
    }
    let pts: Vec<(f64, f64)> = points
        .iter()
        .map(|&(eta, lambda, rms)| ((eta / lambda).sqrt(), rms))
        .collect();
    fit_power_law(&pts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{gaussian_matrix, singular_spectrum};

    #[test]
    fn identity_and_scaled_identity_gain() {
        let x = gaussian_matrix(1, 6, 4, 1.0).unwrap();
        let g = sublayer_gain(&Matrix::identity(6), &x).unwrap();
        assert!((g.gain - 1.0).abs() < 1e-15);
        let g2 = sublayer_gain(&Matrix::from_diag(&[2.0; 6]), &x).unwrap();
        assert!((g2.gain - 2.0).abs() < 1e-15);
        assert_eq!(g2.gain, g2.out_rms / g2.in_rms);
    }

    #[test]
    fn gain_matches_direct_matmul() {
        let w = gaussian_matrix(2, 32, 32, 0.1).unwrap();
        let x = gaussian_matrix(3, 32, 16, 1.0).unwrap();
        let mut ss_y = 0.0;
        for i in 0..32 {
            for b in 0..16 {
                let y: f64 = (0..32).map(|j| w.get(i, j) * x.get(j, b)).sum();
                ss_y += y * y;
            }
        }
        let ss_x: f64 = x.sum_of_squares();
        let g = sublayer_gain(&w, &x).unwrap();
        assert!((g.gain - (ss_y / ss_x).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn zero_batch_and_zero_matrix_rejected() {
        assert!(sublayer_gain(&Matrix::identity(2), &Matrix::zeros(2, 3)).is_err());
        let rec = sublayer_gain(&Matrix::identity(2), &Matrix::identity(2)).unwrap();
        assert!(implied_alignment_factor(&rec, &Matrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn alignment_factor_of_identity() {
        for d in [4usize, 64] {
            let x = gaussian_matrix(9, d, 8, 1.0).unwrap();
            let w = Matrix::identity(d);
            let rec = sublayer_gain(&w, &x).unwrap();
            let rho = implied_alignment_factor(&rec, &w).unwrap();
            assert!((rho - (d as f64).sqrt()).abs() < 1e-12);
            let w3 = w.scaled(3.0).unwrap();
            let rec3 = sublayer_gain(&w3, &x).unwrap();
            let rho3 = implied_alignment_factor(&rec3, &w3).unwrap();
            assert!((rho3 - rho).abs() < 1e-12);
            // gain = ‖W‖_rms · ρ by construction
            assert!((rec3.gain - w3.rms_norm() * rho3).abs() < 1e-12);
        }
    }

    #[test]
    fn alignment_factor_against_monte_carlo() {
        // For Gaussian W and isotropic Gaussian x, E‖Wx‖² = ‖W‖_F², so the
        // Monte-Carlo ρ is √(mean ‖Wx‖² / mean ‖x‖²) / ‖W‖_rms.
        let d = 256;
        let w = gaussian_matrix(21, d, d, 0.05).unwrap();
        let x = gaussian_matrix(22, d, 32, 1.0).unwrap();
        let rho = implied_alignment_factor(&sublayer_gain(&w, &x).unwrap(), &w).unwrap();
        let (mut num, mut den) = (0.0, 0.0);
        for chunk in 0..40 {
            let probes = gaussian_matrix(1000 + chunk, d, 250, 1.0).unwrap();
            num += w.matmul(&probes).unwrap().sum_of_squares();
            den += probes.sum_of_squares();
        }
        let mc = (num / den).sqrt() / w.rms_norm();
        assert!((rho / mc - 1.0).abs() < 0.10, "rho {rho} vs mc {mc}");
    }

    #[test]
    fn steady_state_cases() {
        let flat: Vec<(u64, f64)> = (0..50).map(|t| (t, 3.0)).collect();
        let v = steady_state(&flat, 0.1, 0.02).unwrap();
        assert!(v.reached);
        assert_eq!(v.relative_drift, 0.0);
        assert_eq!(v.steady_value, 3.0);

        let line: Vec<(u64, f64)> = (1..=100).map(|t| (t, t as f64)).collect();
        assert!(!steady_state(&line, 0.1, 0.02).unwrap().reached);

        let total = 1000u64;
        let tau = total as f64 / 10.0;
        let a = 2.5;
        let sat: Vec<(u64, f64)> = (0..=total)
            .step_by(10)
            .map(|t| (t, a * (1.0 - (-(t as f64) / tau).exp())))
            .collect();
        let v = steady_state(&sat, 0.1, 0.02).unwrap();
        assert!(v.reached);
        assert!((v.steady_value / a - 1.0).abs() < 0.01);
        assert_eq!(v.window_start, 900);

        assert!(steady_state(&flat[..9], 0.1, 0.02).is_err());
    }

    fn spectra_from(
        widths: &[usize],
        values: impl Fn(usize) -> Vec<f64>,
    ) -> BTreeMap<usize, Spectrum> {
        widths
            .iter()
            .map(|&d| (d, Spectrum::from_values(values(d)).unwrap()))
            .collect()
    }

    #[test]
    fn identical_spectra_align_perfectly() {
        let s = spectra_from(&[64, 128, 256], |_| vec![5.0, 4.0, 3.0]);
        let r = alignment_report(&s, 3).unwrap();
        assert_eq!(r.max_deviation, 0.0);
        assert_eq!(r.sigma1_fit.exponent, 0.0);
        assert_eq!(r.pairs.len(), 2);
    }

    #[test]
    fn doubling_spectra_deviate_by_one_bit() {
        let s = spectra_from(&[64, 128, 256, 512], |d| {
            let c = d as f64 / 64.0;
            vec![3.0 * c, 2.0 * c, 1.0 * c]
        });
        let r = alignment_report(&s, 3).unwrap();
        for p in &r.pairs {
            assert!((p.mean_abs_log2_ratio - 1.0).abs() < 1e-12);
        }
        assert!((r.sigma1_fit.exponent - 1.0).abs() < 1e-12);
        assert!((r.mean_deviation - 1.0).abs() < 1e-12);
    }

    #[test]
    fn alignment_rejects_short_spectra_and_single_width() {
        let s = spectra_from(&[64, 128], |d| {
            if d == 64 {
                vec![1.0; 8]
            } else {
                vec![1.0; 4]
            }
        });
        assert!(alignment_report(&s, 8).is_err());
        let one = spectra_from(&[64], |_| vec![1.0; 8]);
        assert!(alignment_report(&one, 8).is_err());
    }

    #[test]
    fn alignment_is_order_independent() {
        let widths = [512, 64, 256, 128];
        let mk = |d: usize| {
            let w = gaussian_matrix(d as u64, 32, 32, 1.0).unwrap();
            singular_spectrum(&w, None).unwrap()
        };
        let a: BTreeMap<usize, Spectrum> = widths.iter().map(|&d| (d, mk(d))).collect();
        let b: BTreeMap<usize, Spectrum> = widths.iter().rev().map(|&d| (d, mk(d))).collect();
        assert_eq!(
            alignment_report(&a, 8).unwrap(),
            alignment_report(&b, 8).unwrap()
        );
    }

    #[test]
    fn width_exponent_recovers_exact_laws() {
        let runs: Vec<(usize, f64)> = [64usize, 128, 256, 512]
            .iter()
            .map(|&d| (d, 5.0 * (d as f64).powf(0.75)))
            .collect();
        let f = width_exponent(&runs).unwrap();
        assert!((f.exponent - 0.75).abs() < 1e-12);
        let flat: Vec<(usize, f64)> = [64usize, 128, 256].iter().map(|&d| (d, 2.0)).collect();
        assert!(width_exponent(&flat).unwrap().exponent.abs() < 1e-12);
        assert!(width_exponent(&runs[..2]).is_err());
    }

    #[test]
    fn norm_law_on_exact_sqrt_ratio() {
        let pts: Vec<(f64, f64, f64)> = [(1e-3, 0.1), (2e-3, 0.1), (1e-3, 0.4), (4e-3, 0.05)]
            .iter()
            .map(|&(e, l): &(f64, f64)| (e, l, 0.7 * (e / l).sqrt()))
            .collect();
        let f = norm_law_fit(&pts).unwrap();
        assert!((f.exponent - 1.0).abs() < 1e-12);
        assert!((f.prefactor - 0.7).abs() < 1e-12);
    }
}
