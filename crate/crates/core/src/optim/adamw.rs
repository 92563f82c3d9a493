//! AdamW with decoupled weight decay and bias correction.
//!
//! Per step, with gradient `G` and learning rate `η_t`:
//!
//! ```text
//! m ← β₁ m + (1 − β₁) G
//! v ← β₂ v + (1 − β₂) G²
//! Ĝ = (m / (1 − β₁ᵗ)) / (√(v / (1 − β₂ᵗ)) + ε)
//! W ← W − η_t (Ĝ + λ W)
//! ```
//!
//! The decay term `λW` bypasses the adaptive normalization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            beta1: 0.9,
            beta2: 0.95,
            epsilon: 1e-8,
            weight_decay: 0.0,
        }
    }
}

impl AdamWConfig {
    pub fn with_weight_decay(self, weight_decay: f64) -> Self {
        AdamWConfig {
            weight_decay,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        let beta_ok = |b: f64| (0.0..1.0).contains(&b);
        if !beta_ok(self.beta1) || !beta_ok(self.beta2) {
            return Err(Error::invalid(format!(
                "betas must lie in [0, 1), got ({}, {})",
                self.beta1, self.beta2
            )));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::invalid("epsilon must be finite and non-negative"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::invalid(
                "weight decay must be finite and non-negative",
            ));
        }
        Ok(())
    }
}

/// Moment accumulators for one parameter tensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamWState {
    m: Matrix,
    v: Matrix,
    t: u64,
}

impl AdamWState {
    pub fn new(rows: usize, cols: usize) -> Self {
        AdamWState {
            m: Matrix::zeros(rows, cols),
            v: Matrix::zeros(rows, cols),
            t: 0,
        }
    }

    pub fn for_param(w: &Matrix) -> Self {
        Self::new(w.rows(), w.cols())
    }

    /// Rebuilds a state from saved moments. `v` must be entrywise non-negative.
    pub fn from_parts(m: Matrix, v: Matrix, t: u64) -> Result<Self> {
        if m.shape() != v.shape() {
            return Err(Error::ShapeMismatch {
                op: "AdamWState::from_parts",
                left: m.shape(),
                right: v.shape(),
            });
        }
        if v.as_slice().iter().any(|x| *x < 0.0) {
            return Err(Error::invalid("second moment must be non-negative"));
        }
        Ok(AdamWState { m, v, t })
    }

    pub fn first_moment(&self) -> &Matrix {
        &self.m
    }

    pub fn second_moment(&self) -> &Matrix {
        &self.v
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn shape(&self) -> (usize, usize) {
        self.m.shape()
    }

    /// In-place update of `w` and the moments. On error nothing is modified.
    pub fn step(&mut self, w: &mut Matrix, g: &Matrix, cfg: &AdamWConfig, lr: f64) -> Result<()> {
        cfg.validate()?;
        if w.shape() != g.shape() {
            return Err(Error::ShapeMismatch {
                op: "adamw_step",
                left: w.shape(),
                right: g.shape(),
            });
        }
        if self.shape() != w.shape() {
            return Err(Error::ShapeMismatch {
                op: "adamw_step state",
                left: self.shape(),
                right: w.shape(),
            });
        }
        if !(lr >= 0.0 && lr.is_finite()) {
            return Err(Error::invalid(format!(
                "learning rate must be >= 0, got {lr}"
            )));
        }
        g.ensure_finite("adamw_step gradient")?;
        w.ensure_finite("adamw_step weights")?;

        let t = self.t + 1;
        let exp = i32::try_from(t).unwrap_or(i32::MAX);
        let bc1 = 1.0 - cfg.beta1.powi(exp);
        let bc2 = 1.0 - cfg.beta2.powi(exp);
        let (b1, b2) = (cfg.beta1, cfg.beta2);
        let decay = lr * cfg.weight_decay;

        let ws = w.as_mut_slice();
        let ms = self.m.as_mut_slice();
        let vs = self.v.as_mut_slice();
        for (((wi, &gi), mi), vi) in ws.iter_mut().zip(g.as_slice()).zip(ms).zip(vs) {
            *mi = b1 * *mi + (1.0 - b1) * gi;
            *vi = b2 * *vi + (1.0 - b2) * gi * gi;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            let g_hat = if m_hat == 0.0 {
                0.0
            } else {
                m_hat / (v_hat.sqrt() + cfg.epsilon)
            };
            *wi = *wi * (1.0 - decay) - lr * g_hat;
        }
        self.t = t;
        Ok(())
    }
}

/// Functional form of [`AdamWState::step`]: returns the updated weights and
/// state, leaving the inputs untouched.
pub fn adamw_step(
    w: &Matrix,
    g: &Matrix,
    state: &AdamWState,
    cfg: &AdamWConfig,
    lr: f64,
) -> Result<(Matrix, AdamWState)> {
    let mut w = w.clone();
    let mut state = state.clone();
    state.step(&mut w, g, cfg, lr)?;
    Ok((w, state))
}
