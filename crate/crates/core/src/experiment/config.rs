use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{AdamWConfig, Anneal, Schedule};
use crate::scaling::BaseHyper;

/// How matrix `(η, λ)` are chosen per width.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum HyperScaling {
    /// Width-scaled by the planner (`η ∝ 1/d`, `λ ∝ d^p`).
    #[default]
    Rule,
    /// `η_base`, `λ_base` at every width; init std is still width-scaled.
    Fixed,
}

impl HyperScaling {
    pub fn as_str(self) -> &'static str {
        match self {
            HyperScaling::Rule => "rule",
            HyperScaling::Fixed => "fixed",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSettings {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        let d = AdamWConfig::default();
        OptimizerSettings {
            beta1: d.beta1,
            beta2: d.beta2,
            epsilon: d.epsilon,
        }
    }
}

impl OptimizerSettings {
    pub fn with_weight_decay(self, weight_decay: f64) -> AdamWConfig {
        AdamWConfig {
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            weight_decay,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleSettings {
    pub warmup_steps: u64,
    pub anneal: Anneal,
    pub floor_fraction: f64,
}

impl Default for ScheduleSettings {
    fn default() -> Self {
        ScheduleSettings {
            warmup_steps: 1000,
            anneal: Anneal::None,
            floor_fraction: 0.01,
        }
    }
}

impl ScheduleSettings {
    /// Warmup is truncated to the run length.
    pub fn for_steps(&self, steps: u64) -> Schedule {
        Schedule {
            warmup_steps: self.warmup_steps.min(steps),
            total_steps: steps,
            anneal: self.anneal,
            floor_fraction: self.floor_fraction,
        }
    }
}

/// Everything needed to plan and run experiments. Every field has a default;
/// unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub base: BaseHyper,
    /// Matrix-like decay exponent `p` in `λ₂ = λ_base · m^p`.
    pub decay_exponent: f64,
    pub widths: Vec<usize>,
    pub steps: u64,
    pub batch: usize,
    pub seed: u64,
    pub record_every: u64,
    pub spectrum_k: usize,
    pub schedule: ScheduleSettings,
    pub clip: Option<f64>,
    pub adamw: OptimizerSettings,
    pub resample_upstream: bool,
    pub hyper_scaling: HyperScaling,
    /// Multiplies both `η` and `λ`; keeps `√(η/λ)` and shortens the
    /// equilibration time by the same factor.
    pub timescale_boost: f64,
    pub out_dir: PathBuf,
    /// Concurrent runs; 0 picks the number of available cores.
    pub jobs: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            base: BaseHyper::default(),
            decay_exponent: 0.5,
            widths: vec![64, 128, 256, 512],
            steps: 20_000,
            batch: crate::ffn::DEFAULT_BATCH,
            seed: 0,
            record_every: crate::ffn::DEFAULT_RECORD_EVERY,
            spectrum_k: crate::diagnostics::DEFAULT_TOP_K,
            schedule: ScheduleSettings::default(),
            clip: None,
            adamw: OptimizerSettings::default(),
            resample_upstream: true,
            hyper_scaling: HyperScaling::Rule,
            timescale_boost: 1.0,
            out_dir: PathBuf::from("runs"),
            jobs: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.base
            .validate()
            .map_err(|e| Error::Config(format!("base: {e}")))?;
        if !self.decay_exponent.is_finite() {
            return bad("decay_exponent must be finite".into());
        }
        if self.widths.is_empty() || self.widths.contains(&0) {
            return bad("widths must be a non-empty list of positive integers".into());
        }
        if self.steps == 0 || self.batch == 0 || self.record_every == 0 {
            return bad("steps, batch and record_every must be at least 1".into());
        }
        let min_width = *self.widths.iter().min().expect("non-empty");
        if self.spectrum_k == 0 || self.spectrum_k > min_width {
            return bad(format!(
                "spectrum_k must lie in 1..={min_width} (the smallest width)"
            ));
        }
        if !(self.timescale_boost > 0.0 && self.timescale_boost.is_finite()) {
            return bad("timescale_boost must be positive".into());
        }
        self.adamw
            .with_weight_decay(0.0)
            .validate()
            .map_err(|e| Error::Config(format!("adamw: {e}")))?;
        self.schedule
            .for_steps(self.steps)
            .validate()
            .map_err(|e| Error::Config(format!("schedule: {e}")))?;
        if let Some(c) = self.clip {
            if !(c > 0.0 && c.is_finite()) {
                return bad("clip must be positive".into());
            }
        }
        Ok(())
    }

    pub fn effective_jobs(&self, cells: usize) -> usize {
        let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
        let jobs = if self.jobs == 0 { cores } else { self.jobs };
        jobs.clamp(1, cells.max(1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = ExperimentConfig::default();
        let back = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn partial_documents_fill_defaults() {
        let cfg =
            ExperimentConfig::from_json(r#"{"steps": 10, "base": {"eta_base": 0.002}}"#).unwrap();
        assert_eq!(cfg.steps, 10);
        assert_eq!(cfg.base.eta_base, 0.002);
        assert_eq!(cfg.base.d_base, 256);
        assert_eq!(cfg.schedule.warmup_steps, 1000);
        assert_eq!(cfg.schedule.for_steps(10).warmup_steps, 10);
    }

    #[test]
    fn unknown_keys_fail_closed() {
        assert!(ExperimentConfig::from_json(r#"{"weight_decay": 0.1}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"base": {"lr": 0.1}}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"adamw": {"beta3": 0.1}}"#).is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(ExperimentConfig::from_json(r#"{"widths": []}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"widths": [4], "spectrum_k": 8}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"timescale_boost": 0}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"adamw": {"beta1": 1.0}}"#).is_err());
    }
}
