use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Anneal {
    #[default]
    None,
    Cosine,
}

/// Linear warmup followed by either a constant rate or a cosine decay to
/// `floor_fraction · peak` at `total_steps`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub warmup_steps: u64,
    pub total_steps: u64,
    pub anneal: Anneal,
    pub floor_fraction: f64,
}

impl Schedule {
    pub fn constant(total_steps: u64) -> Self {
        Schedule {
            warmup_steps: 0,
            total_steps,
            anneal: Anneal::None,
            floor_fraction: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.warmup_steps > self.total_steps {
            return Err(Error::invalid(format!(
                "warmup_steps ({}) exceeds total_steps ({})",
                self.warmup_steps, self.total_steps
            )));
        }
        if !(0.0..=1.0).contains(&self.floor_fraction) {
            return Err(Error::invalid("floor_fraction must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Learning rate at step `t` for peak rate `peak`.
    ///
    /// During warmup the rate is `peak · t / warmup_steps`. A cosine schedule
    /// with `warmup_steps == total_steps` has no decay phase and ends at peak.
    pub fn lr_at(&self, peak: f64, t: u64) -> Result<f64> {
        self.validate()?;
        if !(peak > 0.0 && peak.is_finite()) {
            return Err(Error::invalid(format!(
                "peak rate must be positive, got {peak}"
            )));
        }
        if t > self.total_steps {
            return Err(Error::invalid(format!(
                "step {t} is past the end of the schedule ({})",
                self.total_steps
            )));
        }
        if t < self.warmup_steps {
            return Ok(peak * t as f64 / self.warmup_steps as f64);
        }
        match self.anneal {
            Anneal::None => Ok(peak),
            Anneal::Cosine => {
                let span = self.total_steps - self.warmup_steps;
                if span == 0 {
                    return Ok(peak);
                }
                let progress = (t - self.warmup_steps) as f64 / span as f64;
                let floor = self.floor_fraction * peak;
                Ok(floor + (peak - floor) * 0.5 * (1.0 + (PI * progress).cos()))
            }
        }
    }
}
