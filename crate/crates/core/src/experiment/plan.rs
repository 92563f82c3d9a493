use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scaling::{mup_plan, plan, proxy_to_target, BaseHyper, DecayRule, ScaledHyper};

use super::config::ExperimentConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum PlanMode {
    /// Transfer from the configured base width to each target width.
    Base,
    /// Each target's own hyperparameters, scaled down to a proxy width.
    Proxy { proxy_width: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub target_width: usize,
    /// Width the returned hyperparameters apply to.
    pub width: usize,
    pub plan: ScaledHyper,
    /// The same transfer without decay scaling, for comparison.
    pub mup: ScaledHyper,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanDocument {
    pub mode: PlanMode,
    pub base: BaseHyper,
    pub decay_exponent: f64,
    pub entries: Vec<PlanEntry>,
}

pub fn plan_document(cfg: &ExperimentConfig, mode: PlanMode) -> Result<PlanDocument> {
    cfg.base
        .validate()
        .map_err(|e| Error::Config(format!("base: {e}")))?;
    let entries = cfg
        .widths
        .iter()
        .map(|&target| match mode {
            PlanMode::Base => Ok(PlanEntry {
                target_width: target,
                width: target,
                plan: plan(
                    &cfg.base,
                    target,
                    DecayRule {
                        exponent: cfg.decay_exponent,
                    },
                )?,
                mup: mup_plan(&cfg.base, target)?,
            }),
            PlanMode::Proxy { proxy_width } => {
                let target_base = BaseHyper {
                    d_base: target,
                    ..cfg.base
                };
                Ok(PlanEntry {
                    target_width: target,
                    width: proxy_width,
                    plan: proxy_to_target(&target_base, proxy_width)?,
                    mup: mup_plan(&target_base, proxy_width)?,
                })
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PlanDocument {
        mode,
        base: cfg.base,
        decay_exponent: match mode {
            PlanMode::Base => cfg.decay_exponent,
            PlanMode::Proxy { .. } => DecayRule::SQRT.exponent,
        },
        entries,
    })
}
