//! AdamW, global gradient-norm clipping and learning-rate schedules.

mod adamw;
mod clip;
mod schedule;

pub use adamw::{adamw_step, AdamWConfig, AdamWState};
pub use clip::{clip_global_norm, clip_global_norm_in_place, global_norm};
pub use schedule::{Anneal, Schedule};
