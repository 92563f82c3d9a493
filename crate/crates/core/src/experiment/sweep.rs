use std::collections::BTreeSet;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{steady_state, DEFAULT_STEADY_TOL, DEFAULT_WINDOW_FRACTION};
use crate::error::{Error, Result};
use crate::ffn::{train, Layer, RunResult, RunSpec};
use crate::linalg::derive_seed;
use crate::scaling::{plan, BaseHyper, DecayRule, ScaledHyper};

use super::artifacts::{
    self, create_dir, fmt_f64, write_file, write_json, Manifest, RunStatus, RunSummary, Table,
    FORMAT_VERSION,
};
use super::config::{ExperimentConfig, HyperScaling};

/// One point of a sweep grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellAxes {
    pub width: usize,
    pub eta_base: f64,
    pub lambda_base: f64,
    pub p: f64,
}

impl CellAxes {
    pub fn run_id(&self) -> String {
        format!(
            "d{}_eta{}_lam{}_p{}",
            self.width, self.eta_base, self.lambda_base, self.p
        )
    }

    /// Seed of this cell, derived from the root seed and the axis values so
    /// that adding cells to a grid leaves existing cells unchanged.
    pub fn seed(&self, root: u64) -> u64 {
        derive_seed(
            root,
            &[
                self.width as u64,
                self.eta_base.to_bits(),
                self.lambda_base.to_bits(),
                self.p.to_bits(),
            ],
        )
    }
}

/// Cartesian grid over base learning rate, base decay, width and decay
/// exponent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxes {
    pub eta_base: Vec<f64>,
    pub lambda_base: Vec<f64>,
    pub widths: Vec<usize>,
    pub p: Vec<f64>,
}

impl SweepAxes {
    /// The single-valued grid described by a config.
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        SweepAxes {
            eta_base: vec![cfg.base.eta_base],
            lambda_base: vec![cfg.base.lambda_base],
            widths: cfg.widths.clone(),
            p: vec![cfg.decay_exponent],
        }
    }

    pub fn validate(&self) -> Result<()> {
        fn distinct<T: Copy, K: Ord>(name: &str, v: &[T], key: impl Fn(T) -> K) -> Result<()> {
            if v.is_empty() {
                return Err(Error::Config(format!("sweep axis {name} is empty")));
            }
            let set: BTreeSet<K> = v.iter().map(|&x| key(x)).collect();
            if set.len() != v.len() {
                return Err(Error::Config(format!("sweep axis {name} has duplicates")));
            }
            Ok(())
        }
        distinct("eta_base", &self.eta_base, f64::to_bits)?;
        distinct("lambda_base", &self.lambda_base, f64::to_bits)?;
        distinct("widths", &self.widths, |w| w)?;
        distinct("p", &self.p, f64::to_bits)?;
        if self.widths.contains(&0) {
            return Err(Error::Config("widths must be positive".into()));
        }
        Ok(())
    }

    /// Cells in a fixed order: eta, lambda, p, then width innermost.
    pub fn cells(&self) -> Vec<CellAxes> {
        let mut out = Vec::new();
        for &eta_base in &self.eta_base {
            for &lambda_base in &self.lambda_base {
                for &p in &self.p {
                    for &width in &self.widths {
                        out.push(CellAxes {
                            width,
                            eta_base,
                            lambda_base,
                            p,
                        });
                    }
                }
            }
        }
        out
    }
}

/// Planner output and training spec for one cell.
pub fn resolve_cell(cfg: &ExperimentConfig, axes: &CellAxes) -> Result<(ScaledHyper, RunSpec)> {
    let base = BaseHyper {
        eta_base: axes.eta_base,
        lambda_base: axes.lambda_base,
        ..cfg.base
    };
    let hyper = plan(&base, axes.width, DecayRule { exponent: axes.p })?;
    let (eta, lambda) = match cfg.hyper_scaling {
        HyperScaling::Rule => (hyper.matrix.eta, hyper.matrix.lambda),
        HyperScaling::Fixed => (base.eta_base, base.lambda_base),
    };
    let boost = cfg.timescale_boost;
    let mut spec = RunSpec::new(
        axes.width,
        cfg.steps,
        eta * boost,
        lambda * boost,
        hyper.matrix.sigma,
    );
    spec.batch = cfg.batch;
    spec.seed = axes.seed(cfg.seed);
    spec.adamw = cfg.adamw.with_weight_decay(lambda * boost);
    spec.schedule = cfg.schedule.for_steps(cfg.steps);
    spec.clip = cfg.clip;
    spec.record_every = cfg.record_every;
    spec.spectrum_k = cfg.spectrum_k.min(axes.width);
    spec.resample_upstream = cfg.resample_upstream;
    spec.validate()?;
    Ok((hyper, spec))
}

fn summarize(result: &RunResult) -> RunSummary {
    let steady = |layer| {
        steady_state(
            &result.norm_trajectory(layer),
            DEFAULT_WINDOW_FRACTION,
            DEFAULT_STEADY_TOL,
        )
        .ok()
    };
    RunSummary {
        w_in_rms: result.final_rms(Layer::WIn),
        w_out_rms: result.final_rms(Layer::WOut),
        sigma1_w_in: result.spectra.w_in.top(),
        sigma1_w_out: result.spectra.w_out.top(),
        gain_w_in: result.final_gain(Layer::WIn).map(|g| g.gain),
        gain_w_out: result.final_gain(Layer::WOut).map(|g| g.gain),
        steady_w_in: steady(Layer::WIn),
        steady_w_out: steady(Layer::WOut),
    }
}

/// Trains one cell and writes its directory. Training failures are recorded
/// in the manifest; only I/O and configuration errors are returned.
pub fn run_cell(
    cfg: &ExperimentConfig,
    index: usize,
    axes: &CellAxes,
    out: &Path,
) -> Result<Manifest> {
    let (hyper, spec) = resolve_cell(cfg, axes)?;
    let run_id = axes.run_id();
    let dir = out.join(&run_id);
    create_dir(&dir)?;
    log::info!(
        "run {run_id}: eta={} lambda={} init_std={} seed={}",
        spec.eta,
        spec.lambda(),
        spec.init_std,
        spec.seed
    );
    let outcome = train(&spec);
    let mut manifest = Manifest {
        format_version: FORMAT_VERSION,
        run_id,
        cell: index,
        axes: *axes,
        hyper_scaling: cfg.hyper_scaling,
        timescale_boost: cfg.timescale_boost,
        plan: hyper,
        spec,
        status: RunStatus::Ok,
        error: None,
        summary: None,
    };
    match outcome {
        Ok(result) => {
            write_file(
                &dir.join(artifacts::TRAJECTORY),
                &artifacts::trajectory_csv(&result.trajectory),
            )?;
            write_file(
                &dir.join(artifacts::GAINS),
                &artifacts::gains_csv(&result.gains),
            )?;
            write_file(
                &dir.join(artifacts::SPECTRUM),
                &artifacts::spectrum_csv(&result.spectra),
            )?;
            manifest.summary = Some(summarize(&result));
        }
        Err(e) => {
            log::warn!("run {} failed: {e}", manifest.run_id);
            manifest.status = match e {
                Error::Divergence { .. } => RunStatus::Diverged,
                _ => RunStatus::Failed,
            };
            manifest.error = Some(e.to_string());
        }
    }
    write_json(&dir.join(artifacts::MANIFEST), &manifest)?;
    Ok(manifest)
}

/// Runs every cell on a pool of `cfg.jobs` threads. Results come back in
/// cell order regardless of scheduling, and `summary.csv` is written once
/// all cells have finished.
pub fn run_sweep(cfg: &ExperimentConfig, axes: &SweepAxes, out: &Path) -> Result<Vec<Manifest>> {
    cfg.validate()?;
    axes.validate()?;
    let cells = axes.cells();
    create_dir(out)?;
    let jobs = cfg.effective_jobs(cells.len());
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    log::info!("sweep: {} cells on {jobs} threads", cells.len());
    let manifests = pool.install(|| {
        cells
            .par_iter()
            .enumerate()
            .map(|(i, a)| run_cell(cfg, i, a, out))
            .collect::<Result<Vec<_>>>()
    })?;
    write_file(&out.join(artifacts::SUMMARY), &summary_csv(&manifests))?;
    Ok(manifests)
}

pub const SUMMARY_HEADER: [&str; 19] = [
    "cell",
    "run_id",
    "width",
    "eta_base",
    "lambda_base",
    "p",
    "eta",
    "lambda",
    "init_std",
    "seed",
    "status",
    "w_in_rms",
    "w_out_rms",
    "sigma1_w_in",
    "sigma1_w_out",
    "gain_w_in",
    "gain_w_out",
    "steady_w_in",
    "steady_w_out",
];

/// One row per cell; result columns stay empty for failed runs.
pub fn summary_csv(manifests: &[Manifest]) -> String {
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    let mut t = Table::new(&SUMMARY_HEADER);
    for m in manifests {
        let a = &m.axes;
        let mut row = vec![
            m.cell.to_string(),
            m.run_id.clone(),
            a.width.to_string(),
            fmt_f64(a.eta_base),
            fmt_f64(a.lambda_base),
            fmt_f64(a.p),
            fmt_f64(m.spec.eta),
            fmt_f64(m.spec.lambda()),
            fmt_f64(m.spec.init_std),
            m.spec.seed.to_string(),
            m.status.as_str().to_string(),
        ];
        match &m.summary {
            Some(s) => {
                let steady = |l| {
                    s.steady(l)
                        .map(|v| v.reached.to_string())
                        .unwrap_or_default()
                };
                row.extend([
                    fmt_f64(s.w_in_rms),
                    fmt_f64(s.w_out_rms),
                    fmt_f64(s.sigma1_w_in),
                    fmt_f64(s.sigma1_w_out),
                    opt(s.gain_w_in),
                    opt(s.gain_w_out),
                    steady(Layer::WIn),
                    steady(Layer::WOut),
                ]);
            }
            None => row.resize(SUMMARY_HEADER.len(), String::new()),
        }
        t.row(row);
    }
    t.finish()
}
