use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use wdscale::experiment::{
    analyze_dir, plan_document, run_sweep, Analysis, ExperimentConfig, HyperScaling, PlanMode,
    RunStatus, SweepAxes,
};
use wdscale::{Error, Result};

#[derive(Parser)]
#[command(
    name = "wdscale",
    version,
    about = "Width-scaled weight decay experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print per-width hyperparameters.
    Plan {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "base")]
        mode: Mode,
        /// Proxy width for `--mode proxy`.
        #[arg(long)]
        proxy_width: Option<usize>,
    },
    /// Train the configured widths.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Train the grid of --eta-base x --lambda-base x --p x --widths.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Summarize a directory of runs and write figure tables.
    Analyze { dir: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Base,
    Proxy,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scaling {
    Rule,
    Fixed,
}

#[derive(Args)]
struct Common {
    /// JSON config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    widths: Option<Vec<usize>>,
    /// Matrix-like decay exponent; a comma-separated list for `sweep`.
    #[arg(long, value_delimiter = ',')]
    p: Option<Vec<f64>>,
    /// Comma-separated list for `sweep`.
    #[arg(long, value_delimiter = ',')]
    eta_base: Option<Vec<f64>>,
    /// Comma-separated list for `sweep`.
    #[arg(long, value_delimiter = ',')]
    lambda_base: Option<Vec<f64>>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long, value_enum)]
    scaling: Option<Scaling>,
    /// Multiply both η and λ by this factor.
    #[arg(long)]
    boost: Option<f64>,
}

fn single(flag: &str, values: &Option<Vec<f64>>) -> Result<Option<f64>> {
    match values.as_deref() {
        None => Ok(None),
        Some([v]) => Ok(Some(*v)),
        Some(_) => Err(Error::Config(format!(
            "--{flag} takes one value here; use `sweep` for a list"
        ))),
    }
}

impl Common {
    /// Config with single-valued overrides applied.
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = self.config_without_axes()?;
        if let Some(v) = single("p", &self.p)? {
            cfg.decay_exponent = v;
        }
        if let Some(v) = single("eta-base", &self.eta_base)? {
            cfg.base.eta_base = v;
        }
        if let Some(v) = single("lambda-base", &self.lambda_base)? {
            cfg.base.lambda_base = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Config plus the grid spanned by the list-valued flags.
    fn sweep(&self) -> Result<(ExperimentConfig, SweepAxes)> {
        let cfg = self.config_without_axes()?;
        let mut axes = SweepAxes::from_config(&cfg);
        if let Some(v) = &self.p {
            axes.p = v.clone();
        }
        if let Some(v) = &self.eta_base {
            axes.eta_base = v.clone();
        }
        if let Some(v) = &self.lambda_base {
            axes.lambda_base = v.clone();
        }
        Ok((cfg, axes))
    }

    fn config_without_axes(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(v) = &self.out {
            cfg.out_dir = v.clone();
        }
        if let Some(v) = &self.widths {
            cfg.widths = v.clone();
            cfg.spectrum_k = cfg.spectrum_k.min(v.iter().copied().min().unwrap_or(1));
        }
        if let Some(v) = self.steps {
            cfg.steps = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.jobs {
            cfg.jobs = v;
        }
        if let Some(v) = self.scaling {
            cfg.hyper_scaling = match v {
                Scaling::Rule => HyperScaling::Rule,
                Scaling::Fixed => HyperScaling::Fixed,
            };
        }
        if let Some(v) = self.boost {
            cfg.timescale_boost = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn print_analysis(a: &Analysis) {
    let verdict = |pass: bool| if pass { "PASS" } else { "FAIL" };
    println!("runs: {} ({} failed)", a.runs, a.failed_runs.len());
    for e in &a.alignment {
        println!(
            "{} alignment {} {}: worst pair {:.4}, mean {:.4}",
            verdict(e.pass),
            e.group,
            e.layer.as_str(),
            e.report.worst_pair_deviation,
            e.report.mean_deviation
        );
    }
    for e in &a.decay_comparisons {
        println!(
            "{} decay comparison eta_base={} lambda_base={} {}: p=0 {:.4} vs p=0.5 {:.4}",
            verdict(e.pass),
            e.eta_base,
            e.lambda_base,
            e.layer.as_str(),
            e.deviation_constant,
            e.deviation_sqrt
        );
    }
    for e in &a.norm_law {
        println!(
            "{} norm law d={} {}: exponent {:.4}, r2 {:.4}",
            verdict(e.pass),
            e.width,
            e.layer.as_str(),
            e.fit.exponent,
            e.fit.r_squared
        );
    }
    for e in &a.width_exponents {
        println!(
            "{} width exponent eta={} lambda={} {}: {:.4}",
            verdict(e.pass),
            e.eta,
            e.lambda,
            e.layer.as_str(),
            e.fit.exponent
        );
    }
    for n in &a.notes {
        println!("note: {n}");
    }
}

fn execute(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Plan {
            common,
            mode,
            proxy_width,
        } => {
            let cfg = common.config()?;
            let mode = match (mode, proxy_width) {
                (Mode::Base, _) => PlanMode::Base,
                (Mode::Proxy, Some(proxy_width)) => PlanMode::Proxy { proxy_width },
                (Mode::Proxy, None) => {
                    return Err(Error::Config("--mode proxy needs --proxy-width".into()))
                }
            };
            let doc = plan_document(&cfg, mode)?;
            let text = serde_json::to_string_pretty(&doc)?;
            println!("{text}");
            if common.out.is_some() {
                std::fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
                let path = cfg.out_dir.join("plan.json");
                std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Run { common } => {
            let cfg = common.config()?;
            sweep(&cfg, &SweepAxes::from_config(&cfg))
        }
        Command::Sweep { common } => {
            let (cfg, axes) = common.sweep()?;
            sweep(&cfg, &axes)
        }
        Command::Analyze { dir } => {
            let a = analyze_dir(&dir)?;
            print_analysis(&a);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn sweep(cfg: &ExperimentConfig, axes: &SweepAxes) -> Result<ExitCode> {
    axes.validate()?;
    println!(
        "{} cells on {} threads",
        axes.cells().len(),
        cfg.effective_jobs(axes.cells().len())
    );
    let manifests = run_sweep(cfg, axes, &cfg.out_dir)?;
    let mut failed = 0;
    for m in &manifests {
        match (&m.summary, m.status) {
            (Some(s), RunStatus::Ok) => println!(
                "{}: w_in_rms={:.6} w_out_rms={:.6} sigma1_w_in={:.6} sigma1_w_out={:.6}",
                m.run_id, s.w_in_rms, s.w_out_rms, s.sigma1_w_in, s.sigma1_w_out
            ),
            _ => {
                failed += 1;
                println!(
                    "{}: {} ({})",
                    m.run_id,
                    m.status.as_str(),
                    m.error.as_deref().unwrap_or("")
                );
            }
        }
    }
    println!("wrote {}", cfg.out_dir.display());
    Ok(if failed == 0 {
        ExitCode::SUCCESS
    } else {
        eprintln!("{failed} of {} runs failed", manifests.len());
        ExitCode::FAILURE
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
