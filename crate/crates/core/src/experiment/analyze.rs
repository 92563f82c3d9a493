use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diagnostics::{
    alignment_report, norm_law_fit, width_exponent, AlignmentReport, ALIGNMENT_TOL, DEFAULT_TOP_K,
    NORM_LAW_EXPONENT_TOL, NORM_LAW_MIN_R2, WIDTH_EXPONENT_RANGE,
};
use crate::error::{Error, Result};
use crate::ffn::Layer;
use crate::linalg::{PowerLawFit, Spectrum};

use super::artifacts::{
    self, fmt_f64, write_file, write_json, LoadedRun, Manifest, RunStatus, Table,
};
use super::config::HyperScaling;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentEntry {
    pub group: String,
    pub hyper_scaling: HyperScaling,
    pub eta_base: f64,
    pub lambda_base: f64,
    pub p: f64,
    pub layer: Layer,
    pub report: AlignmentReport,
    pub pass: bool,
}

/// `p = 0` against `p = 0.5` on otherwise identical groups.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayComparison {
    pub eta_base: f64,
    pub lambda_base: f64,
    pub layer: Layer,
    pub widths: Vec<usize>,
    pub deviation_constant: f64,
    pub deviation_sqrt: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormLawEntry {
    pub width: usize,
    pub layer: Layer,
    pub points: usize,
    pub fit: PowerLawFit,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WidthExponentEntry {
    pub eta: f64,
    pub lambda: f64,
    pub layer: Layer,
    pub widths: Vec<usize>,
    pub fit: PowerLawFit,
    pub pass: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub runs: usize,
    pub failed_runs: Vec<String>,
    pub alignment: Vec<AlignmentEntry>,
    pub decay_comparisons: Vec<DecayComparison>,
    pub norm_law: Vec<NormLawEntry>,
    pub width_exponents: Vec<WidthExponentEntry>,
    pub notes: Vec<String>,
}

impl Analysis {
    /// True when every evaluated check passed.
    pub fn all_pass(&self) -> bool {
        self.alignment.iter().all(|e| e.pass)
            && self.decay_comparisons.iter().all(|e| e.pass)
            && self.norm_law.iter().all(|e| e.pass)
            && self.width_exponents.iter().all(|e| e.pass)
    }
}

/// Runs whose settings match apart from width (and the width-dependent
/// rates and seed).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct TransferKey {
    scaling: HyperScaling,
    eta_base: u64,
    lambda_base: u64,
    p: u64,
    steps: u64,
    batch: usize,
    boost: u64,
}

impl TransferKey {
    fn of(m: &Manifest) -> Self {
        TransferKey {
            scaling: m.hyper_scaling,
            eta_base: m.axes.eta_base.to_bits(),
            lambda_base: m.axes.lambda_base.to_bits(),
            p: m.axes.p.to_bits(),
            steps: m.spec.steps,
            batch: m.spec.batch,
            boost: m.timescale_boost.to_bits(),
        }
    }

    fn label(&self) -> String {
        format!(
            "{}_eta{}_lam{}_p{}",
            self.scaling.as_str(),
            f64::from_bits(self.eta_base),
            f64::from_bits(self.lambda_base),
            f64::from_bits(self.p)
        )
    }
}

/// Loads every run directory under `dir`, sorted by name. Failed runs
/// contribute only their manifests.
pub fn load_runs(dir: &Path) -> Result<(Vec<LoadedRun>, Vec<Manifest>)> {
    let not_found = |message: &str| Error::Manifest {
        path: dir.to_path_buf(),
        message: message.to_string(),
    };
    if !dir.is_dir() {
        return Err(not_found("not a directory"));
    }
    let mut subdirs: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(artifacts::MANIFEST).is_file())
        .collect();
    subdirs.sort();
    if subdirs.is_empty() {
        return Err(not_found("no run directories containing manifest.json"));
    }
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for sub in subdirs {
        let m = Manifest::load(&sub.join(artifacts::MANIFEST))?;
        if m.status == RunStatus::Ok {
            ok.push(LoadedRun::load(&sub)?);
        } else {
            failed.push(m);
        }
    }
    Ok((ok, failed))
}

/// Steady-state norm when the trailing window is flat, otherwise the final
/// norm.
fn settled_rms(run: &LoadedRun, layer: Layer) -> f64 {
    let s = run.summary();
    match s.steady(layer) {
        Some(v) if v.reached => v.steady_value,
        _ => s.final_rms(layer),
    }
}

pub fn analyze_runs(runs: &[LoadedRun], failed: &[Manifest]) -> Analysis {
    let mut out = Analysis {
        runs: runs.len() + failed.len(),
        failed_runs: failed.iter().map(|m| m.run_id.clone()).collect(),
        ..Analysis::default()
    };
    for m in failed {
        out.notes.push(format!(
            "{} excluded: {}",
            m.run_id,
            m.error.as_deref().unwrap_or(m.status.as_str())
        ));
    }

    let mut groups: BTreeMap<TransferKey, Vec<&LoadedRun>> = BTreeMap::new();
    for r in runs {
        groups
            .entry(TransferKey::of(&r.manifest))
            .or_default()
            .push(r);
    }
    // (key without p, layer) -> (p, worst deviation, widths)
    type DecayEntries = Vec<(f64, f64, Vec<usize>)>;
    let mut by_decay: BTreeMap<(TransferKey, Layer), DecayEntries> = BTreeMap::new();
    for (key, members) in &groups {
        let widths: BTreeMap<usize, &LoadedRun> = members
            .iter()
            .map(|r| (r.manifest.axes.width, *r))
            .collect();
        if widths.len() < 2 {
            out.notes.push(format!(
                "alignment skipped for {}: only one width",
                key.label()
            ));
            continue;
        }
        for layer in Layer::ALL {
            let spectra: BTreeMap<usize, Spectrum> = widths
                .iter()
                .map(|(&d, r)| (d, r.spectra.get(layer).clone()))
                .collect();
            let k = spectra
                .values()
                .map(Spectrum::len)
                .min()
                .unwrap_or(0)
                .min(DEFAULT_TOP_K);
            match alignment_report(&spectra, k) {
                Ok(report) => {
                    let pass = report.worst_pair_deviation <= ALIGNMENT_TOL;
                    by_decay
                        .entry((TransferKey { p: 0, ..*key }, layer))
                        .or_default()
                        .push((
                            f64::from_bits(key.p),
                            report.worst_pair_deviation,
                            report.widths.clone(),
                        ));
                    out.alignment.push(AlignmentEntry {
                        group: key.label(),
                        hyper_scaling: key.scaling,
                        eta_base: f64::from_bits(key.eta_base),
                        lambda_base: f64::from_bits(key.lambda_base),
                        p: f64::from_bits(key.p),
                        layer,
                        report,
                        pass,
                    });
                }
                Err(e) => out.notes.push(format!(
                    "alignment failed for {} {}: {e}",
                    key.label(),
                    layer.as_str()
                )),
            }
        }
    }
    for ((key, layer), entries) in &by_decay {
        let find = |p: f64| entries.iter().find(|e| e.0 == p);
        if let (Some(c), Some(s)) = (find(0.0), find(0.5)) {
            if c.2 != s.2 {
                out.notes.push(format!(
                    "decay comparison skipped for {}: width sets differ",
                    key.label()
                ));
                continue;
            }
            out.decay_comparisons.push(DecayComparison {
                eta_base: f64::from_bits(key.eta_base),
                lambda_base: f64::from_bits(key.lambda_base),
                layer: *layer,
                widths: s.2.clone(),
                deviation_constant: c.1,
                deviation_sqrt: s.1,
                pass: c.1 > s.1,
            });
        }
    }

    // Norm law: runs at one width with varying (η, λ).
    let mut by_width: BTreeMap<(usize, u64, usize), Vec<&LoadedRun>> = BTreeMap::new();
    for r in runs {
        let s = &r.manifest.spec;
        by_width
            .entry((s.width, s.steps, s.batch))
            .or_default()
            .push(r);
    }
    for ((width, _, _), members) in &by_width {
        let mut ratios: Vec<u64> = members
            .iter()
            .map(|r| (r.manifest.spec.eta / r.manifest.spec.lambda()).to_bits())
            .collect();
        ratios.sort_unstable();
        ratios.dedup();
        if ratios.len() < 2 {
            continue;
        }
        for layer in Layer::ALL {
            let pts: Vec<(f64, f64, f64)> = members
                .iter()
                .map(|r| {
                    let s = &r.manifest.spec;
                    (s.eta, s.lambda(), settled_rms(r, layer))
                })
                .collect();
            match norm_law_fit(&pts) {
                Ok(fit) => out.norm_law.push(NormLawEntry {
                    width: *width,
                    layer,
                    points: pts.len(),
                    pass: (fit.exponent - 1.0).abs() <= NORM_LAW_EXPONENT_TOL
                        && fit.r_squared >= NORM_LAW_MIN_R2,
                    fit,
                }),
                Err(e) => out.notes.push(format!(
                    "norm law failed at width {width} {}: {e}",
                    layer.as_str()
                )),
            }
        }
    }

    // Width exponent: runs sharing the actual (η, λ) across widths.
    let mut by_rates: BTreeMap<(u64, u64, u64, usize), Vec<&LoadedRun>> = BTreeMap::new();
    for r in runs {
        let s = &r.manifest.spec;
        by_rates
            .entry((s.eta.to_bits(), s.lambda().to_bits(), s.steps, s.batch))
            .or_default()
            .push(r);
    }
    for ((eta, lambda, _, _), members) in &by_rates {
        let mut widths: Vec<usize> = members.iter().map(|r| r.manifest.spec.width).collect();
        widths.sort_unstable();
        widths.dedup();
        if widths.len() < 3 {
            continue;
        }
        for layer in Layer::ALL {
            let pts: Vec<(usize, f64)> = members
                .iter()
                .map(|r| (r.manifest.spec.width, r.summary().sigma1(layer)))
                .collect();
            if let Ok(fit) = width_exponent(&pts) {
                let (lo, hi) = WIDTH_EXPONENT_RANGE;
                out.width_exponents.push(WidthExponentEntry {
                    eta: f64::from_bits(*eta),
                    lambda: f64::from_bits(*lambda),
                    layer,
                    widths: widths.clone(),
                    pass: (lo..=hi).contains(&fit.exponent),
                    fit,
                });
            }
        }
    }
    out
}

fn run_columns(r: &LoadedRun) -> Vec<String> {
    let s = &r.manifest.spec;
    vec![
        r.manifest.run_id.clone(),
        s.width.to_string(),
        fmt_f64(s.eta),
        fmt_f64(s.lambda()),
        fmt_f64(r.manifest.axes.p),
    ]
}

fn with_run(r: &LoadedRun, extra: impl IntoIterator<Item = String>) -> Vec<String> {
    let mut row = run_columns(r);
    row.extend(extra);
    row
}

/// Figure-ready CSVs, keyed by file name.
pub fn figure_tables(runs: &[LoadedRun], analysis: &Analysis) -> Vec<(&'static str, String)> {
    const RUN: [&str; 5] = ["run_id", "width", "eta", "lambda", "p"];
    let header = |extra: &[&'static str]| [&RUN[..], extra].concat();
    let mut norm = Table::new(&header(&["step", "w_in_rms", "w_out_rms"]));
    let mut gain = Table::new(&header(&["step", "layer", "gain"]));
    let mut spectrum = Table::new(&header(&["layer", "index", "sigma"]));
    let mut norm_law = Table::new(&header(&["layer", "sqrt_eta_over_lambda", "rms"]));
    for r in runs {
        for s in &r.trajectory {
            norm.row(with_run(
                r,
                [
                    s.step.to_string(),
                    fmt_f64(s.w_in_rms),
                    fmt_f64(s.w_out_rms),
                ],
            ));
        }
        for (step, layer, g) in &r.gains {
            gain.row(with_run(
                r,
                [step.to_string(), layer.as_str().to_string(), fmt_f64(*g)],
            ));
        }
        let spec = &r.manifest.spec;
        for layer in Layer::ALL {
            for (i, v) in r.spectra.get(layer).values().iter().enumerate() {
                spectrum.row(with_run(
                    r,
                    [layer.as_str().to_string(), (i + 1).to_string(), fmt_f64(*v)],
                ));
            }
            norm_law.row(with_run(
                r,
                [
                    layer.as_str().to_string(),
                    fmt_f64((spec.eta / spec.lambda()).sqrt()),
                    fmt_f64(settled_rms(r, layer)),
                ],
            ));
        }
    }
    let mut alignment = Table::new(&[
        "group",
        "layer",
        "from_width",
        "to_width",
        "mean_abs_log2_ratio",
        "max_abs_log2_ratio",
    ]);
    for e in &analysis.alignment {
        for p in &e.report.pairs {
            alignment.row([
                e.group.clone(),
                e.layer.as_str().to_string(),
                p.from_width.to_string(),
                p.to_width.to_string(),
                fmt_f64(p.mean_abs_log2_ratio),
                fmt_f64(p.max_abs_log2_ratio),
            ]);
        }
    }
    vec![
        ("fig_norm.csv", norm.finish()),
        ("fig_gain.csv", gain.finish()),
        ("fig_spectrum.csv", spectrum.finish()),
        ("fig_norm_law.csv", norm_law.finish()),
        ("fig_alignment.csv", alignment.finish()),
    ]
}

/// Analyzes a sweep directory and writes `analysis.json` and the figure
/// tables next to the runs.
pub fn analyze_dir(dir: &Path) -> Result<Analysis> {
    let (runs, failed) = load_runs(dir)?;
    let analysis = analyze_runs(&runs, &failed);
    for (name, body) in figure_tables(&runs, &analysis) {
        write_file(&dir.join(name), &body)?;
    }
    write_json(&dir.join("analysis.json"), &analysis)?;
    Ok(analysis)
}
