//! On-disk layout of a run directory and the CSV encoding shared by all
//! writers and readers.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diagnostics::SteadyStateVerdict;
use crate::error::{Error, Result};
use crate::ffn::{GainSample, Layer, LayerSpectra, NormSample, RunSpec};
use crate::linalg::Spectrum;
use crate::scaling::ScaledHyper;

use super::config::HyperScaling;
use super::sweep::CellAxes;

pub const MANIFEST: &str = "manifest.json";
pub const TRAJECTORY: &str = "trajectory.csv";
pub const GAINS: &str = "gains.csv";
pub const SPECTRUM: &str = "spectrum.csv";
pub const SUMMARY: &str = "summary.csv";
pub const FORMAT_VERSION: u32 = 1;

pub const TRAJECTORY_HEADER: [&str; 4] = ["step", "w_in_rms", "w_out_rms", "lr"];
pub const GAINS_HEADER: [&str; 5] = ["step", "layer", "in_rms", "out_rms", "gain"];
pub const SPECTRUM_HEADER: [&str; 3] = ["layer", "index", "sigma"];

/// Seventeen significant digits: enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Ok,
    Diverged,
    Failed,
}

impl RunStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::Ok => "ok",
            RunStatus::Diverged => "diverged",
            RunStatus::Failed => "failed",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSummary {
    pub w_in_rms: f64,
    pub w_out_rms: f64,
    pub sigma1_w_in: f64,
    pub sigma1_w_out: f64,
    pub gain_w_in: Option<f64>,
    pub gain_w_out: Option<f64>,
    /// `None` when the trajectory is too short to judge.
    pub steady_w_in: Option<SteadyStateVerdict>,
    pub steady_w_out: Option<SteadyStateVerdict>,
}

impl RunSummary {
    pub fn final_rms(&self, layer: Layer) -> f64 {
        match layer {
            Layer::WIn => self.w_in_rms,
            Layer::WOut => self.w_out_rms,
        }
    }

    pub fn sigma1(&self, layer: Layer) -> f64 {
        match layer {
            Layer::WIn => self.sigma1_w_in,
            Layer::WOut => self.sigma1_w_out,
        }
    }

    pub fn steady(&self, layer: Layer) -> Option<&SteadyStateVerdict> {
        match layer {
            Layer::WIn => self.steady_w_in.as_ref(),
            Layer::WOut => self.steady_w_out.as_ref(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    pub run_id: String,
    pub cell: usize,
    pub axes: CellAxes,
    pub hyper_scaling: HyperScaling,
    pub timescale_boost: f64,
    pub plan: ScaledHyper,
    pub spec: RunSpec,
    pub status: RunStatus,
    pub error: Option<String>,
    pub summary: Option<RunSummary>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::Manifest {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        if m.format_version != FORMAT_VERSION {
            return Err(Error::Manifest {
                path: path.to_path_buf(),
                message: format!("unsupported format_version {}", m.format_version),
            });
        }
        if m.status == RunStatus::Ok && m.summary.is_none() {
            return Err(Error::Manifest {
                path: path.to_path_buf(),
                message: "status is ok but summary is missing".into(),
            });
        }
        Ok(m)
    }
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, &text)
}

pub(crate) fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// CSV table assembled in memory with LF line endings.
pub(crate) struct Table(csv::Writer<Vec<u8>>);

impl Table {
    pub(crate) fn new(header: &[&str]) -> Self {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(header).expect("in-memory write");
        Table(w)
    }

    pub(crate) fn row<I, T>(&mut self, fields: I)
    where
        I: IntoIterator<Item = T>,
        T: AsRef<[u8]>,
    {
        self.0.write_record(fields).expect("in-memory write");
    }

    pub(crate) fn finish(self) -> String {
        let bytes = self.0.into_inner().expect("in-memory flush");
        String::from_utf8(bytes).expect("fields are UTF-8")
    }
}

pub fn trajectory_csv(samples: &[NormSample]) -> String {
    let mut t = Table::new(&TRAJECTORY_HEADER);
    for s in samples {
        t.row([
            s.step.to_string(),
            fmt_f64(s.w_in_rms),
            fmt_f64(s.w_out_rms),
            fmt_f64(s.lr),
        ]);
    }
    t.finish()
}

pub fn gains_csv(samples: &[GainSample]) -> String {
    let mut t = Table::new(&GAINS_HEADER);
    for s in samples {
        let r = &s.record;
        t.row([
            r.step.to_string(),
            s.layer.as_str().to_string(),
            fmt_f64(r.in_rms),
            fmt_f64(r.out_rms),
            fmt_f64(r.gain),
        ]);
    }
    t.finish()
}

pub fn spectrum_csv(spectra: &LayerSpectra) -> String {
    let mut t = Table::new(&SPECTRUM_HEADER);
    for layer in Layer::ALL {
        for (i, v) in spectra.get(layer).values().iter().enumerate() {
            t.row([layer.as_str().to_string(), (i + 1).to_string(), fmt_f64(*v)]);
        }
    }
    t.finish()
}

/// Reads a CSV whose header must equal `header`; every row must have the
/// same number of fields.
pub fn read_csv(path: &Path, header: &[&str]) -> Result<Vec<csv::StringRecord>> {
    let corrupt = |message: String| Error::Manifest {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .from_path(path)
        .map_err(|e| corrupt(e.to_string()))?;
    let found = reader.headers().map_err(|e| corrupt(e.to_string()))?;
    if found.is_empty() {
        return Err(corrupt("empty file".into()));
    }
    if found.iter().ne(header.iter().copied()) {
        return Err(corrupt(format!(
            "expected header `{}`, found `{}`",
            header.join(","),
            found.iter().collect::<Vec<_>>().join(",")
        )));
    }
    reader
        .records()
        .map(|r| r.map_err(|e| corrupt(e.to_string())))
        .collect()
}

fn parse_field<T: std::str::FromStr>(path: &Path, field: &str) -> Result<T> {
    field.parse().map_err(|_| Error::Manifest {
        path: path.to_path_buf(),
        message: format!("cannot parse `{field}`"),
    })
}

fn parse_layer(path: &Path, field: &str) -> Result<Layer> {
    Layer::parse(field).ok_or_else(|| Error::Manifest {
        path: path.to_path_buf(),
        message: format!("unknown layer `{field}`"),
    })
}

pub fn read_trajectory(path: &Path) -> Result<Vec<NormSample>> {
    read_csv(path, &TRAJECTORY_HEADER)?
        .iter()
        .map(|r| {
            Ok(NormSample {
                step: parse_field(path, &r[0])?,
                w_in_rms: parse_field(path, &r[1])?,
                w_out_rms: parse_field(path, &r[2])?,
                lr: parse_field(path, &r[3])?,
            })
        })
        .collect()
}

pub fn read_gains(path: &Path) -> Result<Vec<(u64, Layer, f64)>> {
    read_csv(path, &GAINS_HEADER)?
        .iter()
        .map(|r| {
            Ok((
                parse_field(path, &r[0])?,
                parse_layer(path, &r[1])?,
                parse_field(path, &r[4])?,
            ))
        })
        .collect()
}

pub fn read_spectra(path: &Path) -> Result<LayerSpectra> {
    let mut w_in = Vec::new();
    let mut w_out = Vec::new();
    for r in read_csv(path, &SPECTRUM_HEADER)? {
        let v: f64 = parse_field(path, &r[2])?;
        match parse_layer(path, &r[0])? {
            Layer::WIn => w_in.push(v),
            Layer::WOut => w_out.push(v),
        }
    }
    let spectrum = |v: Vec<f64>| {
        Spectrum::from_values(v).map_err(|e| Error::Manifest {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    };
    Ok(LayerSpectra {
        w_in: spectrum(w_in)?,
        w_out: spectrum(w_out)?,
    })
}

/// A run directory with everything the analysis needs.
#[derive(Clone, Debug)]
pub struct LoadedRun {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub trajectory: Vec<NormSample>,
    pub gains: Vec<(u64, Layer, f64)>,
    pub spectra: LayerSpectra,
}

impl LoadedRun {
    pub fn load(dir: &Path) -> Result<Self> {
        Ok(LoadedRun {
            dir: dir.to_path_buf(),
            manifest: Manifest::load(&dir.join(MANIFEST))?,
            trajectory: read_trajectory(&dir.join(TRAJECTORY))?,
            gains: read_gains(&dir.join(GAINS))?,
            spectra: read_spectra(&dir.join(SPECTRUM))?,
        })
    }

    pub fn summary(&self) -> &RunSummary {
        self.manifest
            .summary
            .as_ref()
            .expect("loaded runs have status ok")
    }
}
