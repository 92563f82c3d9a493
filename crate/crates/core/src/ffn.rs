//! Two-layer ReLU feed-forward block `y = W_out · relu(W_in · x)` trained by
//! AdamW on synthetic data.
//!
//! Inputs `x` and upstream gradients `∂L/∂y` are drawn i.i.d. standard normal
//! at every step, so there is no loss to minimize: the weights are driven
//! only by gradient noise, weight decay and the optimizer's normalization.
//! Batch gradients are the mean over the batch columns:
//!
//! ```text
//! G_out = G_y · relu(Z)ᵀ / B
//! G_in  = ((W_outᵀ G_y) ⊙ 1[Z > 0]) · Xᵀ / B,   Z = W_in X
//! ```

use serde::{Deserialize, Serialize};

use crate::diagnostics::GainRecord;
use crate::error::{Error, Result};
use crate::linalg::{
    derive_seed, fill_normal, gaussian_matrix, gemm, rng_from_seed, singular_spectrum, Matrix,
    Spectrum, Trans,
};
use crate::optim::{clip_global_norm_in_place, AdamWConfig, AdamWState, Anneal, Schedule};

const TAG_INIT: u64 = 1;
const TAG_INPUT: u64 = 2;
const TAG_UPSTREAM: u64 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layer {
    WIn,
    WOut,
}

impl Layer {
    pub const ALL: [Layer; 2] = [Layer::WIn, Layer::WOut];

    pub fn as_str(self) -> &'static str {
        match self {
            Layer::WIn => "w_in",
            Layer::WOut => "w_out",
        }
    }

    pub fn parse(s: &str) -> Option<Layer> {
        match s {
            "w_in" => Some(Layer::WIn),
            "w_out" => Some(Layer::WOut),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FFNParams {
    pub w_in: Matrix,
    pub w_out: Matrix,
}

impl FFNParams {
    pub fn new(w_in: Matrix, w_out: Matrix) -> Result<Self> {
        let d = w_in.rows();
        if w_in.shape() != (d, d) || w_out.shape() != (d, d) {
            return Err(Error::ShapeMismatch {
                op: "FFNParams::new",
                left: w_in.shape(),
                right: w_out.shape(),
            });
        }
        Ok(FFNParams { w_in, w_out })
    }

    pub fn width(&self) -> usize {
        self.w_in.rows()
    }

    pub fn layer(&self, layer: Layer) -> &Matrix {
        match layer {
            Layer::WIn => &self.w_in,
            Layer::WOut => &self.w_out,
        }
    }
}

/// Both matrices i.i.d. `N(0, sigma²)`, from independent sub-streams of `seed`.
pub fn init(d: usize, sigma: f64, seed: u64) -> Result<FFNParams> {
    if d == 0 {
        return Err(Error::invalid("width must be at least 1"));
    }
    let w_in = gaussian_matrix(derive_seed(seed, &[TAG_INIT, 0]), d, d, sigma)?;
    let w_out = gaussian_matrix(derive_seed(seed, &[TAG_INIT, 1]), d, d, sigma)?;
    FFNParams::new(w_in, w_out)
}

/// Inputs `x` and upstream gradients `g_y`, both `d x B` with samples as columns.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticBatch {
    pub x: Matrix,
    pub g_y: Matrix,
}

impl SyntheticBatch {
    pub fn new(x: Matrix, g_y: Matrix) -> Result<Self> {
        if x.shape() != g_y.shape() {
            return Err(Error::ShapeMismatch {
                op: "SyntheticBatch::new",
                left: x.shape(),
                right: g_y.shape(),
            });
        }
        Ok(SyntheticBatch { x, g_y })
    }

    /// Standard normal draws; `x` and `g_y` come from independent sub-streams.
    pub fn sample(d: usize, batch: usize, seed: u64) -> Result<Self> {
        let x = gaussian_matrix(derive_seed(seed, &[TAG_INPUT]), d, batch, 1.0)?;
        let g_y = gaussian_matrix(derive_seed(seed, &[TAG_UPSTREAM]), d, batch, 1.0)?;
        Ok(SyntheticBatch { x, g_y })
    }
}

fn check_batch(params: &FFNParams, x: &Matrix, op: &'static str) -> Result<()> {
    if x.rows() != params.width() {
        return Err(Error::ShapeMismatch {
            op,
            left: params.w_in.shape(),
            right: x.shape(),
        });
    }
    Ok(())
}

fn relu_in_place(m: &mut Matrix) {
    m.as_mut_slice().iter_mut().for_each(|v| *v = v.max(0.0));
}

/// Returns `(H, Y)` with `H = relu(W_in X)` and `Y = W_out H`.
pub fn forward(params: &FFNParams, x: &Matrix) -> Result<(Matrix, Matrix)> {
    check_batch(params, x, "forward")?;
    let mut h = params.w_in.matmul(x)?;
    relu_in_place(&mut h);
    let y = params.w_out.matmul(&h)?;
    Ok((h, y))
}

/// `(G_in, G_out)` for upstream gradient `g_y`, averaged over the batch.
/// The ReLU derivative at exactly zero is taken as 0.
pub fn analytic_grads(params: &FFNParams, x: &Matrix, g_y: &Matrix) -> Result<(Matrix, Matrix)> {
    check_batch(params, x, "analytic_grads")?;
    if g_y.shape() != x.shape() {
        return Err(Error::ShapeMismatch {
            op: "analytic_grads",
            left: x.shape(),
            right: g_y.shape(),
        });
    }
    let mut ws = Workspace::new(params.width(), x.cols());
    ws.grads(params, x, g_y);
    ws.g_in.ensure_finite("analytic_grads")?;
    ws.g_out.ensure_finite("analytic_grads")?;
    Ok((ws.g_in, ws.g_out))
}

/// `⟨G_y, Y⟩ / B`; its gradient in `Y` is `G_y / B`, matching the batch mean
/// used by [`analytic_grads`].
pub fn surrogate_loss(params: &FFNParams, x: &Matrix, g_y: &Matrix) -> Result<f64> {
    let (_, y) = forward(params, x)?;
    if y.shape() != g_y.shape() {
        return Err(Error::ShapeMismatch {
            op: "surrogate_loss",
            left: y.shape(),
            right: g_y.shape(),
        });
    }
    let dot: f64 = y
        .as_slice()
        .iter()
        .zip(g_y.as_slice())
        .map(|(a, b)| a * b)
        .sum();
    Ok(dot / x.cols() as f64)
}

/// Preallocated buffers for one training run.
struct Workspace {
    z: Matrix,
    h: Matrix,
    y: Matrix,
    back: Matrix,
    g_in: Matrix,
    g_out: Matrix,
}

impl Workspace {
    fn new(d: usize, batch: usize) -> Self {
        Workspace {
            z: Matrix::zeros(d, batch),
            h: Matrix::zeros(d, batch),
            y: Matrix::zeros(d, batch),
            back: Matrix::zeros(d, batch),
            g_in: Matrix::zeros(d, d),
            g_out: Matrix::zeros(d, d),
        }
    }

    fn hidden(&mut self, params: &FFNParams, x: &Matrix) {
        gemm(1.0, &params.w_in, Trans::No, x, Trans::No, 0.0, &mut self.z);
        for (h, &z) in self.h.as_mut_slice().iter_mut().zip(self.z.as_slice()) {
            *h = z.max(0.0);
        }
    }

    fn output(&mut self, params: &FFNParams) {
        gemm(
            1.0,
            &params.w_out,
            Trans::No,
            &self.h,
            Trans::No,
            0.0,
            &mut self.y,
        );
    }

    fn grads(&mut self, params: &FFNParams, x: &Matrix, g_y: &Matrix) {
        let inv_b = 1.0 / x.cols() as f64;
        self.hidden(params, x);
        gemm(
            inv_b,
            g_y,
            Trans::No,
            &self.h,
            Trans::Yes,
            0.0,
            &mut self.g_out,
        );
        gemm(
            1.0,
            &params.w_out,
            Trans::Yes,
            g_y,
            Trans::No,
            0.0,
            &mut self.back,
        );
        for (b, &z) in self.back.as_mut_slice().iter_mut().zip(self.z.as_slice()) {
            if z <= 0.0 {
                *b = 0.0;
            }
        }
        gemm(
            inv_b,
            &self.back,
            Trans::No,
            x,
            Trans::Yes,
            0.0,
            &mut self.g_in,
        );
    }
}

/// Complete description of one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub width: usize,
    pub steps: u64,
    pub batch: usize,
    pub seed: u64,
    /// Peak learning rate shared by both matrices.
    pub eta: f64,
    pub init_std: f64,
    /// Betas, epsilon and the weight decay `λ` shared by both matrices.
    pub adamw: AdamWConfig,
    pub schedule: Schedule,
    /// Global gradient-norm clip over both matrices, applied before the
    /// moment update.
    pub clip: Option<f64>,
    pub record_every: u64,
    pub spectrum_k: usize,
    /// Draw a fresh upstream gradient every step; otherwise reuse the first.
    pub resample_upstream: bool,
    /// Multiplier on the upstream gradient; 0 switches gradients off.
    pub upstream_scale: f64,
}

pub const DEFAULT_BATCH: usize = 32;
pub const DEFAULT_WARMUP: u64 = 1000;
pub const DEFAULT_RECORD_EVERY: u64 = 100;

impl RunSpec {
    /// Spec with the default batch, AdamW betas/epsilon, linear warmup of
    /// up to 1000 steps without annealing, no clipping and top-8 spectra.
    pub fn new(width: usize, steps: u64, eta: f64, lambda: f64, init_std: f64) -> Self {
        RunSpec {
            width,
            steps,
            batch: DEFAULT_BATCH,
            seed: 0,
            eta,
            init_std,
            adamw: AdamWConfig::default().with_weight_decay(lambda),
            schedule: Schedule {
                warmup_steps: DEFAULT_WARMUP.min(steps),
                total_steps: steps,
                anneal: Anneal::None,
                floor_fraction: 0.01,
            },
            clip: None,
            record_every: DEFAULT_RECORD_EVERY,
            spectrum_k: crate::diagnostics::DEFAULT_TOP_K.min(width),
            resample_upstream: true,
            upstream_scale: 1.0,
        }
    }

    pub fn lambda(&self) -> f64 {
        self.adamw.weight_decay
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid(m));
        if self.width == 0 || self.steps == 0 || self.batch == 0 {
            return bad("width, steps and batch must all be at least 1".into());
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return bad(format!("eta must be positive, got {}", self.eta));
        }
        if !(self.init_std > 0.0 && self.init_std.is_finite()) {
            return bad(format!("init_std must be positive, got {}", self.init_std));
        }
        self.adamw.validate()?;
        self.schedule.validate()?;
        if self.schedule.total_steps != self.steps {
            return bad(format!(
                "schedule covers {} steps but the run has {}",
                self.schedule.total_steps, self.steps
            ));
        }
        if let Some(c) = self.clip {
            if !(c > 0.0 && c.is_finite()) {
                return bad(format!("clip must be positive, got {c}"));
            }
        }
        if self.record_every == 0 {
            return bad("record_every must be at least 1".into());
        }
        if self.spectrum_k == 0 || self.spectrum_k > self.width {
            return bad(format!(
                "spectrum_k must lie in 1..={}, got {}",
                self.width, self.spectrum_k
            ));
        }
        if !(self.upstream_scale >= 0.0 && self.upstream_scale.is_finite()) {
            return bad("upstream_scale must be finite and non-negative".into());
        }
        Ok(())
    }

    fn is_record_step(&self, step: u64) -> bool {
        step.is_multiple_of(self.record_every) || step == self.steps
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormSample {
    pub step: u64,
    pub w_in_rms: f64,
    pub w_out_rms: f64,
    pub lr: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GainSample {
    pub layer: Layer,
    pub record: GainRecord,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSpectra {
    pub w_in: Spectrum,
    pub w_out: Spectrum,
}

impl LayerSpectra {
    pub fn get(&self, layer: Layer) -> &Spectrum {
        match layer {
            Layer::WIn => &self.w_in,
            Layer::WOut => &self.w_out,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub spec: RunSpec,
    /// Weight norms after the update at every recording step.
    pub trajectory: Vec<NormSample>,
    /// Gains on the recording step's batch, before that step's update.
    pub gains: Vec<GainSample>,
    pub spectra: LayerSpectra,
    pub final_params: FFNParams,
}

impl RunResult {
    pub fn norm_trajectory(&self, layer: Layer) -> Vec<(u64, f64)> {
        self.trajectory
            .iter()
            .map(|s| {
                let v = match layer {
                    Layer::WIn => s.w_in_rms,
                    Layer::WOut => s.w_out_rms,
                };
                (s.step, v)
            })
            .collect()
    }

    pub fn final_rms(&self, layer: Layer) -> f64 {
        self.final_params.layer(layer).rms_norm()
    }

    pub fn final_gain(&self, layer: Layer) -> Option<GainRecord> {
        self.gains
            .iter()
            .rev()
            .find(|g| g.layer == layer)
            .map(|g| g.record)
    }
}

/// Observer called at every recording step with the post-update weights.
pub trait Recorder {
    fn on_record(&mut self, step: u64, params: &FFNParams);
}

impl<F: FnMut(u64, &FFNParams)> Recorder for F {
    fn on_record(&mut self, step: u64, params: &FFNParams) {
        self(step, params)
    }
}

pub fn train(spec: &RunSpec) -> Result<RunResult> {
    train_with(spec, None)
}

/// Runs `spec.steps` AdamW steps on fresh synthetic batches.
///
/// Fails with [`Error::Divergence`] naming the first step that produced
/// non-finite weights.
pub fn train_with(spec: &RunSpec, mut recorder: Option<&mut dyn Recorder>) -> Result<RunResult> {
    spec.validate()?;
    let d = spec.width;
    let b = spec.batch;
    let mut params = init(d, spec.init_std, spec.seed)?;
    let mut st_in = AdamWState::new(d, d);
    let mut st_out = AdamWState::new(d, d);
    let mut ws = Workspace::new(d, b);
    let mut x = Matrix::zeros(d, b);
    let mut g_y = Matrix::zeros(d, b);
    let mut grads = [Matrix::zeros(d, d), Matrix::zeros(d, d)];

    let expected_records = (spec.steps / spec.record_every + 1) as usize;
    let mut trajectory = Vec::with_capacity(expected_records);
    let mut gains = Vec::with_capacity(2 * expected_records);

    if spec.upstream_scale > 0.0 && !spec.resample_upstream {
        let mut rng = rng_from_seed(derive_seed(spec.seed, &[TAG_UPSTREAM, 1]));
        fill_normal(&mut rng, spec.upstream_scale, g_y.as_mut_slice());
    }

    for step in 1..=spec.steps {
        let lr = spec.schedule.lr_at(spec.eta, step)?;
        fill_normal(
            &mut rng_from_seed(derive_seed(spec.seed, &[TAG_INPUT, step])),
            1.0,
            x.as_mut_slice(),
        );
        if spec.upstream_scale > 0.0 && spec.resample_upstream {
            fill_normal(
                &mut rng_from_seed(derive_seed(spec.seed, &[TAG_UPSTREAM, step])),
                spec.upstream_scale,
                g_y.as_mut_slice(),
            );
        }

        ws.grads(&params, &x, &g_y);
        let record = spec.is_record_step(step);
        if record {
            ws.output(&params);
            gains.push(GainSample {
                layer: Layer::WIn,
                record: GainRecord::from_io(step, &x, &ws.z)?,
            });
            gains.push(GainSample {
                layer: Layer::WOut,
                record: GainRecord::from_io(step, &ws.h, &ws.y)?,
            });
        }

        std::mem::swap(&mut grads[0], &mut ws.g_in);
        std::mem::swap(&mut grads[1], &mut ws.g_out);
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::Divergence {
                step,
                layer: "gradients",
            });
        }
        if let Some(max_norm) = spec.clip {
            clip_global_norm_in_place(&mut grads, max_norm)?;
        }
        st_in.step(&mut params.w_in, &grads[0], &spec.adamw, lr)?;
        st_out.step(&mut params.w_out, &grads[1], &spec.adamw, lr)?;
        std::mem::swap(&mut grads[0], &mut ws.g_in);
        std::mem::swap(&mut grads[1], &mut ws.g_out);
        for layer in Layer::ALL {
            if !params.layer(layer).is_finite() {
                return Err(Error::Divergence {
                    step,
                    layer: layer.as_str(),
                });
            }
        }

        if record {
            trajectory.push(NormSample {
                step,
                w_in_rms: params.w_in.rms_norm(),
                w_out_rms: params.w_out.rms_norm(),
                lr,
            });
            if let Some(r) = recorder.as_deref_mut() {
                r.on_record(step, &params);
            }
        }
    }

    let spectra = LayerSpectra {
        w_in: singular_spectrum(&params.w_in, Some(spec.spectrum_k))?,
        w_out: singular_spectrum(&params.w_out, Some(spec.spectrum_k))?,
    };
    Ok(RunResult {
        spec: spec.clone(),
        trajectory,
        gains,
        spectra,
        final_params: params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_matmul(a: &Matrix, b: &Matrix) -> Vec<f64> {
        let mut out = vec![0.0; a.rows() * b.cols()];
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for k in 0..a.cols() {
                    s += a.get(i, k) * b.get(k, j);
                }
                out[i * b.cols() + j] = s;
            }
        }
        out
    }

    #[test]
    fn identity_passes_positive_inputs() {
        let p = FFNParams::new(Matrix::identity(3), Matrix::identity(3)).unwrap();
        let x = Matrix::from_rows(&[&[1.0, 2.0], &[0.5, 3.0], &[4.0, 0.1]]).unwrap();
        let (_, y) = forward(&p, &x).unwrap();
        assert_eq!(y, x);
        let neg = x.scaled(-1.0).unwrap();
        let (h, y) = forward(&p, &neg).unwrap();
        assert!(h.as_slice().iter().chain(y.as_slice()).all(|&v| v == 0.0));
    }

    #[test]
    fn forward_matches_scalar_loops() {
        let p = init(8, 0.4, 3).unwrap();
        let x = gaussian_matrix(4, 8, 5, 1.0).unwrap();
        let mut h = naive_matmul(&p.w_in, &x);
        h.iter_mut().for_each(|v| *v = v.max(0.0));
        let hm = Matrix::from_vec(8, 5, h.clone()).unwrap();
        let y = naive_matmul(&p.w_out, &hm);
        let (h2, y2) = forward(&p, &x).unwrap();
        for (a, b) in h2.as_slice().iter().zip(&h) {
            assert!((a - b).abs() <= 1e-14 * b.abs().max(1.0));
        }
        for (a, b) in y2.as_slice().iter().zip(&y) {
            assert!((a - b).abs() <= 1e-14 * b.abs().max(1.0));
        }
    }

    #[test]
    fn hand_evaluated_chain_rule() {
        let p = FFNParams::new(Matrix::identity(2), Matrix::identity(2)).unwrap();
        let x = Matrix::column(&[1.0, -1.0]).unwrap();
        let g = Matrix::column(&[1.0, 1.0]).unwrap();
        let (g_in, g_out) = analytic_grads(&p, &x, &g).unwrap();
        assert_eq!(g_out.as_slice(), &[1.0, 0.0, 1.0, 0.0]);
        assert_eq!(g_in.as_slice(), &[1.0, -1.0, 0.0, 0.0]);
    }

    #[test]
    fn null_upstream_gives_zero_grads() {
        let p = init(5, 0.3, 1).unwrap();
        let x = gaussian_matrix(2, 5, 3, 1.0).unwrap();
        let (g_in, g_out) = analytic_grads(&p, &x, &Matrix::zeros(5, 3)).unwrap();
        assert!(g_in
            .as_slice()
            .iter()
            .chain(g_out.as_slice())
            .all(|&v| v == 0.0));
    }

    #[test]
    fn grads_match_finite_differences() {
        for seed in 0..5u64 {
            let d = 8;
            let p = init(d, 0.35, seed).unwrap();
            let batch = SyntheticBatch::sample(d, 4, seed + 100).unwrap();
            let (g_in, g_out) = analytic_grads(&p, &batch.x, &batch.g_y).unwrap();
            let h = 1e-5;
            for layer in Layer::ALL {
                let analytic = match layer {
                    Layer::WIn => &g_in,
                    Layer::WOut => &g_out,
                };
                for idx in 0..d * d {
                    let bump = |delta: f64| {
                        let mut q = p.clone();
                        let m = match layer {
                            Layer::WIn => &mut q.w_in,
                            Layer::WOut => &mut q.w_out,
                        };
                        m.as_mut_slice()[idx] += delta;
                        surrogate_loss(&q, &batch.x, &batch.g_y).unwrap()
                    };
                    let fd = (bump(h) - bump(-h)) / (2.0 * h);
                    let a = analytic.as_slice()[idx];
                    let rel = (fd - a).abs() / fd.abs().max(a.abs()).max(1e-6);
                    assert!(rel <= 1e-4, "{layer:?}[{idx}] fd {fd} analytic {a}");
                }
            }
        }
    }

    #[test]
    fn shape_errors() {
        let p = init(4, 0.1, 0).unwrap();
        assert!(forward(&p, &Matrix::zeros(3, 2)).is_err());
        assert!(analytic_grads(&p, &Matrix::zeros(4, 2), &Matrix::zeros(4, 3)).is_err());
        assert!(FFNParams::new(Matrix::identity(2), Matrix::identity(3)).is_err());
        assert!(SyntheticBatch::new(Matrix::zeros(2, 2), Matrix::zeros(2, 1)).is_err());
    }

    #[test]
    fn init_statistics_and_degenerate_width() {
        let p = init(256, 0.02, 9).unwrap();
        for m in [&p.w_in, &p.w_out] {
            let n = m.len() as f64;
            let mean = m.as_slice().iter().sum::<f64>() / n;
            let sd = (m.as_slice().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            assert!((sd / 0.02 - 1.0).abs() < 0.05, "sd {sd}");
        }
        assert_ne!(p.w_in, p.w_out);
        let tiny = init(1, 0.5, 1).unwrap();
        assert_eq!(tiny.w_in.shape(), (1, 1));
        assert!(init(0, 0.5, 1).is_err());
    }

    #[test]
    fn zero_upstream_leaves_weights_unchanged() {
        let mut spec = RunSpec::new(6, 1, 1e-2, 0.0, 0.3);
        spec.upstream_scale = 0.0;
        spec.record_every = 1;
        let r = train(&spec).unwrap();
        assert_eq!(r.final_params, init(6, 0.3, spec.seed).unwrap());
        assert_eq!(r.trajectory.len(), 1);
    }

    #[test]
    fn training_is_deterministic_and_records_last_step() {
        let mut spec = RunSpec::new(16, 57, 1e-2, 0.1, 0.1);
        spec.record_every = 10;
        spec.seed = 4;
        let a = train(&spec).unwrap();
        let b = train(&spec).unwrap();
        assert_eq!(a, b);
        let steps: Vec<u64> = a.trajectory.iter().map(|s| s.step).collect();
        assert_eq!(steps, vec![10, 20, 30, 40, 50, 57]);
        assert_eq!(a.gains.len(), 2 * steps.len());
        assert_eq!(a.spectra.w_in.len(), spec.spectrum_k);
        spec.seed = 5;
        assert_ne!(train(&spec).unwrap().final_params, a.final_params);
    }

    #[test]
    fn recorder_sees_every_record_step() {
        let mut spec = RunSpec::new(8, 30, 1e-2, 0.1, 0.1);
        spec.record_every = 7;
        let mut seen = Vec::new();
        let mut rec = |step: u64, p: &FFNParams| seen.push((step, p.w_in.rms_norm()));
        let r = train_with(&spec, Some(&mut rec)).unwrap();
        let expect: Vec<(u64, f64)> = r.trajectory.iter().map(|s| (s.step, s.w_in_rms)).collect();
        assert_eq!(seen, expect);
    }

    #[test]
    fn divergence_names_the_step() {
        let mut spec = RunSpec::new(4, 50, 1e300, 0.0, 0.1);
        spec.schedule.warmup_steps = 0;
        spec.adamw.weight_decay = 1e10;
        match train(&spec) {
            Err(Error::Divergence { step, .. }) => assert!(step >= 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        let ok = RunSpec::new(8, 10, 1e-3, 0.1, 0.02);
        ok.validate().unwrap();
        let mut s = ok.clone();
        s.spectrum_k = 9;
        assert!(s.validate().is_err());
        let mut s = ok.clone();
        s.schedule.total_steps = 11;
        assert!(s.validate().is_err());
        let mut s = ok;
        s.clip = Some(0.0);
        assert!(s.validate().is_err());
    }
}
