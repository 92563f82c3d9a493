//! Parameter classes and the width-scaling planner.
//!
//! With width multiplier `m = d / d_base`:
//!
//! | class       | init std          | learning rate  | weight decay       |
//! |-------------|-------------------|----------------|--------------------|
//! | vector-like | `σ_base`          | `η_base`       | `0`                |
//! | matrix-like | `σ_base · m^-1/2` | `η_base · m^-1`| `λ_base · m^p`     |
//!
//! `p = 1/2` is the default decay rule. Attention logits are scaled by
//! `d_base^-1/2 · m^-1`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParamClass {
    /// Entry count grows linearly with width (norm gains, biases, embeddings
    /// with a fixed vocabulary).
    VectorLike,
    /// Entry count grows quadratically with width (dense projections).
    MatrixLike,
}

/// Largest `dim / d` (or `d / dim`) ratio still treated as tied to the width.
pub const MAX_EXPANSION_RATIO: f64 = 16.0;

fn tied_to_width(dim: usize, d: usize, vocab_size: Option<usize>) -> bool {
    if vocab_size == Some(dim) {
        return false;
    }
    let ratio = dim as f64 / d as f64;
    (1.0 / MAX_EXPANSION_RATIO..=MAX_EXPANSION_RATIO).contains(&ratio)
}

/// Classifies a 1-D (`cols == None`) or 2-D parameter at width `d`.
///
/// A dimension counts as width-tied when it is not the vocabulary size and
/// lies within a factor [`MAX_EXPANSION_RATIO`] of `d`. Rectangular `κd x d`
/// projections are matrix-like, exactly like square ones.
pub fn classify(
    shape: (usize, Option<usize>),
    d: usize,
    vocab_size: Option<usize>,
) -> Result<ParamClass> {
    let (rows, cols) = shape;
    if d == 0 || rows == 0 || cols == Some(0) {
        return Err(Error::invalid(
            "shape dimensions and width must be positive",
        ));
    }
    let tied = |n| tied_to_width(n, d, vocab_size);
    match cols {
        None if tied(rows) => Ok(ParamClass::VectorLike),
        Some(c) => match (tied(rows), tied(c)) {
            (true, true) => Ok(ParamClass::MatrixLike),
            (true, false) | (false, true) => Ok(ParamClass::VectorLike),
            (false, false) => Err(Error::invalid(format!(
                "shape ({rows}, {c}) has no dimension tied to width {d}"
            ))),
        },
        None => Err(Error::invalid(format!(
            "shape ({rows},) is not tied to width {d}"
        ))),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaseHyper {
    pub sigma_base: f64,
    pub eta_base: f64,
    pub lambda_base: f64,
    pub d_base: usize,
}

impl Default for BaseHyper {
    fn default() -> Self {
        BaseHyper {
            sigma_base: 2.0e-2,
            eta_base: 1.0e-3,
            lambda_base: 1.0e-1,
            d_base: 256,
        }
    }
}

impl BaseHyper {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !pos(self.sigma_base) || !pos(self.eta_base) {
            return Err(Error::invalid("sigma_base and eta_base must be positive"));
        }
        if !(self.lambda_base >= 0.0 && self.lambda_base.is_finite()) {
            return Err(Error::invalid("lambda_base must be non-negative"));
        }
        if self.d_base == 0 {
            return Err(Error::invalid("d_base must be at least 1"));
        }
        Ok(())
    }
}

/// Matrix-like weight decay `λ₂(d) = λ_base · m^exponent`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayRule {
    pub exponent: f64,
}

impl DecayRule {
    pub const CONSTANT: DecayRule = DecayRule { exponent: 0.0 };
    pub const SQRT: DecayRule = DecayRule { exponent: 0.5 };
    pub const LINEAR: DecayRule = DecayRule { exponent: 1.0 };
}

impl Default for DecayRule {
    fn default() -> Self {
        DecayRule::SQRT
    }
}

/// `d / d_base` kept as a reduced fraction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WidthMultiplier {
    pub num: u64,
    pub den: u64,
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl WidthMultiplier {
    pub fn new(d: usize, d_base: usize) -> Result<Self> {
        if d == 0 || d_base == 0 {
            return Err(Error::invalid("widths must be at least 1"));
        }
        let (d, b) = (d as u64, d_base as u64);
        let g = gcd(d, b);
        Ok(WidthMultiplier {
            num: d / g,
            den: b / g,
        })
    }

    pub fn value(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// `m^p`, through `sqrt` for half-integer exponents so that the common
    /// cases are correctly rounded.
    pub fn pow(self, p: f64) -> f64 {
        let m = self.value();
        match p {
            0.0 => 1.0,
            1.0 => m,
            -1.0 => self.den as f64 / self.num as f64,
            0.5 => m.sqrt(),
            -0.5 => (self.den as f64 / self.num as f64).sqrt(),
            p => m.powf(p),
        }
    }
}

impl fmt::Display for WidthMultiplier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassHyper {
    pub sigma: f64,
    pub eta: f64,
    pub lambda: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DecayPrescription {
    /// `λ₂ = λ_base · m^exponent`.
    PowerLaw { exponent: f64 },
    /// Plain µP: the base decay is passed through without width scaling.
    UnspecifiedByMup,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaledHyper {
    pub width: usize,
    pub d_base: usize,
    pub width_multiplier: WidthMultiplier,
    pub vector: ClassHyper,
    pub matrix: ClassHyper,
    pub attention_scale: f64,
    pub decay: DecayPrescription,
    pub notes: Vec<String>,
}

impl ScaledHyper {
    pub fn for_class(&self, class: ParamClass) -> &ClassHyper {
        match class {
            ParamClass::VectorLike => &self.vector,
            ParamClass::MatrixLike => &self.matrix,
        }
    }
}

const ATTENTION_NOTE: &str = "attention_scale = d_base^-1/2 * m_d^-1; a 1/d_head temperature \
     differs from it only by a constant factor at a fixed head count";

fn scaled(base: &BaseHyper, width: usize, decay: DecayPrescription) -> Result<ScaledHyper> {
    base.validate()?;
    let m = WidthMultiplier::new(width, base.d_base)?;
    let matrix_lambda = match decay {
        DecayPrescription::PowerLaw { exponent } => {
            if !exponent.is_finite() {
                return Err(Error::invalid("decay exponent must be finite"));
            }
            base.lambda_base * m.pow(exponent)
        }
        DecayPrescription::UnspecifiedByMup => base.lambda_base,
    };
    Ok(ScaledHyper {
        width,
        d_base: base.d_base,
        width_multiplier: m,
        vector: ClassHyper {
            sigma: base.sigma_base,
            eta: base.eta_base,
            lambda: 0.0,
        },
        matrix: ClassHyper {
            sigma: base.sigma_base * m.pow(-0.5),
            eta: base.eta_base * m.pow(-1.0),
            lambda: matrix_lambda,
        },
        attention_scale: m.pow(-1.0) / (base.d_base as f64).sqrt(),
        decay,
        notes: vec![ATTENTION_NOTE.to_string()],
    })
}

/// Base-to-target transfer with matrix-like decay `λ_base · m^p`.
pub fn plan(base: &BaseHyper, d_target: usize, rule: DecayRule) -> Result<ScaledHyper> {
    scaled(
        base,
        d_target,
        DecayPrescription::PowerLaw {
            exponent: rule.exponent,
        },
    )
}

/// µP learning-rate and init scaling only; decay is not scaled.
pub fn mup_plan(base: &BaseHyper, d_target: usize) -> Result<ScaledHyper> {
    let mut h = scaled(base, d_target, DecayPrescription::UnspecifiedByMup)?;
    h.notes
        .push("weight decay unspecified by muP; lambda_base passed through unscaled".into());
    Ok(h)
}

/// Proxy-to-target scaling: `target_base` holds the target width's own
/// (standard-parameterization) hyperparameters with `d_base = d_target`; the
/// result gives the proxy width its layerwise rates under the `√d` rule.
pub fn proxy_to_target(target_base: &BaseHyper, d_proxy: usize) -> Result<ScaledHyper> {
    let mut h = plan(target_base, d_proxy, DecayRule::SQRT)?;
    if d_proxy > target_base.d_base {
        let msg = format!(
            "proxy width {d_proxy} exceeds target width {}",
            target_base.d_base
        );
        log::warn!("{msg}");
        h.notes.push(msg);
    }
    Ok(h)
}
