//! Activation functions, Gaussian normalization and Hermite coefficients.
//!
//! Every activation is stored as a base function plus the affine map
//! `sigma(x) = (base(x) - shift) / scale` that makes `E[sigma(xi)] = 0` and
//! `E[sigma(xi)^2] = 1` for a standard Gaussian `xi`.

use std::f64::consts::FRAC_2_SQRT_PI;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::GaussianRule;

/// Largest Hermite order accepted anywhere in the crate.
pub const MAX_ORDER: usize = 60;
/// Default truncation order for Hermite data and series.
pub const DEFAULT_ORDER: usize = 40;

/// Built-in base nonlinearities before normalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum BaseActivation {
    Identity,
    Relu,
    Arctan,
    Cos,
    Sigmoid,
    Tanh,
    Erf,
    /// `a x + b` for `x > 0`, `c x + b` for `x <= 0`.
    Piecewise { a: f64, b: f64, c: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActivationKind {
    Smooth,
    PiecewiseLinear,
}

impl BaseActivation {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Identity => "identity",
            Self::Relu => "relu",
            Self::Arctan => "arctan",
            Self::Cos => "cos",
            Self::Sigmoid => "sigmoid",
            Self::Tanh => "tanh",
            Self::Erf => "erf",
            Self::Piecewise { .. } => "piecewise",
        }
    }

    pub fn kind(&self) -> ActivationKind {
        match self {
            Self::Identity | Self::Relu | Self::Piecewise { .. } => ActivationKind::PiecewiseLinear,
            _ => ActivationKind::Smooth,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Self::Identity => x,
            Self::Relu => x.max(0.0),
            Self::Arctan => x.atan(),
            Self::Cos => x.cos(),
            Self::Sigmoid => sigmoid(x),
            Self::Tanh => x.tanh(),
            Self::Erf => libm::erf(x),
            Self::Piecewise { a, b, c } => {
                if x > 0.0 {
                    a * x + b
                } else {
                    c * x + b
                }
            }
        }
    }

    /// Analytic derivative. Kinked functions use the left slope at 0.
    pub fn deriv(&self, x: f64) -> f64 {
        match *self {
            Self::Identity => 1.0,
            Self::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Arctan => 1.0 / (1.0 + x * x),
            Self::Cos => -x.sin(),
            Self::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
            Self::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Self::Erf => FRAC_2_SQRT_PI * (-x * x).exp(),
            Self::Piecewise { a, c, .. } => {
                if x > 0.0 {
                    a
                } else {
                    c
                }
            }
        }
    }

    /// Global Lipschitz constant of the base function.
    pub fn lipschitz(&self) -> f64 {
        match *self {
            Self::Identity | Self::Relu | Self::Arctan | Self::Cos | Self::Tanh => 1.0,
            Self::Sigmoid => 0.25,
            Self::Erf => FRAC_2_SQRT_PI,
            Self::Piecewise { a, c, .. } => a.abs().max(c.abs()),
        }
    }

    /// True when the base function is affine on all of the real line.
    pub fn is_affine(&self) -> bool {
        match *self {
            Self::Identity => true,
            Self::Piecewise { a, c, .. } => a == c,
            _ => false,
        }
    }

    /// True when `base(x) - base(0)` is odd, so the normalized function is odd.
    pub fn is_odd(&self) -> bool {
        match *self {
            Self::Identity | Self::Arctan | Self::Tanh | Self::Erf | Self::Sigmoid => true,
            Self::Piecewise { a, c, .. } => a == c,
            _ => false,
        }
    }

    fn rule(&self) -> &'static GaussianRule {
        match self.kind() {
            ActivationKind::Smooth => GaussianRule::smooth(),
            ActivationKind::PiecewiseLinear => GaussianRule::kinked(),
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl fmt::Display for BaseActivation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Piecewise { a, b, c } => write!(f, "piecewise:{a},{b},{c}"),
            other => f.write_str(other.name()),
        }
    }
}

impl FromStr for BaseActivation {
    type Err = Error;

    /// Accepts a builtin name or `piecewise:a,b,c`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(rest) = s.strip_prefix("piecewise:") {
            let parts: Vec<f64> = rest
                .split(',')
                .map(|p| p.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse(format!("piecewise parameters `{rest}`: {e}")))?;
            let [a, b, c] = parts[..] else {
                return Err(Error::Parse(format!(
                    "piecewise expects three parameters a,b,c, got `{rest}`"
                )));
            };
            return Ok(Self::Piecewise { a, b, c });
        }
        Ok(match s.to_ascii_lowercase().as_str() {
            "identity" | "linear" => Self::Identity,
            "relu" => Self::Relu,
            "arctan" | "atan" => Self::Arctan,
            "cos" => Self::Cos,
            "sigmoid" => Self::Sigmoid,
            "tanh" => Self::Tanh,
            "erf" => Self::Erf,
            other => return Err(Error::Parse(format!("unknown activation `{other}`"))),
        })
    }
}

/// A normalized activation `sigma(x) = (base(x) - shift) / scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Activation {
    base: BaseActivation,
    shift: f64,
    scale: f64,
}

impl Activation {
    /// Normalizes `base` against the standard Gaussian.
    pub fn new(base: BaseActivation) -> Result<Self> {
        if let BaseActivation::Piecewise { a, b, c } = base {
            if !(a.is_finite() && b.is_finite() && c.is_finite()) {
                return Err(Error::invalid("piecewise parameters must be finite"));
            }
        }
        let rule = base.rule();
        let shift = rule.expect(|x| base.eval(x));
        let var = rule.expect(|x| {
            let d = base.eval(x) - shift;
            d * d
        });
        if !(var > 1e-24) {
            return Err(Error::DegenerateActivation(format!(
                "{base} has zero variance under the Gaussian"
            )));
        }
        Ok(Self {
            base,
            shift,
            scale: var.sqrt(),
        })
    }

    pub fn relu() -> Self {
        Self::new(BaseActivation::Relu).expect("relu is non-degenerate")
    }

    pub fn identity() -> Self {
        Self::new(BaseActivation::Identity).expect("identity is non-degenerate")
    }

    pub fn base(&self) -> BaseActivation {
        self.base
    }

    pub fn name(&self) -> &'static str {
        self.base.name()
    }

    pub fn kind(&self) -> ActivationKind {
        self.base.kind()
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Lipschitz constant of the normalized function.
    pub fn lipschitz(&self) -> f64 {
        self.base.lipschitz() / self.scale
    }

    pub fn is_linear(&self) -> bool {
        self.base.is_affine()
    }

    pub fn is_odd(&self) -> bool {
        self.base.is_odd()
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        (self.base.eval(x) - self.shift) / self.scale
    }

    #[inline]
    pub fn deriv(&self, x: f64) -> f64 {
        self.base.deriv(x) / self.scale
    }

    /// Applies `sigma` to every element. The dispatch is hoisted out of the loop.
    pub fn apply_inplace(&self, xs: &mut [f64]) {
        crate::linalg::settle();
        let (s, inv) = (self.shift, 1.0 / self.scale);
        macro_rules! map {
            ($f:expr) => {
                for v in xs.iter_mut() {
                    *v = ($f(*v) - s) * inv;
                }
            };
        }
        match self.base {
            BaseActivation::Identity => map!(|x: f64| x),
            BaseActivation::Relu => map!(|x: f64| x.max(0.0)),
            BaseActivation::Arctan => map!(f64::atan),
            BaseActivation::Cos => map!(f64::cos),
            BaseActivation::Sigmoid => map!(sigmoid),
            BaseActivation::Tanh => map!(f64::tanh),
            BaseActivation::Erf => map!(libm::erf),
            BaseActivation::Piecewise { a, b, c } => {
                map!(|x: f64| if x > 0.0 { a * x + b } else { c * x + b })
            }
        }
    }

    /// Applies `sigma'` to every element.
    pub fn apply_deriv_inplace(&self, xs: &mut [f64]) {
        crate::linalg::settle();
        let inv = 1.0 / self.scale;
        let base = self.base;
        match base {
            BaseActivation::Relu => {
                for v in xs.iter_mut() {
                    *v = if *v > 0.0 { inv } else { 0.0 };
                }
            }
            _ => {
                for v in xs.iter_mut() {
                    *v = base.deriv(*v) * inv;
                }
            }
        }
    }

    /// `E[f(xi)]` under the quadrature suited to this activation.
    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.base.rule().expect(f)
    }

    /// Hermite coefficients `E[sigma(r xi) h_k(xi)]`, `k = 0..=order`.
    pub fn scaled_coefficients(&self, r: f64, order: usize) -> Result<Vec<f64>> {
        self.projected(order, |x| self.eval(r * x))
    }

    /// Hermite coefficients `E[sigma'(r xi) h_k(xi)]`, `k = 0..=order`.
    pub fn scaled_deriv_coefficients(&self, r: f64, order: usize) -> Result<Vec<f64>> {
        self.projected(order, |x| self.deriv(r * x))
    }

    fn projected(&self, order: usize, f: impl Fn(f64) -> f64) -> Result<Vec<f64>> {
        check_order(order)?;
        let table = HermiteTable::for_kind(self.kind());
        let rule = table.rule;
        let fx: Vec<f64> = rule.nodes().iter().map(|&x| f(x)).collect();
        Ok((0..=order)
            .map(|k| {
                table.row(k)
                    .iter()
                    .zip(rule.weights())
                    .zip(&fx)
                    .map(|((h, w), v)| h * w * v)
                    .sum()
            })
            .collect())
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (shift {:.6}, scale {:.6})", self.base, self.shift, self.scale)
    }
}

fn check_order(order: usize) -> Result<()> {
    if order > MAX_ORDER {
        Err(Error::UnsupportedOrder {
            order,
            max: MAX_ORDER,
        })
    } else {
        Ok(())
    }
}

/// Normalized Hermite polynomial `h_r(x) = He_r(x) / sqrt(r!)`.
pub fn hermite_poly(r: usize, x: f64) -> Result<f64> {
    check_order(r)?;
    let mut prev = 0.0;
    let mut cur = 1.0;
    for k in 0..r {
        let kf = k as f64;
        let next = (x * cur - kf.sqrt() * prev) / (kf + 1.0).sqrt();
        prev = cur;
        cur = next;
    }
    Ok(cur)
}

/// `h_0..=h_MAX_ORDER` tabulated at the nodes of one quadrature rule.
struct HermiteTable {
    rule: &'static GaussianRule,
    len: usize,
    values: Vec<f64>,
}

impl HermiteTable {
    fn build(rule: &'static GaussianRule) -> Self {
        let len = rule.len();
        let mut values = vec![0.0; (MAX_ORDER + 1) * len];
        for (i, &x) in rule.nodes().iter().enumerate() {
            let mut prev = 0.0;
            let mut cur = 1.0;
            values[i] = cur;
            for k in 0..MAX_ORDER {
                let kf = k as f64;
                let next = (x * cur - kf.sqrt() * prev) / (kf + 1.0).sqrt();
                prev = cur;
                cur = next;
                values[(k + 1) * len + i] = cur;
            }
        }
        Self { rule, len, values }
    }

    fn row(&self, k: usize) -> &[f64] {
        &self.values[k * self.len..(k + 1) * self.len]
    }

    fn for_kind(kind: ActivationKind) -> &'static Self {
        static SMOOTH: OnceLock<HermiteTable> = OnceLock::new();
        static KINKED: OnceLock<HermiteTable> = OnceLock::new();
        match kind {
            ActivationKind::Smooth => SMOOTH.get_or_init(|| Self::build(GaussianRule::smooth())),
            ActivationKind::PiecewiseLinear => {
                KINKED.get_or_init(|| Self::build(GaussianRule::kinked()))
            }
        }
    }
}

/// Hermite coefficients of a normalized activation and its derivative.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HermiteData {
    pub zeta: Vec<f64>,
    pub eta: Vec<f64>,
    pub b_sigma: f64,
    pub a_sigma: f64,
    pub order: usize,
    pub tail_mass: f64,
}

impl HermiteData {
    /// `1 - zeta_1^2 - zeta_2^2 - zeta_3^2`.
    pub fn floor_ck(&self) -> f64 {
        1.0 - (1..=3).map(|k| self.zeta_at(k).powi(2)).sum::<f64>()
    }

    /// `a_sigma - eta_0^2 - eta_1^2 - eta_2^2`.
    pub fn floor_ntk(&self) -> f64 {
        self.a_sigma - (0..=2).map(|k| self.eta_at(k).powi(2)).sum::<f64>()
    }

    pub fn zeta_at(&self, k: usize) -> f64 {
        self.zeta.get(k).copied().unwrap_or(0.0)
    }

    pub fn eta_at(&self, k: usize) -> f64 {
        self.eta.get(k).copied().unwrap_or(0.0)
    }
}

/// Hermite data of `act` truncated at `order`.
pub fn hermite_data(act: &Activation, order: usize) -> Result<HermiteData> {
    let zeta = act.scaled_coefficients(1.0, order)?;
    let eta = act.scaled_deriv_coefficients(1.0, order)?;
    let a_sigma = act.expect(|x| act.deriv(x).powi(2));
    let tail_mass = 1.0 - zeta.iter().map(|z| z * z).sum::<f64>();
    Ok(HermiteData {
        b_sigma: zeta.get(1).copied().unwrap_or(0.0),
        zeta,
        eta,
        a_sigma,
        order,
        tail_mass,
    })
}

/// `E[sigma(r xi)^2]` and `E[sigma'(r xi)^2]`.
pub(crate) fn scaled_second_moments(act: &Activation, r: f64) -> (f64, f64) {
    (
        act.expect(|x| act.eval(r * x).powi(2)),
        act.expect(|x| act.deriv(r * x).powi(2)),
    )
}
