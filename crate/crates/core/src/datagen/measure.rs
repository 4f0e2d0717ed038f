//! Probability measures on the real line: atom lists and the closed-form
//! families used as inputs and references by the theory.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::LegendreRule;

/// Gauss–Legendre order for partial integrals inside CDF evaluations.
const CDF_ORDER: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SpectralMeasure {
    Atoms { locations: Vec<f64>, weights: Vec<f64> },
    /// Centered semicircle with the given variance (radius `2 sqrt(variance)`).
    Semicircle { variance: f64 },
    /// Marchenko–Pastur law with ratio `gamma = n / d0`.
    MarchenkoPastur { gamma: f64 },
    PointMass { at: f64 },
    /// Law of `shift + scale * X` with `X ~ inner`.
    Affine {
        shift: f64,
        scale: f64,
        inner: Box<SpectralMeasure>,
    },
}

/// A finite weighted node set representing a measure for integration.
#[derive(Debug, Clone, PartialEq)]
pub struct Discretization {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Discretization {
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

impl SpectralMeasure {
    /// Atom list with uniform weights.
    pub fn uniform_atoms(locations: Vec<f64>) -> Result<Self> {
        if locations.is_empty() {
            return Err(Error::invalid("atom list is empty"));
        }
        let w = 1.0 / locations.len() as f64;
        let weights = vec![w; locations.len()];
        let m = Self::Atoms { locations, weights };
        m.validate()?;
        Ok(m)
    }

    pub fn atoms(locations: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let m = Self::Atoms { locations, weights };
        m.validate()?;
        Ok(m)
    }

    pub fn semicircle(variance: f64) -> Result<Self> {
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(Error::invalid(format!("semicircle variance must be positive, got {variance}")));
        }
        Ok(Self::Semicircle { variance })
    }

    pub fn point_mass(at: f64) -> Result<Self> {
        if !at.is_finite() {
            return Err(Error::invalid("point mass location must be finite"));
        }
        Ok(Self::PointMass { at })
    }

    pub fn affine(shift: f64, scale: f64, inner: SpectralMeasure) -> Result<Self> {
        if !(shift.is_finite() && scale.is_finite()) {
            return Err(Error::invalid("affine pushforward coefficients must be finite"));
        }
        Ok(Self::Affine {
            shift,
            scale,
            inner: Box::new(inner),
        })
    }

    /// Checks weights and parameters.
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Atoms { locations, weights } => {
                if locations.len() != weights.len() || locations.is_empty() {
                    return Err(Error::invalid(format!(
                        "atom list has {} locations and {} weights",
                        locations.len(),
                        weights.len()
                    )));
                }
                if locations.iter().any(|x| !x.is_finite()) {
                    return Err(Error::invalid("atom locations must be finite"));
                }
                if weights.iter().any(|w| !(*w >= 0.0)) {
                    return Err(Error::invalid("atom weights must be nonnegative"));
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::invalid(format!("atom weights sum to {total}, not 1")));
                }
                Ok(())
            }
            Self::Semicircle { variance } if !(*variance > 0.0) => {
                Err(Error::invalid("semicircle variance must be positive"))
            }
            Self::MarchenkoPastur { gamma } if !(*gamma > 0.0) => {
                Err(Error::invalid("Marchenko-Pastur ratio must be positive"))
            }
            Self::Affine { inner, .. } => inner.validate(),
            _ => Ok(()),
        }
    }

    /// Node/weight representation: atoms are exact, continuous parts use a
    /// 512-point Gauss–Legendre rule after the substitution `x = c - r cos(theta)`,
    /// which removes the square-root edge singularities.
    pub fn discretize(&self) -> Discretization {
        match self {
            Self::Atoms { locations, weights } => Discretization {
                nodes: locations.clone(),
                weights: weights.clone(),
            },
            Self::PointMass { at } => Discretization {
                nodes: vec![*at],
                weights: vec![1.0],
            },
            Self::Semicircle { variance } => {
                let r = 2.0 * variance.sqrt();
                let mut d = theta_rule(|t| (2.0 / PI) * t.sin().powi(2));
                for x in d.nodes.iter_mut() {
                    *x = -r * x.cos();
                }
                d
            }
            Self::MarchenkoPastur { gamma } => {
                let g = *gamma;
                let (c, r) = (1.0 + g, 2.0 * g.sqrt());
                let mut d = theta_rule(|t| {
                    let x = c - r * t.cos();
                    r * r * t.sin().powi(2) / (2.0 * PI * g * x)
                });
                for x in d.nodes.iter_mut() {
                    *x = c - r * x.cos();
                }
                if g > 1.0 {
                    d.nodes.insert(0, 0.0);
                    d.weights.insert(0, 1.0 - 1.0 / g);
                }
                d
            }
            Self::Affine { shift, scale, inner } => {
                let mut d = inner.discretize();
                for x in d.nodes.iter_mut() {
                    *x = shift + scale * *x;
                }
                d
            }
        }
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        match self {
            Self::Atoms { locations, weights } => {
                locations.iter().zip(weights).map(|(&x, &w)| w * f(x)).sum()
            }
            Self::PointMass { at } => f(*at),
            _ => self.discretize().integrate(f),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Self::Semicircle { .. } => 0.0,
            Self::MarchenkoPastur { .. } => 1.0,
            Self::PointMass { at } => *at,
            Self::Affine { shift, scale, inner } => shift + scale * inner.mean(),
            Self::Atoms { .. } => self.integrate(|x| x),
        }
    }

    pub fn second_moment(&self) -> f64 {
        match self {
            Self::Semicircle { variance } => *variance,
            Self::MarchenkoPastur { gamma } => 1.0 + gamma,
            Self::PointMass { at } => at * at,
            Self::Affine { shift, scale, inner } => {
                shift * shift + 2.0 * shift * scale * inner.mean() + scale * scale * inner.second_moment()
            }
            Self::Atoms { .. } => self.integrate(|x| x * x),
        }
    }

    /// Smallest closed interval containing the support.
    pub fn support(&self) -> (f64, f64) {
        match self {
            Self::Atoms { locations, .. } => locations
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x))),
            Self::PointMass { at } => (*at, *at),
            Self::Semicircle { variance } => {
                let r = 2.0 * variance.sqrt();
                (-r, r)
            }
            Self::MarchenkoPastur { gamma } => {
                let (lo, hi) = mp_edges(*gamma);
                (if *gamma > 1.0 { 0.0 } else { lo }, hi)
            }
            Self::Affine { shift, scale, inner } => {
                let (a, b) = inner.support();
                let (u, v) = (shift + scale * a, shift + scale * b);
                (u.min(v), u.max(v))
            }
        }
    }

    /// Right-continuous CDF.
    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            Self::Atoms { locations, weights } => locations
                .iter()
                .zip(weights)
                .filter(|(&l, _)| l <= x)
                .map(|(_, &w)| w)
                .sum::<f64>()
                .min(1.0),
            Self::PointMass { at } => {
                if x >= *at {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Semicircle { variance } => semicircle_cdf(*variance, x),
            Self::MarchenkoPastur { gamma } => mp_cdf(*gamma, x),
            Self::Affine { shift, scale, inner } => {
                if *scale > 0.0 {
                    inner.cdf((x - shift) / scale)
                } else if *scale < 0.0 {
                    // P(shift + scale X <= x) = P(X >= (x - shift)/scale)
                    let t = (x - shift) / scale;
                    1.0 - inner.cdf_left(t)
                } else if x >= *shift {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Left limit of the CDF, `P(X < x)`.
    pub fn cdf_left(&self, x: f64) -> f64 {
        match self {
            Self::Atoms { locations, weights } => locations
                .iter()
                .zip(weights)
                .filter(|(&l, _)| l < x)
                .map(|(_, &w)| w)
                .sum::<f64>()
                .min(1.0),
            Self::PointMass { at } => {
                if x > *at {
                    1.0
                } else {
                    0.0
                }
            }
            Self::MarchenkoPastur { gamma } if *gamma > 1.0 && x <= 0.0 => 0.0,
            Self::Affine { shift, scale, inner } => {
                if *scale > 0.0 {
                    inner.cdf_left((x - shift) / scale)
                } else if *scale < 0.0 {
                    1.0 - inner.cdf((x - shift) / scale)
                } else if x > *shift {
                    1.0
                } else {
                    0.0
                }
            }
            _ => self.cdf(x),
        }
    }

    /// Atoms at the mid-quantiles `(i + 1/2) / k`, each with weight `1/k`.
    pub fn quantile_atoms(&self, k: usize) -> Result<SpectralMeasure> {
        if k == 0 {
            return Err(Error::invalid("need at least one quantile atom"));
        }
        let (lo, hi) = self.support();
        let locations = (0..k)
            .map(|i| {
                let p = (i as f64 + 0.5) / k as f64;
                let (mut a, mut b) = (lo, hi);
                if self.cdf(a) >= p {
                    return a;
                }
                for _ in 0..200 {
                    let mid = 0.5 * (a + b);
                    if self.cdf(mid) >= p {
                        b = mid;
                    } else {
                        a = mid;
                    }
                    if b - a <= 1e-15 * (1.0 + b.abs()) {
                        break;
                    }
                }
                0.5 * (a + b)
            })
            .collect();
        SpectralMeasure::uniform_atoms(locations)
    }

    /// Density of the absolutely continuous part, where it has a closed form.
    pub fn density(&self, x: f64) -> Option<f64> {
        match self {
            Self::Semicircle { variance } => Some(semicircle_density(*variance, x)),
            Self::MarchenkoPastur { gamma } => Some(mp_density_unchecked(*gamma, x)),
            Self::Affine { shift, scale, inner } if *scale != 0.0 => {
                inner.density((x - shift) / scale).map(|d| d / scale.abs())
            }
            _ => None,
        }
    }
}

fn theta_rule(weight: impl Fn(f64) -> f64) -> Discretization {
    let rule = LegendreRule::standard();
    let (nodes, weights) = rule
        .mapped(0.0, PI)
        .map(|(t, w)| (t, w * weight(t)))
        .unzip();
    Discretization { nodes, weights }
}

pub fn semicircle_density(variance: f64, x: f64) -> f64 {
    let r2 = 4.0 * variance;
    if x * x >= r2 {
        0.0
    } else {
        (r2 - x * x).sqrt() / (2.0 * PI * variance)
    }
}

pub fn semicircle_cdf(variance: f64, x: f64) -> f64 {
    let r = 2.0 * variance.sqrt();
    if x <= -r {
        0.0
    } else if x >= r {
        1.0
    } else {
        0.5 + x * (r * r - x * x).sqrt() / (4.0 * PI * variance) + (x / r).asin() / PI
    }
}

fn mp_edges(gamma: f64) -> (f64, f64) {
    let s = gamma.sqrt();
    ((1.0 - s).powi(2), (1.0 + s).powi(2))
}

fn mp_density_unchecked(gamma: f64, x: f64) -> f64 {
    let (lo, hi) = mp_edges(gamma);
    if x <= lo || x >= hi {
        0.0
    } else {
        ((hi - x) * (x - lo)).sqrt() / (2.0 * PI * gamma * x)
    }
}

/// Marchenko–Pastur density (continuous part) at `x`.
pub fn mp_density(gamma: f64, x: f64) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(Error::invalid(format!("Marchenko-Pastur ratio must be positive, got {gamma}")));
    }
    Ok(mp_density_unchecked(gamma, x))
}

pub fn mp_measure(gamma: f64) -> Result<SpectralMeasure> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::invalid(format!("Marchenko-Pastur ratio must be positive, got {gamma}")));
    }
    Ok(SpectralMeasure::MarchenkoPastur { gamma })
}

fn mp_cdf(gamma: f64, x: f64) -> f64 {
    let atom = if gamma > 1.0 { 1.0 - 1.0 / gamma } else { 0.0 };
    if x < 0.0 {
        return 0.0;
    }
    let (lo, hi) = mp_edges(gamma);
    if x <= lo {
        return atom;
    }
    if x >= hi {
        return 1.0;
    }
    let (c, r) = (1.0 + gamma, 2.0 * gamma.sqrt());
    let theta_x = ((c - x) / r).clamp(-1.0, 1.0).acos();
    let rule = cdf_rule();
    let part: f64 = rule
        .mapped(0.0, theta_x)
        .map(|(t, w)| {
            let y = c - r * t.cos();
            w * r * r * t.sin().powi(2) / (2.0 * PI * gamma * y)
        })
        .sum();
    (atom + part).min(1.0)
}

fn cdf_rule() -> &'static LegendreRule {
    static RULE: std::sync::OnceLock<LegendreRule> = std::sync::OnceLock::new();
    RULE.get_or_init(|| LegendreRule::new(CDF_ORDER))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn mp_basics() {
        assert_eq!(mp_density(1.0, 4.0).unwrap(), 0.0);
        assert!(mp_density(0.0, 1.0).is_err());
        assert!(mp_measure(-1.0).is_err());
        for gamma in [0.25, 0.5, 1.0, 2.0, 4.0] {
            let mp = mp_measure(gamma).unwrap();
            let d = mp.discretize();
            assert_abs_diff_eq!(d.weights.iter().sum::<f64>(), 1.0, epsilon = 1e-10);
            assert_abs_diff_eq!(d.integrate(|x| x), 1.0, epsilon = 1e-6);
            assert_abs_diff_eq!(d.integrate(|x| x * x), 1.0 + gamma, epsilon = 1e-6);
            assert_abs_diff_eq!(mp.cdf(100.0), 1.0, epsilon = 1e-12);
            // CDF at the median-ish point agrees with the discretized mass
            let x = 1.0 + 0.3 * gamma;
            let direct = d.integrate(|t| if t <= x { 1.0 } else { 0.0 });
            assert_abs_diff_eq!(mp.cdf(x), direct, epsilon = 2e-2);
        }
    }

    #[test]
    fn mp_cdf_matches_density_integral() {
        let gamma = 0.5;
        let (lo, _) = mp_edges(gamma);
        let x = 1.7;
        let rule = LegendreRule::new(2000);
        let direct = rule.integrate(lo, x, |t| mp_density(gamma, t).unwrap());
        assert_abs_diff_eq!(mp_cdf(gamma, x), direct, epsilon = 1e-5);
    }

    #[test]
    fn semicircle_moments_and_cdf() {
        let sc = SpectralMeasure::semicircle(1.0).unwrap();
        let d = sc.discretize();
        assert_abs_diff_eq!(d.integrate(|_| 1.0), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d.integrate(|x| x), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d.integrate(|x| x * x), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d.integrate(|x| x.powi(4)), 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sc.cdf(0.0), 0.5, epsilon = 1e-15);
        assert_eq!(sc.cdf(-2.0), 0.0);
        assert_eq!(sc.cdf(2.0), 1.0);
        assert_abs_diff_eq!(semicircle_density(1.0, 0.0), 1.0 / PI, epsilon = 1e-15);
    }

    #[test]
    fn affine_pushforward() {
        let inner = mp_measure(1.0).unwrap();
        let b2 = 0.5;
        let m = SpectralMeasure::affine(1.0 - b2, b2, inner).unwrap();
        assert_abs_diff_eq!(m.mean(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.discretize().integrate(|x| x), 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(m.second_moment(), m.discretize().integrate(|x| x * x), epsilon = 1e-6);
        assert_eq!(m.support(), (0.5, 2.5));
        assert_abs_diff_eq!(m.cdf(1.0 - b2 + b2 * 1.3), mp_cdf(1.0, 1.3), epsilon = 1e-14);
        let flipped = SpectralMeasure::affine(0.0, -1.0, SpectralMeasure::point_mass(2.0).unwrap()).unwrap();
        assert_eq!(flipped.cdf(-2.0), 1.0);
        assert_eq!(flipped.cdf_left(-2.0), 0.0);
    }

    #[test]
    fn atoms_validate() {
        assert!(SpectralMeasure::atoms(vec![1.0, 2.0], vec![0.5, 0.6]).is_err());
        assert!(SpectralMeasure::atoms(vec![1.0, 2.0], vec![1.5, -0.5]).is_err());
        assert!(SpectralMeasure::atoms(vec![1.0], vec![1.0, 0.0]).is_err());
        assert!(SpectralMeasure::uniform_atoms(vec![]).is_err());
        let m = SpectralMeasure::uniform_atoms(vec![3.0, 1.0, 2.0]).unwrap();
        assert_abs_diff_eq!(m.cdf(2.0), 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m.cdf_left(2.0), 1.0 / 3.0, epsilon = 1e-15);
        assert_eq!(m.support(), (1.0, 3.0));
    }

    #[test]
    fn quantile_atoms_reproduce_moments() {
        let sc = SpectralMeasure::semicircle(1.0).unwrap();
        let q = sc.quantile_atoms(10_000).unwrap();
        assert_abs_diff_eq!(q.mean(), 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(q.second_moment(), 1.0, epsilon = 1e-3);
    }
}
