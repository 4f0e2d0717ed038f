//! The limiting spectral law `mu_s ⊠ mu_tilde` through its self-consistent
//! equations
//!
//! ```text
//! beta(z) + ∫ x dmu_tilde(x) / (z + beta(z) x) = 0,
//! m(z)    = -∫ dmu_tilde(x) / (z + beta(z) x),
//! ```
//!
//! solved pointwise in the upper half-plane and inverted to a density by
//! `rho(x) = Im m(x + iv) / pi`.

use num_complex::Complex64;
use serde::Serialize;

use crate::datagen::{Discretization, SpectralMeasure};
use crate::error::{Error, Result};

/// Input measure `mu_tilde` with its integration nodes cached.
#[derive(Debug, Clone)]
pub struct DeformedInput {
    mu_tilde: SpectralMeasure,
    b_sigma: Option<f64>,
    disc: Discretization,
}

impl DeformedInput {
    /// Arbitrary input measure.
    pub fn new(mu_tilde: SpectralMeasure) -> Result<Self> {
        mu_tilde.validate()?;
        let disc = mu_tilde.discretize();
        Ok(Self {
            mu_tilde,
            b_sigma: None,
            disc,
        })
    }

    /// `(1 - b^2) + b^2 mu0` for a data spectrum `mu0` on `[0, inf)`.
    pub fn from_data(mu0: SpectralMeasure, b_sigma: f64) -> Result<Self> {
        if !(0.0..=1.0 + 1e-12).contains(&b_sigma.abs()) {
            return Err(Error::invalid(format!("b_sigma must lie in [0, 1], got {b_sigma}")));
        }
        let (lo, _) = mu0.support();
        if lo < -1e-9 {
            return Err(Error::invalid(format!(
                "data spectrum must be supported on [0, inf), found mass at {lo}"
            )));
        }
        let b2 = b_sigma * b_sigma;
        let mu_tilde = if b2 == 0.0 {
            SpectralMeasure::point_mass(1.0)?
        } else {
            SpectralMeasure::affine(1.0 - b2, b2, mu0)?
        };
        let mut input = Self::new(mu_tilde)?;
        input.b_sigma = Some(b_sigma.abs());
        Ok(input)
    }

    /// `mu_tilde = delta_c`, whose law is the semicircle of radius `2c`.
    pub fn point(c: f64) -> Result<Self> {
        Self::new(SpectralMeasure::point_mass(c)?)
    }

    pub fn measure(&self) -> &SpectralMeasure {
        &self.mu_tilde
    }

    pub fn b_sigma(&self) -> Option<f64> {
        self.b_sigma
    }

    /// `∫ x dmu_tilde`.
    pub fn mean(&self) -> f64 {
        self.disc.integrate(|x| x)
    }

    /// Free-probability prediction of the second moment of the law.
    pub fn m2_free(&self) -> f64 {
        self.mean().powi(2)
    }

    /// Half-width of an interval guaranteed to contain the support of the law.
    pub fn support_radius(&self) -> f64 {
        let (lo, hi) = self.mu_tilde.support();
        2.0 * lo.abs().max(hi.abs())
    }

    /// `(∫ x/(z+bx), ∫ x^2/(z+bx)^2, ∫ 1/(z+bx))`.
    fn integrals(&self, z: Complex64, beta: Complex64) -> (Complex64, Complex64, Complex64) {
        let mut s1 = Complex64::new(0.0, 0.0);
        let mut s2 = Complex64::new(0.0, 0.0);
        let mut s0 = Complex64::new(0.0, 0.0);
        for (&x, &w) in self.disc.nodes.iter().zip(&self.disc.weights) {
            let r = (z + beta * x).inv();
            let xr = r * x;
            s0 += r * w;
            s1 += xr * w;
            s2 += xr * xr * w;
        }
        (s1, s2, s0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Weight of the new iterate in the damped fixed-point fallback.
    pub damping: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 500,
            damping: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PointSolution {
    #[serde(serialize_with = "ser_complex")]
    pub z: Complex64,
    #[serde(serialize_with = "ser_complex")]
    pub beta: Complex64,
    #[serde(serialize_with = "ser_complex")]
    pub m: Complex64,
    /// `|beta + ∫ x/(z+beta x)|`
    pub residual_beta: f64,
    /// `|m + ∫ 1/(z+beta x)|`
    pub residual_m: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl PointSolution {
    /// `|beta^2 + 1 + z m|`, zero for an exact solution.
    pub fn identity_residual(&self) -> f64 {
        (self.beta * self.beta + 1.0 + self.z * self.m).norm()
    }
}

fn ser_complex<S: serde::Serializer>(c: &Complex64, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeTuple;
    let mut t = s.serialize_tuple(2)?;
    t.serialize_element(&c.re)?;
    t.serialize_element(&c.im)?;
    t.end()
}

/// Keeps iterates strictly inside the upper half-plane.
fn project(beta: Complex64, z: Complex64) -> Complex64 {
    let floor = 1e-3 * z.im;
    if beta.im <= floor {
        Complex64::new(beta.re, floor.max(f64::MIN_POSITIVE))
    } else {
        beta
    }
}

/// Newton iteration on `g(beta) = beta + ∫ x/(z+beta x)` from `beta0`, with a
/// damped fixed-point step whenever Newton would leave the upper half-plane
/// or fails to reduce `|g|`.
fn iterate(input: &DeformedInput, z: Complex64, beta0: Complex64, opts: &SolverOptions) -> PointSolution {
    let mut beta = project(beta0, z);
    let mut iterations = 0;
    let mut converged = false;
    let (mut s1, mut s2, _) = input.integrals(z, beta);
    let mut g = beta + s1;
    while iterations < opts.max_iter {
        if g.norm() <= opts.tol {
            converged = true;
            break;
        }
        iterations += 1;
        let dg = Complex64::new(1.0, 0.0) - s2;
        let newton = beta - g / dg;
        let mut accepted = false;
        if newton.im > 0.0 && newton.is_finite() {
            let (t1, t2, _) = input.integrals(z, newton);
            let gn = newton + t1;
            if gn.norm() < g.norm() {
                beta = newton;
                s1 = t1;
                s2 = t2;
                g = gn;
                accepted = true;
            }
        }
        if !accepted {
            let fixed = -s1;
            beta = project(beta * (1.0 - opts.damping) + fixed * opts.damping, z);
            let (t1, t2, _) = input.integrals(z, beta);
            s1 = t1;
            s2 = t2;
            g = beta + s1;
        }
    }
    if !converged && g.norm() <= opts.tol {
        converged = true;
    }
    let (s1, _, s0) = input.integrals(z, beta);
    let m = -s0;
    PointSolution {
        z,
        beta,
        m,
        residual_beta: (beta + s1).norm(),
        residual_m: (m + s0).norm(),
        iterations,
        converged: converged && beta.im > 0.0 && m.im > 0.0,
    }
}

/// Solves along `v_k = max(1, 2 Im z) * 4^{-k}` down to `Im z`, each step
/// warm-started from the previous one.
fn continuation(input: &DeformedInput, z: Complex64, opts: &SolverOptions) -> PointSolution {
    let mut v = (2.0 * z.im).max(1.0);
    let mut beta = Complex64::new(0.0, 1.0);
    let mut total = 0;
    loop {
        let zk = Complex64::new(z.re, v.max(z.im));
        let sol = iterate(input, zk, beta, opts);
        total += sol.iterations;
        beta = sol.beta;
        if v <= z.im {
            return PointSolution {
                iterations: total,
                ..sol
            };
        }
        v *= 0.25;
    }
}

fn check_z(z: Complex64) -> Result<()> {
    if !(z.im > 0.0) || !z.re.is_finite() || !z.im.is_finite() {
        return Err(Error::invalid(format!(
            "z must lie strictly in the upper half-plane, got {z}"
        )));
    }
    Ok(())
}

/// Solves at one point. Fails with [`Error::NotConverged`] carrying the best
/// iterate's residual.
pub fn solve_point(input: &DeformedInput, z: Complex64, opts: &SolverOptions) -> Result<PointSolution> {
    check_z(z)?;
    let sol = solve_warm(input, z, None, opts);
    if sol.converged {
        Ok(sol)
    } else {
        Err(Error::NotConverged {
            re: z.re,
            im: z.im,
            iterations: sol.iterations,
            residual: sol.residual_beta,
        })
    }
}

fn solve_warm(
    input: &DeformedInput,
    z: Complex64,
    warm: Option<Complex64>,
    opts: &SolverOptions,
) -> PointSolution {
    if let Some(b) = warm {
        let quick = SolverOptions {
            max_iter: opts.max_iter.min(60),
            ..*opts
        };
        let sol = iterate(input, z, b, &quick);
        if sol.converged {
            return sol;
        }
    }
    let direct = iterate(input, z, Complex64::new(0.0, 1.0), &SolverOptions {
        max_iter: opts.max_iter.min(60),
        ..*opts
    });
    if direct.converged {
        return direct;
    }
    continuation(input, z, opts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DensityOptions {
    pub v: f64,
    /// Report `2 rho(v) - rho(2v)` (clipped at zero) instead of `rho(v)`.
    pub richardson: bool,
    /// Insert midpoints where the density jumps by more than this fraction
    /// of its maximum between neighbours; `None` disables refinement.
    pub refine_threshold: Option<f64>,
    pub solver: SolverOptions,
}

impl Default for DensityOptions {
    fn default() -> Self {
        Self {
            v: 1e-4,
            richardson: false,
            refine_threshold: Some(0.05),
            solver: SolverOptions::default(),
        }
    }
}

impl DensityOptions {
    /// Settings for figure overlays: extrapolation from `v = 5e-4` and `1e-3`.
    pub fn figure() -> Self {
        Self {
            v: 5e-4,
            richardson: true,
            ..Self::default()
        }
    }
}

/// Solved grid and the inverted density.
#[derive(Debug, Clone, Serialize)]
pub struct LawSolution {
    pub points: Vec<PointSolution>,
    /// `(x, rho(x))`, sorted by `x`.
    pub density: Vec<(f64, f64)>,
    pub v_used: f64,
    pub richardson: bool,
    pub warnings: Vec<String>,
}

impl LawSolution {
    pub fn max_residual(&self) -> f64 {
        self.points
            .iter()
            .map(|p| p.residual_beta.max(p.residual_m))
            .fold(0.0, f64::max)
    }

    pub fn all_converged(&self) -> bool {
        self.points.iter().all(|p| p.converged)
    }

    /// Trapezoid mass of the density.
    pub fn mass(&self) -> f64 {
        trapezoid(&self.density, |_| 1.0)
    }

    /// Piecewise-linear CDF from the cumulative trapezoid, normalized to end at 1.
    pub fn cdf(&self) -> DensityCdf {
        let mut xs = Vec::with_capacity(self.density.len());
        let mut cum = Vec::with_capacity(self.density.len());
        let mut acc = 0.0;
        for (i, &(x, r)) in self.density.iter().enumerate() {
            if i > 0 {
                let (xp, rp) = self.density[i - 1];
                acc += 0.5 * (r + rp) * (x - xp);
            }
            xs.push(x);
            cum.push(acc);
        }
        let total = acc;
        if total > 0.0 {
            cum.iter_mut().for_each(|c| *c /= total);
        }
        DensityCdf { xs, cum, mass: total }
    }
}

/// CDF obtained by integrating a tabulated density.
#[derive(Debug, Clone)]
pub struct DensityCdf {
    xs: Vec<f64>,
    cum: Vec<f64>,
    pub mass: f64,
}

impl DensityCdf {
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if n == 0 || x <= self.xs[0] {
            return 0.0;
        }
        if x >= self.xs[n - 1] {
            return 1.0;
        }
        let i = self.xs.partition_point(|&t| t <= x);
        let (x0, x1) = (self.xs[i - 1], self.xs[i]);
        let t = (x - x0) / (x1 - x0);
        self.cum[i - 1] + t * (self.cum[i] - self.cum[i - 1])
    }
}

fn trapezoid(density: &[(f64, f64)], f: impl Fn(f64) -> f64) -> f64 {
    density
        .windows(2)
        .map(|w| 0.5 * (w[0].1 * f(w[0].0) + w[1].1 * f(w[1].0)) * (w[1].0 - w[0].0))
        .sum()
}

/// `points` equispaced x values covering the support of the law with a 5% margin.
pub fn default_grid(input: &DeformedInput, points: usize) -> Vec<f64> {
    let r = 1.05 * input.support_radius().max(1e-6);
    let k = points.max(2);
    (0..k).map(|i| -r + 2.0 * r * i as f64 / (k - 1) as f64).collect()
}

/// Solves along a sorted grid at height `v`, warm-starting each point from
/// its left neighbour, then inverts to a density.
pub fn solve_density(input: &DeformedInput, x_grid: &[f64], opts: &DensityOptions) -> Result<LawSolution> {
    if !(opts.v > 0.0) {
        return Err(Error::invalid(format!("v must be positive, got {}", opts.v)));
    }
    if x_grid.is_empty() {
        return Err(Error::invalid("empty x grid"));
    }
    if x_grid.iter().any(|x| !x.is_finite()) || x_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("x grid must be finite and strictly increasing"));
    }
    let mut xs = x_grid.to_vec();
    let mut points = sweep(input, &xs, opts.v, &opts.solver);
    let mut coarse = opts.richardson.then(|| sweep(input, &xs, 2.0 * opts.v, &opts.solver));

    if let Some(threshold) = opts.refine_threshold {
        for _ in 0..2 {
            let rho: Vec<f64> = points.iter().map(|p| p.m.im / std::f64::consts::PI).collect();
            let peak = rho.iter().copied().fold(0.0, f64::max);
            let jumps: Vec<usize> = (0..xs.len().saturating_sub(1))
                .filter(|&i| (rho[i + 1] - rho[i]).abs() > threshold * peak)
                .collect();
            if jumps.is_empty() {
                break;
            }
            let mut new_xs = Vec::with_capacity(xs.len() + jumps.len());
            let mut new_pts = Vec::with_capacity(xs.len() + jumps.len());
            let mut new_coarse = coarse.as_ref().map(|_| Vec::with_capacity(xs.len() + jumps.len()));
            let mut j = 0;
            for i in 0..xs.len() {
                new_xs.push(xs[i]);
                new_pts.push(points[i]);
                if let (Some(nc), Some(c)) = (new_coarse.as_mut(), coarse.as_ref()) {
                    nc.push(c[i]);
                }
                if j < jumps.len() && jumps[j] == i {
                    let mid = 0.5 * (xs[i] + xs[i + 1]);
                    let z = Complex64::new(mid, opts.v);
                    new_pts.push(solve_warm(input, z, Some(points[i].beta), &opts.solver));
                    if let (Some(nc), Some(c)) = (new_coarse.as_mut(), coarse.as_ref()) {
                        let z2 = Complex64::new(mid, 2.0 * opts.v);
                        nc.push(solve_warm(input, z2, Some(c[i].beta), &opts.solver));
                    }
                    new_xs.push(mid);
                    j += 1;
                }
            }
            xs = new_xs;
            points = new_pts;
            coarse = new_coarse;
        }
    }

    let pi = std::f64::consts::PI;
    let density = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let fine = points[i].m.im / pi;
            let rho = match coarse.as_ref() {
                Some(c) => (2.0 * fine - c[i].m.im / pi).max(0.0),
                None => fine.max(0.0),
            };
            (x, rho)
        })
        .collect();
    let mut warnings = Vec::new();
    for p in points.iter().chain(coarse.iter().flatten()) {
        if !p.converged {
            warnings.push(format!(
                "no convergence at z = {:.6}{:+.6}i (residual {:.3e})",
                p.z.re, p.z.im, p.residual_beta
            ));
        }
    }
    if let Some(c) = coarse {
        points.extend(c);
    }
    Ok(LawSolution {
        points,
        density,
        v_used: opts.v,
        richardson: opts.richardson,
        warnings,
    })
}

fn sweep(input: &DeformedInput, xs: &[f64], v: f64, opts: &SolverOptions) -> Vec<PointSolution> {
    let mut out: Vec<PointSolution> = Vec::with_capacity(xs.len());
    let mut warm = None;
    for &x in xs {
        let sol = solve_warm(input, Complex64::new(x, v), warm, opts);
        warm = sol.converged.then_some(sol.beta);
        out.push(sol);
    }
    out
}

/// First two moments of a solved density plus the free prediction of the
/// second moment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Moments {
    pub mass: f64,
    pub m1: f64,
    pub m2: f64,
    pub m2_free: f64,
}

pub fn moments(solution: &LawSolution, input: &DeformedInput) -> Result<Moments> {
    let mass = solution.mass();
    if mass < 0.99 {
        return Err(Error::GridCoverage { mass });
    }
    Ok(Moments {
        mass,
        m1: trapezoid(&solution.density, |x| x),
        m2: trapezoid(&solution.density, |x| x * x),
        m2_free: input.m2_free(),
    })
}
