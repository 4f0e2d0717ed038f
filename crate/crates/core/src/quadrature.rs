//! Quadrature rules for expectations against the standard Gaussian and for
//! integrals over bounded intervals.

use std::f64::consts::PI;
use std::sync::OnceLock;

/// Number of Gauss–Hermite nodes used for smooth integrands.
pub const HERMITE_NODES: usize = 200;

/// Half-width of the truncated real line used by [`GaussianRule::split_legendre`].
/// Large enough that `h_k(x)^2 phi(x)` is below 1e-30 at the cut for `k <= 60`.
const SPLIT_HALF_WIDTH: f64 = 24.0;
const SPLIT_PANEL_WIDTH: f64 = 0.5;
const SPLIT_PANEL_ORDER: usize = 24;

/// A rule `sum_i w_i f(x_i) ~ E[f(xi)]` for `xi ~ N(0, 1)`.
#[derive(Debug, Clone)]
pub struct GaussianRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussianRule {
    /// `n`-point Gauss–Hermite rule, computed in the physicists' convention
    /// (weight `exp(-x^2)`) and mapped to the probabilists' weight by
    /// `x -> sqrt(2) x`, `w -> w / sqrt(pi)`.
    ///
    /// Exact for polynomials of degree `<= 2n - 1`.
    pub fn hermite(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Hermite rule needs at least one node");
        let (x, w) = physicists_hermite(n);
        let nodes = x.iter().map(|v| v * std::f64::consts::SQRT_2).collect();
        let weights = w.iter().map(|v| v / PI.sqrt()).collect();
        Self { nodes, weights }
    }

    /// Composite Gauss–Legendre rule on `[-L, 0]` and `[0, L]` with the
    /// Gaussian density folded into the weights. Panels meet at the origin,
    /// so integrands with a kink at zero are integrated without loss of order.
    pub fn split_legendre(half_width: f64, panel_width: f64, order: usize) -> Self {
        let panels = (half_width / panel_width).ceil() as usize;
        let base = LegendreRule::new(order);
        let mut nodes = Vec::with_capacity(2 * panels * order);
        let mut weights = Vec::with_capacity(2 * panels * order);
        let norm = 1.0 / (2.0 * PI).sqrt();
        for side in [-1.0, 1.0] {
            for p in 0..panels {
                let lo = p as f64 * panel_width;
                let hi = lo + panel_width;
                for (t, wt) in base.nodes.iter().zip(&base.weights) {
                    let x = side * (0.5 * (hi + lo) + 0.5 * (hi - lo) * t);
                    let w = 0.5 * (hi - lo) * wt * norm * (-0.5 * x * x).exp();
                    nodes.push(x);
                    weights.push(w);
                }
            }
        }
        Self { nodes, weights }
    }

    /// Shared 200-node Gauss–Hermite rule.
    pub fn smooth() -> &'static Self {
        static RULE: OnceLock<GaussianRule> = OnceLock::new();
        RULE.get_or_init(|| GaussianRule::hermite(HERMITE_NODES))
    }

    /// Shared split-at-zero rule for piecewise-linear integrands.
    pub fn kinked() -> &'static Self {
        static RULE: OnceLock<GaussianRule> = OnceLock::new();
        RULE.get_or_init(|| {
            GaussianRule::split_legendre(SPLIT_HALF_WIDTH, SPLIT_PANEL_WIDTH, SPLIT_PANEL_ORDER)
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `E[f(xi)]` under the rule.
    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Nodes from the eigenvalues of the Jacobi matrix, each polished by Newton
/// steps on the orthonormal recurrence; weights from the derivative formula,
/// which keeps full relative accuracy for the tiny outer weights.
fn physicists_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    const PIM4: f64 = 0.751_125_544_464_942_5; // pi^{-1/4}
    let jacobi = faer::Mat::from_fn(n, n, |i, j| {
        if i.abs_diff(j) == 1 {
            (i.max(j) as f64 / 2.0).sqrt()
        } else {
            0.0
        }
    });
    let mut x = crate::linalg::sym_eigenvalues(jacobi.as_ref())
        .expect("Jacobi matrix of the Hermite recurrence is finite and symmetric");
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for (z, wi) in x.iter_mut().zip(w.iter_mut()) {
        let mut pp = 0.0;
        for _ in 0..10 {
            let mut p1 = PIM4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = *z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let step = p1 / pp;
            *z -= step;
            if step.abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        *wi = 2.0 / (pp * pp);
    }
    (x, w)
}

/// Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct LegendreRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl LegendreRule {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        let nf = n as f64;
        for i in 0..m {
            let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut pp = 0.0;
            for _ in 0..100 {
                let mut p1 = 1.0;
                let mut p2 = 0.0;
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = ((2.0 * jf + 1.0) * z * p2 - jf * p3) / (jf + 1.0);
                }
                pp = nf * (z * p1 - p2) / (z * z - 1.0);
                let step = p1 / pp;
                z -= step;
                if step.abs() <= 1e-16 {
                    break;
                }
            }
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            weights[i] = 2.0 / ((1.0 - z * z) * pp * pp);
            weights[n - 1 - i] = weights[i];
        }
        Self { nodes, weights }
    }

    /// Shared 512-point rule used for closed-form spectral measures.
    pub fn standard() -> &'static Self {
        static RULE: OnceLock<LegendreRule> = OnceLock::new();
        RULE.get_or_init(|| LegendreRule::new(512))
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Iterator of `(x, w)` pairs mapped onto `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&t, &w)| (mid + half * t, half * w))
    }

    pub fn integrate(&self, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
        self.mapped(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn gaussian_moment(k: u32) -> f64 {
        if k % 2 == 1 {
            0.0
        } else {
            (1..k).step_by(2).map(|j| j as f64).product()
        }
    }

    #[test]
    fn hermite_rule_integrates_moments() {
        let rule = GaussianRule::smooth();
        assert_eq!(rule.len(), HERMITE_NODES);
        assert_relative_eq!(rule.weights().iter().sum::<f64>(), 1.0, epsilon = 1e-13);
        for k in 0..=20u32 {
            let m = rule.expect(|x| x.powi(k as i32));
            let tol = 1e-12 * gaussian_moment(2 * k.div_ceil(2)).max(1.0);
            assert!((m - gaussian_moment(k)).abs() <= tol, "k = {k}: {m}");
        }
    }

    #[test]
    fn split_rule_integrates_moments() {
        let rule = GaussianRule::kinked();
        assert_relative_eq!(rule.weights().iter().sum::<f64>(), 1.0, epsilon = 1e-13);
        for k in 0..=20u32 {
            let m = rule.expect(|x| x.powi(k as i32));
            let tol = 1e-12 * gaussian_moment(2 * k.div_ceil(2)).max(1.0);
            assert!((m - gaussian_moment(k)).abs() <= tol, "k = {k}: {m}");
        }
        // E[max(x, 0)] = 1/sqrt(2 pi)
        let relu = rule.expect(|x| x.max(0.0));
        assert_relative_eq!(relu, 1.0 / (2.0 * PI).sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn legendre_is_exact_for_polynomials() {
        let rule = LegendreRule::new(12);
        for k in 0..24 {
            let exact = 2f64.powi(k + 1) /(k as f64 + 1.0);
            let got = rule.integrate(0.0, 2.0, |x| x.powi(k));
            assert_relative_eq!(got, exact, max_relative = 1e-13);
        }
        let std = LegendreRule::standard();
        assert_relative_eq!(std.integrate(0.0, PI, f64::sin), 2.0, epsilon = 1e-13);
    }
}
