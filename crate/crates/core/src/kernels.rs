//! Random weights, empirical CK/NTK matrices and their expected kernels.
//!
//! All accumulation over the hidden width runs over fixed row-blocks of `W`
//! grouped into a fixed number of partial sums, reduced in group order. The
//! result is therefore identical for any number of worker threads.

use std::collections::HashMap;
use std::ops::Range;

use faer::Mat;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activation::{scaled_second_moments, Activation, HermiteData, DEFAULT_ORDER, MAX_ORDER};
use crate::datagen::DataMatrix;
use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::{stream_rng, Stream};

/// Rows of `W` generated and multiplied at once.
pub const BLOCK_ROWS: usize = 512;
/// Number of independent partial sums in a width reduction.
const GROUPS: usize = 8;
/// Default refusal threshold for `d1 * (n + d0)`.
pub const DEFAULT_WORK_BUDGET: f64 = 5e10;

/// Hidden-layer weights `W` (d1 x d0) and output weights `a` (d1), generated
/// lazily: row `r` of `W` and `a_r` come from their own counter-based stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WeightDraw {
    pub seed: u64,
    pub d0: usize,
    pub d1: usize,
    stream: Stream,
}

impl WeightDraw {
    pub fn new(seed: u64, d0: usize, d1: usize) -> Result<Self> {
        Self::with_stream(seed, d0, d1, Stream::Weights)
    }

    pub(crate) fn with_stream(seed: u64, d0: usize, d1: usize, stream: Stream) -> Result<Self> {
        if d0 == 0 || d1 == 0 {
            return Err(Error::invalid(format!(
                "weight dimensions must be positive, got d0={d0}, d1={d1}"
            )));
        }
        Ok(Self { seed, d0, d1, stream })
    }

    /// `W[rows]^T` (d0 x |rows|) and `a[rows]`.
    pub fn block(&self, rows: Range<usize>) -> (Mat<f64>, Vec<f64>) {
        let mut wt = Mat::<f64>::zeros(self.d0, rows.len());
        let mut a = Vec::with_capacity(rows.len());
        for (j, r) in rows.enumerate() {
            let mut rng = stream_rng(self.seed, self.stream, r as u64);
            for v in wt.col_as_slice_mut(j) {
                *v = StandardNormal.sample(&mut rng);
            }
            a.push(StandardNormal.sample(&mut rng));
        }
        (wt, a)
    }

    /// Full `W` (d1 x d0) and `a`.
    pub fn materialize(&self) -> (Mat<f64>, Vec<f64>) {
        let (wt, a) = self.block(0..self.d1);
        (wt.transpose().to_owned(), a)
    }

    fn check(&self, data: &DataMatrix) -> Result<()> {
        if data.d0() != self.d0 {
            return Err(Error::DimensionMismatch(format!(
                "weights expect d0={}, data has d0={}",
                self.d0,
                data.d0()
            )));
        }
        Ok(())
    }

    /// Block ranges split into `GROUPS` contiguous groups.
    pub(crate) fn groups(&self) -> Vec<Vec<Range<usize>>> {
        let blocks: Vec<Range<usize>> = (0..self.d1)
            .step_by(BLOCK_ROWS)
            .map(|s| s..(s + BLOCK_ROWS).min(self.d1))
            .collect();
        let per = blocks.len().div_ceil(GROUPS).max(1);
        blocks.chunks(per).map(|c| c.to_vec()).collect()
    }
}

/// Pre-activations `W[rows] X` (|rows| x n) with the matching `a[rows]`.
pub(crate) fn preactivations(weights: &WeightDraw, x: &Mat<f64>, rows: Range<usize>) -> (Mat<f64>, Vec<f64>) {
    let (wt, a) = weights.block(rows);
    (linalg::at_b(wt.as_ref(), x.as_ref()), a)
}

pub(crate) fn map_mat(m: &mut Mat<f64>, f: impl Fn(&mut [f64])) {
    for j in 0..m.ncols() {
        f(m.col_as_slice_mut(j));
    }
}

/// `S` block: `sigma'(Z)` with row `i` scaled by `a_i`.
pub(crate) fn s_block(act: &Activation, z: &mut Mat<f64>, a: &[f64]) {
    map_mat(z, |col| {
        act.apply_deriv_inplace(col);
        for (v, ai) in col.iter_mut().zip(a) {
            *v *= ai;
        }
    });
}

/// Runs `work` over every group of row-blocks in parallel and sums the
/// per-group outputs in group order.
pub(crate) fn reduce_groups<T: Send>(
    weights: &WeightDraw,
    work: impl Fn(&[Range<usize>]) -> Result<T> + Sync,
    mut combine: impl FnMut(&mut T, T),
) -> Result<T> {
    let parts: Vec<Result<T>> = weights.groups().par_iter().map(|g| work(g)).collect();
    let mut iter = parts.into_iter();
    let mut acc = iter.next().expect("at least one group")?;
    for p in iter {
        combine(&mut acc, p?);
    }
    Ok(acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BuildOptions {
    /// Also build the gradient part and the NTK.
    pub ntk: bool,
    /// Refuse when `d1 * (n + d0)` exceeds this.
    pub work_budget: f64,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            ntk: true,
            work_budget: DEFAULT_WORK_BUDGET,
        }
    }
}

impl BuildOptions {
    pub fn ck_only() -> Self {
        Self {
            ntk: false,
            ..Self::default()
        }
    }
}

/// Empirical kernels of one weight draw.
#[derive(Debug, Clone)]
pub struct KernelMatrices {
    /// `(1/d1) Y^T Y`.
    pub ck: Mat<f64>,
    /// `(1/d1) (S^T S) ⊙ (X^T X)`.
    pub grad: Option<Mat<f64>>,
    /// `ck + grad`.
    pub ntk: Option<Mat<f64>>,
    pub d1: usize,
}

impl KernelMatrices {
    pub fn n(&self) -> usize {
        self.ck.nrows()
    }
}

fn check_budget(d1: usize, n: usize, d0: usize, budget: f64) -> Result<()> {
    let work = d1 as f64 * (n + d0) as f64;
    if work > budget {
        return Err(Error::BudgetExceeded(format!(
            "d1*(n+d0) = {work:.3e} exceeds the budget {budget:.3e}"
        )));
    }
    Ok(())
}

/// Builds CK (and optionally the gradient kernel and NTK) for one draw.
pub fn build_empirical(
    data: &DataMatrix,
    act: &Activation,
    weights: &WeightDraw,
    opts: &BuildOptions,
) -> Result<KernelMatrices> {
    weights.check(data)?;
    let n = data.n();
    check_budget(weights.d1, n, data.d0(), opts.work_budget)?;
    let x = data.x();
    let (mut ck, sts) = reduce_groups(
        weights,
        |group| {
            let mut ck = Mat::<f64>::zeros(n, n);
            let mut sts = opts.ntk.then(|| Mat::<f64>::zeros(n, n));
            for rows in group {
                let (mut z, a) = preactivations(weights, x, rows.clone());
                if let Some(sts) = sts.as_mut() {
                    let mut s = z.clone();
                    s_block(act, &mut s, &a);
                    linalg::gram_lower_acc(sts.as_mut(), s.as_ref(), 1.0);
                }
                map_mat(&mut z, |c| act.apply_inplace(c));
                linalg::gram_lower_acc(ck.as_mut(), z.as_ref(), 1.0);
            }
            Ok((ck, sts))
        },
        |acc, part| {
            acc.0 += &part.0;
            if let (Some(a), Some(b)) = (acc.1.as_mut(), part.1) {
                *a += &b;
            }
        },
    )?;
    let inv = 1.0 / weights.d1 as f64;
    ck *= faer::Scale(inv);
    linalg::mirror_lower(ck.as_mut());
    let (grad, ntk) = match sts {
        Some(mut sts) => {
            linalg::mirror_lower(sts.as_mut());
            let g = data.gram();
            let grad = Mat::from_fn(n, n, |i, j| sts[(i, j)] * inv * g[(i, j)]);
            let ntk = &ck + &grad;
            (Some(grad), Some(ntk))
        }
        None => (None, None),
    };
    Ok(KernelMatrices {
        ck,
        grad,
        ntk,
        d1: weights.d1,
    })
}

/// How to obtain the expected kernel `Phi` (and `Psi`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum PhiMethod {
    HermiteSeries { order: usize },
    MonteCarlo { draws: usize, seed: u64 },
}

impl Default for PhiMethod {
    fn default() -> Self {
        Self::HermiteSeries {
            order: DEFAULT_ORDER,
        }
    }
}

/// Hermite coefficients of `sigma(r .)` (or `sigma'(r .)`) for every column,
/// cached by the column norm rounded to 12 digits.
struct ColumnCoefficients {
    index: Vec<usize>,
    coeffs: Vec<Vec<f64>>,
    diag: Vec<f64>,
}

impl ColumnCoefficients {
    fn new(norms: &[f64], act: &Activation, order: usize, derivative: bool) -> Result<Self> {
        let mut keys: HashMap<i64, usize> = HashMap::new();
        let mut coeffs = Vec::new();
        let mut diag = Vec::new();
        let mut index = Vec::with_capacity(norms.len());
        for &r in norms {
            if !(r > 0.0) {
                return Err(Error::invalid("Hermite-series kernels need nonzero column norms"));
            }
            let key = (r * 1e12).round() as i64;
            let slot = match keys.get(&key) {
                Some(&s) => s,
                None => {
                    let c = if derivative {
                        act.scaled_deriv_coefficients(r, order)?
                    } else {
                        act.scaled_coefficients(r, order)?
                    };
                    let (m_sigma, m_deriv) = scaled_second_moments(act, r);
                    coeffs.push(c);
                    diag.push(if derivative { m_deriv } else { m_sigma });
                    keys.insert(key, coeffs.len() - 1);
                    coeffs.len() - 1
                }
            };
            index.push(slot);
        }
        Ok(Self { index, coeffs, diag })
    }

    fn coeff(&self, col: usize) -> &[f64] {
        &self.coeffs[self.index[col]]
    }
}

fn series(za: &[f64], zb: &[f64], u: f64) -> f64 {
    // Horner in u over k descending
    za.iter()
        .zip(zb)
        .rev()
        .fold(0.0, |acc, (a, b)| acc * u + a * b)
}

fn check_order(order: usize) -> Result<()> {
    if order > MAX_ORDER {
        return Err(Error::UnsupportedOrder {
            order,
            max: MAX_ORDER,
        });
    }
    Ok(())
}

/// Hermite-series kernel between the columns of `a` and `b`. When `same` is
/// set, diagonal entries are replaced by the exact second moments, so the
/// truncated tail of the series is folded into the diagonal.
fn series_kernel(
    a: &DataMatrix,
    b: &DataMatrix,
    act: &Activation,
    order: usize,
    derivative: bool,
    same: bool,
) -> Result<Mat<f64>> {
    check_order(order)?;
    let na = a.column_norms();
    let nb = b.column_norms();
    let ca = ColumnCoefficients::new(&na, act, order, derivative)?;
    let cb = if same {
        None
    } else {
        Some(ColumnCoefficients::new(&nb, act, order, derivative)?)
    };
    let cb_ref = cb.as_ref().unwrap_or(&ca);
    let inner = linalg::at_b(a.x().as_ref(), b.x().as_ref());
    let mut out = Mat::from_fn(a.n(), b.n(), |i, j| {
        let u = (inner[(i, j)] / (na[i] * nb[j])).clamp(-1.0, 1.0);
        let v = series(ca.coeff(i), cb_ref.coeff(j), u);
        if derivative {
            v * inner[(i, j)]
        } else {
            v
        }
    });
    if same {
        for i in 0..a.n() {
            let d = ca.diag[ca.index[i]];
            out[(i, i)] = if derivative { d * na[i] * na[i] } else { d };
        }
        linalg::symmetrize(out.as_mut());
    }
    Ok(out)
}

/// Monte-Carlo kernel estimate with entrywise standard errors.
#[derive(Debug, Clone)]
pub struct MonteCarloKernel {
    pub mean: Mat<f64>,
    pub std_err: Mat<f64>,
    pub draws: usize,
}

fn monte_carlo(
    data: &DataMatrix,
    act: &Activation,
    draws: usize,
    seed: u64,
    derivative: bool,
) -> Result<MonteCarloKernel> {
    let n = data.n();
    let weights = WeightDraw::with_stream(seed, data.d0(), draws, Stream::Sampling)?;
    let x = data.x();
    let (mut s1, mut s2) = reduce_groups(
        &weights,
        |group| {
            let mut s1 = Mat::<f64>::zeros(n, n);
            let mut s2 = Mat::<f64>::zeros(n, n);
            for rows in group {
                let (mut z, _) = preactivations(&weights, x, rows.clone());
                if derivative {
                    map_mat(&mut z, |c| act.apply_deriv_inplace(c));
                } else {
                    map_mat(&mut z, |c| act.apply_inplace(c));
                }
                linalg::gram_lower_acc(s1.as_mut(), z.as_ref(), 1.0);
                map_mat(&mut z, |c| c.iter_mut().for_each(|v| *v *= *v));
                linalg::gram_lower_acc(s2.as_mut(), z.as_ref(), 1.0);
            }
            Ok((s1, s2))
        },
        |acc, p| {
            acc.0 += &p.0;
            acc.1 += &p.1;
        },
    )?;
    linalg::mirror_lower(s1.as_mut());
    linalg::mirror_lower(s2.as_mut());
    let m = draws as f64;
    s1 *= faer::Scale(1.0 / m);
    let mut se = Mat::from_fn(n, n, |i, j| {
        let var = (s2[(i, j)] / m - s1[(i, j)].powi(2)).max(0.0);
        (var / m).sqrt()
    });
    if derivative {
        let g = data.gram();
        s1 = Mat::from_fn(n, n, |i, j| s1[(i, j)] * g[(i, j)]);
        se = Mat::from_fn(n, n, |i, j| se[(i, j)] * g[(i, j)].abs());
    }
    s2 = se;
    Ok(MonteCarloKernel {
        mean: s1,
        std_err: s2,
        draws,
    })
}

/// `Phi = E[sigma(X^T w) sigma(w^T X)]`.
pub fn expected_phi(data: &DataMatrix, act: &Activation, method: PhiMethod) -> Result<Mat<f64>> {
    match method {
        PhiMethod::HermiteSeries { order } => series_kernel(data, data, act, order, false, true),
        PhiMethod::MonteCarlo { draws, seed } => Ok(monte_carlo(data, act, draws, seed, false)?.mean),
    }
}

/// `Psi = E[sigma'(X^T w) sigma'(w^T X)] ⊙ X^T X`.
pub fn expected_psi(data: &DataMatrix, act: &Activation, method: PhiMethod) -> Result<Mat<f64>> {
    match method {
        PhiMethod::HermiteSeries { order } => series_kernel(data, data, act, order, true, true),
        PhiMethod::MonteCarlo { draws, seed } => Ok(monte_carlo(data, act, draws, seed, true)?.mean),
    }
}

/// Monte-Carlo `Phi` with standard errors.
pub fn monte_carlo_phi(data: &DataMatrix, act: &Activation, draws: usize, seed: u64) -> Result<MonteCarloKernel> {
    monte_carlo(data, act, draws, seed, false)
}

/// Monte-Carlo `Psi` with standard errors.
pub fn monte_carlo_psi(data: &DataMatrix, act: &Activation, draws: usize, seed: u64) -> Result<MonteCarloKernel> {
    monte_carlo(data, act, draws, seed, true)
}

/// Cross blocks `Phi(a, b)` / `Psi(a, b)` by Hermite series, for columns of `a`
/// distinct from those of `b`.
pub fn expected_cross(
    a: &DataMatrix,
    b: &DataMatrix,
    act: &Activation,
    order: usize,
    derivative: bool,
) -> Result<Mat<f64>> {
    if a.d0() != b.d0() {
        return Err(Error::DimensionMismatch(format!(
            "cross kernel between d0={} and d0={}",
            a.d0(),
            b.d0()
        )));
    }
    series_kernel(a, b, act, order, derivative, false)
}

/// `mu_alpha = sqrt(2) zeta_2 (||x_alpha|| - 1)`.
pub fn mu_vector(data: &DataMatrix, hd: &HermiteData) -> Vec<f64> {
    let z2 = hd.zeta_at(2);
    data.column_norms()
        .iter()
        .map(|r| std::f64::consts::SQRT_2 * z2 * (r - 1.0))
        .collect()
}

/// `mu mu^T + sum_{k=1}^3 zeta_k^2 (X^T X)^{⊙k} + (1 - zeta_1^2 - zeta_2^2 - zeta_3^2) I`.
pub fn phi0(data: &DataMatrix, hd: &HermiteData) -> Mat<f64> {
    let g = data.gram();
    let mu = mu_vector(data, hd);
    let z: Vec<f64> = (1..=3).map(|k| hd.zeta_at(k).powi(2)).collect();
    let floor = hd.floor_ck();
    let n = data.n();
    Mat::from_fn(n, n, |i, j| {
        let u = g[(i, j)];
        let mut v = mu[i] * mu[j] + u * (z[0] + u * (z[1] + u * z[2]));
        if i == j {
            v += floor;
        }
        v
    })
}

/// `(a_sigma - sum_{k=0}^2 eta_k^2) I + sum_{k=0}^2 eta_k^2 (X^T X)^{⊙(k+1)}`.
pub fn psi0(data: &DataMatrix, hd: &HermiteData) -> Mat<f64> {
    let g = data.gram();
    let e: Vec<f64> = (0..=2).map(|k| hd.eta_at(k).powi(2)).collect();
    let floor = hd.floor_ntk();
    let n = data.n();
    Mat::from_fn(n, n, |i, j| {
        let u = g[(i, j)];
        let mut v = u * (e[0] + u * (e[1] + u * e[2]));
        if i == j {
            v += floor;
        }
        v
    })
}

/// Linear kernels `b^2 X^T X + (1 - b^2) I` and that plus `b^2 X^T X + (a - b^2) I`.
pub fn linear_equivalents(data: &DataMatrix, hd: &HermiteData) -> (Mat<f64>, Mat<f64>) {
    let g = data.gram();
    let b2 = hd.b_sigma.powi(2);
    let n = data.n();
    let ck = Mat::from_fn(n, n, |i, j| b2 * g[(i, j)] + if i == j { 1.0 - b2 } else { 0.0 });
    let ntk = Mat::from_fn(n, n, |i, j| {
        ck[(i, j)] + b2 * g[(i, j)] + if i == j { hd.a_sigma - b2 } else { 0.0 }
    });
    (ck, ntk)
}

/// Expected kernels and their low-order equivalents for one data matrix.
#[derive(Debug, Clone)]
pub struct DeterministicEquivalents {
    pub phi: Option<Mat<f64>>,
    pub phi0: Mat<f64>,
    pub psi: Option<Mat<f64>>,
    pub psi0: Mat<f64>,
    pub mu: Vec<f64>,
}

impl DeterministicEquivalents {
    /// `Phi0`, `Psi0`, and optionally `Phi` / `Psi` by `method`.
    pub fn compute(
        data: &DataMatrix,
        act: &Activation,
        hd: &HermiteData,
        method: Option<PhiMethod>,
        with_psi: bool,
    ) -> Result<Self> {
        let phi = method.map(|m| expected_phi(data, act, m)).transpose()?;
        let psi = match (method, with_psi) {
            (Some(m), true) => Some(expected_psi(data, act, m)?),
            _ => None,
        };
        Ok(Self {
            phi,
            phi0: phi0(data, hd),
            psi,
            psi0: psi0(data, hd),
            mu: mu_vector(data, hd),
        })
    }
}
