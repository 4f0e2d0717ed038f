//! Monte-Carlo checks of the non-asymptotic statements: operator-norm
//! concentration of CK/NTK around their expectations, smallest-eigenvalue
//! floors, the Frobenius fluctuation limit and the Hanson–Wright behavior of
//! quadratic forms in `sigma(w^T X)`.

use faer::Mat;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::activation::{hermite_data, Activation, HermiteData, DEFAULT_ORDER};
use crate::datagen::{empirical_measure, DataMatrix};
use crate::error::{Error, Result};
use crate::kernels::{
    build_empirical, expected_phi, expected_psi, monte_carlo_phi, preactivations, BuildOptions, PhiMethod,
    WeightDraw,
};
use crate::law::DeformedInput;
use crate::linalg;
use crate::rng::{derive_seed, stream_rng, Stream};

/// One `(n, d1, seed)` trial. Column names match the report CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationRecord {
    pub n: usize,
    pub d0: usize,
    pub d1: usize,
    pub seed: u64,
    /// `||CK - Phi||`.
    pub op_ck: f64,
    /// `||(1/d1)(S^T S) ⊙ X^T X - Psi||`, NaN when the NTK was skipped.
    pub op_grad: f64,
    /// `||H - Phi - Psi||`, NaN when the NTK was skipped.
    pub op_ntk: f64,
    pub lmin_ck: f64,
    pub lmin_ntk: f64,
    /// `(sqrt(d1)/n) ||CK - Phi||_F`.
    pub frob: f64,
    pub floor_ck: f64,
    pub floor_ntk: f64,
}

impl ConcentrationRecord {
    pub const CSV_HEADER: &'static str =
        "n,d0,d1,seed,op_ck,op_grad,op_ntk,lmin_ck,lmin_ntk,frob,floor_ck,floor_ntk";
}

/// Expected kernels shared by every trial on the same data.
#[derive(Debug, Clone)]
pub struct Expectations {
    pub phi: Mat<f64>,
    pub psi: Option<Mat<f64>>,
    pub hermite: HermiteData,
}

impl Expectations {
    pub fn compute(data: &DataMatrix, act: &Activation, method: PhiMethod, with_psi: bool) -> Result<Self> {
        Ok(Self {
            phi: expected_phi(data, act, method)?,
            psi: with_psi.then(|| expected_psi(data, act, method)).transpose()?,
            hermite: hermite_data(act, DEFAULT_ORDER)?,
        })
    }
}

fn lambda_min(m: &Mat<f64>) -> Result<f64> {
    Ok(linalg::sym_eigenvalues(m.as_ref())?[0])
}

/// Builds one weight draw and measures every deviation against `exp`.
pub fn trial(
    data: &DataMatrix,
    act: &Activation,
    exp: &Expectations,
    d1: usize,
    seed: u64,
    opts: &BuildOptions,
) -> Result<ConcentrationRecord> {
    let weights = WeightDraw::new(seed, data.d0(), d1)?;
    let k = build_empirical(data, act, &weights, opts)?;
    let n = data.n();
    let dev = &k.ck - &exp.phi;
    let op_ck = linalg::sym_op_norm(dev.as_ref())?;
    let frob = (d1 as f64).sqrt() / n as f64 * linalg::frobenius(dev.as_ref());
    let lmin_ck = lambda_min(&k.ck)?;
    let (mut op_grad, mut op_ntk, mut lmin_ntk) = (f64::NAN, f64::NAN, f64::NAN);
    if let (Some(grad), Some(ntk), Some(psi)) = (&k.grad, &k.ntk, &exp.psi) {
        op_grad = linalg::sym_op_norm((grad - psi).as_ref())?;
        op_ntk = linalg::sym_op_norm((&dev + &(grad - psi)).as_ref())?;
        lmin_ntk = lambda_min(ntk)?;
    }
    Ok(ConcentrationRecord {
        n,
        d0: data.d0(),
        d1,
        seed,
        op_ck,
        op_grad,
        op_ntk,
        lmin_ck,
        lmin_ntk,
        frob,
        floor_ck: exp.hermite.floor_ck(),
        floor_ntk: exp.hermite.floor_ntk(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    /// Also build the NTK and measure its deviations.
    pub ntk: bool,
    pub phi_method: PhiMethod,
    /// Draws of a Monte-Carlo spot check of `Phi` (0 skips it).
    pub spot_check_draws: usize,
    pub work_budget: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            ntk: true,
            phi_method: PhiMethod::default(),
            spot_check_draws: 0,
            work_budget: crate::kernels::DEFAULT_WORK_BUDGET,
        }
    }
}

/// Records of a sweep plus the fitted rate.
#[derive(Debug, Clone, Serialize)]
pub struct ConcentrationReport {
    pub records: Vec<ConcentrationRecord>,
    /// Smallest `C` with `op_ck <= C (sqrt(n/d1) + n/d1) lip^2 ||X||^2` on every record.
    pub envelope_constant: f64,
    /// Least-squares slope of `ln median(op_ck)` against `ln d1`; NaN with fewer than two widths.
    pub slope: f64,
    /// Median `op_ck` per width, in the order of `d1_list`.
    pub medians: Vec<(usize, f64)>,
    /// Largest `|Phi_series - Phi_mc| / se` over the spot-checked block.
    pub spot_check_z: Option<f64>,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Ordinary least-squares slope of `y` against `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    if x.len() < 2 {
        return f64::NAN;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Runs `seeds.len()` trials at every width in `d1_list`.
pub fn sweep_op_norm(
    data: &DataMatrix,
    act: &Activation,
    d1_list: &[usize],
    seeds: &[u64],
    opts: &SweepOptions,
) -> Result<ConcentrationReport> {
    if d1_list.is_empty() || seeds.is_empty() {
        return Err(Error::invalid("sweep needs at least one width and one seed"));
    }
    let build = BuildOptions {
        ntk: opts.ntk,
        work_budget: opts.work_budget,
    };
    // refuse up front rather than after some trials have run
    let widest = *d1_list.iter().max().expect("non-empty");
    let work = widest as f64 * (data.n() + data.d0()) as f64;
    if work > opts.work_budget {
        return Err(Error::BudgetExceeded(format!(
            "d1*(n+d0) = {work:.3e} exceeds the budget {:.3e}",
            opts.work_budget
        )));
    }
    let exp = Expectations::compute(data, act, opts.phi_method, opts.ntk)?;
    let spot_check_z = match opts.spot_check_draws {
        0 => None,
        draws => Some(spot_check(data, act, &exp.phi, draws, seeds[0])?),
    };
    let mut records = Vec::with_capacity(d1_list.len() * seeds.len());
    for &d1 in d1_list {
        for &seed in seeds {
            records.push(trial(data, act, &exp, d1, seed, &build)?);
        }
    }
    let scale = {
        let xn = linalg::op_norm(data.x().as_ref())?;
        act.lipschitz().powi(2) * xn * xn
    };
    let n = data.n() as f64;
    let envelope_constant = records
        .iter()
        .map(|r| {
            let q = n / r.d1 as f64;
            r.op_ck / ((q.sqrt() + q) * scale)
        })
        .fold(0.0, f64::max);
    let medians: Vec<(usize, f64)> = d1_list
        .iter()
        .map(|&d1| {
            let v: Vec<f64> = records.iter().filter(|r| r.d1 == d1).map(|r| r.op_ck).collect();
            (d1, median(&v))
        })
        .collect();
    let lx: Vec<f64> = medians.iter().map(|(d, _)| (*d as f64).ln()).collect();
    let ly: Vec<f64> = medians.iter().map(|(_, m)| m.ln()).collect();
    Ok(ConcentrationReport {
        records,
        envelope_constant,
        slope: ols_slope(&lx, &ly),
        medians,
        spot_check_z,
    })
}

/// Compares `phi` with a Monte-Carlo estimate on the leading 32x32 block.
fn spot_check(data: &DataMatrix, act: &Activation, phi: &Mat<f64>, draws: usize, seed: u64) -> Result<f64> {
    let k = data.n().min(32);
    let sub = DataMatrix::from_matrix(data.x().subcols(0, k).to_owned())?;
    let mc = monte_carlo_phi(&sub, act, draws, derive_seed(seed, 0x5107))?;
    let mut z = 0.0_f64;
    for j in 0..k {
        for i in 0..k {
            let se = mc.std_err[(i, j)].max(1e-300);
            z = z.max((phi[(i, j)] - mc.mean[(i, j)]).abs() / se);
        }
    }
    Ok(z)
}

/// Smallest eigenvalues of one draw against the floors from [`HermiteData`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LambdaMinRecord {
    pub seed: u64,
    pub lmin_ck: f64,
    pub lmin_ntk: f64,
    pub floor_ck: f64,
    pub floor_ntk: f64,
}

pub fn lambda_min_check(data: &DataMatrix, act: &Activation, d1: usize, seed: u64) -> Result<LambdaMinRecord> {
    if act.is_linear() {
        return Err(Error::LinearActivation(
            "the smallest eigenvalue is then fixed by lambda_min(X^T X)",
        ));
    }
    let hd = hermite_data(act, DEFAULT_ORDER)?;
    let k = build_empirical(data, act, &WeightDraw::new(seed, data.d0(), d1)?, &BuildOptions::default())?;
    Ok(LambdaMinRecord {
        seed,
        lmin_ck: lambda_min(&k.ck)?,
        lmin_ntk: lambda_min(k.ntk.as_ref().expect("built with ntk"))?,
        floor_ck: hd.floor_ck(),
        floor_ntk: hd.floor_ntk(),
    })
}

/// `k`-of-`m` gate: at least `required` entries pass.
pub fn quantile_gate(passes: &[bool], required: usize) -> bool {
    passes.iter().filter(|&&p| p).count() >= required
}

#[derive(Debug, Clone, Serialize)]
pub struct FrobeniusReport {
    pub values: Vec<f64>,
    pub mean: f64,
    /// `sqrt(m2)` of the limiting law built from the empirical spectrum of `X^T X`.
    pub limit: f64,
}

impl FrobeniusReport {
    pub fn relative_error(&self) -> f64 {
        (self.mean - self.limit).abs() / self.limit
    }
}

pub fn frobenius_fluctuation(
    data: &DataMatrix,
    act: &Activation,
    d1: usize,
    seeds: &[u64],
    method: PhiMethod,
) -> Result<FrobeniusReport> {
    if seeds.is_empty() {
        return Err(Error::invalid("frobenius_fluctuation needs at least one seed"));
    }
    let exp = Expectations::compute(data, act, method, false)?;
    let build = BuildOptions::ck_only();
    let values = seeds
        .iter()
        .map(|&s| trial(data, act, &exp, d1, s, &build).map(|r| r.frob))
        .collect::<Result<Vec<f64>>>()?;
    let input = DeformedInput::from_data(empirical_measure(data)?, exp.hermite.b_sigma)?;
    Ok(FrobeniusReport {
        mean: values.iter().sum::<f64>() / values.len() as f64,
        values,
        limit: input.m2_free().sqrt(),
    })
}

/// Test matrices `A` for the quadratic-form probe; all have `||A|| <= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum HwMatrix {
    Zero,
    Identity,
    /// Orthogonal projector onto a random subspace of dimension `round(fraction * n)`.
    Projector { fraction: f64, seed: u64 },
    /// `Q diag(d) Q^T` with `Q` Haar-like and `d` uniform on `[-1, 1]`.
    RandomOrthogonalDiag { seed: u64 },
}

impl HwMatrix {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Zero => "zero",
            Self::Identity => "identity",
            Self::Projector { .. } => "projector",
            Self::RandomOrthogonalDiag { .. } => "random-orthogonal-conjugated-diag",
        }
    }

    pub fn build(&self, n: usize) -> Result<Mat<f64>> {
        Ok(match *self {
            Self::Zero => Mat::zeros(n, n),
            Self::Identity => Mat::identity(n, n),
            Self::Projector { fraction, seed } => {
                if !(0.0..=1.0).contains(&fraction) {
                    return Err(Error::invalid(format!("projector fraction {fraction} outside [0, 1]")));
                }
                let k = (fraction * n as f64).round() as usize;
                let q = random_orthogonal(n, seed);
                let qk = q.subcols(0, k);
                linalg::a_b(qk, qk.transpose())
            }
            Self::RandomOrthogonalDiag { seed } => {
                let q = random_orthogonal(n, seed);
                let mut rng = stream_rng(seed, Stream::Probe, u64::MAX);
                let d: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect();
                let qd = Mat::from_fn(n, n, |i, j| q[(i, j)] * d[j]);
                let mut a = linalg::a_b(qd.as_ref(), q.transpose());
                linalg::symmetrize(a.as_mut());
                a
            }
        })
    }
}

fn random_orthogonal(n: usize, seed: u64) -> Mat<f64> {
    let mut g = Mat::<f64>::zeros(n, n);
    for j in 0..n {
        let mut rng = stream_rng(seed, Stream::Probe, j as u64);
        for v in g.col_as_slice_mut(j) {
            *v = StandardNormal.sample(&mut rng);
        }
    }
    linalg::orthogonal_factor(g.as_ref())
}

/// Draws of `y^T A y - Tr(A Phi)` for `y = sigma(X^T w)`.
#[derive(Debug, Clone, Serialize)]
pub struct HwSample {
    pub matrix: &'static str,
    pub n: usize,
    pub statistic: Vec<f64>,
    pub mean: f64,
    pub std_err: f64,
    /// `(1/n^2) mean(|statistic|^2)`.
    pub scaled_second_moment: f64,
    /// `(t, fraction of draws with |statistic| > t n)`.
    pub tails: Vec<(f64, f64)>,
}

pub const HW_TAIL_GRID: [f64; 6] = [0.01, 0.02, 0.05, 0.1, 0.2, 0.5];

pub fn hanson_wright_probe(
    data: &DataMatrix,
    act: &Activation,
    matrix: HwMatrix,
    phi: &Mat<f64>,
    draws: usize,
    seed: u64,
) -> Result<HwSample> {
    let n = data.n();
    if phi.nrows() != n || phi.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "Phi is {}x{}, data has n={n}",
            phi.nrows(),
            phi.ncols()
        )));
    }
    if draws == 0 {
        return Err(Error::invalid("hanson_wright_probe needs at least one draw"));
    }
    let a = matrix.build(n)?;
    let tr = (0..n)
        .map(|j| (0..n).map(|i| a[(j, i)] * phi[(i, j)]).sum::<f64>())
        .sum::<f64>();
    let weights = WeightDraw::with_stream(seed, data.d0(), draws, Stream::Probe)?;
    let mut statistic = Vec::with_capacity(draws);
    for start in (0..draws).step_by(crate::kernels::BLOCK_ROWS) {
        let rows = start..(start + crate::kernels::BLOCK_ROWS).min(draws);
        // rows of `y` are draws
        let (mut y, _) = preactivations(&weights, data.x(), rows);
        crate::kernels::map_mat(&mut y, |c| act.apply_inplace(c));
        let ya = linalg::a_b(y.as_ref(), a.as_ref());
        for r in 0..y.nrows() {
            let q: f64 = (0..n).map(|j| ya[(r, j)] * y[(r, j)]).sum();
            statistic.push(q - tr);
        }
    }
    let m = draws as f64;
    let mean = statistic.iter().sum::<f64>() / m;
    let var = if draws > 1 {
        statistic.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (m - 1.0)
    } else {
        0.0
    };
    let nf = n as f64;
    let tails = HW_TAIL_GRID
        .iter()
        .map(|&t| (t, statistic.iter().filter(|s| s.abs() > t * nf).count() as f64 / m))
        .collect();
    Ok(HwSample {
        matrix: matrix.name(),
        n,
        mean,
        std_err: (var / m).sqrt(),
        scaled_second_moment: statistic.iter().map(|s| s * s).sum::<f64>() / (m * nf * nf),
        tails,
        statistic,
    })
}
