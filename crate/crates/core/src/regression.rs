//! Random-feature ridge regression against kernel ridge regression with the
//! expected kernel, on a linear target with Gaussian label noise, and the
//! asymptotic training/test errors through an effective ridge.

use faer::Mat;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::activation::{hermite_data, Activation, HermiteData, DEFAULT_ORDER};
use crate::datagen::{empirical_measure, generate_stream, DataMatrix, Generator, SpectralMeasure};
use crate::error::{Error, Result};
use crate::kernels::{
    build_empirical, expected_cross, expected_phi, expected_psi, map_mat, preactivations, reduce_groups, s_block,
    BuildOptions, PhiMethod, WeightDraw,
};
use crate::linalg::{self, SpdSolver};
use crate::rng::{derive_seed, stream_rng, Stream};

/// Which kernel the regression uses: CK, the gradient part of the NTK, or the full NTK.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelMode {
    Ck,
    NtkGrad,
    NtkFull,
}

impl KernelMode {
    pub const ALL: [KernelMode; 3] = [Self::Ck, Self::NtkGrad, Self::NtkFull];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Ck => "ck",
            Self::NtkGrad => "ntk-grad",
            Self::NtkFull => "ntk-full",
        }
    }

    fn uses_ck(&self) -> bool {
        matches!(self, Self::Ck | Self::NtkFull)
    }

    fn uses_grad(&self) -> bool {
        matches!(self, Self::NtkGrad | Self::NtkFull)
    }

    /// `(c, e)` of the linearized kernel `c X^T X + e I`.
    fn linearization(&self, hd: &HermiteData) -> (f64, f64) {
        let b2 = hd.b_sigma * hd.b_sigma;
        match self {
            Self::Ck => (b2, 1.0 - b2),
            Self::NtkGrad => (b2, hd.a_sigma - b2),
            Self::NtkFull => (2.0 * b2, 1.0 - 2.0 * b2 + hd.a_sigma),
        }
    }
}

impl std::fmt::Display for KernelMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for KernelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Parse(format!("unknown kernel mode `{s}` (expected ck, ntk-grad or ntk-full)")))
    }
}

/// Training data, a linear target `y = X^T beta* + eps` and a test set.
#[derive(Debug, Clone)]
pub struct SyntheticTask {
    pub train: DataMatrix,
    pub test: DataMatrix,
    pub beta_star: Vec<f64>,
    pub eps: Vec<f64>,
    pub y: Vec<f64>,
    pub sigma_beta: f64,
    pub sigma_eps: f64,
    pub seed: u64,
}

impl SyntheticTask {
    /// Fresh train and test columns from `generator`, all streams keyed by `seed`.
    pub fn generate(
        generator: Generator,
        d0: usize,
        n: usize,
        n_test: usize,
        sigma_beta: f64,
        sigma_eps: f64,
        seed: u64,
    ) -> Result<Self> {
        let train = generate_stream(generator, d0, n, seed, Stream::Data)?;
        let test = generate_stream(generator, d0, n_test, seed, Stream::TestData)?;
        Self::from_data(train, test, sigma_beta, sigma_eps, seed)
    }

    /// Draws `beta*` and `eps` for given train and test matrices.
    pub fn from_data(train: DataMatrix, test: DataMatrix, sigma_beta: f64, sigma_eps: f64, seed: u64) -> Result<Self> {
        if train.d0() != test.d0() {
            return Err(Error::DimensionMismatch(format!(
                "train d0={} but test d0={}",
                train.d0(),
                test.d0()
            )));
        }
        if !(sigma_beta >= 0.0 && sigma_eps >= 0.0) {
            return Err(Error::invalid("noise levels must be non-negative"));
        }
        let normals = |stream, len: usize, scale: f64| -> Vec<f64> {
            let mut rng = stream_rng(seed, stream, 0);
            (0..len)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    scale * z
                })
                .collect()
        };
        let beta_star = normals(Stream::Target, train.d0(), sigma_beta);
        let eps = normals(Stream::Noise, train.n(), sigma_eps);
        let signal = targets(&train, &beta_star);
        let y = signal.iter().zip(&eps).map(|(s, e)| s + e).collect();
        Ok(Self {
            train,
            test,
            beta_star,
            eps,
            y,
            sigma_beta,
            sigma_eps,
            seed,
        })
    }

    pub fn n(&self) -> usize {
        self.train.n()
    }

    pub fn d0(&self) -> usize {
        self.train.d0()
    }

    /// `n / d0`.
    pub fn gamma(&self) -> f64 {
        self.n() as f64 / self.d0() as f64
    }

    /// Noise-free targets `X_test^T beta*`.
    pub fn test_targets(&self) -> Vec<f64> {
        targets(&self.test, &self.beta_star)
    }
}

fn targets(data: &DataMatrix, beta: &[f64]) -> Vec<f64> {
    let x = data.x();
    (0..data.n())
        .map(|j| (0..data.d0()).map(|i| x[(i, j)] * beta[i]).sum())
        .collect()
}

/// Finite-sample errors of one fit, plus the asymptotic predictions when `b_sigma > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub n: usize,
    pub d0: usize,
    pub d1: usize,
    pub lambda: f64,
    pub kernel_mode: KernelMode,
    pub seed: u64,
    pub train_rf: f64,
    pub train_k: f64,
    pub test_rf: f64,
    pub test_k: f64,
    pub train_asym: Option<f64>,
    pub test_asym: Option<f64>,
    pub lambda_eff: Option<f64>,
    /// Largest disagreement between the closed-form and residual training
    /// errors, relative to `1 + ||y||^2/n`.
    pub train_identity_gap: f64,
}

impl RegressionReport {
    pub const CSV_HEADER: &'static str =
        "n,d0,d1,lambda,kernel_mode,seed,train_rf,train_k,test_rf,test_k,train_asym,test_asym,lambda_eff";
}

/// `lambda_eff` for the linearized kernel of `mode`.
pub fn lambda_eff(lambda: f64, hd: &HermiteData, mode: KernelMode) -> Result<f64> {
    if !(lambda >= 0.0) {
        return Err(Error::invalid(format!("ridge must be non-negative, got {lambda}")));
    }
    if hd.b_sigma == 0.0 {
        return Err(Error::ZeroBSigma("the effective ridge divides by b_sigma^2"));
    }
    let (c, e) = mode.linearization(hd);
    Ok((e + lambda) / c)
}

/// `B_K(nu) = (1 - gamma) + gamma nu^2 ∫ (x + nu)^-2 dmu0`.
pub fn bias_functional(mu0: &SpectralMeasure, gamma: f64, nu: f64) -> f64 {
    (1.0 - gamma) + gamma * nu * nu * mu0.integrate(|x| (x + nu).powi(-2))
}

/// `V_K(nu) = gamma ∫ x (x + nu)^-2 dmu0`.
pub fn variance_functional(mu0: &SpectralMeasure, gamma: f64, nu: f64) -> f64 {
    gamma * mu0.integrate(|x| x / (x + nu).powi(2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AsymptoticErrors {
    pub lambda_eff: f64,
    pub bias: f64,
    pub variance: f64,
    pub train: f64,
    pub test: f64,
}

/// Limits of the training and test errors for a data spectrum `mu0` and ratio `gamma = n/d0`.
///
/// With `K ~ c X^T X + e I` and `nu = (e + lambda)/c`, the training error is
/// `lambda^2/(gamma c^2) [sigma_beta^2 V_K(nu) + sigma_eps^2 (B_K(nu) - 1 + gamma)/nu^2]`
/// and the test error `sigma_beta^2 B_K(nu) + sigma_eps^2 V_K(nu)`.
pub fn asymptotic_errors(
    mu0: &SpectralMeasure,
    gamma: f64,
    hd: &HermiteData,
    lambda: f64,
    sigma_beta: f64,
    sigma_eps: f64,
    mode: KernelMode,
) -> Result<AsymptoticErrors> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::invalid(format!("gamma must be positive, got {gamma}")));
    }
    mu0.validate()?;
    if mu0.support().0 < -1e-9 {
        return Err(Error::invalid("data spectrum must be supported on [0, inf)"));
    }
    let nu = lambda_eff(lambda, hd, mode)?;
    let (c, _) = mode.linearization(hd);
    let bias = bias_functional(mu0, gamma, nu);
    let variance = variance_functional(mu0, gamma, nu);
    let (sb2, se2) = (sigma_beta * sigma_beta, sigma_eps * sigma_eps);
    let train = if lambda == 0.0 {
        0.0
    } else {
        lambda * lambda / (gamma * c * c) * (sb2 * variance + se2 * (bias - 1.0 + gamma) / (nu * nu))
    };
    Ok(AsymptoticErrors {
        lambda_eff: nu,
        bias,
        variance,
        train,
        test: sb2 * bias + se2 * variance,
    })
}

/// Empirical random-feature kernel `K_n(X, X)` of `mode` for one weight draw.
pub fn rf_kernel(data: &DataMatrix, act: &Activation, weights: &WeightDraw, mode: KernelMode) -> Result<Mat<f64>> {
    let opts = BuildOptions {
        ntk: mode.uses_grad(),
        work_budget: f64::INFINITY,
    };
    let k = build_empirical(data, act, weights, &opts)?;
    Ok(match mode {
        KernelMode::Ck => k.ck,
        KernelMode::NtkGrad => k.grad.expect("built with ntk"),
        KernelMode::NtkFull => k.ntk.expect("built with ntk"),
    })
}

/// Empirical cross kernel `K_n(x, X)` for every column `x` of `test` (rows) against `train` (columns).
pub fn rf_cross_kernel(
    test: &DataMatrix,
    train: &DataMatrix,
    act: &Activation,
    weights: &WeightDraw,
    mode: KernelMode,
) -> Result<Mat<f64>> {
    let (m, n) = (test.n(), train.n());
    let (mut ck, sts) = reduce_groups(
        weights,
        |group| {
            let mut ck = mode.uses_ck().then(|| Mat::<f64>::zeros(m, n));
            let mut sts = mode.uses_grad().then(|| Mat::<f64>::zeros(m, n));
            for rows in group {
                let (mut zt, a) = preactivations(weights, test.x(), rows.clone());
                let (mut z, _) = preactivations(weights, train.x(), rows.clone());
                if let Some(sts) = sts.as_mut() {
                    let (mut st, mut s) = (zt.clone(), z.clone());
                    s_block(act, &mut st, &a);
                    s_block(act, &mut s, &a);
                    *sts += linalg::at_b(st.as_ref(), s.as_ref());
                }
                if let Some(ck) = ck.as_mut() {
                    map_mat(&mut zt, |c| act.apply_inplace(c));
                    map_mat(&mut z, |c| act.apply_inplace(c));
                    *ck += linalg::at_b(zt.as_ref(), z.as_ref());
                }
            }
            Ok((ck, sts))
        },
        |acc, part| {
            if let (Some(a), Some(b)) = (acc.0.as_mut(), part.0) {
                *a += &b;
            }
            if let (Some(a), Some(b)) = (acc.1.as_mut(), part.1) {
                *a += &b;
            }
        },
    )?;
    let inv = 1.0 / weights.d1 as f64;
    let mut out = Mat::<f64>::zeros(m, n);
    if let Some(ck) = ck.take() {
        out += &ck;
    }
    if let Some(sts) = sts {
        let inner = linalg::at_b(test.x().as_ref(), train.x().as_ref());
        out += Mat::from_fn(m, n, |i, j| sts[(i, j)] * inner[(i, j)]);
    }
    out *= faer::Scale(inv);
    Ok(out)
}

/// CK predictions `sigma(W x)^T theta / sqrt(d1)` with
/// `theta = Y coef / sqrt(d1)`, never forming the test kernel.
pub fn rf_predict_ck(
    test: &DataMatrix,
    train: &DataMatrix,
    act: &Activation,
    weights: &WeightDraw,
    coef: &[f64],
) -> Result<Vec<f64>> {
    if coef.len() != train.n() {
        return Err(Error::DimensionMismatch(format!(
            "{} coefficients for {} training points",
            coef.len(),
            train.n()
        )));
    }
    let c = Mat::from_fn(train.n(), 1, |i, _| coef[i]);
    let m = test.n();
    let f = reduce_groups(
        weights,
        |group| {
            let mut f = Mat::<f64>::zeros(m, 1);
            for rows in group {
                let (mut z, _) = preactivations(weights, train.x(), rows.clone());
                map_mat(&mut z, |col| act.apply_inplace(col));
                let u = linalg::a_b(z.as_ref(), c.as_ref());
                drop(z);
                let (mut zt, _) = preactivations(weights, test.x(), rows.clone());
                map_mat(&mut zt, |col| act.apply_inplace(col));
                f += linalg::at_b(zt.as_ref(), u.as_ref());
            }
            Ok(f)
        },
        |acc, part| *acc += &part,
    )?;
    let inv = 1.0 / weights.d1 as f64;
    Ok((0..m).map(|i| f[(i, 0)] * inv).collect())
}

/// Expected kernel of `mode` on the training set.
pub fn expected_kernel(data: &DataMatrix, act: &Activation, mode: KernelMode, order: usize) -> Result<Mat<f64>> {
    let method = PhiMethod::HermiteSeries { order };
    Ok(match mode {
        KernelMode::Ck => expected_phi(data, act, method)?,
        KernelMode::NtkGrad => expected_psi(data, act, method)?,
        KernelMode::NtkFull => &expected_phi(data, act, method)? + &expected_psi(data, act, method)?,
    })
}

/// Expected cross kernel of `mode`, test columns as rows.
pub fn expected_cross_kernel(
    test: &DataMatrix,
    train: &DataMatrix,
    act: &Activation,
    mode: KernelMode,
    order: usize,
) -> Result<Mat<f64>> {
    Ok(match mode {
        KernelMode::Ck => expected_cross(test, train, act, order, false)?,
        KernelMode::NtkGrad => expected_cross(test, train, act, order, true)?,
        KernelMode::NtkFull => {
            &expected_cross(test, train, act, order, false)? + &expected_cross(test, train, act, order, true)?
        }
    })
}

/// Ridge fit on a kernel matrix.
#[derive(Debug, Clone)]
pub struct RidgeFit {
    pub coef: Vec<f64>,
    /// `lambda^2/n ||(K + lambda)^-1 y||^2`.
    pub train_closed: f64,
    /// `(1/n) ||K coef - y||^2`.
    pub train_residual: f64,
}

pub fn ridge_fit(k: &Mat<f64>, y: &[f64], lambda: f64) -> Result<RidgeFit> {
    let n = y.len();
    if k.nrows() != n || k.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} kernel for {n} labels",
            k.nrows(),
            k.ncols()
        )));
    }
    let coef = SpdSolver::new(k.as_ref(), lambda)?.solve_vec(y);
    let nf = n as f64;
    let train_closed = lambda * lambda / nf * coef.iter().map(|c| c * c).sum::<f64>();
    let train_residual = (0..n)
        .map(|i| {
            let fi: f64 = (0..n).map(|j| k[(i, j)] * coef[j]).sum();
            (fi - y[i]).powi(2)
        })
        .sum::<f64>()
        / nf;
    Ok(RidgeFit {
        coef,
        train_closed,
        train_residual,
    })
}

fn mse(pred: &[f64], target: &[f64]) -> f64 {
    pred.iter().zip(target).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / pred.len().max(1) as f64
}

fn kernel_predict(cross: &Mat<f64>, coef: &[f64]) -> Vec<f64> {
    (0..cross.nrows())
        .map(|i| (0..cross.ncols()).map(|j| cross[(i, j)] * coef[j]).sum())
        .collect()
}

/// Fits both predictors on `task` and scores them. The asymptotic columns use
/// the empirical spectrum of `X^T X`.
pub fn fit_and_score(
    task: &SyntheticTask,
    act: &Activation,
    d1: usize,
    lambda: f64,
    mode: KernelMode,
    seed: u64,
) -> Result<RegressionReport> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("ridge must be non-negative, got {lambda}")));
    }
    if lambda == 0.0 && act.is_linear() {
        return Err(Error::LinearActivation("ridgeless regression needs a nonlinear activation"));
    }
    let hd = hermite_data(act, DEFAULT_ORDER)?;
    let weights = WeightDraw::new(seed, task.d0(), d1)?;
    let targets = task.test_targets();
    let y = &task.y;
    let y_scale = 1.0 + y.iter().map(|v| v * v).sum::<f64>() / y.len() as f64;

    let kn = rf_kernel(&task.train, act, &weights, mode)?;
    let rf = ridge_fit(&kn, y, lambda)?;
    drop(kn);
    let pred_rf = match mode {
        KernelMode::Ck => rf_predict_ck(&task.test, &task.train, act, &weights, &rf.coef)?,
        _ => kernel_predict(&rf_cross_kernel(&task.test, &task.train, act, &weights, mode)?, &rf.coef),
    };

    let k = expected_kernel(&task.train, act, mode, DEFAULT_ORDER)?;
    let kr = ridge_fit(&k, y, lambda)?;
    let cross = expected_cross_kernel(&task.test, &task.train, act, mode, DEFAULT_ORDER)?;
    let pred_k = kernel_predict(&cross, &kr.coef);

    let gap = (rf.train_closed - rf.train_residual)
        .abs()
        .max((kr.train_closed - kr.train_residual).abs())
        / y_scale;
    let asym = if hd.b_sigma.abs() > 0.0 {
        let mu0 = empirical_measure(&task.train)?;
        Some(asymptotic_errors(
            &mu0,
            task.gamma(),
            &hd,
            lambda,
            task.sigma_beta,
            task.sigma_eps,
            mode,
        )?)
    } else {
        None
    };
    Ok(RegressionReport {
        n: task.n(),
        d0: task.d0(),
        d1,
        lambda,
        kernel_mode: mode,
        seed,
        train_rf: rf.train_closed,
        train_k: kr.train_closed,
        test_rf: mse(&pred_rf, &targets),
        test_k: mse(&pred_k, &targets),
        train_asym: asym.map(|a| a.train),
        test_asym: asym.map(|a| a.test),
        lambda_eff: asym.map(|a| a.lambda_eff),
        train_identity_gap: gap,
    })
}

/// One cell of a regression sweep, repeated over independent tasks and weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionCell {
    pub generator: Generator,
    pub n: usize,
    pub d0: usize,
    pub d1: usize,
    pub n_test: usize,
    pub lambda: f64,
    pub kernel_mode: KernelMode,
    pub sigma_beta: f64,
    pub sigma_eps: f64,
}

/// Repetition `r` draws its task from `derive_seed(seed, r)`; the same task
/// and weight stream are reused across widths, so widths are nested.
pub fn run_repetitions(cell: &RegressionCell, act: &Activation, reps: usize, seed: u64) -> Result<Vec<RegressionReport>> {
    (0..reps as u64)
        .map(|r| {
            let s = derive_seed(seed, r);
            let task = SyntheticTask::generate(
                cell.generator,
                cell.d0,
                cell.n,
                cell.n_test,
                cell.sigma_beta,
                cell.sigma_eps,
                s,
            )?;
            fit_and_score(&task, act, cell.d1, cell.lambda, cell.kernel_mode, s)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::BaseActivation;
    use approx::assert_abs_diff_eq;

    fn relu_hd() -> HermiteData {
        hermite_data(&Activation::relu(), DEFAULT_ORDER).unwrap()
    }

    #[test]
    fn lambda_eff_examples() {
        let mut hd = relu_hd();
        assert_abs_diff_eq!(lambda_eff(1e-3, &hd, KernelMode::Ck).unwrap(), 0.3647436079, epsilon = 1e-9);
        hd.b_sigma = 0.5_f64.sqrt();
        assert_abs_diff_eq!(lambda_eff(0.0, &hd, KernelMode::Ck).unwrap(), 1.0, epsilon = 1e-14);
        let id = hermite_data(&Activation::identity(), DEFAULT_ORDER).unwrap();
        assert_abs_diff_eq!(lambda_eff(0.3, &id, KernelMode::Ck).unwrap(), 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(lambda_eff(0.3, &id, KernelMode::NtkFull).unwrap(), 0.15, epsilon = 1e-12);
        hd.b_sigma = 0.0;
        assert!(matches!(lambda_eff(0.1, &hd, KernelMode::Ck), Err(Error::ZeroBSigma(_))));
        assert!(lambda_eff(-1.0, &relu_hd(), KernelMode::Ck).is_err());
    }

    #[test]
    fn bias_variance_point_mass() {
        let mu = SpectralMeasure::point_mass(1.0).unwrap();
        for nu in [0.0, 0.1, 1.0, 7.0] {
            assert_abs_diff_eq!(bias_functional(&mu, 1.0, nu), nu * nu / (1.0 + nu).powi(2), epsilon = 1e-14);
            assert_abs_diff_eq!(variance_functional(&mu, 1.0, nu), 1.0 / (1.0 + nu).powi(2), epsilon = 1e-14);
        }
        let big = 1e9;
        assert_abs_diff_eq!(bias_functional(&mu, 0.5, big), 1.0, epsilon = 1e-8);
        assert!(variance_functional(&mu, 0.5, big) < 1e-8);
    }

    #[test]
    fn mp_quadrature_matches_empirical_atoms() {
        let hd = relu_hd();
        let gamma = 0.5;
        let mp = crate::datagen::mp_measure(gamma).unwrap();
        let data = crate::datagen::generate(Generator::GaussianIidScaled, 8000, 4000, 3).unwrap();
        let emp = empirical_measure(&data).unwrap();
        let a = asymptotic_errors(&mp, gamma, &hd, 1e-2, 2.0, 1.0, KernelMode::Ck).unwrap();
        let b = asymptotic_errors(&emp, gamma, &hd, 1e-2, 2.0, 1.0, KernelMode::Ck).unwrap();
        assert!((a.test - b.test).abs() / a.test <= 1e-2, "{} vs {}", a.test, b.test);
        assert!((a.train - b.train).abs() / a.train <= 1e-2, "{} vs {}", a.train, b.train);
    }

    #[test]
    fn zero_signal_gives_zero_errors() {
        let task = SyntheticTask::generate(Generator::GaussianIidScaled, 20, 15, 30, 0.0, 0.0, 4).unwrap();
        let act = Activation::new(BaseActivation::Tanh).unwrap();
        let r = fit_and_score(&task, &act, 300, 0.1, KernelMode::NtkFull, 1).unwrap();
        for v in [r.train_rf, r.train_k, r.test_rf, r.test_k] {
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn ridgeless_interpolates() {
        let task = SyntheticTask::generate(Generator::GaussianIidScaled, 30, 20, 10, 1.0, 0.5, 5).unwrap();
        let r = fit_and_score(&task, &Activation::relu(), 2000, 0.0, KernelMode::Ck, 2).unwrap();
        assert!(r.train_rf.abs() <= 1e-8 && r.train_k.abs() <= 1e-8);
        assert!(matches!(
            fit_and_score(&task, &Activation::identity(), 100, 0.0, KernelMode::Ck, 2),
            Err(Error::LinearActivation(_))
        ));
    }

    #[test]
    fn training_identity_holds_for_every_mode() {
        let task = SyntheticTask::generate(Generator::SphereUniform, 25, 18, 12, 2.0, 1.0, 6).unwrap();
        let act = Activation::new(BaseActivation::Arctan).unwrap();
        for mode in KernelMode::ALL {
            let r = fit_and_score(&task, &act, 500, 0.05, mode, 3).unwrap();
            assert!(r.train_identity_gap <= 1e-8, "{mode}: {}", r.train_identity_gap);
            assert!(r.lambda_eff.unwrap() >= r.lambda);
            assert!(r.test_rf >= 0.0 && r.test_k >= 0.0 && r.test_asym.unwrap() >= 0.0);
        }
    }

    #[test]
    fn theta_form_matches_kernel_form() {
        let task = SyntheticTask::generate(Generator::GaussianIidScaled, 16, 10, 7, 1.0, 1.0, 7).unwrap();
        let act = Activation::new(BaseActivation::Sigmoid).unwrap();
        let w = WeightDraw::new(9, 16, 1500).unwrap();
        let kn = rf_kernel(&task.train, &act, &w, KernelMode::Ck).unwrap();
        let fit = ridge_fit(&kn, &task.y, 0.01).unwrap();
        let a = rf_predict_ck(&task.test, &task.train, &act, &w, &fit.coef).unwrap();
        let cross = rf_cross_kernel(&task.test, &task.train, &act, &w, KernelMode::Ck).unwrap();
        let b = kernel_predict(&cross, &fit.coef);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-8 * y.abs().max(1.0), "{x} vs {y}");
        }
        // the cross kernel against the training set itself is K_n(X, X)
        for mode in KernelMode::ALL {
            let kn = rf_kernel(&task.train, &act, &w, mode).unwrap();
            let kx = rf_cross_kernel(&task.train, &task.train, &act, &w, mode).unwrap();
            assert!(linalg::max_abs((&kn - &kx).as_ref()) <= 1e-12);
        }
    }

    #[test]
    fn mode_parsing() {
        for m in KernelMode::ALL {
            assert_eq!(m.as_str().parse::<KernelMode>().unwrap(), m);
        }
        assert!("ntk".parse::<KernelMode>().is_err());
    }
}
