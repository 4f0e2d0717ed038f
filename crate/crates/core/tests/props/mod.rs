//! Property families shared by the `properties` test target and the
//! acceptance harness. Each family drives a deterministic proptest runner.

use faer::Mat;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use ultrawide_core::concentration::{hanson_wright_probe, HwMatrix};
use ultrawide_core::datagen::semicircle_cdf;
use ultrawide_core::kernels::{build_empirical, BuildOptions, PhiMethod, WeightDraw};
use ultrawide_core::law::{solve_density, solve_point, DeformedInput, DensityOptions, SolverOptions};
use ultrawide_core::linalg::{sym_eigenvalues, trace};
use ultrawide_core::quadrature::GaussianRule;
use ultrawide_core::regression::{
    asymptotic_errors, bias_functional, expected_kernel, rf_cross_kernel, rf_kernel, rf_predict_ck, ridge_fit,
    variance_functional, KernelMode, SyntheticTask,
};
use ultrawide_core::spectral::{esd, ks_distance, ks_distance_measure, w1_distance, Esd};
use ultrawide_core::{
    empirical_measure, expected_phi, generate, hermite_data, hermite_poly, orthonormality, Activation,
    BaseActivation, Complex64, Generator, SpectralMeasure,
};

pub type Family = (&'static str, fn() -> Result<(), String>);

pub const FAMILIES: [Family; 14] = [
    ("activation normalization", activation_normalization),
    ("hermite parseval and stein", hermite_parseval_stein),
    ("quadrature orthonormality", quadrature_orthonormality),
    ("measure normalization", measure_normalization),
    ("data measure identities", data_measure_identities),
    ("kernel psd", kernel_psd),
    ("phi permutation equivariance", phi_permutation),
    ("esd identities", esd_identities),
    ("law solver contract", law_solver_contract),
    ("lambda_min shift", lambda_min_shift),
    ("ridge train identity and predictor equivalence", ridge_identities),
    ("bias and variance functionals", bias_variance_bounds),
    ("hanson-wright unbiasedness", hanson_wright_unbiased),
    ("hanson-wright variance decay", hanson_wright_decay),
];

pub fn run_all() -> Vec<(&'static str, Result<(), String>)> {
    FAMILIES.iter().map(|(name, f)| (*name, f())).collect()
}

fn runner(cases: u32) -> TestRunner {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn run<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    runner(cases).run(&strategy, test).map_err(|e| e.to_string())
}

fn ok<T>(r: ultrawide_core::Result<T>) -> Result<T, TestCaseError> {
    r.map_err(|e| TestCaseError::fail(e.to_string()))
}

const SMOOTH: [BaseActivation; 5] = [
    BaseActivation::Arctan,
    BaseActivation::Cos,
    BaseActivation::Sigmoid,
    BaseActivation::Tanh,
    BaseActivation::Erf,
];

fn any_activation() -> impl Strategy<Value = BaseActivation> {
    prop_oneof![
        Just(BaseActivation::Relu),
        proptest::sample::select(SMOOTH.to_vec()),
        (0.2f64..3.0, -1.0f64..1.0, -2.0f64..2.0)
            .prop_filter("kinked", |(a, _, c)| (a - c).abs() > 0.1)
            .prop_map(|(a, b, c)| BaseActivation::Piecewise { a, b, c }),
    ]
}

pub fn activation_normalization() -> Result<(), String> {
    run(24, any_activation(), |base| {
        let act = ok(Activation::new(base))?;
        let mean = act.expect(|x| act.eval(x));
        let second = act.expect(|x| act.eval(x).powi(2));
        prop_assert!(mean.abs() <= 1e-8, "{base:?}: mean {mean}");
        prop_assert!((second - 1.0).abs() <= 1e-8, "{base:?}: second moment {second}");
        prop_assert!(act.scale() > 0.0);
        let lip = act.lipschitz();
        for k in 0..2000 {
            let x = -8.0 + 16.0 * k as f64 / 2000.0;
            let h = 1e-3;
            let slope = (act.eval(x + h) - act.eval(x)).abs() / h;
            prop_assert!(slope <= lip * (1.0 + 1e-9), "{base:?}: slope {slope} > {lip} at {x}");
        }
        Ok(())
    })
}

pub fn hermite_parseval_stein() -> Result<(), String> {
    run(24, (any_activation(), 4usize..40), |(base, order)| {
        let act = ok(Activation::new(base))?;
        let hd = ok(hermite_data(&act, order))?;
        let zeta2: f64 = hd.zeta.iter().map(|z| z * z).sum();
        let eta2: f64 = hd.eta.iter().map(|z| z * z).sum();
        prop_assert!(zeta2 <= 1.0 + 1e-8 && hd.tail_mass >= -1e-8);
        prop_assert!(eta2 <= hd.a_sigma + 1e-8, "{base:?}: sum eta^2 {eta2} > a_sigma {}", hd.a_sigma);
        prop_assert!((hd.b_sigma - hd.eta[0]).abs() <= 1e-8);
        let stein = act.expect(|x| act.deriv(x));
        prop_assert!((hd.zeta[1] - stein).abs() <= 1e-8, "{base:?}: zeta_1 {} vs E sigma' {stein}", hd.zeta[1]);
        let longer = ok(hermite_data(&act, order + 1))?;
        let longer2: f64 = longer.zeta.iter().map(|z| z * z).sum();
        prop_assert!(longer2 >= zeta2 - 1e-12);
        prop_assert_eq!(hd.floor_ck(), ok(hermite_data(&act, order))?.floor_ck());
        if act.is_odd() {
            for k in (0..=order).step_by(2) {
                prop_assert!(hd.zeta[k].abs() <= 1e-10, "{base:?}: zeta_{k} = {}", hd.zeta[k]);
            }
        }
        Ok(())
    })
}

pub fn quadrature_orthonormality() -> Result<(), String> {
    let rule = GaussianRule::smooth();
    for j in 0..=20 {
        for k in 0..=20 {
            let v = rule.expect(|x| hermite_poly(j, x).unwrap() * hermite_poly(k, x).unwrap());
            let target = if j == k { 1.0 } else { 0.0 };
            if (v - target).abs() > 1e-10 {
                return Err(format!("E[h_{j} h_{k}] = {v}"));
            }
        }
    }
    Ok(())
}

pub fn measure_normalization() -> Result<(), String> {
    let measures = prop_oneof![
        (0.1f64..4.0).prop_map(|v| SpectralMeasure::semicircle(v).unwrap()),
        (0.05f64..3.0).prop_map(|g| SpectralMeasure::MarchenkoPastur { gamma: g }),
        (-2.0f64..2.0).prop_map(|c| SpectralMeasure::point_mass(c).unwrap()),
        proptest::collection::vec(-3.0f64..3.0, 1..40).prop_map(|l| SpectralMeasure::uniform_atoms(l).unwrap()),
        (-1.0f64..1.0, 0.1f64..2.0, 0.2f64..2.0)
            .prop_map(|(s, a, g)| SpectralMeasure::affine(s, a, SpectralMeasure::MarchenkoPastur { gamma: g }).unwrap()),
    ];
    run(40, measures, |m| {
        ok(m.validate())?;
        let d = m.discretize();
        let total: f64 = d.weights.iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-12, "{m:?}: weights sum to {total}");
        prop_assert!(d.weights.iter().all(|&w| w >= 0.0) && d.nodes.iter().all(|x| x.is_finite()));
        prop_assert!((m.integrate(|_| 1.0) - 1.0).abs() <= 1e-12);
        Ok(())
    })
}

fn atoms(m: &SpectralMeasure) -> Vec<f64> {
    match m {
        SpectralMeasure::Atoms { locations, .. } => locations.clone(),
        other => panic!("expected atoms, got {other:?}"),
    }
}

fn data_strategy() -> impl Strategy<Value = (Generator, usize, usize, u64)> {
    (
        prop_oneof![Just(Generator::GaussianIidScaled), Just(Generator::SphereUniform)],
        4usize..40,
        2usize..30,
        any::<u64>(),
    )
}

pub fn data_measure_identities() -> Result<(), String> {
    run(24, (data_strategy(), 0.2f64..3.0), |((gen, d0, n, seed), c)| {
        let data = ok(generate(gen, d0, n, seed))?;
        let mu = ok(empirical_measure(&data))?;
        let tr = trace(data.gram().as_ref()) / n as f64;
        prop_assert!((mu.mean() - tr).abs() <= 1e-9 * tr.abs().max(1.0));
        let scaled = atoms(&ok(empirical_measure(&data.scaled(c)))?);
        for (a, b) in atoms(&mu).iter().zip(&scaled) {
            prop_assert!((c * c * a - b).abs() <= 1e-9 * (1.0 + b.abs()));
        }
        let perm: Vec<usize> = (0..n).rev().collect();
        let r1 = ok(orthonormality(&data))?;
        let r2 = ok(orthonormality(&ok(data.permute_columns(&perm))?))?;
        prop_assert!((r1.eps - r2.eps).abs() <= 1e-12 && (r1.b_norm - r2.b_norm).abs() <= 1e-9);
        Ok(())
    })
}

fn lambda_min(m: &Mat<f64>) -> Result<f64, TestCaseError> {
    Ok(ok(sym_eigenvalues(m.as_ref()))?[0])
}

pub fn kernel_psd() -> Result<(), String> {
    run(16, (data_strategy(), any_activation(), 1usize..400), |((gen, d0, n, seed), base, d1)| {
        let act = ok(Activation::new(base))?;
        let data = ok(generate(gen, d0, n, seed))?;
        let k = ok(build_empirical(&data, &act, &ok(WeightDraw::new(seed, d0, d1))?, &BuildOptions::default()))?;
        let grad = k.grad.as_ref().unwrap();
        let ntk = k.ntk.as_ref().unwrap();
        for m in [&k.ck, grad] {
            let ev = ok(sym_eigenvalues(m.as_ref()))?;
            let top = ev.last().unwrap().abs();
            prop_assert!(ev[0] >= -1e-9 * top.max(1e-300), "lambda_min {} vs lambda_max {top}", ev[0]);
            for i in 0..n {
                for j in 0..n {
                    prop_assert!((m[(i, j)] - m[(j, i)]).abs() <= 1e-12);
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(ntk[(i, j)], k.ck[(i, j)] + grad[(i, j)]);
            }
        }
        Ok(())
    })
}

pub fn phi_permutation() -> Result<(), String> {
    run(12, (data_strategy(), any_activation()), |((gen, d0, n, seed), base)| {
        let act = ok(Activation::new(base))?;
        let data = ok(generate(gen, d0, n, seed))?;
        let perm: Vec<usize> = (0..n).map(|i| (i * 7 + 3) % n).collect();
        if {
            let mut p = perm.clone();
            p.sort_unstable();
            p != (0..n).collect::<Vec<_>>()
        } {
            return Ok(());
        }
        let phi = ok(expected_phi(&data, &act, PhiMethod::default()))?;
        let phi_p = ok(expected_phi(&ok(data.permute_columns(&perm))?, &act, PhiMethod::default()))?;
        for i in 0..n {
            for j in 0..n {
                prop_assert!((phi_p[(i, j)] - phi[(perm[i], perm[j])]).abs() <= 1e-12);
            }
        }
        Ok(())
    })
}

fn random_symmetric(n: usize, seed: u64) -> Mat<f64> {
    let data = generate(Generator::GaussianIidScaled, n, n, seed).unwrap();
    let x = data.x();
    Mat::from_fn(n, n, |i, j| x[(i, j)] + x[(j, i)])
}

pub fn esd_identities() -> Result<(), String> {
    run(24, (2usize..60, any::<u64>(), -3.0f64..3.0), |(n, seed, c)| {
        let a = random_symmetric(n, seed);
        let e = ok(esd(&a))?;
        let sum: f64 = e.eigenvalues.iter().sum();
        let tr = trace(a.as_ref());
        let scale = e.eigenvalues.iter().map(|v| v.abs()).fold(0.0, f64::max);
        prop_assert!((sum - tr).abs() <= 1e-8 * scale.max(1.0) * n as f64);
        prop_assert!(e.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        let ca = Mat::from_fn(n, n, |i, j| c * a[(i, j)]);
        let mut scaled: Vec<f64> = e.eigenvalues.iter().map(|v| c * v).collect();
        scaled.sort_by(f64::total_cmp);
        for (x, y) in ok(esd(&ca))?.eigenvalues.iter().zip(&scaled) {
            prop_assert!((x - y).abs() <= 1e-9 * scale.max(1.0) * c.abs().max(1.0));
        }
        let semi = SpectralMeasure::semicircle(1.0).unwrap();
        let ks = ok(ks_distance(&e, |x| semicircle_cdf(1.0, x)))?;
        prop_assert!((0.0..=1.0).contains(&ks));
        prop_assert!(ok(w1_distance(&e, &semi))? >= 0.0);
        let own = ok(e.measure())?;
        prop_assert!(ok(ks_distance_measure(&e, &own))? <= 1e-12);
        prop_assert!(ok(w1_distance(&e, &own))? <= 1e-12);
        let shifted = ok(Esd::from_values(e.eigenvalues.iter().map(|v| v + 1.0).collect()))?;
        prop_assert!(ok(ks_distance_measure(&shifted, &own))? > 0.0);
        Ok(())
    })
}

pub fn law_solver_contract() -> Result<(), String> {
    let inputs = prop_oneof![
        (0.1f64..3.0).prop_map(|c| DeformedInput::point(c).unwrap()),
        (0.1f64..2.0, 0.0f64..1.0)
            .prop_map(|(g, b)| DeformedInput::from_data(ultrawide_core::mp_measure(g).unwrap(), b).unwrap()),
        proptest::collection::vec(0.0f64..3.0, 1..30)
            .prop_map(|l| DeformedInput::new(SpectralMeasure::uniform_atoms(l).unwrap()).unwrap()),
    ];
    let opts = SolverOptions::default();
    run(40, (inputs, -4.0f64..4.0, 0.01f64..3.0), |(input, re, im)| {
        let p = ok(solve_point(&input, Complex64::new(re, im), &opts))?;
        prop_assert!(p.converged && p.beta.im > 0.0 && p.m.im > 0.0);
        prop_assert!(p.residual_beta <= opts.tol && p.residual_m <= opts.tol);
        prop_assert!(p.identity_residual() <= 10.0 * opts.tol.max(1e-12) * (1.0 + p.z.norm()));
        Ok(())
    })?;
    run(6, 0.2f64..3.0, |c| {
        let input = ok(DeformedInput::point(c))?;
        let r = 1.2 * input.support_radius();
        let grid: Vec<f64> = (0..=200).map(|k| -r + 2.0 * r * k as f64 / 200.0).collect();
        let sol = ok(solve_density(&input, &grid, &DensityOptions::default()))?;
        let d = &sol.density;
        for k in 0..d.len() {
            prop_assert!(d[k].1 >= 0.0);
            prop_assert!((d[k].1 - d[d.len() - 1 - k].1).abs() <= 1e-8, "asymmetry at {}", d[k].0);
        }
        Ok(())
    })?;
    run(4, 0.2f64..2.0, |g| {
        let mp = SpectralMeasure::MarchenkoPastur { gamma: g };
        let exact = ok(DeformedInput::new(mp.clone()))?;
        let quantized = ok(DeformedInput::new(ok(mp.quantile_atoms(10_000))?))?;
        let z = Complex64::new(0.0, 1.0);
        let a = ok(solve_point(&exact, z, &opts))?.m;
        let b = ok(solve_point(&quantized, z, &opts))?.m;
        prop_assert!((a - b).norm() <= 1e-3, "m(i): {a} vs {b}");
        Ok(())
    })
}

pub fn lambda_min_shift() -> Result<(), String> {
    run(16, (data_strategy(), 1usize..200, 0.0f64..5.0), |((gen, d0, n, seed), d1, lambda)| {
        let data = ok(generate(gen, d0, n, seed))?;
        let k = ok(build_empirical(&data, &Activation::relu(), &ok(WeightDraw::new(seed, d0, d1))?, &BuildOptions::ck_only()))?;
        let shifted = Mat::from_fn(n, n, |i, j| k.ck[(i, j)] + if i == j { lambda } else { 0.0 });
        let (a, b) = (lambda_min(&k.ck)?, lambda_min(&shifted)?);
        prop_assert!((b - a - lambda).abs() <= 1e-10 * (1.0 + b.abs()));
        Ok(())
    })
}

pub fn ridge_identities() -> Result<(), String> {
    let strategy = (
        proptest::sample::select(SMOOTH.to_vec()),
        4usize..30,
        2usize..25,
        1usize..300,
        1e-4f64..1.0,
        any::<u64>(),
    );
    run(16, strategy, |(base, d0, n, d1, lambda, seed)| {
        let act = ok(Activation::new(base))?;
        let task = ok(SyntheticTask::generate(Generator::GaussianIidScaled, d0, n, 7, 1.5, 0.5, seed))?;
        let w = ok(WeightDraw::new(seed, d0, d1))?;
        let scale = 1.0 + task.y.iter().map(|v| v * v).sum::<f64>() / n as f64;
        for k in [ok(rf_kernel(&task.train, &act, &w, KernelMode::Ck))?, ok(expected_kernel(&task.train, &act, KernelMode::Ck, 40))?] {
            let fit = ok(ridge_fit(&k, &task.y, lambda))?;
            prop_assert!((fit.train_closed - fit.train_residual).abs() <= 1e-8 * scale);
        }
        let kn = ok(rf_kernel(&task.train, &act, &w, KernelMode::Ck))?;
        let fit = ok(ridge_fit(&kn, &task.y, lambda))?;
        let theta = ok(rf_predict_ck(&task.test, &task.train, &act, &w, &fit.coef))?;
        let cross = ok(rf_cross_kernel(&task.test, &task.train, &act, &w, KernelMode::Ck))?;
        for (i, t) in theta.iter().enumerate() {
            let kform: f64 = (0..n).map(|j| cross[(i, j)] * fit.coef[j]).sum();
            prop_assert!((t - kform).abs() <= 1e-8 * (1.0 + kform.abs()), "{t} vs {kform}");
        }
        Ok(())
    })
}

pub fn bias_variance_bounds() -> Result<(), String> {
    let strategy = (proptest::collection::vec(0.0f64..5.0, 1..30), 0.01f64..=1.0, 0.0f64..10.0, 0.0f64..10.0);
    run(64, strategy, |(locs, gamma, nu, dnu)| {
        let mu0 = ok(SpectralMeasure::uniform_atoms(locs.clone()))?;
        let (b, v) = (bias_functional(&mu0, gamma, nu), variance_functional(&mu0, gamma, nu));
        if nu > 0.0 {
            prop_assert!(b >= 1.0 - gamma - 1e-12 && b <= 1.0 + 1e-12, "B = {b}");
        }
        prop_assert!(v >= 0.0);
        prop_assert!(bias_functional(&mu0, gamma, nu + dnu) >= b - 1e-12);
        let hd = ok(hermite_data(&ok(Activation::new(BaseActivation::Sigmoid))?, 40))?;
        let mut rev = locs.clone();
        rev.reverse();
        let permuted = ok(SpectralMeasure::uniform_atoms(rev))?;
        let lambda = 1e-3 + nu;
        let a = ok(asymptotic_errors(&mu0, gamma, &hd, lambda, 2.0, 1.0, KernelMode::Ck))?;
        let p = ok(asymptotic_errors(&permuted, gamma, &hd, lambda, 2.0, 1.0, KernelMode::Ck))?;
        prop_assert!((a.test - p.test).abs() <= 1e-12 * (1.0 + a.test.abs()));
        Ok(())
    })
}

pub fn hanson_wright_unbiased() -> Result<(), String> {
    let matrices = prop_oneof![
        Just(HwMatrix::Identity),
        (0.1f64..0.9, any::<u64>()).prop_map(|(fraction, seed)| HwMatrix::Projector { fraction, seed }),
        any::<u64>().prop_map(|seed| HwMatrix::RandomOrthogonalDiag { seed }),
    ];
    run(8, (matrices, any::<u64>(), proptest::sample::select(SMOOTH.to_vec())), |(matrix, seed, base)| {
        let act = ok(Activation::new(base))?;
        let data = ok(generate(Generator::SphereUniform, 60, 40, seed))?;
        let phi = ok(expected_phi(&data, &act, PhiMethod::default()))?;
        let s = ok(hanson_wright_probe(&data, &act, matrix, &phi, 4000, seed))?;
        prop_assert!(s.statistic.iter().all(|v| v.is_finite()));
        prop_assert!(s.mean.abs() <= 4.5 * s.std_err, "mean {} with std err {}", s.mean, s.std_err);
        Ok(())
    })
}

pub fn hanson_wright_decay() -> Result<(), String> {
    let act = Activation::new(BaseActivation::Arctan).map_err(|e| e.to_string())?;
    let mut last = f64::INFINITY;
    for n in [200, 400, 800] {
        let data = generate(Generator::SphereUniform, n, n, 11).map_err(|e| e.to_string())?;
        let phi = expected_phi(&data, &act, PhiMethod::default()).map_err(|e| e.to_string())?;
        let s = hanson_wright_probe(&data, &act, HwMatrix::RandomOrthogonalDiag { seed: 3 }, &phi, 400, 5)
            .map_err(|e| e.to_string())?;
        if s.scaled_second_moment >= last {
            return Err(format!("scaled second moment {} at n = {n} after {last}", s.scaled_second_moment));
        }
        last = s.scaled_second_moment;
    }
    Ok(())
}
