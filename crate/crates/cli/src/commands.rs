//! The five commands. Each writes its artifacts into an [`OutputDir`] and
//! returns a short human-readable summary.

use rayon::prelude::*;
use serde::Serialize;
use ultrawide_core::concentration::{self, SweepOptions};
use ultrawide_core::kernels::BuildOptions;
use ultrawide_core::law::{DensityOptions, LawSolution, PointSolution, SolverOptions};
use ultrawide_core::regression::{fit_and_score, RegressionReport, SyntheticTask};
use ultrawide_core::rng::derive_seed;
use ultrawide_core::spectral::histogram;
use ultrawide_core::{
    build_empirical, center, default_grid, empirical_measure, esd, generate, hermite_data, io, ks_distance,
    orthonormality, solve_density, solve_point, Activation, BaseActivation, CenterMode, DataMatrix, DeformedInput,
    DeterministicEquivalents, HermiteData, SpectralMeasure, WeightDraw,
};

use crate::config::{
    ConcentrationParams, DataSpec, EsdParams, HermiteParams, LawParams, MeasureSpec, Params, RegressParams,
};
use crate::error::CliError;
use crate::output::{opt_real, real, OutputDir};

/// What a command reports back besides its files.
pub struct Outcome {
    pub summary: String,
    /// Set when some numerical routine did not converge; files are still written.
    pub non_convergence: Option<String>,
}

impl Outcome {
    fn ok(summary: String) -> Self {
        Self {
            summary,
            non_convergence: None,
        }
    }
}

pub fn run(params: &Params, out: &mut OutputDir) -> Result<Outcome, CliError> {
    match params {
        Params::Hermite(p) => hermite(p, out),
        Params::Esd(p) => esd_cmd(p, out),
        Params::Law(p) => law(p, out),
        Params::Concentration(p) => concentration_cmd(p, out),
        Params::Regress(p) => regress(p, out),
    }
}

fn activation(base: BaseActivation) -> Result<Activation, CliError> {
    Ok(Activation::new(base)?)
}

fn load_data(spec: &DataSpec) -> Result<DataMatrix, CliError> {
    match &spec.path {
        Some(path) => {
            let x = io::read_matrix(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            Ok(DataMatrix::from_matrix(x)?)
        }
        None => Ok(generate(spec.generator, spec.d0, spec.n, spec.seed)?),
    }
}

#[derive(Serialize)]
struct HermiteSummary {
    activation: String,
    order: usize,
    shift: f64,
    scale: f64,
    lipschitz: f64,
    b_sigma: f64,
    a_sigma: f64,
    floor_ck: f64,
    floor_ntk: f64,
    tail_mass: f64,
}

impl HermiteSummary {
    fn new(act: &Activation, hd: &HermiteData) -> Self {
        Self {
            activation: act.base().to_string(),
            order: hd.order,
            shift: act.shift(),
            scale: act.scale(),
            lipschitz: act.lipschitz(),
            b_sigma: hd.b_sigma,
            a_sigma: hd.a_sigma,
            floor_ck: hd.floor_ck(),
            floor_ntk: hd.floor_ntk(),
            tail_mass: hd.tail_mass,
        }
    }
}

fn hermite(p: &HermiteParams, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let act = activation(p.activation)?;
    let hd = hermite_data(&act, p.order)?;
    out.stage("hermite");
    out.csv(
        "hermite.csv",
        "k,zeta,eta",
        (0..=hd.order).map(|k| vec![k.to_string(), real(hd.zeta[k]), real(hd.eta[k])]),
    )?;
    let summary = HermiteSummary::new(&act, &hd);
    out.json("diagnostics.json", &summary)?;
    Ok(Outcome::ok(format!(
        "{}: b_sigma = {:.10}, a_sigma = {:.10}, floor_ck = {:.10}, floor_ntk = {:.10}, tail = {:.3e}",
        summary.activation, hd.b_sigma, hd.a_sigma, summary.floor_ck, summary.floor_ntk, hd.tail_mass
    )))
}

#[derive(Serialize)]
struct PointDiagnostic {
    point: [f64; 2],
    iterations: usize,
    residuals: [f64; 2],
    converged: bool,
}

impl From<&PointSolution> for PointDiagnostic {
    fn from(p: &PointSolution) -> Self {
        Self {
            point: [p.z.re, p.z.im],
            iterations: p.iterations,
            residuals: [p.residual_beta, p.residual_m],
            converged: p.converged,
        }
    }
}

#[derive(Serialize)]
struct SolverDiagnostics {
    mass: f64,
    v_used: f64,
    richardson: bool,
    max_residual: f64,
    all_converged: bool,
    warnings: Vec<String>,
    points: Vec<PointDiagnostic>,
}

impl From<&LawSolution> for SolverDiagnostics {
    fn from(s: &LawSolution) -> Self {
        Self {
            mass: s.mass(),
            v_used: s.v_used,
            richardson: s.richardson,
            max_residual: s.max_residual(),
            all_converged: s.all_converged(),
            warnings: s.warnings.clone(),
            points: s.points.iter().map(PointDiagnostic::from).collect(),
        }
    }
}

fn non_convergence(s: &LawSolution) -> Option<String> {
    (!s.all_converged()).then(|| {
        let bad = s.points.iter().filter(|p| !p.converged).count();
        format!("{bad} of {} grid points did not converge", s.points.len())
    })
}

fn write_theory(out: &mut OutputDir, s: &LawSolution) -> Result<(), CliError> {
    out.csv("theory.csv", "x,density", s.density.iter().map(|&(x, r)| vec![real(x), real(r)]))
}

#[derive(Serialize)]
struct EsdSummary {
    count: usize,
    mean: f64,
    second_moment: f64,
    min: f64,
    max: f64,
}

#[derive(Serialize)]
struct EsdDiagnostics {
    n: usize,
    d0: usize,
    d1: usize,
    mode: CenterMode,
    hermite: HermiteSummary,
    orthonormality: ultrawide_core::OrthonormalityReport,
    esd: EsdSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    ks_to_theory: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    solver: Option<SolverDiagnostics>,
}

fn esd_cmd(p: &EsdParams, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let data = load_data(&p.data)?;
    let act = activation(p.activation)?;
    let hd = hermite_data(&act, ultrawide_core::activation::DEFAULT_ORDER)?;
    out.seeds([p.data.seed, p.seed]);
    let weights = WeightDraw::new(p.seed, data.d0(), p.d1)?;
    let opts = BuildOptions {
        ntk: p.mode.needs_ntk(),
        work_budget: p.work_budget,
    };
    let kernels = build_empirical(&data, &act, &weights, &opts)?;
    out.stage("kernels");
    let method = p.mode.needs_expectation().then_some(p.phi_method);
    let eq = DeterministicEquivalents::compute(&data, &act, &hd, method, p.mode == CenterMode::NtkVsMean)?;
    let spectrum = esd(&center(p.mode, &kernels, &eq)?.matrix)?;
    out.stage("spectrum");

    out.csv("esd.csv", "eigenvalue", spectrum.eigenvalues.iter().map(|&v| vec![real(v)]))?;
    let bins = histogram(&spectrum.eigenvalues, p.bins)?;
    out.csv(
        "histogram.csv",
        "bin_left,bin_right,density",
        bins.iter().map(|b| vec![real(b.left), real(b.right), real(b.density)]),
    )?;

    let mut diag = EsdDiagnostics {
        n: data.n(),
        d0: data.d0(),
        d1: p.d1,
        mode: p.mode,
        hermite: HermiteSummary::new(&act, &hd),
        orthonormality: orthonormality(&data)?,
        esd: EsdSummary {
            count: spectrum.len(),
            mean: spectrum.mean(),
            second_moment: spectrum.second_moment(),
            min: spectrum.min(),
            max: spectrum.max(),
        },
        ks_to_theory: None,
        solver: None,
    };
    let mut outcome = Outcome::ok(format!(
        "{} eigenvalues of {} in [{:.4}, {:.4}]",
        spectrum.len(),
        p.mode.as_str(),
        spectrum.min(),
        spectrum.max()
    ));
    if p.theory {
        let input = DeformedInput::from_data(empirical_measure(&data)?, hd.b_sigma)?;
        let sol = solve_density(&input, &default_grid(&input, p.grid_points), &DensityOptions::figure())?;
        out.stage("theory");
        write_theory(out, &sol)?;
        let cdf = sol.cdf();
        let ks = ks_distance(&spectrum, |x| cdf.eval(x))?;
        outcome.summary.push_str(&format!(", KS to the limiting law {ks:.4}"));
        outcome.non_convergence = non_convergence(&sol);
        diag.ks_to_theory = Some(ks);
        diag.solver = Some(SolverDiagnostics::from(&sol));
    }
    out.json("diagnostics.json", &diag)?;
    Ok(outcome)
}

fn law_input(p: &LawParams) -> Result<DeformedInput, CliError> {
    let measure = match &p.measure {
        MeasureSpec::AtomsFile(path) => {
            let m = io::read_matrix(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            let locations: Vec<f64> = (0..m.nrows()).flat_map(|i| (0..m.ncols()).map(move |j| (i, j))).map(|(i, j)| m[(i, j)]).collect();
            SpectralMeasure::uniform_atoms(locations)?
        }
        MeasureSpec::Data => {
            let spec = p.data.as_ref().expect("validated: measure `data` has a data block");
            empirical_measure(&load_data(spec)?)?
        }
        closed => closed.closed_form().expect("closed-form measure")?,
    };
    Ok(match p.activation {
        Some(base) => {
            let hd = hermite_data(&activation(base)?, ultrawide_core::activation::DEFAULT_ORDER)?;
            DeformedInput::from_data(measure, hd.b_sigma)?
        }
        None => DeformedInput::new(measure)?,
    })
}

fn fmt_complex(z: ultrawide_core::Complex64) -> String {
    // `+ 0.0` turns a negative zero into a positive one.
    let sign = if z.im < 0.0 { '-' } else { '+' };
    format!("{:.15}{sign}{:.15}i", z.re + 0.0, z.im.abs())
}

#[derive(Serialize)]
struct LawPointReport {
    z: [f64; 2],
    m: [f64; 2],
    beta: [f64; 2],
    identity_residual: f64,
    diagnostics: PointDiagnostic,
}

#[derive(Serialize)]
struct LawDiagnostics {
    mean: f64,
    m2_free: f64,
    support_radius: f64,
    solver: SolverDiagnostics,
}

fn law(p: &LawParams, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let input = law_input(p)?;
    let solver = SolverOptions {
        tol: p.tol,
        max_iter: p.max_iter,
        ..SolverOptions::default()
    };
    if let Some(z) = p.z {
        let s = solve_point(&input, z.0, &solver)?;
        out.stage("solve");
        out.json(
            "diagnostics.json",
            &LawPointReport {
                z: [s.z.re, s.z.im],
                m: [s.m.re, s.m.im],
                beta: [s.beta.re, s.beta.im],
                identity_residual: s.identity_residual(),
                diagnostics: PointDiagnostic::from(&s),
            },
        )?;
        return Ok(Outcome {
            summary: format!(
                "m({z}) = {}\nbeta({z}) = {}\n|beta^2 + 1 + z m| = {:.3e}",
                fmt_complex(s.m),
                fmt_complex(s.beta),
                s.identity_residual()
            ),
            non_convergence: (!s.converged).then(|| format!("solver did not converge at z = {z}")),
        });
    }
    let opts = DensityOptions {
        v: p.v,
        richardson: p.richardson,
        solver,
        ..DensityOptions::default()
    };
    let sol = solve_density(&input, &default_grid(&input, p.grid_points), &opts)?;
    out.stage("solve");
    write_theory(out, &sol)?;
    out.json(
        "diagnostics.json",
        &LawDiagnostics {
            mean: input.mean(),
            m2_free: input.m2_free(),
            support_radius: input.support_radius(),
            solver: SolverDiagnostics::from(&sol),
        },
    )?;
    Ok(Outcome {
        summary: format!(
            "density on {} points, mass {:.6}, max residual {:.2e}",
            sol.density.len(),
            sol.mass(),
            sol.max_residual()
        ),
        non_convergence: non_convergence(&sol),
    })
}

#[derive(Serialize)]
struct WidthSummary {
    d1: usize,
    median_op_ck: f64,
    mean_frob: f64,
}

#[derive(Serialize)]
struct ConcentrationDiagnostics {
    slope: f64,
    envelope_constant: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    spot_check_z: Option<f64>,
    /// `sqrt(m2)` of the limiting law, the target of `frob`.
    frob_limit: f64,
    widths: Vec<WidthSummary>,
    hermite: HermiteSummary,
}

fn concentration_cmd(p: &ConcentrationParams, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let data = load_data(&p.data)?;
    let act = activation(p.activation)?;
    let seeds: Vec<u64> = (0..p.trials as u64).map(|t| derive_seed(p.seed, t)).collect();
    out.seeds(std::iter::once(p.data.seed).chain(seeds.iter().copied()));
    let opts = SweepOptions {
        ntk: p.ntk,
        phi_method: p.phi_method,
        spot_check_draws: p.spot_check_draws,
        work_budget: p.work_budget,
    };
    let report = concentration::sweep_op_norm(&data, &act, &p.d1_list, &seeds, &opts)?;
    out.stage("sweep");
    out.csv(
        "concentration.csv",
        concentration::ConcentrationRecord::CSV_HEADER,
        report.records.iter().map(|r| {
            vec![
                r.n.to_string(),
                r.d0.to_string(),
                r.d1.to_string(),
                r.seed.to_string(),
                real(r.op_ck),
                real(r.op_grad),
                real(r.op_ntk),
                real(r.lmin_ck),
                real(r.lmin_ntk),
                real(r.frob),
                real(r.floor_ck),
                real(r.floor_ntk),
            ]
        }),
    )?;
    let hd = hermite_data(&act, ultrawide_core::activation::DEFAULT_ORDER)?;
    let frob_limit = DeformedInput::from_data(empirical_measure(&data)?, hd.b_sigma)?.m2_free().sqrt();
    let widths = report
        .medians
        .iter()
        .map(|&(d1, median)| {
            let frob: Vec<f64> = report.records.iter().filter(|r| r.d1 == d1).map(|r| r.frob).collect();
            WidthSummary {
                d1,
                median_op_ck: median,
                mean_frob: frob.iter().sum::<f64>() / frob.len() as f64,
            }
        })
        .collect();
    out.json(
        "diagnostics.json",
        &ConcentrationDiagnostics {
            slope: report.slope,
            envelope_constant: report.envelope_constant,
            spot_check_z: report.spot_check_z,
            frob_limit,
            widths,
            hermite: HermiteSummary::new(&act, &hd),
        },
    )?;
    Ok(Outcome::ok(format!(
        "{} trials, log-log slope of median ||CK - Phi|| = {:.4}, envelope constant {:.3}",
        report.records.len(),
        report.slope,
        report.envelope_constant
    )))
}

#[derive(Serialize)]
struct CellSummary {
    n: usize,
    d1: usize,
    reps: usize,
    test_rf_mean: f64,
    test_rf_std_err: f64,
    test_k_mean: f64,
    train_rf_mean: f64,
    train_k_mean: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    test_asym: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    train_asym: Option<f64>,
}

fn mean(v: impl Iterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = v.collect();
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
    } else {
        0.0
    };
    (m, (var / v.len() as f64).sqrt())
}

fn regress(p: &RegressParams, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let act = activation(p.activation)?;
    let jobs: Vec<(usize, usize, u64)> = p
        .n_list
        .iter()
        .flat_map(|&n| p.d1_list.iter().flat_map(move |&d1| (0..p.reps as u64).map(move |r| (n, d1, r))))
        .collect();
    out.seeds((0..p.reps as u64).map(|r| derive_seed(p.seed, r)));
    let reports: Vec<RegressionReport> = jobs
        .par_iter()
        .map(|&(n, d1, r)| {
            let s = derive_seed(p.seed, r);
            let task = SyntheticTask::generate(p.generator, p.d0, n, p.n_test, p.sigma_beta, p.sigma_eps, s)?;
            log::info!("regress n={n} d1={d1} rep={r}");
            fit_and_score(&task, &act, d1, p.lambda, p.kernel_mode, s)
        })
        .collect::<Result<_, _>>()?;
    out.stage("fits");
    out.csv(
        "sweep.csv",
        RegressionReport::CSV_HEADER,
        reports.iter().map(|r| {
            vec![
                r.n.to_string(),
                r.d0.to_string(),
                r.d1.to_string(),
                real(r.lambda),
                r.kernel_mode.to_string(),
                r.seed.to_string(),
                real(r.train_rf),
                real(r.train_k),
                real(r.test_rf),
                real(r.test_k),
                opt_real(r.train_asym),
                opt_real(r.test_asym),
                opt_real(r.lambda_eff),
            ]
        }),
    )?;
    let cells: Vec<CellSummary> = reports
        .chunks(p.reps)
        .map(|c| {
            let (test_rf_mean, test_rf_std_err) = mean(c.iter().map(|r| r.test_rf));
            let avg = |f: fn(&RegressionReport) -> Option<f64>| -> Option<f64> {
                let v: Option<Vec<f64>> = c.iter().map(f).collect();
                v.map(|v| mean(v.into_iter()).0)
            };
            CellSummary {
                n: c[0].n,
                d1: c[0].d1,
                reps: c.len(),
                test_rf_mean,
                test_rf_std_err,
                test_k_mean: mean(c.iter().map(|r| r.test_k)).0,
                train_rf_mean: mean(c.iter().map(|r| r.train_rf)).0,
                train_k_mean: mean(c.iter().map(|r| r.train_k)).0,
                test_asym: avg(|r| r.test_asym),
                train_asym: avg(|r| r.train_asym),
            }
        })
        .collect();
    out.json("diagnostics.json", &cells)?;
    let widest = cells.iter().max_by_key(|c| (c.d1, c.n)).expect("at least one cell");
    Ok(Outcome::ok(format!(
        "{} fits; at n = {}, d1 = {}: test_rf = {:.4} +- {:.4}, test_asym = {}",
        reports.len(),
        widest.n,
        widest.d1,
        widest.test_rf_mean,
        widest.test_rf_std_err,
        widest.test_asym.map_or("n/a".to_owned(), |v| format!("{v:.4}"))
    )))
}
