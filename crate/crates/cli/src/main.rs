//! `ultrawide`: experiments on the spectra of ultra-wide two-layer networks.
//!
//! Every command resolves its parameters from defaults, a preset or a JSON
//! config (in that order of precedence, lowest first), then applies the flags
//! given on the command line. Results land in `--out` together with a
//! `manifest.json` that embeds the resolved config.

mod commands;
mod config;
mod error;
mod output;
mod presets;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ultrawide_core::regression::KernelMode;
use ultrawide_core::{BaseActivation, CenterMode, Generator};

use config::{load_config, CommandName, ComplexArg, DataSpec, MeasureSpec, Params};
use error::CliError;
use output::OutputDir;

#[derive(Parser)]
#[command(name = "ultrawide", version, about = "Spectra of CK/NTK matrices of ultra-wide two-layer networks")]
struct Cli {
    /// Directory for CSV/JSON artifacts.
    #[arg(long, global = true, env = "ULTRAWIDE_OUT", default_value = "out")]
    out: PathBuf,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replay a JSON config file.
    Run { config: PathBuf },
    /// Hermite coefficients of a normalized activation.
    Hermite(HermiteArgs),
    /// Eigenvalues of a centered kernel, with the limiting density.
    Esd(EsdArgs),
    /// Solve the self-consistent equations of the limiting law.
    Law(LawArgs),
    /// Operator-norm concentration of the kernels over a width sweep.
    Concentration(ConcentrationArgs),
    /// Random-feature ridge regression against its kernel limit.
    Regress(RegressArgs),
}

#[derive(Args)]
struct Base {
    /// Start from a JSON config file.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Start from a named preset.
    #[arg(long)]
    preset: Option<String>,
    /// Dimension scale applied by the preset.
    #[arg(long, default_value_t = presets::DEFAULT_SCALE, requires = "preset")]
    scale: f64,
    /// Panel index within the preset.
    #[arg(long, default_value_t = 0, requires = "preset")]
    panel: usize,
}

impl Base {
    fn resolve(&self, command: CommandName) -> Result<Params, CliError> {
        let params = match (&self.config, &self.preset) {
            (Some(path), _) => load_config(path)?,
            (None, Some(name)) => presets::expand(name, command, self.scale, self.panel)?,
            (None, None) => Params::defaults(command),
        };
        if params.command() != command {
            return Err(CliError::Usage(format!(
                "config is for the {} command, not {command}",
                params.command()
            )));
        }
        Ok(params)
    }
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    generator: Option<Generator>,
    #[arg(long)]
    d0: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    data_seed: Option<u64>,
    /// Read the d0 x n input matrix from a CSV or binary file.
    #[arg(long)]
    data_path: Option<PathBuf>,
}

impl DataArgs {
    fn is_set(&self) -> bool {
        self.generator.is_some() || self.d0.is_some() || self.n.is_some() || self.data_seed.is_some() || self.data_path.is_some()
    }

    fn apply(&self, data: &mut DataSpec) {
        set(&mut data.generator, self.generator);
        set(&mut data.d0, self.d0);
        set(&mut data.n, self.n);
        set(&mut data.seed, self.data_seed);
        if self.data_path.is_some() {
            data.path = self.data_path.clone();
        }
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

#[derive(Args)]
struct HermiteArgs {
    #[command(flatten)]
    base: Base,
    #[arg(long)]
    activation: Option<BaseActivation>,
    #[arg(long)]
    order: Option<usize>,
}

#[derive(Args)]
struct EsdArgs {
    #[command(flatten)]
    base: Base,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    activation: Option<BaseActivation>,
    #[arg(long)]
    d1: Option<usize>,
    /// Weight seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    mode: Option<CenterMode>,
    #[arg(long)]
    bins: Option<usize>,
    /// Skip the limiting density.
    #[arg(long)]
    no_theory: bool,
    #[arg(long)]
    grid_points: Option<usize>,
}

#[derive(Args)]
struct LawArgs {
    #[command(flatten)]
    base: Base,
    #[command(flatten)]
    data: DataArgs,
    /// `point:c`, `semicircle:v`, `mp:gamma`, `atoms:<file>` or `data`.
    #[arg(long)]
    measure: Option<MeasureSpec>,
    /// Deform the measure by this activation's `b_sigma`.
    #[arg(long)]
    activation: Option<BaseActivation>,
    /// Solve at a single point, e.g. `0+1i`.
    #[arg(long, allow_hyphen_values = true)]
    z: Option<ComplexArg>,
    #[arg(long)]
    grid_points: Option<usize>,
    #[arg(long)]
    v: Option<f64>,
    #[arg(long)]
    richardson: bool,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
}

#[derive(Args)]
struct ConcentrationArgs {
    #[command(flatten)]
    base: Base,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    activation: Option<BaseActivation>,
    #[arg(long, value_delimiter = ',')]
    d1_list: Option<Vec<usize>>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Skip the NTK columns.
    #[arg(long)]
    no_ntk: bool,
    #[arg(long)]
    spot_check_draws: Option<usize>,
}

#[derive(Args)]
struct RegressArgs {
    #[command(flatten)]
    base: Base,
    #[arg(long)]
    activation: Option<BaseActivation>,
    #[arg(long)]
    generator: Option<Generator>,
    #[arg(long)]
    d0: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    n_list: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    d1_list: Option<Vec<usize>>,
    #[arg(long)]
    n_test: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    kernel_mode: Option<KernelMode>,
    #[arg(long)]
    sigma_beta: Option<f64>,
    #[arg(long)]
    sigma_eps: Option<f64>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

fn resolve(command: &Command) -> Result<Params, CliError> {
    let mut params = match command {
        Command::Run { config } => return load_config(config),
        Command::Hermite(a) => a.base.resolve(CommandName::Hermite)?,
        Command::Esd(a) => a.base.resolve(CommandName::Esd)?,
        Command::Law(a) => a.base.resolve(CommandName::Law)?,
        Command::Concentration(a) => a.base.resolve(CommandName::Concentration)?,
        Command::Regress(a) => a.base.resolve(CommandName::Regress)?,
    };
    match (command, &mut params) {
        (Command::Hermite(a), Params::Hermite(p)) => {
            set(&mut p.activation, a.activation);
            set(&mut p.order, a.order);
        }
        (Command::Esd(a), Params::Esd(p)) => {
            a.data.apply(&mut p.data);
            set(&mut p.activation, a.activation);
            set(&mut p.d1, a.d1);
            set(&mut p.seed, a.seed);
            set(&mut p.mode, a.mode);
            if a.bins.is_some() {
                p.bins = a.bins;
            }
            if a.no_theory {
                p.theory = false;
            }
            set(&mut p.grid_points, a.grid_points);
        }
        (Command::Law(a), Params::Law(p)) => {
            if let Some(m) = &a.measure {
                p.measure = m.clone();
            }
            if a.data.is_set() {
                a.data.apply(p.data.get_or_insert_with(DataSpec::default));
            }
            if a.activation.is_some() {
                p.activation = a.activation;
            }
            if a.z.is_some() {
                p.z = a.z;
            }
            set(&mut p.grid_points, a.grid_points);
            set(&mut p.v, a.v);
            p.richardson |= a.richardson;
            set(&mut p.tol, a.tol);
            set(&mut p.max_iter, a.max_iter);
        }
        (Command::Concentration(a), Params::Concentration(p)) => {
            a.data.apply(&mut p.data);
            set(&mut p.activation, a.activation);
            set(&mut p.d1_list, a.d1_list.clone());
            set(&mut p.trials, a.trials);
            set(&mut p.seed, a.seed);
            if a.no_ntk {
                p.ntk = false;
            }
            set(&mut p.spot_check_draws, a.spot_check_draws);
        }
        (Command::Regress(a), Params::Regress(p)) => {
            set(&mut p.activation, a.activation);
            set(&mut p.generator, a.generator);
            set(&mut p.d0, a.d0);
            set(&mut p.n_list, a.n_list.clone());
            set(&mut p.d1_list, a.d1_list.clone());
            set(&mut p.n_test, a.n_test);
            set(&mut p.lambda, a.lambda);
            set(&mut p.kernel_mode, a.kernel_mode);
            set(&mut p.sigma_beta, a.sigma_beta);
            set(&mut p.sigma_eps, a.sigma_eps);
            set(&mut p.reps, a.reps);
            set(&mut p.seed, a.seed);
        }
        _ => unreachable!("resolve returns params of the requested command"),
    }
    params.validate()?;
    Ok(params)
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot start {threads} threads: {e}")))?;
    }
    let params = resolve(&cli.command)?;
    let mut out = OutputDir::create(&cli.out)?;
    let outcome = commands::run(&params, &mut out)?;
    let manifest = out.finish(params.to_config())?;
    println!("{}", outcome.summary);
    log::info!("wrote {}", manifest.display());
    match outcome.non_convergence {
        Some(msg) => Err(CliError::NonConvergence(msg)),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
