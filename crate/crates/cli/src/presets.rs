//! Named experiment presets. Dimensions are the published figure sizes,
//! multiplied by `scale` (n, d0 and d1 alike) and rounded.

use ultrawide_core::{BaseActivation, CenterMode, Generator, KernelMode};

use crate::config::{CommandName, DataSpec, EsdParams, Params, RegressParams};
use crate::error::CliError;

pub const DEFAULT_SCALE: f64 = 0.25;

pub const NAMES: [&str; 4] = ["fig-law-semi", "fig-law", "fig-appendix-b", "fig-krr"];

/// `(activation, n, d0, d1)` of each eigenvalue panel.
type Panel = (BaseActivation, usize, usize, usize);

const LAW_SEMI: [Panel; 3] = [
    (BaseActivation::Cos, 1_900, 2_000, 200_000),
    (BaseActivation::Cos, 2_000, 1_900, 200_000),
    (BaseActivation::Cos, 2_000, 2_000, 200_000),
];

const LAW: [Panel; 3] = [
    (BaseActivation::Arctan, 1_000, 1_000, 100_000),
    (BaseActivation::Arctan, 1_000, 1_500, 100_000),
    (BaseActivation::Arctan, 1_500, 1_000, 100_000),
];

const APPENDIX_B: [Panel; 9] = [
    (BaseActivation::Sigmoid, 1_000, 1_000, 100_000),
    (BaseActivation::Sigmoid, 1_000, 1_500, 100_000),
    (BaseActivation::Sigmoid, 1_500, 1_000, 100_000),
    (BaseActivation::Identity, 1_000, 1_000, 100_000),
    (BaseActivation::Identity, 1_000, 1_500, 100_000),
    (BaseActivation::Identity, 1_500, 1_000, 100_000),
    (BaseActivation::Relu, 1_000, 1_000, 100_000),
    (BaseActivation::Relu, 1_000, 800, 100_000),
    (BaseActivation::Relu, 800, 1_000, 100_000),
];

/// Ridge of each error-curve panel.
const KRR_LAMBDAS: [f64; 2] = [1e-3, 1e-6];
const KRR_D0: usize = 500;
const KRR_N: [usize; 3] = [250, 500, 1_000];
/// Widths as multiples of `n`.
const KRR_WIDTH_FACTORS: [usize; 8] = [1, 2, 5, 10, 20, 50, 100, 200];

fn scaled(v: usize, scale: f64) -> usize {
    ((v as f64 * scale).round() as usize).max(1)
}

fn pick<T: Copy>(panels: &[T], panel: usize, preset: &str) -> Result<T, CliError> {
    panels.get(panel).copied().ok_or_else(|| {
        CliError::Usage(format!("preset {preset} has panels 0..{}, got {panel}", panels.len() - 1))
    })
}

/// Expands `name` for `command`. Eigenvalue presets belong to `esd`, `fig-krr` to `regress`.
pub fn expand(name: &str, command: CommandName, scale: f64, panel: usize) -> Result<Params, CliError> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(CliError::Usage(format!("scale must be positive, got {scale}")));
    }
    let esd_panels: Option<&[Panel]> = match name {
        "fig-law-semi" => Some(&LAW_SEMI),
        "fig-law" => Some(&LAW),
        "fig-appendix-b" => Some(&APPENDIX_B),
        _ => None,
    };
    match (esd_panels, name, command) {
        (Some(panels), _, CommandName::Esd) => {
            let (activation, n, d0, d1) = pick(panels, panel, name)?;
            Ok(Params::Esd(EsdParams {
                activation,
                data: DataSpec {
                    generator: Generator::GaussianIidScaled,
                    d0: scaled(d0, scale),
                    n: scaled(n, scale),
                    seed: 1,
                    path: None,
                },
                d1: scaled(d1, scale),
                seed: 1,
                mode: CenterMode::CkVsPhi0,
                ..EsdParams::default()
            }))
        }
        (None, "fig-krr", CommandName::Regress) => {
            let lambda = pick(&KRR_LAMBDAS, panel, name)?;
            let n_list: Vec<usize> = KRR_N.iter().map(|&n| scaled(n, scale)).collect();
            let mut d1_list: Vec<usize> = n_list
                .iter()
                .flat_map(|&n| KRR_WIDTH_FACTORS.iter().map(move |f| f * n))
                .collect();
            d1_list.sort_unstable();
            d1_list.dedup();
            Ok(Params::Regress(RegressParams {
                activation: BaseActivation::Sigmoid,
                generator: Generator::GaussianIidScaled,
                d0: scaled(KRR_D0, scale),
                n_list,
                d1_list,
                n_test: 5_000,
                lambda,
                kernel_mode: KernelMode::Ck,
                sigma_beta: 2.0,
                sigma_eps: 1.0,
                reps: 50,
                seed: 1,
            }))
        }
        _ if NAMES.contains(&name) => Err(CliError::Usage(format!(
            "preset {name} does not apply to the {command} command"
        ))),
        _ => Err(CliError::Usage(format!("unknown preset `{name}` (known: {})", NAMES.join(", ")))),
    }
}
