//! Experiment configuration: the JSON file format and per-command parameters.
//!
//! A config file looks like
//! `{"schema_version": 1, "command": "esd", "params": {...}}`; every missing
//! parameter takes its default, and the fully resolved config is echoed into
//! the run manifest so it can be replayed verbatim.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use ultrawide_core::kernels::{DEFAULT_WORK_BUDGET, PhiMethod};
use ultrawide_core::{BaseActivation, CenterMode, Complex64, Generator, KernelMode, SpectralMeasure};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandName {
    Hermite,
    Esd,
    Law,
    Concentration,
    Regress,
}

impl fmt::Display for CommandName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Hermite => "hermite",
            Self::Esd => "esd",
            Self::Law => "law",
            Self::Concentration => "concentration",
            Self::Regress => "regress",
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub schema_version: u32,
    pub command: CommandName,
    #[serde(default = "empty_object")]
    pub params: serde_json::Value,
}

fn empty_object() -> serde_json::Value {
    serde_json::Value::Object(Default::default())
}

/// Parameters of one command, fully resolved.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Params {
    Hermite(HermiteParams),
    Esd(EsdParams),
    Law(LawParams),
    Concentration(ConcentrationParams),
    Regress(RegressParams),
}

impl Params {
    pub fn command(&self) -> CommandName {
        match self {
            Self::Hermite(_) => CommandName::Hermite,
            Self::Esd(_) => CommandName::Esd,
            Self::Law(_) => CommandName::Law,
            Self::Concentration(_) => CommandName::Concentration,
            Self::Regress(_) => CommandName::Regress,
        }
    }

    pub fn defaults(command: CommandName) -> Self {
        match command {
            CommandName::Hermite => Self::Hermite(HermiteParams::default()),
            CommandName::Esd => Self::Esd(EsdParams::default()),
            CommandName::Law => Self::Law(LawParams::default()),
            CommandName::Concentration => Self::Concentration(ConcentrationParams::default()),
            CommandName::Regress => Self::Regress(RegressParams::default()),
        }
    }

    /// The resolved config, replayable as a config file.
    pub fn to_config(&self) -> serde_json::Value {
        serde_json::json!({
            "schema_version": SCHEMA_VERSION,
            "command": self.command(),
            "params": self,
        })
    }

    pub fn validate(&self) -> Result<(), CliError> {
        match self {
            Self::Hermite(p) => p.validate(),
            Self::Esd(p) => p.validate(),
            Self::Law(p) => p.validate(),
            Self::Concentration(p) => p.validate(),
            Self::Regress(p) => p.validate(),
        }
    }
}

fn pointer(path: &serde_path_to_error::Path, prefix: &str) -> String {
    use serde_path_to_error::Segment;
    let mut out = prefix.to_owned();
    for seg in path.iter() {
        out.push('/');
        match seg {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } => out.push_str(&key.replace('~', "~0").replace('/', "~1")),
            Segment::Enum { variant } => out.push_str(variant),
            Segment::Unknown => out.push('?'),
        }
    }
    if out.is_empty() {
        "/".to_owned()
    } else {
        out
    }
}

fn decode<T: DeserializeOwned>(value: serde_json::Value, prefix: &str) -> Result<T, CliError> {
    serde_path_to_error::deserialize(value).map_err(|e| CliError::Config {
        pointer: pointer(e.path(), prefix),
        message: e.inner().to_string(),
    })
}

/// Parses a config document, reporting errors with a JSON pointer.
pub fn parse_config(text: &str) -> Result<Params, CliError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let file: ConfigFile = serde_path_to_error::deserialize(&mut de).map_err(|e| CliError::Config {
        pointer: pointer(e.path(), ""),
        message: e.inner().to_string(),
    })?;
    if file.schema_version != SCHEMA_VERSION {
        return Err(CliError::Config {
            pointer: "/schema_version".into(),
            message: format!("unsupported schema version {}, expected {SCHEMA_VERSION}", file.schema_version),
        });
    }
    let params = match file.command {
        CommandName::Hermite => Params::Hermite(decode(file.params, "/params")?),
        CommandName::Esd => Params::Esd(decode(file.params, "/params")?),
        CommandName::Law => Params::Law(decode(file.params, "/params")?),
        CommandName::Concentration => Params::Concentration(decode(file.params, "/params")?),
        CommandName::Regress => Params::Regress(decode(file.params, "/params")?),
    };
    params.validate()?;
    Ok(params)
}

pub fn load_config(path: &Path) -> Result<Params, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    parse_config(&text)
}

fn invalid(pointer: &str, message: impl Into<String>) -> CliError {
    CliError::Config {
        pointer: pointer.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSpec {
    pub generator: Generator,
    pub d0: usize,
    pub n: usize,
    pub seed: u64,
    /// Matrix file (CSV or binary, `d0 x n`) used when `generator` is `file`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

impl Default for DataSpec {
    fn default() -> Self {
        Self {
            generator: Generator::GaussianIidScaled,
            d0: 250,
            n: 250,
            seed: 1,
            path: None,
        }
    }
}

impl DataSpec {
    fn validate(&self, at: &str) -> Result<(), CliError> {
        match (self.generator, &self.path) {
            (Generator::File, None) => Err(invalid(&format!("{at}/path"), "generator `file` needs a path")),
            (Generator::File, Some(_)) => Ok(()),
            (_, Some(_)) => Err(invalid(&format!("{at}/path"), "a path is only used with generator `file`")),
            _ if self.d0 == 0 => Err(invalid(&format!("{at}/d0"), "must be positive")),
            _ if self.n == 0 => Err(invalid(&format!("{at}/n"), "must be positive")),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HermiteParams {
    pub activation: BaseActivation,
    pub order: usize,
}

impl Default for HermiteParams {
    fn default() -> Self {
        Self {
            activation: BaseActivation::Arctan,
            order: ultrawide_core::activation::DEFAULT_ORDER,
        }
    }
}

impl HermiteParams {
    fn validate(&self) -> Result<(), CliError> {
        if self.order > ultrawide_core::activation::MAX_ORDER {
            return Err(invalid(
                "/params/order",
                format!("at most {}", ultrawide_core::activation::MAX_ORDER),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EsdParams {
    pub activation: BaseActivation,
    pub data: DataSpec,
    pub d1: usize,
    /// Weight seed.
    pub seed: u64,
    pub mode: CenterMode,
    /// Histogram bins; Freedman–Diaconis when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bins: Option<usize>,
    /// Also solve for the limiting density.
    pub theory: bool,
    pub grid_points: usize,
    pub phi_method: PhiMethod,
    pub work_budget: f64,
}

impl Default for EsdParams {
    fn default() -> Self {
        Self {
            activation: BaseActivation::Arctan,
            data: DataSpec::default(),
            d1: 25_000,
            seed: 1,
            mode: CenterMode::CkVsPhi0,
            bins: None,
            theory: true,
            grid_points: 600,
            phi_method: PhiMethod::default(),
            work_budget: DEFAULT_WORK_BUDGET,
        }
    }
}

impl EsdParams {
    fn validate(&self) -> Result<(), CliError> {
        self.data.validate("/params/data")?;
        if self.d1 == 0 {
            return Err(invalid("/params/d1", "must be positive"));
        }
        if self.bins == Some(0) {
            return Err(invalid("/params/bins", "must be positive"));
        }
        if self.theory && self.grid_points < 2 {
            return Err(invalid("/params/grid_points", "at least 2"));
        }
        Ok(())
    }
}

/// Input measure of the law solver, written `kind:arg` on the command line.
#[derive(Debug, Clone, PartialEq)]
pub enum MeasureSpec {
    /// `point:c`
    Point(f64),
    /// `semicircle:variance`
    Semicircle(f64),
    /// `mp:gamma`
    MarchenkoPastur(f64),
    /// `atoms:path`, one location per entry of a CSV/binary matrix file.
    AtomsFile(PathBuf),
    /// `data`: the spectrum of `X^T X` for the `data` block.
    Data,
}

impl FromStr for MeasureSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if s == "data" {
            return Ok(Self::Data);
        }
        let (kind, arg) = s
            .split_once(':')
            .ok_or_else(|| format!("measure `{s}` is not of the form kind:arg"))?;
        let num = || {
            arg.trim()
                .parse::<f64>()
                .map_err(|_| format!("measure `{s}`: `{arg}` is not a number"))
        };
        match kind.trim() {
            "point" => Ok(Self::Point(num()?)),
            "semicircle" => Ok(Self::Semicircle(num()?)),
            "mp" => Ok(Self::MarchenkoPastur(num()?)),
            "atoms" => Ok(Self::AtomsFile(PathBuf::from(arg.trim()))),
            other => Err(format!("unknown measure kind `{other}` (point, semicircle, mp, atoms, data)")),
        }
    }
}

impl fmt::Display for MeasureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Point(c) => write!(f, "point:{c}"),
            Self::Semicircle(v) => write!(f, "semicircle:{v}"),
            Self::MarchenkoPastur(g) => write!(f, "mp:{g}"),
            Self::AtomsFile(p) => write!(f, "atoms:{}", p.display()),
            Self::Data => f.write_str("data"),
        }
    }
}

impl MeasureSpec {
    /// The closed-form measures; `None` for the file and data variants.
    pub fn closed_form(&self) -> Option<Result<SpectralMeasure, ultrawide_core::Error>> {
        match *self {
            Self::Point(c) => Some(SpectralMeasure::point_mass(c)),
            Self::Semicircle(v) => Some(SpectralMeasure::semicircle(v)),
            Self::MarchenkoPastur(g) => Some(ultrawide_core::mp_measure(g)),
            Self::AtomsFile(_) | Self::Data => None,
        }
    }
}

macro_rules! string_serde {
    ($t:ty) => {
        impl Serialize for $t {
            fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $t {
            fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

string_serde!(MeasureSpec);

/// A complex number written `a+bi`, `a-bi`, `bi` or `a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexArg(pub Complex64);

impl FromStr for ComplexArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let bad = || format!("`{s}` is not a complex number of the form a+bi");
        let Some(body) = t.strip_suffix('i') else {
            return t.parse::<f64>().map(|re| Self(Complex64::new(re, 0.0))).map_err(|_| bad());
        };
        // Split before the last sign that is not part of an exponent.
        let bytes = body.as_bytes();
        let split = (1..bytes.len())
            .rev()
            .find(|&k| (bytes[k] == b'+' || bytes[k] == b'-') && !matches!(bytes[k - 1], b'e' | b'E'));
        let (re, im) = match split {
            Some(k) => (&body[..k], &body[k..]),
            None => ("0", body),
        };
        let im = match im {
            "" | "+" => "1",
            "-" => "-1",
            other => other,
        };
        let re = re.parse::<f64>().map_err(|_| bad())?;
        let im = im.parse::<f64>().map_err(|_| bad())?;
        Ok(Self(Complex64::new(re, im)))
    }
}

impl fmt::Display for ComplexArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let Complex64 { re, im } = self.0;
        if im < 0.0 {
            write!(f, "{re}-{}i", -im)
        } else {
            write!(f, "{re}+{im}i")
        }
    }
}

string_serde!(ComplexArg);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LawParams {
    pub measure: MeasureSpec,
    /// When set, the measure is `mu0` and gets deformed to `(1 - b^2) + b^2 mu0`
    /// with `b = b_sigma` of this activation; otherwise it is used as is.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub activation: Option<BaseActivation>,
    /// Data for `measure = data`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<DataSpec>,
    /// Solve at this single point and print `m` and `beta` instead of a density.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z: Option<ComplexArg>,
    pub grid_points: usize,
    /// Height above the real axis for the density inversion.
    pub v: f64,
    pub richardson: bool,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LawParams {
    fn default() -> Self {
        let solver = ultrawide_core::SolverOptions::default();
        Self {
            measure: MeasureSpec::Point(1.0),
            activation: None,
            data: None,
            z: None,
            grid_points: 600,
            v: ultrawide_core::DensityOptions::default().v,
            richardson: false,
            tol: solver.tol,
            max_iter: solver.max_iter,
        }
    }
}

impl LawParams {
    fn validate(&self) -> Result<(), CliError> {
        match (&self.measure, &self.data) {
            (MeasureSpec::Data, None) => return Err(invalid("/params/data", "measure `data` needs a data block")),
            (MeasureSpec::Data, Some(d)) => d.validate("/params/data")?,
            (_, Some(_)) => return Err(invalid("/params/data", "only used with measure `data`")),
            _ => {}
        }
        if matches!(self.measure, MeasureSpec::Data) && self.activation.is_none() {
            return Err(invalid("/params/activation", "measure `data` needs an activation"));
        }
        if let Some(z) = self.z {
            if !(z.0.im > 0.0) {
                return Err(invalid("/params/z", "needs a positive imaginary part"));
            }
        }
        if !(self.v > 0.0) {
            return Err(invalid("/params/v", "must be positive"));
        }
        if !(self.tol > 0.0) {
            return Err(invalid("/params/tol", "must be positive"));
        }
        if self.grid_points < 2 {
            return Err(invalid("/params/grid_points", "at least 2"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConcentrationParams {
    pub activation: BaseActivation,
    pub data: DataSpec,
    pub d1_list: Vec<usize>,
    /// Weight draws per width; trial `t` uses seed `derive(seed, t)`.
    pub trials: usize,
    pub seed: u64,
    pub ntk: bool,
    pub phi_method: PhiMethod,
    /// Draws of the Monte-Carlo spot check of `Phi` (0 skips it).
    pub spot_check_draws: usize,
    pub work_budget: f64,
}

impl Default for ConcentrationParams {
    fn default() -> Self {
        Self {
            activation: BaseActivation::Arctan,
            data: DataSpec {
                d0: 200,
                n: 200,
                ..DataSpec::default()
            },
            d1_list: vec![1_000, 4_000, 16_000],
            trials: 10,
            seed: 1,
            ntk: true,
            phi_method: PhiMethod::default(),
            spot_check_draws: 0,
            work_budget: DEFAULT_WORK_BUDGET,
        }
    }
}

impl ConcentrationParams {
    fn validate(&self) -> Result<(), CliError> {
        self.data.validate("/params/data")?;
        if self.d1_list.is_empty() {
            return Err(invalid("/params/d1_list", "needs at least one width"));
        }
        if let Some(k) = self.d1_list.iter().position(|&d| d == 0) {
            return Err(invalid(&format!("/params/d1_list/{k}"), "must be positive"));
        }
        if self.trials == 0 {
            return Err(invalid("/params/trials", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegressParams {
    pub activation: BaseActivation,
    pub generator: Generator,
    pub d0: usize,
    pub n_list: Vec<usize>,
    pub d1_list: Vec<usize>,
    pub n_test: usize,
    pub lambda: f64,
    pub kernel_mode: KernelMode,
    pub sigma_beta: f64,
    pub sigma_eps: f64,
    pub reps: usize,
    pub seed: u64,
}

impl Default for RegressParams {
    fn default() -> Self {
        Self {
            activation: BaseActivation::Sigmoid,
            generator: Generator::GaussianIidScaled,
            d0: 125,
            n_list: vec![125],
            d1_list: vec![125, 1_250, 12_500],
            n_test: 1_000,
            lambda: 1e-3,
            kernel_mode: KernelMode::Ck,
            sigma_beta: 2.0,
            sigma_eps: 1.0,
            reps: 10,
            seed: 1,
        }
    }
}

impl RegressParams {
    fn validate(&self) -> Result<(), CliError> {
        if self.generator == Generator::File {
            return Err(invalid("/params/generator", "regression tasks are generated, not loaded"));
        }
        if self.d0 == 0 {
            return Err(invalid("/params/d0", "must be positive"));
        }
        for (name, list) in [("n_list", &self.n_list), ("d1_list", &self.d1_list)] {
            if list.is_empty() {
                return Err(invalid(&format!("/params/{name}"), "must not be empty"));
            }
            if let Some(k) = list.iter().position(|&v| v == 0) {
                return Err(invalid(&format!("/params/{name}/{k}"), "must be positive"));
            }
        }
        if self.n_test == 0 {
            return Err(invalid("/params/n_test", "must be positive"));
        }
        if !(self.lambda >= 0.0) {
            return Err(invalid("/params/lambda", "must be non-negative"));
        }
        if !(self.sigma_beta >= 0.0) || !(self.sigma_eps >= 0.0) {
            return Err(invalid("/params/sigma_beta", "noise and signal scales must be non-negative"));
        }
        if self.reps == 0 {
            return Err(invalid("/params/reps", "must be positive"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_arguments() {
        let c = |s: &str| s.parse::<ComplexArg>().unwrap().0;
        assert_eq!(c("0+1i"), Complex64::new(0.0, 1.0));
        assert_eq!(c("1.5-2i"), Complex64::new(1.5, -2.0));
        assert_eq!(c("i"), Complex64::new(0.0, 1.0));
        assert_eq!(c("-0.5i"), Complex64::new(0.0, -0.5));
        assert_eq!(c("1e-3+2e-2i"), Complex64::new(1e-3, 2e-2));
        assert_eq!(c("3"), Complex64::new(3.0, 0.0));
        assert!("1+2j".parse::<ComplexArg>().is_err());
    }

    #[test]
    fn measures_round_trip() {
        for s in ["point:1", "semicircle:0.5", "mp:2", "atoms:x.csv", "data"] {
            assert_eq!(s.parse::<MeasureSpec>().unwrap().to_string(), s);
        }
        assert!("gauss:1".parse::<MeasureSpec>().is_err());
    }

    #[test]
    fn errors_carry_json_pointers() {
        let err = parse_config(r#"{"schema_version":1,"command":"esd","params":{"data":{"d0":"x"}}}"#).unwrap_err();
        match err {
            CliError::Config { pointer, .. } => assert_eq!(pointer, "/params/data/d0"),
            other => panic!("{other:?}"),
        }
        let err = parse_config(r#"{"schema_version":1,"command":"regress","params":{"d1_list":[10,0]}}"#).unwrap_err();
        assert!(matches!(err, CliError::Config { ref pointer, .. } if pointer == "/params/d1_list/1"));
        let err = parse_config(r#"{"schema_version":2,"command":"law"}"#).unwrap_err();
        assert!(matches!(err, CliError::Config { ref pointer, .. } if pointer == "/schema_version"));
    }

    #[test]
    fn resolved_config_replays() {
        for cmd in [
            CommandName::Hermite,
            CommandName::Esd,
            CommandName::Law,
            CommandName::Concentration,
            CommandName::Regress,
        ] {
            let p = Params::defaults(cmd);
            let text = serde_json::to_string(&p.to_config()).unwrap();
            assert_eq!(parse_config(&text).unwrap(), p);
        }
    }
}
