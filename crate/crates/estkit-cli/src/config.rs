//! Scenario configuration files.
//!
//! A config is a TOML document:
//!
//! ```toml
//! schema_version = 1
//! scenario = "sip-control"
//! seed = 7            # required for stochastic scenarios
//! dt = 0.001          # optional, scenario default otherwise
//! steps = 4000        # optional, scenario default otherwise
//!
//! [params]            # scenario parameters, see `list-scenarios`
//! theta0 = 0.2
//!
//! [output]
//! dir = "out"
//! format = "csv"      # or "jsonl"
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

/// Config dialect understood by this build.
pub const SCHEMA_VERSION: i64 = 1;

const TOP_LEVEL_KEYS: [&str; 7] = ["schema_version", "scenario", "seed", "dt", "steps", "params", "output"];
const OUTPUT_KEYS: [&str; 2] = ["dir", "format"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scenario {
    Observability,
    SipControl,
    ImmTrack,
    PfVsKf,
    CifNetwork,
    CircularReasoning,
    PhdTrack,
    UkfCkfLandmark,
}

/// Admissible range of a scenario parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Check {
    Any,
    Positive,
    NonNegative,
    /// In `[0, 1]`.
    Probability,
    /// In `(0, 1]`.
    PositiveProbability,
    /// Integer of at least 1.
    Count,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamSpec {
    pub name: &'static str,
    /// `None` marks a required parameter.
    pub default: Option<f64>,
    pub check: Check,
    pub help: &'static str,
}

const fn param(name: &'static str, default: f64, check: Check, help: &'static str) -> ParamSpec {
    ParamSpec { name, default: Some(default), check, help }
}

const fn required(name: &'static str, check: Check, help: &'static str) -> ParamSpec {
    ParamSpec { name, default: None, check, help }
}

use Check::*;

const OBSERVABILITY: &[ParamSpec] = &[
    param("g", 10.0, Positive, "gravity for the pendulum models"),
    param("L", 1.0, Positive, "vehicle wheelbase and single pendulum length"),
    param("v", 2.0, Positive, "vehicle speed"),
    param("tau_beta", 0.5, Positive, "steering time constant"),
    param("m1", 1.0, Positive, "double pendulum lower mass"),
    param("m2", 1.0, Positive, "double pendulum upper mass"),
    param("L1", 1.0, Positive, "double pendulum lower length"),
    param("L2", 1.0, Positive, "double pendulum upper length"),
];

const SIP_CONTROL: &[ParamSpec] = &[
    param("g", 10.0, Positive, "gravity"),
    param("L", 1.0, Positive, "pendulum length"),
    param("theta0", 0.2, Any, "initial pendulum angle"),
    param("x0", 0.2, Any, "initial cart position"),
    param("init_noise", 0.2, NonNegative, "standard deviation of the initial estimate error"),
    param("meas_noise", 0.01, Positive, "measurement noise standard deviation"),
    param("controller_pole", -4.0, Any, "repeated closed-loop controller pole"),
    param("observer_pole", -4.0, Any, "repeated observer pole"),
];

const IMM_TRACK: &[ParamSpec] = &[
    param("q_cp", 1.0, NonNegative, "CP model process variance"),
    param("q_cv", 0.01, NonNegative, "CV model process variance"),
    param("q_ca", 0.01, NonNegative, "CA model process variance"),
    param("meas_sd", 1.0, Positive, "position measurement standard deviation"),
    param("stay", 0.9, Probability, "probability of keeping the current model"),
    param("velocity", 1.0, Any, "true constant velocity"),
    param("init_var", 10.0, Positive, "initial variance of every state"),
];

const PF_VS_KF: &[ParamSpec] = &[
    param("particles", 20000.0, Count, "number of particles"),
    param("sigma_u", 0.2, NonNegative, "acceleration input variance"),
    param("sigma_eps", 1e-3, Positive, "additive process noise variance"),
    param("sigma_z", 0.5, Positive, "position measurement variance"),
    param("resample_fraction", 0.5, PositiveProbability, "resample when N_eff falls below this fraction of N"),
];

const CIF_NETWORK: &[ParamSpec] = &[
    param("nodes", 4.0, Count, "nodes in the ring"),
    param("runs", 200.0, Count, "Monte Carlo runs"),
    param("q", 0.01, Positive, "acceleration noise variance"),
    param("r_min", 0.5, Positive, "smallest sensor variance"),
    param("r_max", 2.0, Positive, "largest sensor variance"),
    param("init_var", 4.0, Positive, "variance of the shared initial estimate"),
];

const CIRCULAR_REASONING: &[ParamSpec] = &[param("rounds", 5.0, Count, "exchange rounds")];

const PHD_TRACK: &[ParamSpec] = &[
    required("p_detect", PositiveProbability, "detection probability"),
    param("p_survive", 0.99, Probability, "survival probability"),
    param("clutter_rate", 2.0, NonNegative, "mean clutter returns per scan"),
    param("birth_weight", 0.1, Positive, "weight of each birth component"),
    param("meas_var", 1.0, Positive, "position measurement variance"),
    param("q", 0.01, Positive, "process noise variance per state"),
];

const UKF_CKF_LANDMARK: &[ParamSpec] = &[
    param("L", 2.5, Positive, "wheelbase"),
    param("speed", 5.0, Any, "commanded speed"),
    param("steer", 0.05, Any, "commanded steering angle"),
    param("sigma_u", 1e-3, NonNegative, "input noise variance"),
    param("sigma_eps", 1e-4, Positive, "additive process noise variance"),
    param("range_var", 0.04, Positive, "range measurement variance"),
    param("init_var", 0.5, Positive, "initial estimate variance"),
];

impl Scenario {
    pub const ALL: [Scenario; 8] = [
        Scenario::Observability,
        Scenario::SipControl,
        Scenario::ImmTrack,
        Scenario::PfVsKf,
        Scenario::CifNetwork,
        Scenario::CircularReasoning,
        Scenario::PhdTrack,
        Scenario::UkfCkfLandmark,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Observability => "observability",
            Scenario::SipControl => "sip-control",
            Scenario::ImmTrack => "imm-track",
            Scenario::PfVsKf => "pf-vs-kf",
            Scenario::CifNetwork => "cif-network",
            Scenario::CircularReasoning => "circular-reasoning",
            Scenario::PhdTrack => "phd-track",
            Scenario::UkfCkfLandmark => "ukf-ckf-landmark",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.name() == name)
    }

    pub fn description(self) -> &'static str {
        match self {
            Scenario::Observability => "observability of the double pendulum, vehicle lateral model and cart-only pendulum",
            Scenario::SipControl => "pendulum on a cart stabilized by state feedback on a Luenberger estimate",
            Scenario::ImmTrack => "CP/CV/CA interacting multiple model bank on constant-velocity truth",
            Scenario::PfVsKf => "particle filter against the Kalman filter on a linear-Gaussian track",
            Scenario::CifNetwork => "ring of sensor nodes: split covariance intersection against naive fusion",
            Scenario::CircularReasoning => "two nodes exchanging one estimate: naive fusion against covariance intersection",
            Scenario::PhdTrack => "GM-PHD filter on two crossing targets with clutter",
            Scenario::UkfCkfLandmark => "EKF, UKF and CKF localizing a vehicle from landmark ranges",
        }
    }

    /// Scenarios that draw random numbers and therefore need a seed.
    pub fn stochastic(self) -> bool {
        !matches!(self, Scenario::Observability | Scenario::CircularReasoning)
    }

    pub fn default_dt(self) -> f64 {
        match self {
            Scenario::SipControl => 0.001,
            Scenario::PfVsKf => 0.5,
            Scenario::UkfCkfLandmark => 0.1,
            _ => 1.0,
        }
    }

    pub fn default_steps(self) -> usize {
        match self {
            Scenario::Observability => 1,
            Scenario::SipControl => 4000,
            Scenario::ImmTrack | Scenario::PhdTrack => 50,
            Scenario::PfVsKf | Scenario::CifNetwork => 30,
            Scenario::CircularReasoning => 1,
            Scenario::UkfCkfLandmark => 100,
        }
    }

    pub fn params(self) -> &'static [ParamSpec] {
        match self {
            Scenario::Observability => OBSERVABILITY,
            Scenario::SipControl => SIP_CONTROL,
            Scenario::ImmTrack => IMM_TRACK,
            Scenario::PfVsKf => PF_VS_KF,
            Scenario::CifNetwork => CIF_NETWORK,
            Scenario::CircularReasoning => CIRCULAR_REASONING,
            Scenario::PhdTrack => PHD_TRACK,
            Scenario::UkfCkfLandmark => UKF_CKF_LANDMARK,
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Csv,
    Jsonl,
}

impl Format {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "csv" => Some(Format::Csv),
            "jsonl" => Some(Format::Jsonl),
            _ => None,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Jsonl => "jsonl",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub scenario: Scenario,
    pub seed: Option<u64>,
    pub dt: f64,
    pub steps: usize,
    /// Every parameter of the scenario, defaults filled in.
    pub params: BTreeMap<String, f64>,
    pub output_dir: Option<PathBuf>,
    pub format: Format,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    Io(String),
    Invalid(Vec<String>),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io(msg) => write!(f, "cannot read config: {msg}"),
            ConfigError::Invalid(diags) => write!(f, "{}", diags.join("\n")),
        }
    }
}

impl std::error::Error for ConfigError {}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Parse and check everything except the presence of a seed, which the
    /// command line may still supply.
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let table: toml::Table = toml::from_str(text).map_err(|e| ConfigError::Invalid(vec![format!("syntax error: {e}")]))?;
        let mut diags = Vec::new();
        let config = parse_table(&table, &mut diags);
        match config {
            Some(c) if diags.is_empty() => Ok(c),
            _ => Err(ConfigError::Invalid(diags)),
        }
    }

    /// Parameter value with defaults applied.
    pub fn param(&self, name: &str) -> f64 {
        self.params[name]
    }

    pub fn count(&self, name: &str) -> usize {
        self.params[name] as usize
    }
}

/// All diagnostics for a config text, including a missing seed.
pub fn validate_str(text: &str) -> Vec<String> {
    match Config::from_toml_str(text) {
        Ok(c) if c.scenario.stochastic() && c.seed.is_none() => {
            vec![format!("seed is required for scenario `{}`", c.scenario)]
        }
        Ok(_) => Vec::new(),
        Err(ConfigError::Invalid(d)) => d,
        Err(e) => vec![e.to_string()],
    }
}

pub fn validate_path(path: &Path) -> Result<Vec<String>, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
    Ok(validate_str(&text))
}

fn as_f64(v: &toml::Value) -> Option<f64> {
    match v {
        toml::Value::Float(f) => Some(*f),
        toml::Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

fn parse_table(table: &toml::Table, diags: &mut Vec<String>) -> Option<Config> {
    for key in table.keys() {
        if !TOP_LEVEL_KEYS.contains(&key.as_str()) {
            diags.push(format!("unknown key `{key}`"));
        }
    }
    match table.get("schema_version") {
        None => diags.push("missing required key `schema_version`".into()),
        Some(toml::Value::Integer(v)) if *v == SCHEMA_VERSION => {}
        Some(v) => diags.push(format!("schema_version must be {SCHEMA_VERSION}, found {v}")),
    }
    let scenario = match table.get("scenario") {
        None => {
            diags.push("missing required key `scenario`".into());
            None
        }
        Some(toml::Value::String(s)) => {
            let found = Scenario::from_name(s);
            if found.is_none() {
                diags.push(format!("unknown scenario `{s}`"));
            }
            found
        }
        Some(_) => {
            diags.push("scenario must be a string".into());
            None
        }
    };
    let seed = match table.get("seed") {
        None => None,
        Some(toml::Value::Integer(i)) if *i >= 0 => Some(*i as u64),
        Some(_) => {
            diags.push("seed must be a non-negative integer".into());
            None
        }
    };
    let dt = match table.get("dt") {
        None => None,
        Some(v) => match as_f64(v) {
            Some(x) if x > 0.0 && x.is_finite() => Some(x),
            Some(_) => {
                diags.push("dt must be positive".into());
                None
            }
            None => {
                diags.push("dt must be a number".into());
                None
            }
        },
    };
    let steps = match table.get("steps") {
        None => None,
        Some(toml::Value::Integer(i)) if *i >= 1 => Some(*i as usize),
        Some(_) => {
            diags.push("steps must be a positive integer".into());
            None
        }
    };
    let (output_dir, format) = parse_output(table.get("output"), diags);
    let scenario = scenario?;
    let params = parse_params(scenario, table.get("params"), diags);
    Some(Config {
        scenario,
        seed,
        dt: dt.unwrap_or_else(|| scenario.default_dt()),
        steps: steps.unwrap_or_else(|| scenario.default_steps()),
        params,
        output_dir,
        format,
    })
}

fn parse_output(value: Option<&toml::Value>, diags: &mut Vec<String>) -> (Option<PathBuf>, Format) {
    let Some(value) = value else {
        return (None, Format::default());
    };
    let Some(table) = value.as_table() else {
        diags.push("output must be a table".into());
        return (None, Format::default());
    };
    for key in table.keys() {
        if !OUTPUT_KEYS.contains(&key.as_str()) {
            diags.push(format!("unknown key `output.{key}`"));
        }
    }
    let dir = match table.get("dir") {
        None => None,
        Some(toml::Value::String(s)) => Some(PathBuf::from(s)),
        Some(_) => {
            diags.push("output.dir must be a string".into());
            None
        }
    };
    let format = match table.get("format") {
        None => Format::default(),
        Some(toml::Value::String(s)) => Format::from_name(s).unwrap_or_else(|| {
            diags.push(format!("output.format must be \"csv\" or \"jsonl\", found \"{s}\""));
            Format::default()
        }),
        Some(_) => {
            diags.push("output.format must be a string".into());
            Format::default()
        }
    };
    (dir, format)
}

fn parse_params(scenario: Scenario, value: Option<&toml::Value>, diags: &mut Vec<String>) -> BTreeMap<String, f64> {
    let specs = scenario.params();
    let empty = toml::Table::new();
    let table = match value {
        None => &empty,
        Some(v) => match v.as_table() {
            Some(t) => t,
            None => {
                diags.push("params must be a table".into());
                &empty
            }
        },
    };
    for key in table.keys() {
        if !specs.iter().any(|s| s.name == key) {
            diags.push(format!("unknown key `params.{key}` for scenario `{scenario}`"));
        }
    }
    let mut out = BTreeMap::new();
    for spec in specs {
        let value = match table.get(spec.name) {
            Some(v) => match as_f64(v) {
                Some(x) => x,
                None => {
                    diags.push(format!("params.{} must be a number", spec.name));
                    continue;
                }
            },
            None => match spec.default {
                Some(d) => d,
                None => {
                    diags.push(format!("missing required parameter `params.{}` for scenario `{scenario}`", spec.name));
                    continue;
                }
            },
        };
        if let Some(problem) = check(spec.check, value) {
            diags.push(format!("params.{} {problem}", spec.name));
            continue;
        }
        out.insert(spec.name.to_string(), value);
    }
    out
}

fn check(c: Check, x: f64) -> Option<&'static str> {
    if !x.is_finite() {
        return Some("must be finite");
    }
    match c {
        Check::Any => None,
        Check::Positive if x <= 0.0 => Some("must be positive"),
        Check::NonNegative if x < 0.0 => Some("must be non-negative"),
        Check::Probability if !(0.0..=1.0).contains(&x) => Some("must be in [0, 1]"),
        Check::PositiveProbability if !(x > 0.0 && x <= 1.0) => Some("must be in (0, 1]"),
        Check::Count if x < 1.0 || x.fract() != 0.0 => Some("must be a positive integer"),
        _ => None,
    }
}
