//! Batch scenario runner for `estkit`.
//!
//! [`execute`] runs one config end to end: scenario, trace file and the JSON
//! summary that the binary prints.

pub mod config;
pub mod scenarios;
pub mod trace;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

pub use config::{Config, ConfigError, Format, Scenario};
pub use scenarios::{run_scenario, ScenarioError, ScenarioOutput};
pub use trace::TraceRecord;

use serde_json::{json, Value};

/// Environment variable that overrides the output directory of the config.
pub const OUT_DIR_ENV: &str = "ESTKIT_OUT_DIR";
/// Output directory when neither the flag, the environment nor the config name one.
pub const DEFAULT_OUT_DIR: &str = "estkit-out";

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    pub const IO: u8 = 1;
    pub const CONFIG: u8 = 2;
    pub const SCENARIO: u8 = 3;
}

/// Command-line overrides for one run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub format: Option<Format>,
}

/// Output directory by precedence: flag, environment, config, default.
pub fn resolve_out_dir(flag: Option<&Path>, env: Option<&str>, config: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| env.filter(|s| !s.is_empty()).map(PathBuf::from))
        .or_else(|| config.map(Path::to_path_buf))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

#[derive(Debug)]
pub enum RunError {
    Scenario(ScenarioError),
    Io(io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Scenario(ScenarioError::MissingSeed(_) | ScenarioError::Invalid(_)) => exit::CONFIG,
            RunError::Scenario(ScenarioError::Estimation(_)) => exit::SCENARIO,
            RunError::Io(_) => exit::IO,
        }
    }
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Scenario(e) => e.fmt(f),
            RunError::Io(e) => write!(f, "cannot write trace: {e}"),
        }
    }
}

impl std::error::Error for RunError {}

/// Finished run: where the trace went, the summary and the exit code.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub trace_path: PathBuf,
    pub summary: Value,
    pub exit_code: u8,
    pub output: ScenarioOutput,
}

pub fn write_trace(path: &Path, format: Format, records: &[TraceRecord]) -> io::Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    match format {
        Format::Csv => trace::write_csv(&mut w, records)?,
        Format::Jsonl => trace::write_jsonl(&mut w, records)?,
    }
    w.flush()
}

/// Run the scenario, write its trace under `out_dir` and build the summary.
pub fn execute(cfg: &Config, opts: &RunOptions, out_dir: &Path) -> Result<RunReport, RunError> {
    let seed = opts.seed.or(cfg.seed);
    let output = run_scenario(cfg, seed).map_err(RunError::Scenario)?;
    let format = opts.format.unwrap_or(cfg.format);
    let trace_path = out_dir.join(format!("{}.{}", cfg.scenario.name(), format.extension()));
    write_trace(&trace_path, format, &output.records).map_err(RunError::Io)?;
    let (status, exit_code) = match &output.failure {
        None => ("ok", exit::OK),
        Some(_) => ("failure", exit::SCENARIO),
    };
    let summary = json!({
        "scenario": cfg.scenario.name(),
        "seed": seed,
        "status": status,
        "message": output.failure,
        "records": output.records.len(),
        "trace": trace_path.display().to_string(),
        "metrics": output.metrics,
    });
    Ok(RunReport { trace_path, summary, exit_code, output })
}

/// One line per scenario for `list-scenarios`.
pub fn scenario_listing() -> String {
    let mut out = String::new();
    for s in Scenario::ALL {
        let seed = if s.stochastic() { "seeded" } else { "deterministic" };
        out.push_str(&format!("{}  ({seed}, dt {}, steps {})\n    {}\n", s.name(), s.default_dt(), s.default_steps(), s.description()));
        for p in s.params() {
            let default = p.default.map_or_else(|| "required".to_string(), |d| d.to_string());
            out.push_str(&format!("    params.{} = {}  {}\n", p.name, default, p.help));
        }
    }
    out
}
