use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use estkit_cli::config::{validate_path, ConfigError};
use estkit_cli::{exit, execute, resolve_out_dir, scenario_listing, Config, Format, RunOptions, OUT_DIR_ENV};

#[derive(Parser)]
#[command(name = "estkit", version, about = "Run estimation and fusion scenarios from TOML configs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario, write its trace and print a JSON summary.
    Run {
        config: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; takes precedence over ESTKIT_OUT_DIR and the config.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<FormatArg>,
    },
    /// Check a config and list every problem found.
    Validate { config: PathBuf },
    /// Show the available scenarios and their parameters.
    ListScenarios,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Jsonl,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Jsonl => Format::Jsonl,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    ExitCode::from(match cli.command {
        Command::Run { config, seed, out, format } => run(&config, seed, out, format),
        Command::Validate { config } => validate(&config),
        Command::ListScenarios => {
            print!("{}", scenario_listing());
            exit::OK
        }
    })
}

fn run(path: &Path, seed: Option<u64>, out: Option<PathBuf>, format: Option<FormatArg>) -> u8 {
    let cfg = match Config::load(path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return exit::CONFIG;
        }
    };
    let env = std::env::var(OUT_DIR_ENV).ok();
    let dir = resolve_out_dir(out.as_deref(), env.as_deref(), cfg.output_dir.as_deref());
    let opts = RunOptions { seed, format: format.map(Format::from) };
    match execute(&cfg, &opts, &dir) {
        Ok(report) => {
            if let Some(msg) = &report.output.failure {
                eprintln!("{msg}");
            }
            println!("{}", serde_json::to_string_pretty(&report.summary).expect("summary serializes"));
            report.exit_code
        }
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

fn validate(path: &Path) -> u8 {
    match validate_path(path) {
        Ok(diags) if diags.is_empty() => {
            println!("{}: ok", path.display());
            exit::OK
        }
        Ok(diags) => {
            for d in diags {
                println!("{}: {d}", path.display());
            }
            exit::CONFIG
        }
        Err(ConfigError::Io(msg)) => {
            eprintln!("{msg}");
            exit::IO
        }
        Err(e) => {
            eprintln!("{e}");
            exit::CONFIG
        }
    }
}
