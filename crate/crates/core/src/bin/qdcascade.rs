use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qdcascade::scenarios::{apply_override, config_from_table, list_scenarios, parse_table, run_scenario, validate_config};
use qdcascade::{Error, Result};

/// Seeded reproductions of the cascaded quantum-dot measurements.
#[derive(Debug, Parser)]
#[command(name = "qdcascade", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one scenario and write CSV data plus summary.json.
    Run {
        #[arg(long)]
        scenario: Option<String>,
        /// Base config file (TOML); command-line flags take precedence.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, env = "QDCASCADE_OUT", default_value = "qdcascade-out")]
        out: PathBuf,
        /// Override a config key, e.g. `--set target.gamma=1.5`. Repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Main ensemble size, e.g. pulses or trajectories.
        #[arg(long)]
        shots: Option<u64>,
    },
    /// Print registered scenarios.
    List,
    /// Check a config file and print it with defaults resolved.
    Validate { file: PathBuf },
}

fn read(path: &PathBuf) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::List => {
            for (name, desc) in list_scenarios() {
                println!("{name:<24}{desc}");
            }
        }
        Command::Validate { file } => {
            let cfg = validate_config(&read(&file)?)?;
            print!("{}", cfg.to_toml()?);
        }
        Command::Run { scenario, config, seed, out, set, shots } => {
            let mut table = match &config {
                Some(p) => parse_table(&read(p)?)?,
                None => toml::Table::new(),
            };
            if let Some(s) = scenario {
                table.insert("scenario".into(), toml::Value::String(s));
            }
            if !table.contains_key("scenario") {
                return Err(Error::Config("scenario: required (--scenario NAME or a config file)".into()));
            }
            if let Some(s) = seed {
                let v = i64::try_from(s).map_err(|_| Error::Config(format!("master_seed = {s}: must be < 2^63")))?;
                table.insert("master_seed".into(), toml::Value::Integer(v));
            }
            if let Some(n) = shots {
                let v = i64::try_from(n).map_err(|_| Error::Config(format!("shots = {n}: must be < 2^63")))?;
                table.insert("shots".into(), toml::Value::Integer(v));
            }
            for a in &set {
                apply_override(&mut table, a)?;
            }
            let cfg = config_from_table(table)?;
            let report = run_scenario(&cfg, &out)?;
            let text = serde_json::to_string_pretty(&report.summary).map_err(|e| Error::Runtime(e.to_string()))?;
            println!("{text}");
            eprintln!("{}: {} files in {}", report.scenario, report.files.len(), report.dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}
