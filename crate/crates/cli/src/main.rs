use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use helflow_cli::commands::{
    analyze, oracle_table, simulate_many, validate_operators, EXIT_DEGENERATE, EXIT_FAILURE, EXIT_SUCCESS,
};
use helflow_cli::config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "helflow", version, about = "Constrained Willmore / Helfrich flow of triangle surfaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one or more experiment configs and write their artifacts.
    Simulate {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
        /// Worker threads for independent configs.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Refinement study of the discrete operators and quadrature identities.
    ValidateOperators {
        #[arg(long, value_delimiter = ',', default_value = "2,3,4")]
        levels: Vec<usize>,
        /// Also write the JSON report to this file.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Exact round-sphere trajectory, extinction time and theorem bound.
    Oracle {
        #[arg(long)]
        rho0: f64,
        #[arg(long, allow_hyphen_values = true)]
        lambda1: f64,
        #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
        lambda2: f64,
        #[arg(long, default_value_t = 10)]
        rows: usize,
        /// Print JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Audit a trajectory CSV and optionally rescale its snapshots.
    Analyze {
        trajectory: PathBuf,
        /// Snapshot directory for the blowup report.
        #[arg(long)]
        blowup: Option<PathBuf>,
        /// Also audit ∫|A°|² monotonicity and the Li–Yau flag.
        #[arg(long)]
        theorem_mode: bool,
        /// Trailing snapshots used for the blowup report.
        #[arg(long, default_value_t = 4)]
        late: usize,
    },
}

fn simulate_cmd(configs: &[PathBuf], jobs: usize) -> i32 {
    let mut runs = Vec::new();
    for path in configs {
        match ExperimentConfig::load(path).and_then(|c| c.validate().map(|_| c)) {
            Ok(cfg) => {
                let dir = cfg.resolved_output_dir();
                runs.push((cfg, dir));
            }
            Err(e) => {
                eprintln!("error: {}: {e:#}", path.display());
                return EXIT_FAILURE;
            }
        }
    }
    let mut code = EXIT_SUCCESS;
    for ((cfg, dir), result) in runs.iter().zip(simulate_many(&runs, jobs)) {
        match result {
            Ok(report) => {
                println!(
                    "{}: {:?} after {} steps, t = {:.6}, extinction {:?}; report {}",
                    cfg.name,
                    report.termination,
                    report.steps,
                    report.final_time,
                    report.extinction_time,
                    report.artifacts.report.display()
                );
                code = code.max(report.exit_code());
            }
            Err(e) => {
                eprintln!("error: {} ({}): {e:#}", cfg.name, dir.display());
                code = code.max(EXIT_FAILURE);
            }
        }
    }
    code
}

fn run(cli: Cli) -> Result<i32> {
    Ok(match cli.command {
        Command::Simulate { configs, jobs } => simulate_cmd(&configs, jobs),
        Command::ValidateOperators { levels, output } => {
            let report = validate_operators(&levels)?;
            let text = serde_json::to_string_pretty(&report)?;
            if let Some(path) = output {
                std::fs::write(path, &text)?;
            }
            println!("{text}");
            for c in report.checks.iter().filter(|c| !c.passed) {
                eprintln!("failed: {} ({})", c.name, c.detail);
            }
            if report.passed() {
                EXIT_SUCCESS
            } else {
                EXIT_FAILURE
            }
        }
        Command::Oracle {
            rho0,
            lambda1,
            lambda2,
            rows,
            json,
        } => {
            let table = oracle_table(rho0, lambda1, lambda2, rows)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&table)?);
            } else {
                print!("{}", table.render());
            }
            EXIT_SUCCESS
        }
        Command::Analyze {
            trajectory,
            blowup,
            theorem_mode,
            late,
        } => {
            let report = analyze(&trajectory, blowup.as_deref(), theorem_mode, late)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            if report.passed() {
                EXIT_SUCCESS
            } else {
                EXIT_FAILURE
            }
        }
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let code = match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_FAILURE
        }
    };
    debug_assert!(code == EXIT_SUCCESS || code == EXIT_FAILURE || code == EXIT_DEGENERATE);
    ExitCode::from(code as u8)
}
