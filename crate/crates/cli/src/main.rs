//! `ctxql`: run experiment configs, reproduce the bundled tables, or run a
//! changepoint detector on a numeric CSV.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ctxql::changepoint::{detect_rows, read_matrix, DetectorConfig, Method};
use ctxql::config::ExperimentConfig;
use ctxql::eval::run_experiment;
use ctxql::rng::stream;
use ctxql::Execution;

/// Output directory used when `--out` is not given.
const OUT_DIR_VAR: &str = "CTXQL_OUT_DIR";

#[derive(Parser)]
#[command(name = "ctxql", version, about = "Context Q-learning experiments and changepoint detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunOptions {
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the number of Monte Carlo runs.
    #[arg(long)]
    runs: Option<usize>,
    /// Directory for the CSV, JSON and text reports.
    #[arg(long, env = OUT_DIR_VAR, default_value = "results")]
    out: PathBuf,
    /// Run replicates one after another instead of on the thread pool.
    #[arg(long)]
    sequential: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run {
        config: PathBuf,
        #[command(flatten)]
        options: RunOptions,
    },
    /// Detect changepoints in a CSV of numeric rows.
    Detect {
        data: PathBuf,
        #[arg(long, default_value = "odcp")]
        method: Method,
        /// Permutations per significance test.
        #[arg(long)]
        permutations: Option<usize>,
        /// Significance level.
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Shortest segment, in rows.
        #[arg(long, default_value_t = 5)]
        window: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a bundled preset: 1-7, multi-detect or multi-reward.
    Tables {
        id: String,
        #[command(flatten)]
        options: RunOptions,
    },
}

/// Failure classes and their exit codes.
enum Failure {
    /// Bad input: config, flags or data (exit 1).
    Input(String),
    /// Anything after the input was accepted (exit 2).
    Runtime(String),
}

fn preset(id: &str) -> Option<&'static str> {
    Some(match id {
        "1" => include_str!("../../../configs/table1.cfg"),
        "2" => include_str!("../../../configs/table2.cfg"),
        "3" => include_str!("../../../configs/table3.cfg"),
        "4" => include_str!("../../../configs/table4.cfg"),
        "5" => include_str!("../../../configs/table5.cfg"),
        "6" => include_str!("../../../configs/table6.cfg"),
        "7" => include_str!("../../../configs/table7.cfg"),
        "multi-detect" => include_str!("../../../configs/multi_detect.cfg"),
        "multi-reward" => include_str!("../../../configs/multi_reward.cfg"),
        _ => return None,
    })
}

fn execute(mut config: ExperimentConfig, options: &RunOptions) -> Result<(), Failure> {
    if let Some(seed) = options.seed {
        config.seed = seed;
    }
    if let Some(runs) = options.runs {
        config.runs = runs;
    }
    config.validate().map_err(|e| Failure::Input(e.to_string()))?;
    let exec = if options.sequential { Execution::Sequential } else { Execution::Parallel };
    let report = run_experiment(&config, exec).map_err(|e| Failure::Runtime(e.to_string()))?;
    let out = config.output.dir.as_deref().filter(|_| options.out == Path::new("results")).unwrap_or(&options.out);
    let files = report.write_files(out).map_err(|e| Failure::Runtime(format!("{}: {e}", out.display())))?;
    print!("{}", report.render_table());
    for f in files {
        eprintln!("wrote {}", f.display());
    }
    Ok(())
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run { config, options } => {
            let config = ExperimentConfig::load(&config).map_err(|e| Failure::Input(e.to_string()))?;
            execute(config, &options)
        }
        Command::Tables { id, options } => {
            let text = preset(&id).ok_or_else(|| {
                Failure::Input(format!("unknown table id {id:?}; expected 1-7, multi-detect or multi-reward"))
            })?;
            let config = ExperimentConfig::from_toml(text).map_err(|e| Failure::Runtime(e.to_string()))?;
            execute(config, &options)
        }
        Command::Detect { data, method, permutations, alpha, window, seed } => {
            let config = DetectorConfig {
                n_permutations: permutations,
                significance: alpha,
                min_segment: window,
                ..DetectorConfig::default()
            };
            config.validate().map_err(|e| Failure::Input(e.to_string()))?;
            let rows = read_matrix(&data).map_err(|e| Failure::Input(format!("{}: {e}", data.display())))?;
            let mut rng = stream(seed, 0);
            let report = detect_rows(&rows, method, &config, &mut rng).map_err(|e| match e {
                ctxql::Error::Validation(_) | ctxql::Error::Config(_) => Failure::Input(e.to_string()),
                other => Failure::Runtime(other.to_string()),
            })?;
            for c in &report.changes {
                println!("{} {}", c.index, c.p_value);
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
