mod commands;
mod config;
mod error;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::Config;
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "mide", version, about = "Minimum integrated distance estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// `key = value` configuration file.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; falls back to MIDE_THREADS, then to the machine default.
    #[arg(long)]
    threads: Option<usize>,
    /// Configuration override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Dataset CSV with header x1,...,xL,y1,...,yK.
    #[arg(long, short)]
    input: Option<PathBuf>,
    /// Builtin model: linear, supply_demand or experiment52.
    #[arg(long)]
    model: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate θ for a builtin model.
    Estimate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        /// `lo:step:hi` or a comma list; `;` separates dimensions.
        #[arg(long)]
        grid: Option<String>,
        #[arg(long)]
        objective: Option<String>,
    },
    /// Test independence of x and ε(θ).
    Test {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        /// Comma-separated parameter.
        #[arg(long, allow_hyphen_values = true)]
        theta: Option<String>,
        #[arg(long)]
        draws: Option<usize>,
        #[arg(long)]
        method: Option<String>,
    },
    /// Optimal transport between two point clouds.
    Transport {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        source: Option<PathBuf>,
        #[arg(long)]
        target: Option<PathBuf>,
        #[arg(long)]
        solver: Option<String>,
        #[arg(long)]
        cost: Option<String>,
    },
    /// Simulated design with figures.
    Experiment {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        theta0: Option<f64>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        replications: Option<usize>,
    },
    /// Timings of the main kernels and solvers.
    Bench {
        #[command(flatten)]
        common: Common,
        /// Comma-separated sizes.
        #[arg(long)]
        sizes: Option<String>,
        #[arg(long)]
        repeats: Option<usize>,
    },
}

fn opt<T: ToString>(pairs: &mut Vec<String>, key: &str, value: &Option<T>) {
    if let Some(v) = value {
        pairs.push(format!("{key}={}", v.to_string()));
    }
}

fn path_str(p: &Option<PathBuf>) -> Option<String> {
    p.as_ref().map(|p| p.display().to_string())
}

/// File first, then `--set`, then dedicated flags.
fn load(common: &Common, flags: Vec<String>) -> CliResult<Config> {
    let mut c = match &common.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    c.apply(&common.set)?;
    let mut pairs = Vec::new();
    opt(&mut pairs, "output", &path_str(&common.output));
    opt(&mut pairs, "seed", &common.seed);
    opt(&mut pairs, "threads", &common.threads);
    pairs.extend(flags);
    c.apply(&pairs)?;
    Ok(c)
}

fn data_flags(data: &DataArgs) -> Vec<String> {
    let mut p = Vec::new();
    opt(&mut p, "input", &path_str(&data.input));
    opt(&mut p, "model", &data.model);
    p
}

fn dispatch(command: Command) -> CliResult<()> {
    let (config, run): (Config, fn(&Config) -> CliResult<()>) = match command {
        Command::Estimate {
            common,
            data,
            grid,
            objective,
        } => {
            let mut f = data_flags(&data);
            opt(&mut f, "grid", &grid);
            opt(&mut f, "objective", &objective);
            (load(&common, f)?, commands::estimate)
        }
        Command::Test {
            common,
            data,
            theta,
            draws,
            method,
        } => {
            let mut f = data_flags(&data);
            opt(&mut f, "theta", &theta);
            opt(&mut f, "test.draws", &draws);
            opt(&mut f, "test.method", &method);
            (load(&common, f)?, commands::test)
        }
        Command::Transport {
            common,
            source,
            target,
            solver,
            cost,
        } => {
            let mut f = Vec::new();
            opt(&mut f, "transport.source", &path_str(&source));
            opt(&mut f, "transport.target", &path_str(&target));
            opt(&mut f, "solver", &solver);
            opt(&mut f, "cost", &cost);
            (load(&common, f)?, commands::transport)
        }
        Command::Experiment {
            common,
            theta0,
            n,
            m,
            replications,
        } => {
            let mut f = Vec::new();
            opt(&mut f, "experiment.theta0", &theta0);
            opt(&mut f, "experiment.n", &n);
            opt(&mut f, "experiment.m", &m);
            opt(&mut f, "experiment.replications", &replications);
            (load(&common, f)?, commands::experiment)
        }
        Command::Bench { common, sizes, repeats } => {
            let mut f = Vec::new();
            opt(&mut f, "bench.sizes", &sizes);
            opt(&mut f, "bench.repeats", &repeats);
            (load(&common, f)?, commands::bench)
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = config.threads()? {
        if t == 0 {
            return Err(CliError::config("`threads` must be positive"));
        }
        pool = pool.num_threads(t);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::Numerical(format!("thread pool: {e}")))?;
    pool.install(|| run(&config))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(3) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mide: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
