use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rhm_core::SigmaSpec;

mod commands;
mod config;
mod error;
mod output;

use config::{ExperimentKind, HullConfig, MethodName, RunConfig};
use error::CliError;

/// Projection regularization with risk hull and unbiased risk bandwidth choice.
///
/// Exit codes: 0 success, 1 numerical failure, 2 invalid config or input,
/// 3 I/O error or unusable hull cache, 4 hull table required but absent.
#[derive(Debug, Parser)]
#[command(name = "rhm", version)]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for experiments and hull tables.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Ignore cached hull tables and rebuild them.
    #[arg(long, global = true)]
    rebuild: bool,
    /// Power-law spectrum exponent (sigma_k = epsilon k^beta).
    #[arg(long, global = true)]
    beta: Option<f64>,
    /// Power-law noise level.
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Monte Carlo samples for hull tables.
    #[arg(long, global = true)]
    samples: Option<usize>,
    #[arg(long, global = true)]
    reps: Option<usize>,
    /// Largest bandwidth considered by experiments and hull tables.
    #[arg(long, global = true)]
    n_max: Option<usize>,
    /// Comma-separated methods: ure, rhm.
    #[arg(long, global = true, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build (or reuse) hull tables for the configured spectra.
    Hull,
    /// Choose bandwidths for a CSV of (k, y) observations.
    Select {
        data: PathBuf,
        /// Hull table JSON to use for the rhm method.
        #[arg(long)]
        hull: Option<PathBuf>,
    },
    /// Run the configured experiment.
    Bench {
        /// Experiment kind: stem, ratio, efficiency or select.
        #[arg(long)]
        kind: Option<String>,
    },
}

fn parse_kind(s: &str) -> Result<ExperimentKind, CliError> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| CliError::Config(format!("--kind: unknown experiment kind `{s}`")))
}

fn parse_method(s: &str) -> Result<MethodName, CliError> {
    serde_json::from_value(serde_json::Value::String(s.trim().to_string()))
        .map_err(|_| CliError::Config(format!("--methods: unknown method `{s}`")))
}

fn resolve_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut config = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?;
            RunConfig::from_json(&text)?
        }
        None => RunConfig::default(),
    };
    if cli.beta.is_some() || cli.epsilon.is_some() {
        let (eps0, beta0) = match &config.problem {
            Some(SigmaSpec::PowerLaw { epsilon, beta }) => (*epsilon, *beta),
            _ => (1.0, 0.0),
        };
        config.problem = Some(SigmaSpec::PowerLaw {
            epsilon: cli.epsilon.unwrap_or(eps0),
            beta: cli.beta.unwrap_or(beta0),
        });
    }
    if let Some(seed) = cli.seed {
        config.experiment.seed = seed;
        if let Some(h) = config.hull.as_mut() {
            h.seed = seed;
        }
    }
    if let Some(samples) = cli.samples {
        config.hull.get_or_insert_with(HullConfig::default).samples = samples;
        if let (Some(seed), Some(h)) = (cli.seed, config.hull.as_mut()) {
            h.seed = seed;
        }
    }
    if let Some(alpha) = cli.alpha {
        config.selector.alpha = alpha;
    }
    if let Some(reps) = cli.reps {
        config.experiment.reps = reps;
    }
    if let Some(n) = cli.n_max {
        config.experiment.n_max = Some(n);
    }
    if let Some(methods) = &cli.methods {
        config.selector.methods = methods.iter().map(|m| parse_method(m)).collect::<Result<_, _>>()?;
    }
    if let Some(out) = &cli.out {
        config.output.dir = out.clone();
    }
    if let Command::Bench { kind: Some(kind) } = &cli.command {
        config.experiment.kind = parse_kind(kind)?;
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let config = resolve_config(cli)?;
    match &cli.command {
        Command::Hull => commands::cmd_hull(&config, cli.rebuild),
        Command::Select { data, hull } => commands::cmd_select(&config, data, hull.as_deref(), cli.rebuild),
        Command::Bench { .. } => commands::cmd_bench(&config, cli.rebuild),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.threads {
        Some(0) => Err(CliError::Config("--threads: must be >= 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))
            .and_then(|pool| pool.install(|| run(&cli))),
        None => run(&cli),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("rhm: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
