use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use tailsim::config::{parse_config, ExperimentKind};
use tailsim::runner::run_experiment;

/// Simulation and estimation toolkit for stationary measures of
/// contracting-on-average random Lipschitz systems.
#[derive(Parser)]
#[command(name = "tailsim", version, about)]
struct Cli {
    /// Experiment to run: chi, moment, lyapunov, sample, tail, ldp, rate,
    /// entropy, lowerbound or diagnose. Overrides the config's kind.
    experiment: String,
    /// TOML experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to $TAILSIM_OUT or ./tailsim-out.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker thread count; affects speed only, never results. 0 = auto.
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> tailsim::Result<u8> {
    let kind = ExperimentKind::parse(&cli.experiment)?;
    let document = std::fs::read_to_string(&cli.config)?;
    let mut config = parse_config(&document)?;
    config.experiment = kind;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let out_dir = cli
        .out
        .or_else(|| std::env::var_os("TAILSIM_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("tailsim-out"));
    let status = run_experiment(&config, &out_dir, cli.threads)?;
    for line in std::fs::read_to_string(out_dir.join("results.txt"))?.lines() {
        println!("{line}");
    }
    Ok(status.code() as u8)
}
