//! `anchorsync` command-line experiment runner.
//!
//! Exit codes: 0 success, 2 usage or unknown experiment, 3 I/O failure,
//! 4 invalid configuration or override.

use std::path::PathBuf;
use std::process::ExitCode;

use anchorsync::experiments::{run_experiment, ExperimentKind, ExperimentSpec};
use clap::Parser;

#[derive(Debug, Parser)]
#[command(
    name = "anchorsync",
    version,
    about = "Run a synchronization or fusion experiment and write CSV artifacts"
)]
struct Cli {
    /// timing_hist, minmax_delay, sweep_nsigma, sweep_drop, sweep_nodes or fusion_bench
    experiment: String,

    /// TOML file: simulation config for sync experiments, scenario for fusion_bench
    #[arg(long)]
    config: Option<PathBuf>,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Anchors per sweep point, runs for timing_hist/minmax_delay, scene draws for fusion_bench
    #[arg(long)]
    iterations: Option<usize>,

    /// Output directory [default: out/<experiment>]
    #[arg(long)]
    out: Option<PathBuf>,

    /// Parameter override, repeatable
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = parse_kv)]
    set: Vec<(String, String)>,
}

fn parse_kv(s: &str) -> Result<(String, String), String> {
    match s.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
        _ => Err(format!("expected KEY=VALUE, got `{s}`")),
    }
}

fn run(cli: Cli) -> anchorsync::Result<Vec<PathBuf>> {
    let kind: ExperimentKind = cli.experiment.parse()?;
    let out = cli.out.unwrap_or_else(|| PathBuf::from("out").join(kind.as_str()));
    let mut spec = ExperimentSpec::new(kind, out).with_seed(cli.seed);
    if let Some(n) = cli.iterations {
        spec = spec.with_iterations(n);
    }
    if let Some(path) = cli.config {
        spec = spec.with_config(path);
    }
    for (k, v) in cli.set {
        spec = spec.set(&k, v);
    }
    run_experiment(&spec)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
