use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use llg_core::config::ConfigMap;
use llg_core::experiments::{self, ConvergenceParams, CubeParams, Mumag5Params};
use llg_core::Error;

/// Finite element LLG simulator: magnetization dynamics with an
/// implicit-explicit midpoint integrator and FEM-BEM stray field.
#[derive(Parser, Debug)]
#[command(name = "llg", version, about)]
struct Cli {
    /// Experiment to run: cube | convergence | mumag5 | custom
    experiment: String,

    /// Config file with `key = value` lines; command-line flags override it.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Treatment of the lower-order field terms: mp | ab | ee
    #[arg(long)]
    strategy: Option<String>,

    /// Time-step size (nondimensional; for mumag5 this overrides k_ps in ps).
    #[arg(long)]
    k: Option<f64>,

    /// Output directory (default: `out_<experiment>`).
    #[arg(long)]
    out: Option<PathBuf>,

    /// Worker thread budget; accepted for interface stability, the current
    /// build computes single-threaded.
    #[arg(long)]
    threads: Option<usize>,
}

fn run(cli: &Cli) -> Result<String, Error> {
    let mut cfg = match &cli.config {
        Some(path) => ConfigMap::load(path)?,
        None => ConfigMap::default(),
    };
    if let Some(s) = &cli.strategy {
        cfg.set("strategy", s);
    }
    if let Some(k) = cli.k {
        match cli.experiment.as_str() {
            "mumag5" => cfg.set("k_ps", k),
            _ => cfg.set("k", k),
        }
    }
    if let Some(t) = cli.threads {
        if t < 1 {
            return Err(Error::config("--threads must be at least 1"));
        }
        cfg.set("threads", t);
    }

    let out_dir = cli
        .out
        .clone()
        .or_else(|| cfg.get_str("out").map(PathBuf::from))
        .unwrap_or_else(|| experiments::default_out_dir(&cli.experiment));

    let summary = match cli.experiment.as_str() {
        "cube" => {
            let params = CubeParams::from_config(&cfg)?;
            experiments::run_cube(&params, &out_dir)?.summary
        }
        "convergence" => {
            let params = ConvergenceParams::from_config(&cfg)?;
            experiments::run_convergence(&params, &out_dir)?.summary
        }
        "mumag5" => {
            let params = Mumag5Params::from_config(&cfg)?;
            experiments::run_mumag5(&params, &out_dir)?.summary
        }
        "custom" => experiments::run_custom(&cfg, &out_dir)?.summary,
        other => {
            return Err(Error::config(format!(
                "unknown experiment `{other}` (expected cube, convergence, mumag5 or custom)"
            )))
        }
    };
    Ok(format!("{summary}\noutputs in {}", out_dir.display()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::Config(_) | Error::Parse { .. } | Error::InvalidInput(_) => 2,
                _ => 3,
            };
            ExitCode::from(code)
        }
    }
}
