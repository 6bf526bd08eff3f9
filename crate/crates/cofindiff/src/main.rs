use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use cofindiff::config::parse_config;
use cofindiff::error::AppError;
use cofindiff::stages::{run_stage, Stage};

/// Controllable financial time-series generation pipeline.
#[derive(Parser, Debug)]
#[command(name = "cofindiff", version, about)]
struct Cli {
    /// Pipeline stage: ingest, fit-diffusion, fit-gan, generate,
    /// eval-stylized, eval-conditions, eval-diversity, hedge-train,
    /// hedge-eval, report.
    stage: String,

    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,

    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Override the configured output directory
    /// (also settable via COFINDIFF_OUT).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(cli: &Cli) -> Result<(), AppError> {
    let stage = Stage::parse(&cli.stage).ok_or_else(|| {
        AppError::Validation(vec![format!(
            "unknown stage '{}'; expected one of: {}",
            cli.stage,
            Stage::ALL
                .iter()
                .map(|s| s.name())
                .collect::<Vec<_>>()
                .join(", ")
        )])
    })?;
    let mut cfg = parse_config(&cli.config)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    } else if let Ok(out) = std::env::var("COFINDIFF_OUT") {
        cfg.out_dir = PathBuf::from(out);
    }
    let manifest = run_stage(stage, &cfg)?;
    log::info!(
        "{} finished in {:.1}s; {} output(s) under {}",
        manifest.stage,
        manifest.elapsed_secs,
        manifest.outputs.len(),
        cfg.out_dir.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
