mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Params;
use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::output::{Output, Provenance};

#[derive(Parser)]
#[command(name = "giet", version, about = "Renormalization experiments for generalized interval exchange maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Directory for result files; created if missing.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    depth: Option<usize>,
    /// Overrides the config and GIET_PRECISION_BITS.
    #[arg(long)]
    precision_bits: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Rauzy-Veech renormalization trace of the first map.
    Renormalize(Common),
    /// Affine model of the first map and its distance series.
    AffineModel(Common),
    /// Conjugacy and rigidity diagnostics for a pair of maps.
    Rigidity {
        #[command(flatten)]
        common: Common,
        /// Also build the strong affine models.
        #[arg(long)]
        linearize: bool,
    },
    /// Exact cocycle identities, hyperbolicity and central space of a path.
    CocycleAudit(Common),
}

fn run(cli: Cli) -> Result<(), (CliError, Option<Output>)> {
    let (common, linearize) = match &cli.command {
        Command::Renormalize(c) | Command::AffineModel(c) | Command::CocycleAudit(c) => (c, false),
        Command::Rigidity { common, linearize } => (common, *linearize),
    };
    let text = std::fs::read_to_string(&common.config)
        .map_err(|e| (CliError::Config(format!("{}: {e}", common.config.display())), None))?;
    let config = ExperimentConfig::parse(&text).map_err(|e| (e, None))?;
    let prec = config.precision(common.precision_bits).map_err(|e| (e, None))?;
    let params = Params {
        depth: common.depth.or(config.depth),
        prec,
        seed: common.seed.or(config.rng_seed).unwrap_or(0),
        linearize,
    };
    let mut out = Output::new(&common.out, Provenance::new(&text, prec)).map_err(|e| (e, None))?;
    let result = match &cli.command {
        Command::Renormalize(_) => commands::renormalize(&config, &params, &mut out),
        Command::AffineModel(_) => commands::affine_model(&config, &params, &mut out),
        Command::Rigidity { .. } => commands::rigidity(&config, &params, &mut out),
        Command::CocycleAudit(_) => commands::cocycle_audit(&config, &params, &mut out),
    };
    result.map_err(|e| (e, Some(out)))
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err((e, out)) => {
            let detail = e.detail();
            if let Some(mut out) = out {
                let _ = out.json("error.json", &detail);
            }
            eprintln!("{}", serde_json::to_string(&detail).unwrap_or_else(|_| e.to_string()));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
