//! `technet`: patent records to technology networks, linkage regressors,
//! panel estimates and event studies, one cached stage at a time.

mod config;
mod manifest;
mod stages;
mod svg;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;
use technet::corpus::write_records;
use technet::{Error, Result};

use config::RunConfig;
use manifest::{RunManifest, Stage, StageRecord};
use stages::StageIo;

#[derive(Debug, Parser)]
#[command(
    name = "technet",
    version,
    about = "Technology-network linkage pipeline"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for parallel sections.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Root seed, overriding the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Re-run every upstream stage first instead of requiring fresh outputs.
    #[arg(long, global = true)]
    from_scratch: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate records and build sector-year cells and citation flows.
    Ingest,
    /// Build the TF-IDF document-term matrix.
    Text,
    /// Yearly text-similarity, citation-share and counterfactual matrices.
    Network,
    /// Centrality measures and latent factor on the pruned text networks.
    Centrality,
    /// Direct, indirect and network linkage regressors.
    Linkage,
    /// Panel assembly and linkage regressions.
    Estimate,
    /// Peak-increase events and local projections.
    Events,
    /// Descriptive statistics, correlations and Leontief diagnostics.
    Report,
    /// Sum the yearly networks into one graph (CSV edge list and SVG).
    Merge,
    /// Every pipeline stage from ingest to report.
    Run,
    /// Write the configured synthetic corpus as JSONL.
    Synth {
        #[arg(long)]
        out: PathBuf,
    },
}

fn execute(stage: Stage, cfg: &RunConfig, dir: &Path, check: bool) -> Result<()> {
    let mut manifest = RunManifest::load_or_new(dir, cfg)?;
    if check {
        manifest.check_upstream(stage, dir, cfg)?;
    }
    let own = dir.join(stage.name());
    if own.exists() {
        std::fs::remove_dir_all(&own)?;
    }
    manifest.stages.retain(|r| r.stage != stage);
    manifest.save(dir)?;

    let mut io = StageIo::new(cfg, dir);
    stages::run(stage, &mut io)?;
    info!("stage {stage}: {} outputs", io.outputs.len());
    manifest.inputs.extend(io.external);
    manifest.record(
        StageRecord {
            stage,
            config_digest: stage.config_digest(cfg),
            inputs: io.inputs,
            outputs: io.outputs,
        },
        cfg,
    );
    manifest.save(dir)
}

fn real_main(cli: Cli) -> Result<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .map_err(|e| Error::input(e.to_string()))?;
    }
    let stage = match cli.command {
        Command::Synth { out } => {
            let mut buf = Vec::new();
            write_records(&mut buf, &stages::synthetic_records(&cfg))?;
            std::fs::write(&out, buf)?;
            return Ok(());
        }
        Command::Run => None,
        Command::Ingest => Some(Stage::Ingest),
        Command::Text => Some(Stage::Text),
        Command::Network => Some(Stage::Network),
        Command::Centrality => Some(Stage::Centrality),
        Command::Linkage => Some(Stage::Linkage),
        Command::Estimate => Some(Stage::Estimate),
        Command::Events => Some(Stage::Events),
        Command::Report => Some(Stage::Report),
        Command::Merge => Some(Stage::Merge),
    };
    let dir = cfg.cache_dir();
    std::fs::create_dir_all(&dir)?;
    match stage {
        None => {
            for s in Stage::PIPELINE {
                execute(s, &cfg, &dir, true)?;
            }
        }
        Some(s) if cli.from_scratch => {
            for up in s.ancestors() {
                execute(up, &cfg, &dir, false)?;
            }
            execute(s, &cfg, &dir, false)?;
        }
        Some(s) => execute(s, &cfg, &dir, true)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match real_main(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
