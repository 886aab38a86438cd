//! Command-line front end for the regional price index pipeline:
//! synthesize markets, estimate index panels, decompose them, and run
//! the downstream analyses. Settings come from an optional TOML config
//! merged with flags (flags win); errors print as one-line JSON on
//! stderr with exit code 2 for input problems and 1 for computation
//! failures.

mod commands;
mod config;
mod error;
mod formats;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{parse_grid_flag, parse_window_flag, PipelineConfig};
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "hpindex", version, about = "Granular repeat-sales price indexes \
with penalized estimation, PCA decomposition, and downstream analyses")]
struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Seed for synthesis and cross-validation shuffling.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for per-batch solves; 0 uses all cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic market with known ground truth.
    Synth(commands::synth::SynthParams),
    /// Estimate the regional index panel from repeat sales.
    Index(IndexFlags),
    /// Decompose the panel into component trends, scores, and variance.
    Pca(PcaFlags),
    /// Downstream analyses over the panel and scores.
    Analyze {
        #[command(subcommand)]
        task: AnalyzeTask,
    },
}

#[derive(Debug, clap::Args)]
struct IndexFlags {
    /// Sales CSV (property_id,price,sale_date,sa2_code,sa4_code[,lat,lon]).
    #[arg(long)]
    sales: Option<PathBuf>,
    /// Adjacency CSV (sa2_code_a,sa2_code_b).
    #[arg(long)]
    adjacency: Option<PathBuf>,
    /// Estimation window, inclusive months.
    #[arg(long, value_name = "START:END")]
    window: Option<String>,
    /// Comma-separated grid for the spatio-temporal penalty weight.
    #[arg(long, value_name = "G1,G2,...")]
    gamma_st_grid: Option<String>,
    /// Comma-separated grid for the trend smoothness penalty weight.
    #[arg(long, value_name = "G1,G2,...")]
    gamma_t_grid: Option<String>,
    /// Cross-validation fold count.
    #[arg(long)]
    folds: Option<usize>,
}

#[derive(Debug, clap::Args)]
struct PcaFlags {
    /// Panel CSV; defaults to <out>/panel.csv.
    #[arg(long)]
    panel: Option<PathBuf>,
    /// Number of components to retain.
    #[arg(long)]
    components: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum AnalyzeTask {
    /// Volume-weighted mean scores per city group, sorted by component 2.
    CityMeans(commands::analyze::CityMeansArgs),
    /// Spearman correlation of a covariate with each component score.
    CovariateCorr(commands::analyze::CovariateCorrArgs),
    /// Word-frequency correlations with one component's scores.
    WordCorr(commands::analyze::WordCorrArgs),
    /// Volume-weighted composite index of the top-scoring regions.
    Composite(commands::analyze::CompositeArgs),
    /// Two rebased segments aligned on a years-elapsed axis.
    Overlay(commands::analyze::OverlayArgs),
    /// Deflate a series by CPI and rescale to a base month.
    Deflate(commands::analyze::DeflateArgs),
}

fn real_main() -> Result<(), CliError> {
    let cli = Cli::parse();
    let mut config = PipelineConfig::load(cli.config.as_deref())?;
    if let Some(out) = cli.out {
        config.run.out = out;
    }
    if let Some(seed) = cli.seed {
        config.run.seed = seed;
    }
    if let Some(jobs) = cli.jobs {
        config.run.jobs = jobs;
    }
    match cli.command {
        Command::Synth(params) => commands::synth::run(&config, &params),
        Command::Index(flags) => {
            if let Some(sales) = flags.sales {
                config.inputs.sales = Some(sales);
            }
            if let Some(adjacency) = flags.adjacency {
                config.inputs.adjacency = Some(adjacency);
            }
            if let Some(window) = &flags.window {
                let (start, end) = parse_window_flag(window)?;
                config.window.start = Some(start);
                config.window.end = Some(end);
            }
            if let Some(grid) = &flags.gamma_st_grid {
                config.penalty.gamma_st_grid = parse_grid_flag(grid)?;
            }
            if let Some(grid) = &flags.gamma_t_grid {
                config.penalty.gamma_t_grid = parse_grid_flag(grid)?;
            }
            if let Some(folds) = flags.folds {
                config.penalty.folds = folds;
            }
            commands::index::run(&config)
        }
        Command::Pca(flags) => {
            if let Some(components) = flags.components {
                config.pca.components = components;
            }
            commands::pca::run(&config, flags.panel)
        }
        Command::Analyze { task } => match task {
            AnalyzeTask::CityMeans(args) => commands::analyze::city_means(&config, &args),
            AnalyzeTask::CovariateCorr(args) => {
                commands::analyze::covariate_corr(&config, &args)
            }
            AnalyzeTask::WordCorr(args) => commands::analyze::word_corr(&config, &args),
            AnalyzeTask::Composite(args) => commands::analyze::composite(&config, &args),
            AnalyzeTask::Overlay(args) => commands::analyze::overlay(&config, &args),
            AnalyzeTask::Deflate(args) => commands::analyze::deflate(&config, &args),
        },
    }
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let payload = serde_json::json!({
                "error": { "kind": e.kind(), "message": e.to_string() }
            });
            eprintln!("{payload}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
