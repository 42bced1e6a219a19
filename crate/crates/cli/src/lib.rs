//! Batch driver for policy-effect simulation studies.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use policysim_core::dgp::{synthesize_states, DgpError};
use policysim_core::harness::{recompute_metrics, run_study, HarnessError, MANIFEST_FILE, RAW_FILE};
use policysim_core::panel::{load_panel_csv, save_panel_csv, validate_panel, PanelError};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub mod config;
pub mod plot;

pub use config::{parse_config, parse_config_str, ConfigOverrides};
pub use plot::{emit_plot_data, Figure, PlotOutput, PlotSeries};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Metrics { path: PathBuf, message: String },
    #[error("{path} failed validation:\n{report}")]
    InvalidPanel { path: PathBuf, report: String },
    #[error(transparent)]
    Panel(#[from] PanelError),
    #[error(transparent)]
    Dgp(#[from] DgpError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Parser)]
#[command(name = "policysim", version, about = "Monte Carlo comparison of state policy-effect estimators")]
pub struct Cli {
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a panel CSV for balance, sign and adoption problems.
    Validate {
        /// Panel CSV.
        #[arg(long)]
        data: PathBuf,
    },
    /// Run a simulation study.
    Simulate {
        /// Flat JSON config file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Worker threads (overrides the config).
        #[arg(long)]
        threads: Option<usize>,
        /// Output directory (overrides the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Replicates per scenario and treated count (overrides the config).
        #[arg(long)]
        replicates: Option<usize>,
        /// Master seed (overrides the config).
        #[arg(long)]
        seed: Option<u64>,
        /// Panel CSV (overrides the config).
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Recompute metrics files from a raw results file.
    Metrics {
        /// raw_results.csv written by `simulate`.
        #[arg(long)]
        raw: PathBuf,
    },
    /// Append synthetic states to a panel.
    Expand {
        /// Panel CSV.
        #[arg(long)]
        data: PathBuf,
        /// Number of synthetic states to add.
        #[arg(long)]
        n_states: usize,
        /// Seed for the synthesizer.
        #[arg(long)]
        seed: u64,
        /// Output CSV (default: `<input stem>_expanded.csv` beside the input).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write figure data from a metrics file.
    Plot {
        /// metrics_t*.csv written by `simulate` or `metrics`.
        #[arg(long)]
        metrics: PathBuf,
        /// Also render SVG line charts.
        #[arg(long)]
        svg: bool,
        /// Output directory (default: beside the metrics file).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

pub fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Validate { data } => {
            let panel = load_panel_csv(&data)?;
            let report = validate_panel(&panel);
            if !report.ok {
                return Err(CliError::InvalidPanel {
                    path: data,
                    report: report.to_string(),
                });
            }
            log::info!(
                "{}: {} states x {} years, ok",
                data.display(),
                panel.n_states(),
                panel.n_years()
            );
        }
        Command::Simulate {
            config,
            threads,
            out,
            replicates,
            seed,
            data,
        } => {
            let overrides = ConfigOverrides {
                data,
                seed,
                replicates,
                threads,
                output_dir: out,
            };
            let config = parse_config(config.as_deref(), &overrides)?;
            let panel = load_panel_csv(&config.data)?;
            let output = run_study(&config, &panel)?;
            log::info!(
                "wrote {} and {} to {} ({:.1}s)",
                RAW_FILE,
                MANIFEST_FILE,
                config.output_dir.display(),
                output.manifest.wall_clock_seconds
            );
        }
        Command::Metrics { raw } => {
            for path in recompute_metrics(&raw)? {
                log::info!("wrote {}", path.display());
            }
        }
        Command::Expand {
            data,
            n_states,
            seed,
            out,
        } => {
            let panel = load_panel_csv(&data)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let expanded = synthesize_states(&panel, n_states, &mut rng)?;
            let out = out.unwrap_or_else(|| {
                let stem = data.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                parent_dir(&data).join(format!("{stem}_expanded.csv"))
            });
            save_panel_csv(&expanded, &out)?;
            log::info!("wrote {} ({} states)", out.display(), expanded.n_states());
        }
        Command::Plot { metrics, svg, out } => {
            let out = out.unwrap_or_else(|| parent_dir(&metrics));
            let written = emit_plot_data(&metrics, &out, svg)?;
            log::info!(
                "wrote {} files, {} series per figure",
                written.csv.len() + written.svg.len(),
                written.series_per_figure
            );
        }
    }
    Ok(())
}
