//! Command-line front end: optimum response-surface designs, efficiency
//! tables and prediction-variance graph data.
//!
//! Exit codes: 0 success, 2 configuration or input error, 3 infeasible
//! search, 4 contract violation (e.g. interval graphs without pure error).
//! Worker threads honor `RAYON_NUM_THREADS`.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::*;

#[derive(Parser)]
#[command(
    name = "rsdesign",
    version,
    about = "Optimum exact designs for second-order response-surface models",
    after_help = "Set RAYON_NUM_THREADS to bound the worker pool."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Search for an optimum design by candidate-set point exchange.
    Optimize {
        /// TOML run configuration.
        #[arg(long, short = 'c')]
        config: PathBuf,
        /// Output design CSV.
        #[arg(long, short = 'o', default_value = "design.csv")]
        out: PathBuf,
        /// Also write the text report to this file.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Override the configured seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the configured number of starts.
        #[arg(long)]
        starts: Option<usize>,
        /// Override every interval significance level.
        #[arg(long)]
        alpha: Option<f64>,
        /// Suppress per-start progress lines on standard error.
        #[arg(long, short = 'q')]
        quiet: bool,
    },
    /// Evaluate designs and print an efficiency table.
    Evaluate {
        #[arg(long, short = 'c')]
        config: PathBuf,
        /// Design CSV files to compare.
        #[arg(required = true)]
        designs: Vec<PathBuf>,
        /// Output file (default: standard output).
        #[arg(long, short = 'o')]
        out: Option<PathBuf>,
        /// Output format: text or csv.
        #[arg(long, default_value = "text")]
        format: String,
        /// External optimum value `key=value` (keys: ds dps as aps i ip id
        /// idp); efficiencies are computed against it instead of the in-set
        /// maximum. Repeatable.
        #[arg(long)]
        reference: Vec<String>,
        /// Keep published coordinates as-is instead of snapping to the
        /// sphere grid.
        #[arg(long)]
        no_snap: bool,
        /// Override every interval significance level.
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Generate VDG/DVDG/FDS/DFDS plot data for one design.
    Graph {
        #[arg(long, short = 'c')]
        config: PathBuf,
        /// Design CSV file.
        #[arg(long, short = 'd')]
        design: PathBuf,
        /// Graph variant: vdg, dvdg, fds or dfds (overrides the config).
        #[arg(long)]
        variant: Option<String>,
        /// Output file (default: standard output).
        #[arg(long, short = 'o')]
        out: Option<PathBuf>,
        /// Override the configured graph seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Interval variant at this significance level.
        #[arg(long)]
        alpha: Option<f64>,
        /// Keep published coordinates as-is instead of snapping to the
        /// sphere grid.
        #[arg(long)]
        no_snap: bool,
    },
    /// Check central composite designs for I_D-optimality over the
    /// sphere-projected 3^q candidate set.
    VerifyCcd {
        /// Factor count, 3..6 (5 and 6 use the half-replicate factorial).
        #[arg(long)]
        q: usize,
        /// Inclusive run-count range, e.g. 16..21 or a single value.
        #[arg(long)]
        n: Option<String>,
        /// Inclusive center-run range as an alternative to --n.
        #[arg(long)]
        centers: Option<String>,
        #[arg(long, default_value_t = 100)]
        starts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Emit per-start progress lines on standard error.
        #[arg(long)]
        progress: bool,
    },
    /// Dump the candidate set for the configured region.
    Candidates {
        #[arg(long, short = 'c')]
        config: PathBuf,
        /// Output file (default: standard output).
        #[arg(long, short = 'o')]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Optimize {
            config,
            out,
            report,
            seed,
            starts,
            alpha,
            quiet,
        } => cmd_optimize(OptimizeArgs {
            config,
            out,
            report,
            seed,
            starts,
            alpha,
            quiet,
        }),
        Command::Evaluate {
            config,
            designs,
            out,
            format,
            reference,
            no_snap,
            alpha,
        } => cmd_evaluate(EvaluateArgs {
            config,
            designs,
            out,
            format,
            reference,
            no_snap,
            alpha,
        }),
        Command::Graph {
            config,
            design,
            variant,
            out,
            seed,
            alpha,
            no_snap,
        } => cmd_graph(GraphArgs {
            config,
            design,
            variant,
            out,
            seed,
            alpha,
            no_snap,
        }),
        Command::VerifyCcd {
            q,
            n,
            centers,
            starts,
            seed,
            progress,
        } => cmd_verify_ccd(VerifyCcdArgs {
            q,
            n_range: n,
            center_range: centers,
            starts,
            seed,
            progress,
        }),
        Command::Candidates { config, out } => cmd_candidates(CandidatesArgs { config, out }),
    }
}

/// Exit-code mapping for library errors surfaced through anyhow.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(lib) = cause.downcast_ref::<rsdesign::Error>() {
            return match lib {
                rsdesign::Error::Infeasible(_) => 3,
                rsdesign::Error::NoPureError(_) => 4,
                _ => 2,
            };
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
