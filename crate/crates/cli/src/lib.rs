//! `ockelm` command-line tool.
//!
//! Every command is deterministic given its flags and `--seed`; outputs are
//! written atomically.

pub mod commands;
pub mod fsutil;
pub mod model_file;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

/// Usage errors exit with this code; runtime and data errors with 1.
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_FAILURE: i32 = 1;

#[derive(Debug, Parser)]
#[command(name = "ockelm", version, about = "One-class anomaly detection with TGAK kernels and FastICA")]
pub struct Cli {
    /// More log output (repeat for debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelArg {
    Tgak,
    Rbf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GridArg {
    Full,
    Coarse,
}

fn parse_theta(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("theta must lie in (0, 1), got {v}"))
    }
}

fn parse_positive(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("expected a positive finite number, got {v}"))
    }
}

fn parse_triangle(s: &str) -> Result<f64, String> {
    if matches!(s, "inf" | "infinity") {
        return Ok(f64::INFINITY);
    }
    parse_positive(s)
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split a labelled dataset into train (targets only), test and CV outlier pool.
    Split {
        input: PathBuf,
        /// Column holding the class.
        #[arg(long, default_value = "class")]
        label_col: String,
        /// Class value treated as the target (normal) class.
        #[arg(long)]
        target: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Bucket raw telemetry into a labelled fixed-interval dataset.
    Resample {
        /// TOML manifest: optional `fault_time` plus a `[features]` table of name = CSV path.
        manifest: PathBuf,
        #[arg(long, default_value_t = 0.25, value_parser = parse_positive)]
        interval: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a detector on target-class rows.
    Fit {
        train: PathBuf,
        /// Label column in the training file; only `1` rows are used.
        #[arg(long)]
        label_col: Option<String>,
        #[arg(long, value_enum, default_value_t = KernelArg::Tgak)]
        kernel: KernelArg,
        #[arg(long, value_parser = parse_positive)]
        sigma: f64,
        /// Triangle parameter (TGAK only); `inf` disables truncation.
        #[arg(long = "T", value_parser = parse_triangle)]
        triangle: Option<f64>,
        #[arg(long = "C", value_parser = parse_positive)]
        c: f64,
        #[arg(long, default_value_t = 0.01, value_parser = parse_theta)]
        theta: f64,
        /// FastICA preprocessing, optionally keeping only N components.
        #[arg(long, value_name = "N", num_args = 0..=1)]
        ica: Option<Option<usize>>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a batch; writes `output,error,label` per row.
    Predict {
        model: PathBuf,
        batch: PathBuf,
        /// Label column to drop from the batch before scoring.
        #[arg(long)]
        label_col: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a model on a labelled test file.
    Eval {
        model: PathBuf,
        test: PathBuf,
        #[arg(long, default_value = "label")]
        label_col: String,
        /// JSON report destination.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cross-validated hyperparameter search.
    Gridsearch {
        train: PathBuf,
        cvpool: PathBuf,
        /// Label column of the training file, if it has one; only `1` rows are used.
        #[arg(long)]
        label_col: Option<String>,
        /// Label column of the outlier pool, dropped when present.
        #[arg(long, default_value = "label")]
        pool_label_col: String,
        #[arg(long, value_enum, default_value_t = GridArg::Full)]
        grid: GridArg,
        #[arg(long, value_enum, default_value_t = KernelArg::Tgak)]
        kernel: KernelArg,
        #[arg(long, value_name = "N", num_args = 0..=1)]
        ica: Option<Option<usize>>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Per-cell table.
        #[arg(long)]
        out: PathBuf,
        /// JSON record of the best cell.
        #[arg(long)]
        summary: Option<PathBuf>,
        /// Refit the best cell on the whole training file and save it.
        #[arg(long)]
        model_out: Option<PathBuf>,
    },
}

/// Runs a parsed command line.
pub fn run(cli: Cli) -> anyhow::Result<()> {
    commands::dispatch(cli.command)
}

/// Parses `args`, runs, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().try_init();
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<commands::UsageError>().is_some() {
                EXIT_USAGE
            } else {
                EXIT_FAILURE
            }
        }
    }
}
