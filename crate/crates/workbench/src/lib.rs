//! `atkd`: synthetic data, training, evaluation and loss utilities on the
//! command line.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 failure while
//! processing (I/O, file format, numerical or domain error).

pub mod commands;
pub mod config;
pub mod corpus;
pub mod error;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

pub use config::RunConfig;
pub use error::{CliError, EXIT_FAILURE, EXIT_USAGE};

#[derive(Debug, Parser)]
#[command(name = "atkd", version, about = "Adaptive two-stage transducer distillation workbench")]
#[command(arg_required_else_help = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus directory.
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the task seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train the full-context teacher with the transducer loss.
    TrainTeacher {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Corpus directory; generated from the config when absent.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Checkpoint directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-step CSV report.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Train a streaming student from a teacher checkpoint.
    Distill {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        teacher: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Token error rate and first-emission frame of a checkpoint.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Multi-seed comparison of distillation variants.
    Matrix {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated seeds or an inclusive range `a-b`.
        #[arg(long, default_value = "0-9")]
        seeds: String,
        /// Comma-separated rows: teacher, two-stage-first, or a variant name.
        #[arg(long, default_value = commands::DEFAULT_ENTRIES)]
        variants: String,
        /// Summary CSV path; printed to stdout as well.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        per_seed: Option<PathBuf>,
    },
    /// Entropy-targeted smoothing of every distribution in a tensor.
    Smooth {
        #[arg(long)]
        input: PathBuf,
        /// `max` (log V) or nats.
        #[arg(long, default_value = "max")]
        target_entropy: String,
        #[arg(long, default_value_t = 2)]
        steps: usize,
        /// Writes the smoothed tensor.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Series and bisection exponents reaching the target entropy in one step.
    Gamma {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "max")]
        target_entropy: String,
    },
    /// Transducer loss of a probability lattice `[T, U+1, V]`.
    RnntLoss {
        #[arg(long)]
        input: PathBuf,
        /// Space-separated target indices.
        #[arg(long, allow_hyphen_values = true)]
        tokens: String,
        /// The input holds log-probabilities.
        #[arg(long)]
        log_probs: bool,
        /// Writes the gradient with respect to log-probabilities.
        #[arg(long)]
        grad: Option<PathBuf>,
    },
    /// Weighted distillation loss between student and teacher lattices.
    KdLoss {
        #[arg(long)]
        student: PathBuf,
        #[arg(long)]
        teacher: PathBuf,
        #[arg(long)]
        tokens: String,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        /// `none`, `temperature` or `adaptive`.
        #[arg(long, default_value = "temperature")]
        output: String,
        #[arg(long, default_value_t = 1.0)]
        tau: f64,
        #[arg(long, default_value = "max")]
        target_entropy: String,
        #[arg(long, default_value_t = 2)]
        steps: usize,
        /// `student-first` or `teacher-first`.
        #[arg(long, default_value = "student-first")]
        direction: String,
        /// Comma-separated hidden-layer tensors of the student.
        #[arg(long)]
        student_hidden: Option<String>,
        #[arg(long)]
        teacher_hidden: Option<String>,
    },
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{}", e.render());
                    0
                }
                _ => {
                    let _ = write!(err, "{}", e.render());
                    EXIT_USAGE
                }
            };
        }
    };
    match commands::dispatch(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
