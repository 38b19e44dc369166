//! `prism` command-line driver: benchmark sweeps, one-off private synthesis,
//! and privacy-ledger audits.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "prism", version, about = "Differentially private synthetic data toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a benchmark sweep and write per-run, aggregate, and figure CSVs.
    Bench(BenchArgs),
    /// Synthesize a private dataset from a discrete CSV file.
    Synth(SynthArgs),
    /// Print the composition summary of a ledger file.
    Audit(AuditArgs),
}

#[derive(Args)]
pub struct BenchArgs {
    /// Plain-text config file: `key = value` lines under [run]/[scm] headers.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Benchmark name: scm-spurious, scm-marginal, alloc-wins, or adult.
    #[arg(long)]
    pub benchmark: Option<String>,
    /// Comma-separated method names (e.g. prism-causal-opt,corr-top2).
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    /// Comma-separated privacy budgets.
    #[arg(long, value_delimiter = ',')]
    pub epsilons: Option<Vec<f64>>,
    /// Comma-separated evaluation seeds.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Synthetic sample size per run.
    #[arg(long)]
    pub n_syn: Option<usize>,
    /// Subset size for predictive methods (defaults to 8 on adult).
    #[arg(long)]
    pub k: Option<usize>,
    /// Directory receiving runs.csv, aggregate.csv, and the figure CSV.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Adult dataset CSV (required for the adult benchmark).
    #[arg(long)]
    pub adult_path: Option<PathBuf>,
    /// Treat the adult file as the raw UCI export instead of the numeric form.
    #[arg(long)]
    pub adult_raw: bool,
}

#[derive(Args)]
pub struct SynthArgs {
    /// Input CSV: header row, integer-coded categorical columns, target last.
    pub input: PathBuf,
    /// Feature-targeting regime: causal, graphical, or predictive.
    #[arg(long)]
    pub regime: String,
    /// Structure file for the causal/graphical regimes: one "parent child"
    /// pair of zero-based column indices per line.
    #[arg(long)]
    pub dag: Option<PathBuf>,
    /// Subset size for the predictive regime.
    #[arg(long)]
    pub k: Option<usize>,
    /// Total privacy budget epsilon; delta is fixed at 1/n².
    #[arg(long, default_value_t = 1.0)]
    pub epsilon: f64,
    /// Budget split across queries: optimal or uniform.
    #[arg(long, default_value = "optimal")]
    pub allocation: String,
    /// Number of synthetic records (defaults to the input size).
    #[arg(long)]
    pub n_syn: Option<usize>,
    /// Mechanism seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory receiving synthetic.csv and ledger.csv.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Args)]
pub struct AuditArgs {
    /// Ledger file written by `prism synth` (epsilon,delta,label rows).
    pub ledger: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Bench(args) => commands::cmd_bench(&args),
        Command::Synth(args) => commands::cmd_synth(&args),
        Command::Audit(args) => commands::cmd_audit(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
