mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use prismlab_core::analytic::Multiplicity;

#[derive(Parser)]
#[command(
    name = "prismlab",
    version,
    about = "Simulate and analyze PrISM RowHammer mitigation configurations"
)]
struct Cli {
    /// Worker threads for `sweep` and `mc` (default: all cores for sweep, 1 otherwise).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analytic security bound: supported threshold and per-X escape table.
    Analyze(AnalyzeArgs),
    /// Monte Carlo epochs of an attack against one configuration.
    Mc(McArgs),
    /// Evaluate every point of a grid file.
    Sweep(SweepArgs),
    /// Worst-case throughput slowdown of Alert-driven RFMs.
    Dos(DosArgs),
    /// Replay an attack or trace through the channel and report counters.
    Simulate(SimulateArgs),
    /// Per-bank SRAM for the SHQ, SSQ and PMQ.
    Storage(StorageArgs),
}

#[derive(Args, Clone, Debug)]
pub struct ConfigArgs {
    /// Built-in configuration: 1000, 500 or 250.
    #[arg(long, conflicts_with = "config")]
    pub preset: Option<String>,
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override the TRR interval in activation slots (0 disables TRR).
    #[arg(long)]
    pub trr_interval: Option<u32>,
}

#[derive(Args, Clone, Debug)]
pub struct OutArgs {
    /// Write CSV here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum AttackKindArg {
    Circular,
    Benign,
    Trace,
}

#[derive(Args, Clone, Debug)]
pub struct AttackArgs {
    #[arg(long, value_enum, default_value = "circular")]
    pub attack: AttackKindArg,
    /// Rows in the circular-X rotation (default: W).
    #[arg(long)]
    pub x: Option<u32>,
    /// Trace file for `--attack trace`.
    #[arg(long, required_if_eq("attack", "trace"))]
    pub trace: Option<PathBuf>,
    /// Distinct rows touched by `--attack benign`.
    #[arg(long, default_value_t = 4096)]
    pub rows: u32,
    /// Banks the generated attack is spread over.
    #[arg(long, default_value_t = 1)]
    pub banks: usize,
    /// Activations per run (default: one refresh window's budget).
    #[arg(long)]
    pub acts: Option<u64>,
    /// Convert row-open time to equivalent activations: "t_pre_ns,t_rc_ns".
    #[arg(long)]
    pub eact: Option<String>,
    /// Pass trace rows through a keyed row permutation.
    #[arg(long)]
    pub randomize_key: Option<u64>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum MultiplicityArg {
    PerAggressor,
    PerAggressorPerBank,
}

impl From<MultiplicityArg> for Multiplicity {
    fn from(m: MultiplicityArg) -> Self {
        match m {
            MultiplicityArg::PerAggressor => Multiplicity::PerAggressor,
            MultiplicityArg::PerAggressorPerBank => Multiplicity::PerAggressorPerBank,
        }
    }
}

#[derive(Args, Clone, Debug)]
pub struct ModelArgs {
    /// Per-bank MTTF target in years.
    #[arg(long, default_value_t = 10_000.0)]
    pub mttf_years: f64,
    /// Banks operating in parallel, for the per-bank multiplicity.
    #[arg(long = "parallel-banks", default_value_t = 24)]
    pub parallel_banks: u32,
    #[arg(long, value_enum, default_value = "per-aggressor")]
    pub multiplicity: MultiplicityArg,
    /// Report the single-row count instead of halving it for double-sided hammering.
    #[arg(long)]
    pub single_sided: bool,
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug)]
pub struct McArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    #[command(flatten)]
    pub attack: AttackArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 100)]
    pub epochs: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Escape threshold to report (default: the model's single-row requirement).
    #[arg(long)]
    pub threshold: Option<u64>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// Grid file: a configuration whose keys may hold lists of values.
    pub grid: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug)]
pub struct DosArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Also simulate circular-X and report the measured worst case.
    #[arg(long)]
    pub measure: bool,
    /// Measure only this X instead of scanning 1..=4W.
    #[arg(long)]
    pub x: Option<u32>,
    /// Activations per measured run.
    #[arg(long, default_value_t = 150_000)]
    pub acts: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum EngineArg {
    Prism,
    Mint,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    #[command(flatten)]
    pub attack: AttackArgs,
    #[arg(long, value_enum, default_value = "prism")]
    pub engine: EngineArg,
    /// MINT window (default: the MINT window paired with the preset, else W).
    #[arg(long)]
    pub mint_window: Option<u32>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write a per-event log to this file.
    #[arg(long)]
    pub event_log: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug)]
pub struct StorageArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let default_jobs = match cli.command {
        Command::Sweep(_) => 0,
        _ => 1,
    };
    let jobs = cli.jobs.unwrap_or(default_jobs);
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
        eprintln!("error: cannot start {jobs} worker threads: {e}");
        return ExitCode::from(2);
    }
    let result = match &cli.command {
        Command::Analyze(a) => commands::analyze(a),
        Command::Mc(a) => commands::mc(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Dos(a) => commands::dos(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Storage(a) => commands::storage(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 3 for numerical failures, 2 for everything caused by the input.
fn exit_code(e: &prismlab_core::Error) -> u8 {
    if e.is_numeric() {
        3
    } else {
        2
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use prismlab_core::Error;

    #[test]
    fn exit_codes() {
        let numeric = Error::Convergence {
            what: "test",
            residual: 1.0,
            iterations: 1,
        };
        assert_eq!(exit_code(&numeric), 3);
        assert_eq!(exit_code(&Error::SsqOverflow { bank: 0, capacity: 3 }), 3);
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(exit_code(&Error::RowRange { row: 1 << 20 }), 2);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
