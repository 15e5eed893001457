mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Distributed rateless codes for in-band path tracing.
#[derive(Debug, Parser)]
#[command(name = "recipe", version)]
struct Cli {
    /// Seed for every random choice the command makes.
    #[arg(long, global = true, env = "RECIPE_SEED", default_value_t = 0)]
    seed: u64,

    /// Worker threads for evaluation and search (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output file; standard output when omitted.
    #[arg(short = 'o', long = "output", global = true)]
    output: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Emit a named XDD sequence as JSON.
    Dist(DistArgs),
    /// Check the feasibility inequalities of a sequence file.
    Check {
        seq: PathBuf,
    },
    /// Derive the action probability array of a feasible sequence.
    DeriveApa {
        seq: PathBuf,
    },
    /// Sample an action vector table from an APA (binary, needs -o).
    GenAvst {
        /// APA JSON; alternatively --seq.
        #[arg(long, conflicts_with = "seq")]
        apa: Option<PathBuf>,
        #[arg(long)]
        seq: Option<PathBuf>,
        /// Table rows.
        #[arg(long, visible_alias = "L", default_value_t = recipe_core::protocol::DEFAULT_AVST_ROWS)]
        rows: usize,
    },
    /// Run one path instance and print every packet; -o saves the codewords.
    Simulate {
        #[command(flatten)]
        scheme: SchemeArgs,
        /// Path length.
        #[arg(long)]
        k: usize,
        /// Stop after this many packets even if decoding is incomplete.
        #[arg(long, default_value_t = 100_000)]
        packets: usize,
    },
    /// Decode a saved codeword stream by replaying the switches.
    Decode {
        #[command(flatten)]
        scheme: SchemeArgs,
        /// JSON-lines file written by `simulate -o`.
        #[arg(long)]
        codewords: PathBuf,
        #[arg(long)]
        k: usize,
    },
    /// Search for efficient feasible sequences.
    #[command(subcommand)]
    Search(SearchCommand),
    /// Coding-efficiency curve (CSV) for one scheme.
    Evaluate(EvaluateArgs),
    /// Join curve CSVs and optionally add a table-size study.
    Compare(CompareArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DistKind {
    ShiftedSoliton,
    IdealSoliton,
    RobustSoliton,
    Pint,
    /// Invariant expansion of the last XDD of --seq.
    Invariant,
}

#[derive(Debug, Args)]
struct DistArgs {
    kind: DistKind,
    #[arg(long = "K")]
    diameter: Option<usize>,
    #[arg(long, default_value_t = recipe_core::distributions::ROBUST_SOLITON_C)]
    c: f64,
    #[arg(long, default_value_t = recipe_core::distributions::ROBUST_SOLITON_DELTA)]
    delta: f64,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    seq: Option<PathBuf>,
    /// Print `d,mass` CSV of the last XDD instead of the sequence JSON.
    #[arg(long)]
    pmf: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SchemeKind {
    RecipeD,
    RecipeT,
    Pint,
}

#[derive(Debug, Args)]
struct SchemeArgs {
    #[arg(long, value_enum, default_value_t = SchemeKind::RecipeD)]
    scheme: SchemeKind,
    /// Sequence JSON (RECIPE-d, or the APA check for RECIPE-t).
    #[arg(long)]
    seq: Option<PathBuf>,
    /// APA JSON, instead of --seq.
    #[arg(long, conflicts_with = "seq")]
    apa: Option<PathBuf>,
    /// Action vector table for RECIPE-t.
    #[arg(long)]
    avst: Option<PathBuf>,
    /// PINT reservoir-sampling weight.
    #[arg(long)]
    alpha: Option<f64>,
    /// PINT per-hop XOR probability.
    #[arg(long)]
    p: Option<f64>,
    /// PINT: drop empty codewords instead of counting them.
    #[arg(long)]
    conditioned: bool,
}

#[derive(Debug, Subcommand)]
enum SearchCommand {
    /// Greedy reversed search from Robust Soliton.
    Hrs {
        #[arg(long = "K")]
        diameter: usize,
        #[arg(long, default_value_t = 1000)]
        candidates: usize,
        /// Monte-Carlo trials per candidate.
        #[arg(long, default_value_t = 2000)]
        trials: usize,
        #[arg(long, default_value_t = recipe_core::distributions::ROBUST_SOLITON_C)]
        c: f64,
        #[arg(long, default_value_t = recipe_core::distributions::ROBUST_SOLITON_DELTA)]
        delta: f64,
        /// Trace CSV (default: <output>.trace.csv).
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Projected-gradient search over invariant codes.
    Qps {
        #[arg(long = "K")]
        diameter: usize,
        #[arg(long, default_value_t = 8)]
        restarts: usize,
        #[arg(long, default_value_t = 3000)]
        iterations: usize,
        /// Use the second-order release correction in the objective.
        #[arg(long)]
        second_order: bool,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[command(flatten)]
    scheme: SchemeArgs,
    /// Largest path length; defaults to the scheme's diameter.
    #[arg(long = "K")]
    diameter: Option<usize>,
    /// Explicit path lengths, comma separated, instead of 1..=K.
    #[arg(long, value_delimiter = ',')]
    ks: Vec<usize>,
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    /// PINT: grid-tune alpha and p at k = K first.
    #[arg(long)]
    tune: bool,
    #[arg(long, default_value_t = 500)]
    tune_trials: usize,
}

#[derive(Debug, Args)]
struct CompareArgs {
    /// Curve CSVs to join.
    curves: Vec<PathBuf>,
    /// Also run RECIPE-d against RECIPE-t for this sequence.
    #[arg(long)]
    seq: Option<PathBuf>,
    /// Table sizes for the RECIPE-t curves.
    #[arg(long, visible_alias = "L", value_delimiter = ',', default_values_t = [1000, 30_000])]
    rows: Vec<usize>,
    #[arg(long = "K")]
    diameter: Option<usize>,
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
