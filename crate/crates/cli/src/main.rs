//! `contextjoin`: build indexes over a CSV lake, search for joinable columns,
//! and run ground-truth benchmarks.
//!
//! Exit codes: 0 success, 1 error, 2 usage, 3 unknown query table or column,
//! 4 malformed ground truth.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

pub const EXIT_ERROR: u8 = 1;
pub const EXIT_UNKNOWN_QUERY: u8 = 3;
pub const EXIT_GROUND_TRUTH: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "contextjoin", version, about = "Joinable column search over CSV data lakes")]
pub struct Cli {
    /// TOML (or .json) settings file; flags and environment take precedence.
    #[arg(long, global = true, env = "CONTEXTJOIN_CONFIG")]
    pub config: Option<PathBuf>,

    /// Log verbosity on stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Profile a lake and write the search indexes.
    Index(IndexArgs),
    /// Rank joinable columns for one query column (JSON lines on stdout).
    Search(SearchArgs),
    /// Score a ground-truth benchmark.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    /// Base URL of an embedding service; the built-in local embedder is used otherwise.
    #[arg(long, env = "CONTEXTJOIN_EMBED_URL")]
    pub embed_url: Option<String>,

    /// Request timeout for the embedding service, in seconds.
    #[arg(long)]
    pub embed_timeout_secs: Option<u64>,
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    /// Directory of CSV files (one table per file).
    #[arg(long)]
    pub lake: Option<PathBuf>,

    /// Output directory for the index bundle.
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Seed for value sampling and MinHash permutations.
    #[arg(long, env = "CONTEXTJOIN_SEED")]
    pub seed: Option<u64>,

    /// Maximum values kept per column.
    #[arg(long)]
    pub sample_cap: Option<usize>,

    /// Leading rows per table fed to the inverted index.
    #[arg(long)]
    pub index_row_sample: Option<usize>,

    /// Dimensionality of the local embedder.
    #[arg(long)]
    pub dims: Option<usize>,

    /// Fall back to the local embedder when the service is unreachable.
    #[arg(long)]
    pub local_fallback: bool,

    #[command(flatten)]
    pub embed: EmbedArgs,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    /// Index bundle directory.
    #[arg(long)]
    pub idx: Option<PathBuf>,

    /// Number of results.
    #[arg(short, long)]
    pub k: Option<usize>,

    /// Candidates taken from each strategy.
    #[arg(long)]
    pub budget: Option<usize>,

    /// Rank by a single criterion.
    #[arg(long, conflicts_with = "drop")]
    pub only: Option<contextjoin::Criterion>,

    /// Rank without one criterion.
    #[arg(long)]
    pub drop: Option<contextjoin::Criterion>,

    /// Override a criterion weight, e.g. `--weight intersection=0.8`. Repeatable.
    #[arg(long = "weight", value_parser = parse_weight)]
    pub weights: Vec<(contextjoin::Criterion, f64)>,

    /// MinHash mode: syntactic candidates and intersection from signatures; no inverted index.
    #[arg(long)]
    pub minhash: bool,

    /// Intersection measure (defaults to minhash under --minhash, else exact).
    #[arg(long)]
    pub intersection: Option<contextjoin::IntersectionMode>,

    /// Rank with join and reverse join size combined into one criterion.
    #[arg(long)]
    pub merge_join_sizes: bool,

    #[command(flatten)]
    pub embed: EmbedArgs,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    /// Lake table id, or path to a CSV file outside the lake.
    #[arg(long)]
    pub query_table: String,

    #[arg(long)]
    pub query_column: String,

    /// Add per-criterion weighted contributions to each record.
    #[arg(long)]
    pub explain: bool,

    #[command(flatten)]
    pub rank: RankArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Ground-truth CSV: query_table,query_column,target_table,target_column.
    #[arg(long)]
    pub gt: PathBuf,

    /// Ablation arms: `single` (one criterion each) or `loo` (leave one out).
    #[arg(long)]
    pub ablate: Option<contextjoin::eval::AblationMode>,

    /// Metric curve over a K range, e.g. `1..20`.
    #[arg(long, value_parser = parse_range)]
    pub k_sweep: Option<(usize, usize)>,

    /// Write per-query metrics to this CSV file.
    #[arg(long)]
    pub csv: Option<PathBuf>,

    /// Print the report as JSON instead of a text table.
    #[arg(long)]
    pub json: bool,

    #[command(flatten)]
    pub rank: RankArgs,
}

fn parse_weight(s: &str) -> Result<(contextjoin::Criterion, f64), String> {
    let (name, value) = s.split_once('=').ok_or("expected CRITERION=WEIGHT")?;
    let criterion = name.trim().parse().map_err(|e: contextjoin::Error| e.to_string())?;
    let value: f64 = value.trim().parse().map_err(|_| format!("`{value}` is not a number"))?;
    if !value.is_finite() || value < 0.0 {
        return Err(format!("weight must be non-negative, got {value}"));
    }
    Ok((criterion, value))
}

fn parse_range(s: &str) -> Result<(usize, usize), String> {
    let (lo, hi) = match s.split_once("..") {
        Some((lo, hi)) => (lo, hi.trim_start_matches('=')),
        None => ("1", s),
    };
    let lo: usize = lo.trim().parse().map_err(|_| format!("bad range start in `{s}`"))?;
    let hi: usize = hi.trim().parse().map_err(|_| format!("bad range end in `{s}`"))?;
    if lo == 0 || lo > hi {
        return Err(format!("range `{s}` must satisfy 1 <= start <= end"));
    }
    Ok((lo, hi))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();

    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {:#}", failure.error);
            ExitCode::from(failure.code)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn parses_weights_and_ranges() {
        assert_eq!(
            parse_weight("intersection=0.8").unwrap(),
            (contextjoin::Criterion::Intersection, 0.8)
        );
        assert!(parse_weight("intersection=-1").is_err());
        assert!(parse_weight("bogus=1").is_err());
        assert_eq!(parse_range("1..20").unwrap(), (1, 20));
        assert_eq!(parse_range("3..=5").unwrap(), (3, 5));
        assert_eq!(parse_range("10").unwrap(), (1, 10));
        assert!(parse_range("0..3").is_err());
        assert!(parse_range("5..2").is_err());
    }
}
