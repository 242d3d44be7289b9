use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "bats", version, about = "Rank analysis and packet-count optimization for BATS codes on line networks")]
pub struct Cli {
    /// Output format; defaults to human on a terminal and json otherwise.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Write the report to this file instead of stdout.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Worker threads for table builds and simulations.
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
    /// Increase log verbosity (-v, -vv).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Human,
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Rank distribution, average rank and efficiency of a fixed policy.
    Analyze {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Use the relaxed model instead of the exact one.
        #[arg(long)]
        approx: bool,
    },
    /// Choose packet counts per hop.
    Optimize {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, value_enum, default_value_t = Mode::Centralized)]
        mode: Mode,
        /// Look-up table file for --mode table.
        #[arg(long, value_name = "PATH")]
        table: Option<PathBuf>,
        /// Path length for --mode ps with a single loss rate.
        #[arg(long)]
        hops: Option<u32>,
    },
    /// Relaxed upper bound on the efficiency.
    Bound {
        #[command(flatten)]
        scenario: ScenarioArgs,
    },
    /// Build, refine, query and compress look-up tables.
    #[command(subcommand)]
    Table(TableCommand),
    /// Monte Carlo simulation of a fixed policy.
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArgs,
    },
    /// Regenerate the published tables and curve data as CSV.
    Reproduce {
        #[arg(value_enum)]
        target: Target,
        /// Random loss-rate trials per path length.
        #[arg(long, default_value_t = 200)]
        trials: u64,
        #[arg(long)]
        seed: Option<u64>,
        /// Batch sizes for the curves.
        #[arg(long, value_delimiter = ',', default_values_t = [12u32, 16, 20, 24])]
        batch_sizes: Vec<u32>,
        /// Path lengths for the curves, e.g. 2-20 or 2,4,7.
        #[arg(long, value_parser = parse_hops, default_value = "2-20")]
        hops: HopList,
        /// Field order for the bound, PA, and the no-recoding baseline.
        #[arg(long, default_value_t = 256)]
        q: u32,
        /// Field order used with table policies in avg-rank-curve.
        #[arg(long, default_value_t = 16)]
        table_q: u32,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Centralized,
    Pa,
    Ps,
    Table,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Target {
    Table1,
    Table2,
    Fig3,
    EfficiencyCurve,
    AvgRankCurve,
}

#[derive(Debug, Subcommand)]
pub enum TableCommand {
    /// Solve the single-variable problem on every grid cell.
    Build {
        #[arg(long, default_value_t = 256)]
        q: u32,
        #[arg(short = 'M', long = "batch-size", default_value_t = 16)]
        batch_size: u32,
        #[arg(long, default_value_t = 0.10)]
        eps_start: f64,
        #[arg(long, default_value_t = 0.20)]
        eps_end: f64,
        #[arg(long, default_value_t = 0.01)]
        eps_step: f64,
        /// Hop counts, e.g. 2-20 or 2,4,7,11.
        #[arg(long, value_parser = parse_hops, default_value = "2-20")]
        hops: HopList,
        /// Save the table document here.
        #[arg(long, value_name = "PATH")]
        save: Option<PathBuf>,
    },
    /// Keep only the columns l = 2, 4, 7, 11, 16, 20.
    Refine {
        #[arg(long, value_name = "PATH")]
        table: PathBuf,
        #[arg(long, value_name = "PATH")]
        save: Option<PathBuf>,
    },
    /// Look up the packet count for a loss rate and path length.
    Query {
        #[arg(long, value_name = "PATH")]
        table: PathBuf,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        hops: u32,
    },
    /// Run-length encode every row.
    Compress {
        #[arg(long, value_name = "PATH")]
        table: PathBuf,
        #[arg(long, value_name = "PATH")]
        save: Option<PathBuf>,
    },
}

/// Scenario parameters; flags override the scenario file.
#[derive(Debug, Clone, Default, Args)]
pub struct ScenarioArgs {
    /// JSON scenario file with any of q, M, eps, t, n1, seed, trials.
    #[arg(long, value_name = "PATH")]
    pub scenario: Option<PathBuf>,
    /// Field order.
    #[arg(long)]
    pub q: Option<u32>,
    /// Batch size.
    #[arg(short = 'M', long = "batch-size")]
    pub batch_size: Option<u32>,
    /// Per-hop loss rates, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub eps: Option<Vec<f64>>,
    /// Per-hop packet counts, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub t: Option<Vec<u32>>,
    /// Source batch count for transmission totals.
    #[arg(long)]
    pub n1: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Simulated batches.
    #[arg(long)]
    pub trials: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HopList(pub Vec<u32>);

/// Parses "2-20", "2,4,7" or a mix such as "2-5,8".
pub fn parse_hops(s: &str) -> Result<HopList, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let num = |x: &str| x.trim().parse::<u32>().map_err(|e| format!("bad hop count {x:?}: {e}"));
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b) = (num(a)?, num(b)?);
                if a > b {
                    return Err(format!("empty hop range {part}"));
                }
                out.extend(a..=b);
            }
            None => out.push(num(part)?),
        }
    }
    if out.is_empty() {
        return Err("no hop counts given".into());
    }
    if out[0] == 0 || out.windows(2).any(|w| w[0] >= w[1]) {
        return Err(format!("hop counts must be positive and increasing: {s}"));
    }
    Ok(HopList(out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hop_lists() {
        assert_eq!(parse_hops("2-5").unwrap().0, vec![2, 3, 4, 5]);
        assert_eq!(parse_hops("2,4,7").unwrap().0, vec![2, 4, 7]);
        assert_eq!(parse_hops("1-2,9").unwrap().0, vec![1, 2, 9]);
        assert!(parse_hops("5-2").is_err());
        assert!(parse_hops("0,1").is_err());
        assert!(parse_hops("3,3").is_err());
        assert!(parse_hops("x").is_err());
    }

    #[test]
    fn clap_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
