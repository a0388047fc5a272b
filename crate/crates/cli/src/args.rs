use std::path::PathBuf;

use balance_lab::{Scale, StatisticKind, WeightPolicy};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "balance-lab", version, about = "Conditional covariate balance tests")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Balance statistics, exact variances and permutation p-values for one dataset.
    Test(TestArgs),
    /// Monte Carlo rejection-rate study over a grid of imbalance and prognosis.
    Simulate(SimulateArgs),
    /// Prognosis and imbalance R² for one dataset.
    Diagnose(DiagnoseArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StatisticArg {
    Uw,
    Rw,
    Hotelling,
    All,
}

impl StatisticArg {
    pub fn kinds(self) -> Vec<StatisticKind> {
        match self {
            StatisticArg::Uw => vec![StatisticKind::Uw],
            StatisticArg::Rw => vec![StatisticKind::Rw],
            StatisticArg::Hotelling => vec![StatisticKind::Hotelling],
            StatisticArg::All => StatisticKind::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WeightPolicyArg {
    Fixed,
    Refit,
}

impl From<WeightPolicyArg> for WeightPolicy {
    fn from(w: WeightPolicyArg) -> Self {
        match w {
            WeightPolicyArg::Fixed => WeightPolicy::Fixed,
            WeightPolicyArg::Refit => WeightPolicy::RefitPerPermutation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScaleArg {
    Standardized,
    Raw,
}

impl From<ScaleArg> for Scale {
    fn from(s: ScaleArg) -> Self {
        match s {
            ScaleArg::Standardized => Scale::Standardized,
            ScaleArg::Raw => Scale::Raw,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

/// Where the data lives and which columns to use.
#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Delimited input file with a header row.
    #[arg(long)]
    pub input: PathBuf,

    /// Binary treatment column (0/1, true/false, or two labels with --treated-level).
    #[arg(long)]
    pub treatment: String,

    #[arg(long)]
    pub outcome: String,

    /// Comma-separated covariate columns; defaults to every other column.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Vec<String>,

    /// Label of the treated arm when the treatment column holds strings.
    #[arg(long)]
    pub treated_level: Option<String>,

    /// Lagged outcome column for the lagged-correlation diagnostic.
    #[arg(long)]
    pub lag_column: Option<String>,

    /// Drop rows with missing values instead of failing.
    #[arg(long)]
    pub lenient_missing: bool,

    /// Field delimiter: a single character, or `tab`.
    #[arg(long, default_value = ",")]
    pub delimiter: String,
}

#[derive(Debug, Clone, Args)]
pub struct TestArgs {
    #[command(flatten)]
    pub input: InputArgs,

    #[arg(long, value_enum, default_value = "all")]
    pub statistic: StatisticArg,

    #[arg(long, default_value_t = 1000)]
    pub permutations: usize,

    /// Master seed; a fresh one is drawn and recorded when omitted.
    #[arg(long)]
    pub seed: Option<u64>,

    #[arg(long, value_enum, default_value = "fixed")]
    pub weight_policy: WeightPolicyArg,

    #[arg(long, value_enum, default_value = "standardized")]
    pub scale: ScaleArg,

    /// Level used for the significance column of the report.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,

    /// Worker threads (0 = all cores).
    #[arg(long, env = "BALANCE_LAB_THREADS", default_value_t = 0)]
    pub threads: usize,

    /// Directory for report.json, report.txt and manifest.json.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,

    /// Also write every permuted statistic as little-endian f64 to the output directory.
    #[arg(long, requires = "out_dir")]
    pub dump_permutations: bool,

    /// What to print on stdout.
    #[arg(long, value_enum, default_value = "text")]
    pub format: Format,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Study configuration (TOML).
    #[arg(long, alias = "input")]
    pub config: PathBuf,

    #[arg(long)]
    pub out_dir: PathBuf,

    /// Reuse finished grid cells from an earlier run in the same directory.
    #[arg(long)]
    pub resume: bool,

    /// Overrides the seed in the configuration file.
    #[arg(long)]
    pub seed: Option<u64>,

    #[arg(long, env = "BALANCE_LAB_THREADS", default_value_t = 0)]
    pub threads: usize,

    /// Delimiter for the result tables: a single character, or `tab`.
    #[arg(long, default_value = ",")]
    pub delimiter: String,

    /// Stop after computing this many new cells (checkpoints are kept).
    #[arg(long, hide = true)]
    pub stop_after: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub input: InputArgs,

    #[arg(long)]
    pub out_dir: Option<PathBuf>,

    #[arg(long, value_enum, default_value = "text")]
    pub format: Format,
}

pub fn parse_delimiter(s: &str) -> Result<u8, String> {
    match s {
        "tab" | "\\t" | "\t" => Ok(b'\t'),
        _ if s.len() == 1 && s.is_ascii() => Ok(s.as_bytes()[0]),
        _ => Err(format!(
            "delimiter must be a single ASCII character or 'tab', got '{s}'"
        )),
    }
}
