//! Command-line interface definition.

use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use maintien::validation::Reading;

use crate::config::ReserveMode;
use crate::export::Sampling;

#[derive(Debug, Parser)]
#[command(name = "maintien", version, about = "Graduate disability maintenance laws and build reserving tables")]
pub struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate censored claims from a parametric exit-rate model.
    Synth(SynthArgs),
    /// Kaplan-Meier estimates and raw daily exit rates.
    Km(KmArgs),
    /// Fit a constrained spline surface to raw rates.
    Fit(FitArgs),
    /// Whittaker-Henderson smoothing of raw rates.
    Wh(WhArgs),
    /// Chi-square validation of a surface against claims.
    Validate(ValidateArgs),
    /// Reserving coefficients from a surface.
    Reserve(ReserveArgs),
    /// Relative difference between two reserve tables.
    Compare(CompareArgs),
    /// Run every stage from claims to tables.
    Pipeline(PipelineArgs),
    /// Dense plot grid of a surface or table.
    Export(ExportArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// `const:<rate>` or `decay:base=..,amp=..,scale=..[,slope=..][,ref=..]`.
    #[arg(long)]
    pub model: String,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.3)]
    pub censoring: f64,
    #[arg(long, default_value_t = 25)]
    pub age_min: i32,
    #[arg(long, default_value_t = 60)]
    pub age_max: i32,
    #[arg(long, default_value_t = 1095)]
    pub horizon: u32,
}

#[derive(Debug, Args)]
pub struct ClaimOptions {
    /// Days of incapacity before observation starts.
    #[arg(long, default_value_t = 10)]
    pub franchise_days: u32,
    /// Input durations count from the first day of incapacity.
    #[arg(long)]
    pub durations_include_franchise: bool,
    #[arg(long, default_value_t = ',')]
    pub delimiter: char,
    /// Observation horizon in days.
    #[arg(long, default_value_t = 1095)]
    pub horizon: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WeightingArg {
    Exposure,
    Uniform,
}

#[derive(Debug, Args)]
pub struct KmArgs {
    #[arg(long)]
    pub claims: PathBuf,
    #[arg(long)]
    pub out_surface: PathBuf,
    #[arg(long)]
    pub out_variance: PathBuf,
    #[command(flatten)]
    pub claim_options: ClaimOptions,
    #[arg(long, default_value_t = 25)]
    pub age_min: i32,
    #[arg(long, default_value_t = 60)]
    pub age_max: i32,
    #[arg(long, value_enum, default_value = "exposure")]
    pub weighting: WeightingArg,
}

/// Knot lines for one axis: a comma list, `none`, or `auto:<count>`.
#[derive(Debug, Clone, PartialEq)]
pub enum KnotArg {
    Lines(Vec<f64>),
    Auto(usize),
}

impl FromStr for KnotArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if let Some(n) = s.strip_prefix("auto:") {
            return n.parse().map(KnotArg::Auto).map_err(|_| format!("invalid knot count `{n}`"));
        }
        if s.is_empty() || s == "none" {
            return Ok(KnotArg::Lines(Vec::new()));
        }
        parse_list(s).map(KnotArg::Lines)
    }
}

pub fn parse_list<T: FromStr>(s: &str) -> Result<Vec<T>, String> {
    s.split(',')
        .map(|p| p.trim().parse().map_err(|_| format!("invalid list entry `{}`", p.trim())))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pair<T>(pub T, pub T);

impl<T: FromStr + Copy> FromStr for Pair<T> {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match parse_list::<T>(s)?.as_slice() {
            [a] => Ok(Pair(*a, *a)),
            [a, b] => Ok(Pair(*a, *b)),
            _ => Err(format!("expected one or two values, got `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WeightScaleArg {
    Count,
    Unit,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Raw surface CSV from `km`.
    #[arg(long)]
    pub surface: PathBuf,
    #[arg(long, default_value_t = 0.001)]
    pub alpha: f64,
    #[arg(long, default_value_t = 3)]
    pub degree: usize,
    /// c1 or c2.
    #[arg(long, default_value = "c2")]
    pub smoothness: maintien::Smoothness,
    /// Horizontal (entry age) knot lines.
    #[arg(long, default_value = "42")]
    pub knots_h: KnotArg,
    /// Vertical (duration day) knot lines.
    #[arg(long, default_value = "30,90,180,365,730")]
    pub knots_v: KnotArg,
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    #[arg(long, value_enum, default_value = "count")]
    pub weight_scale: WeightScaleArg,
    #[arg(long)]
    pub out: PathBuf,
    /// Fit report JSON; printed to stdout when absent.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct WhArgs {
    #[arg(long)]
    pub surface: PathBuf,
    /// Difference orders `t,x`.
    #[arg(long, default_value = "2,2")]
    pub order: Pair<usize>,
    /// Smoothing weights `t,x`.
    #[arg(long, default_value = "10,10")]
    pub lambda: Pair<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Fitted surface JSON or rate grid CSV.
    #[arg(long)]
    pub surface: PathBuf,
    #[arg(long)]
    pub claims: PathBuf,
    #[command(flatten)]
    pub claim_options: ClaimOptions,
    /// Age class edges, e.g. `26,30,34,38,42,46,50,54,58,61`.
    #[arg(long)]
    pub age_classes: Option<String>,
    /// Duration class edges in days.
    #[arg(long)]
    pub dur_classes: Option<String>,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[arg(long, default_value = "marginal")]
    pub reading: Reading,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReserveArgs {
    /// Fitted surface JSON or rate grid CSV.
    #[arg(long)]
    pub surface: PathBuf,
    /// Annual technical rate.
    #[arg(long, default_value_t = 0.03)]
    pub rate: f64,
    #[arg(long, value_enum, default_value = "discrete")]
    pub mode: ReserveMode,
    /// Entry ages as `start:end[:step]`.
    #[arg(long, default_value = "25:60")]
    pub ages: Sampling,
    #[arg(long, default_value_t = 36)]
    pub horizon_months: u32,
    #[arg(long, default_value_t = 10000.0)]
    pub radix: f64,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the maintenance table (survivors per month).
    #[arg(long)]
    pub out_maintenance: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub candidate: PathBuf,
    #[arg(long)]
    pub reference: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// TOML configuration; defaults apply when absent.
    #[arg(long, env = "MAINTIEN_CONFIG")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub claims: Option<PathBuf>,
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Seed of the synthetic claims.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub rate: Option<f64>,
    #[arg(long, value_enum)]
    pub mode: Option<ReserveMode>,
    #[arg(long)]
    pub level: Option<f64>,
    /// Print the effective configuration as TOML and exit.
    #[arg(long)]
    pub print_config: bool,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["surface", "table"])))]
pub struct ExportArgs {
    /// Fitted surface JSON or rate grid CSV.
    #[arg(long)]
    pub surface: Option<PathBuf>,
    /// Age by month table CSV.
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// Entry ages as `start:end[:step]`.
    #[arg(long, default_value = "25:60")]
    pub ages: Sampling,
    /// Durations (days for surfaces, months for tables) as `start:end[:step]`.
    #[arg(long, default_value = "1:1095")]
    pub durations: Sampling,
    #[arg(long)]
    pub out: PathBuf,
}
