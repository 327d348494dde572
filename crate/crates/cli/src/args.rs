use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "hierstab",
    version,
    about = "Noise stability of hierarchical functions on product spaces"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fourier spectrum, stability and distance to linear functions of one function.
    Analyze(AnalyzeArgs),
    /// Certify a hierarchy and measure its stability against the decay bounds.
    Hierarchy(HierarchyArgs),
    /// Tabulate the decay bounds over a range of depths.
    Decay(DecayArgs),
    /// Maximal correlation of a pair, or of the pair induced by functions.
    Maxcorr(MaxcorrArgs),
    /// Efron–Stein decomposition of a function.
    Es(EsArgs),
    /// Crossing-event stability on the triangular lattice.
    Percolation(PercolationArgs),
    /// Worked examples with their verification and floor reports.
    Demo(DemoArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Monte Carlo sample count; accepts forms like 100000 or 1e5.
    #[arg(long, default_value = "1e5", value_parser = parse_count)]
    pub samples: usize,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Output file, written atomically; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads for Monte Carlo estimators; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// `named:<name>[:n]` or `@<file>` holding a function descriptor.
    #[arg(long = "fn")]
    pub function: String,
    #[arg(long)]
    pub rho: f64,
    /// Also check the low-degree correlation bound at this degree.
    #[arg(long)]
    pub degree: Option<usize>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BuiltinHierarchy {
    RecursiveMaj3,
    ParityTree,
    CosArccos,
    MajPlusFirst,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    /// Recursive propagation for finite inputs, Monte Carlo otherwise.
    Auto,
    Recursive,
    Exact,
    Mc,
}

#[derive(Debug, Args)]
pub struct HierarchyArgs {
    /// Hierarchy descriptor file.
    #[arg(long, conflicts_with = "builtin", required_unless_present = "builtin")]
    pub input: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub builtin: Option<BuiltinHierarchy>,
    #[arg(long, default_value_t = 2)]
    pub depth: usize,
    /// Declared epsilon for every component of a builtin hierarchy.
    #[arg(long)]
    pub eps: Option<f64>,
    /// Slack for the closed-form decay bound; defaults to half the smallest declared epsilon.
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub rho: f64,
    #[arg(long, value_enum, default_value_t = Method::Auto)]
    pub method: Method,
    /// Report certification shortfalls instead of failing on them.
    #[arg(long)]
    pub inspect: bool,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct DecayArgs {
    #[arg(long)]
    pub eps: f64,
    /// Defaults to eps/2.
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub rho: f64,
    /// `a..b` inclusive, `a..b/step`, or a single depth.
    #[arg(long, alias = "depth", default_value = "1..10")]
    pub depths: String,
    /// Add the bound for t-resilient components.
    #[arg(long)]
    pub resilient: Option<usize>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct MaxcorrArgs {
    /// Correlated pair descriptor file.
    #[arg(long, conflicts_with = "function", required_unless_present = "function")]
    pub pair: Option<PathBuf>,
    /// Function on the x side of the induced pair.
    #[arg(long = "fn")]
    pub function: Option<String>,
    /// Function on the y side; defaults to the x-side function.
    #[arg(long = "gfn", requires = "function")]
    pub g_function: Option<String>,
    /// Product space descriptor coupling the inputs.
    #[arg(long, conflicts_with = "rho")]
    pub space: Option<PathBuf>,
    /// Couple every input of the function by rho-resampling.
    #[arg(long)]
    pub rho: Option<f64>,
    /// Estimate the induced pair from samples instead of enumerating it.
    #[arg(long, requires = "function")]
    pub mc: bool,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct EsArgs {
    #[arg(long = "fn")]
    pub function: String,
    /// Include full component tables.
    #[arg(long)]
    pub full: bool,
    /// Check Markov contraction under this product space.
    #[arg(long, conflicts_with = "rho")]
    pub space: Option<PathBuf>,
    /// Check Markov contraction under rho-resampling of every input.
    #[arg(long)]
    pub rho: Option<f64>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct PercolationArgs {
    /// Side lengths: `a..b` inclusive, `a..b/step`, or a single value.
    #[arg(long)]
    pub n: String,
    /// Comma-separated correlation values.
    #[arg(long, default_value = "0.9")]
    pub rho: String,
    /// Exact Fourier weight profile instead of Monte Carlo stability.
    #[arg(long)]
    pub spectrum: bool,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DemoName {
    /// The first input plus ten times recursive majority.
    #[value(alias = "example-1.4")]
    MajPlusFirst,
    /// Alternating cos(πx) and arccos(x)/π layers on uniform inputs.
    CosArccos,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    #[arg(long, value_enum)]
    pub name: DemoName,
    #[arg(long, default_value_t = 2)]
    pub depth: usize,
    #[arg(long, default_value_t = 0.9)]
    pub rho: f64,
    #[command(flatten)]
    pub common: Common,
}

impl Command {
    pub fn common(&self) -> &Common {
        match self {
            Command::Analyze(a) => &a.common,
            Command::Hierarchy(a) => &a.common,
            Command::Decay(a) => &a.common,
            Command::Maxcorr(a) => &a.common,
            Command::Es(a) => &a.common,
            Command::Percolation(a) => &a.common,
            Command::Demo(a) => &a.common,
        }
    }
}

/// Non-negative integer counts, also written in scientific notation.
pub fn parse_count(s: &str) -> Result<usize, String> {
    if let Ok(n) = s.parse::<usize>() {
        return Ok(n);
    }
    let v: f64 = s.parse().map_err(|_| format!("{s:?} is not a count"))?;
    if v >= 0.0 && v.fract() == 0.0 && v <= usize::MAX as f64 {
        Ok(v as usize)
    } else {
        Err(format!("{s:?} is not a whole non-negative count"))
    }
}

/// `a..b` inclusive, `a..b/step`, or a single integer.
pub fn parse_range(s: &str) -> Result<Vec<usize>, String> {
    let int = |t: &str| {
        t.trim()
            .parse::<usize>()
            .map_err(|_| format!("bad integer {t:?} in range {s:?}"))
    };
    let Some((lo, rest)) = s.split_once("..") else {
        return Ok(vec![int(s)?]);
    };
    let (hi, step) = match rest.split_once('/') {
        Some((hi, step)) => (int(hi)?, int(step)?),
        None => (int(rest)?, 1),
    };
    let lo = int(lo)?;
    if step == 0 {
        return Err(format!("range {s:?} has step 0"));
    }
    if lo > hi {
        return Err(format!("range {s:?} is empty"));
    }
    Ok((lo..=hi).step_by(step).collect())
}

pub fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| format!("bad number {t:?} in {s:?}"))
        })
        .collect()
}
