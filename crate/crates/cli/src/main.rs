//! `rpl`: seeded experiment runs over the polymer library.
//!
//! Every run writes CSV/JSON artifacts and a `manifest.json` into `--out`.
//! Exit codes: 0 success, 1 a checked criterion failed, 2 bad config or a
//! run that could not be carried out.

mod commands;
mod config;
mod plot;

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("run failed: {0}")]
    Run(String),
}

impl From<rpl_core::experiments::ExperimentError> for CliError {
    fn from(e: rpl_core::experiments::ExperimentError) -> Self {
        use rpl_core::experiments::ExperimentError as E;
        match e {
            E::Config(s) => CliError::Config(s),
            e => CliError::Run(e.to_string()),
        }
    }
}

/// Outcome of a successful run.
pub enum Status {
    Ok,
    CriterionFailed,
}

#[derive(Parser, Debug)]
#[command(name = "rpl", version = env!("RPL_BUILD_ID"), about = "Range-penalized polymer experiments")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// JSON config for the subcommand (or a manifest of an earlier run).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads (falls back to RPL_THREADS, then all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Draw an i.i.d. environment on a window.
    GenEnv(GenEnvArgs),
    /// Exact law of the range; optionally checked against an oracle.
    RangeLaw(RangeLawArgs),
    /// Partition functions over independent environments.
    Partition(PartitionArgs),
    /// Coupled expansion of log Z (second and third order).
    Expansion(ExpansionArgs),
    /// Exact endpoint marginal and the law of |M-|/T*.
    EndpointLaw(EndpointArgs),
    /// Process toolkit checks (meander, excursion, Bessel-3).
    Processes(ProcessesArgs),
    /// Variational problems: Chernoff argmax or the third-order W2.
    Varprob(VarprobArgs),
    /// Half-line polymer partition functions.
    Halfline(ReplicaArgs),
    /// Local-limit or stable-exponent probe.
    Probe(ProbeArgs),
    /// Evaluate the acceptance criteria.
    Accept(AcceptArgs),
    /// SVG plot of CSV columns.
    Plot(PlotArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum LawArg {
    Gaussian,
    TwoPoint,
    Uniform,
    Stable,
}

#[derive(Args, Debug)]
pub struct LawFlags {
    #[arg(long, value_enum)]
    pub law: Option<LawArg>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long)]
    pub half_width: Option<f64>,
}

#[derive(Args, Debug)]
pub struct GenEnvArgs {
    #[command(flatten)]
    pub law: LawFlags,
    #[arg(long, allow_hyphen_values = true)]
    pub lo: Option<i64>,
    #[arg(long, allow_hyphen_values = true)]
    pub hi: Option<i64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Oracle {
    None,
    Enumerate,
    Dp,
}

#[derive(Args, Debug)]
pub struct RangeLawArgs {
    /// Comma-separated walk lengths (`1e4` notation allowed).
    #[arg(long, value_delimiter = ',', value_parser = parse_count)]
    pub n: Option<Vec<u64>>,
    #[arg(long, value_enum)]
    pub oracle: Option<Oracle>,
    /// Directory of the binary table cache.
    #[arg(long)]
    pub cache: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PolymerFlags {
    #[arg(long, value_delimiter = ',', value_parser = parse_count)]
    pub n: Option<Vec<u64>>,
    #[arg(long)]
    pub h: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub replicas: Option<u64>,
}

#[derive(Args, Debug)]
pub struct PartitionArgs {
    #[command(flatten)]
    pub poly: PolymerFlags,
    #[command(flatten)]
    pub law: LawFlags,
}

#[derive(Args, Debug)]
pub struct ExpansionArgs {
    #[command(flatten)]
    pub poly: PolymerFlags,
}

#[derive(Args, Debug)]
pub struct EndpointArgs {
    #[command(flatten)]
    pub poly: PolymerFlags,
    #[command(flatten)]
    pub law: LawFlags,
}

#[derive(Args, Debug)]
pub struct ProcessesArgs {
    #[arg(long, value_parser = parse_count)]
    pub samples: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarKind {
    Chernoff,
    W2,
}

#[derive(Args, Debug)]
pub struct VarprobArgs {
    #[arg(long, value_enum)]
    pub kind: Option<VarKind>,
    #[arg(long, value_parser = parse_count)]
    pub replicas: Option<u64>,
}

#[derive(Args, Debug)]
pub struct ReplicaArgs {
    #[command(flatten)]
    pub poly: PolymerFlags,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeKind {
    LocalLimit,
    StableExponent,
}

#[derive(Args, Debug)]
pub struct ProbeArgs {
    #[arg(long, value_enum)]
    pub kind: Option<ProbeKind>,
    #[command(flatten)]
    pub poly: PolymerFlags,
}

#[derive(Args, Debug)]
pub struct AcceptArgs {
    /// Comma-separated criterion ids; all when absent.
    #[arg(long, value_delimiter = ',')]
    pub only: Vec<u8>,
}

#[derive(Args, Debug)]
pub struct PlotArgs {
    /// CSV file to plot.
    pub input: PathBuf,
    #[arg(long, default_value = "n")]
    pub x: String,
    /// Columns against `x`; repeat or comma-separate.
    #[arg(long, value_delimiter = ',')]
    pub y: Vec<String>,
    #[arg(long)]
    pub logx: bool,
    #[arg(long)]
    pub logy: bool,
    #[arg(long)]
    pub scatter: bool,
    /// Histogram of this column instead of a line plot.
    #[arg(long)]
    pub hist: Option<String>,
    /// Weight column for `--hist`.
    #[arg(long)]
    pub weight: Option<String>,
    #[arg(long, default_value_t = 40)]
    pub bins: usize,
    /// Overlay the density (pi/2) sin(pi v) on [0, 1].
    #[arg(long)]
    pub sine: bool,
    #[arg(long)]
    pub title: Option<String>,
    /// Output file name inside `--out` (default: input stem + .svg).
    #[arg(long)]
    pub name: Option<String>,
}

/// Accepts `1000`, `1e4`, `2.5e5`; rejects non-integers.
fn parse_count(s: &str) -> Result<u64, String> {
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    let f: f64 = s.parse().map_err(|_| format!("not a number: {s}"))?;
    if f >= 0.0 && f.fract() == 0.0 && f < 1.8e19 {
        Ok(f as u64)
    } else {
        Err(format!("not a non-negative integer: {s}"))
    }
}

fn threads(g: &Global) -> Result<(), CliError> {
    let n = match g.threads {
        Some(n) => Some(n),
        None => match std::env::var("RPL_THREADS") {
            Ok(s) => Some(s.trim().parse().map_err(|_| CliError::Config(format!("RPL_THREADS={s}")))?),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    // `rpl run <cmd>` is accepted as an alias of `rpl <cmd>`.
    let mut argv: Vec<String> = std::env::args().collect();
    if argv.get(1).map(String::as_str) == Some("run") {
        argv.remove(1);
    }
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let res = threads(&cli.global).and_then(|_| {
        let g = &cli.global;
        match &cli.cmd {
            Cmd::GenEnv(a) => commands::gen_env(g, a),
            Cmd::RangeLaw(a) => commands::range_law(g, a),
            Cmd::Partition(a) => commands::partition(g, a),
            Cmd::Expansion(a) => commands::expansion(g, a),
            Cmd::EndpointLaw(a) => commands::endpoint_law(g, a),
            Cmd::Processes(a) => commands::processes(g, a),
            Cmd::Varprob(a) => commands::varprob(g, a),
            Cmd::Halfline(a) => commands::halfline(g, a),
            Cmd::Probe(a) => commands::probe(g, a),
            Cmd::Accept(a) => commands::accept(g, a),
            Cmd::Plot(a) => commands::plot(g, a),
        }
    });
    match res {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::CriterionFailed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("rpl: {e}");
            ExitCode::from(2)
        }
    }
}
