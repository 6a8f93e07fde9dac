//! Command line surface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "morsescope",
    version,
    about = "Certified Morse decompositions and Conley indices for ODE flows"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Run the pipeline and write report.json, morse.dot, and morse.svg.
    ///
    /// Exit codes: 0 done, 2 bad configuration, 3 verification rejected,
    /// 4 more than half of all cells failed to integrate. Code 2 beats 4
    /// beats 3 when several apply; partial artifacts are still written
    /// for 3 and 4.
    Analyze(AnalyzeArgs),
    /// Redraw the SVG figure from an existing report.
    Render(RenderArgs),
    /// Run the embedded fixture battery and report pass/fail per fixture.
    Selftest(SelftestArgs),
}

#[derive(Args)]
pub struct AnalyzeArgs {
    /// JSON config file; flags override file values.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Builtin system name (two_cycles, circle_demo, linear).
    #[arg(long, value_name = "NAME")]
    pub system: Option<String>,
    /// Parameter assignment, repeatable.
    #[arg(long = "param", value_name = "NAME=VALUE")]
    pub params: Vec<String>,
    /// Vector field component, one per dimension in order, repeatable.
    #[arg(long = "expr", value_name = "EXPR", conflicts_with = "system")]
    pub exprs: Vec<String>,
    /// Domain box, one lo:hi range per axis.
    #[arg(long, value_name = "LO:HI,...", allow_hyphen_values = true)]
    pub domain: Option<String>,
    /// Uniform subdivision depth: every axis gets 2^DEPTH cells.
    #[arg(long, value_name = "DEPTH", conflicts_with = "divisions")]
    pub depth: Option<u32>,
    /// Explicit per-axis cell counts.
    #[arg(long, value_name = "K1,K2,...")]
    pub divisions: Option<String>,
    /// Time-step strategy.
    #[arg(long, value_parser = ["fixed", "adaptive"])]
    pub strategy: Option<String>,
    /// Step time for the fixed strategy.
    #[arg(long, value_name = "H")]
    pub h: Option<f64>,
    /// Step scale for the adaptive strategy.
    #[arg(long = "D", value_name = "D")]
    pub d: Option<f64>,
    /// Speed floor for the adaptive strategy.
    #[arg(long, value_name = "DELTA")]
    pub delta: Option<f64>,
    /// Taylor order of the validated integrator, 1 to 5.
    #[arg(long, value_name = "ORDER")]
    pub order: Option<usize>,
    /// Collar layers around each Morse set for index pairs.
    #[arg(long, value_name = "LAYERS")]
    pub collar: Option<u32>,
    /// Check flow-level certification of the decomposition.
    #[arg(long)]
    pub verify: bool,
    /// Compute per-set homological Conley indices.
    #[arg(long)]
    pub index: bool,
    /// Output directory for all artifacts.
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
    /// Worker threads; falls back to MORSESCOPE_WORKERS, then all cores.
    #[arg(long, value_name = "N")]
    pub workers: Option<usize>,
}

#[derive(Args)]
pub struct RenderArgs {
    /// Report to draw from; it must carry cell lists.
    #[arg(long, value_name = "FILE")]
    pub report: PathBuf,
    /// Output SVG path; defaults to morse.svg next to the report.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct SelftestArgs {
    /// Deliberately corrupt one fixture to exercise the failure path.
    #[arg(long, hide = true)]
    pub tamper: bool,
}
