// argument guards use `!(x > 0.0)` on purpose: the negated form also rejects
// NaN, which `x <= 0.0` would let through
#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! `adtail`: numerical laboratory for tails of strongly additive functions.
//!
//! Exit codes: 0 ok, 2 configuration/domain, 3 numeric/range, 4 resource.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::Resolved;
use config::FileConfig;

#[derive(Parser)]
#[command(
    name = "adtail",
    version,
    about = "tail laboratory for additive arithmetic functions"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Debug, Default)]
struct CommonArgs {
    /// experiment config file (JSON); flags override its fields
    #[arg(long)]
    config: Option<PathBuf>,
    /// additive function: omega | frac:NUM/DEN | table:PATH
    #[arg(long = "fn")]
    fn_spec: Option<String>,
    /// upper bound x (accepts 1e6 style)
    #[arg(long)]
    x: Option<f64>,
    /// truncation bound y for f(n;y)
    #[arg(long)]
    y: Option<f64>,
    /// deviation grid a:b:step, endpoints included
    #[arg(long)]
    deltas: Option<String>,
    /// value distribution: atom:T | empirical | FILE
    #[arg(long)]
    psi: Option<String>,
    /// normalization scale: sigma | B
    #[arg(long)]
    normalize: Option<String>,
    /// model tail method: dp | mc
    #[arg(long)]
    method: Option<String>,
    /// Monte-Carlo sample count
    #[arg(long)]
    samples: Option<u64>,
    /// Monte-Carlo seed
    #[arg(long)]
    seed: Option<u64>,
    /// DP lattice step
    #[arg(long)]
    grid_step: Option<f64>,
    /// prediction level: normal | s | full
    #[arg(long)]
    level: Option<String>,
    /// series order K
    #[arg(long)]
    k: Option<usize>,
    /// prime cutoff for Euler products
    #[arg(long)]
    p_limit: Option<u64>,
    /// output path (stdout when absent)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Prime statistics and the empirical tail table
    Sieve(CommonArgs),
    /// Tail of the truncated function f(n;y)
    Tail(CommonArgs),
    /// Kubilius-model tail (exact DP or Monte Carlo)
    Model(CommonArgs),
    /// Saddle-point tail predictions
    Asym(CommonArgs),
    /// Large-deviation series coefficients
    Series(CommonArgs),
    /// Side-by-side report: empirical vs model vs predictions
    Compare(CommonArgs),
}

fn resolve(args: CommonArgs) -> adtail_core::Result<Resolved> {
    let file = match &args.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let flags = Resolved {
        fn_spec: args.fn_spec,
        x: args.x,
        y: args.y,
        deltas: args.deltas,
        psi: args.psi,
        normalize: args.normalize,
        method: args.method,
        samples: args.samples,
        seed: args.seed,
        grid_step: args.grid_step,
        level: args.level,
        k: args.k,
        p_limit: args.p_limit,
        out: args.out,
    };
    Ok(Resolved::merge(flags, file))
}

fn run(cmd: Cmd) -> adtail_core::Result<()> {
    match cmd {
        Cmd::Sieve(a) => commands::cmd_sieve(&resolve(a)?),
        Cmd::Tail(a) => commands::cmd_tail(&resolve(a)?),
        Cmd::Model(a) => commands::cmd_model(&resolve(a)?),
        Cmd::Asym(a) => commands::cmd_asym(&resolve(a)?),
        Cmd::Series(a) => commands::cmd_series(&resolve(a)?),
        Cmd::Compare(a) => commands::cmd_compare(&resolve(a)?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // keep clap's help/version on stdout with code 0; real parse
            // errors land on the config exit code
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("adtail: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
