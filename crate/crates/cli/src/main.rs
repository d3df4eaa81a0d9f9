//! `towlab`: command-line front end for the tug-of-war numerical lab.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod settings;
mod specs;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Default output directory; overridden by `TOWLAB_OUT_DIR` and `--out-dir`.
pub const DEFAULT_OUT_DIR: &str = "towlab-out";
pub const OUT_DIR_ENV: &str = "TOWLAB_OUT_DIR";

#[derive(Parser, Debug)]
#[command(name = "towlab", version, about = "Tug-of-war with noise: DPP solvers, Monte Carlo games and mean value diagnostics")]
pub struct Cli {
    /// Flat key=value config file; command-line flags override its entries.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Print the resolved effective config and exit.
    #[arg(long, global = true)]
    pub dump_config: bool,

    /// Worker threads for parallel loops (results do not depend on it).
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,

    /// Output directory [default: $TOWLAB_OUT_DIR or towlab-out].
    #[arg(long, global = true, value_name = "DIR")]
    pub out_dir: Option<String>,

    /// Prefix for output file names [default: the command name].
    #[arg(long, global = true, value_name = "NAME")]
    pub name: Option<String>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solve the elliptic DPP on a lattice.
    Solve(SolveArgs),
    /// March the parabolic DPP up to a horizon.
    SolveParabolic(ParabolicArgs),
    /// Estimate the game value by Monte Carlo.
    Value(ValueArgs),
    /// Cylinder walk: bottom escape probabilities over a sweep of start heights.
    Cylinder(CylinderArgs),
    /// Mean value residual table and its extrapolated limit.
    Mvp(MvpArgs),
    /// Exact solutions of the small discrete walks.
    Oracle(OracleArgs),
}

/// Shared lattice problem flags.
#[derive(Args, Debug, Default)]
pub struct ProblemArgs {
    /// interval:a,b | box:lo1,..,lon,hi1,..,hin | ball:c1,..,cn,r [default: interval:0,1]
    #[arg(long, allow_hyphen_values = true)]
    pub domain: Option<String>,
    /// Exponent p in [2, inf) [default: 2]
    #[arg(long, allow_hyphen_values = true)]
    pub p: Option<String>,
    /// Step size epsilon [default: 0.1]
    #[arg(long, allow_hyphen_values = true)]
    pub eps: Option<String>,
    /// Lattice refinement: spacing eps/k [default: 4]
    #[arg(long, allow_hyphen_values = true)]
    pub k: Option<String>,
    /// ball (open eps-ball stencil on spacing eps/k) | walk (axis steps of length eps) [default: ball]
    #[arg(long, allow_hyphen_values = true)]
    pub lattice: Option<String>,
    /// linear | quadratic | const:C | step:C [default: linear]
    #[arg(long, allow_hyphen_values = true)]
    pub payoff: Option<String>,
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Stopping tolerance on the sup-norm defect [default: 1e-10]
    #[arg(long, allow_hyphen_values = true)]
    pub tol: Option<String>,
    /// Sweep limit [default: derived from diam/eps and beta]
    #[arg(long, allow_hyphen_values = true)]
    pub max_sweeps: Option<String>,
    /// jacobi | gauss-seidel [default: jacobi]
    #[arg(long, allow_hyphen_values = true)]
    pub sweep: Option<String>,
    /// Comma separated eps list; writes the sup distance to the line u = x1 per eps [default: none]
    #[arg(long, allow_hyphen_values = true)]
    pub sweep_eps: Option<String>,
}

#[derive(Args, Debug)]
pub struct ParabolicArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Time horizon T [default: 1]
    #[arg(long, allow_hyphen_values = true)]
    pub horizon: Option<String>,
    /// Defect above which the run counts as not converged [default: 1e-10]
    #[arg(long, allow_hyphen_values = true)]
    pub tol: Option<String>,
}

#[derive(Args, Debug)]
pub struct ValueArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Starting point x1,..,xn [default: domain center]
    #[arg(long, allow_hyphen_values = true)]
    pub start: Option<String>,
    /// Player I (maximizer): greedy | greedy:FIELD.csv | pull:x1,..,xn [default: greedy]
    #[arg(long, allow_hyphen_values = true)]
    pub strategy_i: Option<String>,
    /// Player II (minimizer): greedy | greedy:FIELD.csv | pull:x1,..,xn [default: greedy]
    #[arg(long, allow_hyphen_values = true)]
    pub strategy_ii: Option<String>,
    /// ball | axis | stencil [default: ball]
    #[arg(long, allow_hyphen_values = true)]
    pub noise: Option<String>,
    /// Number of trials [default: 10000]
    #[arg(long, allow_hyphen_values = true)]
    pub trials: Option<String>,
    /// Master seed [default: 0]
    #[arg(long, allow_hyphen_values = true)]
    pub seed: Option<String>,
    /// Initial time for the timed game [default: none, time-free game]
    #[arg(long, allow_hyphen_values = true)]
    pub t0: Option<String>,
    /// Round cap per trial [default: 100 (diam/eps)^2]
    #[arg(long, allow_hyphen_values = true)]
    pub round_cap: Option<String>,
    /// Largest acceptable fraction of capped trials [default: 0.01]
    #[arg(long, allow_hyphen_values = true)]
    pub max_capped: Option<String>,
    /// Number of trajectories dumped as CSV [default: 0]
    #[arg(long, allow_hyphen_values = true)]
    pub trajectories: Option<String>,
    /// Tolerance of the in-process solve behind greedy [default: 1e-10]
    #[arg(long, allow_hyphen_values = true)]
    pub tol: Option<String>,
}

#[derive(Args, Debug)]
pub struct CylinderArgs {
    /// Base dimension n [default: 1]
    #[arg(long, allow_hyphen_values = true)]
    pub n: Option<String>,
    /// Cylinder radius r [default: 1]
    #[arg(long, allow_hyphen_values = true)]
    pub r: Option<String>,
    /// Step size epsilon [default: 0.05]
    #[arg(long, allow_hyphen_values = true)]
    pub eps: Option<String>,
    /// Tug-of-war probability alpha in [0, 1] [default: 1]
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Option<String>,
    /// Comma separated start heights [default: 0.05,0.1,0.2,0.4,0.8]
    #[arg(long, allow_hyphen_values = true)]
    pub ells: Option<String>,
    /// Trials per height [default: 20000]
    #[arg(long, allow_hyphen_values = true)]
    pub trials: Option<String>,
    /// Master seed [default: 0]
    #[arg(long, allow_hyphen_values = true)]
    pub seed: Option<String>,
    /// Also report exit time moments (needs alpha > 0) [default: false]
    #[arg(long, allow_hyphen_values = true)]
    pub moments: Option<String>,
    /// Largest acceptable fraction of capped trials [default: 0.01]
    #[arg(long, allow_hyphen_values = true)]
    pub max_capped: Option<String>,
}

#[derive(Args, Debug)]
pub struct MvpArgs {
    /// linear | quadratic | coord_quadratic | aronsson | radial:P0 | caloric [default: aronsson]
    #[arg(long, allow_hyphen_values = true)]
    pub phi: Option<String>,
    /// Point x1,..,xn [default: 1,0]
    #[arg(long, allow_hyphen_values = true)]
    pub x: Option<String>,
    /// Exponent p in (1, inf], `inf` allowed [default: inf]
    #[arg(long, allow_hyphen_values = true)]
    pub p: Option<String>,
    /// Strictly decreasing eps list, at least three values [default: 0.1,0.05,0.025,0.0125]
    #[arg(long, allow_hyphen_values = true)]
    pub eps: Option<String>,
    /// Quadrature cells per axis [default: 16]
    #[arg(long, allow_hyphen_values = true)]
    pub m: Option<String>,
    /// Use closed-form ball extrema when available [default: false]
    #[arg(long, allow_hyphen_values = true)]
    pub analytic: Option<String>,
}

#[derive(Args, Debug)]
pub struct OracleArgs {
    /// hitting | running | grid [default: hitting]
    #[arg(long, allow_hyphen_values = true)]
    pub kind: Option<String>,
    /// Left endpoint of the walk [default: 0]
    #[arg(long, allow_hyphen_values = true)]
    pub a: Option<String>,
    /// Right endpoint of the walk [default: 1]
    #[arg(long, allow_hyphen_values = true)]
    pub b: Option<String>,
    /// Walk step [default: 0.1]
    #[arg(long, allow_hyphen_values = true)]
    pub eps: Option<String>,
    /// Payoff at a [default: 0]
    #[arg(long, allow_hyphen_values = true)]
    pub left: Option<String>,
    /// Payoff at b [default: 1]
    #[arg(long, allow_hyphen_values = true)]
    pub right: Option<String>,
    /// Cost per step of the running walk [default: 1]
    #[arg(long, allow_hyphen_values = true)]
    pub cost: Option<String>,
    /// Interior grid nodes along x1 [default: 3]
    #[arg(long, allow_hyphen_values = true)]
    pub nx: Option<String>,
    /// Interior grid nodes along x2 [default: 3]
    #[arg(long, allow_hyphen_values = true)]
    pub ny: Option<String>,
    /// Grid spacing [default: 1]
    #[arg(long, allow_hyphen_values = true)]
    pub h: Option<String>,
    /// Grid corner x1,x2 [default: 0,0]
    #[arg(long, allow_hyphen_values = true)]
    pub origin: Option<String>,
    /// Payoff on the outer ring of the grid [default: linear]
    #[arg(long, allow_hyphen_values = true)]
    pub payoff: Option<String>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(failure) => {
            eprintln!("error: {:#}", failure.error);
            ExitCode::from(failure.code)
        }
    }
}
