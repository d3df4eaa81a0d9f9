//! Numerical lab for tug-of-war games with noise and the p-Laplacian.
//!
//! The crate solves the epsilon-step dynamic programming principle on lattices,
//! plays the game by Monte Carlo, measures asymptotic mean value expansions and
//! probes the regularity estimates behind the convergence of game values.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dpp;
pub mod error;
pub mod game;
pub mod geometry;
pub mod io;
pub mod lattice;
pub mod mean_value;
pub mod oracles;
pub mod params;
pub mod payoff;
pub mod regularity;
pub mod stats;

pub use dpp::{
    apply_t, defect, initial_field, parabolic_defect, running_payoff_solve, solve, solve_parabolic, SolveOptions,
    SolveReport, SpaceTimeField, Sweep,
};
pub use error::{Error, Result};
pub use game::{
    estimate_rounds, estimate_timed_value, estimate_value, greedy_strategy, play, play_timed, pull_toward,
    sample_uniform_ball, trial_rng, EndState, GameSetup, Mode, Noise, Strategy, Toss, Trajectory, ValueEstimate,
};
pub use geometry::{strip_contains, Domain, Shape};
pub use lattice::{build_lattice, Closure, Lattice, LatticeField, NodeClass, Stencil};
pub use params::{probabilities, GameParams};
pub use payoff::{Payoff, TimedPayoff};
pub use mean_value::{
    ball_extrema, fd_normalized_p_laplacian, mv_limit, mv_residual, mv_value, parabolic_mv_residual, BallRule, Builtin,
    MvLimit, MvOptions, TestFunction,
};
pub use oracles::{discrete_2d_value, discrete_hitting_value, discrete_running_time, DiscreteWalkSpec, GridSpec};
pub use regularity::{
    bottom_escape_probability, cylinder_walk, exit_time_moment_check, fit_l, harnack_ratio, lipschitz_quotient,
    CylinderConfig, Face,
};
