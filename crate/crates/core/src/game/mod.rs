//! Monte Carlo tug-of-war with noise.
//!
//! Each round a single categorical draw decides the move: Player I with
//! probability `alpha/2`, Player II with `alpha/2`, a random step with `beta`.

mod estimate;
mod play;
mod sampling;
mod strategy;

pub use estimate::{estimate_rounds, estimate_timed_value, estimate_value, ValueEstimate};
pub use play::{play, play_timed, write_trajectory_csv, EndState, GameSetup, Noise, Toss, Trajectory};
pub use sampling::{sample_uniform_ball, trial_rng, TrialRng};
pub(crate) use sampling::sample_step_into as sampling_step;
pub use strategy::{greedy_strategy, pull_toward, Greedy, History, Mode, PullToward, Strategy};
