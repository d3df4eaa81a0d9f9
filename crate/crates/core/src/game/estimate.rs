use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::play::{play, play_timed, EndState, GameSetup, Trajectory};
use super::sampling::trial_rng;
use super::strategy::Strategy;
use crate::error::{invalid, Error, Result};
use crate::payoff::{Payoff, TimedPayoff};
use crate::stats::summarize;

/// Monte Carlo estimate; serializes to the documented JSON object.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub ci95_lo: f64,
    pub ci95_hi: f64,
    pub trials: usize,
    pub capped_fraction: f64,
    pub seed: u64,
}

impl ValueEstimate {
    fn from_samples(samples: &[f64], capped: usize, seed: u64) -> Result<Self> {
        let trials = samples.len();
        if capped == trials {
            return Err(Error::AllTrialsCapped(trials));
        }
        let s = summarize(samples);
        let capped_fraction = capped as f64 / trials as f64;
        if capped > 0 {
            log::warn!("{capped} of {trials} trials hit the round cap; estimate is biased by at most {capped_fraction} osc(F)");
        }
        Ok(Self {
            mean: s.mean,
            std_error: s.std_error,
            ci95_lo: s.mean - 1.96 * s.std_error,
            ci95_hi: s.mean + 1.96 * s.std_error,
            trials,
            capped_fraction,
            seed,
        })
    }

    /// No trial was capped.
    pub fn reliable(&self) -> bool {
        self.capped_fraction == 0.0
    }

    /// `|mean - target| <= max(k std_error, floor)`.
    pub fn agrees_with(&self, target: f64, k: f64, floor: f64) -> bool {
        (self.mean - target).abs() <= (k * self.std_error).max(floor)
    }
}

fn run_trials<F>(trials: usize, seed: u64, one: F) -> Result<Vec<(f64, usize, EndState)>>
where
    F: Fn(u64) -> Result<Trajectory> + Sync,
{
    if trials < 1 {
        return Err(invalid("need at least one trial"));
    }
    let _ = seed;
    (0..trials as u64)
        .into_par_iter()
        .map(|i| one(i).map(|t| (t.payoff, t.rounds, t.end_state)))
        .collect()
}

/// Mean payoff over `trials` independent games; trial `i` draws from
/// `trial_rng(seed, i)` so the estimate does not depend on scheduling.
pub fn estimate_value(
    setup: &GameSetup,
    start: &[f64],
    s1: &dyn Strategy,
    s2: &dyn Strategy,
    payoff: &dyn Payoff,
    trials: usize,
    seed: u64,
) -> Result<ValueEstimate> {
    setup.check_start(start)?;
    let out = run_trials(trials, seed, |i| play(setup, start, s1, s2, payoff, &mut trial_rng(seed, i)))?;
    let payoffs: Vec<f64> = out.iter().map(|o| o.0).collect();
    let capped = out.iter().filter(|o| o.2 == EndState::Capped).count();
    ValueEstimate::from_samples(&payoffs, capped, seed)
}

/// Timed counterpart of [`estimate_value`].
#[allow(clippy::too_many_arguments)]
pub fn estimate_timed_value(
    setup: &GameSetup,
    start: &[f64],
    t0: f64,
    s1: &dyn Strategy,
    s2: &dyn Strategy,
    payoff: &dyn TimedPayoff,
    trials: usize,
    seed: u64,
) -> Result<ValueEstimate> {
    setup.check_start(start)?;
    let out = run_trials(trials, seed, |i| play_timed(setup, start, t0, s1, s2, payoff, &mut trial_rng(seed, i)))?;
    let payoffs: Vec<f64> = out.iter().map(|o| o.0).collect();
    ValueEstimate::from_samples(&payoffs, 0, seed)
}

/// Mean number of rounds until exit. Capped trials count with the cap.
pub fn estimate_rounds(
    setup: &GameSetup,
    start: &[f64],
    s1: &dyn Strategy,
    s2: &dyn Strategy,
    trials: usize,
    seed: u64,
) -> Result<ValueEstimate> {
    setup.check_start(start)?;
    let zero = |_: &[f64]| 0.0;
    let out = run_trials(trials, seed, |i| play(setup, start, s1, s2, &zero, &mut trial_rng(seed, i)))?;
    let rounds: Vec<f64> = out.iter().map(|o| o.1 as f64).collect();
    let capped = out.iter().filter(|o| o.2 == EndState::Capped).count();
    ValueEstimate::from_samples(&rounds, capped, seed)
}
