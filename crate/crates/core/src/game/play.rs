use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::sampling::sample_step_into;
use super::strategy::{History, Strategy};
use crate::dpp::parabolic::steps_for;
use crate::error::{invalid, Error, Result};
use crate::geometry::{norm_diff, Domain};
use crate::io::fmt_f64;
use crate::lattice::Lattice;
use crate::params::GameParams;
use crate::payoff::{Payoff, TimedPayoff};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Toss {
    #[serde(rename = "player_I")]
    PlayerI,
    #[serde(rename = "player_II")]
    PlayerII,
    #[serde(rename = "noise")]
    Noise,
}

impl Toss {
    pub fn as_str(self) -> &'static str {
        match self {
            Toss::PlayerI => "player_I",
            Toss::PlayerII => "player_II",
            Toss::Noise => "noise",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndState {
    Exited,
    TimeOut,
    Capped,
}

/// Law of the random step.
#[derive(Clone, Debug)]
pub enum Noise {
    /// Uniform on the open ball `B_eps(x)`.
    UniformBall,
    /// `x ± eps e_i` with `i` uniform: the discrete walk of the one dimensional examples.
    AxisSteps,
    /// Uniform over the DPP stencil of the current lattice node. The game then
    /// realizes the lattice DPP exactly; positions must stay on lattice nodes.
    Stencil(Arc<Lattice>),
}

/// Everything but the strategies and the payoff.
#[derive(Clone, Debug)]
pub struct GameSetup {
    pub params: GameParams,
    pub domain: Domain,
    pub noise: Noise,
    pub round_cap: usize,
}

impl GameSetup {
    /// Uniform ball noise and the default cap `100 (diam / eps)^2`.
    pub fn new(params: GameParams, domain: Domain) -> Result<Self> {
        if params.n != domain.dim() {
            return Err(Error::DimensionMismatch { expected: domain.dim(), got: params.n });
        }
        let ratio = domain.diameter() / params.epsilon;
        let round_cap = (100.0 * ratio * ratio).ceil().clamp(1.0, 1e12) as usize;
        Ok(Self { params, domain, noise: Noise::UniformBall, round_cap })
    }

    pub fn with_noise(mut self, noise: Noise) -> Result<Self> {
        if let Noise::Stencil(lat) = &noise {
            if (lat.epsilon() - self.params.epsilon).abs() > 1e-12 * self.params.epsilon {
                return Err(Error::EpsilonMismatch { lattice: lat.epsilon(), params: self.params.epsilon });
            }
            if lat.domain() != &self.domain {
                return Err(invalid("stencil noise lattice is built on a different domain"));
            }
        }
        self.noise = noise;
        Ok(self)
    }

    pub fn with_round_cap(mut self, cap: usize) -> Result<Self> {
        if cap < 1 {
            return Err(invalid("round cap must be at least 1"));
        }
        self.round_cap = cap;
        Ok(self)
    }

    fn exit_slack(&self) -> f64 {
        match &self.noise {
            Noise::Stencil(lat) => 1e-9 * lat.spacing(),
            _ => 1e-9 * self.params.epsilon,
        }
    }

    pub(crate) fn exited(&self, x: &[f64]) -> bool {
        self.domain.signed_distance(x) > -self.exit_slack()
    }

    pub(crate) fn check_start(&self, start: &[f64]) -> Result<()> {
        self.domain.check_point(start)?;
        if self.exited(start) {
            return Err(invalid("start point must lie inside the domain"));
        }
        if let Noise::Stencil(lat) = &self.noise {
            stencil_node(lat, start)?;
        }
        Ok(())
    }
}

/// A played game.
#[derive(Clone, Debug, Serialize)]
pub struct Trajectory {
    pub dim: usize,
    /// Flat positions `x_0, ..., x_rounds`.
    pub positions: Vec<f64>,
    pub toss_log: Vec<Toss>,
    /// Remaining time after each position; empty for the time-free game.
    pub t_remaining: Vec<f64>,
    pub end_state: EndState,
    pub rounds: usize,
    pub payoff: f64,
}

impl Trajectory {
    pub fn position(&self, k: usize) -> &[f64] {
        &self.positions[k * self.dim..(k + 1) * self.dim]
    }

    pub fn final_position(&self) -> &[f64] {
        self.position(self.rounds)
    }
}

fn stencil_node(lat: &Lattice, x: &[f64]) -> Result<usize> {
    let node = lat.nearest_node(x).ok_or_else(|| invalid("position is not covered by the noise lattice"))?;
    if norm_diff(lat.point(node), x) > 1e-9 * lat.spacing() {
        return Err(invalid("stencil noise needs positions on lattice nodes"));
    }
    Ok(node)
}

#[allow(clippy::too_many_arguments)]
fn round<R: Rng + ?Sized>(
    setup: &GameSetup,
    history: &History,
    x: &mut Vec<f64>,
    s1: &dyn Strategy,
    s2: &dyn Strategy,
    rng: &mut R,
) -> Result<Toss> {
    let p = &setup.params;
    let eps = p.epsilon;
    let u: f64 = rng.random();
    let toss = if u < 0.5 * p.alpha {
        Toss::PlayerI
    } else if u < p.alpha {
        Toss::PlayerII
    } else {
        Toss::Noise
    };
    match toss {
        Toss::PlayerI | Toss::PlayerII => {
            let s = if toss == Toss::PlayerI { s1 } else { s2 };
            let y = s.next_move(history, x, eps)?;
            if y.len() != x.len() {
                return Err(Error::DimensionMismatch { expected: x.len(), got: y.len() });
            }
            let d = norm_diff(&y, x);
            if !(d < eps) {
                return Err(Error::StrategyViolation { distance: d, epsilon: eps });
            }
            *x = y;
        }
        Toss::Noise => match &setup.noise {
            Noise::UniformBall => {
                let mut step = vec![0.0; x.len()];
                sample_step_into(rng, eps, &mut step);
                for (a, s) in x.iter_mut().zip(step) {
                    *a += s;
                }
            }
            Noise::AxisSteps => {
                let a = rng.random_range(0..x.len());
                if rng.random::<bool>() {
                    x[a] += eps;
                } else {
                    x[a] -= eps;
                }
            }
            Noise::Stencil(lat) => {
                let node = stencil_node(lat, x)?;
                let k = rng.random_range(0..lat.stencil_size());
                let j = lat.neighbors(node).nth(k).expect("stencil index in range");
                x.copy_from_slice(lat.point(j));
            }
        },
    }
    Ok(toss)
}

/// Plays the time-free game from `start` until the token leaves the domain
/// or the round cap is reached.
pub fn play<R: Rng + ?Sized>(
    setup: &GameSetup,
    start: &[f64],
    s1: &dyn Strategy,
    s2: &dyn Strategy,
    payoff: &dyn Payoff,
    rng: &mut R,
) -> Result<Trajectory> {
    setup.check_start(start)?;
    let mut history = History::new(start);
    let mut x = start.to_vec();
    let mut rounds = 0;
    let end_state = loop {
        if rounds >= setup.round_cap {
            break EndState::Capped;
        }
        let toss = round(setup, &history, &mut x, s1, s2, rng)?;
        rounds += 1;
        history.push(toss, &x);
        if setup.exited(&x) {
            break EndState::Exited;
        }
    };
    let value = match end_state {
        EndState::Capped => payoff.eval(&setup.domain.nearest_boundary_point(&x)),
        _ => payoff.eval(&x),
    };
    let (positions, toss_log) = history.into_parts();
    Ok(Trajectory { dim: start.len(), positions, toss_log, t_remaining: Vec::new(), end_state, rounds, payoff: value })
}

/// Plays the time-tracking game: every round consumes `eps^2 / 2` of the
/// remaining time `t0`, and the game stops on exit or when time runs out.
pub fn play_timed<R: Rng + ?Sized>(
    setup: &GameSetup,
    start: &[f64],
    t0: f64,
    s1: &dyn Strategy,
    s2: &dyn Strategy,
    payoff: &dyn TimedPayoff,
    rng: &mut R,
) -> Result<Trajectory> {
    if !(t0 > 0.0) || !t0.is_finite() {
        return Err(invalid(format!("initial time t0 = {t0} must be positive and finite")));
    }
    setup.check_start(start)?;
    let eps = setup.params.epsilon;
    let dt = 0.5 * eps * eps;
    let total = steps_for(t0, eps);
    let remaining = |j: usize| if j >= total { 0.0 } else { (t0 - j as f64 * dt).max(0.0) };
    let mut history = History::new(start);
    let mut x = start.to_vec();
    let mut times = vec![t0];
    let mut rounds = 0;
    let end_state = loop {
        if rounds >= total {
            break EndState::TimeOut;
        }
        let toss = round(setup, &history, &mut x, s1, s2, rng)?;
        rounds += 1;
        history.push(toss, &x);
        times.push(remaining(rounds));
        if setup.exited(&x) {
            break EndState::Exited;
        }
    };
    let value = payoff.eval(&x, remaining(rounds));
    let (positions, toss_log) = history.into_parts();
    Ok(Trajectory { dim: start.len(), positions, toss_log, t_remaining: times, end_state, rounds, payoff: value })
}

/// CSV with header `round,x1..xn,toss,t_remaining`. Round 0 is the start
/// and has an empty toss; `t_remaining` is empty for time-free games.
pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["round".to_string()];
    header.extend((1..=traj.dim).map(|i| format!("x{i}")));
    header.extend(["toss", "t_remaining"].map(String::from));
    w.write_record(&header)?;
    for r in 0..=traj.rounds {
        let mut row = vec![r.to_string()];
        row.extend(traj.position(r).iter().map(|&v| fmt_f64(v)));
        row.push(if r == 0 { String::new() } else { traj.toss_log[r - 1].as_str().to_string() });
        row.push(traj.t_remaining.get(r).map(|&t| fmt_f64(t)).unwrap_or_default());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
