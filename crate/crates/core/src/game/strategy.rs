use serde::{Deserialize, Serialize};

use super::play::Toss;
use crate::error::{Error, Result};
use crate::geometry::norm_diff;
use crate::lattice::{LatticeField, NodeClass};

/// Positions visited so far (including the current one) and the toss of
/// every completed round.
#[derive(Clone, Debug, Default)]
pub struct History {
    dim: usize,
    positions: Vec<f64>,
    tosses: Vec<Toss>,
}

impl History {
    pub(crate) fn new(start: &[f64]) -> Self {
        Self { dim: start.len(), positions: start.to_vec(), tosses: Vec::new() }
    }

    pub(crate) fn push(&mut self, toss: Toss, x: &[f64]) {
        self.tosses.push(toss);
        self.positions.extend_from_slice(x);
    }

    pub fn len(&self) -> usize {
        self.positions.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn position(&self, k: usize) -> &[f64] {
        &self.positions[k * self.dim..(k + 1) * self.dim]
    }

    pub fn tosses(&self) -> &[Toss] {
        &self.tosses
    }

    pub(crate) fn into_parts(self) -> (Vec<f64>, Vec<Toss>) {
        (self.positions, self.tosses)
    }
}

/// Rule choosing the next position. The result must lie in the open
/// `epsilon` ball of `current`.
pub trait Strategy: Send + Sync {
    fn next_move(&self, history: &History, current: &[f64], epsilon: f64) -> Result<Vec<f64>>;
}

impl<F> Strategy for F
where
    F: Fn(&History, &[f64], f64) -> Result<Vec<f64>> + Send + Sync,
{
    fn next_move(&self, history: &History, current: &[f64], epsilon: f64) -> Result<Vec<f64>> {
        self(history, current, epsilon)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Maximize,
    Minimize,
}

/// Moves to the lattice node of the open ball with the largest (or
/// smallest) field value; the first such node in node order wins ties.
#[derive(Clone, Debug)]
pub struct Greedy {
    field: LatticeField,
    mode: Mode,
}

pub fn greedy_strategy(field: LatticeField, mode: Mode) -> Greedy {
    Greedy { field, mode }
}

impl Greedy {
    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn field(&self) -> &LatticeField {
        &self.field
    }

    /// Node chosen from `current`.
    pub fn choose(&self, current: &[f64], epsilon: f64) -> Result<usize> {
        let lat = self.field.lattice();
        if current.len() != lat.dim() {
            return Err(Error::DimensionMismatch { expected: lat.dim(), got: current.len() });
        }
        let reach = epsilon * (1.0 - 1e-9);
        let lo: Vec<f64> = current.iter().map(|v| v - epsilon).collect();
        let hi: Vec<f64> = current.iter().map(|v| v + epsilon).collect();
        let mut best: Option<(usize, f64)> = None;
        for i in lat.nodes_in_box(&lo, &hi) {
            if lat.class(i) == NodeClass::Outside {
                continue;
            }
            let d = norm_diff(lat.point(i), current);
            if d == 0.0 || d >= reach {
                continue;
            }
            let v = self.field.value(i);
            let better = match (best, self.mode) {
                (None, _) => true,
                (Some((_, b)), Mode::Maximize) => v > b,
                (Some((_, b)), Mode::Minimize) => v < b,
            };
            if better {
                best = Some((i, v));
            }
        }
        best.map(|(i, _)| i).ok_or(Error::NoCandidates)
    }
}

impl Strategy for Greedy {
    fn next_move(&self, _history: &History, current: &[f64], epsilon: f64) -> Result<Vec<f64>> {
        let i = self.choose(current, epsilon)?;
        Ok(self.field.lattice().point(i).to_vec())
    }
}

/// Steps `(1 - 1e-6) epsilon` toward a fixed target, or onto it when it is
/// closer than `epsilon`.
#[derive(Clone, Debug, PartialEq)]
pub struct PullToward {
    target: Vec<f64>,
}

pub fn pull_toward(target: Vec<f64>) -> PullToward {
    PullToward { target }
}

impl PullToward {
    pub fn target(&self) -> &[f64] {
        &self.target
    }
}

impl Strategy for PullToward {
    fn next_move(&self, _history: &History, current: &[f64], epsilon: f64) -> Result<Vec<f64>> {
        if current.len() != self.target.len() {
            return Err(Error::DimensionMismatch { expected: self.target.len(), got: current.len() });
        }
        let d = norm_diff(&self.target, current);
        if d < epsilon {
            return Ok(self.target.clone());
        }
        let s = (1.0 - 1e-6) * epsilon / d;
        Ok(current.iter().zip(&self.target).map(|(c, t)| c + s * (t - c)).collect())
    }
}
