//! Bounded domains and the outer boundary strip.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Shape {
    Interval { a: f64, b: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
}

/// A bounded open domain. Membership is strict: boundary points are outside.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    shape: Shape,
    dim: usize,
}

impl Domain {
    pub fn interval(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(invalid(format!("interval ({a}, {b}) must be bounded and nonempty")));
        }
        Ok(Self { shape: Shape::Interval { a, b }, dim: 1 })
    }

    pub fn cube(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(invalid("box corners must have the same positive dimension"));
        }
        for (l, h) in lo.iter().zip(&hi) {
            if !(l.is_finite() && h.is_finite() && l < h) {
                return Err(invalid(format!("box side ({l}, {h}) must be bounded and nonempty")));
            }
        }
        let dim = lo.len();
        Ok(Self { shape: Shape::Box { lo, hi }, dim })
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        if center.is_empty() || center.iter().any(|c| !c.is_finite()) {
            return Err(invalid("ball center must be a finite point"));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(invalid(format!("ball radius {radius} must be positive and finite")));
        }
        let dim = center.len();
        Ok(Self { shape: Shape::Ball { center, radius }, dim })
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() == self.dim {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected: self.dim, got: x.len() })
        }
    }

    /// Signed distance to the boundary: negative inside, positive outside.
    pub fn signed_distance(&self, x: &[f64]) -> f64 {
        match &self.shape {
            Shape::Interval { a, b } => {
                let c = 0.5 * (a + b);
                (x[0] - c).abs() - 0.5 * (b - a)
            }
            Shape::Box { lo, hi } => {
                let mut outside = 0.0;
                let mut inside = f64::NEG_INFINITY;
                for a in 0..self.dim {
                    let c = 0.5 * (lo[a] + hi[a]);
                    let q = (x[a] - c).abs() - 0.5 * (hi[a] - lo[a]);
                    if q > 0.0 {
                        outside += q * q;
                    }
                    inside = inside.max(q);
                }
                if outside > 0.0 {
                    outside.sqrt()
                } else {
                    inside
                }
            }
            Shape::Ball { center, radius } => norm_diff(x, center) - radius,
        }
    }

    /// Strict membership in the open domain.
    pub fn inside(&self, x: &[f64]) -> bool {
        self.signed_distance(x) < 0.0
    }

    /// Euclidean distance from `x` to the domain (zero inside).
    pub fn distance(&self, x: &[f64]) -> f64 {
        self.signed_distance(x).max(0.0)
    }

    /// Axis-aligned bounding box `(lo, hi)`.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match &self.shape {
            Shape::Interval { a, b } => (vec![*a], vec![*b]),
            Shape::Box { lo, hi } => (lo.clone(), hi.clone()),
            Shape::Ball { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
        }
    }

    pub fn diameter(&self) -> f64 {
        match &self.shape {
            Shape::Interval { a, b } => b - a,
            Shape::Box { lo, hi } => norm_diff(hi, lo),
            Shape::Ball { radius, .. } => 2.0 * radius,
        }
    }

    /// Closest point of the boundary. It belongs to every boundary strip.
    pub fn nearest_boundary_point(&self, x: &[f64]) -> Vec<f64> {
        match &self.shape {
            Shape::Interval { a, b } => {
                if (x[0] - a).abs() <= (x[0] - b).abs() {
                    vec![*a]
                } else {
                    vec![*b]
                }
            }
            Shape::Box { lo, hi } => {
                if !self.inside(x) {
                    return x.iter().zip(lo.iter().zip(hi)).map(|(v, (l, h))| v.clamp(*l, *h)).collect();
                }
                let mut best = (f64::INFINITY, 0, 0.0);
                for a in 0..self.dim {
                    for face in [lo[a], hi[a]] {
                        let d = (x[a] - face).abs();
                        if d < best.0 {
                            best = (d, a, face);
                        }
                    }
                }
                let mut y = x.to_vec();
                y[best.1] = best.2;
                y
            }
            Shape::Ball { center, radius } => {
                let r = norm_diff(x, center);
                if r == 0.0 {
                    let mut y = center.clone();
                    y[0] += radius;
                    return y;
                }
                let mut scale = radius / r;
                loop {
                    let y: Vec<f64> = center.iter().zip(x).map(|(c, v)| c + scale * (v - c)).collect();
                    if !self.inside(&y) {
                        return y;
                    }
                    scale *= 1.0 + 4.0 * f64::EPSILON;
                }
            }
        }
    }
}

/// Membership in the boundary strip `{x outside the domain : dist(x, domain) <= epsilon}`.
pub fn strip_contains(domain: &Domain, epsilon: f64, x: &[f64]) -> Result<bool> {
    if !(epsilon > 0.0) {
        return Err(invalid(format!("epsilon = {epsilon} must be positive")));
    }
    domain.check_point(x)?;
    Ok(!domain.inside(x) && domain.distance(x) <= epsilon)
}

pub(crate) fn norm_diff(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}
