//! Exact solutions of the discrete walks on small grids.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::io::fmt_f64;
use crate::payoff::Payoff;

/// Walk on `{a, a + eps, ..., b}` stepping `±eps` with probability 1/2,
/// paying `left` at `a`, `right` at `b` and `cost` per step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteWalkSpec {
    pub a: f64,
    pub b: f64,
    pub epsilon: f64,
    pub left: f64,
    pub right: f64,
    pub cost: f64,
}

impl DiscreteWalkSpec {
    pub fn new(a: f64, b: f64, epsilon: f64, left: f64, right: f64, cost: f64) -> Result<Self> {
        let spec = Self { a, b, epsilon, left, right, cost };
        spec.steps()?;
        if ![left, right, cost].iter().all(|v| v.is_finite()) {
            return Err(invalid("payoffs and cost must be finite"));
        }
        Ok(spec)
    }

    /// Number of steps from `a` to `b`; the step must divide the interval.
    pub fn steps(&self) -> Result<usize> {
        if !(self.b > self.a) || !(self.epsilon > 0.0) {
            return Err(invalid("need a < b and a positive step"));
        }
        let q = (self.b - self.a) / self.epsilon;
        let steps = q.round();
        if (q - steps).abs() > 1e-9 * q.max(1.0) || steps < 2.0 {
            return Err(invalid(format!("step {} does not divide [{}, {}] into at least two steps", self.epsilon, self.a, self.b)));
        }
        Ok(steps as usize)
    }

    pub fn grid(&self) -> Vec<f64> {
        let n = self.steps().expect("validated");
        (0..=n).map(|i| if i == n { self.b } else { self.a + i as f64 * self.epsilon }).collect()
    }
}

/// Grid points and values, endpoints included.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WalkSolution {
    pub x: Vec<f64>,
    pub values: Vec<f64>,
}

impl WalkSolution {
    /// `max |u_i - (u_{i-1} + u_{i+1})/2 - cost|` over interior points.
    pub fn residual(&self, cost: f64) -> f64 {
        self.values.windows(3).map(|w| (w[1] - 0.5 * (w[0] + w[2]) - cost).abs()).fold(0.0, f64::max)
    }
}

/// Solves `-u_{i-1}/2 + u_i - u_{i+1}/2 = cost` with the end values fixed (Thomas algorithm).
fn tridiagonal(spec: &DiscreteWalkSpec, cost: f64) -> Result<WalkSolution> {
    let n = spec.steps()?;
    let m = n - 1;
    let mut c_prime = vec![0.0; m];
    let mut d_prime = vec![0.0; m];
    for i in 0..m {
        let mut rhs = cost;
        if i == 0 {
            rhs += 0.5 * spec.left;
        }
        if i == m - 1 {
            rhs += 0.5 * spec.right;
        }
        let (lower, diag, upper) = (-0.5, 1.0, -0.5);
        let denom = if i == 0 { diag } else { diag - lower * c_prime[i - 1] };
        c_prime[i] = upper / denom;
        d_prime[i] = if i == 0 { rhs / denom } else { (rhs - lower * d_prime[i - 1]) / denom };
    }
    let mut inner = vec![0.0; m];
    for i in (0..m).rev() {
        inner[i] = if i == m - 1 { d_prime[i] } else { d_prime[i] - c_prime[i] * inner[i + 1] };
    }
    let mut values = Vec::with_capacity(n + 1);
    values.push(spec.left);
    values.extend(inner);
    values.push(spec.right);
    Ok(WalkSolution { x: spec.grid(), values })
}

/// Expected payoff of the symmetric walk: `u = (u(x - eps) + u(x + eps))/2`.
pub fn discrete_hitting_value(spec: &DiscreteWalkSpec) -> Result<WalkSolution> {
    tridiagonal(spec, 0.0)
}

/// Expected payoff plus accumulated cost: `u = (u(x - eps) + u(x + eps))/2 + cost`.
pub fn discrete_running_time(spec: &DiscreteWalkSpec) -> Result<WalkSolution> {
    tridiagonal(spec, spec.cost)
}

/// Square grid `origin + h (i, j)`, `0 <= i <= nx + 1`, `0 <= j <= ny + 1`;
/// the outer ring is the boundary.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub origin: [f64; 2],
}

/// Interior unknowns allowed in the dense solve.
pub const MAX_GRID_UNKNOWNS: usize = 2500;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSolution {
    pub spec: GridSpec,
    /// Values on the full `(nx + 2) x (ny + 2)` grid, `i` major. Corners carry
    /// the datum but never enter the interior equations.
    pub values: Vec<f64>,
}

impl GridSolution {
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * (self.spec.ny + 2) + j]
    }

    pub fn point(&self, i: usize, j: usize) -> [f64; 2] {
        [self.spec.origin[0] + i as f64 * self.spec.h, self.spec.origin[1] + j as f64 * self.spec.h]
    }

    /// Max defect of the four-neighbor averaging identity at interior nodes.
    pub fn residual(&self) -> f64 {
        let (nx, ny) = (self.spec.nx, self.spec.ny);
        let mut worst = 0.0f64;
        for i in 1..=nx {
            for j in 1..=ny {
                let avg = 0.25
                    * (self.value(i - 1, j) + self.value(i + 1, j) + self.value(i, j - 1) + self.value(i, j + 1));
                worst = worst.max((self.value(i, j) - avg).abs());
            }
        }
        worst
    }
}

/// Value of the walk stepping to one of the four neighbors with probability
/// 1/4 each, paying `boundary` on the outer ring. Dense LU solve.
pub fn discrete_2d_value(spec: &GridSpec, boundary: &dyn Payoff) -> Result<GridSolution> {
    let (nx, ny) = (spec.nx, spec.ny);
    if nx == 0 || ny == 0 || !(spec.h > 0.0) {
        return Err(invalid("grid needs at least one interior node and a positive spacing"));
    }
    let unknowns = nx * ny;
    if unknowns > MAX_GRID_UNKNOWNS {
        return Err(invalid(format!("{unknowns} unknowns exceed the dense solver limit {MAX_GRID_UNKNOWNS}")));
    }
    let cols = ny + 2;
    let mut values = vec![0.0; (nx + 2) * cols];
    let point = |i: usize, j: usize| [spec.origin[0] + i as f64 * spec.h, spec.origin[1] + j as f64 * spec.h];
    for i in 0..nx + 2 {
        for j in 0..cols {
            if i == 0 || j == 0 || i == nx + 1 || j == ny + 1 {
                values[i * cols + j] = boundary.eval(&point(i, j));
            }
        }
    }
    let idx = |i: usize, j: usize| (i - 1) * ny + (j - 1);
    let mut a = DMatrix::<f64>::zeros(unknowns, unknowns);
    let mut b = DVector::<f64>::zeros(unknowns);
    for i in 1..=nx {
        for j in 1..=ny {
            let row = idx(i, j);
            a[(row, row)] = 1.0;
            for (p, q) in [(i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1)] {
                if p == 0 || q == 0 || p == nx + 1 || q == ny + 1 {
                    b[row] += 0.25 * values[p * cols + q];
                } else {
                    a[(row, idx(p, q))] = -0.25;
                }
            }
        }
    }
    let x = a.lu().solve(&b).expect("the averaging system of a connected grid is nonsingular");
    for i in 1..=nx {
        for j in 1..=ny {
            values[i * cols + j] = x[idx(i, j)];
        }
    }
    Ok(GridSolution { spec: *spec, values })
}

/// CSV with header `x1,value`.
pub fn write_walk_csv<W: Write>(sol: &WalkSolution, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x1", "value"])?;
    for (x, v) in sol.x.iter().zip(&sol.values) {
        w.write_record([fmt_f64(*x), fmt_f64(*v)])?;
    }
    w.flush()?;
    Ok(())
}

/// CSV with header `x1,x2,boundary,value`, corners omitted.
pub fn write_grid_csv<W: Write>(sol: &GridSolution, out: W) -> Result<()> {
    let (nx, ny) = (sol.spec.nx, sol.spec.ny);
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x1", "x2", "boundary", "value"])?;
    for i in 0..nx + 2 {
        for j in 0..ny + 2 {
            let edge_i = i == 0 || i == nx + 1;
            let edge_j = j == 0 || j == ny + 1;
            if edge_i && edge_j {
                continue;
            }
            let p = sol.point(i, j);
            let tag = if edge_i || edge_j { "1" } else { "0" };
            w.write_record([fmt_f64(p[0]), fmt_f64(p[1]), tag.to_string(), fmt_f64(sol.value(i, j))])?;
        }
    }
    w.flush()?;
    Ok(())
}
