use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_compatible, stencil_update, PAR_THRESHOLD};
use crate::error::{invalid, Result};
use crate::lattice::{Lattice, LatticeField, NodeClass};
use crate::params::GameParams;
use crate::payoff::Payoff;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sweep {
    /// Simultaneous update from the previous iterate.
    Jacobi,
    /// In-place update in node order. Converges to the same fixed point but
    /// is not the monotone iteration `u_{j+1} = T u_j`.
    GaussSeidel,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveOptions {
    pub tol: f64,
    /// Defaults to `50 (diam / epsilon)^2 / beta` when unset.
    pub max_sweeps: Option<usize>,
    pub sweep: Sweep,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_sweeps: None, sweep: Sweep::Jacobi }
    }
}

impl SolveOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }

    fn sweep_limit(&self, lattice: &Lattice, params: &GameParams) -> usize {
        self.max_sweeps.unwrap_or_else(|| {
            let ratio = lattice.domain().diameter() / lattice.epsilon();
            (50.0 * ratio * ratio / params.beta).ceil().max(100.0) as usize
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub sweeps: usize,
    /// Sup-norm DPP residual of the returned field.
    pub final_defect: f64,
    pub converged: bool,
    #[serde(rename = "wall_time_s")]
    pub wall_time: f64,
}

/// Boundary values at strip and outside nodes, `inf F` at interior nodes.
pub fn initial_field(lattice: Arc<Lattice>, boundary: &dyn Payoff) -> Result<LatticeField> {
    let mut values: Vec<f64> = (0..lattice.len()).map(|i| boundary.eval(lattice.point(i))).collect();
    let inf = lattice.strip_nodes().map(|i| values[i]).fold(f64::INFINITY, f64::min);
    if !inf.is_finite() {
        return Err(invalid("boundary data must be finite on a nonempty strip"));
    }
    for &i in lattice.interior_nodes() {
        values[i] = inf;
    }
    LatticeField::new(lattice, values)
}

/// One Jacobi application of the DPP operator. Strip values are copied.
pub fn apply_t(field: &LatticeField, params: &GameParams) -> Result<LatticeField> {
    let lattice = field.lattice().clone();
    check_compatible(&lattice, params)?;
    let mut out = field.values().to_vec();
    jacobi_into(field.values(), &mut out, &lattice, params, None);
    LatticeField::new(lattice, out)
}

/// `sup |u - T u|` over interior nodes.
pub fn defect(field: &LatticeField, params: &GameParams) -> Result<f64> {
    let lattice = field.lattice();
    check_compatible(lattice, params)?;
    Ok(residual(field.values(), lattice, params, None))
}

/// Solves `u = T u` in the interior with `u = F` on the strip by monotone
/// iteration from `u_0 = inf F`.
pub fn solve(
    lattice: Arc<Lattice>,
    boundary: &dyn Payoff,
    params: &GameParams,
    opts: &SolveOptions,
) -> Result<(LatticeField, SolveReport)> {
    solve_inner(lattice, boundary, None, params, opts)
}

/// Solves `u = T u + epsilon^2 f` in the interior with `u = F` on the strip.
pub fn running_payoff_solve(
    lattice: Arc<Lattice>,
    boundary: &dyn Payoff,
    source: &dyn Payoff,
    params: &GameParams,
    opts: &SolveOptions,
) -> Result<(LatticeField, SolveReport)> {
    let eps2 = params.epsilon * params.epsilon;
    let src: Vec<f64> = (0..lattice.len())
        .map(|i| if lattice.class(i) == NodeClass::Interior { eps2 * source.eval(lattice.point(i)) } else { 0.0 })
        .collect();
    if src.iter().any(|v| !v.is_finite()) {
        return Err(invalid("running payoff must be finite at interior nodes"));
    }
    solve_inner(lattice, boundary, Some(&src), params, opts)
}

fn solve_inner(
    lattice: Arc<Lattice>,
    boundary: &dyn Payoff,
    source: Option<&[f64]>,
    params: &GameParams,
    opts: &SolveOptions,
) -> Result<(LatticeField, SolveReport)> {
    if !(opts.tol > 0.0) {
        return Err(invalid("tolerance must be positive"));
    }
    check_compatible(&lattice, params)?;
    let started = Instant::now();
    let limit = opts.sweep_limit(&lattice, params);
    let mut cur = initial_field(lattice.clone(), boundary)?.into_values();
    let mut next = cur.clone();
    let mut prev_change = f64::INFINITY;
    let mut sweeps = 0;
    let mut stopped = false;
    while sweeps < limit {
        let change = match opts.sweep {
            Sweep::Jacobi => {
                let c = jacobi_into(&cur, &mut next, &lattice, params, source);
                std::mem::swap(&mut cur, &mut next);
                c
            }
            Sweep::GaussSeidel => gauss_seidel(&mut cur, &lattice, params, source),
        };
        sweeps += 1;
        let scale = cur.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        if change <= 4.0 * f64::EPSILON * scale {
            stopped = true;
            break;
        }
        let rate = change / prev_change;
        prev_change = change;
        // Stop once the step is small and the geometric tail bound is too.
        if change < opts.tol && rate < 1.0 && change * rate / (1.0 - rate) < opts.tol {
            stopped = true;
            break;
        }
    }
    let final_defect = residual(&cur, &lattice, params, source);
    let converged = stopped && final_defect <= 10.0 * opts.tol;
    let field = LatticeField::new(lattice, cur)?;
    if !converged {
        log::warn!("DPP iteration stopped after {sweeps} sweeps with defect {final_defect:e}");
    }
    Ok((field, SolveReport { sweeps, final_defect, converged, wall_time: started.elapsed().as_secs_f64() }))
}

fn update(values: &[f64], lattice: &Lattice, node: usize, params: &GameParams, source: Option<&[f64]>) -> f64 {
    let v = stencil_update(values, lattice, node, params.alpha, params.beta);
    match source {
        Some(s) => v + s[node],
        None => v,
    }
}

/// Writes `T(cur)` into `next` and returns the sup-norm change.
fn jacobi_into(cur: &[f64], next: &mut [f64], lattice: &Lattice, params: &GameParams, source: Option<&[f64]>) -> f64 {
    let interior = lattice.interior_nodes();
    if interior.len() >= PAR_THRESHOLD {
        let updated: Vec<f64> = interior.par_iter().map(|&i| update(cur, lattice, i, params, source)).collect();
        let mut change = 0.0f64;
        for (&i, v) in interior.iter().zip(updated) {
            change = change.max((v - cur[i]).abs());
            next[i] = v;
        }
        change
    } else {
        let mut change = 0.0f64;
        for &i in interior {
            let v = update(cur, lattice, i, params, source);
            change = change.max((v - cur[i]).abs());
            next[i] = v;
        }
        change
    }
}

fn gauss_seidel(values: &mut [f64], lattice: &Lattice, params: &GameParams, source: Option<&[f64]>) -> f64 {
    let mut change = 0.0f64;
    for &i in lattice.interior_nodes() {
        let v = update(values, lattice, i, params, source);
        change = change.max((v - values[i]).abs());
        values[i] = v;
    }
    change
}

fn residual(values: &[f64], lattice: &Lattice, params: &GameParams, source: Option<&[f64]>) -> f64 {
    let interior = lattice.interior_nodes();
    let one = |&i: &usize| (values[i] - update(values, lattice, i, params, source)).abs();
    if interior.len() >= PAR_THRESHOLD {
        interior.par_iter().map(one).reduce(|| 0.0, f64::max)
    } else {
        interior.iter().map(one).fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Domain;
    use crate::lattice::build_lattice;

    fn step(x: &[f64]) -> f64 {
        if x[0] >= 1.0 {
            1.0
        } else {
            0.0
        }
    }

    fn coarse() -> (Arc<Lattice>, GameParams) {
        let d = Domain::interval(0.0, 1.0).unwrap();
        (Arc::new(Lattice::discrete_walk(&d, 0.25).unwrap()), GameParams::new(1, 2.0, 0.25).unwrap())
    }

    #[test]
    fn one_sweep_from_zero() {
        let (lat, params) = coarse();
        let u0 = initial_field(lat.clone(), &step).unwrap();
        let u1 = apply_t(&u0, &params).unwrap();
        let at = |x: f64| u1.value(lat.nearest_node(&[x]).unwrap());
        assert_eq!(at(0.75), 0.5);
        assert_eq!(at(0.5), 0.0);
        assert_eq!(at(1.0), 1.0);
    }

    #[test]
    fn constants_are_fixed() {
        let d = Domain::cube(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let lat = Arc::new(build_lattice(&d, 0.2, 2).unwrap());
        let params = GameParams::new(2, 3.5, 0.2).unwrap();
        let c = LatticeField::from_fn(lat.clone(), |_| 7.0).unwrap();
        let tc = apply_t(&c, &params).unwrap();
        assert!(tc.values().iter().all(|v| (v - 7.0).abs() < 1e-14));
        assert!(defect(&c, &params).unwrap() < 1e-14);
        let (u, report) = solve(lat, &|_: &[f64]| 7.0, &params, &SolveOptions::default()).unwrap();
        assert!(report.converged);
        assert_eq!(report.sweeps, 1);
        assert!(u.values().iter().all(|v| *v == 7.0));
    }

    #[test]
    fn coarse_hitting_probability_is_linear() {
        let (lat, params) = coarse();
        let (u, report) = solve(lat.clone(), &step, &params, &SolveOptions::with_tol(1e-14)).unwrap();
        assert!(report.converged);
        for &i in lat.interior_nodes() {
            assert!((u.value(i) - lat.point(i)[0]).abs() < 1e-13);
        }
        assert!(report.final_defect < 1e-12);
    }

    #[test]
    fn defect_detects_perturbation() {
        let (lat, params) = coarse();
        let exact = LatticeField::from_fn(lat.clone(), |x| x[0].clamp(0.0, 1.0)).unwrap();
        assert!(defect(&exact, &params).unwrap() < 1e-15);
        let mut bumped = exact.clone();
        let node = lat.nearest_node(&[0.5]).unwrap();
        bumped.values_mut()[node] += 0.01;
        let d = defect(&bumped, &params).unwrap();
        assert!(d >= 0.01 - 1e-15);
        // the neighbors see half of the bump through their averages
        let t = apply_t(&bumped, &params).unwrap();
        assert!((t.value(node - 1) - bumped.value(node - 1) - 0.005).abs() < 1e-15);
    }

    #[test]
    fn surplus_of_two() {
        let d = Domain::interval(-2.0, 2.0).unwrap();
        let lat = Arc::new(Lattice::discrete_walk(&d, 1.0).unwrap());
        let params = GameParams::new(1, 2.0, 1.0).unwrap();
        let (u, report) =
            running_payoff_solve(lat.clone(), &|_: &[f64]| 0.0, &|_: &[f64]| 1.0, &params, &SolveOptions::with_tol(1e-13))
                .unwrap();
        assert!(report.converged);
        for x in -2..=2 {
            let v = u.value(lat.nearest_node(&[x as f64]).unwrap());
            assert!((v - (4 - x * x) as f64).abs() < 1e-11, "x={x} v={v}");
        }
    }

    #[test]
    fn running_time_on_epsilon_grid() {
        let eps = 0.1;
        let d = Domain::interval(0.0, 1.0).unwrap();
        let lat = Arc::new(Lattice::discrete_walk(&d, eps).unwrap());
        let params = GameParams::new(1, 2.0, eps).unwrap();
        let (u, _) = running_payoff_solve(
            lat.clone(),
            &|_: &[f64]| 0.0,
            &|_: &[f64]| 1.0 / (eps * eps),
            &params,
            &SolveOptions::with_tol(1e-12),
        )
        .unwrap();
        for &i in lat.interior_nodes() {
            let x = lat.point(i)[0];
            assert!((u.value(i) - x * (1.0 - x) / (eps * eps)).abs() < 1e-8);
        }
        // zero source reduces to the plain solve
        let (a, _) = running_payoff_solve(lat.clone(), &step, &|_: &[f64]| 0.0, &params, &SolveOptions::default()).unwrap();
        let (b, _) = solve(lat, &step, &params, &SolveOptions::default()).unwrap();
        assert_eq!(a.values(), b.values());
    }

    #[test]
    fn gauss_seidel_reaches_the_same_fixed_point() {
        let d = Domain::interval(0.0, 1.0).unwrap();
        let lat = Arc::new(build_lattice(&d, 0.1, 4).unwrap());
        let params = GameParams::new(1, 3.0, 0.1).unwrap();
        let (a, ra) = solve(lat.clone(), &step, &params, &SolveOptions::with_tol(1e-12)).unwrap();
        let gs = SolveOptions { sweep: Sweep::GaussSeidel, ..SolveOptions::with_tol(1e-12) };
        let (b, rb) = solve(lat, &step, &params, &gs).unwrap();
        assert!(ra.converged && rb.converged);
        assert!(rb.sweeps < ra.sweeps);
        let diff = a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-10);
    }

    #[test]
    fn exhausted_sweeps_are_reported() {
        let d = Domain::interval(0.0, 1.0).unwrap();
        let lat = Arc::new(build_lattice(&d, 0.1, 4).unwrap());
        let params = GameParams::new(1, 2.0, 0.1).unwrap();
        let opts = SolveOptions { max_sweeps: Some(5), ..SolveOptions::default() };
        let (_, report) = solve(lat, &step, &params, &opts).unwrap();
        assert!(!report.converged);
        assert_eq!(report.sweeps, 5);
        assert!(report.final_defect > 0.0);
    }

    #[test]
    fn rejects_mismatched_epsilon_and_infinite_p() {
        let d = Domain::interval(0.0, 1.0).unwrap();
        let lat = Arc::new(build_lattice(&d, 0.1, 4).unwrap());
        let params = GameParams::new(1, 2.0, 0.2).unwrap();
        assert!(solve(lat.clone(), &step, &params, &SolveOptions::default()).is_err());
        let inf = GameParams::for_mean_value(1, f64::INFINITY, 0.1).unwrap();
        assert!(solve(lat, &step, &inf, &SolveOptions::default()).is_err());
    }

    #[test]
    fn report_serializes_with_wall_time_key() {
        let r = SolveReport { sweeps: 3, final_defect: 0.0, converged: true, wall_time: 0.5 };
        let v: serde_json::Value = serde_json::to_value(r).unwrap();
        for k in ["sweeps", "final_defect", "converged", "wall_time_s"] {
            assert!(v.get(k).is_some(), "{k}");
        }
    }
}
