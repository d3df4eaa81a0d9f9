//! Fixed-point and time-marching solvers for the tug-of-war dynamic programming
//! principles on a lattice.

pub mod elliptic;
pub mod parabolic;

pub use elliptic::{
    apply_t, defect, initial_field, running_payoff_solve, solve, SolveOptions, SolveReport, Sweep,
};
pub use parabolic::{parabolic_defect, solve_parabolic, SpaceTimeField};

use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::params::GameParams;

/// Node counts above which a sweep is split across the rayon pool.
pub(crate) const PAR_THRESHOLD: usize = 4096;

/// `(alpha/2)(max + min) + beta * mean` over the stencil of `node`, read from `values`.
#[inline]
pub(crate) fn stencil_update(values: &[f64], lattice: &Lattice, node: usize, alpha: f64, beta: f64) -> f64 {
    let mut sum = 0.0;
    let mut hi = f64::NEG_INFINITY;
    let mut lo = f64::INFINITY;
    let mut count = 0usize;
    for j in lattice.neighbors(node) {
        let v = values[j];
        sum += v;
        hi = hi.max(v);
        lo = lo.min(v);
        count += 1;
    }
    let mean = sum / count as f64;
    if alpha == 0.0 {
        beta * mean
    } else {
        0.5 * alpha * (hi + lo) + beta * mean
    }
}

pub(crate) fn check_compatible(lattice: &Lattice, params: &GameParams) -> Result<()> {
    if params.n != lattice.dim() {
        return Err(Error::DimensionMismatch { expected: lattice.dim(), got: params.n });
    }
    if (lattice.epsilon() - params.epsilon).abs() > 1e-12 * params.epsilon {
        return Err(Error::EpsilonMismatch { lattice: lattice.epsilon(), params: params.epsilon });
    }
    if !(0.0..1.0).contains(&params.alpha) || !(params.beta > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "DPP operator needs 0 <= alpha < 1 and beta > 0 (alpha = {}, beta = {})",
            params.alpha, params.beta
        )));
    }
    if lattice.stencil_size() == 0 {
        if let Some(&i) = lattice.interior_nodes().first() {
            return Err(Error::EmptyStencil(i));
        }
    }
    Ok(())
}
