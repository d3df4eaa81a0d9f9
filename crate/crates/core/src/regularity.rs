//! Regularity diagnostics: the cylinder walk behind the Lipschitz estimate,
//! exit time moments, and empirical Harnack and Lipschitz constants of
//! solved fields.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::game::{trial_rng, ValueEstimate};
use crate::geometry::norm_diff;
use crate::io::fmt_f64;
use crate::lattice::{Closure, LatticeField};
use crate::stats::summarize;

/// Walk in `B_{2r} x (0, 2r + ell)` started at `(0, ell)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CylinderConfig {
    /// Dimension of the horizontal base.
    pub n: usize,
    pub r: f64,
    pub ell: f64,
    pub epsilon: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl CylinderConfig {
    pub fn new(n: usize, r: f64, ell: f64, epsilon: f64, alpha: f64) -> Result<Self> {
        if n < 1 {
            return Err(invalid("base dimension must be at least 1"));
        }
        if !(r > 0.0 && r.is_finite()) {
            return Err(invalid(format!("radius r = {r} must be positive")));
        }
        if !(ell > 0.0 && ell.is_finite()) {
            return Err(invalid(format!("start height ell = {ell} must be positive")));
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(invalid(format!("epsilon = {epsilon} must be positive")));
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(invalid(format!("alpha = {alpha} must lie in [0, 1]")));
        }
        Ok(Self { n, r, ell, epsilon, alpha, beta: 1.0 - alpha })
    }

    pub fn height(&self) -> f64 {
        2.0 * self.r + self.ell
    }

    /// Safety cap `10^4 (r / eps)^2`.
    pub fn round_cap(&self) -> usize {
        let q = self.r / self.epsilon;
        (1e4 * q * q).ceil().min(1e12) as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Face {
    Bottom,
    Top,
    Side,
    /// Round cap reached before exit.
    Capped,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CylinderExit {
    pub face: Face,
    pub rounds: usize,
    /// Height at the final position.
    pub y: f64,
}

/// One cylinder walk: with probability `alpha/2` each the height moves by
/// `-eps` or `+eps`, with probability `beta` the base point takes a uniform
/// step in the `eps` ball.
pub fn cylinder_walk<R: Rng + ?Sized>(config: &CylinderConfig, rng: &mut R) -> CylinderExit {
    let eps = config.epsilon;
    let h = config.height();
    let slack = 1e-9 * eps;
    let side2 = 4.0 * config.r * config.r;
    let cap = config.round_cap();
    let mut x = vec![0.0; config.n];
    let mut step = vec![0.0; config.n];
    let mut j: i64 = 0;
    let mut rounds = 0;
    let height = |j: i64| config.ell + j as f64 * eps;
    loop {
        if rounds >= cap {
            return CylinderExit { face: Face::Capped, rounds, y: height(j) };
        }
        rounds += 1;
        let u: f64 = rng.random();
        if u < 0.5 * config.alpha {
            j -= 1;
            if height(j) <= slack {
                return CylinderExit { face: Face::Bottom, rounds, y: height(j) };
            }
        } else if u < config.alpha {
            j += 1;
            if height(j) >= h - slack {
                return CylinderExit { face: Face::Top, rounds, y: height(j) };
            }
        } else {
            crate::game::sampling_step(rng, eps, &mut step);
            let mut r2 = 0.0;
            for (a, s) in x.iter_mut().zip(&step) {
                *a += s;
                r2 += *a * *a;
            }
            if r2 >= side2 {
                return CylinderExit { face: Face::Side, rounds, y: height(j) };
            }
        }
    }
}

fn run(config: &CylinderConfig, trials: usize, seed: u64) -> Result<Vec<CylinderExit>> {
    if trials < 1 {
        return Err(invalid("need at least one trial"));
    }
    Ok((0..trials as u64).into_par_iter().map(|i| cylinder_walk(config, &mut trial_rng(seed, i))).collect())
}

fn estimate(samples: &[f64], capped: usize, seed: u64) -> Result<ValueEstimate> {
    let trials = samples.len();
    if capped == trials {
        return Err(Error::AllTrialsCapped(trials));
    }
    let s = summarize(samples);
    Ok(ValueEstimate {
        mean: s.mean,
        std_error: s.std_error,
        ci95_lo: s.mean - 1.96 * s.std_error,
        ci95_hi: s.mean + 1.96 * s.std_error,
        trials,
        capped_fraction: capped as f64 / trials as f64,
        seed,
    })
}

/// Empirical probability of leaving through the bottom.
pub fn bottom_escape_probability(config: &CylinderConfig, trials: usize, seed: u64) -> Result<ValueEstimate> {
    let exits = run(config, trials, seed)?;
    let hits: Vec<f64> = exits.iter().map(|e| if e.face == Face::Bottom { 1.0 } else { 0.0 }).collect();
    let capped = exits.iter().filter(|e| e.face == Face::Capped).count();
    estimate(&hits, capped, seed)
}

/// Gambler's ruin: chance that the vertical walk alone reaches the bottom first.
pub fn gamblers_ruin_bottom(config: &CylinderConfig) -> f64 {
    let h = config.height();
    (h - config.ell) / h
}

/// Exit time moments of the cylinder walk.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub mean_rounds: f64,
    pub rounds_std_error: f64,
    /// `E[alpha tau eps^2]`
    pub alpha_tau_eps2: f64,
    /// `E[y_tau^2] - y_0^2`
    pub y2_increment: f64,
    /// Mean and standard error of `y_tau^2 - y_0^2 - alpha tau eps^2`, zero in
    /// expectation by optional stopping.
    pub martingale_gap: f64,
    pub martingale_gap_std_error: f64,
    /// `E[tau] eps^2`, the constant in `E[tau] <= C eps^{-2}`.
    pub c_estimate: f64,
    pub capped_fraction: f64,
    pub trials: usize,
    pub seed: u64,
}

impl MomentReport {
    /// `E[alpha tau eps^2] <= E[y_tau^2] - y_0^2` up to `k` standard errors.
    pub fn bound_holds(&self, k: f64) -> bool {
        self.martingale_gap >= -k * self.martingale_gap_std_error
    }
}

pub fn exit_time_moment_check(config: &CylinderConfig, trials: usize, seed: u64) -> Result<MomentReport> {
    if !(config.alpha > 0.0) {
        return Err(invalid("the moment check needs alpha > 0"));
    }
    let exits = run(config, trials, seed)?;
    let capped = exits.iter().filter(|e| e.face == Face::Capped).count();
    if capped == exits.len() {
        return Err(Error::AllTrialsCapped(capped));
    }
    let eps2 = config.epsilon * config.epsilon;
    let y0 = config.ell * config.ell;
    let rounds: Vec<f64> = exits.iter().map(|e| e.rounds as f64).collect();
    let scaled: Vec<f64> = rounds.iter().map(|t| config.alpha * t * eps2).collect();
    let incr: Vec<f64> = exits.iter().map(|e| e.y * e.y - y0).collect();
    let gap: Vec<f64> = incr.iter().zip(&scaled).map(|(a, b)| a - b).collect();
    let r = summarize(&rounds);
    let g = summarize(&gap);
    Ok(MomentReport {
        mean_rounds: r.mean,
        rounds_std_error: r.std_error,
        alpha_tau_eps2: summarize(&scaled).mean,
        y2_increment: summarize(&incr).mean,
        martingale_gap: g.mean,
        martingale_gap_std_error: g.std_error,
        c_estimate: r.mean * eps2,
        capped_fraction: capped as f64 / exits.len() as f64,
        trials: exits.len(),
        seed,
    })
}

/// Smallest `L` with `y <= L x` on every `(x, y)` pair.
pub fn fit_l(points: &[(f64, f64)]) -> Result<f64> {
    if points.is_empty() {
        return Err(invalid("no points to fit"));
    }
    let mut l = 0.0f64;
    for &(x, y) in points {
        if !(x > 0.0) {
            return Err(invalid(format!("abscissa {x} must be positive")));
        }
        l = l.max(y / x);
    }
    Ok(l)
}

/// Row of a sweep table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub param: String,
    pub value: f64,
    pub estimate: f64,
    pub std_error: f64,
}

/// CSV with header `param,value,estimate,std_error`.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["param", "value", "estimate", "std_error"])?;
    for row in rows {
        w.write_record([row.param.clone(), fmt_f64(row.value), fmt_f64(row.estimate), fmt_f64(row.std_error)])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HarnackRatio {
    pub max: f64,
    pub min: f64,
    /// `max / max(min, 1e-300)`; infinite when the field vanishes in the ball.
    pub ratio: f64,
    pub degenerate: bool,
}

fn check_inside(field: &LatticeField, center: &[f64], radius: f64) -> Result<()> {
    let domain = field.lattice().domain();
    domain.check_point(center)?;
    if domain.signed_distance(center) > -radius {
        return Err(Error::BallNotInside(format!("ball of radius {radius} around {center:?} leaves the domain")));
    }
    Ok(())
}

/// `sup / inf` of a nonnegative field over the lattice nodes of the closed ball `B_rho(center)`.
pub fn harnack_ratio(field: &LatticeField, center: &[f64], rho: f64) -> Result<HarnackRatio> {
    if !(rho > 0.0) {
        return Err(invalid("rho must be positive"));
    }
    check_inside(field, center, 2.0 * rho)?;
    let nodes = field.lattice().nodes_in_ball(center, rho, Closure::Closed);
    if nodes.is_empty() {
        return Err(invalid("no lattice nodes in the ball"));
    }
    let (mut max, mut min) = (f64::NEG_INFINITY, f64::INFINITY);
    for i in nodes {
        let v = field.value(i);
        if v < 0.0 {
            return Err(Error::NegativeField { node: i, value: v });
        }
        max = max.max(v);
        min = min.min(v);
    }
    let degenerate = min == 0.0;
    let ratio = if degenerate && max > 0.0 {
        f64::INFINITY
    } else if degenerate {
        1.0
    } else {
        max / min.max(1e-300)
    };
    Ok(HarnackRatio { max, min, ratio, degenerate })
}

/// Largest `|u(x) - u(y)| r / (|x - y| osc)` over node pairs of `B_r(z0)` with
/// `|x - y| >= eps`, where `osc` is the oscillation over `B_{6r}(z0)`.
pub fn lipschitz_quotient(field: &LatticeField, z0: &[f64], r: f64) -> Result<f64> {
    let lat = field.lattice();
    let eps = lat.epsilon();
    if !(r > eps) {
        return Err(invalid(format!("radius r = {r} must exceed epsilon = {eps}")));
    }
    check_inside(field, z0, 10.0 * r)?;
    let (lo, hi) = lat
        .nodes_in_ball(z0, 6.0 * r, Closure::Closed)
        .into_iter()
        .map(|i| field.value(i))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let osc = hi - lo;
    if !(osc > 0.0) {
        return Ok(0.0);
    }
    let inner = lat.nodes_in_ball(z0, r, Closure::Closed);
    let reach = eps * (1.0 - 1e-12);
    let mut best = 0.0f64;
    for (a, &i) in inner.iter().enumerate() {
        for &j in &inner[a + 1..] {
            let d = norm_diff(lat.point(i), lat.point(j));
            if d >= reach {
                best = best.max((field.value(i) - field.value(j)).abs() / d);
            }
        }
    }
    Ok(best * r / osc)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::geometry::Domain;
    use crate::lattice::build_lattice;

    #[test]
    fn alpha_zero_only_exits_sideways() {
        let c = CylinderConfig::new(2, 0.2, 0.05, 0.05, 0.0).unwrap();
        let mut rng = trial_rng(1, 0);
        for _ in 0..200 {
            assert_eq!(cylinder_walk(&c, &mut rng).face, Face::Side);
        }
    }

    #[test]
    fn vertical_walk_matches_gamblers_ruin() {
        let c = CylinderConfig::new(1, 0.25, 0.1, 0.05, 1.0).unwrap();
        let e = bottom_escape_probability(&c, 20_000, 3).unwrap();
        let exact = gamblers_ruin_bottom(&c);
        assert!((e.mean - exact).abs() < 4.0 * e.std_error, "{} vs {exact}", e.mean);
    }

    #[test]
    fn vertical_exit_time_is_quadratic() {
        // heights on the eps grid: exit time from 5 in (0, 10) is 5 * 5 = 25
        let c = CylinderConfig::new(1, 0.25, 0.5, 0.1, 1.0).unwrap();
        let m = exit_time_moment_check(&c, 20_000, 8).unwrap();
        assert!((m.mean_rounds - 25.0).abs() < 4.0 * m.rounds_std_error, "{m:?}");
        assert!(m.bound_holds(4.0));
        assert!(m.martingale_gap.abs() < 4.0 * m.martingale_gap_std_error + 1e-12);
    }

    #[test]
    fn harnack_cases() {
        let lat = Arc::new(build_lattice(&Domain::interval(0.0, 1.0).unwrap(), 0.1, 4).unwrap());
        let c = LatticeField::from_fn(lat.clone(), |_| 2.0).unwrap();
        assert_eq!(harnack_ratio(&c, &[0.5], 0.2).unwrap().ratio, 1.0);
        let z = LatticeField::from_fn(lat.clone(), |x| (x[0] - 0.5).abs()).unwrap();
        let h = harnack_ratio(&z, &[0.5], 0.2).unwrap();
        assert!(h.degenerate && h.ratio.is_infinite());
        let neg = LatticeField::from_fn(lat.clone(), |x| x[0] - 0.5).unwrap();
        assert!(matches!(harnack_ratio(&neg, &[0.5], 0.2), Err(Error::NegativeField { .. })));
        assert!(matches!(harnack_ratio(&c, &[0.5], 0.3), Err(Error::BallNotInside(_))));
    }

    #[test]
    fn lipschitz_of_linear_and_constant_fields() {
        let lat = Arc::new(build_lattice(&Domain::interval(-1.3, 1.3).unwrap(), 0.1, 4).unwrap());
        let lin = LatticeField::from_fn(lat.clone(), |x| 3.0 * x[0]).unwrap();
        let q = lipschitz_quotient(&lin, &[0.0], 0.12).unwrap();
        let nodes = lat.nodes_in_ball(&[0.0], 0.72, Closure::Closed);
        let span = nodes.iter().map(|&i| lat.point(i)[0]).fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((q - 0.12 / (2.0 * span)).abs() < 1e-12, "{q}");
        let c = LatticeField::from_fn(lat, |_| 1.0).unwrap();
        assert_eq!(lipschitz_quotient(&c, &[0.0], 0.12).unwrap(), 0.0);
    }

    #[test]
    fn sweep_csv_header() {
        let mut buf = Vec::new();
        write_sweep_csv(&[SweepRow { param: "ell".into(), value: 0.1, estimate: 0.5, std_error: 0.01 }], &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("param,value,estimate,std_error\n"));
        assert!((fit_l(&[(0.1, 0.05), (0.2, 0.3)]).unwrap() - 1.5).abs() < 1e-15);
    }
}
