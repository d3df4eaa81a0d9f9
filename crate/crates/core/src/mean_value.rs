//! Asymptotic mean value expansions evaluated on closed-form test functions.
//!
//! For `phi` smooth with nonzero gradient,
//! `(alpha/2)(max + min) + beta * avg - phi(x) = beta eps^2 / (2(n+2)) * (Delta phi + (p-2) Delta_inf^N phi) + o(eps^2)`,
//! with max, min and avg taken over the closed ball `B_eps(x)`.

use std::collections::HashMap;
use std::io::Write;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::norm;
use crate::io::fmt_f64;
use crate::params::GameParams;

/// A function with closed-form values, possibly time dependent.
pub trait TestFunction: Send + Sync {
    fn name(&self) -> String;

    fn value(&self, x: &[f64]) -> f64;

    /// Space-time value; time-free functions ignore `t`.
    fn value_at(&self, x: &[f64], _t: f64) -> f64 {
        self.value(x)
    }

    /// Closed form of `Delta phi + (p - 2) Delta_inf^N phi` at `x` (of
    /// `Delta_inf^N phi` alone for `p = inf`), where it is defined.
    fn operator_value(&self, _x: &[f64], _p: f64) -> Option<f64> {
        None
    }

    /// Exact `(max, min)` over the closed ball, where known.
    fn exact_extrema(&self, _x: &[f64], _epsilon: f64) -> Option<(f64, f64)> {
        None
    }
}

/// The built-in library.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Builtin {
    /// `x_1`
    Linear,
    /// `|x|^2`
    Quadratic,
    /// `x_1^2`
    CoordinateQuadratic,
    /// `|x_1|^{4/3} - |x_2|^{4/3}`
    Aronsson,
    /// `|x|^gamma` with `gamma = (p0 - n)/(p0 - 1)`, p0-harmonic away from the origin.
    Radial { p0: f64 },
    /// `x_1^2 + 2t/(n+2)`, which solves `(n+2) u_t = Delta u`.
    Caloric,
}

impl Builtin {
    pub const NAMES: [&'static str; 6] = ["linear", "quadratic", "coord_quadratic", "aronsson", "radial:P0", "caloric"];

    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "linear" => Ok(Builtin::Linear),
            "quadratic" => Ok(Builtin::Quadratic),
            "coord_quadratic" => Ok(Builtin::CoordinateQuadratic),
            "aronsson" => Ok(Builtin::Aronsson),
            "caloric" => Ok(Builtin::Caloric),
            _ => {
                if let Some(rest) = s.strip_prefix("radial:") {
                    let p0: f64 = rest.parse().map_err(|_| invalid(format!("bad radial exponent '{rest}'")))?;
                    if !(p0 > 1.0) || !p0.is_finite() {
                        return Err(invalid("radial exponent p0 must be finite and exceed 1"));
                    }
                    Ok(Builtin::Radial { p0 })
                } else {
                    Err(invalid(format!("unknown test function '{s}' (known: {})", Builtin::NAMES.join(", "))))
                }
            }
        }
    }

    fn radial_gamma(p0: f64, n: usize) -> f64 {
        (p0 - n as f64) / (p0 - 1.0)
    }
}

impl TestFunction for Builtin {
    fn name(&self) -> String {
        match self {
            Builtin::Linear => "linear".into(),
            Builtin::Quadratic => "quadratic".into(),
            Builtin::CoordinateQuadratic => "coord_quadratic".into(),
            Builtin::Aronsson => "aronsson".into(),
            Builtin::Radial { p0 } => format!("radial:{p0}"),
            Builtin::Caloric => "caloric".into(),
        }
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.value_at(x, 0.0)
    }

    fn value_at(&self, x: &[f64], t: f64) -> f64 {
        match self {
            Builtin::Linear => x[0],
            Builtin::Quadratic => x.iter().map(|v| v * v).sum(),
            Builtin::CoordinateQuadratic => x[0] * x[0],
            Builtin::Aronsson => x[0].abs().powf(4.0 / 3.0) - x.get(1).map_or(0.0, |v| v.abs().powf(4.0 / 3.0)),
            Builtin::Radial { p0 } => norm(x).powf(Builtin::radial_gamma(*p0, x.len())),
            Builtin::Caloric => x[0] * x[0] + 2.0 * t / (x.len() as f64 + 2.0),
        }
    }

    fn operator_value(&self, x: &[f64], p: f64) -> Option<f64> {
        let n = x.len() as f64;
        let weight = |lap: f64, inf_lap: f64| if p.is_infinite() { inf_lap } else { lap + (p - 2.0) * inf_lap };
        match self {
            Builtin::Linear => Some(0.0),
            Builtin::Quadratic => {
                if p == 2.0 {
                    Some(2.0 * n)
                } else if norm(x) > 0.0 {
                    Some(weight(2.0 * n, 2.0))
                } else {
                    None
                }
            }
            Builtin::CoordinateQuadratic | Builtin::Caloric => {
                if p == 2.0 {
                    Some(2.0)
                } else if x[0] != 0.0 {
                    Some(weight(2.0, 2.0))
                } else {
                    None
                }
            }
            Builtin::Aronsson => {
                if x.len() != 2 || x[0] == 0.0 || x[1] == 0.0 {
                    return None;
                }
                let lap = 4.0 / 9.0 * (x[0].abs().powf(-2.0 / 3.0) - x[1].abs().powf(-2.0 / 3.0));
                Some(weight(lap, 0.0))
            }
            Builtin::Radial { p0 } => {
                let r = norm(x);
                if r == 0.0 {
                    return None;
                }
                let g = Builtin::radial_gamma(*p0, x.len());
                let base = g * r.powf(g - 2.0);
                let lap = base * (g + n - 2.0);
                let inf_lap = base * (g - 1.0);
                Some(weight(lap, inf_lap))
            }
        }
    }

    fn exact_extrema(&self, x: &[f64], epsilon: f64) -> Option<(f64, f64)> {
        match self {
            // On the positive x_1 axis: the maximum sits straight ahead and the
            // minimum on the circle at angle arccos((e - sqrt(4 + e^2))/2), e = eps/a.
            Builtin::Aronsson if x.len() == 2 && x[1] == 0.0 && x[0] > epsilon => {
                let a = x[0];
                let e = epsilon / a;
                let c = (e - (4.0 + e * e).sqrt()) / 2.0;
                let s = (1.0 - c * c).sqrt();
                let scale = a.powf(4.0 / 3.0);
                let max = (a + epsilon).powf(4.0 / 3.0);
                let min = scale * ((1.0 + e * c).powf(4.0 / 3.0) - (e * s).powf(4.0 / 3.0));
                Some((max, min))
            }
            _ => None,
        }
    }
}

/// Normalized tensor rule on the unit ball. Cells of a uniform `m^n` grid on
/// `[-1, 1]^n` inside the ball carry a two-point Gauss rule per axis; cells
/// that straddle the sphere are split recursively and their leaves kept by a
/// center-inside midpoint test.
#[derive(Clone, Debug)]
pub struct BallRule {
    dim: usize,
    level: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    cell: f64,
}

impl BallRule {
    pub fn new(n: usize, m: usize) -> Result<Self> {
        if n < 1 {
            return Err(invalid("dimension must be at least 1"));
        }
        if m < 2 {
            return Err(Error::CoarseQuadrature(m));
        }
        let depth = match n {
            1 | 2 => 4,
            3 => 2,
            _ => 1,
        };
        let cell = 2.0 / m as f64;
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        let mut idx = vec![0usize; n];
        let mut lo = vec![0.0; n];
        'outer: loop {
            for a in 0..n {
                lo[a] = -1.0 + idx[a] as f64 * cell;
            }
            add_cell(&lo, cell, depth, &mut nodes, &mut weights);
            for a in (0..n).rev() {
                idx[a] += 1;
                if idx[a] < m {
                    continue 'outer;
                }
                idx[a] = 0;
            }
            break;
        }
        if weights.is_empty() {
            return Err(Error::CoarseQuadrature(m));
        }
        let total: f64 = crate::stats::pairwise_sum(&weights);
        for w in &mut weights {
            *w /= total;
        }
        Ok(Self { dim: n, level: m, nodes, weights, cell })
    }

    /// Shared rule for `(n, m)`; rules are cached for the life of the process.
    pub fn cached(n: usize, m: usize) -> Result<Arc<Self>> {
        type Cache = Mutex<HashMap<(usize, usize), Arc<BallRule>>>;
        static CACHE: OnceLock<Cache> = OnceLock::new();
        let cache = CACHE.get_or_init(Default::default);
        if let Some(r) = cache.lock().expect("rule cache").get(&(n, m)) {
            return Ok(r.clone());
        }
        let rule = Arc::new(BallRule::new(n, m)?);
        cache.lock().expect("rule cache").insert((n, m), rule.clone());
        Ok(rule)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn level(&self) -> usize {
        self.level
    }
    pub fn len(&self) -> usize {
        self.weights.len()
    }
    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
    pub fn node(&self, i: usize) -> &[f64] {
        &self.nodes[i * self.dim..(i + 1) * self.dim]
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Average of `f` over the closed ball `B_eps(x)`.
    pub fn average(&self, f: impl Fn(&[f64]) -> f64, x: &[f64], epsilon: f64) -> f64 {
        let mut y = vec![0.0; self.dim];
        let terms: Vec<f64> = (0..self.len())
            .map(|i| {
                for (a, yv) in y.iter_mut().enumerate() {
                    *yv = x[a] + epsilon * self.node(i)[a];
                }
                self.weights[i] * f(&y)
            })
            .collect();
        crate::stats::pairwise_sum(&terms)
    }

    /// Per-coordinate second moment of the rule on `B_eps(0)`.
    pub fn second_moment(&self, axis: usize, epsilon: f64) -> f64 {
        self.average(|y| y[axis] * y[axis], &vec![0.0; self.dim], epsilon)
    }
}

fn add_cell(lo: &[f64], size: f64, depth: usize, nodes: &mut Vec<f64>, weights: &mut Vec<f64>) {
    let n = lo.len();
    // squared distance range from the origin over the cell
    let (mut near, mut far) = (0.0, 0.0);
    for &l in lo {
        let h = l + size;
        let a = l.abs().min(h.abs());
        let b = l.abs().max(h.abs());
        if l <= 0.0 && h >= 0.0 {
            far += b * b;
        } else {
            near += a * a;
            far += b * b;
        }
    }
    let vol = size.powi(n as i32);
    if far <= 1.0 || depth == 0 || near > 1.0 {
        if near > 1.0 {
            return;
        }
        let c: Vec<f64> = lo.iter().map(|l| l + 0.5 * size).collect();
        if far <= 1.0 {
            // two-point Gauss-Legendre per axis: exact for the second moments
            let g = 0.5 * size / 3f64.sqrt();
            let w = vol / (1usize << n) as f64;
            for corner in 0..(1usize << n) {
                for a in 0..n {
                    nodes.push(c[a] + if corner >> a & 1 == 1 { g } else { -g });
                }
                weights.push(w);
            }
        } else if c.iter().map(|v| v * v).sum::<f64>() <= 1.0 {
            nodes.extend_from_slice(&c);
            weights.push(vol);
        }
        return;
    }
    let half = 0.5 * size;
    let mut sub = lo.to_vec();
    for corner in 0..(1usize << n) {
        for a in 0..n {
            sub[a] = lo[a] + if corner >> a & 1 == 1 { half } else { 0.0 };
        }
        add_cell(&sub, half, depth - 1, nodes, weights);
    }
}

/// Extremal values over the closed ball and where they are attained.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BallExtrema {
    pub max: f64,
    pub argmax: Vec<f64>,
    pub min: f64,
    pub argmin: Vec<f64>,
}

fn golden<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, maximize: bool) -> (f64, f64) {
    let sign = if maximize { -1.0 } else { 1.0 };
    let g = |t: f64| sign * f(t);
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (g(c), g(d));
    for _ in 0..100 {
        if (b - a).abs() < 1e-15 * (1.0 + a.abs()) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = g(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = g(d);
        }
    }
    let t = 0.5 * (a + b);
    let mut best = (t, g(t));
    for (tt, v) in [(c, fc), (d, fd)] {
        if v < best.1 {
            best = (tt, v);
        }
    }
    (best.0, sign * best.1)
}

fn sphere_point(x: &[f64], epsilon: f64, angles: &[f64], out: &mut [f64]) {
    let n = x.len();
    let mut s = 1.0;
    for a in 0..n - 1 {
        out[a] = x[a] + epsilon * s * angles[a].cos();
        s *= angles[a].sin();
    }
    out[n - 1] = x[n - 1] + epsilon * s;
}

fn angle_bounds(n: usize, a: usize) -> (f64, f64) {
    if a == n - 2 {
        (0.0, 2.0 * std::f64::consts::PI)
    } else {
        (0.0, std::f64::consts::PI)
    }
}

/// One extremum of `f` on the sphere `|y - x| = eps`: grid scan over
/// hyperspherical angles, then golden-section refinement coordinate by coordinate.
fn sphere_extremum(f: &dyn Fn(&[f64]) -> f64, x: &[f64], epsilon: f64, maximize: bool) -> (f64, Vec<f64>) {
    let n = x.len();
    let better = |a: f64, b: f64| if maximize { a > b } else { a < b };
    let mut y = vec![0.0; n];
    if n == 1 {
        let lo = x[0] - epsilon;
        let hi = x[0] + epsilon;
        let (vl, vh) = (f(&[lo]), f(&[hi]));
        return if better(vh, vl) { (vh, vec![hi]) } else { (vl, vec![lo]) };
    }
    let k = match n {
        2 => 1440,
        3 => 96,
        4 => 24,
        _ => 10,
    };
    let dims = n - 1;
    let steps: Vec<f64> = (0..dims)
        .map(|a| {
            let (lo, hi) = angle_bounds(n, a);
            let count = if a == n - 2 { 2 * k } else { k };
            (hi - lo) / count as f64
        })
        .collect();
    let counts: Vec<usize> = (0..dims).map(|a| if a == n - 2 { 2 * k } else { k + 1 }).collect();
    let mut idx = vec![0usize; dims];
    let mut angles = vec![0.0; dims];
    let mut best_angles = angles.clone();
    let mut best = if maximize { f64::NEG_INFINITY } else { f64::INFINITY };
    'scan: loop {
        for a in 0..dims {
            angles[a] = idx[a] as f64 * steps[a];
        }
        sphere_point(x, epsilon, &angles, &mut y);
        let v = f(&y);
        if better(v, best) {
            best = v;
            best_angles.copy_from_slice(&angles);
        }
        for a in (0..dims).rev() {
            idx[a] += 1;
            if idx[a] < counts[a] {
                continue 'scan;
            }
            idx[a] = 0;
        }
        break;
    }
    let passes = if dims == 1 { 1 } else { 6 };
    let mut width: Vec<f64> = steps.clone();
    for _ in 0..passes {
        for a in 0..dims {
            let center = best_angles[a];
            let eval = |t: f64| {
                let mut ang = best_angles.clone();
                ang[a] = t;
                let mut z = vec![0.0; n];
                sphere_point(x, epsilon, &ang, &mut z);
                f(&z)
            };
            let (t, v) = golden(eval, center - width[a], center + width[a], maximize);
            if !better(best, v) {
                best = v;
                best_angles[a] = t;
            }
        }
        for w in &mut width {
            *w *= 0.5;
        }
    }
    sphere_point(x, epsilon, &best_angles, &mut y);
    (best, y)
}

/// Max and min of `f` over the closed ball `B_eps(x)`: sphere search plus a
/// scan of the quadrature nodes for interior extrema.
pub fn ball_extrema(f: &dyn Fn(&[f64]) -> f64, x: &[f64], epsilon: f64, m: usize) -> Result<BallExtrema> {
    if !(epsilon > 0.0) {
        return Err(invalid("epsilon must be positive"));
    }
    let rule = BallRule::cached(x.len(), m)?;
    let (mut max, mut argmax) = sphere_extremum(f, x, epsilon, true);
    let (mut min, mut argmin) = sphere_extremum(f, x, epsilon, false);
    let n = x.len();
    let mut y = vec![0.0; n];
    let mut inner_max: Option<(f64, Vec<f64>)> = None;
    let mut inner_min: Option<(f64, Vec<f64>)> = None;
    for i in 0..rule.len() {
        for a in 0..n {
            y[a] = x[a] + epsilon * rule.node(i)[a];
        }
        let v = f(&y);
        if v > max && inner_max.as_ref().is_none_or(|b| v > b.0) {
            inner_max = Some((v, y.clone()));
        }
        if v < min && inner_min.as_ref().is_none_or(|b| v < b.0) {
            inner_min = Some((v, y.clone()));
        }
    }
    let radius = 0.5 * rule.cell * epsilon;
    if let Some((v, z)) = inner_max {
        let (v, z) = refine_interior(f, x, epsilon, z, v, radius, true);
        max = v;
        argmax = z;
    }
    if let Some((v, z)) = inner_min {
        let (v, z) = refine_interior(f, x, epsilon, z, v, radius, false);
        min = v;
        argmin = z;
    }
    Ok(BallExtrema { max, argmax, min, argmin })
}

fn refine_interior(
    f: &dyn Fn(&[f64]) -> f64,
    x: &[f64],
    epsilon: f64,
    mut z: Vec<f64>,
    mut best: f64,
    radius: f64,
    maximize: bool,
) -> (f64, Vec<f64>) {
    let clamp = |mut p: Vec<f64>| {
        let d = crate::geometry::norm_diff(&p, x);
        if d > epsilon {
            for (pv, xv) in p.iter_mut().zip(x) {
                *pv = xv + (*pv - xv) * epsilon / d;
            }
        }
        p
    };
    for _ in 0..4 {
        for a in 0..z.len() {
            let base = z.clone();
            let eval = |t: f64| {
                let mut p = base.clone();
                p[a] = t;
                f(&clamp(p))
            };
            let (t, v) = golden(eval, base[a] - radius, base[a] + radius, maximize);
            if (maximize && v > best) || (!maximize && v < best) {
                best = v;
                let mut p = base.clone();
                p[a] = t;
                z = clamp(p);
            }
        }
    }
    (best, z)
}

/// Options for the mean value evaluators.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MvOptions {
    /// Quadrature level: cells per axis on `[-eps, eps]^n`.
    pub m: usize,
    /// Use the test function's closed-form extrema when it has them.
    pub analytic_extrema: bool,
}

impl Default for MvOptions {
    fn default() -> Self {
        Self { m: 16, analytic_extrema: false }
    }
}

fn combine(params: &GameParams, max: f64, min: f64, avg: impl FnOnce() -> f64) -> f64 {
    if params.beta == 0.0 {
        0.5 * (max + min)
    } else {
        0.5 * params.alpha * (max + min) + params.beta * avg()
    }
}

fn extrema(
    phi: &dyn TestFunction,
    f: &dyn Fn(&[f64]) -> f64,
    x: &[f64],
    epsilon: f64,
    opts: &MvOptions,
) -> Result<(f64, f64)> {
    if opts.analytic_extrema {
        if let Some(e) = phi.exact_extrema(x, epsilon) {
            return Ok(e);
        }
        log::debug!("{} has no closed-form extrema at {x:?}; scanning", phi.name());
    }
    let e = ball_extrema(f, x, epsilon, opts.m)?;
    Ok((e.max, e.min))
}

fn check_point(params: &GameParams, x: &[f64]) -> Result<()> {
    if x.len() != params.n {
        return Err(Error::DimensionMismatch { expected: params.n, got: x.len() });
    }
    Ok(())
}

/// `(alpha/2)(max + min) + beta * avg` of `phi` over the closed ball `B_eps(x)`.
pub fn mv_value(phi: &dyn TestFunction, x: &[f64], params: &GameParams, opts: &MvOptions) -> Result<f64> {
    check_point(params, x)?;
    let eps = params.epsilon;
    let f = |y: &[f64]| phi.value(y);
    let (max, min) = extrema(phi, &f, x, eps, opts)?;
    let rule = BallRule::cached(params.n, opts.m)?;
    Ok(combine(params, max, min, || rule.average(f, x, eps)))
}

/// `mv_value - phi(x)`.
pub fn mv_residual(phi: &dyn TestFunction, x: &[f64], params: &GameParams, opts: &MvOptions) -> Result<f64> {
    Ok(mv_value(phi, x, params, opts)? - phi.value(x))
}

/// Parabolic expansion residual: the mean value expression at time
/// `t - eps^2/2` minus `u(x, t)`.
pub fn parabolic_mv_residual(
    u: &dyn TestFunction,
    x: &[f64],
    t: f64,
    params: &GameParams,
    opts: &MvOptions,
) -> Result<f64> {
    check_point(params, x)?;
    let eps = params.epsilon;
    let s = t - 0.5 * eps * eps;
    if s < 0.0 {
        return Err(invalid(format!("t = {t} must be at least eps^2/2 = {}", 0.5 * eps * eps)));
    }
    let f = |y: &[f64]| u.value_at(y, s);
    let e = ball_extrema(&f, x, eps, opts.m)?;
    let rule = BallRule::cached(params.n, opts.m)?;
    Ok(combine(params, e.max, e.min, || rule.average(f, x, eps)) - u.value_at(x, t))
}

/// Central-difference `Delta phi + (p - 2) <D^2 phi Dphi, Dphi>/|Dphi|^2`;
/// for `p = inf` only the normalized infinity Laplacian. `p = 2` does not
/// need a gradient.
pub fn fd_normalized_p_laplacian(phi: &dyn Fn(&[f64]) -> f64, x: &[f64], p: f64, h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(invalid("finite difference step must be positive"));
    }
    if !(p > 1.0) {
        return Err(invalid(format!("exponent p = {p} must exceed 1")));
    }
    let n = x.len();
    let f0 = phi(x);
    let mut y = x.to_vec();
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n * n];
    for i in 0..n {
        y[i] = x[i] + h;
        let fp = phi(&y);
        y[i] = x[i] - h;
        let fm = phi(&y);
        y[i] = x[i];
        grad[i] = (fp - fm) / (2.0 * h);
        hess[i * n + i] = (fp - 2.0 * f0 + fm) / (h * h);
        for j in 0..i {
            let mut val = 0.0;
            for (si, sj, sign) in [(1.0, 1.0, 1.0), (1.0, -1.0, -1.0), (-1.0, 1.0, -1.0), (-1.0, -1.0, 1.0)] {
                y[i] = x[i] + si * h;
                y[j] = x[j] + sj * h;
                val += sign * phi(&y);
            }
            y[i] = x[i];
            y[j] = x[j];
            let v = val / (4.0 * h * h);
            hess[i * n + j] = v;
            hess[j * n + i] = v;
        }
    }
    let lap: f64 = (0..n).map(|i| hess[i * n + i]).sum();
    if p == 2.0 {
        return Ok(lap);
    }
    let g2: f64 = grad.iter().map(|g| g * g).sum();
    let scale = 1.0 + f0.abs();
    if g2.sqrt() <= 1e-8 * scale {
        return Err(Error::DegenerateGradient(g2.sqrt()));
    }
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += grad[i] * hess[i * n + j] * grad[j];
        }
    }
    let inf_lap = quad / g2;
    Ok(if p.is_infinite() { inf_lap } else { lap + (p - 2.0) * inf_lap })
}

/// One row of a residual table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualRow {
    pub epsilon: f64,
    pub residual: f64,
    pub residual_over_eps2: f64,
}

/// Residual table with its Richardson extrapolation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MvLimit {
    pub phi: String,
    pub x: Vec<f64>,
    pub p: f64,
    pub rows: Vec<ResidualRow>,
    /// Extrapolated limit of `residual / eps^2`; `None` for non-monotone tables.
    pub limit: Option<f64>,
    /// Observed order `q` in `R(eps) = L + c eps^q`.
    pub order: Option<f64>,
    pub monotone: bool,
}

/// Richardson extrapolation of `residual / eps^2` over a decreasing
/// `eps` sequence (at least three values), using the last three entries.
pub fn mv_limit(
    phi: &dyn TestFunction,
    x: &[f64],
    p: f64,
    epsilons: &[f64],
    opts: &MvOptions,
) -> Result<MvLimit> {
    if epsilons.len() < 3 {
        return Err(invalid("need at least three epsilon values"));
    }
    if epsilons.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(invalid("epsilon values must be strictly decreasing"));
    }
    let mut rows = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let params = GameParams::for_mean_value(x.len(), p, eps)?;
        let r = mv_residual(phi, x, &params, opts)?;
        rows.push(ResidualRow { epsilon: eps, residual: r, residual_over_eps2: r / (eps * eps) });
    }
    let (limit, order, monotone) = richardson(&rows);
    Ok(MvLimit { phi: phi.name(), x: x.to_vec(), p, rows, limit, order, monotone })
}

fn richardson(rows: &[ResidualRow]) -> (Option<f64>, Option<f64>, bool) {
    let r: Vec<f64> = rows.iter().map(|row| row.residual_over_eps2).collect();
    let scale = r.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let flat = 1e-10 * scale;
    let diffs: Vec<f64> = r.windows(2).map(|w| w[1] - w[0]).collect();
    let last = *r.last().expect("rows");
    if diffs.iter().all(|d| d.abs() <= flat) {
        return (Some(last), None, true);
    }
    let monotone = diffs.iter().all(|d| *d >= -flat) || diffs.iter().all(|d| *d <= flat);
    if !monotone {
        return (None, None, false);
    }
    let k = r.len();
    let (r1, r2, r3) = (r[k - 3], r[k - 2], r[k - 1]);
    let (d1, d2) = (r1 - r2, r2 - r3);
    if d2.abs() <= flat {
        return (Some(r3), None, true);
    }
    let ratio = rows[k - 2].epsilon / rows[k - 1].epsilon;
    let q = (d1 / d2).ln() / ratio.ln();
    if !q.is_finite() || q <= 0.0 {
        return (None, None, true);
    }
    (Some(r3 - d2 / (ratio.powf(q) - 1.0)), Some(q), true)
}

/// CSV with header `phi,x1..xn,p,epsilon,residual,residual_over_eps2`.
pub fn write_residual_csv<W: Write>(tables: &[MvLimit], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let n = tables.first().map_or(0, |t| t.x.len());
    let mut header = vec!["phi".to_string()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    header.extend(["p", "epsilon", "residual", "residual_over_eps2"].map(String::from));
    w.write_record(&header)?;
    for t in tables {
        if t.x.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: t.x.len() });
        }
        for row in &t.rows {
            let mut rec = vec![t.phi.clone()];
            rec.extend(t.x.iter().map(|&v| fmt_f64(v)));
            rec.push(if t.p.is_infinite() { "inf".into() } else { fmt_f64(t.p) });
            rec.extend([row.epsilon, row.residual, row.residual_over_eps2].map(fmt_f64));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(n: usize, p: f64, eps: f64) -> GameParams {
        GameParams::for_mean_value(n, p, eps).unwrap()
    }

    #[test]
    fn rule_is_normalized_and_symmetric() {
        for n in 1..=3 {
            let rule = BallRule::new(n, 8).unwrap();
            let total = crate::stats::pairwise_sum(rule.weights());
            assert!((total - 1.0).abs() < 1e-13, "{total}");
            for a in 0..n {
                let first = rule.average(|y| y[a], &vec![0.0; n], 1.0);
                assert!(first.abs() < 1e-15);
            }
        }
        assert!(matches!(BallRule::new(2, 1), Err(Error::CoarseQuadrature(1))));
    }

    #[test]
    fn linear_is_reproduced() {
        for p in [1.5, 2.0, 3.0, f64::INFINITY] {
            let r = mv_residual(&Builtin::Linear, &[0.3, -0.2], &params(2, p, 0.1), &MvOptions::default()).unwrap();
            assert!(r.abs() < 1e-12, "p={p} r={r}");
        }
    }

    #[test]
    fn quadratic_at_origin() {
        let eps = 0.1;
        let v = mv_value(&Builtin::Quadratic, &[0.0, 0.0], &params(2, 2.0, eps), &MvOptions::default()).unwrap();
        assert!((v - eps * eps / 2.0).abs() < 2e-3 * eps * eps, "{v}");
    }

    #[test]
    fn aronsson_closed_form_extrema() {
        let eps = 0.1;
        let (max, min) = Builtin::Aronsson.exact_extrema(&[1.0, 0.0], eps).unwrap();
        assert!((max - 1.1f64.powf(4.0 / 3.0)).abs() < 1e-15);
        let f = |y: &[f64]| Builtin::Aronsson.value(y);
        let e = ball_extrema(&f, &[1.0, 0.0], eps, 16).unwrap();
        assert!((e.max - max).abs() < 1e-10);
        assert!((e.min - min).abs() < 1e-10, "{} {}", e.min, min);
    }

    #[test]
    fn extremizers_follow_the_gradient() {
        let f = |y: &[f64]| Builtin::Radial { p0: 3.0 }.value(y);
        let x = [0.8, 0.6];
        let e = ball_extrema(&f, &x, 0.05, 16).unwrap();
        let g = [0.8, 0.6];
        let dir = |z: &[f64]| {
            let d = [z[0] - x[0], z[1] - x[1]];
            (d[0] * g[0] + d[1] * g[1]) / norm(&d)
        };
        assert!(dir(&e.argmax) > 0.9);
        assert!(dir(&e.argmin) < -0.9);
    }

    #[test]
    fn interior_extrema_are_found() {
        let f = |y: &[f64]| -((y[0] - 0.01).powi(2) + (y[1] + 0.02).powi(2));
        let e = ball_extrema(&f, &[0.0, 0.0], 0.1, 16).unwrap();
        assert!(e.max.abs() < 1e-12);
        assert!((e.argmax[0] - 0.01).abs() < 1e-6);
    }

    #[test]
    fn fd_operator_on_builtins() {
        let q = |y: &[f64]| Builtin::Quadratic.value(y);
        assert!((fd_normalized_p_laplacian(&q, &[0.3, 0.4], 2.0, 1e-3).unwrap() - 4.0).abs() < 1e-6);
        let lin = |y: &[f64]| Builtin::Linear.value(y);
        assert!(fd_normalized_p_laplacian(&lin, &[0.3, 0.4], 5.0, 1e-3).unwrap().abs() < 1e-6);
        let a = |y: &[f64]| Builtin::Aronsson.value(y);
        assert!(fd_normalized_p_laplacian(&a, &[1.0, 0.5], f64::INFINITY, 1e-4).unwrap().abs() < 1e-6);
        assert!(matches!(
            fd_normalized_p_laplacian(&q, &[0.0, 0.0], 3.0, 1e-3),
            Err(Error::DegenerateGradient(_))
        ));
        for b in [Builtin::Quadratic, Builtin::CoordinateQuadratic, Builtin::Radial { p0: 3.0 }, Builtin::Aronsson] {
            let f = |y: &[f64]| b.value(y);
            for p in [2.0, 3.0, 4.0, f64::INFINITY] {
                let x = [0.7, -0.4];
                let fd = fd_normalized_p_laplacian(&f, &x, p, 1e-4).unwrap();
                let exact = b.operator_value(&x, p).unwrap();
                assert!((fd - exact).abs() < 1e-5 * (1.0 + exact.abs()), "{b:?} p={p} {fd} {exact}");
            }
        }
    }

    #[test]
    fn caloric_and_non_caloric() {
        let opts = MvOptions::default();
        let eps = 0.05;
        let pr = params(2, 2.0, eps);
        let r = parabolic_mv_residual(&Builtin::Caloric, &[0.4, 0.1], 0.5, &pr, &opts).unwrap();
        assert!((r / (eps * eps)).abs() < 1e-3, "{r}");
        let r = parabolic_mv_residual(&Builtin::CoordinateQuadratic, &[0.4, 0.1], 0.5, &pr, &opts).unwrap();
        assert!((r / (eps * eps) - 0.25).abs() < 2.5e-3, "{r}");
        assert!(parabolic_mv_residual(&Builtin::Caloric, &[0.4, 0.1], 1e-4, &pr, &opts).is_err());
    }

    #[test]
    fn richardson_on_synthetic_rows() {
        let rows: Vec<ResidualRow> = [0.1, 0.05, 0.025]
            .iter()
            .map(|&e| ResidualRow { epsilon: e, residual: 0.0, residual_over_eps2: 2.0 + 3.0 * e })
            .collect();
        let (l, q, mono) = richardson(&rows);
        assert!(mono);
        assert!((l.unwrap() - 2.0).abs() < 1e-12);
        assert!((q.unwrap() - 1.0).abs() < 1e-9);
        let mut bumpy = rows.clone();
        bumpy[1].residual_over_eps2 = 1.0;
        assert_eq!(richardson(&bumpy), (None, None, false));
    }

    #[test]
    fn parse_names() {
        assert_eq!(Builtin::parse("radial:3").unwrap(), Builtin::Radial { p0: 3.0 });
        assert_eq!(Builtin::parse("aronsson").unwrap().name(), "aronsson");
        assert!(Builtin::parse("cubic").is_err());
    }
}
