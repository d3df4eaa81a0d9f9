use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use super::{check_compatible, stencil_update, PAR_THRESHOLD};
use crate::error::{invalid, Error, Result};
use crate::io::{fmt_f64, write_json};
use crate::lattice::{Lattice, LatticeField, NodeClass};
use crate::params::GameParams;
use crate::payoff::TimedPayoff;

/// Values on `lattice x {t_0, ..., t_S}` with `t_s = min(s eps^2 / 2, T)`.
/// Stored slice-major.
#[derive(Clone, Debug)]
pub struct SpaceTimeField {
    lattice: Arc<Lattice>,
    horizon: f64,
    params: GameParams,
    values: Vec<f64>,
}

#[derive(Serialize)]
struct Sidecar {
    horizon: f64,
    epsilon: f64,
    p: f64,
    n: usize,
    alpha: f64,
    beta: f64,
    slice_count: usize,
    node_count: usize,
}

impl SpaceTimeField {
    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }
    pub fn horizon(&self) -> f64 {
        self.horizon
    }
    pub fn params(&self) -> &GameParams {
        &self.params
    }
    pub fn slice_count(&self) -> usize {
        self.values.len() / self.lattice.len()
    }

    pub fn time(&self, slice: usize) -> f64 {
        slice_time(slice, self.params.epsilon, self.horizon)
    }

    pub fn slice(&self, s: usize) -> &[f64] {
        let m = self.lattice.len();
        &self.values[s * m..(s + 1) * m]
    }

    pub fn slice_mut(&mut self, s: usize) -> &mut [f64] {
        let m = self.lattice.len();
        &mut self.values[s * m..(s + 1) * m]
    }

    pub fn value(&self, node: usize, slice: usize) -> f64 {
        self.values[slice * self.lattice.len() + node]
    }

    pub fn final_slice(&self) -> LatticeField {
        let s = self.slice_count() - 1;
        LatticeField::new(self.lattice.clone(), self.slice(s).to_vec()).expect("finite slice")
    }

    /// Slice whose time is closest to `t`, clipped to the horizon.
    pub fn slice_at(&self, t: f64) -> usize {
        let eps2 = self.params.epsilon * self.params.epsilon;
        let s = (2.0 * t.clamp(0.0, self.horizon) / eps2).round() as usize;
        s.min(self.slice_count() - 1)
    }

    /// CSV with header `x1,...,xn,t,class,value`, slice by slice.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let n = self.lattice.dim();
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
        header.extend(["t", "class", "value"].map(String::from));
        w.write_record(&header)?;
        for s in 0..self.slice_count() {
            let t = fmt_f64(self.time(s));
            for i in 0..self.lattice.len() {
                let mut row: Vec<String> = self.lattice.point(i).iter().map(|&c| fmt_f64(c)).collect();
                row.push(t.clone());
                row.push(self.lattice.class(i).as_str().to_string());
                row.push(fmt_f64(self.value(i, s)));
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// JSON sidecar holding the horizon, step size and exponent.
    pub fn write_sidecar<W: Write>(&self, out: W) -> Result<()> {
        let p = &self.params;
        write_json(
            out,
            &Sidecar {
                horizon: self.horizon,
                epsilon: p.epsilon,
                p: p.p,
                n: p.n,
                alpha: p.alpha,
                beta: p.beta,
                slice_count: self.slice_count(),
                node_count: self.lattice.len(),
            },
        )
    }
}

fn slice_time(s: usize, eps: f64, horizon: f64) -> f64 {
    (s as f64 * 0.5 * eps * eps).min(horizon)
}

/// Number of game steps that fit into remaining time `t`.
pub(crate) fn steps_for(t: f64, eps: f64) -> usize {
    if t <= 0.0 {
        0
    } else {
        (2.0 * t / (eps * eps) - 1e-9).ceil().max(0.0) as usize
    }
}

/// Marches the parabolic DPP forward from the initial slice. Slice `s`
/// depends only on slice `s - 1`, so one pass gives the exact solution.
pub fn solve_parabolic(
    lattice: Arc<Lattice>,
    data: &dyn TimedPayoff,
    horizon: f64,
    params: &GameParams,
) -> Result<SpaceTimeField> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(invalid(format!("horizon T = {horizon} must be positive and finite")));
    }
    check_compatible(&lattice, params)?;
    let eps = params.epsilon;
    let steps = steps_for(horizon, eps);
    if horizon < 0.5 * eps * eps {
        log::warn!("horizon {horizon} is shorter than one step eps^2/2; returning the initial slice only");
    }
    let slices = if horizon < 0.5 * eps * eps { 1 } else { steps + 1 };
    let m = lattice.len();
    let mut values = vec![0.0; m * slices];
    for i in 0..m {
        values[i] = data.eval(lattice.point(i), 0.0);
    }
    let strip: Vec<usize> = lattice.strip_nodes().collect();
    let interior = lattice.interior_nodes();
    for s in 1..slices {
        let t = slice_time(s, eps, horizon);
        let (prev, rest) = values.split_at_mut(s * m);
        let prev = &prev[(s - 1) * m..];
        let cur = &mut rest[..m];
        for &i in &strip {
            cur[i] = data.eval(lattice.point(i), t);
        }
        if interior.len() >= PAR_THRESHOLD {
            let upd: Vec<f64> =
                interior.par_iter().map(|&i| stencil_update(prev, &lattice, i, params.alpha, params.beta)).collect();
            for (&i, v) in interior.iter().zip(upd) {
                cur[i] = v;
            }
        } else {
            for &i in interior {
                cur[i] = stencil_update(prev, &lattice, i, params.alpha, params.beta);
            }
        }
    }
    if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
        return Err(invalid(format!("parabolic data not finite at node {} slice {}", pos % m, pos / m)));
    }
    Ok(SpaceTimeField { lattice, horizon, params: *params, values })
}

/// Sup over interior nodes and slices `s >= 1` of the slice recursion residual.
pub fn parabolic_defect(field: &SpaceTimeField, params: &GameParams) -> Result<f64> {
    check_compatible(&field.lattice, params)?;
    if params.epsilon != field.params.epsilon {
        return Err(Error::EpsilonMismatch { lattice: field.params.epsilon, params: params.epsilon });
    }
    let lat = &field.lattice;
    let mut worst = 0.0f64;
    for s in 1..field.slice_count() {
        let prev = field.slice(s - 1);
        let cur = field.slice(s);
        for &i in lat.interior_nodes() {
            debug_assert_eq!(lat.class(i), NodeClass::Interior);
            let r = (cur[i] - stencil_update(prev, lat, i, params.alpha, params.beta)).abs();
            worst = worst.max(r);
        }
    }
    Ok(worst)
}

impl SpaceTimeField {
    /// Wraps explicit slice-major values.
    pub fn from_values(lattice: Arc<Lattice>, horizon: f64, params: &GameParams, values: Vec<f64>) -> Result<Self> {
        let m = lattice.len();
        let expected = (steps_for(horizon, params.epsilon) + 1) * m;
        if values.len() != expected {
            return Err(Error::DimensionMismatch { expected, got: values.len() });
        }
        Ok(Self { lattice, horizon, params: *params, values })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dpp::elliptic::{solve, SolveOptions};
    use crate::geometry::Domain;
    use crate::lattice::build_lattice;

    fn unit(eps: f64, k: usize) -> Arc<Lattice> {
        Arc::new(build_lattice(&Domain::interval(0.0, 1.0).unwrap(), eps, k).unwrap())
    }

    fn ramp(x: &[f64], _t: f64) -> f64 {
        x[0].clamp(0.0, 1.0)
    }

    #[test]
    fn slice_count_and_times() {
        let lat = unit(0.1, 4);
        let params = GameParams::new(1, 2.0, 0.1).unwrap();
        let f = solve_parabolic(lat, &|_: &[f64], _| 1.0, 0.2, &params).unwrap();
        assert_eq!(f.slice_count(), 41);
        assert_eq!(f.time(0), 0.0);
        assert!((f.time(40) - 0.2).abs() < 1e-15);
        let g = solve_parabolic(f.lattice().clone(), &|_: &[f64], _| 1.0, 0.201, &params).unwrap();
        assert_eq!(g.slice_count(), 42);
        assert_eq!(g.time(41), 0.201);
    }

    #[test]
    fn constants_and_zero_defect() {
        let lat = unit(0.1, 4);
        let params = GameParams::new(1, 3.0, 0.1).unwrap();
        let f = solve_parabolic(lat, &|_: &[f64], _| 2.5, 0.1, &params).unwrap();
        assert!(f.values.iter().all(|v| (v - 2.5).abs() < 1e-14));
        assert_eq!(parabolic_defect(&f, &params).unwrap(), 0.0);
    }

    #[test]
    fn linear_datum_is_stationary() {
        let params = GameParams::new(1, 2.0, 0.1).unwrap();
        let walk = Arc::new(Lattice::discrete_walk(&Domain::interval(0.0, 1.0).unwrap(), 0.1).unwrap());
        let f = solve_parabolic(walk.clone(), &ramp, 0.5, &params).unwrap();
        for s in 0..f.slice_count() {
            for &i in walk.interior_nodes() {
                assert!((f.value(i, s) - walk.point(i)[0]).abs() < 1e-12);
            }
        }
        // the clamped collar bends the line only near the ends
        let lat = unit(0.1, 4);
        let f = solve_parabolic(lat.clone(), &ramp, 0.5, &params).unwrap();
        for &i in lat.interior_nodes() {
            let x = lat.point(i)[0];
            let err = (f.value(i, f.slice_count() - 1) - x).abs();
            assert!(err < 0.02, "x={x} err={err}");
        }
    }

    #[test]
    fn perturbation_shows_in_defect() {
        let lat = unit(0.1, 4);
        let params = GameParams::new(1, 3.0, 0.1).unwrap();
        let mut f = solve_parabolic(lat.clone(), &ramp, 0.1, &params).unwrap();
        let node = lat.interior_nodes()[3];
        f.slice_mut(2)[node] += 1e-3;
        assert!(parabolic_defect(&f, &params).unwrap() >= 1e-3 - 1e-15);
    }

    #[test]
    fn causality() {
        let lat = unit(0.1, 4);
        let params = GameParams::new(1, 4.0, 0.1).unwrap();
        let a = solve_parabolic(lat.clone(), &|x: &[f64], _| if x[0] >= 1.0 { 1.0 } else { 0.0 }, 0.1, &params).unwrap();
        let late = |x: &[f64], t: f64| if x[0] >= 1.0 || t > 0.05 { 1.0 } else { 0.0 };
        let b = solve_parabolic(lat, &late, 0.1, &params).unwrap();
        let s = a.slice_at(0.05);
        for q in 0..=s {
            assert_eq!(a.slice(q), b.slice(q));
        }
        assert_ne!(a.slice(s + 1), b.slice(s + 1));
    }

    #[test]
    fn long_horizon_approaches_elliptic() {
        let lat = unit(0.1, 4);
        let params = GameParams::new(1, 3.0, 0.1).unwrap();
        let step = |x: &[f64]| if x[0] >= 1.0 { 1.0 } else { 0.0 };
        let (u, _) = solve(lat.clone(), &step, &params, &SolveOptions::with_tol(1e-12)).unwrap();
        let f = solve_parabolic(lat, &|x: &[f64], _| step(x), 8.0, &params).unwrap();
        let last = f.final_slice();
        let diff = last.values().iter().zip(u.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-10, "{diff}");
    }

    #[test]
    fn short_horizon_returns_initial_slice() {
        let lat = unit(0.1, 4);
        let params = GameParams::new(1, 2.0, 0.1).unwrap();
        let f = solve_parabolic(lat, &ramp, 0.001, &params).unwrap();
        assert_eq!(f.slice_count(), 1);
        assert!(solve_parabolic(f.lattice().clone(), &ramp, 0.0, &params).is_err());
    }

    #[test]
    fn csv_and_sidecar() {
        let lat = unit(0.25, 2);
        let params = GameParams::new(1, 2.0, 0.25).unwrap();
        let f = solve_parabolic(lat.clone(), &ramp, 0.0625, &params).unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("x1,t,class,value\n"));
        assert_eq!(text.lines().count(), 1 + lat.len() * f.slice_count());
        let mut js = Vec::new();
        f.write_sidecar(&mut js).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&js).unwrap();
        assert_eq!(v["horizon"], 0.0625);
        assert_eq!(v["slice_count"], 3);
    }
}
