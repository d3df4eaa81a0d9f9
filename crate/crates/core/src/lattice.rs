//! Uniform lattices tied to the step size and fields living on them.

use std::io::{Read, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::Domain;
use crate::io::fmt_f64;

/// Upper bound on the number of lattice nodes we are willing to allocate.
const MAX_NODES: usize = 20_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeClass {
    Interior,
    Strip,
    Outside,
}

impl NodeClass {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeClass::Interior => "interior",
            NodeClass::Strip => "strip",
            NodeClass::Outside => "outside",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "interior" => Ok(NodeClass::Interior),
            "strip" => Ok(NodeClass::Strip),
            "outside" => Ok(NodeClass::Outside),
            other => Err(invalid(format!("unknown node class '{other}'"))),
        }
    }
}

/// Which lattice nodes a DPP step may reach from an interior node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stencil {
    /// Every node in the open ball of radius epsilon, center excluded.
    OpenBall,
    /// The `2n` nearest axis neighbors: the discrete walk with steps of length epsilon.
    AxisSteps,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Closure {
    Open,
    Closed,
}

/// Row-major uniform lattice covering the domain plus an epsilon collar.
#[derive(Clone, Debug)]
pub struct Lattice {
    domain: Domain,
    epsilon: f64,
    refinement: usize,
    spacing: f64,
    lo: Vec<f64>,
    shape: Vec<usize>,
    strides: Vec<usize>,
    coords: Vec<f64>,
    class: Vec<NodeClass>,
    interior: Vec<usize>,
    stencil: Stencil,
    offsets: Vec<isize>,
}

/// Lattice with spacing `epsilon / k`, `k >= 2`, and open-ball stencils.
pub fn build_lattice(domain: &Domain, epsilon: f64, k: usize) -> Result<Lattice> {
    if k < 2 {
        return Err(invalid(format!(
            "refinement k = {k} is too coarse to resolve the epsilon ball (need k >= 2)"
        )));
    }
    Lattice::build(domain, epsilon, k, Stencil::OpenBall)
}

impl Lattice {
    /// Lattice with spacing `epsilon` whose stencil is the `±epsilon` axis walk.
    pub fn discrete_walk(domain: &Domain, epsilon: f64) -> Result<Lattice> {
        Lattice::build(domain, epsilon, 1, Stencil::AxisSteps)
    }

    fn build(domain: &Domain, epsilon: f64, k: usize, stencil: Stencil) -> Result<Lattice> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(invalid(format!("epsilon = {epsilon} must be positive and finite")));
        }
        let n = domain.dim();
        let h = epsilon / k as f64;
        let (blo, bhi) = domain.bounding_box();
        let mut shape = Vec::with_capacity(n);
        let mut total: usize = 1;
        for a in 0..n {
            let cells = ((bhi[a] - blo[a]) / h - 1e-9).ceil();
            if !cells.is_finite() || cells > MAX_NODES as f64 {
                return Err(invalid("domain is too large for the requested spacing"));
            }
            let count = cells as usize + 2 * k + 1;
            total = total
                .checked_mul(count)
                .filter(|t| *t <= MAX_NODES)
                .ok_or_else(|| invalid("lattice would exceed the node limit"))?;
            shape.push(count);
        }
        let mut strides = vec![1usize; n];
        for a in (0..n.saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * shape[a + 1];
        }

        // Nodes sitting on the boundary up to rounding are classified as strip.
        let snap = 1e-9 * h;
        let strip_tol = epsilon + h * (n as f64).sqrt();
        let mut coords = Vec::with_capacity(total * n);
        let mut class = Vec::with_capacity(total);
        let mut interior = Vec::new();
        let mut idx = vec![0usize; n];
        for node in 0..total {
            let start = coords.len();
            for a in 0..n {
                coords.push(blo[a] + (idx[a] as f64 - k as f64) * h);
            }
            let sd = domain.signed_distance(&coords[start..]);
            let c = if sd < -snap {
                interior.push(node);
                NodeClass::Interior
            } else if sd.max(0.0) <= strip_tol {
                NodeClass::Strip
            } else {
                NodeClass::Outside
            };
            class.push(c);
            for a in (0..n).rev() {
                idx[a] += 1;
                if idx[a] < shape[a] {
                    break;
                }
                idx[a] = 0;
            }
        }

        let mut offsets = Vec::new();
        match stencil {
            Stencil::OpenBall => {
                for_each_offset(n, k as isize, |off| {
                    let r2: isize = off.iter().map(|o| o * o).sum();
                    if r2 > 0 && r2 < (k * k) as isize {
                        offsets.push(flat_offset(off, &strides));
                    }
                });
            }
            Stencil::AxisSteps => {
                for a in 0..n {
                    offsets.push(-(strides[a] as isize));
                    offsets.push(strides[a] as isize);
                }
                offsets.sort_unstable();
            }
        }

        Ok(Lattice {
            domain: domain.clone(),
            epsilon,
            refinement: k,
            spacing: h,
            lo: blo,
            shape,
            strides,
            coords,
            class,
            interior,
            stencil,
            offsets,
        })
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }
    pub fn dim(&self) -> usize {
        self.domain.dim()
    }
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
    pub fn refinement(&self) -> usize {
        self.refinement
    }
    pub fn spacing(&self) -> f64 {
        self.spacing
    }
    pub fn stencil(&self) -> Stencil {
        self.stencil
    }
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }
    pub fn len(&self) -> usize {
        self.class.len()
    }
    pub fn is_empty(&self) -> bool {
        self.class.is_empty()
    }
    pub fn point(&self, node: usize) -> &[f64] {
        let n = self.dim();
        &self.coords[node * n..(node + 1) * n]
    }
    pub fn class(&self, node: usize) -> NodeClass {
        self.class[node]
    }
    pub fn interior_nodes(&self) -> &[usize] {
        &self.interior
    }

    pub fn strip_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&i| self.class[i] == NodeClass::Strip)
    }

    /// Stencil neighbors used by the DPP operator at an interior node.
    pub fn neighbors(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        self.offsets.iter().map(move |&o| (node as isize + o) as usize)
    }

    pub fn stencil_size(&self) -> usize {
        self.offsets.len()
    }

    /// Multi-index of a node, last axis fastest.
    pub fn multi_index(&self, node: usize) -> Vec<usize> {
        let mut rem = node;
        self.strides
            .iter()
            .map(|s| {
                let i = rem / s;
                rem %= s;
                i
            })
            .collect()
    }

    pub fn node_at(&self, idx: &[usize]) -> Option<usize> {
        if idx.len() != self.dim() || idx.iter().zip(&self.shape).any(|(i, s)| i >= s) {
            return None;
        }
        Some(idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum())
    }

    /// Nodes (any class) whose coordinates lie in the closed box `[lo, hi]`,
    /// in row-major order.
    pub fn nodes_in_box(&self, lo: &[f64], hi: &[f64]) -> Vec<usize> {
        let n = self.dim();
        let k = self.refinement as f64;
        let mut first = vec![0usize; n];
        let mut last = vec![0usize; n];
        for a in 0..n {
            let f = ((lo[a] - self.lo[a]) / self.spacing + k).ceil().max(0.0);
            let l = ((hi[a] - self.lo[a]) / self.spacing + k).floor();
            if l < 0.0 || f > (self.shape[a] - 1) as f64 || f > l {
                return Vec::new();
            }
            first[a] = f as usize;
            last[a] = (l as usize).min(self.shape[a] - 1);
        }
        let mut out = Vec::new();
        let mut idx = first.clone();
        loop {
            out.push(idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum());
            let mut a = n;
            loop {
                if a == 0 {
                    return out;
                }
                a -= 1;
                idx[a] += 1;
                if idx[a] <= last[a] {
                    break;
                }
                idx[a] = first[a];
            }
        }
    }

    /// Non-outside nodes within distance `radius` of `x` (open or closed ball).
    pub fn nodes_in_ball(&self, x: &[f64], radius: f64, closure: Closure) -> Vec<usize> {
        let lo: Vec<f64> = x.iter().map(|v| v - radius).collect();
        let hi: Vec<f64> = x.iter().map(|v| v + radius).collect();
        self.nodes_in_box(&lo, &hi)
            .into_iter()
            .filter(|&i| self.class[i] != NodeClass::Outside)
            .filter(|&i| {
                let d = crate::geometry::norm_diff(self.point(i), x);
                match closure {
                    Closure::Open => d < radius,
                    Closure::Closed => d <= radius,
                }
            })
            .collect()
    }

    /// Nearest non-outside node to an arbitrary point.
    pub fn nearest_node(&self, x: &[f64]) -> Option<usize> {
        let idx: Vec<usize> = (0..self.dim())
            .map(|a| {
                let f = ((x[a] - self.lo[a]) / self.spacing + self.refinement as f64).round();
                f.clamp(0.0, (self.shape[a] - 1) as f64) as usize
            })
            .collect();
        let guess = self.node_at(&idx)?;
        if self.class[guess] != NodeClass::Outside {
            return Some(guess);
        }
        let mut r = self.spacing;
        while r <= 4.0 * self.epsilon + self.spacing {
            let best = self
                .nodes_in_ball(x, r, Closure::Closed)
                .into_iter()
                .min_by(|&a, &b| {
                    let da = crate::geometry::norm_diff(self.point(a), x);
                    let db = crate::geometry::norm_diff(self.point(b), x);
                    da.total_cmp(&db)
                });
            if best.is_some() {
                return best;
            }
            r *= 2.0;
        }
        None
    }
}

/// All lattice nodes `y != x` with `|y - x| < epsilon` (open) or `<= epsilon`
/// (closed), in node order.
pub fn ball_neighbors(
    lattice: &Lattice,
    node: usize,
    epsilon: f64,
    closure: Closure,
) -> Result<Vec<usize>> {
    if node >= lattice.len() {
        return Err(Error::NodeOutOfRange(node));
    }
    if lattice.class(node) != NodeClass::Interior {
        return Err(invalid(format!("node {node} is not an interior node")));
    }
    if !(epsilon > 0.0) {
        return Err(invalid("epsilon must be positive"));
    }
    let n = lattice.dim();
    let ratio = epsilon / lattice.spacing();
    let reach = ratio.floor() as isize;
    // Exact integer comparison when epsilon is a lattice multiple.
    let snapped = (ratio - ratio.round()).abs() < 1e-9;
    let r2_limit = if snapped { ratio.round() * ratio.round() } else { ratio * ratio };
    let base = lattice.multi_index(node);
    let mut out = Vec::new();
    let mut ok = true;
    for_each_offset(n, reach, |off| {
        let r2: isize = off.iter().map(|o| o * o).sum();
        if r2 == 0 {
            return;
        }
        let r2 = r2 as f64;
        let keep = match closure {
            Closure::Open => r2 < r2_limit,
            Closure::Closed => r2 <= r2_limit,
        };
        if !keep {
            return;
        }
        let idx: Option<Vec<usize>> = base
            .iter()
            .zip(off)
            .map(|(b, o)| usize::try_from(*b as isize + o).ok())
            .collect();
        match idx.and_then(|i| lattice.node_at(&i)) {
            Some(j) => out.push(j),
            None => ok = false,
        }
    });
    if !ok {
        return Err(invalid(format!("ball around node {node} leaves the lattice")));
    }
    if out.is_empty() {
        return Err(Error::EmptyStencil(node));
    }
    Ok(out)
}

fn for_each_offset(n: usize, reach: isize, mut f: impl FnMut(&[isize])) {
    let mut off = vec![-reach; n];
    loop {
        f(&off);
        let mut a = n;
        loop {
            if a == 0 {
                return;
            }
            a -= 1;
            off[a] += 1;
            if off[a] <= reach {
                break;
            }
            off[a] = -reach;
        }
    }
}

fn flat_offset(off: &[isize], strides: &[usize]) -> isize {
    off.iter().zip(strides).map(|(o, s)| o * *s as isize).sum()
}

/// One value per lattice node.
#[derive(Clone, Debug)]
pub struct LatticeField {
    lattice: Arc<Lattice>,
    values: Vec<f64>,
}

impl LatticeField {
    pub fn new(lattice: Arc<Lattice>, values: Vec<f64>) -> Result<Self> {
        if values.len() != lattice.len() {
            return Err(Error::DimensionMismatch { expected: lattice.len(), got: values.len() });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("field value at node {i} is not finite")));
        }
        Ok(Self { lattice, values })
    }

    pub fn from_fn(lattice: Arc<Lattice>, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let values = (0..lattice.len()).map(|i| f(lattice.point(i))).collect();
        Self::new(lattice, values)
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
    pub fn value(&self, node: usize) -> f64 {
        self.values[node]
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Value at the nearest non-outside node.
    pub fn value_near(&self, x: &[f64]) -> Option<f64> {
        self.lattice.nearest_node(x).map(|i| self.values[i])
    }

    /// `(min, max)` over the strip nodes.
    pub fn strip_range(&self) -> (f64, f64) {
        self.lattice.strip_nodes().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), i| {
            (lo.min(self.values[i]), hi.max(self.values[i]))
        })
    }

    /// CSV with header `x1,...,xn,class,value`, one row per node in node order.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let n = self.lattice.dim();
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
        header.push("class".into());
        header.push("value".into());
        w.write_record(&header)?;
        let mut row: Vec<String> = Vec::with_capacity(n + 2);
        for i in 0..self.lattice.len() {
            row.clear();
            row.extend(self.lattice.point(i).iter().map(|v| fmt_f64(*v)));
            row.push(self.lattice.class(i).as_str().into());
            row.push(fmt_f64(self.values[i]));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a field written by [`LatticeField::write_csv`] back onto `lattice`,
    /// checking that node coordinates and classes agree.
    pub fn read_csv<R: Read>(lattice: Arc<Lattice>, input: R) -> Result<Self> {
        let n = lattice.dim();
        let mut r = csv::Reader::from_reader(input);
        let mut values = Vec::with_capacity(lattice.len());
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            if rec.len() != n + 2 || i >= lattice.len() {
                return Err(invalid(format!("field CSV row {i} does not match the lattice")));
            }
            for a in 0..n {
                let x: f64 = rec[a].parse().map_err(|_| invalid(format!("bad coordinate in row {i}")))?;
                if (x - lattice.point(i)[a]).abs() > 1e-9 * lattice.spacing() {
                    return Err(invalid(format!("row {i} coordinates do not match the lattice")));
                }
            }
            if NodeClass::parse(&rec[n])? != lattice.class(i) {
                return Err(invalid(format!("row {i} class does not match the lattice")));
            }
            values.push(rec[n + 1].parse().map_err(|_| invalid(format!("bad value in row {i}")))?);
        }
        Self::new(lattice, values)
    }
}
