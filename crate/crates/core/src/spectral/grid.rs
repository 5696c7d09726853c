//! Node-centred finite differences for -½Δ + V on a box with Dirichlet
//! boundary, plus a geometric multigrid preconditioner.
//!
//! Vectors span every node of the box, boundary included; removed and
//! boundary nodes always hold zero.

use crate::error::{Result, TrapError};
use crate::geometry::{Aabb, Mask, Region};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Trap strength: finite height or hard (node removal).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TrapKind {
    Hard,
    Soft(f64),
}

/// Trap set U inside the outer box R.
#[derive(Debug, Clone, PartialEq)]
pub enum Traps {
    Empty,
    Boxes(Vec<Aabb>),
    /// Identical cubes of side `side` centred on a tensor product of
    /// per-axis coordinates.
    Lattice {
        side: f64,
        centers: Vec<Vec<f64>>,
    },
    /// Occupied cells are traps.
    Mask(Mask),
}

/// A pair (R, U): the outer box and the traps inside it.
#[derive(Debug, Clone, PartialEq)]
pub struct TrapDomain {
    pub outer: Aabb,
    pub traps: Traps,
}

impl TrapDomain {
    pub fn free(outer: Aabb) -> TrapDomain {
        TrapDomain {
            outer,
            traps: Traps::Empty,
        }
    }

    /// R \ U as a region.
    pub fn free_region(&self) -> Result<Region> {
        Ok(match &self.traps {
            Traps::Empty => Region::single(self.outer.clone()),
            Traps::Boxes(b) => Region::BoxComplement {
                outer: self.outer.clone(),
                holes: b.clone(),
            },
            Traps::Lattice { side, centers } => Region::Punched(crate::geometry::Punched {
                outer: self.outer.clone(),
                hole_side: *side,
                centers: centers.clone(),
            }),
            Traps::Mask(m) => {
                let w = m.window();
                let same = (0..w.dim()).all(|k| {
                    (w.lo_k(k) - self.outer.lo_k(k)).abs() < 1e-9 * m.h
                        && (w.hi_k(k) - self.outer.hi_k(k)).abs() < 1e-9 * m.h
                });
                if !same {
                    return Err(TrapError::Domain(
                        "trap mask must cover exactly the outer box".into(),
                    ));
                }
                let bits = m.bits.iter().map(|b| !b).collect();
                Region::Mask(Mask::new(m.h, m.origin.clone(), m.shape.clone(), bits)?)
            }
        })
    }
}

/// Discretised -½Δ + V with Dirichlet conditions outside the active nodes.
#[derive(Debug, Clone)]
pub struct GridOperator {
    pub d: usize,
    pub h: f64,
    pub origin: Vec<f64>,
    /// Intervals per axis; nodes are indexed 0..=n[k].
    pub n: Vec<usize>,
    strides: Vec<usize>,
    active: Vec<u32>,
    mask: Vec<bool>,
    pot: Vec<f64>,
}

fn strides_for(n: &[usize]) -> Vec<usize> {
    let d = n.len();
    let mut s = vec![1usize; d];
    for k in (0..d - 1).rev() {
        s[k] = s[k + 1] * (n[k + 1] + 1);
    }
    s
}

fn intervals(b: &Aabb, h: f64) -> Result<Vec<usize>> {
    if !(h > 0.0) {
        return Err(TrapError::param("h", "must be positive"));
    }
    (0..b.dim())
        .map(|k| {
            let side = b.hi_k(k) - b.lo_k(k);
            let n = (side / h).round();
            if (n * h - side).abs() > 1e-9 * side || n < 2.0 {
                return Err(TrapError::param(
                    "h",
                    format!("{h} does not divide the box side {side}"),
                ));
            }
            Ok(n as usize)
        })
        .collect()
}

impl GridOperator {
    fn from_parts(
        d: usize,
        h: f64,
        origin: Vec<f64>,
        n: Vec<usize>,
        mask: Vec<bool>,
        pot: Vec<f64>,
    ) -> Result<Self> {
        let strides = strides_for(&n);
        let active: Vec<u32> = (0..mask.len())
            .filter(|&i| mask[i])
            .map(|i| i as u32)
            .collect();
        if active.is_empty() {
            return Err(TrapError::Domain("no active grid nodes".into()));
        }
        Ok(GridOperator {
            d,
            h,
            origin,
            n,
            strides,
            active,
            mask,
            pot,
        })
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    pub fn active_count(&self) -> usize {
        self.active.len()
    }

    pub fn active_nodes(&self) -> &[u32] {
        &self.active
    }

    pub fn is_active(&self, f: usize) -> bool {
        self.mask[f]
    }

    pub fn potential(&self, f: usize) -> f64 {
        self.pot[f]
    }

    pub fn index(&self, f: usize) -> Vec<usize> {
        let mut r = f;
        let mut idx = vec![0; self.d];
        for k in (0..self.d).rev() {
            idx[k] = r % (self.n[k] + 1);
            r /= self.n[k] + 1;
        }
        idx
    }

    pub fn position(&self, f: usize) -> Vec<f64> {
        self.index(f)
            .iter()
            .zip(&self.origin)
            .map(|(&i, o)| o + i as f64 * self.h)
            .collect()
    }

    pub(crate) fn kinetic_diag(&self) -> f64 {
        self.d as f64 / (self.h * self.h)
    }

    pub(crate) fn off(&self) -> f64 {
        -0.5 / (self.h * self.h)
    }

    /// Gershgorin bound on the largest eigenvalue.
    pub fn norm_estimate(&self) -> f64 {
        let vmax = self
            .active
            .iter()
            .map(|&f| self.pot[f as usize])
            .fold(0.0, f64::max);
        2.0 * self.kinetic_diag() + vmax
    }

    /// The same operator with a constant added to the potential.
    pub fn shifted(&self, c: f64) -> GridOperator {
        let mut out = self.clone();
        for &f in &out.active {
            out.pot[f as usize] += c;
        }
        out
    }

    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let kd = self.kinetic_diag();
        let off = self.off();
        for &f in &self.active {
            let f = f as usize;
            let mut s = 0.0;
            for &st in &self.strides {
                s += x[f - st] + x[f + st];
            }
            y[f] = (kd + self.pot[f]) * x[f] + off * s;
        }
    }

    pub fn zeros(&self) -> Vec<f64> {
        vec![0.0; self.len()]
    }

    /// Zero on removed and boundary nodes.
    pub fn project(&self, x: &mut [f64]) {
        for (v, &m) in x.iter_mut().zip(&self.mask) {
            if !m {
                *v = 0.0;
            }
        }
    }

    /// Dense matrix over active nodes (small grids only).
    pub fn to_dense(&self) -> DMatrix<f64> {
        let m = self.active.len();
        let pos: std::collections::HashMap<u32, usize> = self
            .active
            .iter()
            .enumerate()
            .map(|(i, &f)| (f, i))
            .collect();
        let mut a = DMatrix::zeros(m, m);
        for (i, &f) in self.active.iter().enumerate() {
            a[(i, i)] = self.kinetic_diag() + self.pot[f as usize];
            for &st in &self.strides {
                for g in [f as usize - st, f as usize + st] {
                    if let Some(&j) = pos.get(&(g as u32)) {
                        a[(i, j)] = self.off();
                    }
                }
            }
        }
        a
    }

    pub fn gather(&self, x: &[f64]) -> Vec<f64> {
        self.active.iter().map(|&f| x[f as usize]).collect()
    }

    pub fn scatter(&self, v: &[f64]) -> Vec<f64> {
        let mut x = self.zeros();
        for (&f, &val) in self.active.iter().zip(v) {
            x[f as usize] = val;
        }
        x
    }
}

fn is_interior(idx: &[usize], n: &[usize]) -> bool {
    idx.iter().zip(n).all(|(&i, &nk)| i > 0 && i < nk)
}

fn for_each_node(n: &[usize], mut f: impl FnMut(usize, &[usize])) {
    let d = n.len();
    let total: usize = n.iter().map(|v| v + 1).product();
    let mut idx = vec![0usize; d];
    for flat in 0..total {
        f(flat, &idx);
        for k in (0..d).rev() {
            idx[k] += 1;
            if idx[k] <= n[k] {
                break;
            }
            idx[k] = 0;
        }
    }
}

/// -½Δ + V on the nodes of R's window that lie in the open interior of R.
/// `potential` returning +∞ removes the node.
pub fn assemble(
    region: &Region,
    potential: &dyn Fn(&[f64]) -> f64,
    h: f64,
) -> Result<GridOperator> {
    let window = region
        .window()
        .ok_or_else(|| TrapError::Domain("empty region".into()))?;
    let d = window.dim();
    let n = intervals(&window, h)?;
    let origin = window.lo();
    let total: usize = n.iter().map(|v| v + 1).product();
    let mut mask = vec![false; total];
    let mut pot = vec![0.0; total];
    let mut x = vec![0.0; d];
    let single = matches!(region, Region::BoxUnion(b) if b.len() == 1);
    let mut bad = None;
    for_each_node(&n, |f, idx| {
        if !is_interior(idx, &n) {
            return;
        }
        for k in 0..d {
            x[k] = origin[k] + idx[k] as f64 * h;
        }
        let inside = single || (region.contains(&x) && region.distance_unchecked(&x) > 1e-9 * h);
        if !inside {
            return;
        }
        let v = potential(&x);
        if v.is_nan() || v < 0.0 {
            bad = Some(v);
            return;
        }
        if v.is_finite() {
            mask[f] = true;
            pot[f] = v;
        }
    });
    if let Some(v) = bad {
        return Err(TrapError::param(
            "potential",
            format!("value {v} is not a nonnegative number"),
        ));
    }
    GridOperator::from_parts(d, h, origin, n, mask, pot)
}

/// Marks of grid indices along one axis lying in some closed interval.
fn axis_marks(
    n: usize,
    origin: f64,
    h: f64,
    intervals: impl Iterator<Item = (f64, f64)>,
) -> Vec<bool> {
    let mut m = vec![false; n + 1];
    for (lo, hi) in intervals {
        let a = ((lo - origin) / h - 1e-9).ceil().max(0.0) as i64;
        let b = ((hi - origin) / h + 1e-9).floor().min(n as f64) as i64;
        for i in a..=b {
            if i >= 0 && (i as usize) <= n {
                m[i as usize] = true;
            }
        }
    }
    m
}

/// -½Δ + potential on the box R with traps U. Nodes in a closed trap get
/// the trap height or are removed when the traps are hard; a constant
/// `background` is added everywhere.
pub fn assemble_traps(
    domain: &TrapDomain,
    kind: TrapKind,
    background: f64,
    h: f64,
) -> Result<GridOperator> {
    if background < 0.0 {
        return Err(TrapError::param("background", "must be nonnegative"));
    }
    let outer = &domain.outer;
    let d = outer.dim();
    let n = intervals(outer, h)?;
    let origin = outer.lo();
    let total: usize = n.iter().map(|v| v + 1).product();
    let mut in_trap = vec![false; total];
    let strides = strides_for(&n);
    match &domain.traps {
        Traps::Empty => {}
        Traps::Lattice { side, centers } => {
            let marks: Vec<Vec<bool>> = (0..d)
                .map(|k| {
                    axis_marks(
                        n[k],
                        origin[k],
                        h,
                        centers[k].iter().map(|c| (c - 0.5 * side, c + 0.5 * side)),
                    )
                })
                .collect();
            for_each_node(&n, |f, idx| {
                in_trap[f] = (0..d).all(|k| marks[k][idx[k]]);
            });
        }
        Traps::Boxes(boxes) => {
            for b in boxes {
                let ranges: Vec<(usize, usize)> = (0..d)
                    .map(|k| {
                        let a = ((b.lo_k(k) - origin[k]) / h - 1e-9).ceil().max(0.0);
                        let e = ((b.hi_k(k) - origin[k]) / h + 1e-9)
                            .floor()
                            .min(n[k] as f64);
                        (a as usize, e as usize)
                    })
                    .collect();
                if ranges.iter().zip(&n).any(|(&(a, e), _)| a > e) {
                    continue;
                }
                let sub: Vec<usize> = ranges.iter().map(|&(a, e)| e - a).collect();
                for_each_node(&sub, |_, off| {
                    let f: usize = (0..d).map(|k| (ranges[k].0 + off[k]) * strides[k]).sum();
                    in_trap[f] = true;
                });
            }
        }
        Traps::Mask(m) => {
            let r = Region::Mask(m.clone());
            let mut x = vec![0.0; d];
            for_each_node(&n, |f, idx| {
                for k in 0..d {
                    x[k] = origin[k] + idx[k] as f64 * h;
                }
                in_trap[f] = r.contains(&x);
            });
        }
    }
    let mut mask = vec![false; total];
    let mut pot = vec![0.0; total];
    for_each_node(&n, |f, idx| {
        if !is_interior(idx, &n) {
            return;
        }
        match (in_trap[f], kind) {
            (true, TrapKind::Hard) => {}
            (true, TrapKind::Soft(v)) => {
                mask[f] = true;
                pot[f] = v + background;
            }
            (false, _) => {
                mask[f] = true;
                pot[f] = background;
            }
        }
    });
    GridOperator::from_parts(d, h, origin, n, mask, pot)
}

/// Geometric multigrid V-cycle used as a CG preconditioner. Coarse levels
/// inject the active set and average the potential by full weighting;
/// smoothing is symmetric Gauss–Seidel so the cycle is a symmetric operator.
pub struct Multigrid {
    levels: Vec<GridOperator>,
    coarse: Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
}

const DENSE_LIMIT: usize = 1500;

fn coarsen(op: &GridOperator) -> Option<GridOperator> {
    if op.n.iter().any(|&v| v % 2 != 0 || v < 4) {
        return None;
    }
    let nc: Vec<usize> = op.n.iter().map(|v| v / 2).collect();
    let d = op.d;
    let total: usize = nc.iter().map(|v| v + 1).product();
    let mut mask = vec![false; total];
    let mut pot = vec![0.0; total];
    for_each_node(&nc, |fc, idx| {
        if !is_interior(idx, &nc) {
            return;
        }
        let ff: usize = (0..d).map(|k| 2 * idx[k] * op.strides[k]).sum();
        if !op.mask[ff] {
            return;
        }
        mask[fc] = true;
        let (mut num, mut den) = (0.0, 0.0);
        for o in 0..3usize.pow(d as u32) {
            let mut r = o;
            let mut g = ff as isize;
            let mut w = 1.0;
            for k in 0..d {
                let e = (r % 3) as isize - 1;
                r /= 3;
                g += e * op.strides[k] as isize;
                if e != 0 {
                    w *= 0.5;
                }
            }
            let g = g as usize;
            if op.mask[g] {
                num += w * op.pot[g];
                den += w;
            }
        }
        pot[fc] = num / den;
    });
    GridOperator::from_parts(d, 2.0 * op.h, op.origin.clone(), nc, mask, pot).ok()
}

impl Multigrid {
    pub fn new(op: &GridOperator) -> Multigrid {
        let mut levels = vec![op.clone()];
        while levels.last().expect("level").active_count() > DENSE_LIMIT / 4 {
            match coarsen(levels.last().expect("level")) {
                Some(c) => levels.push(c),
                None => break,
            }
        }
        let last = levels.last().expect("level");
        let coarse = (last.active_count() <= DENSE_LIMIT)
            .then(|| last.to_dense().cholesky())
            .flatten();
        Multigrid { levels, coarse }
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    fn smooth(op: &GridOperator, b: &[f64], x: &mut [f64], forward: bool) {
        let kd = op.kinetic_diag();
        let off = op.off();
        let mut step = |f: usize| {
            let mut s = 0.0;
            for &st in &op.strides {
                s += x[f - st] + x[f + st];
            }
            x[f] = (b[f] - off * s) / (kd + op.pot[f]);
        };
        if forward {
            op.active.iter().for_each(|&f| step(f as usize));
        } else {
            op.active.iter().rev().for_each(|&f| step(f as usize));
        }
    }

    /// Full-weighting restriction (P^T / 2^d).
    fn restrict(fine: &GridOperator, coarse: &GridOperator, r: &[f64]) -> Vec<f64> {
        let d = fine.d;
        let mut out = coarse.zeros();
        let scale = 0.5f64.powi(d as i32);
        for &fc in &coarse.active {
            let idx = coarse.index(fc as usize);
            let ff: isize = (0..d)
                .map(|k| (2 * idx[k] * fine.strides[k]) as isize)
                .sum();
            let mut s = 0.0;
            for o in 0..3usize.pow(d as u32) {
                let mut rr = o;
                let mut g = ff;
                let mut w = 1.0;
                for k in 0..d {
                    let e = (rr % 3) as isize - 1;
                    rr /= 3;
                    g += e * fine.strides[k] as isize;
                    if e != 0 {
                        w *= 0.5;
                    }
                }
                s += w * r[g as usize];
            }
            out[fc as usize] = s * scale;
        }
        out
    }

    /// Multilinear interpolation, added into x on active fine nodes.
    fn prolong_add(fine: &GridOperator, coarse: &GridOperator, e: &[f64], x: &mut [f64]) {
        let d = fine.d;
        for &f in &fine.active {
            let idx = fine.index(f as usize);
            let mut val = 0.0;
            let corners = 1usize << d;
            let mut seen = 0usize;
            for c in 0..corners {
                let mut g = 0usize;
                let mut w = 1.0;
                let mut ok = true;
                for k in 0..d {
                    let i = idx[k];
                    let ci = if i % 2 == 0 {
                        if c >> k & 1 == 1 {
                            ok = false;
                            break;
                        }
                        i / 2
                    } else {
                        w *= 0.5;
                        (i - 1) / 2 + (c >> k & 1)
                    };
                    g += ci * coarse.strides[k];
                }
                if ok {
                    val += w * e[g];
                    seen += 1;
                }
            }
            debug_assert!(seen > 0);
            x[f as usize] += val;
        }
    }

    fn cycle(&self, level: usize, b: &[f64]) -> Vec<f64> {
        let op = &self.levels[level];
        let mut x = op.zeros();
        if level + 1 == self.levels.len() {
            match &self.coarse {
                Some(ch) => {
                    let rhs = DVector::from_vec(op.gather(b));
                    let sol = ch.solve(&rhs);
                    return op.scatter(sol.as_slice());
                }
                None => {
                    for _ in 0..20 {
                        Self::smooth(op, b, &mut x, true);
                        Self::smooth(op, b, &mut x, false);
                    }
                    return x;
                }
            }
        }
        Self::smooth(op, b, &mut x, true);
        let mut ax = op.zeros();
        op.apply(&x, &mut ax);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let coarse = &self.levels[level + 1];
        let rc = Self::restrict(op, coarse, &r);
        let ec = self.cycle(level + 1, &rc);
        Self::prolong_add(op, coarse, &ec, &mut x);
        Self::smooth(op, b, &mut x, false);
        x
    }

    pub fn precondition(&self, r: &[f64]) -> Vec<f64> {
        self.cycle(0, r)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Preconditioned CG for A x = b from the starting guess in `x`. Returns
/// (iterations, relative residual).
pub fn pcg(
    op: &GridOperator,
    mg: &Multigrid,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<(usize, f64)> {
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok((0, 0.0));
    }
    let mut ax = op.zeros();
    op.apply(x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    op.project(&mut r);
    let mut z = mg.precondition(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = op.zeros();
    for it in 0..=max_iter {
        let rel = dot(&r, &r).sqrt() / bnorm;
        if rel <= tol {
            return Ok((it, rel));
        }
        if it == max_iter {
            return Err(TrapError::NoConvergence {
                iterations: it,
                residual: rel,
            });
        }
        op.apply(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for i in op.active.iter().map(|&f| f as usize) {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        z = mg.precondition(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in op.active.iter().map(|&f| f as usize) {
            p[i] = z[i] + beta * p[i];
        }
    }
    unreachable!()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit_box(d: usize) -> Region {
        Region::single(Aabb::symmetric(d, 1.0).unwrap())
    }

    #[test]
    fn stencil_matches_dense() {
        let op = assemble(&unit_box(2), &|x: &[f64]| x[0] * x[0], 0.25).unwrap();
        let a = op.to_dense();
        assert_eq!(a.nrows(), 49);
        let v: Vec<f64> = (0..49).map(|i| (i as f64 * 0.37).sin()).collect();
        let x = op.scatter(&v);
        let mut y = op.zeros();
        op.apply(&x, &mut y);
        let dense = &a * DVector::from_vec(v);
        for (u, w) in op.gather(&y).iter().zip(dense.iter()) {
            assert_relative_eq!(u, w, max_relative = 1e-13);
        }
        assert!((&a - a.transpose()).amax() == 0.0);
    }

    #[test]
    fn pcg_solves_with_multigrid() {
        let d = TrapDomain {
            outer: Aabb::symmetric(2, 1.0).unwrap(),
            traps: Traps::Lattice {
                side: 1.0 / 16.0,
                centers: vec![vec![-0.5, 0.0, 0.5]; 2],
            },
        };
        let op = assemble_traps(&d, TrapKind::Hard, 0.0, 1.0 / 64.0).unwrap();
        let mg = Multigrid::new(&op);
        assert!(mg.depth() > 2);
        let mut b = op.zeros();
        for &f in op.active_nodes() {
            b[f as usize] = 1.0;
        }
        let mut x = op.zeros();
        let (it, rel) = pcg(&op, &mg, &b, &mut x, 1e-10, 200).unwrap();
        assert!(rel <= 1e-10);
        assert!(it < 40, "{it} iterations");
    }

    #[test]
    fn hard_lattice_removes_closed_holes() {
        let d = TrapDomain {
            outer: Aabb::symmetric(2, 1.0).unwrap(),
            traps: Traps::Lattice {
                side: 0.25,
                centers: vec![vec![0.0]; 2],
            },
        };
        let op = assemble_traps(&d, TrapKind::Hard, 0.0, 0.125).unwrap();
        // 15x15 interior nodes minus the 3x3 closed hole.
        assert_eq!(op.active_count(), 225 - 9);
        let boxes = TrapDomain {
            outer: d.outer.clone(),
            traps: Traps::Boxes(vec![Aabb::cube(vec![0.0, 0.0], 0.25).unwrap()]),
        };
        let op2 = assemble_traps(&boxes, TrapKind::Hard, 0.0, 0.125).unwrap();
        assert_eq!(op.active_nodes(), op2.active_nodes());
    }

    #[test]
    fn spacing_must_divide_the_box() {
        assert!(assemble(&unit_box(2), &|_: &[f64]| 0.0, 0.3).is_err());
    }
}
