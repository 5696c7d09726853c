//! Axis-aligned regions, distance to the boundary and the hole functional
//! ∫ d(x, ∂R)^θ dx.

mod distance;
mod io;

pub use distance::{edt_feature_transform, MaskDistance};
pub use io::{read_region, region_from_json, region_to_json, write_region};

use crate::error::{Result, TrapError};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

/// Axis-aligned box `center + [-side/2, side/2]` per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub center: Vec<f64>,
    pub sides: Vec<f64>,
}

impl Aabb {
    pub fn new(center: Vec<f64>, sides: Vec<f64>) -> Result<Self> {
        if center.len() != sides.len() || !(2..=3).contains(&center.len()) {
            return Err(TrapError::param(
                "box",
                "dimension must be 2 or 3 and match",
            ));
        }
        if sides.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(TrapError::param(
                "box",
                "side lengths must be positive and finite",
            ));
        }
        Ok(Aabb { center, sides })
    }

    pub fn cube(center: Vec<f64>, side: f64) -> Result<Self> {
        let d = center.len();
        Aabb::new(center, vec![side; d])
    }

    pub fn from_bounds(lo: &[f64], hi: &[f64]) -> Result<Self> {
        let center = lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect();
        let sides = lo.iter().zip(hi).map(|(a, b)| b - a).collect();
        Aabb::new(center, sides)
    }

    /// The symmetric box (-half, half)^d.
    pub fn symmetric(d: usize, half: f64) -> Result<Self> {
        Aabb::new(vec![0.0; d], vec![2.0 * half; d])
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn lo(&self) -> Vec<f64> {
        self.center
            .iter()
            .zip(&self.sides)
            .map(|(c, s)| c - 0.5 * s)
            .collect()
    }

    pub fn hi(&self) -> Vec<f64> {
        self.center
            .iter()
            .zip(&self.sides)
            .map(|(c, s)| c + 0.5 * s)
            .collect()
    }

    pub fn lo_k(&self, k: usize) -> f64 {
        self.center[k] - 0.5 * self.sides[k]
    }

    pub fn hi_k(&self, k: usize) -> f64 {
        self.center[k] + 0.5 * self.sides[k]
    }

    pub fn volume(&self) -> f64 {
        self.sides.iter().product()
    }

    pub fn min_side(&self) -> f64 {
        self.sides.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Closed-box membership.
    pub fn contains(&self, x: &[f64]) -> bool {
        (0..self.dim()).all(|k| x[k] >= self.lo_k(k) && x[k] <= self.hi_k(k))
    }

    pub fn contains_open(&self, x: &[f64]) -> bool {
        (0..self.dim()).all(|k| x[k] > self.lo_k(k) && x[k] < self.hi_k(k))
    }

    /// Euclidean distance from x to the closed box (0 inside).
    pub fn distance_outside(&self, x: &[f64]) -> f64 {
        let mut s = 0.0;
        for k in 0..self.dim() {
            let e = (x[k] - self.center[k]).abs() - 0.5 * self.sides[k];
            if e > 0.0 {
                s += e * e;
            }
        }
        s.sqrt()
    }

    /// Distance from an interior point to the box boundary.
    pub fn distance_inside(&self, x: &[f64]) -> f64 {
        (0..self.dim())
            .map(|k| 0.5 * self.sides[k] - (x[k] - self.center[k]).abs())
            .fold(f64::INFINITY, f64::min)
            .max(0.0)
    }

    pub fn intersect(&self, other: &Aabb) -> Option<Aabb> {
        let d = self.dim();
        let mut lo = vec![0.0; d];
        let mut hi = vec![0.0; d];
        for k in 0..d {
            lo[k] = self.lo_k(k).max(other.lo_k(k));
            hi[k] = self.hi_k(k).min(other.hi_k(k));
            if hi[k] <= lo[k] {
                return None;
            }
        }
        Aabb::from_bounds(&lo, &hi).ok()
    }

    pub fn translated(&self, offset: &[f64]) -> Aabb {
        Aabb {
            center: self.center.iter().zip(offset).map(|(c, o)| c + o).collect(),
            sides: self.sides.clone(),
        }
    }

    pub fn scaled(&self, factor: f64) -> Aabb {
        Aabb {
            center: self.center.iter().map(|c| c * factor).collect(),
            sides: self.sides.iter().map(|s| s * factor).collect(),
        }
    }

    pub fn hull(boxes: &[Aabb]) -> Option<Aabb> {
        let first = boxes.first()?;
        let d = first.dim();
        let mut lo = first.lo();
        let mut hi = first.hi();
        for b in &boxes[1..] {
            for k in 0..d {
                lo[k] = lo[k].min(b.lo_k(k));
                hi[k] = hi[k].max(b.hi_k(k));
            }
        }
        Aabb::from_bounds(&lo, &hi).ok()
    }
}

/// Binary occupancy grid: cell `i` covers `origin + h * [i, i + 1)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Mask {
    pub h: f64,
    pub origin: Vec<f64>,
    pub shape: Vec<usize>,
    pub bits: Vec<bool>,
    #[serde(skip)]
    dist: OnceLock<MaskDistance>,
}

impl PartialEq for Mask {
    fn eq(&self, other: &Self) -> bool {
        self.h == other.h
            && self.origin == other.origin
            && self.shape == other.shape
            && self.bits == other.bits
    }
}

impl Mask {
    pub fn new(h: f64, origin: Vec<f64>, shape: Vec<usize>, bits: Vec<bool>) -> Result<Self> {
        if !(h > 0.0) {
            return Err(TrapError::param("mask.h", "spacing must be positive"));
        }
        if origin.len() != shape.len() || !(2..=3).contains(&shape.len()) {
            return Err(TrapError::param("mask.shape", "dimension must be 2 or 3"));
        }
        if shape.iter().product::<usize>() != bits.len() {
            return Err(TrapError::param("mask.bits", "length does not match shape"));
        }
        Ok(Mask {
            h,
            origin,
            shape,
            bits,
            dist: OnceLock::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn window(&self) -> Aabb {
        let hi: Vec<f64> = self
            .origin
            .iter()
            .zip(&self.shape)
            .map(|(o, &n)| o + n as f64 * self.h)
            .collect();
        Aabb::from_bounds(&self.origin, &hi).expect("mask window")
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Row-major flat index of a multi-index (last axis fastest).
    pub fn flat(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(&self.shape)
            .fold(0, |acc, (&i, &n)| acc * n + i)
    }

    pub fn unflat(&self, mut f: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for k in (0..self.dim()).rev() {
            idx[k] = f % self.shape[k];
            f /= self.shape[k];
        }
        idx
    }

    pub fn cell_center(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter()
            .zip(&self.origin)
            .map(|(&i, o)| o + (i as f64 + 0.5) * self.h)
            .collect()
    }

    pub fn cell_of(&self, x: &[f64]) -> Option<Vec<usize>> {
        let mut idx = Vec::with_capacity(self.dim());
        for k in 0..self.dim() {
            let f = ((x[k] - self.origin[k]) / self.h).floor();
            if f < 0.0 {
                return None;
            }
            let i = f as usize;
            if i >= self.shape[k] {
                // Points on the far face belong to the last cell.
                if i == self.shape[k] && x[k] <= self.origin[k] + self.shape[k] as f64 * self.h {
                    idx.push(i - 1);
                    continue;
                }
                return None;
            }
            idx.push(i);
        }
        Some(idx)
    }

    pub fn distance_field(&self) -> &MaskDistance {
        self.dist.get_or_init(|| MaskDistance::build(self))
    }
}

/// The box (lo, hi) with a tensor lattice of identical square holes removed.
/// Hole centres are the product of the per-axis coordinate lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Punched {
    pub outer: Aabb,
    pub hole_side: f64,
    pub centers: Vec<Vec<f64>>,
}

impl Punched {
    pub fn hole_count(&self) -> usize {
        self.centers.iter().map(|c| c.len()).product()
    }

    /// Centre of the hole nearest to x (per-axis nearest coordinate).
    fn nearest_center(&self, x: &[f64]) -> Option<Vec<f64>> {
        let mut c = Vec::with_capacity(x.len());
        for (k, list) in self.centers.iter().enumerate() {
            if list.is_empty() {
                return None;
            }
            let pos = list.partition_point(|&v| v < x[k]);
            let mut best = f64::NAN;
            let mut bd = f64::INFINITY;
            for j in [pos.saturating_sub(1), pos.min(list.len() - 1)] {
                let dd = (list[j] - x[k]).abs();
                if dd < bd {
                    bd = dd;
                    best = list[j];
                }
            }
            c.push(best);
        }
        Some(c)
    }

    fn nearest_hole(&self, x: &[f64]) -> Option<Aabb> {
        self.nearest_center(x)
            .map(|c| Aabb::cube(c, self.hole_side).expect("hole box"))
    }

    pub fn holes(&self) -> Vec<Aabb> {
        let d = self.outer.dim();
        let mut out = Vec::with_capacity(self.hole_count());
        let mut idx = vec![0usize; d];
        if self.hole_count() == 0 {
            return out;
        }
        loop {
            let c: Vec<f64> = (0..d).map(|k| self.centers[k][idx[k]]).collect();
            out.push(Aabb::cube(c, self.hole_side).expect("hole box"));
            let mut k = d;
            loop {
                if k == 0 {
                    return out;
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < self.centers[k].len() {
                    break;
                }
                idx[k] = 0;
            }
        }
    }
}

/// The region's hull split into disjoint boxes inside and outside it.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub hull: Aabb,
    pub inside: Vec<Aabb>,
    pub outside: Vec<Aabb>,
}

/// Geometry of a trap-free or trap region.
#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    /// Union of closed boxes; the window is their hull.
    BoxUnion(Vec<Aabb>),
    /// Outer box minus a union of boxes.
    BoxComplement {
        outer: Aabb,
        holes: Vec<Aabb>,
    },
    /// Outer box minus a tensor lattice of holes.
    Punched(Punched),
    Mask(Mask),
    /// No points at all (the empty set in a given dimension).
    Empty(usize),
}

/// Parameters of the box (-n, n)^d with holes C(δq, side).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PunchedDomainSpec {
    pub d: usize,
    pub n: f64,
    pub spacing: f64,
    pub hole_side: f64,
}

impl PunchedDomainSpec {
    pub fn validate(&self) -> Result<()> {
        if !(2..=3).contains(&self.d) {
            return Err(TrapError::param("d", "must be 2 or 3"));
        }
        if !(self.n > 0.0) || !(self.spacing > 0.0) || !(self.hole_side > 0.0) {
            return Err(TrapError::param(
                "punched",
                "n, spacing and hole side must be positive",
            ));
        }
        if self.hole_side >= self.spacing {
            return Err(TrapError::param(
                "hole_side",
                format!(
                    "hole side {} must be below the spacing {}",
                    self.hole_side, self.spacing
                ),
            ));
        }
        Ok(())
    }

    /// Lattice coordinates δq of every hole meeting the open box (-n, n).
    pub fn axis_centers(&self) -> Vec<f64> {
        let reach = self.n + 0.5 * self.hole_side;
        let qmax = (reach / self.spacing).ceil() as i64;
        (-qmax..=qmax)
            .map(|q| q as f64 * self.spacing)
            .filter(|c| c.abs() < reach)
            .collect()
    }
}

pub fn build_punched_region(spec: &PunchedDomainSpec) -> Result<Region> {
    spec.validate()?;
    let axis = spec.axis_centers();
    Ok(Region::Punched(Punched {
        outer: Aabb::symmetric(spec.d, spec.n)?,
        hole_side: spec.hole_side,
        centers: vec![axis; spec.d],
    }))
}

impl Region {
    pub fn single(b: Aabb) -> Region {
        Region::BoxUnion(vec![b])
    }

    pub fn dim(&self) -> usize {
        match self {
            Region::BoxUnion(b) => b.first().map_or(0, |b| b.dim()),
            Region::BoxComplement { outer, .. } => outer.dim(),
            Region::Punched(p) => p.outer.dim(),
            Region::Mask(m) => m.dim(),
            Region::Empty(d) => *d,
        }
    }

    pub fn is_empty(&self) -> bool {
        match self {
            Region::BoxUnion(b) => b.is_empty(),
            Region::Empty(_) => true,
            Region::Mask(m) => m.count() == 0,
            _ => false,
        }
    }

    /// Bounding window; `None` for the empty region.
    pub fn window(&self) -> Option<Aabb> {
        match self {
            Region::BoxUnion(b) => Aabb::hull(b),
            Region::BoxComplement { outer, .. } => Some(outer.clone()),
            Region::Punched(p) => Some(p.outer.clone()),
            Region::Mask(m) => Some(m.window()),
            Region::Empty(_) => None,
        }
    }

    /// Closure membership.
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Region::BoxUnion(b) => b.iter().any(|b| b.contains(x)),
            Region::BoxComplement { outer, holes } => {
                outer.contains(x) && !holes.iter().any(|h| h.contains_open(x))
            }
            Region::Punched(p) => {
                p.outer.contains(x) && !p.nearest_hole(x).is_some_and(|h| h.contains_open(x))
            }
            Region::Mask(m) => m.cell_of(x).is_some_and(|i| m.bits[m.flat(&i)]),
            Region::Empty(_) => false,
        }
    }

    /// Euclidean distance from x to the topological boundary.
    pub fn distance_to_boundary(&self, x: &[f64]) -> Result<f64> {
        let w = self
            .window()
            .ok_or_else(|| TrapError::Domain("empty region has no boundary".into()))?;
        if x.len() != w.dim() || !w.contains(x) {
            return Err(TrapError::Domain(format!(
                "point {x:?} outside the bounding window"
            )));
        }
        Ok(self.distance_unchecked(x))
    }

    pub(crate) fn distance_unchecked(&self, x: &[f64]) -> f64 {
        match self {
            Region::BoxUnion(boxes) => distance::union_distance(boxes, x),
            Region::BoxComplement { outer, holes } => {
                distance::complement_distance(outer, holes, x)
            }
            Region::Punched(p) => {
                let hole = p.nearest_hole(x);
                let in_outer = p.outer.contains(x);
                match hole {
                    Some(h) if h.contains_open(x) => {
                        // Inside a hole: the nearest region point is on the hole
                        // wall or, for clipped holes, possibly the outer box face.
                        let wall = h.distance_inside(x);
                        if in_outer {
                            wall
                        } else {
                            p.outer.distance_outside(x)
                        }
                    }
                    Some(h) => {
                        if in_outer {
                            h.distance_outside(x).min(p.outer.distance_inside(x))
                        } else {
                            p.outer.distance_outside(x)
                        }
                    }
                    None => {
                        if in_outer {
                            p.outer.distance_inside(x)
                        } else {
                            p.outer.distance_outside(x)
                        }
                    }
                }
            }
            Region::Mask(m) => m.distance_field().distance(m, x),
            Region::Empty(_) => f64::INFINITY,
        }
    }

    /// Lebesgue volume.
    pub fn volume(&self) -> f64 {
        match self {
            Region::BoxUnion(boxes) => distance::union_volume(boxes),
            Region::BoxComplement { outer, holes } => {
                let clipped: Vec<Aabb> = holes.iter().filter_map(|h| h.intersect(outer)).collect();
                outer.volume() - distance::union_volume(&clipped)
            }
            Region::Punched(p) => {
                // Holes are disjoint (side < spacing), so clipped volumes add.
                let mut per_axis = Vec::with_capacity(p.outer.dim());
                for k in 0..p.outer.dim() {
                    let (lo, hi) = (p.outer.lo_k(k), p.outer.hi_k(k));
                    let s: Vec<f64> = p.centers[k]
                        .iter()
                        .map(|c| {
                            ((c + 0.5 * p.hole_side).min(hi) - (c - 0.5 * p.hole_side).max(lo))
                                .max(0.0)
                        })
                        .collect();
                    per_axis.push(s.iter().sum::<f64>());
                }
                p.outer.volume() - per_axis.iter().product::<f64>()
            }
            Region::Mask(m) => m.count() as f64 * m.h.powi(m.dim() as i32),
            Region::Empty(_) => 0.0,
        }
    }

    /// Default midpoint resolution: (smallest window side)/64, refined for
    /// small holes so each hole spans at least four cells.
    pub fn default_resolution(&self) -> f64 {
        let base = self.window().map_or(1.0, |w| w.min_side() / 64.0);
        match self {
            Region::Punched(p) => base.min(p.hole_side / 4.0),
            Region::BoxComplement { holes, .. } => holes
                .iter()
                .map(|h| h.min_side() / 4.0)
                .fold(base, f64::min),
            Region::BoxUnion(b) => b.iter().map(|b| b.min_side() / 16.0).fold(base, f64::min),
            Region::Mask(m) => m.h,
            Region::Empty(_) => base,
        }
    }

    /// ∫_R d(x, ∂R)^θ dx by the midpoint rule on a grid of spacing at most
    /// `resolution` over the window. For Lipschitz boundaries the error is
    /// O(resolution) relative to the bulk term. Masks are integrated at their
    /// native spacing.
    pub fn hole_functional(&self, theta: f64, resolution: f64) -> Result<f64> {
        if !(theta > 0.0) {
            return Err(TrapError::param("theta", "must be positive"));
        }
        if !(resolution > 0.0) {
            return Err(TrapError::param("resolution", "must be positive"));
        }
        let Some(w) = self.window() else {
            return Ok(0.0);
        };
        if w.sides.iter().any(|s| !s.is_finite()) {
            return Err(TrapError::Domain("unbounded region".into()));
        }
        if let Region::Mask(m) = self {
            return Ok(mask_hole_functional(m, theta));
        }
        let d = w.dim();
        let lo = w.lo();
        let n: Vec<usize> = w
            .sides
            .iter()
            .map(|s| (s / resolution).ceil().max(1.0) as usize)
            .collect();
        let step: Vec<f64> = (0..d).map(|k| w.sides[k] / n[k] as f64).collect();
        let cell: f64 = step.iter().product();
        let rows: Vec<f64> = (0..n[0])
            .into_par_iter()
            .map(|i0| {
                let mut acc = 0.0;
                let mut x = vec![lo[0] + (i0 as f64 + 0.5) * step[0]; d];
                let inner: usize = n[1..].iter().product();
                for j in 0..inner {
                    let mut r = j;
                    for k in (1..d).rev() {
                        let ik = r % n[k];
                        r /= n[k];
                        x[k] = lo[k] + (ik as f64 + 0.5) * step[k];
                    }
                    if self.contains(&x) {
                        acc += self.distance_unchecked(&x).powf(theta);
                    }
                }
                acc
            })
            .collect();
        Ok(rows.iter().sum::<f64>() * cell)
    }

    pub fn translated(&self, offset: &[f64]) -> Region {
        match self {
            Region::BoxUnion(b) => {
                Region::BoxUnion(b.iter().map(|b| b.translated(offset)).collect())
            }
            Region::BoxComplement { outer, holes } => Region::BoxComplement {
                outer: outer.translated(offset),
                holes: holes.iter().map(|h| h.translated(offset)).collect(),
            },
            Region::Punched(p) => Region::Punched(Punched {
                outer: p.outer.translated(offset),
                hole_side: p.hole_side,
                centers: p
                    .centers
                    .iter()
                    .zip(offset)
                    .map(|(c, o)| c.iter().map(|v| v + o).collect())
                    .collect(),
            }),
            Region::Mask(m) => Region::Mask(
                Mask::new(
                    m.h,
                    m.origin.iter().zip(offset).map(|(a, b)| a + b).collect(),
                    m.shape.clone(),
                    m.bits.clone(),
                )
                .expect("valid mask"),
            ),
            Region::Empty(d) => Region::Empty(*d),
        }
    }

    /// Dilation x -> factor * x.
    pub fn scaled(&self, factor: f64) -> Region {
        match self {
            Region::BoxUnion(b) => Region::BoxUnion(b.iter().map(|b| b.scaled(factor)).collect()),
            Region::BoxComplement { outer, holes } => Region::BoxComplement {
                outer: outer.scaled(factor),
                holes: holes.iter().map(|h| h.scaled(factor)).collect(),
            },
            Region::Punched(p) => Region::Punched(Punched {
                outer: p.outer.scaled(factor),
                hole_side: p.hole_side * factor,
                centers: p
                    .centers
                    .iter()
                    .map(|c| c.iter().map(|v| v * factor).collect())
                    .collect(),
            }),
            Region::Mask(m) => Region::Mask(
                Mask::new(
                    m.h * factor,
                    m.origin.iter().map(|a| a * factor).collect(),
                    m.shape.clone(),
                    m.bits.clone(),
                )
                .expect("valid mask"),
            ),
            Region::Empty(d) => Region::Empty(*d),
        }
    }

    /// Rasterize on the grid `origin + h * [i, i+1)` covering `window`: a
    /// cell is set when its centre lies in the region. For box unions the
    /// volume error is at most d * h * (surface measure).
    pub fn to_mask(&self, h: f64, window: &Aabb) -> Result<Mask> {
        if !(h > 0.0) {
            return Err(TrapError::param("h", "must be positive"));
        }
        let d = window.dim();
        let origin = window.lo();
        let shape: Vec<usize> = window
            .sides
            .iter()
            .map(|s| (s / h).round().max(1.0) as usize)
            .collect();
        let total: usize = shape.iter().product();
        let mut bits = vec![false; total];
        let mut idx = vec![0usize; d];
        for (f, bit) in bits.iter_mut().enumerate() {
            let mut r = f;
            for k in (0..d).rev() {
                idx[k] = r % shape[k];
                r /= shape[k];
            }
            let x: Vec<f64> = (0..d)
                .map(|k| origin[k] + (idx[k] as f64 + 0.5) * h)
                .collect();
            *bit = self.contains(&x);
        }
        Mask::new(h, origin, shape, bits)
    }

    /// Box-union form of a mask: each maximal run of set cells along the
    /// last axis becomes one box.
    pub fn mask_to_boxes(m: &Mask) -> Region {
        let d = m.dim();
        let last = m.shape[d - 1];
        let rows = m.bits.len() / last;
        let mut boxes = Vec::new();
        for row in 0..rows {
            let base = m.unflat(row * last);
            let mut j = 0;
            while j < last {
                if !m.bits[row * last + j] {
                    j += 1;
                    continue;
                }
                let start = j;
                while j < last && m.bits[row * last + j] {
                    j += 1;
                }
                let mut lo: Vec<f64> = (0..d).map(|k| m.origin[k] + base[k] as f64 * m.h).collect();
                let mut hi: Vec<f64> = lo.iter().map(|v| v + m.h).collect();
                lo[d - 1] = m.origin[d - 1] + start as f64 * m.h;
                hi[d - 1] = m.origin[d - 1] + j as f64 * m.h;
                boxes.push(Aabb::from_bounds(&lo, &hi).expect("run box"));
            }
        }
        if boxes.is_empty() {
            Region::Empty(d)
        } else {
            Region::BoxUnion(boxes)
        }
    }

    /// Disjoint box tiling of the window; `None` for the empty region.
    pub fn partition(&self) -> Option<Partition> {
        let hull = self.window()?;
        let (inside, outside) = match self {
            Region::BoxUnion(b) if b.len() == 1 => (b.clone(), Vec::new()),
            Region::BoxUnion(b) => distance::tile(b, |m| self.contains(m)),
            Region::BoxComplement { .. } | Region::Punched(_) => {
                let mut frame: Vec<Aabb> = self
                    .removed_boxes()
                    .iter()
                    .filter_map(|h| h.intersect(&hull))
                    .collect();
                frame.push(hull.clone());
                distance::tile(&frame, |m| self.contains(m))
            }
            Region::Mask(m) => {
                let inverted = Mask::new(
                    m.h,
                    m.origin.clone(),
                    m.shape.clone(),
                    m.bits.iter().map(|b| !b).collect(),
                )
                .expect("valid mask");
                let boxes = |r: Region| match r {
                    Region::BoxUnion(b) => b,
                    _ => Vec::new(),
                };
                (
                    boxes(Region::mask_to_boxes(m)),
                    boxes(Region::mask_to_boxes(&inverted)),
                )
            }
            Region::Empty(_) => return None,
        };
        Some(Partition {
            hull,
            inside,
            outside,
        })
    }

    /// Explicit list of boxes removed from the outer box, for complement kinds.
    pub fn removed_boxes(&self) -> Vec<Aabb> {
        match self {
            Region::BoxComplement { holes, .. } => holes.clone(),
            Region::Punched(p) => p.holes(),
            _ => Vec::new(),
        }
    }
}

fn mask_hole_functional(m: &Mask, theta: f64) -> f64 {
    let field = m.distance_field();
    let cell = m.h.powi(m.dim() as i32);
    let mut acc = 0.0;
    for (f, &b) in m.bits.iter().enumerate() {
        if b {
            acc += field.center_distance(m, f).powf(theta);
        }
    }
    acc * cell
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit_square() -> Region {
        Region::single(Aabb::from_bounds(&[0.0, 0.0], &[1.0, 1.0]).unwrap())
    }

    #[test]
    fn distance_examples() {
        let r = unit_square();
        assert_relative_eq!(r.distance_to_boundary(&[0.5, 0.5]).unwrap(), 0.5);
        assert_eq!(r.distance_to_boundary(&[0.0, 0.5]).unwrap(), 0.0);
        let punched = Region::BoxComplement {
            outer: Aabb::from_bounds(&[0.0, 0.0], &[1.0, 1.0]).unwrap(),
            holes: vec![Aabb::cube(vec![0.5, 0.5], 0.2).unwrap()],
        };
        assert_relative_eq!(
            punched.distance_to_boundary(&[0.45, 0.5]).unwrap(),
            0.05,
            epsilon = 1e-15
        );
        assert!(r.distance_to_boundary(&[2.0, 0.5]).is_err());
    }

    #[test]
    fn punched_counts_and_volume() {
        let spec = PunchedDomainSpec {
            d: 2,
            n: 1.0,
            spacing: 0.5,
            hole_side: 0.1,
        };
        let r = build_punched_region(&spec).unwrap();
        let Region::Punched(p) = &r else { panic!() };
        assert_eq!(p.hole_count(), 25);
        // 9 interior holes, 12 half holes on the faces, 4 quarter holes at corners.
        assert_relative_eq!(r.volume(), 4.0 - 0.16, max_relative = 1e-12);
        let one = build_punched_region(&PunchedDomainSpec {
            spacing: 2.0,
            ..spec
        })
        .unwrap();
        let Region::Punched(p) = &one else { panic!() };
        assert_eq!(p.hole_count(), 1);
        assert!(build_punched_region(&PunchedDomainSpec {
            hole_side: 0.5,
            ..spec
        })
        .is_err());
    }

    #[test]
    fn punched_matches_generic_complement() {
        let spec = PunchedDomainSpec {
            d: 2,
            n: 1.0,
            spacing: 0.5,
            hole_side: 0.1,
        };
        let r = build_punched_region(&spec).unwrap();
        let generic = Region::BoxComplement {
            outer: Aabb::symmetric(2, 1.0).unwrap(),
            holes: r.removed_boxes(),
        };
        assert_relative_eq!(r.volume(), generic.volume(), max_relative = 1e-12);
        for &x in &[
            [0.3, 0.2],
            [0.02, 0.01],
            [0.97, -0.99],
            [0.5, 0.45],
            [-0.26, 0.74],
        ] {
            assert_relative_eq!(
                r.distance_to_boundary(&x).unwrap(),
                generic.distance_to_boundary(&x).unwrap(),
                epsilon = 1e-14
            );
        }
    }

    #[test]
    fn partitions_tile_the_hull() {
        let regions = vec![
            Region::BoxUnion(vec![
                Aabb::from_bounds(&[0.0, 0.0], &[1.0, 1.0]).unwrap(),
                Aabb::from_bounds(&[0.5, 0.5], &[1.5, 2.0]).unwrap(),
            ]),
            build_punched_region(&PunchedDomainSpec {
                d: 2,
                n: 1.0,
                spacing: 0.5,
                hole_side: 0.1,
            })
            .unwrap(),
        ];
        for r in regions {
            let p = r.partition().unwrap();
            let vin: f64 = p.inside.iter().map(|b| b.volume()).sum();
            let vout: f64 = p.outside.iter().map(|b| b.volume()).sum();
            assert_relative_eq!(vin, r.volume(), max_relative = 1e-12);
            assert_relative_eq!(vin + vout, p.hull.volume(), max_relative = 1e-12);
        }
    }

    #[test]
    fn union_volume_with_overlap() {
        let r = Region::BoxUnion(vec![
            Aabb::from_bounds(&[0.0, 0.0], &[1.0, 1.0]).unwrap(),
            Aabb::from_bounds(&[0.5, 0.0], &[1.5, 1.0]).unwrap(),
        ]);
        assert_relative_eq!(r.volume(), 1.5, max_relative = 1e-14);
        assert_relative_eq!(
            Region::single(Aabb::symmetric(2, 1.0).unwrap()).volume(),
            4.0
        );
    }

    #[test]
    fn hole_functional_layer_cake_values() {
        let sq = Region::single(Aabb::symmetric(2, 1.0).unwrap());
        let v = sq.hole_functional(1.0, sq.default_resolution()).unwrap();
        assert_relative_eq!(v, 4.0 / 3.0, max_relative = 5e-3);
        let v = unit_square()
            .hole_functional(2.0, unit_square().default_resolution())
            .unwrap();
        assert_relative_eq!(v, 1.0 / 24.0, max_relative = 5e-3);
        let cube = Region::single(Aabb::symmetric(3, 1.0).unwrap());
        let v = cube
            .hole_functional(1.0, cube.default_resolution())
            .unwrap();
        assert_relative_eq!(v, 2.0, max_relative = 5e-3);
        assert!(sq.hole_functional(0.0, 0.1).is_err());
    }

    #[test]
    fn mask_conversion_and_distance() {
        let sq = Region::single(Aabb::symmetric(2, 1.0).unwrap());
        let w = Aabb::symmetric(2, 1.5).unwrap();
        let m = sq.to_mask(0.05, &w).unwrap();
        let mr = Region::Mask(m.clone());
        assert_relative_eq!(mr.volume(), 4.0, max_relative = 1e-9);
        let x = [0.3, -0.2];
        let exact = sq.distance_to_boundary(&x).unwrap();
        assert!((mr.distance_to_boundary(&x).unwrap() - exact).abs() <= 0.05 * 2f64.sqrt());
        let back = Region::mask_to_boxes(&m);
        assert_relative_eq!(back.volume(), 4.0, max_relative = 1e-9);
        let hf = mr.hole_functional(1.0, 0.05).unwrap();
        assert_relative_eq!(hf, 4.0 / 3.0, max_relative = 0.05);
    }
}
