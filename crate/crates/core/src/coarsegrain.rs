//! Dyadic indices, the density-box classifier and the counting bounds of
//! the coarse-graining step.
//!
//! Configurations are taken in scaled coordinates (ξ^r = Σ δ_{(q+ξ_q)/r}),
//! so unit boxes C_q = q + [0,1]^d hold about r^d points.

use crate::error::{Result, TrapError};
use crate::geometry::Aabb;
use crate::lattice::{sample_auto, DisplacementLaw, PointConfiguration};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};
use std::io::Write;

/// (i₀, i₁, …, i_k) with i₀ ∈ Z^d and refinement bits i_j ∈ {0,1}^d.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DyadicIndex {
    pub base: Vec<i64>,
    pub bits: Vec<Vec<u8>>,
}

impl DyadicIndex {
    pub fn root(base: Vec<i64>) -> DyadicIndex {
        DyadicIndex {
            base,
            bits: Vec::new(),
        }
    }

    pub fn depth(&self) -> usize {
        self.bits.len()
    }

    /// q_index = i₀ + Σ 2^{-j} i_j
    pub fn corner(&self) -> Vec<f64> {
        let mut q: Vec<f64> = self.base.iter().map(|&v| v as f64).collect();
        let mut w = 1.0;
        for b in &self.bits {
            w *= 0.5;
            for (qk, &bk) in q.iter_mut().zip(b) {
                *qk += w * bk as f64;
            }
        }
        q
    }

    /// C_index = q_index + 2^{-k}[0,1]^d
    pub fn cell(&self) -> Aabb {
        let lo = self.corner();
        let side = 0.5f64.powi(self.depth() as i32);
        let hi: Vec<f64> = lo.iter().map(|v| v + side).collect();
        Aabb::from_bounds(&lo, &hi).expect("dyadic cell")
    }

    /// [index]_k
    pub fn truncate(&self, k: usize) -> DyadicIndex {
        DyadicIndex {
            base: self.base.clone(),
            bits: self.bits[..k.min(self.depth())].to_vec(),
        }
    }

    pub fn is_prefix_of(&self, other: &DyadicIndex) -> bool {
        self.base == other.base
            && self.depth() <= other.depth()
            && other.bits[..self.depth()] == self.bits[..]
    }

    pub fn children(&self) -> Vec<DyadicIndex> {
        let d = self.base.len();
        (0..1usize << d)
            .map(|m| {
                let mut c = self.clone();
                c.bits
                    .push((0..d).map(|k| ((m >> (d - 1 - k)) & 1) as u8).collect());
                c
            })
            .collect()
    }

    /// Integer coordinates of the cell on the grid of spacing 2^{-k}.
    pub fn grid_coords(&self) -> Vec<i64> {
        let k = self.depth();
        let mut g: Vec<i64> = self.base.iter().map(|&v| v << k).collect();
        for (j, b) in self.bits.iter().enumerate() {
            for (gk, &bk) in g.iter_mut().zip(b) {
                *gk += (bk as i64) << (k - 1 - j);
            }
        }
        g
    }
}

/// ⌊β log₂ r⌋, checked against 2^{-n-1} < r^{-β} <= 2^{-n}.
pub fn n_beta(beta: f64, r: f64) -> Result<i64> {
    if !(beta > 0.0) {
        return Err(TrapError::param("beta", "must be positive"));
    }
    if !(r > 1.0) || !r.is_finite() {
        return Err(TrapError::param("r", "must exceed 1"));
    }
    let v = beta * r.ln() / std::f64::consts::LN_2;
    // Exact powers of two land on integers up to rounding.
    let mut n = (v + 1e-9).floor() as i64;
    let x = r.powf(-beta);
    if x > 0.5f64.powi(n as i32) * (1.0 + 1e-9) {
        n -= 1;
    }
    let (lo, hi) = (0.5f64.powi(n as i32 + 1), 0.5f64.powi(n as i32));
    if !(lo < x && x <= hi * (1.0 + 1e-9)) {
        return Err(TrapError::Numerical(format!(
            "bracket fails for n = {n}: {lo} < {x} <= {hi}"
        )));
    }
    Ok(n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoarseGrainParams {
    pub d: usize,
    pub theta: f64,
    pub eta: f64,
    pub gamma: f64,
    pub chi: f64,
    pub r: f64,
    pub n_gamma: i64,
    pub n_eta_gamma: i64,
}

/// Lower end of the admissible χ interval.
fn chi_lower(d: f64, theta: f64, eta: f64) -> f64 {
    2.0 * eta * eta + (d - 2.0 + 2.0 * theta / d) * eta
}

fn chi_upper(d: f64, theta: f64) -> f64 {
    (2.0 * theta / d).min(1.0)
}

/// Positive root of η² + ((d-2)/2 + θ/d)η = θ/d ∧ 1/2.
fn eta_root(d: f64, theta: f64) -> f64 {
    let b = (d - 2.0) / 2.0 + theta / d;
    let c = (theta / d).min(0.5);
    let f = |e: f64| e * e + b * e - c;
    let (mut lo, mut hi) = (0.0, 1.0);
    while f(hi) < 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

impl CoarseGrainParams {
    /// Parameters with a given η and, optionally, χ (default: midpoint of
    /// the admissible interval). Every constraint is checked.
    pub fn new(d: usize, theta: f64, r: f64, eta: f64, chi: Option<f64>) -> Result<Self> {
        if !(2..=3).contains(&d) {
            return Err(TrapError::param("d", "must be 2 or 3"));
        }
        if !(theta > 0.0) {
            return Err(TrapError::param("theta", "must be positive"));
        }
        let df = d as f64;
        if !(eta > 0.0 && eta < 1.0) {
            return Err(TrapError::param("eta", "must lie in (0, 1)"));
        }
        let lhs = eta * eta + ((df - 2.0) / 2.0 + theta / df) * eta;
        let rhs = (theta / df).min(0.5);
        if !(lhs < rhs) {
            return Err(TrapError::param(
                "eta",
                format!("η² + ((d-2)/2 + θ/d)η = {lhs} must be below {rhs}"),
            ));
        }
        let gamma = (df - 2.0) / df + 2.0 * eta / df;
        let (clo, chi_hi) = (chi_lower(df, theta, eta), chi_upper(df, theta));
        let chi = chi.unwrap_or(0.5 * (clo + chi_hi));
        if !(chi > clo && chi < chi_hi) {
            return Err(TrapError::param(
                "chi",
                format!("{chi} outside ({clo}, {chi_hi})"),
            ));
        }
        let prob = df * (1.0 - eta * gamma) + (1.0 - gamma) * theta + chi;
        if !(prob > df + 2.0 * theta / df) {
            return Err(TrapError::param(
                "chi",
                format!("probability exponent {prob} too small"),
            ));
        }
        if !(df + chi < df + 2.0 * theta / df) {
            return Err(TrapError::param("chi", "cardinality exponent too large"));
        }
        Ok(CoarseGrainParams {
            d,
            theta,
            eta,
            gamma,
            chi,
            r,
            n_gamma: n_beta(gamma, r)?,
            n_eta_gamma: n_beta(eta * gamma, r)?,
        })
    }

    /// η half the positive root of its defining equation, χ the midpoint of
    /// its interval.
    pub fn default_for(d: usize, theta: f64, r: f64) -> Result<Self> {
        CoarseGrainParams::new(d, theta, r, 0.5 * eta_root(d as f64, theta), None)
    }

    /// The exponent d(1-ηγ) + (1-γ)θ + χ of the rarity bound.
    pub fn rarity_exponent(&self) -> f64 {
        let df = self.d as f64;
        df * (1.0 - self.eta * self.gamma) + (1.0 - self.gamma) * self.theta + self.chi
    }
}

pub fn default_params(d: usize, theta: f64, r: f64) -> Result<CoarseGrainParams> {
    CoarseGrainParams::default_for(d, theta, r)
}

/// Occupancy of the separated sub-cells q_{index'} + 2^{-n_γ-1}[0,1]^d for
/// one configuration, built once and queried per unit box.
pub struct DensityMap {
    params: CoarseGrainParams,
    occupied: HashSet<Vec<i64>>,
    window: Aabb,
}

impl DensityMap {
    pub fn new(config: &PointConfiguration, params: &CoarseGrainParams) -> Result<Self> {
        if config.d != params.d {
            return Err(TrapError::param(
                "params",
                "dimension differs from the configuration",
            ));
        }
        let fine = 2f64.powi(params.n_gamma as i32 + 1);
        let mut occupied = HashSet::new();
        for p in config.points() {
            // Half-open cells on the 2^{-n_γ-1} grid; only even coordinates
            // are separated sub-cells of depth-n_γ cells.
            let g: Vec<i64> = p.iter().map(|&x| (x * fine).floor() as i64).collect();
            if g.iter().all(|v| v.rem_euclid(2) == 0) {
                occupied.insert(g.iter().map(|v| v.div_euclid(2)).collect());
            }
        }
        Ok(DensityMap {
            params: *params,
            occupied,
            window: config.window.clone(),
        })
    }

    fn check_window(&self, q: &[i64]) -> Result<()> {
        // C_q padded by 1 must lie in the window.
        let lo: Vec<f64> = q.iter().map(|&v| v as f64 - 1.0).collect();
        let hi: Vec<f64> = q.iter().map(|&v| v as f64 + 2.0).collect();
        let b = Aabb::from_bounds(&lo, &hi)?;
        if b.intersect(&self.window).map_or(true, |i| {
            (i.volume() - b.volume()).abs() > 1e-9 * b.volume()
        }) {
            return Err(TrapError::Domain(format!(
                "unit box at {q:?} padded by 1 is not inside the window"
            )));
        }
        Ok(())
    }

    /// Number of occupied depth-n_γ descendants of every depth-n_{ηγ} cell of
    /// C_q, with the total per cell.
    pub fn occupancy(&self, q: &[i64]) -> Result<(Vec<usize>, usize)> {
        self.check_window(q)?;
        let d = self.params.d;
        let ng = self.params.n_gamma.max(0) as u32;
        let neg = (self.params.n_eta_gamma.max(0) as u32).min(ng);
        let coarse_per_axis = 1i64 << neg;
        let fine_per_coarse = 1i64 << (ng - neg);
        let per_cell = (fine_per_coarse as usize).pow(d as u32);
        let cells = (coarse_per_axis as usize).pow(d as u32);
        let mut counts = vec![0usize; cells];
        let mut g = vec![0i64; d];
        for c in 0..cells {
            let mut cr = c;
            let mut cidx = vec![0i64; d];
            for k in (0..d).rev() {
                cidx[k] = (cr as i64) % coarse_per_axis;
                cr /= coarse_per_axis as usize;
            }
            for f in 0..per_cell {
                let mut fr = f;
                for k in (0..d).rev() {
                    let sub = (fr as i64) % fine_per_coarse;
                    fr /= fine_per_coarse as usize;
                    g[k] = (q[k] << ng) + cidx[k] * fine_per_coarse + sub;
                }
                if self.occupied.contains(&g) {
                    counts[c] += 1;
                }
            }
        }
        Ok((counts, per_cell))
    }

    /// Every depth-n_{ηγ} cell of C_q has at least half of its depth-n_γ
    /// descendants with an occupied separated sub-cell.
    pub fn is_density_box(&self, q: &[i64]) -> Result<bool> {
        let (counts, per_cell) = self.occupancy(q)?;
        Ok(counts.iter().all(|&c| 2 * c >= per_cell))
    }

    /// Fraction of depth-n_γ cells of C_q with an empty separated sub-cell.
    pub fn vacancy(&self, q: &[i64]) -> Result<f64> {
        let (counts, per_cell) = self.occupancy(q)?;
        let total = counts.len() * per_cell;
        Ok(1.0 - counts.iter().sum::<usize>() as f64 / total as f64)
    }
}

pub fn classify_density_box(
    config: &PointConfiguration,
    q: &[i64],
    params: &CoarseGrainParams,
) -> Result<bool> {
    DensityMap::new(config, params)?.is_density_box(q)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonDensityRow {
    pub replica: usize,
    pub r: f64,
    pub theta: f64,
    pub boxes_total: usize,
    pub boxes_nondensity: usize,
    pub max_component_size: usize,
    /// Mean vacancy over the classified boxes.
    pub vacancy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonDensityStatistics {
    pub rows: Vec<NonDensityRow>,
    pub mean_fraction: f64,
    pub stderr_fraction: f64,
    /// Fraction of replicas with at least r^χ non-density boxes.
    pub exceed_fraction: f64,
    pub mean_vacancy: f64,
}

fn largest_component(cells: &[Vec<i64>]) -> usize {
    let index: HashMap<&Vec<i64>, usize> = cells.iter().enumerate().map(|(i, c)| (c, i)).collect();
    let mut seen = vec![false; cells.len()];
    let mut best = 0;
    for start in 0..cells.len() {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut stack = vec![start];
        let mut size = 0;
        while let Some(i) = stack.pop() {
            size += 1;
            for k in 0..cells[i].len() {
                for s in [-1, 1] {
                    let mut nb = cells[i].clone();
                    nb[k] += s;
                    if let Some(&j) = index.get(&nb) {
                        if !seen[j] {
                            seen[j] = true;
                            stack.push(j);
                        }
                    }
                }
            }
        }
        best = best.max(size);
    }
    best
}

/// Classify every unit box of [-half, half]^d (scaled coordinates) for
/// independent configurations sampled on [-half-1, half+1]^d; replica i
/// uses stream i.
pub fn nondensity_statistics(
    law: &DisplacementLaw,
    params: &CoarseGrainParams,
    half: i64,
    replicas: usize,
    seed: u64,
) -> Result<NonDensityStatistics> {
    if replicas < 30 {
        return Err(TrapError::param("replicas", "need at least 30"));
    }
    if half < 1 {
        return Err(TrapError::param("half", "must be at least 1"));
    }
    let d = params.d;
    let r = params.r;
    let window = Aabb::symmetric(d, (half + 1) as f64 * r)?;
    let boxes: Vec<Vec<i64>> = {
        let per = (2 * half) as usize;
        (0..per.pow(d as u32))
            .map(|f| {
                let mut rr = f;
                let mut q = vec![0i64; d];
                for k in (0..d).rev() {
                    q[k] = (rr % per) as i64 - half;
                    rr /= per;
                }
                q
            })
            .collect()
    };
    let rows: Vec<NonDensityRow> = (0..replicas)
        .into_par_iter()
        .map(|rep| {
            let cfg = sample_auto(law, &window, seed, rep as u64)?.scaled(1.0 / r);
            let map = DensityMap::new(&cfg, params)?;
            let mut bad = Vec::new();
            let mut vac = 0.0;
            for q in &boxes {
                if !map.is_density_box(q)? {
                    bad.push(q.clone());
                }
                vac += map.vacancy(q)?;
            }
            Ok(NonDensityRow {
                replica: rep,
                r,
                theta: law.theta,
                boxes_total: boxes.len(),
                boxes_nondensity: bad.len(),
                max_component_size: largest_component(&bad),
                vacancy: vac / boxes.len() as f64,
            })
        })
        .collect::<Result<_>>()?;
    let fr: Vec<f64> = rows
        .iter()
        .map(|r| r.boxes_nondensity as f64 / r.boxes_total as f64)
        .collect();
    let n = fr.len() as f64;
    let mean = fr.iter().sum::<f64>() / n;
    let var = fr.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let threshold = r.powf(params.chi);
    Ok(NonDensityStatistics {
        mean_fraction: mean,
        stderr_fraction: (var / n).sqrt(),
        exceed_fraction: rows
            .iter()
            .filter(|r| r.boxes_nondensity as f64 >= threshold)
            .count() as f64
            / n,
        mean_vacancy: rows.iter().map(|r| r.vacancy).sum::<f64>() / n,
        rows,
    })
}

pub fn write_nondensity_csv<W: Write>(rows: &[NonDensityRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let fmt = |e: csv::Error| TrapError::Format(e.to_string());
    w.write_record([
        "replica",
        "r",
        "theta",
        "boxes_total",
        "boxes_nondensity",
        "max_component_size",
    ])
    .map_err(fmt)?;
    for row in rows {
        w.write_record([
            row.replica.to_string(),
            row.r.to_string(),
            row.theta.to_string(),
            row.boxes_total.to_string(),
            row.boxes_nondensity.to_string(),
            row.max_component_size.to_string(),
        ])
        .map_err(fmt)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexityBound {
    /// log of r^χ (t/r)^{d r^χ} (2^{r^d})^{r^χ}
    pub log_bound: f64,
    /// log_bound / (t r^{-2})
    pub ratio: f64,
}

pub fn complexity_count(params: &CoarseGrainParams, t: f64, r: f64) -> Result<ComplexityBound> {
    if !(t > r && r > 1.0) {
        return Err(TrapError::param("t", "need t > r > 1"));
    }
    let d = params.d as f64;
    let rc = r.powf(params.chi);
    let log_bound =
        params.chi * r.ln() + d * rc * (t / r).ln() + rc * r.powf(d) * std::f64::consts::LN_2;
    Ok(ComplexityBound {
        log_bound,
        ratio: log_bound / (t / (r * r)),
    })
}
