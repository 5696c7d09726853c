use super::law::{DisplacementLaw, LawKind};
use crate::error::{Result, TrapError};
use crate::geometry::Aabb;
use crate::rng::CounterRng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// Cubic Hermite table of the radial CDF as a function of y = ln r.
#[derive(Debug)]
pub struct RadialTable {
    law: DisplacementLaw,
    y0: f64,
    dy: f64,
    f: Vec<f64>,
    df: Vec<f64>,
    r_min: f64,
    /// Largest |spline - exact| seen at interval midpoints.
    pub max_error: f64,
}

const TABLE_EDGE: f64 = 1e-14;
const TABLE_TOL: f64 = 2e-10;

impl RadialTable {
    pub fn build(law: DisplacementLaw) -> Result<RadialTable> {
        if !law.is_power() {
            return Err(TrapError::param(
                "law",
                "radial tables exist only for power kinds",
            ));
        }
        let cdf = |y: f64| law.radial_cdf(y.exp());
        let slope = |y: f64| {
            let r = y.exp();
            r * law.radial_pdf(r)
        };
        let solve = |target_low: bool| {
            // bisection in y for F = 1e-14 (low edge) or 1 - F = 1e-14 (high edge)
            let (mut a, mut b) = (-60.0f64, 60.0f64);
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                let v = if target_low {
                    cdf(m)
                } else {
                    law.tail(m.exp())
                };
                let go_right = if target_low {
                    v < TABLE_EDGE
                } else {
                    v > TABLE_EDGE
                };
                if go_right {
                    a = m;
                } else {
                    b = m;
                }
            }
            0.5 * (a + b)
        };
        let y0 = solve(true);
        let y1 = solve(false);
        let mut n = 256usize;
        loop {
            let dy = (y1 - y0) / n as f64;
            let ys: Vec<f64> = (0..=n).map(|i| y0 + i as f64 * dy).collect();
            let f: Vec<f64> = ys.iter().map(|&y| cdf(y)).collect();
            let df: Vec<f64> = ys.iter().map(|&y| slope(y)).collect();
            let mut max_error: f64 = 0.0;
            for i in 0..n {
                let exact = cdf(ys[i] + 0.5 * dy);
                let approx = hermite(f[i], f[i + 1], df[i] * dy, df[i + 1] * dy, 0.5);
                max_error = max_error.max((exact - approx).abs());
            }
            if max_error < TABLE_TOL || n >= 1 << 20 {
                return Ok(RadialTable {
                    law,
                    y0,
                    dy,
                    f,
                    df,
                    r_min: y0.exp(),
                    max_error,
                });
            }
            n *= 2;
        }
    }

    pub fn nodes(&self) -> usize {
        self.f.len()
    }

    /// CDF of |ξ| as represented by the table (exact outside its range).
    pub fn cdf(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        let y = r.ln();
        let n = self.f.len() - 1;
        if y <= self.y0 || y >= self.y0 + n as f64 * self.dy {
            return self.law.radial_cdf(r);
        }
        let s = (y - self.y0) / self.dy;
        let i = (s.floor() as usize).min(n - 1);
        let t = s - i as f64;
        hermite(
            self.f[i],
            self.f[i + 1],
            self.df[i] * self.dy,
            self.df[i + 1] * self.dy,
            t,
        )
    }

    /// Radius with table CDF equal to u.
    pub fn invert(&self, u: f64) -> f64 {
        let n = self.f.len() - 1;
        if u <= self.f[0] {
            // F ∝ r^d below the table (relative error O(r^θ)).
            return self.r_min * (u / self.f[0]).powf(1.0 / self.law.d as f64);
        }
        if u >= self.f[n] {
            // Far tail: solve ln P(|ξ| > r) = ln(1 - u) exactly.
            let target = (-u).ln_1p();
            let (mut a, mut b) = (
                self.y0 + n as f64 * self.dy,
                self.y0 + n as f64 * self.dy + 10.0,
            );
            while self.law.ln_tail(b.exp()) > target {
                b += 10.0;
            }
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                if self.law.ln_tail(m.exp()) > target {
                    a = m;
                } else {
                    b = m;
                }
            }
            return (0.5 * (a + b)).exp();
        }
        let i = self
            .f
            .partition_point(|&v| v <= u)
            .saturating_sub(1)
            .min(n - 1);
        let (f0, f1) = (self.f[i], self.f[i + 1]);
        let (m0, m1) = (self.df[i] * self.dy, self.df[i + 1] * self.dy);
        let (mut a, mut b) = (0.0, 1.0);
        let mut t = if f1 > f0 {
            ((u - f0) / (f1 - f0)).clamp(0.0, 1.0)
        } else {
            0.5
        };
        for _ in 0..60 {
            let v = hermite(f0, f1, m0, m1, t) - u;
            if v.abs() < 1e-15 {
                break;
            }
            if v > 0.0 {
                b = t;
            } else {
                a = t;
            }
            let dv = hermite_slope(f0, f1, m0, m1, t);
            let mut next = t - v / dv;
            if !(next > a && next < b) || !dv.is_finite() || dv <= 0.0 {
                next = 0.5 * (a + b);
            }
            if (next - t).abs() < 1e-16 {
                t = next;
                break;
            }
            t = next;
        }
        (self.y0 + (i as f64 + t) * self.dy).exp()
    }
}

fn hermite(f0: f64, f1: f64, m0: f64, m1: f64, t: f64) -> f64 {
    let t2 = t * t;
    let t3 = t2 * t;
    (2.0 * t3 - 3.0 * t2 + 1.0) * f0
        + (t3 - 2.0 * t2 + t) * m0
        + (-2.0 * t3 + 3.0 * t2) * f1
        + (t3 - t2) * m1
}

fn hermite_slope(f0: f64, f1: f64, m0: f64, m1: f64, t: f64) -> f64 {
    let t2 = t * t;
    (6.0 * t2 - 6.0 * t) * f0
        + (3.0 * t2 - 4.0 * t + 1.0) * m0
        + (-6.0 * t2 + 6.0 * t) * f1
        + (3.0 * t2 - 2.0 * t) * m1
}

type TableKey = (LawKind, usize, i64);

fn table_cache() -> &'static Mutex<HashMap<TableKey, Arc<RadialTable>>> {
    static CACHE: OnceLock<Mutex<HashMap<TableKey, Arc<RadialTable>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Shared inversion table for a power law, keyed by θ rounded to 1e-6. The
/// table is built at the rounded θ so results do not depend on which caller
/// populated the cache first.
pub fn radial_table(law: &DisplacementLaw) -> Result<Arc<RadialTable>> {
    let key = (law.kind, law.d, (law.theta * 1e6).round() as i64);
    if let Some(t) = table_cache().lock().expect("cache lock").get(&key) {
        return Ok(t.clone());
    }
    let rounded = DisplacementLaw::new(law.kind, key.2 as f64 / 1e6, law.d)?;
    let table = Arc::new(RadialTable::build(rounded)?);
    Ok(table_cache()
        .lock()
        .expect("cache lock")
        .entry(key)
        .or_insert(table)
        .clone())
}

/// Draw one displacement from uniform variates: `u_radius` for the radius
/// and `gauss` (d standard normals) for the direction.
pub fn radial_sampler(law: &DisplacementLaw, u_radius: f64, gauss: &[f64]) -> Result<Vec<f64>> {
    let r = match law.kind {
        LawKind::PowerTail | LawKind::ShiftedPower => radial_table(law)?.invert(u_radius),
        LawKind::UniformBall => u_radius.powf(1.0 / law.d as f64),
        LawKind::Lattice => 0.0,
        LawKind::Poisson => return Err(TrapError::param("law", "poisson has no displacement")),
    };
    let norm = gauss.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm == 0.0 {
        let mut v = vec![0.0; law.d];
        v[0] = r;
        return Ok(v);
    }
    Ok(gauss.iter().map(|g| r * g / norm).collect())
}

fn draw_displacement(law: &DisplacementLaw, rng: &mut CounterRng) -> Result<Vec<f64>> {
    let u = rng.uniform_open();
    let g: Vec<f64> = (0..law.d).map(|_| rng.normal()).collect();
    radial_sampler(law, u, &g)
}

/// Sampling knobs. With `far_field`, sites beyond the truncation radius are
/// replaced by an inhomogeneous Poisson process with their exact mean
/// intensity instead of raising `TruncationTooSmall`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerOptions {
    pub tail_limit: f64,
    pub far_field: bool,
}

impl Default for SamplerOptions {
    fn default() -> Self {
        SamplerOptions {
            tail_limit: 1e-9,
            far_field: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointConfiguration {
    pub d: usize,
    pub law: DisplacementLaw,
    pub window: Aabb,
    /// Flat coordinates, d per point.
    pub coords: Vec<f64>,
    /// Row-major index into the padded site box, or -1.
    pub site_index: Vec<i64>,
    pub site_lo: Vec<i64>,
    pub site_dims: Vec<usize>,
    pub seed: u64,
    pub stream: u64,
    pub truncation_radius: f64,
    /// Certified bound on the probability mass ignored by truncation (or on
    /// the Poisson approximation error when the far field is sampled).
    pub tail_bound: f64,
    pub far_field: bool,
    /// Coordinates are the lattice picture multiplied by this factor.
    pub scale: f64,
}

impl PointConfiguration {
    pub fn len(&self) -> usize {
        self.site_index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.site_index.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.d..(i + 1) * self.d]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks(self.d)
    }

    /// Number of points in the half-open box [lo, hi).
    pub fn count_in(&self, b: &Aabb) -> usize {
        let lo = b.lo();
        let hi = b.hi();
        self.points()
            .filter(|p| (0..self.d).all(|k| p[k] >= lo[k] && p[k] < hi[k]))
            .count()
    }

    /// The scaled configuration x -> factor * x.
    pub fn scaled(&self, factor: f64) -> PointConfiguration {
        let mut c = self.clone();
        c.coords.iter_mut().for_each(|v| *v *= factor);
        c.window = self.window.scaled(factor);
        c.scale = self.scale * factor;
        c
    }

    /// Configuration with only the listed points (window unchanged).
    pub fn with_points(&self, coords: Vec<f64>) -> PointConfiguration {
        let n = coords.len() / self.d;
        PointConfiguration {
            coords,
            site_index: vec![-1; n],
            ..self.clone()
        }
    }

    /// Extra points appended, e.g. for monotonicity tests.
    pub fn add_points(&mut self, extra: &[f64]) {
        self.coords.extend_from_slice(extra);
        self.site_index
            .extend(std::iter::repeat(-1).take(extra.len() / self.d));
    }
}

fn site_range(window: &Aabb, pad: f64) -> (Vec<i64>, Vec<usize>) {
    let d = window.dim();
    let lo: Vec<i64> = (0..d)
        .map(|k| (window.lo_k(k) - pad).ceil() as i64)
        .collect();
    let hi: Vec<i64> = (0..d)
        .map(|k| (window.hi_k(k) + pad).floor() as i64)
        .collect();
    let dims = lo
        .iter()
        .zip(&hi)
        .map(|(a, b)| (b - a + 1).max(0) as usize)
        .collect();
    (lo, dims)
}

fn site_count(window: &Aabb, pad: f64) -> f64 {
    site_range(window, pad)
        .1
        .iter()
        .map(|&n| n as f64)
        .product()
}

/// Upper bound on Σ_{q outside the padded site box} P(q + ξ_q ∈ window),
/// summing the radial tail over L∞ shells (blocks double in width).
pub fn truncation_tail_bound(law: &DisplacementLaw, window: &Aabb, radius: f64) -> f64 {
    if !law.kind.has_sites() {
        return 0.0;
    }
    let mut total = 0.0;
    let mut m_a = 1.0f64;
    let mut width = 1.0f64;
    while m_a < 1e15 {
        let m_b = m_a + width;
        let count = site_count(window, radius + m_b - 1.0) - site_count(window, radius + m_a - 1.0);
        let tail = law.tail(radius + m_a - 1.0);
        let term = count * tail;
        total += term;
        if tail == 0.0 || (term < 1e-30 && term < 1e-20 * total) {
            return total;
        }
        m_a = m_b;
        if m_a > 64.0 {
            width *= 2.0;
        }
    }
    f64::INFINITY
}

pub fn sample_configuration(
    law: &DisplacementLaw,
    window: &Aabb,
    truncation_radius: f64,
    seed: u64,
    stream: u64,
) -> Result<PointConfiguration> {
    sample_configuration_with(
        law,
        window,
        truncation_radius,
        seed,
        stream,
        SamplerOptions::default(),
    )
}

fn zigzag(v: i64) -> u64 {
    ((v << 1) ^ (v >> 63)) as u64
}

const FAR_FIELD_LABEL: u64 = 0xfa12_f1e1_d000_0001;
const POISSON_LABEL: u64 = 0x9015_5011_0000_0002;

pub fn sample_configuration_with(
    law: &DisplacementLaw,
    window: &Aabb,
    truncation_radius: f64,
    seed: u64,
    stream: u64,
    opts: SamplerOptions,
) -> Result<PointConfiguration> {
    let d = law.d;
    if window.dim() != d {
        return Err(TrapError::param("window", "dimension differs from the law"));
    }
    if !(truncation_radius >= 0.0) {
        return Err(TrapError::param("truncation_radius", "must be nonnegative"));
    }
    let mut coords = Vec::new();
    let mut site_index = Vec::new();
    if law.kind == LawKind::Poisson {
        let mut rng = CounterRng::from_labels(seed, &[stream, POISSON_LABEL]);
        let n = Poisson::new(window.volume())
            .map_err(|e| TrapError::Numerical(format!("poisson count: {e}")))?
            .sample(&mut rng) as usize;
        for _ in 0..n {
            for k in 0..d {
                coords.push(window.lo_k(k) + window.sides[k] * rng.uniform());
            }
            site_index.push(-1);
        }
        return Ok(PointConfiguration {
            d,
            law: *law,
            window: window.clone(),
            coords,
            site_index,
            site_lo: vec![0; d],
            site_dims: vec![0; d],
            seed,
            stream,
            truncation_radius,
            tail_bound: 0.0,
            far_field: false,
            scale: 1.0,
        });
    }

    let mut tail_bound = truncation_tail_bound(law, window, truncation_radius);
    let use_far = tail_bound > opts.tail_limit;
    if use_far && !opts.far_field {
        return Err(TrapError::TruncationTooSmall {
            radius: truncation_radius,
            bound: tail_bound,
            limit: opts.tail_limit,
        });
    }
    let (site_lo, site_dims) = site_range(window, truncation_radius);
    let total: usize = site_dims.iter().product();
    if law.is_power() {
        radial_table(law)?;
    }
    coords.reserve(total * d);
    let mut q = vec![0i64; d];
    for f in 0..total {
        let mut r = f;
        for k in (0..d).rev() {
            q[k] = site_lo[k] + (r % site_dims[k]) as i64;
            r /= site_dims[k];
        }
        let mut labels = vec![stream];
        labels.extend(q.iter().map(|&v| zigzag(v)));
        let mut rng = CounterRng::from_labels(seed, &labels);
        let disp = draw_displacement(law, &mut rng)?;
        for k in 0..d {
            coords.push(q[k] as f64 + disp[k]);
        }
        site_index.push(f as i64);
    }

    if use_far {
        // Sites outside the box C' = ∪ C(q, 1) over sampled sites put points
        // in the window at rate λ(x) = P(x + ξ ∉ C'); thin a homogeneous
        // process at the envelope rate P(|ξ| > dist(window, ∂C')).
        let c_lo: Vec<f64> = (0..d).map(|k| site_lo[k] as f64 - 0.5).collect();
        let c_hi: Vec<f64> = (0..d)
            .map(|k| (site_lo[k] + site_dims[k] as i64) as f64 - 0.5)
            .collect();
        let cprime = Aabb::from_bounds(&c_lo, &c_hi)?;
        let dmin = (0..d)
            .map(|k| (window.lo_k(k) - c_lo[k]).min(c_hi[k] - window.hi_k(k)))
            .fold(f64::INFINITY, f64::min)
            .max(0.0);
        let envelope = law.tail(dmin);
        let mut rng = CounterRng::from_labels(seed, &[stream, FAR_FIELD_LABEL]);
        let mean = envelope * window.volume();
        let n = if mean > 0.0 {
            Poisson::new(mean)
                .map_err(|e| TrapError::Numerical(format!("far-field count: {e}")))?
                .sample(&mut rng) as usize
        } else {
            0
        };
        let mut x = vec![0.0; d];
        for _ in 0..n {
            for k in 0..d {
                x[k] = window.lo_k(k) + window.sides[k] * rng.uniform();
            }
            let accept = rng.uniform();
            if accept * envelope < law.prob_outside_box(&x, &cprime) {
                coords.extend_from_slice(&x);
                site_index.push(-1);
            }
        }
        // Le Cam: a far site is at least dmin from the window, so it hits it
        // with probability at most |W| f(dmin) and Σ p_q^2 <= |W| f(dmin) E[count].
        let sup_density = law.density_at(law.normalization(), dmin);
        tail_bound = window.volume() * sup_density * mean;
    }

    Ok(PointConfiguration {
        d,
        law: *law,
        window: window.clone(),
        coords,
        site_index,
        site_lo,
        site_dims,
        seed,
        stream,
        truncation_radius,
        tail_bound,
        far_field: use_far,
        scale: 1.0,
    })
}

/// Smallest integer radius whose certified tail bound is below `limit`,
/// searched up to `max_radius`.
pub fn certified_radius(
    law: &DisplacementLaw,
    window: &Aabb,
    limit: f64,
    max_radius: f64,
) -> Option<f64> {
    let mut r = 0.0;
    while r <= max_radius {
        if truncation_tail_bound(law, window, r) < limit {
            return Some(r);
        }
        r += if r < 32.0 { 1.0 } else { (r / 8.0).ceil() };
    }
    None
}

/// Sample with a certified radius (tail below 1e-9, radius at most 64), or
/// with the far-field process when no such radius exists.
pub fn sample_auto(
    law: &DisplacementLaw,
    window: &Aabb,
    seed: u64,
    stream: u64,
) -> Result<PointConfiguration> {
    let limit = 1e-9;
    let (radius, far_field) = match certified_radius(law, window, limit, 64.0) {
        Some(r) => (r, false),
        None => (64.0, true),
    };
    sample_configuration_with(
        law,
        window,
        radius,
        seed,
        stream,
        SamplerOptions {
            tail_limit: limit,
            far_field,
        },
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntensityEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub replicas: usize,
}

/// Points per unit volume in `sub`, averaged over replicas.
pub fn mean_intensity(ensemble: &[PointConfiguration], sub: &Aabb) -> Result<IntensityEstimate> {
    if ensemble.is_empty() {
        return Err(TrapError::param("ensemble", "empty ensemble"));
    }
    if ensemble.len() < 30 {
        return Err(TrapError::param(
            "ensemble",
            "at least 30 replicas are required",
        ));
    }
    let vol = sub.volume();
    let xs: Vec<f64> = ensemble
        .iter()
        .map(|c| c.count_in(sub) as f64 / vol)
        .collect();
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(IntensityEstimate {
        mean,
        stderr: (var / n).sqrt(),
        replicas: ensemble.len(),
    })
}
