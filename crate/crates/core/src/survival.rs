//! Brownian survival among the traps: the detection-grid potential, path
//! Monte Carlo for quenched and annealed survival, the eigenvalue proxy,
//! exponent fits and moment ratios.

use crate::error::{Result, TrapError};
use crate::geometry::{Aabb, Region};
use crate::lattice::{sample_auto, DisplacementLaw, PointConfiguration};
use crate::rng::CounterRng;
use crate::spectral::{
    assemble_traps, principal_eigenvalue, EigenOptions, TrapDomain, TrapKind, Traps,
};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use std::io::Write;

const PATH_LABEL: u64 = 0x5a7_0001;
const CONFIG_LABEL: u64 = 0x5a7_0002;
const MAX_BUCKETS: usize = 20_000_000;

/// V(x) = Σ_q h·1{ξ(C(εq, ε)) ≥ 1}·1_{C(εq, L)}(x) inside T, ∞ outside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub epsilon: f64,
    pub bump_side: f64,
    /// Bump height; `f64::INFINITY` for hard traps.
    pub height: f64,
    pub window: Aabb,
}

impl PotentialSpec {
    /// ε = L = h = 1 on T = (-half, half)^d.
    pub fn unit(d: usize, half: f64) -> Result<Self> {
        let s = PotentialSpec {
            epsilon: 1.0,
            bump_side: 1.0,
            height: 1.0,
            window: Aabb::symmetric(d, half)?,
        };
        s.validate()?;
        Ok(s)
    }

    /// The unit potential on T = (-t/2, t/2)^d.
    pub fn for_time(d: usize, t: f64) -> Result<Self> {
        PotentialSpec::unit(d, 0.5 * t)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(TrapError::param("epsilon", "must be positive"));
        }
        if !(self.bump_side > 0.0 && self.bump_side.is_finite()) {
            return Err(TrapError::param("bump_side", "must be positive"));
        }
        if !(self.height > 0.0) {
            return Err(TrapError::param("height", "must be positive or infinite"));
        }
        Ok(())
    }

    pub fn is_hard(&self) -> bool {
        self.height.is_infinite()
    }

    pub fn kind(&self) -> TrapKind {
        if self.is_hard() {
            TrapKind::Hard
        } else {
            TrapKind::Soft(self.height)
        }
    }

    /// Window a configuration must cover so that every detection cell whose
    /// bump meets T is fully observed.
    pub fn sampling_window(&self) -> Aabb {
        let pad = 0.5 * (self.bump_side + self.epsilon);
        let lo: Vec<f64> = self.window.lo().iter().map(|v| v - pad).collect();
        let hi: Vec<f64> = self.window.hi().iter().map(|v| v + pad).collect();
        Aabb::from_bounds(&lo, &hi).expect("padded window")
    }
}

/// Closed trap boxes inside T with a bucket index for point queries.
#[derive(Debug, Clone)]
pub struct TrapField {
    pub window: Aabb,
    pub height: f64,
    pub boxes: Vec<Aabb>,
    bucket: f64,
    dims: Vec<usize>,
    offsets: Vec<u32>,
    members: Vec<u32>,
}

impl TrapField {
    pub fn new(window: Aabb, boxes: Vec<Aabb>, height: f64) -> Result<Self> {
        if !(height > 0.0) {
            return Err(TrapError::param("height", "must be positive or infinite"));
        }
        let d = window.dim();
        if boxes.iter().any(|b| b.dim() != d) {
            return Err(TrapError::param(
                "boxes",
                "dimension differs from the window",
            ));
        }
        let mut bucket = boxes
            .iter()
            .map(|b| b.min_side())
            .fold(window.min_side(), f64::min);
        let count = |bk: f64| -> Vec<usize> {
            (0..d)
                .map(|k| ((window.hi_k(k) - window.lo_k(k)) / bk).ceil().max(1.0) as usize)
                .collect()
        };
        let mut dims = count(bucket);
        while dims.iter().product::<usize>() > MAX_BUCKETS {
            bucket *= 2.0;
            dims = count(bucket);
        }
        let total: usize = dims.iter().product();
        let strides: Vec<usize> = (0..d).map(|k| dims[k + 1..].iter().product()).collect();
        let ranges = |b: &Aabb| -> Option<Vec<(usize, usize)>> {
            let mut out = Vec::with_capacity(d);
            for k in 0..d {
                let a = ((b.lo_k(k) - window.lo_k(k)) / bucket).floor();
                let e = ((b.hi_k(k) - window.lo_k(k)) / bucket).floor();
                if e < 0.0 || a >= dims[k] as f64 {
                    return None;
                }
                out.push((a.max(0.0) as usize, (e as usize).min(dims[k] - 1)));
            }
            Some(out)
        };
        let visit = |b: &Aabb, f: &mut dyn FnMut(usize)| {
            if let Some(r) = ranges(b) {
                let sizes: Vec<usize> = r.iter().map(|&(a, e)| e - a + 1).collect();
                let n: usize = sizes.iter().product();
                for m in 0..n {
                    let mut rem = m;
                    let mut flat = 0;
                    for k in (0..d).rev() {
                        flat += (r[k].0 + rem % sizes[k]) * strides[k];
                        rem /= sizes[k];
                    }
                    f(flat);
                }
            }
        };
        let mut counts = vec![0u32; total + 1];
        for b in &boxes {
            visit(b, &mut |f| counts[f + 1] += 1);
        }
        for i in 0..total {
            counts[i + 1] += counts[i];
        }
        let offsets = counts.clone();
        let mut fill = counts;
        let mut members = vec![0u32; offsets[total] as usize];
        for (i, b) in boxes.iter().enumerate() {
            visit(b, &mut |f| {
                members[fill[f] as usize] = i as u32;
                fill[f] += 1;
            });
        }
        Ok(TrapField {
            window,
            height,
            boxes,
            bucket,
            dims,
            offsets,
            members,
        })
    }

    pub fn dim(&self) -> usize {
        self.window.dim()
    }

    pub fn in_trap(&self, x: &[f64]) -> bool {
        let d = self.dim();
        let mut flat = 0;
        for k in 0..d {
            let c = ((x[k] - self.window.lo_k(k)) / self.bucket).floor();
            if c < 0.0 || c >= self.dims[k] as f64 {
                return false;
            }
            flat = flat * self.dims[k] + c as usize;
        }
        let (a, e) = (self.offsets[flat] as usize, self.offsets[flat + 1] as usize);
        self.members[a..e].iter().any(|&i| {
            let b = &self.boxes[i as usize];
            (0..d).all(|k| x[k] >= b.lo_k(k) && x[k] <= b.hi_k(k))
        })
    }

    /// V(x), with ∞ outside the open window.
    pub fn potential(&self, x: &[f64]) -> f64 {
        if !self.window.contains_open(x) {
            f64::INFINITY
        } else if self.in_trap(x) {
            self.height
        } else {
            0.0
        }
    }

    /// The trap support as a region (union of boxes).
    pub fn region(&self) -> Region {
        if self.boxes.is_empty() {
            Region::Empty(self.dim())
        } else {
            Region::BoxUnion(self.boxes.clone())
        }
    }

    pub fn trap_domain(&self) -> TrapDomain {
        TrapDomain {
            outer: self.window.clone(),
            traps: if self.boxes.is_empty() {
                Traps::Empty
            } else {
                Traps::Boxes(self.boxes.clone())
            },
        }
    }

    pub fn kind(&self) -> TrapKind {
        if self.height.is_infinite() {
            TrapKind::Hard
        } else {
            TrapKind::Soft(self.height)
        }
    }

    /// |U ∩ T| / |T|.
    pub fn covered_fraction(&self) -> f64 {
        let clipped: Vec<Aabb> = self
            .boxes
            .iter()
            .filter_map(|b| b.intersect(&self.window))
            .collect();
        if clipped.is_empty() {
            return 0.0;
        }
        Region::BoxUnion(clipped).volume() / self.window.volume()
    }
}

/// Traps C(εq, L) on every detection cell C(εq, ε) = εq + ε[-1/2, 1/2)^d
/// holding a point, for bumps meeting T.
pub fn build_potential(config: &PointConfiguration, spec: &PotentialSpec) -> Result<TrapField> {
    spec.validate()?;
    let d = spec.window.dim();
    if config.d != d {
        return Err(TrapError::param(
            "config",
            "dimension differs from the window",
        ));
    }
    let need = spec.sampling_window();
    let covered = (0..d).all(|k| {
        config.window.lo_k(k) <= need.lo_k(k) + 1e-12
            && config.window.hi_k(k) >= need.hi_k(k) - 1e-12
    });
    if !covered {
        return Err(TrapError::Domain(format!(
            "configuration window must contain T padded by (L+ε)/2 = {}",
            0.5 * (spec.bump_side + spec.epsilon)
        )));
    }
    let eps = spec.epsilon;
    let half_l = 0.5 * spec.bump_side;
    let mut cells: Vec<Vec<i64>> = config
        .points()
        .map(|p| {
            p.iter()
                .map(|&x| (x / eps + 0.5).floor() as i64)
                .collect::<Vec<i64>>()
        })
        .filter(|q| {
            (0..d).all(|k| {
                let c = eps * q[k] as f64;
                c + half_l > spec.window.lo_k(k) && c - half_l < spec.window.hi_k(k)
            })
        })
        .collect();
    cells.sort_unstable();
    cells.dedup();
    let boxes = cells
        .iter()
        .map(|q| Aabb::cube(q.iter().map(|&v| eps * v as f64).collect(), spec.bump_side))
        .collect::<Result<Vec<_>>>()?;
    TrapField::new(spec.window.clone(), boxes, spec.height)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SurvivalMethod {
    WalkMc,
    EigenProxy,
}

impl SurvivalMethod {
    pub fn name(&self) -> &'static str {
        match self {
            SurvivalMethod::WalkMc => "mc",
            SurvivalMethod::EigenProxy => "proxy",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalEstimate {
    pub t: f64,
    pub method: SurvivalMethod,
    pub value: f64,
    /// ln of the value, kept finite where the value underflows.
    pub log_value: f64,
    pub stderr: f64,
    pub paths: usize,
    pub configs: usize,
    pub dt: f64,
}

fn validate_times(ts: &[f64]) -> Result<()> {
    if ts.is_empty() {
        return Err(TrapError::param("t", "need at least one time"));
    }
    if ts.iter().any(|&t| !(t >= 0.0 && t.is_finite())) {
        return Err(TrapError::param(
            "t",
            "times must be finite and nonnegative",
        ));
    }
    if ts.windows(2).any(|w| w[1] < w[0]) {
        return Err(TrapError::param("t", "times must be sorted"));
    }
    Ok(())
}

/// Per-time sums of weights and squared weights.
#[derive(Debug, Clone)]
struct Tally {
    sum: Vec<f64>,
    sq: Vec<f64>,
}

impl Tally {
    fn new(n: usize) -> Self {
        Tally {
            sum: vec![0.0; n],
            sq: vec![0.0; n],
        }
    }

    fn merge(mut self, o: Tally) -> Tally {
        for i in 0..self.sum.len() {
            self.sum[i] += o.sum[i];
            self.sq[i] += o.sq[i];
        }
        self
    }
}

/// Weights exp(-∫V) of one path at the checkpoint steps.
fn walk(field: &TrapField, steps: &[usize], dt: f64, rng: &mut CounterRng, out: &mut [f64]) {
    let d = field.dim();
    let sd = dt.sqrt();
    let hard = field.height.is_infinite();
    let mut x = vec![0.0; d];
    let mut v_prev = field.potential(&x);
    let mut acc = 0.0;
    let mut alive = v_prev.is_finite() && !(hard && v_prev > 0.0);
    let mut step = 0usize;
    for (slot, &target) in out.iter_mut().zip(steps) {
        while alive && step < target {
            for xk in x.iter_mut() {
                *xk += sd * rng.normal();
            }
            step += 1;
            let v = field.potential(&x);
            if v.is_infinite() {
                alive = false;
                break;
            }
            acc += 0.5 * (v_prev + v) * dt;
            v_prev = v;
            if acc > 745.0 {
                alive = false;
            }
        }
        *slot = if alive { (-acc).exp() } else { 0.0 };
    }
}

/// Quenched survival at every time in `ts` from the same paths, so the
/// curve is nonincreasing in t. Hard traps absorb on the first step that
/// lands in them; soft traps accumulate ∫V by the trapezoid rule.
pub fn quenched_survival_curve(
    field: &TrapField,
    ts: &[f64],
    n_paths: usize,
    dt: f64,
    seed: u64,
) -> Result<Vec<SurvivalEstimate>> {
    quenched_tally(field, ts, n_paths, dt, seed, 0).map(|(tally, n)| {
        ts.iter()
            .enumerate()
            .map(|(i, &t)| {
                let mean = tally.sum[i] / n as f64;
                let var = (tally.sq[i] / n as f64 - mean * mean).max(0.0) * n as f64
                    / (n as f64 - 1.0).max(1.0);
                SurvivalEstimate {
                    t,
                    method: SurvivalMethod::WalkMc,
                    value: mean,
                    log_value: mean.ln(),
                    stderr: (var / n as f64).sqrt(),
                    paths: n,
                    configs: 1,
                    dt,
                }
            })
            .collect()
    })
}

fn quenched_tally(
    field: &TrapField,
    ts: &[f64],
    n_paths: usize,
    dt: f64,
    seed: u64,
    stream: u64,
) -> Result<(Tally, usize)> {
    validate_times(ts)?;
    if n_paths < 2 {
        return Err(TrapError::param("n_paths", "need at least two paths"));
    }
    if !(dt > 0.0 && dt <= 0.01) {
        return Err(TrapError::param("dt", "must lie in (0, 0.01]"));
    }
    let steps: Vec<usize> = ts.iter().map(|t| (t / dt).round() as usize).collect();
    const CHUNK: usize = 1024;
    let chunks = n_paths.div_ceil(CHUNK);
    let tallies: Vec<Tally> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut tally = Tally::new(ts.len());
            let mut w = vec![0.0; ts.len()];
            for p in c * CHUNK..((c + 1) * CHUNK).min(n_paths) {
                let mut rng = CounterRng::from_labels(seed, &[PATH_LABEL, stream, p as u64]);
                walk(field, &steps, dt, &mut rng, &mut w);
                for i in 0..ts.len() {
                    tally.sum[i] += w[i];
                    tally.sq[i] += w[i] * w[i];
                }
            }
            tally
        })
        .collect();
    let total = tallies.into_iter().fold(Tally::new(ts.len()), Tally::merge);
    Ok((total, n_paths))
}

pub fn quenched_survival_mc(
    field: &TrapField,
    t: f64,
    n_paths: usize,
    dt: f64,
    seed: u64,
) -> Result<SurvivalEstimate> {
    Ok(quenched_survival_curve(field, &[t], n_paths, dt, seed)?.remove(0))
}

/// Exponential decay rate -d log S/dt by weighted least squares on
/// log S, weights from the delta-method variance stderr²/S². Returns the
/// rate and its standard error.
pub fn decay_rate(curve: &[SurvivalEstimate]) -> Result<(f64, f64)> {
    let pts: Vec<(f64, f64, f64)> = curve
        .iter()
        .filter(|e| e.value > 0.0 && e.stderr > 0.0)
        .map(|e| (e.t, e.log_value, (e.value / e.stderr).powi(2)))
        .collect();
    if pts.len() < 2 {
        return Err(TrapError::Data(
            "need two times with positive survival".into(),
        ));
    }
    let sw: f64 = pts.iter().map(|p| p.2).sum();
    let tm = pts.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let ym = pts.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let stt: f64 = pts.iter().map(|p| p.2 * (p.0 - tm).powi(2)).sum();
    let sty: f64 = pts.iter().map(|p| p.2 * (p.0 - tm) * (p.1 - ym)).sum();
    Ok((-sty / stt, stt.recip().sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnealedEstimate {
    pub estimates: Vec<SurvivalEstimate>,
    /// Variance of the per-configuration means.
    pub between: Vec<f64>,
    /// Mean over configurations of the per-path variance.
    pub within: Vec<f64>,
}

/// E_θ ⊗ E₀ survival: configurations on independent streams, paths per
/// configuration from streams keyed by the configuration index.
pub fn annealed_survival(
    law: &DisplacementLaw,
    spec: &PotentialSpec,
    ts: &[f64],
    n_configs: usize,
    n_paths: usize,
    dt: f64,
    seed: u64,
) -> Result<AnnealedEstimate> {
    spec.validate()?;
    if n_configs < 2 {
        return Err(TrapError::param(
            "n_configs",
            "need at least two configurations",
        ));
    }
    let window = spec.sampling_window();
    let per: Vec<(Vec<f64>, Vec<f64>)> = (0..n_configs)
        .map(|c| {
            let cfg = sample_auto(law, &window, seed, CONFIG_LABEL ^ c as u64)?;
            let field = build_potential(&cfg, spec)?;
            let (tally, n) = quenched_tally(&field, ts, n_paths, dt, seed, 1 + c as u64)?;
            let nf = n as f64;
            let means: Vec<f64> = tally.sum.iter().map(|s| s / nf).collect();
            let vars: Vec<f64> = tally
                .sq
                .iter()
                .zip(&means)
                .map(|(q, m)| (q / nf - m * m).max(0.0) * nf / (nf - 1.0))
                .collect();
            Ok((means, vars))
        })
        .collect::<Result<_>>()?;
    let nc = n_configs as f64;
    let mut estimates = Vec::new();
    let mut between = Vec::new();
    let mut within = Vec::new();
    for (i, &t) in ts.iter().enumerate() {
        let mean = per.iter().map(|p| p.0[i]).sum::<f64>() / nc;
        let b = per.iter().map(|p| (p.0[i] - mean).powi(2)).sum::<f64>() / (nc - 1.0);
        let w = per.iter().map(|p| p.1[i]).sum::<f64>() / nc;
        estimates.push(SurvivalEstimate {
            t,
            method: SurvivalMethod::WalkMc,
            value: mean,
            log_value: mean.ln(),
            stderr: (b / nc).sqrt(),
            paths: n_paths,
            configs: n_configs,
            dt,
        });
        between.push(b);
        within.push(w);
    }
    Ok(AnnealedEstimate {
        estimates,
        between,
        within,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProxyOptions {
    /// Grid spacing; must divide the window sides and should resolve the
    /// bump edges.
    pub h: f64,
    pub eig: EigenOptions,
}

impl Default for ProxyOptions {
    fn default() -> Self {
        ProxyOptions {
            h: 0.125,
            eig: EigenOptions::default(),
        }
    }
}

/// λ₁ of -½Δ + V in T for one trap field (∞ when no free node remains).
pub fn field_eigenvalue(field: &TrapField, opts: &ProxyOptions) -> Result<f64> {
    let op = assemble_traps(&field.trap_domain(), field.kind(), 0.0, opts.h)?;
    if op.active_count() == 0 {
        return Ok(f64::INFINITY);
    }
    Ok(principal_eigenvalue(&op, &opts.eig)?.lambda1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxySample {
    /// λ₁ for every configuration whose eigensolve succeeded, by index.
    pub lambdas: Vec<f64>,
    pub failures: usize,
}

/// Per-configuration principal eigenvalues; eigensolver failures are
/// counted and skipped, other errors propagate.
pub fn proxy_eigenvalues(
    law: &DisplacementLaw,
    spec: &PotentialSpec,
    n_configs: usize,
    seed: u64,
    opts: &ProxyOptions,
) -> Result<ProxySample> {
    spec.validate()?;
    if n_configs == 0 {
        return Err(TrapError::param("n_configs", "must be positive"));
    }
    let window = spec.sampling_window();
    let out: Vec<Option<f64>> = (0..n_configs)
        .into_par_iter()
        .map(|c| {
            let cfg = sample_auto(law, &window, seed, CONFIG_LABEL ^ c as u64)?;
            let field = build_potential(&cfg, spec)?;
            match field_eigenvalue(&field, opts) {
                Ok(l) => Ok(Some(l)),
                Err(TrapError::NoConvergence { .. } | TrapError::Numerical(_)) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let failures = out.iter().filter(|v| v.is_none()).count();
    if failures == n_configs {
        return Err(TrapError::Numerical("every eigensolve failed".into()));
    }
    Ok(ProxySample {
        lambdas: out.into_iter().flatten().collect(),
        failures,
    })
}

/// ln E[exp(-p λ t)] over the sample, by log-sum-exp.
pub fn log_moment(lambdas: &[f64], t: f64, p: f64) -> f64 {
    let e: Vec<f64> = lambdas.iter().map(|l| -p * l * t).collect();
    let m = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + (e.iter().map(|v| (v - m).exp()).sum::<f64>() / e.len() as f64).ln()
}

/// E_θ[exp(-λ₁ t)] at every t from one set of eigenvalues.
pub fn proxy_curve(sample: &ProxySample, ts: &[f64]) -> Result<Vec<SurvivalEstimate>> {
    validate_times(ts)?;
    let n = sample.lambdas.len();
    Ok(ts
        .iter()
        .map(|&t| {
            let log_value = log_moment(&sample.lambdas, t, 1.0);
            let value = log_value.exp();
            let var = sample
                .lambdas
                .iter()
                .map(|l| ((-l * t).exp() - value).powi(2))
                .sum::<f64>()
                / (n as f64 - 1.0).max(1.0);
            SurvivalEstimate {
                t,
                method: SurvivalMethod::EigenProxy,
                value,
                log_value,
                stderr: (var / n as f64).sqrt(),
                paths: 0,
                configs: n,
                dt: 0.0,
            }
        })
        .collect())
}

pub fn eigen_proxy_annealed(
    law: &DisplacementLaw,
    spec: &PotentialSpec,
    ts: &[f64],
    n_configs: usize,
    seed: u64,
    opts: &ProxyOptions,
) -> Result<(Vec<SurvivalEstimate>, ProxySample)> {
    let sample = proxy_eigenvalues(law, spec, n_configs, seed, opts)?;
    Ok((proxy_curve(&sample, ts)?, sample))
}

pub fn write_survival_csv<W: Write>(rows: &[SurvivalEstimate], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let fmt = |e: csv::Error| TrapError::Format(e.to_string());
    w.write_record(["t", "estimate", "stderr", "method"])
        .map_err(fmt)?;
    for r in rows {
        w.write_record([
            r.t.to_string(),
            r.value.to_string(),
            r.stderr.to_string(),
            r.method.name().to_string(),
        ])
        .map_err(fmt)?;
    }
    w.flush()?;
    Ok(())
}

/// (t, estimate) pairs from a survival CSV.
pub fn read_survival_csv<R: std::io::Read>(input: R) -> Result<Vec<(f64, f64)>> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r
        .headers()
        .map_err(|e| TrapError::Format(e.to_string()))?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| TrapError::Format(format!("missing column {name}")))
    };
    let (ti, ei) = (col("t")?, col("estimate")?);
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| TrapError::Format(e.to_string()))?;
        let parse = |i: usize| {
            rec.get(i)
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| TrapError::Format(format!("bad number in row {rec:?}")))
        };
        out.push((parse(ti)?, parse(ei)?));
    }
    Ok(out)
}

/// Exponents of t and log t in -log S_t:
/// d = 2: ((2+θ)/(4+θ), -θ/(4+θ)); d ≥ 3: ((d²+2θ)/(d²+2d+2θ), 0).
pub fn theoretical_exponents(d: usize, theta: f64) -> Result<(f64, f64)> {
    if !(theta > 0.0) {
        return Err(TrapError::param("theta", "must be positive"));
    }
    match d {
        2 => Ok(((2.0 + theta) / (4.0 + theta), -theta / (4.0 + theta))),
        3.. => {
            let df = d as f64;
            Ok((
                (df * df + 2.0 * theta) / (df * df + 2.0 * df + 2.0 * theta),
                0.0,
            ))
        }
        _ => Err(TrapError::param("d", "must be at least 2")),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    /// log S_t ≈ -c t^a (log t)^b
    pub a: f64,
    pub b: f64,
    pub log_c: f64,
    /// 95% intervals.
    pub a_ci: (f64, f64),
    pub b_ci: Option<(f64, f64)>,
    pub residuals: Vec<f64>,
    pub log_correction: bool,
}

/// Least squares for log(-log S) = log c + a log t (+ b log log t).
/// `points` are (t, log S_t).
pub fn scaling_fit(points: &[(f64, f64)], d: usize, log_correction: bool) -> Result<ScalingFit> {
    if log_correction && d != 2 {
        return Err(TrapError::param("log_correction", "only fitted for d = 2"));
    }
    if points.len() < 4 {
        return Err(TrapError::param("points", "need at least 4 values of t"));
    }
    let tmin = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let tmax = points.iter().map(|p| p.0).fold(0.0, f64::max);
    if !(tmin > 1.0) && log_correction {
        return Err(TrapError::param("t", "log log t needs t > 1"));
    }
    if !(tmin > 0.0) || tmax < 10.0 * tmin {
        return Err(TrapError::param(
            "t",
            "need positive times spanning at least one decade",
        ));
    }
    if points.iter().any(|p| !(p.1 < 0.0) || !p.1.is_finite()) {
        return Err(TrapError::Data(
            "survival must lie strictly between 0 and 1".into(),
        ));
    }
    let cols = if log_correction { 3 } else { 2 };
    let n = points.len();
    let x = DMatrix::from_fn(n, cols, |i, j| match j {
        0 => 1.0,
        1 => points[i].0.ln(),
        _ => points[i].0.ln().ln(),
    });
    let y = DVector::from_iterator(n, points.iter().map(|p| (-p.1).ln()));
    let xtx = x.transpose() * &x;
    let inv = xtx
        .try_inverse()
        .ok_or_else(|| TrapError::Numerical("singular design matrix".into()))?;
    let beta = &inv * x.transpose() * &y;
    let resid = &y - &x * &beta;
    let dof = n - cols;
    let (a_ci, b_ci) = if dof == 0 {
        (
            (f64::NEG_INFINITY, f64::INFINITY),
            log_correction.then_some((f64::NEG_INFINITY, f64::INFINITY)),
        )
    } else {
        let s2 = resid.norm_squared() / dof as f64;
        let q = StudentsT::new(0.0, 1.0, dof as f64)
            .map_err(|e| TrapError::Numerical(e.to_string()))?
            .inverse_cdf(0.975);
        let half = |j: usize| q * (s2 * inv[(j, j)]).sqrt();
        (
            (beta[1] - half(1), beta[1] + half(1)),
            log_correction.then(|| (beta[2] - half(2), beta[2] + half(2))),
        )
    };
    Ok(ScalingFit {
        a: beta[1],
        b: if log_correction { beta[2] } else { 0.0 },
        log_c: beta[0],
        a_ci,
        b_ci,
        residuals: resid.iter().copied().collect(),
        log_correction,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentRatio {
    pub ts: Vec<f64>,
    /// (log S_{t,q})/q ÷ (log S_{t,p})/p
    pub ratios: Vec<f64>,
    /// (p/q)^{2/(d+θ+2)}
    pub factor: f64,
    pub exponent: f64,
}

/// Moment ratios from proxy eigenvalues, S_{t,p} = E[exp(-p λ₁ t)].
pub fn moment_ratio(
    lambdas: &[f64],
    ts: &[f64],
    p: f64,
    q: f64,
    d: usize,
    theta: f64,
) -> Result<MomentRatio> {
    if !(p >= 1.0) || q < p {
        return Err(TrapError::param("p", "need 1 <= p <= q"));
    }
    if lambdas.is_empty() {
        return Err(TrapError::param("lambdas", "empty sample"));
    }
    validate_times(ts)?;
    let exponent = 2.0 / (d as f64 + theta + 2.0);
    let ratios = ts
        .iter()
        .map(|&t| {
            if p == q {
                1.0
            } else {
                (log_moment(lambdas, t, q) / q) / (log_moment(lambdas, t, p) / p)
            }
        })
        .collect();
    Ok(MomentRatio {
        ts: ts.to_vec(),
        ratios,
        factor: (p / q).powf(exponent),
        exponent,
    })
}
