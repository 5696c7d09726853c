//! Emptiness probabilities P(ξ(W) = 0) = Π_q (1 - P(q + ξ_q ∈ W)).
//!
//! Sites in the open hull of W use P(q + ξ ∉ hull) from face integrals of
//! the radial tail plus the probability of landing in hull \ W, so that
//! log(1 - p) stays accurate when p is within rounding of 1. Other sites
//! integrate the density over the box pieces of W directly.

use crate::error::{Result, TrapError};
use crate::geometry::{Aabb, Partition, Region};
use crate::lattice::{certified_radius, truncation_tail_bound, DisplacementLaw, LawKind};
use crate::quadrature::{integrate_box, Tolerance};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// How many lattice sites enter the exact product.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Truncation {
    /// Sites within this L∞ distance of the hull; the rest is ignored and
    /// bounded.
    Radius(f64),
    /// Certified radius when one exists below `max_radius`, otherwise a
    /// near zone plus a far-field integral for the remaining sites.
    Auto { limit: f64, max_radius: f64 },
}

impl Default for Truncation {
    fn default() -> Self {
        Truncation::Auto {
            limit: 1e-13,
            max_radius: 40.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteTerm {
    pub q: Vec<i64>,
    pub p: f64,
    pub log_term: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmptinessResult {
    /// ln P(ξ(W) = 0)
    pub log_prob: f64,
    /// ∫_W d(x, ∂W)^θ dx
    pub functional: f64,
    /// log_prob / (-functional)
    pub ratio: f64,
    /// Bound on the probability mass of sites left out of the product, or
    /// on the linearisation error of the far-field term when one is used.
    pub tail_bound: f64,
    /// Far-field contribution (already included in log_prob).
    pub far_field: f64,
    pub radius: f64,
    pub sites: Option<Vec<SiteTerm>>,
}

fn lattice_sites(hull: &Aabb, pad: f64) -> Vec<Vec<i64>> {
    let d = hull.dim();
    let lo: Vec<i64> = (0..d).map(|k| (hull.lo_k(k) - pad).ceil() as i64).collect();
    let hi: Vec<i64> = (0..d)
        .map(|k| (hull.hi_k(k) + pad).floor() as i64)
        .collect();
    let dims: Vec<usize> = (0..d)
        .map(|k| (hi[k] - lo[k] + 1).max(0) as usize)
        .collect();
    let total: usize = dims.iter().product();
    (0..total)
        .map(|f| {
            let mut r = f;
            let mut q = vec![0i64; d];
            for k in (0..d).rev() {
                q[k] = lo[k] + (r % dims[k]) as i64;
                r /= dims[k];
            }
            q
        })
        .collect()
}

/// ln(1 - P(x + ξ ∈ W)) for one site.
fn site_log_term(law: &DisplacementLaw, x: &[f64], part: &Partition) -> Result<(f64, f64)> {
    if part.hull.contains_open(x) && law.kind != LawKind::Lattice {
        let mut p_out = law.prob_outside_box(x, &part.hull);
        for b in &part.outside {
            p_out += law.prob_in_box(x, b);
        }
        let p_out = p_out.min(1.0);
        if p_out <= 0.0 {
            if law.kind == LawKind::UniformBall {
                return Ok((1.0, f64::NEG_INFINITY));
            }
            return Err(TrapError::Numerical(format!(
                "site {x:?} has escape probability {p_out:e}; quadrature failed"
            )));
        }
        return Ok((1.0 - p_out, p_out.ln()));
    }
    let p: f64 = part.inside.iter().map(|b| law.prob_in_box(x, b)).sum();
    if p >= 1.0 {
        if matches!(law.kind, LawKind::UniformBall | LawKind::Lattice) {
            return Ok((1.0, f64::NEG_INFINITY));
        }
        return Err(TrapError::Numerical(format!(
            "site {x:?} has p = 1; quadrature failed"
        )));
    }
    Ok((p, (-p).ln_1p()))
}

/// Radius R with N |W| exp(-R^θ) <= 1e-7: beyond it the density over W is
/// flat enough for the far-field integral.
fn near_radius(law: &DisplacementLaw, volume: f64, cap: f64) -> f64 {
    if !law.is_power() {
        return 1.0;
    }
    let n = law.normalization();
    let target: f64 = 1e-7 / (n * volume).max(1e-300);
    if target >= 1.0 {
        return 0.0;
    }
    (-target.ln()).powf(1.0 / law.theta).min(cap).ceil()
}

/// Σ over sites outside the near box of p_q, approximated by
/// ∫_W P(x + ξ ∉ C') dx with C' the union of the near sites' unit cells.
fn far_field_integral(law: &DisplacementLaw, part: &Partition, radius: f64) -> f64 {
    let d = law.d;
    let hull = &part.hull;
    let lo: Vec<f64> = (0..d)
        .map(|k| (hull.lo_k(k) - radius).ceil() - 0.5)
        .collect();
    let hi: Vec<f64> = (0..d)
        .map(|k| (hull.hi_k(k) + radius).floor() + 0.5)
        .collect();
    let cprime = Aabb::from_bounds(&lo, &hi).expect("near box");
    let f = |x: &[f64]| law.prob_outside_box(x, &cprime);
    part.inside
        .iter()
        .map(|b| integrate_box(&f, &b.lo(), &b.hi(), &[], Tolerance::relative(1e-6)).value)
        .sum()
}

pub fn emptiness_detail(
    law: &DisplacementLaw,
    w: &Region,
    truncation: Truncation,
    theta_functional: Option<f64>,
    keep_sites: bool,
) -> Result<EmptinessResult> {
    let functional = match theta_functional {
        Some(th) if !w.is_empty() => w.hole_functional(th, w.default_resolution())?,
        _ => 0.0,
    };
    let finish = |log_prob: f64, tail: f64, far: f64, radius: f64, sites| EmptinessResult {
        log_prob,
        functional,
        ratio: if functional > 0.0 {
            log_prob / (-functional)
        } else {
            f64::NAN
        },
        tail_bound: tail,
        far_field: far,
        radius,
        sites,
    };
    let Some(part) = w.partition() else {
        return Ok(finish(0.0, 0.0, 0.0, 0.0, None));
    };
    if w.dim() != law.d {
        return Err(TrapError::param("region", "dimension differs from the law"));
    }
    if law.kind == LawKind::Poisson {
        return Ok(finish(-w.volume(), 0.0, 0.0, 0.0, None));
    }
    let (radius, use_far) = match truncation {
        Truncation::Radius(r) => (r, false),
        Truncation::Auto { limit, max_radius } => {
            match certified_radius(law, &part.hull, limit, max_radius) {
                Some(r) => (r, false),
                None => (near_radius(law, w.volume(), max_radius), true),
            }
        }
    };
    let sites = lattice_sites(&part.hull, radius);
    let terms: Vec<Result<(f64, f64)>> = sites
        .par_iter()
        .map(|q| {
            let x: Vec<f64> = q.iter().map(|&v| v as f64).collect();
            site_log_term(law, &x, &part)
        })
        .collect();
    let mut log_prob = 0.0;
    let mut kept = Vec::new();
    for (q, t) in sites.iter().zip(terms) {
        let (p, lt) = t?;
        log_prob += lt;
        if keep_sites {
            kept.push(SiteTerm {
                q: q.clone(),
                p,
                log_term: lt,
            });
        }
    }
    let (tail, far) = if use_far {
        // Each far site has p <= N|W| e^{-R^θ}, so replacing log(1-p) by -p
        // costs at most that times the far mass.
        let far = far_field_integral(law, &part, radius);
        let pmax = law.normalization() * w.volume() * (-radius.powf(law.theta)).exp();
        (far * pmax.min(1.0), far)
    } else {
        (truncation_tail_bound(law, &part.hull, radius), 0.0)
    };
    log_prob -= far;
    Ok(finish(
        log_prob,
        tail,
        far,
        radius,
        keep_sites.then_some(kept),
    ))
}

/// ln P(ξ(W) = 0) with the default truncation policy.
pub fn emptiness_log_prob_exact(
    law: &DisplacementLaw,
    w: &Region,
    truncation: Truncation,
) -> Result<f64> {
    Ok(emptiness_detail(law, w, truncation, None, false)?.log_prob)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaRow {
    pub v: f64,
    pub exact_log_prob: f64,
    pub hole_functional: f64,
    pub ratio: f64,
    pub tail_bound: f64,
    pub warning: Option<String>,
}

/// For each (v, W_v): exact log-emptiness over -∫_{W_v} d(x, ∂W_v)^θ dx.
/// A family whose functional per unit volume does not grow is annotated,
/// since the asymptotic statement needs it to diverge.
pub fn lemma1_ratio(
    law: &DisplacementLaw,
    family: &[(f64, Region)],
    theta: f64,
) -> Result<Vec<LemmaRow>> {
    let mut rows: Vec<LemmaRow> = Vec::with_capacity(family.len());
    let mut last_density = f64::NEG_INFINITY;
    for (v, w) in family {
        let r = emptiness_detail(law, w, Truncation::default(), Some(theta), false)?;
        let density = r.functional / w.volume();
        let warning = (density <= last_density).then(|| {
            format!("functional per unit volume {density:.4} does not grow along the family")
        });
        last_density = density;
        rows.push(LemmaRow {
            v: *v,
            exact_log_prob: r.log_prob,
            hole_functional: r.functional,
            ratio: r.ratio,
            tail_bound: r.tail_bound,
            warning,
        });
    }
    Ok(rows)
}

pub fn write_lemma_csv<W: Write>(rows: &[LemmaRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "v",
        "exact_log_prob",
        "hole_functional",
        "ratio",
        "tail_bound",
    ])
    .map_err(|e| TrapError::Format(e.to_string()))?;
    for r in rows {
        w.write_record([
            r.v.to_string(),
            r.exact_log_prob.to_string(),
            r.hole_functional.to_string(),
            r.ratio.to_string(),
            r.tail_bound.to_string(),
        ])
        .map_err(|e| TrapError::Format(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// ln Π_{q ∈ W} P(|ξ_q| > d(q, ∂W)): every site inside W must leave it,
/// which needs a displacement at least the distance to the boundary.
pub fn necessary_condition_bound(law: &DisplacementLaw, w: &Region) -> Result<f64> {
    let Some(hull) = w.window() else {
        return Ok(0.0);
    };
    let mut total = 0.0;
    for q in lattice_sites(&hull, 0.0) {
        let x: Vec<f64> = q.iter().map(|&v| v as f64).collect();
        if w.contains(&x) {
            let dist = w.distance_to_boundary(&x)?;
            total += match law.kind {
                LawKind::Poisson => 0.0,
                _ => law.ln_tail(dist),
            };
        }
    }
    Ok(total)
}
