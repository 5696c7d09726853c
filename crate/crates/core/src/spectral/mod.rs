//! Principal Dirichlet–Schrödinger eigenvalues on boxes with traps, the
//! Rauch–Taylor sweep around the critical spacing and the functional
//! λ₁^r(U, R) + δ_c(r)^{-θ} ∫_{R\U} d(x, ∂(R\U))^θ dx.

mod eigen;
mod grid;

pub use eigen::{
    lowest_eigenvalues, lowest_eigenvalues_partial, principal_eigenvalue, rayleigh_quotient,
    EigenOptions, LowestEigenvalues, SpectralResult,
};
pub use grid::{
    assemble, assemble_traps, pcg, GridOperator, Multigrid, TrapDomain, TrapKind, Traps,
};

use crate::error::{Result, TrapError};
use crate::geometry::{Aabb, PunchedDomainSpec};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalScale {
    pub d: usize,
    pub r: f64,
    pub delta_c: f64,
}

/// δ_c(r) = (log r)^{-1/2} for d = 2 and r^{-(d-2)/d} for d >= 3.
pub fn critical_spacing(d: usize, r: f64) -> Result<f64> {
    if !(2..=3).contains(&d) {
        return Err(TrapError::param("d", "must be 2 or 3"));
    }
    if !(r > 1.0) || !r.is_finite() {
        return Err(TrapError::param("r", "must exceed 1"));
    }
    Ok(if d == 2 {
        r.ln().powf(-0.5)
    } else {
        r.powf(-(d as f64 - 2.0) / d as f64)
    })
}

impl CriticalScale {
    pub fn new(d: usize, r: f64) -> Result<Self> {
        Ok(CriticalScale {
            d,
            r,
            delta_c: critical_spacing(d, r)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    /// Grid spacing; by default the largest power-of-two subdivision of the
    /// box with h <= hole side / 2 and at least 64 (d=2) or 32 (d=3)
    /// intervals per side.
    pub h: Option<f64>,
    /// Exponent of the hole functional reported next to λ₁.
    pub theta: f64,
    pub eig: EigenOptions,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            h: None,
            theta: 2.0,
            eig: EigenOptions::default(),
        }
    }
}

/// Grid spacing for a box whose smallest feature has size `feature`.
pub fn grid_spacing(outer: &Aabb, feature: Option<f64>, requested: Option<f64>) -> Result<f64> {
    let required = feature.map(|s| 0.5 * s);
    if let Some(h) = requested {
        if let Some(req) = required {
            if h > req * (1.0 + 1e-12) {
                return Err(TrapError::GridTooCoarse { h, required: req });
            }
        }
        return Ok(h);
    }
    let side = outer.min_side();
    let n_min = if outer.dim() == 2 { 64.0 } else { 32.0 };
    let need = required.map_or(n_min, |req| (side / req * (1.0 - 1e-12)).ceil().max(n_min));
    let n = need.log2().ceil().exp2();
    Ok(side / n)
}

fn snap(c: f64, origin: f64, h: f64) -> f64 {
    origin + ((c - origin) / h).round() * h
}

/// The box (-n, n)^d with traps C(δq, side) whose centres are moved to the
/// nearest grid node, so every hole covers the same node pattern.
pub fn punched_domain(spec: &PunchedDomainSpec, h: f64) -> Result<TrapDomain> {
    spec.validate()?;
    let outer = Aabb::symmetric(spec.d, spec.n)?;
    let axis: Vec<f64> = spec
        .axis_centers()
        .iter()
        .map(|&c| snap(c, outer.lo_k(0), h))
        .collect();
    Ok(TrapDomain {
        outer,
        traps: Traps::Lattice {
            side: spec.hole_side,
            centers: vec![axis; spec.d],
        },
    })
}

fn smallest_trap(t: &Traps) -> Option<f64> {
    match t {
        Traps::Empty => None,
        Traps::Lattice { side, .. } => Some(*side),
        Traps::Boxes(b) => b.iter().map(|b| b.min_side()).reduce(f64::min),
        Traps::Mask(m) => Some(m.h),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub r: f64,
    pub delta_over_critical: f64,
    pub n: f64,
    pub h: f64,
    pub lambda1: f64,
    pub residual: f64,
    pub iterations: usize,
    pub functional: f64,
    pub m_value: f64,
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let fmt = |e: csv::Error| TrapError::Format(e.to_string());
    w.write_record([
        "r",
        "delta_over_critical",
        "n",
        "h",
        "lambda1",
        "residual",
        "iterations",
        "functional",
        "M_value",
    ])
    .map_err(fmt)?;
    for row in rows {
        w.write_record([
            row.r.to_string(),
            row.delta_over_critical.to_string(),
            row.n.to_string(),
            row.h.to_string(),
            row.lambda1.to_string(),
            row.residual.to_string(),
            row.iterations.to_string(),
            row.functional.to_string(),
            row.m_value.to_string(),
        ])
        .map_err(fmt)?;
    }
    w.flush()?;
    Ok(())
}

/// Hard holes of side 1/r at spacing δ_c(r)·r^{-β} (subcritical) and
/// δ_c(r)·r^{+β} (supercritical) in (-1, 1)^d; β = 0 gives one critical
/// row per r. Rows are ordered by r, subcritical first.
pub fn rauch_taylor_sweep(
    d: usize,
    beta: f64,
    rs: &[f64],
    opts: &SweepOptions,
) -> Result<Vec<SweepRow>> {
    if !(beta >= 0.0) {
        return Err(TrapError::param("beta", "must be nonnegative"));
    }
    let mut jobs = Vec::new();
    for &r in rs {
        let factors: Vec<f64> = if beta == 0.0 {
            vec![1.0]
        } else {
            vec![r.powf(-beta), r.powf(beta)]
        };
        for f in factors {
            jobs.push((r, f));
        }
    }
    // Validate every grid before any solve.
    for &(r, _) in &jobs {
        grid_spacing(&Aabb::symmetric(d, 1.0)?, Some(1.0 / r), opts.h)?;
    }
    jobs.par_iter()
        .map(|&(r, f)| {
            let dc = critical_spacing(d, r)?;
            let spec = PunchedDomainSpec {
                d,
                n: 1.0,
                spacing: dc * f,
                hole_side: 1.0 / r,
            };
            let outer = Aabb::symmetric(d, 1.0)?;
            let h = grid_spacing(&outer, Some(spec.hole_side), opts.h)?;
            let dom = punched_domain(&spec, h)?;
            let op = assemble_traps(&dom, TrapKind::Hard, 0.0, h)?;
            let res = principal_eigenvalue(&op, &opts.eig)?;
            let free = dom.free_region()?;
            let functional = free.hole_functional(opts.theta, free.default_resolution().min(h))?;
            Ok(SweepRow {
                r,
                delta_over_critical: f,
                n: 1.0,
                h,
                lambda1: res.lambda1,
                residual: res.residual,
                iterations: res.iterations,
                functional,
                m_value: res.lambda1 + dc.powf(-opts.theta) * functional,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalValue {
    pub lambda1: f64,
    pub residual: f64,
    pub iterations: usize,
    pub h: f64,
    /// ∫_{R\U} d(x, ∂(R\U))^θ dx
    pub functional: f64,
    /// δ_c(r)^{-θ} times the functional
    pub weighted: f64,
    pub value: f64,
}

/// λ₁ of -½Δ + r²·1_U in R plus δ_c(r)^{-θ} ∫_{R\U} d(x, ∂(R\U))^θ dx.
pub fn variational_functional(
    domain: &TrapDomain,
    r: f64,
    theta: f64,
    opts: &SweepOptions,
) -> Result<FunctionalValue> {
    let d = domain.outer.dim();
    let dc = critical_spacing(d, r)?;
    let h = grid_spacing(&domain.outer, smallest_trap(&domain.traps), opts.h)?;
    let op = assemble_traps(domain, TrapKind::Soft(r * r), 0.0, h)?;
    let res = principal_eigenvalue(&op, &opts.eig)?;
    let free = domain.free_region()?;
    let functional = if free.volume() > 0.0 {
        free.hole_functional(theta, free.default_resolution().min(h))?
    } else {
        0.0
    };
    let weighted = dc.powf(-theta) * functional;
    Ok(FunctionalValue {
        lambda1: res.lambda1,
        residual: res.residual,
        iterations: res.iterations,
        h,
        functional,
        weighted,
        value: res.lambda1 + weighted,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Landscape {
    pub rows: Vec<SweepRow>,
    /// Index into `rows` of the smallest M value.
    pub best: Option<usize>,
    /// (n, multiplier, reason) for parameter pairs that do not define a
    /// punched domain.
    pub skipped: Vec<(f64, f64, String)>,
}

/// Grid search of the functional over punched domains (-n, n)^d with holes
/// of side 1/r at spacing multiplier·δ_c(r).
pub fn mr_optimize(
    d: usize,
    r: f64,
    theta: f64,
    ns: &[f64],
    multipliers: &[f64],
    opts: &SweepOptions,
) -> Result<Landscape> {
    let dc = critical_spacing(d, r)?;
    let mut jobs = Vec::new();
    let mut skipped = Vec::new();
    for &n in ns {
        for &m in multipliers {
            let spec = PunchedDomainSpec {
                d,
                n,
                spacing: m * dc,
                hole_side: 1.0 / r,
            };
            match spec.validate() {
                Ok(()) => jobs.push((n, m, spec)),
                Err(e) => skipped.push((n, m, e.to_string())),
            }
        }
    }
    let rows: Vec<SweepRow> = jobs
        .par_iter()
        .map(|(n, m, spec)| {
            let outer = Aabb::symmetric(d, *n)?;
            let h = grid_spacing(&outer, Some(spec.hole_side), opts.h)?;
            let dom = punched_domain(spec, h)?;
            let v = variational_functional(
                &dom,
                r,
                theta,
                &SweepOptions {
                    h: Some(h),
                    ..*opts
                },
            )?;
            Ok(SweepRow {
                r,
                delta_over_critical: *m,
                n: *n,
                h,
                lambda1: v.lambda1,
                residual: v.residual,
                iterations: v.iterations,
                functional: v.functional,
                m_value: v.value,
            })
        })
        .collect::<Result<_>>()?;
    let best = (0..rows.len()).min_by(|&a, &b| rows[a].m_value.total_cmp(&rows[b].m_value));
    Ok(Landscape {
        rows,
        best,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Region;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn critical_spacing_examples() {
        assert_relative_eq!(critical_spacing(3, 8.0).unwrap(), 0.5, max_relative = 1e-15);
        assert_relative_eq!(
            critical_spacing(2, 4f64.exp()).unwrap(),
            0.5,
            max_relative = 1e-15
        );
        assert_relative_eq!(
            critical_spacing(3, 64.0).unwrap(),
            0.25,
            max_relative = 1e-15
        );
        assert!(critical_spacing(2, 1.0).is_err());
        assert!(critical_spacing(2, 0.5).is_err());
    }

    #[test]
    fn free_square_eigenvalue() {
        let op = assemble(
            &Region::single(Aabb::symmetric(2, 1.0).unwrap()),
            &|_: &[f64]| 0.0,
            2.0 / 128.0,
        )
        .unwrap();
        let r = principal_eigenvalue(&op, &EigenOptions::default()).unwrap();
        assert!((r.lambda1 / (PI * PI / 4.0) - 1.0).abs() < 0.01);
    }

    #[test]
    fn constant_shift_moves_the_eigenvalue() {
        let op = assemble(
            &Region::single(Aabb::symmetric(2, 1.0).unwrap()),
            &|x: &[f64]| x[0].abs(),
            2.0 / 32.0,
        )
        .unwrap();
        let a = principal_eigenvalue(&op, &EigenOptions::default())
            .unwrap()
            .lambda1;
        let b = principal_eigenvalue(&op.shifted(3.0), &EigenOptions::default())
            .unwrap()
            .lambda1;
        assert_relative_eq!(b - a, 3.0, max_relative = 1e-9);
    }

    #[test]
    fn coarse_grid_is_refused() {
        let err = rauch_taylor_sweep(
            2,
            0.1,
            &[8.0],
            &SweepOptions {
                h: Some(0.125),
                ..Default::default()
            },
        )
        .unwrap_err();
        match err {
            TrapError::GridTooCoarse { required, .. } => assert_relative_eq!(required, 1.0 / 16.0),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn holes_raise_the_eigenvalue_and_hard_dominates_soft() {
        let spec = PunchedDomainSpec {
            d: 2,
            n: 1.0,
            spacing: 0.5,
            hole_side: 0.125,
        };
        let h = 1.0 / 32.0;
        let dom = punched_domain(&spec, h).unwrap();
        let free = principal_eigenvalue(
            &assemble_traps(&TrapDomain::free(dom.outer.clone()), TrapKind::Hard, 0.0, h).unwrap(),
            &EigenOptions::default(),
        )
        .unwrap()
        .lambda1;
        let hard = principal_eigenvalue(
            &assemble_traps(&dom, TrapKind::Hard, 0.0, h).unwrap(),
            &EigenOptions::default(),
        )
        .unwrap()
        .lambda1;
        let mut gaps = Vec::new();
        for r in [4.0, 16.0, 64.0] {
            let soft = principal_eigenvalue(
                &assemble_traps(&dom, TrapKind::Soft(r * r), 0.0, h).unwrap(),
                &EigenOptions::default(),
            )
            .unwrap()
            .lambda1;
            assert!(free < soft && soft <= hard);
            gaps.push(hard - soft);
        }
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2]);
    }

    #[test]
    fn all_trap_domain_has_no_functional() {
        let outer = Aabb::symmetric(2, 1.0).unwrap();
        let dom = TrapDomain {
            outer: outer.clone(),
            traps: Traps::Boxes(vec![outer.clone()]),
        };
        let v = variational_functional(
            &dom,
            4.0,
            2.0,
            &SweepOptions {
                h: Some(1.0 / 16.0),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(v.functional, 0.0);
        // -½Δ + 16 on the whole box.
        let h = 1.0 / 16.0;
        let free = 2.0 * (2.0 / (h * h)) * (PI * h / 4.0).sin().powi(2);
        assert_relative_eq!(v.lambda1, free + 16.0, max_relative = 1e-9);
    }

    #[test]
    fn sweep_csv_header_and_rows() {
        let rows = rauch_taylor_sweep(2, 0.15, &[4.0, 8.0], &SweepOptions::default()).unwrap();
        assert_eq!(rows.len(), 4);
        assert!(rows[0].delta_over_critical < 1.0 && rows[1].delta_over_critical > 1.0);
        assert!(rows[0].lambda1 > rows[1].lambda1);
        let mut buf = Vec::new();
        write_sweep_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(
            "r,delta_over_critical,n,h,lambda1,residual,iterations,functional,M_value\n"
        ));
        assert_eq!(text.lines().count(), 5);
    }
}
