//! Lowest eigenpairs by shift-invert subspace expansion: the basis grows by
//! A⁻¹ applied to the current Ritz vectors (multigrid-preconditioned CG),
//! and Rayleigh–Ritz uses A itself. Restarts keep the wanted Ritz vectors.

use super::grid::{dot, pcg, GridOperator, Multigrid};
use crate::error::{Result, TrapError};
use crate::rng::CounterRng;
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenOptions {
    /// Residual target relative to the Gershgorin norm bound.
    pub tol: f64,
    /// Outer expansion steps.
    pub max_iter: usize,
    pub inner_tol: f64,
    pub inner_max_iter: usize,
    pub max_basis: usize,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions {
            tol: 1e-8,
            max_iter: 300,
            inner_tol: 1e-10,
            inner_max_iter: 1000,
            max_basis: 24,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralResult {
    pub lambda1: f64,
    /// Values on the active nodes in storage order, unit ℓ² norm, sign
    /// chosen nonnegative.
    pub eigenvector: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub inner_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowestEigenvalues {
    pub values: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Leading values meeting the residual target.
    pub converged: usize,
    pub iterations: usize,
}

struct Ritz {
    values: Vec<f64>,
    vectors: Vec<Vec<f64>>,
    images: Vec<Vec<f64>>,
    residuals: Vec<f64>,
}

fn orthonormalize_into(basis: &[Vec<f64>], w: &mut [f64]) -> f64 {
    let before = dot(w, w).sqrt();
    for _ in 0..2 {
        for v in basis {
            let c = dot(v, w);
            w.iter_mut().zip(v).for_each(|(a, b)| *a -= c * b);
        }
    }
    let n = dot(w, w).sqrt();
    if n > 0.0 {
        w.iter_mut().for_each(|a| *a /= n);
    }
    if before > 0.0 {
        n / before
    } else {
        0.0
    }
}

fn combine(basis: &[Vec<f64>], coeffs: impl Iterator<Item = f64>, len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len];
    for (v, c) in basis.iter().zip(coeffs) {
        out.iter_mut().zip(v).for_each(|(a, b)| *a += c * b);
    }
    out
}

fn rayleigh_ritz(op: &GridOperator, v: &[Vec<f64>], h: &DMatrix<f64>, want: usize) -> Ritz {
    let eig = SymmetricEigen::new(h.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let take = want.min(order.len());
    let len = op.len();
    let mut r = Ritz {
        values: Vec::with_capacity(take),
        vectors: Vec::with_capacity(take),
        images: Vec::with_capacity(take),
        residuals: Vec::with_capacity(take),
    };
    for &j in order.iter().take(take) {
        let col = eig.eigenvectors.column(j);
        let y = combine(v, col.iter().copied(), len);
        let mut ay = op.zeros();
        op.apply(&y, &mut ay);
        let theta = eig.eigenvalues[j];
        let res: f64 = ay
            .iter()
            .zip(&y)
            .map(|(a, b)| (a - theta * b).powi(2))
            .sum::<f64>()
            .sqrt();
        r.values.push(theta);
        r.vectors.push(y);
        r.images.push(ay);
        r.residuals.push(res);
    }
    r
}

/// Basis size limited so the stored vectors stay near 1.5 GB.
fn basis_cap(op: &GridOperator, requested: usize) -> usize {
    let per_vector = 8 * op.len();
    requested.min(1_500_000_000 / per_vector.max(1))
}

struct Solver<'a> {
    op: &'a GridOperator,
    mg: Multigrid,
    opts: EigenOptions,
    v: Vec<Vec<f64>>,
    h: DMatrix<f64>,
    inner: usize,
}

impl<'a> Solver<'a> {
    fn push(&mut self, mut w: Vec<f64>) -> bool {
        self.op.project(&mut w);
        let kept = orthonormalize_into(&self.v, &mut w);
        if kept < 1e-10 {
            return false;
        }
        let mut aw = self.op.zeros();
        self.op.apply(&w, &mut aw);
        let m = self.v.len();
        let mut h = DMatrix::zeros(m + 1, m + 1);
        h.view_mut((0, 0), (m, m)).copy_from(&self.h);
        for i in 0..m {
            let c = dot(&self.v[i], &aw);
            h[(i, m)] = c;
            h[(m, i)] = c;
        }
        h[(m, m)] = dot(&w, &aw);
        self.h = h;
        self.v.push(w);
        true
    }

    fn restart(&mut self, ritz: &Ritz) {
        self.v = ritz.vectors.clone();
        let k = ritz.values.len();
        let mut h = DMatrix::zeros(k, k);
        for i in 0..k {
            for j in 0..k {
                h[(i, j)] = dot(&self.v[i], &ritz.images[j]);
            }
        }
        self.h = 0.5 * (&h + h.transpose());
    }

    fn solve_inverse(&mut self, y: &[f64], theta: f64) -> Result<Vec<f64>> {
        let mut x: Vec<f64> = y.iter().map(|v| v / theta.max(1e-300)).collect();
        let (it, _) = pcg(
            self.op,
            &self.mg,
            y,
            &mut x,
            self.opts.inner_tol,
            self.opts.inner_max_iter,
        )?;
        self.inner += it;
        Ok(x)
    }
}

fn start_vectors(op: &GridOperator, count: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(count);
    let mut ones = op.zeros();
    for &f in op.active_nodes() {
        ones[f as usize] = 1.0;
    }
    out.push(ones);
    let mut rng = CounterRng::new(0x5eed, 7, 0);
    for _ in 1..count {
        let mut v = op.zeros();
        for &f in op.active_nodes() {
            v[f as usize] = rng.uniform() - 0.5;
        }
        out.push(v);
    }
    out
}

/// The k lowest eigenvalues of the operator.
pub fn lowest_eigenvalues(
    op: &GridOperator,
    k: usize,
    opts: &EigenOptions,
) -> Result<(LowestEigenvalues, Vec<Vec<f64>>)> {
    let (out, vecs) = lowest_eigenvalues_partial(op, k, opts)?;
    if out.converged < out.values.len() {
        let worst = out.residuals.iter().copied().fold(0.0, f64::max);
        return Err(TrapError::NoConvergence {
            iterations: out.iterations,
            residual: worst / op.norm_estimate(),
        });
    }
    Ok((out, vecs))
}

/// As `lowest_eigenvalues`, but running out of iterations returns the
/// current Ritz values with `converged` < k instead of an error.
pub fn lowest_eigenvalues_partial(
    op: &GridOperator,
    k: usize,
    opts: &EigenOptions,
) -> Result<(LowestEigenvalues, Vec<Vec<f64>>)> {
    if k == 0 {
        return Err(TrapError::param("k", "must be positive"));
    }
    let k = k.min(op.active_count());
    let extra = if k == 1 {
        0
    } else {
        2.min(op.active_count() - k)
    };
    let want = k + extra;
    let max_basis = basis_cap(op, opts.max_basis).max(2 * want + 4);
    let mut s = Solver {
        op,
        mg: Multigrid::new(op),
        opts: *opts,
        v: Vec::new(),
        h: DMatrix::zeros(0, 0),
        inner: 0,
    };
    for w in start_vectors(op, want) {
        s.push(w);
    }
    let target = opts.tol * op.norm_estimate();
    for it in 0..=opts.max_iter {
        let ritz = rayleigh_ritz(op, &s.v, &s.h, want);
        let converged = ritz
            .residuals
            .iter()
            .take(k)
            .take_while(|&&r| r <= target)
            .count();
        if converged == k || s.v.len() == op.active_count() {
            let out = LowestEigenvalues {
                values: ritz.values[..k].to_vec(),
                residuals: ritz.residuals[..k].to_vec(),
                converged: k,
                iterations: it,
            };
            return Ok((out, ritz.vectors[..k].to_vec()));
        }
        if it == opts.max_iter {
            let out = LowestEigenvalues {
                values: ritz.values[..k].to_vec(),
                residuals: ritz.residuals[..k].to_vec(),
                converged,
                iterations: it,
            };
            return Ok((out, ritz.vectors[..k].to_vec()));
        }
        if s.v.len() + 1 > max_basis {
            s.restart(&ritz);
        }
        // Expand with the first unconverged wanted pair, falling back to the
        // others if the new direction is already in the span.
        let mut added = false;
        for j in (converged..ritz.values.len()).chain(0..converged) {
            let w = s.solve_inverse(&ritz.vectors[j], ritz.values[j])?;
            if s.push(w) {
                added = true;
                break;
            }
        }
        if !added {
            let r: Vec<f64> = ritz.images[converged]
                .iter()
                .zip(&ritz.vectors[converged])
                .map(|(a, b)| a - ritz.values[converged] * b)
                .collect();
            if !s.push(r) {
                return Err(TrapError::Numerical("subspace expansion stalled".into()));
            }
        }
    }
    unreachable!()
}

/// Principal eigenpair with a nonnegative eigenvector.
pub fn principal_eigenvalue(op: &GridOperator, opts: &EigenOptions) -> Result<SpectralResult> {
    let mut s = Solver {
        op,
        mg: Multigrid::new(op),
        opts: *opts,
        v: Vec::new(),
        h: DMatrix::zeros(0, 0),
        inner: 0,
    };
    for w in start_vectors(op, 1) {
        s.push(w);
    }
    let target = opts.tol * op.norm_estimate();
    let mut best = f64::INFINITY;
    for it in 0..=opts.max_iter {
        let ritz = rayleigh_ritz(op, &s.v, &s.h, 3);
        best = best.min(ritz.residuals[0]);
        if ritz.residuals[0] <= target || s.v.len() == op.active_count() {
            let mut psi = op.gather(&ritz.vectors[0]);
            if psi.iter().sum::<f64>() < 0.0 {
                psi.iter_mut().for_each(|v| *v = -*v);
            }
            // Roundoff-level negative entries of a Perron vector.
            let scale = psi.iter().copied().fold(0.0, f64::max);
            psi.iter_mut()
                .filter(|v| **v < 0.0 && **v > -1e-9 * scale)
                .for_each(|v| *v = 0.0);
            let n = dot(&psi, &psi).sqrt();
            psi.iter_mut().for_each(|v| *v /= n);
            return Ok(SpectralResult {
                lambda1: ritz.values[0],
                eigenvector: psi,
                residual: ritz.residuals[0],
                iterations: it,
                inner_iterations: s.inner,
            });
        }
        if it == opts.max_iter {
            return Err(TrapError::NoConvergence {
                iterations: it,
                residual: best / op.norm_estimate(),
            });
        }
        if s.v.len() + 1 > basis_cap(op, opts.max_basis).max(4) {
            s.restart(&ritz);
        }
        let w = s.solve_inverse(&ritz.vectors[0], ritz.values[0])?;
        if !s.push(w) {
            let r: Vec<f64> = ritz.images[0]
                .iter()
                .zip(&ritz.vectors[0])
                .map(|(a, b)| a - ritz.values[0] * b)
                .collect();
            if !s.push(r) {
                return Err(TrapError::Numerical("subspace expansion stalled".into()));
            }
        }
    }
    unreachable!()
}

/// Rayleigh quotient ⟨ψ, Aψ⟩/⟨ψ, ψ⟩ of a vector over the active nodes.
pub fn rayleigh_quotient(op: &GridOperator, psi: &[f64]) -> f64 {
    let x = op.scatter(psi);
    let mut y = op.zeros();
    op.apply(&x, &mut y);
    dot(&x, &y) / dot(&x, &x)
}

#[cfg(test)]
mod tests {
    use super::super::grid::{assemble, assemble_traps, TrapDomain, TrapKind, Traps};
    use super::*;
    use crate::geometry::{Aabb, Region};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn box_op(d: usize, h: f64) -> GridOperator {
        assemble(
            &Region::single(Aabb::symmetric(d, 1.0).unwrap()),
            &|_: &[f64]| 0.0,
            h,
        )
        .unwrap()
    }

    #[test]
    fn free_square_matches_discrete_formula() {
        let h = 2.0 / 32.0;
        let op = box_op(2, h);
        let r = principal_eigenvalue(&op, &EigenOptions::default()).unwrap();
        // Discrete eigenvalue of the 5-point stencil.
        let exact = 2.0 * (2.0 / (h * h)) * (PI * h / 4.0).sin().powi(2);
        assert_relative_eq!(r.lambda1, exact, max_relative = 1e-10);
        assert!(r.eigenvector.iter().all(|&v| v >= 0.0));
        assert_relative_eq!(
            r.eigenvector.iter().map(|v| v * v).sum::<f64>(),
            1.0,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            rayleigh_quotient(&op, &r.eigenvector),
            r.lambda1,
            max_relative = 1e-10
        );
    }

    #[test]
    fn dense_oracle_with_soft_traps() {
        let dom = TrapDomain {
            outer: Aabb::symmetric(2, 1.0).unwrap(),
            traps: Traps::Boxes(vec![
                Aabb::from_bounds(&[-0.5, -0.3], &[-0.1, 0.4]).unwrap(),
                Aabb::cube(vec![0.5, 0.5], 0.3).unwrap(),
            ]),
        };
        let h = 0.1; // 19 x 19 interior nodes
        for kind in [TrapKind::Soft(50.0), TrapKind::Hard] {
            let op = assemble_traps(&dom, kind, 0.0, h).unwrap();
            let dense = SymmetricEigen::new(op.to_dense());
            let mut ev: Vec<f64> = dense.eigenvalues.iter().copied().collect();
            ev.sort_by(f64::total_cmp);
            let r = principal_eigenvalue(&op, &EigenOptions::default()).unwrap();
            assert_relative_eq!(r.lambda1, ev[0], max_relative = 1e-10);
            let (low, _) = lowest_eigenvalues(&op, 5, &EigenOptions::default()).unwrap();
            for i in 0..5 {
                assert_relative_eq!(low.values[i], ev[i], max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn degenerate_levels_are_found() {
        let op = box_op(2, 2.0 / 16.0);
        let (low, _) = lowest_eigenvalues(&op, 4, &EigenOptions::default()).unwrap();
        assert_relative_eq!(low.values[1], low.values[2], max_relative = 1e-9);
        assert!(low.values[2] < low.values[3]);
    }
}
