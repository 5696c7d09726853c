//! Finite-volume integrated density of states and the Lifshitz-tail fit.

use crate::error::{Result, TrapError};
use crate::lattice::{sample_auto, DisplacementLaw};
use crate::spectral::{assemble_traps, lowest_eigenvalues_partial, EigenOptions};
use crate::survival::{build_potential, PotentialSpec, TrapField};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

const DOS_LABEL: u64 = 0xd05_0001;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteSpectrum {
    pub values: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Leading values meeting the residual target; < k flags a partial
    /// result.
    pub converged: usize,
}

impl FiniteSpectrum {
    pub fn is_complete(&self) -> bool {
        self.converged == self.values.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DosOptions {
    /// Eigenvalues computed per box.
    pub k: usize,
    pub h: f64,
    pub eig: EigenOptions,
}

impl Default for DosOptions {
    fn default() -> Self {
        DosOptions {
            k: 12,
            h: 1.0 / 32.0,
            eig: EigenOptions::default(),
        }
    }
}

/// The k lowest Dirichlet eigenvalues of -½Δ + V in the field's window.
pub fn finite_volume_spectrum(field: &TrapField, opts: &DosOptions) -> Result<FiniteSpectrum> {
    let op = assemble_traps(&field.trap_domain(), field.kind(), 0.0, opts.h)?;
    if op.active_count() == 0 {
        return Err(TrapError::Domain("no free grid node in the box".into()));
    }
    if opts.k >= op.active_count() {
        return Err(TrapError::param(
            "k",
            "must be below the number of grid unknowns",
        ));
    }
    let (low, _) = lowest_eigenvalues_partial(&op, opts.k, &opts.eig)?;
    Ok(FiniteSpectrum {
        values: low.values,
        residuals: low.residuals,
        converged: low.converged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DosHistogram {
    /// Box half-width N of (-N, N)^d.
    pub n: f64,
    pub d: usize,
    pub lambdas: Vec<f64>,
    /// Replica mean of #{λ_i <= λ}/(2N)^d.
    pub ids_mean: Vec<f64>,
    pub ids_stderr: Vec<f64>,
    pub replicas: usize,
    /// Smallest k-th eigenvalue over replicas; counts at λ >= this value
    /// may miss eigenvalues that were not computed.
    pub complete_below: f64,
    pub partial_spectra: usize,
    pub law: Option<DisplacementLaw>,
}

/// Counting function of one spectrum on a λ grid, per unit volume.
pub fn counting_function(values: &[f64], lambdas: &[f64], volume: f64) -> Vec<f64> {
    lambdas
        .iter()
        .map(|&l| values.iter().filter(|&&v| v <= l).count() as f64 / volume)
        .collect()
}

fn check_grid(lambdas: &[f64]) -> Result<()> {
    if lambdas.is_empty() || lambdas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(TrapError::param(
            "lambda",
            "grid must be nonempty and increasing",
        ));
    }
    Ok(())
}

fn histogram(
    spectra: Vec<FiniteSpectrum>,
    spec: &PotentialSpec,
    lambdas: &[f64],
    law: Option<DisplacementLaw>,
) -> DosHistogram {
    let d = spec.window.dim();
    let n = 0.5 * spec.window.min_side();
    let volume = spec.window.volume();
    let counts: Vec<Vec<f64>> = spectra
        .iter()
        .map(|s| counting_function(&s.values, lambdas, volume))
        .collect();
    let r = counts.len() as f64;
    let mean: Vec<f64> = (0..lambdas.len())
        .map(|j| counts.iter().map(|c| c[j]).sum::<f64>() / r)
        .collect();
    let stderr = (0..lambdas.len())
        .map(|j| {
            if counts.len() < 2 {
                return 0.0;
            }
            let v = counts.iter().map(|c| (c[j] - mean[j]).powi(2)).sum::<f64>() / (r - 1.0);
            (v / r).sqrt()
        })
        .collect();
    DosHistogram {
        n,
        d,
        lambdas: lambdas.to_vec(),
        ids_mean: mean,
        ids_stderr: stderr,
        replicas: counts.len(),
        complete_below: spectra
            .iter()
            .map(|s| s.values.last().copied().unwrap_or(0.0))
            .fold(f64::INFINITY, f64::min),
        partial_spectra: spectra.iter().filter(|s| !s.is_complete()).count(),
        law,
    }
}

/// The counting function of the trap-free box, one replica.
pub fn free_ids(spec: &PotentialSpec, lambdas: &[f64], opts: &DosOptions) -> Result<DosHistogram> {
    check_grid(lambdas)?;
    let field = TrapField::new(spec.window.clone(), Vec::new(), spec.height)?;
    let s = finite_volume_spectrum(&field, opts)?;
    Ok(histogram(vec![s], spec, lambdas, None))
}

/// Replica-averaged ℓ_N([0, λ]) with the potential of `spec` on (-N, N)^d.
pub fn ids_estimate(
    law: &DisplacementLaw,
    spec: &PotentialSpec,
    lambdas: &[f64],
    replicas: usize,
    seed: u64,
    opts: &DosOptions,
) -> Result<DosHistogram> {
    check_grid(lambdas)?;
    if replicas < 10 {
        return Err(TrapError::param("replicas", "need at least 10"));
    }
    let window = spec.sampling_window();
    let spectra: Vec<FiniteSpectrum> = (0..replicas)
        .into_par_iter()
        .map(|i| {
            let cfg = sample_auto(law, &window, seed, DOS_LABEL ^ i as u64)?;
            finite_volume_spectrum(&build_potential(&cfg, spec)?, opts)
        })
        .collect::<Result<_>>()?;
    Ok(histogram(spectra, spec, lambdas, Some(*law)))
}

pub fn write_dos_csv<W: Write>(h: &DosHistogram, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let fmt = |e: csv::Error| TrapError::Format(e.to_string());
    w.write_record(["lambda", "ids_mean", "ids_stderr", "N", "replicas"])
        .map_err(fmt)?;
    for j in 0..h.lambdas.len() {
        w.write_record([
            h.lambdas[j].to_string(),
            h.ids_mean[j].to_string(),
            h.ids_stderr[j].to_string(),
            h.n.to_string(),
            h.replicas.to_string(),
        ])
        .map_err(fmt)?;
    }
    w.flush()?;
    Ok(())
}

/// Tail exponent of log ℓ([0, λ]) ≍ -λ^{-κ}: κ = d/2 + θ/d for d >= 3 and
/// 1 + θ/2 for d = 2 (up to the logarithmic factor).
pub fn lifshitz_target(d: usize, theta: f64) -> f64 {
    if d == 2 {
        1.0 + 0.5 * theta
    } else {
        0.5 * d as f64 + theta / d as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LifshitzOutcome {
    Fit {
        slope: f64,
        target: f64,
        bins: usize,
    },
    InsufficientStatistics {
        usable_bins: usize,
        required: usize,
    },
}

/// Slope of log(-log ℓ) against log(1/λ) over bins with 0 < ℓ < 1 below
/// the completeness bound, pooled over histograms.
pub fn lifshitz_fit(hists: &[DosHistogram], d: usize, theta: f64) -> LifshitzOutcome {
    let pts: Vec<(f64, f64)> = hists
        .iter()
        .flat_map(|h| {
            h.lambdas
                .iter()
                .zip(&h.ids_mean)
                .filter(move |(&l, &v)| {
                    l > 0.0 && l < 1.0 && l < h.complete_below && v > 0.0 && v < 1.0
                })
                .map(|(&l, &v)| ((1.0 / l).ln(), (-v.ln()).ln()))
        })
        .collect();
    let required = 3;
    let distinct = {
        let mut xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        xs.len()
    };
    if pts.len() < required || distinct < 2 {
        return LifshitzOutcome::InsufficientStatistics {
            usable_bins: pts.len(),
            required,
        };
    }
    let n = pts.len() as f64;
    let xm = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ym = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - xm).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - xm) * (p.1 - ym)).sum();
    LifshitzOutcome::Fit {
        slope: sxy / sxx,
        target: lifshitz_target(d, theta),
        bins: pts.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Aabb;
    use std::f64::consts::PI;

    fn analytic_free(count: usize) -> Vec<f64> {
        let mut v: Vec<f64> = (1..=8)
            .flat_map(|m| (1..=8).map(move |n| PI * PI / 8.0 * (m * m + n * n) as f64))
            .collect();
        v.sort_by(f64::total_cmp);
        v.truncate(count);
        v
    }

    #[test]
    fn free_square_spectrum() {
        let f = TrapField::new(Aabb::symmetric(2, 1.0).unwrap(), Vec::new(), 1.0).unwrap();
        let s = finite_volume_spectrum(&f, &DosOptions::default()).unwrap();
        assert!(s.is_complete());
        for (a, b) in s.values.iter().zip(analytic_free(12)) {
            assert!((a - b).abs() < 0.02 * b, "{a} {b}");
        }
        assert!(s.values.windows(2).all(|w| w[1] >= w[0] - 1e-9));
    }

    #[test]
    fn traps_raise_every_eigenvalue() {
        let w = Aabb::symmetric(2, 1.0).unwrap();
        let free = TrapField::new(w.clone(), Vec::new(), 1.0).unwrap();
        let trapped =
            TrapField::new(w, vec![Aabb::cube(vec![0.0, 0.0], 0.5).unwrap()], 1.0).unwrap();
        let opts = DosOptions {
            k: 6,
            ..Default::default()
        };
        let a = finite_volume_spectrum(&free, &opts).unwrap();
        let b = finite_volume_spectrum(&trapped, &opts).unwrap();
        assert!(a.values.iter().zip(&b.values).all(|(x, y)| y >= x));
    }

    #[test]
    fn free_counting_is_exact() {
        let spec = PotentialSpec::unit(2, 1.0).unwrap();
        let levels = analytic_free(11);
        let grid: Vec<f64> = levels
            .windows(2)
            .filter(|w| w[1] > w[0])
            .map(|w| 0.5 * (w[0] + w[1]))
            .collect();
        let h = free_ids(&spec, &grid, &DosOptions::default()).unwrap();
        let exact = counting_function(&levels, &grid, 4.0);
        assert_eq!(h.ids_mean, exact);
        assert!(grid.iter().all(|&l| l < h.complete_below));
    }

    #[test]
    fn counting_function_is_monotone() {
        let c = counting_function(&[1.0, 2.0, 2.0, 5.0], &[0.5, 1.0, 2.0, 3.0, 6.0], 2.0);
        assert_eq!(c, vec![0.0, 0.5, 1.5, 1.5, 2.0]);
    }

    #[test]
    fn lifshitz_targets_and_insufficiency() {
        assert!((lifshitz_target(3, 2.0) - 13.0 / 6.0).abs() < 1e-12);
        assert_eq!(lifshitz_target(2, 2.0), 2.0);
        assert!((lifshitz_target(3, 1e-9) - 1.5).abs() < 1e-8);
        let h = DosHistogram {
            n: 1.0,
            d: 2,
            lambdas: vec![0.1, 0.2],
            ids_mean: vec![0.0, 0.0],
            ids_stderr: vec![0.0, 0.0],
            replicas: 10,
            complete_below: 5.0,
            partial_spectra: 0,
            law: None,
        };
        assert!(matches!(
            lifshitz_fit(&[h], 2, 2.0),
            LifshitzOutcome::InsufficientStatistics { .. }
        ));
    }

    #[test]
    fn lifshitz_fit_recovers_synthetic_tail() {
        let lambdas: Vec<f64> = (1..=6).map(|i| 0.1 * i as f64).collect();
        let ids: Vec<f64> = lambdas
            .iter()
            .map(|l: &f64| (-0.3 * l.powf(-2.0)).exp())
            .collect();
        let h = DosHistogram {
            n: 1.0,
            d: 2,
            lambdas,
            ids_stderr: vec![0.0; ids.len()],
            ids_mean: ids,
            replicas: 10,
            complete_below: 5.0,
            partial_spectra: 0,
            law: None,
        };
        match lifshitz_fit(&[h], 2, 2.0) {
            LifshitzOutcome::Fit { slope, target, .. } => {
                assert!((slope - 2.0).abs() < 1e-9);
                assert_eq!(target, 2.0);
            }
            other => panic!("{other:?}"),
        }
    }
}
