use crate::error::{Result, TrapError};
use crate::geometry::Aabb;
use crate::quadrature::{integrate, integrate_box, Tolerance};
use crate::special::{ball_volume, gamma_q, ln_gamma, ln_gamma_q, sphere_area};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LawKind {
    /// density N(d,θ) exp(-|x|^θ)
    PowerTail,
    /// density ∝ exp(-(1+|x|)^θ)
    ShiftedPower,
    /// uniform on the closed unit ball
    UniformBall,
    /// unit-intensity Poisson process (no lattice)
    Poisson,
    /// zero displacement (the periodic lattice)
    Lattice,
}

impl LawKind {
    pub fn parse(s: &str) -> Option<LawKind> {
        match s {
            "power_tail" => Some(LawKind::PowerTail),
            "shifted_power" => Some(LawKind::ShiftedPower),
            "uniform_ball" => Some(LawKind::UniformBall),
            "poisson" => Some(LawKind::Poisson),
            "lattice" => Some(LawKind::Lattice),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LawKind::PowerTail => "power_tail",
            LawKind::ShiftedPower => "shifted_power",
            LawKind::UniformBall => "uniform_ball",
            LawKind::Poisson => "poisson",
            LawKind::Lattice => "lattice",
        }
    }

    pub fn has_sites(&self) -> bool {
        !matches!(self, LawKind::Poisson)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisplacementLaw {
    pub kind: LawKind,
    pub theta: f64,
    pub d: usize,
}

/// N(d, θ) = θ / (σ_d Γ(d/θ)), the constant making N exp(-|x|^θ) a density.
pub fn normalization_constant(d: usize, theta: f64) -> Result<f64> {
    if !(theta > 0.0) {
        return Err(TrapError::param("theta", "must be positive"));
    }
    if !(2..=3).contains(&d) {
        return Err(TrapError::param("d", "must be 2 or 3"));
    }
    Ok((theta.ln() - sphere_area(d).ln() - ln_gamma(d as f64 / theta)).exp())
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

impl DisplacementLaw {
    pub fn new(kind: LawKind, theta: f64, d: usize) -> Result<Self> {
        if !(2..=3).contains(&d) {
            return Err(TrapError::param("d", "must be 2 or 3"));
        }
        if matches!(kind, LawKind::PowerTail | LawKind::ShiftedPower)
            && !(theta > 0.0 && theta.is_finite())
        {
            return Err(TrapError::param("theta", "must be positive for power laws"));
        }
        Ok(DisplacementLaw { kind, theta, d })
    }

    pub fn power(theta: f64, d: usize) -> Result<Self> {
        Self::new(LawKind::PowerTail, theta, d)
    }

    pub fn is_power(&self) -> bool {
        matches!(self.kind, LawKind::PowerTail | LawKind::ShiftedPower)
    }

    /// ∫_ρ^∞ exp(-(1+s)^θ) s^{d-1} ds, via the binomial expansion of
    /// (u-1)^{d-1} and upper incomplete gamma functions in u = 1 + s.
    fn shifted_radial_integral(&self, rho: f64) -> f64 {
        let d = self.d;
        let th = self.theta;
        let x = (1.0 + rho).powf(th);
        let mut sum = 0.0;
        for k in 0..d {
            let a = (k + 1) as f64 / th;
            let sign = if (d - 1 - k) % 2 == 0 { 1.0 } else { -1.0 };
            let log_term = binomial(d - 1, k).ln() + ln_gamma(a) + ln_gamma_q(a, x) - th.ln();
            sum += sign * log_term.exp();
        }
        sum.max(0.0)
    }

    /// Density normalization constant (the density value at the origin up
    /// to the exp factor). Poisson and lattice laws have none.
    pub fn normalization(&self) -> f64 {
        match self.kind {
            LawKind::PowerTail => {
                normalization_constant(self.d, self.theta).expect("validated law")
            }
            LawKind::ShiftedPower => {
                1.0 / (sphere_area(self.d) * self.shifted_radial_integral(0.0))
            }
            LawKind::UniformBall => 1.0 / ball_volume(self.d),
            LawKind::Poisson | LawKind::Lattice => f64::NAN,
        }
    }

    /// Density of the displacement at radius r (absolutely continuous kinds).
    pub fn density_at(&self, norm: f64, r: f64) -> f64 {
        match self.kind {
            LawKind::PowerTail => norm * (-r.powf(self.theta)).exp(),
            LawKind::ShiftedPower => norm * (-(1.0 + r).powf(self.theta)).exp(),
            LawKind::UniformBall => {
                if r <= 1.0 {
                    norm
                } else {
                    0.0
                }
            }
            _ => 0.0,
        }
    }

    /// P(|ξ| > ρ).
    pub fn tail(&self, rho: f64) -> f64 {
        if rho <= 0.0 {
            return 1.0;
        }
        match self.kind {
            LawKind::PowerTail => gamma_q(self.d as f64 / self.theta, rho.powf(self.theta)),
            LawKind::ShiftedPower => {
                (self.shifted_radial_integral(rho) / self.shifted_radial_integral(0.0)).min(1.0)
            }
            LawKind::UniformBall => {
                if rho >= 1.0 {
                    0.0
                } else {
                    1.0 - rho.powi(self.d as i32)
                }
            }
            LawKind::Lattice => 0.0,
            LawKind::Poisson => f64::NAN,
        }
    }

    /// ln P(|ξ| > ρ), accurate deep in the tail.
    pub fn ln_tail(&self, rho: f64) -> f64 {
        if rho <= 0.0 {
            return 0.0;
        }
        match self.kind {
            LawKind::PowerTail => ln_gamma_q(self.d as f64 / self.theta, rho.powf(self.theta)),
            _ => self.tail(rho).ln(),
        }
    }

    /// Radial CDF P(|ξ| <= r).
    pub fn radial_cdf(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        match self.kind {
            LawKind::PowerTail => {
                crate::special::gamma_p(self.d as f64 / self.theta, r.powf(self.theta))
            }
            _ => 1.0 - self.tail(r),
        }
    }

    /// Density of |ξ|: σ_d r^{d-1} f(r).
    pub fn radial_pdf(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        sphere_area(self.d) * r.powi(self.d as i32 - 1) * self.density_at(self.normalization(), r)
    }

    /// P(x + ξ ∈ B) for a closed box B.
    pub fn prob_in_box(&self, x: &[f64], b: &Aabb) -> f64 {
        match self.kind {
            LawKind::Lattice => {
                if b.contains(x) {
                    1.0
                } else {
                    0.0
                }
            }
            LawKind::UniformBall => ball_box_volume(x, 1.0, b) / ball_volume(self.d),
            LawKind::PowerTail | LawKind::ShiftedPower => {
                if b.contains_open(x) {
                    return 1.0 - self.prob_outside_box(x, b);
                }
                self.prob_in_box_direct(x, b)
            }
            LawKind::Poisson => f64::NAN,
        }
    }

    /// Direct nested quadrature of the density over B (used when x is
    /// outside B, so the answer is small and needs relative accuracy).
    pub fn prob_in_box_direct(&self, x: &[f64], b: &Aabb) -> f64 {
        let norm = self.normalization();
        let d = self.d;
        let lo = b.lo();
        let hi = b.hi();
        // Shift so the integrand is radial about the origin.
        let lo_s: Vec<f64> = (0..d).map(|k| lo[k] - x[k]).collect();
        let hi_s: Vec<f64> = (0..d).map(|k| hi[k] - x[k]).collect();
        let breaks: Vec<Vec<f64>> = (0..d).map(|_| vec![0.0]).collect();
        let f = |y: &[f64]| {
            let r = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            self.density_at(1.0, r)
        };
        norm * integrate_box(&f, &lo_s, &hi_s, &breaks, Tolerance::relative(1e-10)).value
    }

    /// P(x + ξ ∉ B) for x in the open box B, as a sum of face integrals
    /// (1/σ_d) ∫_face P(|ξ| > |y-x|) h / |y-x|^d dA(y), h the face distance.
    pub fn prob_outside_box(&self, x: &[f64], b: &Aabb) -> f64 {
        match self.kind {
            LawKind::Lattice => {
                if b.contains(x) {
                    0.0
                } else {
                    1.0
                }
            }
            LawKind::UniformBall => 1.0 - ball_box_volume(x, 1.0, b) / ball_volume(self.d),
            LawKind::Poisson => f64::NAN,
            LawKind::PowerTail | LawKind::ShiftedPower => {
                if !b.contains_open(x) {
                    return 1.0 - self.prob_in_box_direct(x, b);
                }
                let d = self.d;
                let mut total = 0.0;
                for k in 0..d {
                    for side in [b.lo_k(k), b.hi_k(k)] {
                        let hgt = (side - x[k]).abs();
                        let others: Vec<usize> = (0..d).filter(|&j| j != k).collect();
                        let lo: Vec<f64> = others.iter().map(|&j| b.lo_k(j) - x[j]).collect();
                        let hi: Vec<f64> = others.iter().map(|&j| b.hi_k(j) - x[j]).collect();
                        let breaks: Vec<Vec<f64>> = others.iter().map(|_| vec![0.0]).collect();
                        let f = |y: &[f64]| {
                            let r2 = hgt * hgt + y.iter().map(|v| v * v).sum::<f64>();
                            let r = r2.sqrt();
                            self.ln_tail(r).exp() * hgt / r.powi(d as i32)
                        };
                        total += if d == 2 {
                            integrate(
                                |s| f(&[s]),
                                lo[0],
                                hi[0],
                                &breaks[0],
                                Tolerance::relative(1e-11),
                            )
                            .value
                        } else {
                            integrate_box(&f, &lo, &hi, &breaks, Tolerance::relative(1e-11)).value
                        };
                    }
                }
                (total / sphere_area(d)).clamp(0.0, 1.0)
            }
        }
    }
}

/// Area of the disk of radius ρ centred at the origin intersected with
/// {X <= u, Y <= v}.
fn disk_quadrant(rho: f64, u: f64, v: f64) -> f64 {
    if u <= -rho || v <= -rho {
        return 0.0;
    }
    let s = |x: f64| (rho * rho - x * x).max(0.0).sqrt();
    // ∫_{-ρ}^{x} s(t) dt
    let big_s = |x: f64| {
        let x = x.clamp(-rho, rho);
        0.5 * (x * s(x) + rho * rho * (x / rho).clamp(-1.0, 1.0).asin()) + 0.25 * PI * rho * rho
    };
    let up = u.min(rho);
    let two_s = |a: f64, b: f64| {
        let b = b.min(up);
        if b <= a {
            0.0
        } else {
            2.0 * (big_s(b) - big_s(a))
        }
    };
    if v >= rho {
        return two_s(-rho, rho);
    }
    let w = (rho * rho - v * v).sqrt();
    let v_plus_s = |a: f64, b: f64| {
        let b = b.min(up);
        if b <= a {
            0.0
        } else {
            v * (b - a) + big_s(b) - big_s(a)
        }
    };
    if v >= 0.0 {
        two_s(-rho, -w) + v_plus_s(-w, w) + two_s(w, rho)
    } else {
        v_plus_s(-w, w)
    }
}

/// Area of the disk B(c, ρ) ∩ [a,b]×[e,f] in closed form.
pub fn disk_rect_area(c: [f64; 2], rho: f64, lo: [f64; 2], hi: [f64; 2]) -> f64 {
    if rho <= 0.0 {
        return 0.0;
    }
    let (a, b) = (lo[0] - c[0], hi[0] - c[0]);
    let (e, f) = (lo[1] - c[1], hi[1] - c[1]);
    let area = disk_quadrant(rho, b, f) - disk_quadrant(rho, a, f) - disk_quadrant(rho, b, e)
        + disk_quadrant(rho, a, e);
    area.max(0.0)
}

/// Volume of the ball B(x, ρ) ∩ box, exact in d = 2 and by one adaptive
/// quadrature over exact disk slices in d = 3.
pub fn ball_box_volume(x: &[f64], rho: f64, b: &Aabb) -> f64 {
    match x.len() {
        2 => disk_rect_area(
            [x[0], x[1]],
            rho,
            [b.lo_k(0), b.lo_k(1)],
            [b.hi_k(0), b.hi_k(1)],
        ),
        3 => {
            let a = b.lo_k(0).max(x[0] - rho);
            let z = b.hi_k(0).min(x[0] + rho);
            if z <= a {
                return 0.0;
            }
            let lo = [b.lo_k(1), b.lo_k(2)];
            let hi = [b.hi_k(1), b.hi_k(2)];
            // Slice radius crosses edge or corner distances at these heights.
            let mut dists = vec![];
            for &p in &[lo[0] - x[1], hi[0] - x[1]] {
                dists.push(p.abs());
                for &q in &[lo[1] - x[2], hi[1] - x[2]] {
                    dists.push((p * p + q * q).sqrt());
                }
            }
            for &q in &[lo[1] - x[2], hi[1] - x[2]] {
                dists.push(q.abs());
            }
            let mut breaks = vec![];
            for dd in dists {
                if dd < rho {
                    let t = (rho * rho - dd * dd).sqrt();
                    breaks.push(x[0] - t);
                    breaks.push(x[0] + t);
                }
            }
            integrate(
                |s| {
                    let r2 = rho * rho - (s - x[0]).powi(2);
                    if r2 <= 0.0 {
                        0.0
                    } else {
                        disk_rect_area([x[1], x[2]], r2.sqrt(), lo, hi)
                    }
                },
                a,
                z,
                &breaks,
                Tolerance::relative(1e-12),
            )
            .value
        }
        _ => f64::NAN,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate_to_infinity;
    use approx::assert_relative_eq;

    #[test]
    fn normalization_examples() {
        assert_relative_eq!(
            normalization_constant(2, 2.0).unwrap(),
            1.0 / PI,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            normalization_constant(2, 1.0).unwrap(),
            0.5 / PI,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            normalization_constant(3, 2.0).unwrap(),
            PI.powf(-1.5),
            max_relative = 1e-12
        );
        assert!(normalization_constant(2, 0.0).is_err());
    }

    #[test]
    fn normalization_matches_radial_quadrature() {
        for &(d, th) in &[(2usize, 0.5), (2, 3.0), (3, 1.0), (3, 0.7), (2, 8.0)] {
            let law = DisplacementLaw::power(th, d).unwrap();
            let mass =
                integrate_to_infinity(|r| law.radial_pdf(r), 0.0, Tolerance::relative(1e-12)).value;
            assert_relative_eq!(mass, 1.0, max_relative = 1e-8);
        }
    }

    #[test]
    fn shifted_law_tail_matches_quadrature() {
        for &(d, th) in &[(2usize, 8.0), (2, 1.0), (3, 2.0)] {
            let law = DisplacementLaw::new(LawKind::ShiftedPower, th, d).unwrap();
            let mass =
                integrate_to_infinity(|r| law.radial_pdf(r), 0.0, Tolerance::relative(1e-12)).value;
            assert_relative_eq!(mass, 1.0, max_relative = 1e-8);
            for &rho in &[0.05, 0.3, 1.0] {
                let q =
                    integrate_to_infinity(|r| law.radial_pdf(r), rho, Tolerance::relative(1e-12))
                        .value;
                assert_relative_eq!(law.tail(rho), q, max_relative = 1e-7, epsilon = 1e-300);
            }
        }
    }

    #[test]
    fn closed_form_tail_when_theta_equals_d() {
        let law = DisplacementLaw::power(2.0, 2).unwrap();
        for &r in &[0.1, 1.0, 2.5] {
            assert_relative_eq!(law.tail(r), (-r * r as f64).exp(), max_relative = 1e-12);
        }
    }

    #[test]
    fn disk_rectangle_areas() {
        // full disk, half disk, quarter disk
        assert_relative_eq!(
            disk_rect_area([0.0, 0.0], 1.0, [-2.0, -2.0], [2.0, 2.0]),
            PI,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            disk_rect_area([0.0, 0.0], 1.0, [0.0, -2.0], [2.0, 2.0]),
            PI / 2.0,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            disk_rect_area([0.0, 0.0], 1.0, [0.0, 0.0], [2.0, 2.0]),
            PI / 4.0,
            max_relative = 1e-14
        );
        // centred square of side 1 lies inside the unit disk
        assert_relative_eq!(
            disk_rect_area([0.0, 0.0], 1.0, [-0.5, -0.5], [0.5, 0.5]),
            1.0,
            max_relative = 1e-14
        );
        // brute-force grid count oracle for an offset rectangle
        let (lo, hi) = ([0.2, -0.7], [1.4, 0.3]);
        let n = 2000;
        let mut hits = 0usize;
        for i in 0..n {
            for j in 0..n {
                let x = lo[0] + (i as f64 + 0.5) * (hi[0] - lo[0]) / n as f64;
                let y = lo[1] + (j as f64 + 0.5) * (hi[1] - lo[1]) / n as f64;
                if (x - 0.1).powi(2) + (y + 0.2).powi(2) <= 1.0 {
                    hits += 1;
                }
            }
        }
        let brute = hits as f64 / (n * n) as f64 * 1.2;
        assert_relative_eq!(
            disk_rect_area([0.1, -0.2], 1.0, lo, hi),
            brute,
            max_relative = 1e-3
        );
    }

    #[test]
    fn ball_in_cube_volume() {
        let b = Aabb::symmetric(3, 2.0).unwrap();
        assert_relative_eq!(
            ball_box_volume(&[0.0, 0.0, 0.0], 1.0, &b),
            4.0 * PI / 3.0,
            max_relative = 1e-10
        );
        let half = Aabb::from_bounds(&[0.0, -2.0, -2.0], &[2.0, 2.0, 2.0]).unwrap();
        assert_relative_eq!(
            ball_box_volume(&[0.0, 0.0, 0.0], 1.0, &half),
            2.0 * PI / 3.0,
            max_relative = 1e-10
        );
    }

    #[test]
    fn inside_and_outside_probabilities_agree() {
        let b = Aabb::from_bounds(&[-0.7, -0.4], &[0.9, 1.1]).unwrap();
        for &th in &[0.5, 1.0, 2.0, 8.0] {
            let law = DisplacementLaw::power(th, 2).unwrap();
            let x = [0.1, 0.2];
            let out = law.prob_outside_box(&x, &b);
            let inside = law.prob_in_box_direct(&x, &b);
            assert_relative_eq!(out + inside, 1.0, max_relative = 1e-9);
        }
        let b3 = Aabb::from_bounds(&[-0.7, -0.4, -0.5], &[0.9, 1.1, 0.6]).unwrap();
        let law = DisplacementLaw::power(2.0, 3).unwrap();
        let x = [0.1, 0.2, 0.0];
        assert_relative_eq!(
            law.prob_outside_box(&x, &b3) + law.prob_in_box_direct(&x, &b3),
            1.0,
            max_relative = 1e-8
        );
    }
}
