//! The spatial scale r(t) at which trap-free pockets are optimized.

use traplab::spectral::critical_spacing;
use traplab::{Result, TrapError};

/// r = t^{1/(4+θ)} (log t)^{θ/(8+2θ)} for d = 2 and t^{d/(d²+2d+2θ)} for
/// d >= 3.
pub fn scale_for_t(d: usize, theta: f64, t: f64) -> Result<f64> {
    check(d, theta, t)?;
    Ok(if d == 2 {
        t.powf(1.0 / (4.0 + theta)) * t.ln().powf(theta / (8.0 + 2.0 * theta))
    } else {
        let df = d as f64;
        t.powf(df / (df * df + 2.0 * df + 2.0 * theta))
    })
}

fn check(d: usize, theta: f64, t: f64) -> Result<()> {
    if d < 2 {
        return Err(TrapError::param("d", "must be at least 2"));
    }
    if !(theta > 0.0) {
        return Err(TrapError::param("theta", "must be positive"));
    }
    if !(t > std::f64::consts::E) || !t.is_finite() {
        return Err(TrapError::param("t", "must exceed e"));
    }
    Ok(())
}

/// log of r^{d+θ} δ_c(r)^θ / (t r^{-2}).
pub fn balance_residual(d: usize, theta: f64, t: f64, r: f64) -> Result<f64> {
    let dc = critical_spacing(d, r)?;
    Ok((d as f64 + theta + 2.0) * r.ln() + theta * dc.ln() - t.ln())
}

/// The root r > 1 of r^{d+θ} δ_c(r)^θ = t r^{-2} on the branch where the
/// left side increases. For d >= 3 this equals `scale_for_t`; for d = 2
/// the closed form solves it only to leading order.
pub fn balanced_scale(d: usize, theta: f64, t: f64) -> Result<f64> {
    check(d, theta, t)?;
    // Below this log r the d = 2 balance turns back up as δ_c(r) → ∞.
    let lo_log = if d == 2 {
        theta / (2.0 * (4.0 + theta))
    } else {
        1e-12
    };
    let f = |lr: f64| balance_residual(d, theta, t, lr.exp());
    let (mut a, mut b) = (lo_log, t.ln());
    if f(a)? >= 0.0 {
        return Err(TrapError::param(
            "t",
            "too small for a scale above the turning point",
        ));
    }
    while f(b)? < 0.0 {
        b *= 2.0;
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if f(m)? < 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    Ok((0.5 * (a + b)).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_dimensional_examples() {
        let r = scale_for_t(3, 2.0, 2f64.powi(19)).unwrap();
        assert!((r - 8.0).abs() < 1e-12);
        // t r^{-2} = t^{13/19}
        let t: f64 = 1e6;
        let r = scale_for_t(3, 2.0, t).unwrap();
        assert!(((t / (r * r)).ln() / t.ln() - 13.0 / 19.0).abs() < 1e-12);
        assert!((balanced_scale(3, 2.0, t).unwrap() / r - 1.0).abs() < 1e-9);
    }

    #[test]
    fn two_dimensional_balance() {
        let t = 8f64.exp();
        let r = balanced_scale(2, 2.0, t).unwrap();
        assert!(balance_residual(2, 2.0, t, r).unwrap().abs() < 1e-9);
        let closed = scale_for_t(2, 2.0, t).unwrap();
        assert!((closed - (8.0f64 / 6.0).exp() * 8f64.powf(1.0 / 6.0)).abs() < 1e-12);
        // Same leading order, different constant.
        assert!((closed / r).ln().abs() < 0.5);
        assert!(scale_for_t(2, 2.0, 2.0).is_err());
    }
}
