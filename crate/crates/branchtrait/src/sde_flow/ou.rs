use std::f64::consts::PI;

use crate::error::{ensure, Result};
use crate::numerics::adaptive_simpson;

const RTOL: f64 = 1e-8;

/// Gaussian transition density of dX = -beta X dt + sigma dW from x to z in time t.
pub fn ou_transition_density(beta: f64, sigma: f64, x: f64, z: f64, t: f64) -> Result<f64> {
    ensure(beta > 0.0 && sigma > 0.0, || format!("need beta, sigma > 0, got ({beta}, {sigma})"))?;
    ensure(t > 0.0, || format!("need t > 0, got {t}"))?;
    Ok(gaussian_step(beta, sigma, x, z, t))
}

#[inline]
fn gaussian_step(beta: f64, sigma: f64, x: f64, z: f64, t: f64) -> f64 {
    let var = sigma * sigma * (-(-2.0 * beta * t).exp_m1()) / (2.0 * beta);
    let d = z - x * (-beta * t).exp();
    (-0.5 * d * d / var).exp() / (2.0 * PI * var).sqrt()
}

/// E[L_t^y] for the OU process started at x: sigma^2 times the time integral of
/// the transition density.
///
/// The substitution s = u^2 removes the s^(-1/2) singularity at s = 0 when x = y.
pub fn ou_expected_local_time(beta: f64, sigma: f64, x: f64, y: f64, t: f64) -> Result<f64> {
    ensure(beta > 0.0 && sigma > 0.0, || format!("need beta, sigma > 0, got ({beta}, {sigma})"))?;
    ensure(t >= 0.0, || format!("need t >= 0, got {t}"))?;
    if t == 0.0 {
        return Ok(0.0);
    }
    let at_zero = if x == y { 2.0 / (sigma * (2.0 * PI).sqrt()) } else { 0.0 };
    let integrand = |u: f64| {
        if u <= 0.0 {
            at_zero
        } else {
            2.0 * u * gaussian_step(beta, sigma, x, y, u * u)
        }
    };
    Ok(sigma * sigma * adaptive_simpson(integrand, 0.0, t.sqrt(), RTOL))
}

/// sigma^2 (sqrt(2 beta)/sigma)(2 pi)^(-1/2) int_0^t exp(-(x e^(-beta s) - y sqrt(2 beta)/sigma)^2 / 2) ds.
///
/// This is the expected local time at `y` when the OU process starts from
/// N(sigma x / sqrt(2 beta), sigma^2 / (2 beta)) rather than from `x`; for x = 0
/// that is the stationary start.
pub fn ou_expected_local_time_randomized_start(
    beta: f64,
    sigma: f64,
    x: f64,
    y: f64,
    t: f64,
) -> Result<f64> {
    ensure(beta > 0.0 && sigma > 0.0, || format!("need beta, sigma > 0, got ({beta}, {sigma})"))?;
    ensure(t >= 0.0, || format!("need t >= 0, got {t}"))?;
    if t == 0.0 {
        return Ok(0.0);
    }
    let c = (2.0 * beta).sqrt() / sigma;
    let integrand = |s: f64| {
        let d = x * (-beta * s).exp() - y * c;
        (-0.5 * d * d).exp()
    };
    Ok(sigma * sigma * c / (2.0 * PI).sqrt() * adaptive_simpson(integrand, 0.0, t, RTOL))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn peak_value_of_the_gaussian() {
        let t: f64 = 0.5;
        let v = ou_transition_density(1.0, 1.0, 1.0, (-t).exp(), t).unwrap();
        let peak = 1.0 / (2.0 * PI * (1.0 - (-1f64).exp()) / 2.0).sqrt();
        assert!((v - peak).abs() < 1e-14);
    }

    #[test]
    fn large_time_gives_stationary_law() {
        let v = ou_transition_density(1.0, 1.5, 3.0, 0.4, 60.0).unwrap();
        let var = 1.5f64.powi(2) / 2.0;
        let s = (-0.5 * 0.16 / var).exp() / (2.0 * PI * var).sqrt();
        assert!((v - s).abs() < 1e-14);
    }

    #[test]
    fn density_integrates_to_one() {
        let m = adaptive_simpson(|z| ou_transition_density(0.7, 1.3, 0.8, z, 0.3).unwrap(), -12.0, 12.0, 1e-11);
        assert!((m - 1.0).abs() < 1e-8);
    }

    #[test]
    fn non_positive_time_is_rejected() {
        assert!(ou_transition_density(1.0, 1.0, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn zero_horizon_local_time_vanishes() {
        assert_eq!(ou_expected_local_time(1.0, 1.0, 0.0, 0.0, 0.0).unwrap(), 0.0);
        assert_eq!(ou_expected_local_time_randomized_start(1.0, 1.0, 0.0, 0.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn expected_local_time_increases_in_t() {
        let mut prev = 0.0;
        for t in [0.1, 0.5, 1.0, 2.0] {
            let v = ou_expected_local_time(1.0, 1.0, 0.3, 0.1, t).unwrap();
            assert!(v > prev);
            prev = v;
            let w = ou_expected_local_time_randomized_start(1.0, 1.0, 0.3, 0.1, t).unwrap();
            assert!(w > 0.0);
        }
    }

    /// Brute-force trapezoid in u = sqrt(s), written out independently.
    fn trapezoid_local_time(beta: f64, sigma: f64, x: f64, y: f64, t: f64, n: usize) -> f64 {
        let h = t.sqrt() / n as f64;
        let f = |u: f64| {
            if u == 0.0 {
                return if x == y { 2.0 / (sigma * (2.0 * PI).sqrt()) } else { 0.0 };
            }
            let s = u * u;
            let var = sigma * sigma * (1.0 - (-2.0 * beta * s).exp()) / (2.0 * beta);
            let d = y - x * (-beta * s).exp();
            2.0 * u * (-d * d / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
        };
        let inner: f64 = (1..n).map(|i| f(i as f64 * h)).sum();
        sigma * sigma * h * (inner + 0.5 * (f(0.0) + f(t.sqrt())))
    }

    #[test]
    fn matches_brute_force_trapezoid() {
        let v = ou_expected_local_time(1.0, 1.0, 0.0, 0.0, 1.0).unwrap();
        let b = trapezoid_local_time(1.0, 1.0, 0.0, 0.0, 1.0, 2_000_000);
        assert!((v - b).abs() < 1e-6, "{v} vs {b}");
        let r = ou_expected_local_time_randomized_start(1.0, 1.0, 0.0, 0.0, 1.0).unwrap();
        // the randomized start from 0 is the stationary law: t times the stationary density
        assert!((r - 1.0 / PI.sqrt()).abs() < 1e-9);
    }
}
