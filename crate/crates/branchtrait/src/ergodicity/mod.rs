//! Drift and minorisation constants of the tagged-branch chain, the explicit
//! Ornstein-Uhlenbeck certificate, and Monte-Carlo checks of both.

mod empirical;

pub use empirical::{empirical_invariant, verify_drift_mc, DriftPoint, DriftReport, InvariantOptions};

use serde::{Deserialize, Serialize};

use crate::branching_sim::{Fragmentation, ModelSpec};
use crate::error::{ensure, Error, Result};
use crate::numerics::adaptive_simpson;

/// Constants of the Lyapunov bound QV(x) <= v1 V(x) + v2 with V(x) = x^2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftConstants {
    pub v1: f64,
    pub v2: f64,
}

/// m(kappa) = int z^2 kappa~(z) dz.
pub fn fragmentation_second_moment(kappa: &Fragmentation) -> Result<f64> {
    kappa.validate()?;
    let eps = kappa.eps();
    Ok(adaptive_simpson(|z| z * z * kappa.symmetrized(z), eps, 1.0 - eps, 1e-12))
}

/// v1 = m(kappa), v2 = m(kappa) (2 r1 r2 (1 + r1) / sigma1^2 + sigma2^2) / b1,
/// from the bounds declared on the model.
pub fn drift_constants(spec: &ModelSpec) -> Result<DriftConstants> {
    let bounds = spec
        .bounds
        .ok_or_else(|| Error::Configuration("drift constants need declared diffusion bounds".into()))?;
    let b1 = spec.division.lower;
    ensure(b1 > 0.0, || format!("division-rate floor must be positive, got {b1}"))?;
    let (r1, r2) = (bounds.growth, bounds.radius);
    ensure(r1 >= 0.0 && r2 >= 0.0 && bounds.sigma_max >= 0.0, || "drift bounds must be non-negative".into())?;
    // the drift term only exists when the inward radius and growth are non-zero
    let drift_term = if r1 * r2 == 0.0 {
        0.0
    } else {
        ensure(bounds.sigma_min > 0.0, || "sigma_min must be positive".into())?;
        2.0 * r1 * r2 * (1.0 + r1) / (bounds.sigma_min * bounds.sigma_min)
    };
    let m = fragmentation_second_moment(&spec.fragmentation)?;
    Ok(DriftConstants { v1: m, v2: m * (drift_term + bounds.sigma_max.powi(2)) / b1 })
}

/// Minorisation mass of the OU model with constant rate b on the ball |x| <= w:
/// (2/sqrt(pi)) int_0^{w/sqrt2} e^{-y^2} (y sqrt2 / w)^{b/beta} dy.
pub fn ou_minorisation_lambda(beta: f64, sigma: f64, b: f64, eps: f64, w: f64) -> Result<f64> {
    ensure(beta > 0.0 && sigma > 0.0 && b > 0.0 && w > 0.0, || {
        format!("need beta, sigma, b, w > 0, got ({beta}, {sigma}, {b}, {w})")
    })?;
    ensure(eps > 0.0 && eps < 0.5, || format!("eps must lie in (0, 1/2), got {eps}"))?;
    let top = w / std::f64::consts::SQRT_2;
    let p = b / beta;
    // u = (y / top)^{1 + p} absorbs the power: (y / top)^p dy = top du / (1 + p)
    let f = |u: f64| {
        let y = top * u.powf(1.0 / (1.0 + p));
        (-y * y).exp()
    };
    Ok(2.0 / std::f64::consts::PI.sqrt() * top / (1.0 + p) * adaptive_simpson(f, 0.0, 1.0, 1e-12))
}

/// Rate (1 - (lambda - lambda0)) v R(w) with R(w) = (2 + w gamma v0)/(2 + w gamma),
/// gamma = lambda0 / v2 and v0 = eta + (1 - eta)(v1 + 2 v2 / w).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhoBound {
    pub rho: f64,
    pub mass_branch: f64,
    pub drift_branch: f64,
    pub below_half: bool,
}

pub fn ou_rho_bound(lambda: f64, v1: f64, v2: f64, w: f64, lambda0: f64, eta: f64) -> Result<RhoBound> {
    ensure(lambda > 0.0 && lambda < 1.0, || format!("lambda must lie in (0, 1), got {lambda}"))?;
    ensure(lambda0 > 0.0 && lambda0 < lambda, || format!("lambda0 must lie in (0, lambda), got {lambda0}"))?;
    ensure(eta > 0.0 && eta < 1.0, || format!("eta must lie in (0, 1), got {eta}"))?;
    ensure(v1 > 0.0 && v1 < 1.0 && v2 > 0.0, || format!("need 0 < v1 < 1 and v2 > 0, got ({v1}, {v2})"))?;
    let w_min = 2.0 * v2 / (1.0 - v1);
    ensure(w > w_min, || format!("radius {w} must exceed 2 v2 / (1 - v1) = {w_min}"))?;
    let gamma = lambda0 / v2;
    let v0 = eta + (1.0 - eta) * (v1 + 2.0 * v2 / w);
    let mass_branch = 1.0 - (lambda - lambda0);
    let drift_branch = (2.0 + w * gamma * v0) / (2.0 + w * gamma);
    let rho = mass_branch.max(drift_branch);
    Ok(RhoBound { rho, mass_branch, drift_branch, below_half: rho < 0.5 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErgodicityCertificate {
    pub lambda: f64,
    pub w: f64,
    pub rho: f64,
    pub below_half: bool,
    pub lambda0: f64,
    pub eta: f64,
    pub v0: f64,
    pub gamma: f64,
    pub v1: f64,
    pub v2: f64,
}

/// Smallest rate over a coarse grid of (w, lambda0, eta) for the OU model with
/// constant division rate b, uniform fragmentation and inward-drift radius r2.
pub fn ou_certificate(beta: f64, sigma: f64, b: f64, eps: f64, radius: f64) -> Result<ErgodicityCertificate> {
    ensure(radius > 0.0, || format!("radius must be positive, got {radius}"))?;
    let spec = ModelSpec::new(
        crate::sde_flow::DiffusionSpec::ornstein_uhlenbeck(beta, sigma),
        crate::branching_sim::DivisionRate::constant(b),
        Fragmentation::uniform(eps),
    )
    .with_bounds(crate::sde_flow::DiffusionBounds { growth: beta, radius, sigma_min: sigma, sigma_max: sigma });
    let DriftConstants { v1, v2 } = drift_constants(&spec)?;
    let w_min = 2.0 * v2 / (1.0 - v1);
    let mut best: Option<ErgodicityCertificate> = None;
    for i in 1..=80 {
        let w = w_min * 10f64.powf(4.0 * i as f64 / 80.0);
        let lambda = ou_minorisation_lambda(beta, sigma, b, eps, w)?;
        if !(lambda > 0.0 && lambda < 1.0) {
            continue;
        }
        for j in 1..50 {
            let lambda0 = lambda * j as f64 / 50.0;
            for k in 1..50 {
                let eta = k as f64 / 50.0;
                let r = ou_rho_bound(lambda, v1, v2, w, lambda0, eta)?;
                if best.is_none_or(|c| r.rho < c.rho) {
                    let gamma = lambda0 / v2;
                    let v0 = eta + (1.0 - eta) * (v1 + 2.0 * v2 / w);
                    best = Some(ErgodicityCertificate {
                        lambda,
                        w,
                        rho: r.rho,
                        below_half: r.below_half,
                        lambda0,
                        eta,
                        v0,
                        gamma,
                        v1,
                        v2,
                    });
                }
            }
        }
    }
    best.ok_or_else(|| Error::Numeric("no admissible radius found for the certificate".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::branching_sim::DivisionRate;
    use crate::sde_flow::{DiffusionBounds, DiffusionSpec};

    #[test]
    fn uniform_second_moment() {
        for eps in [0.01, 0.1, 0.3] {
            let m = fragmentation_second_moment(&Fragmentation::uniform(eps)).unwrap();
            assert!((m - (eps * eps - eps + 1.0) / 3.0).abs() < 1e-12);
        }
        let m = fragmentation_second_moment(&Fragmentation::uniform(0.5 - 1e-9)).unwrap();
        assert!((m - 0.25).abs() < 1e-8);
    }

    #[test]
    fn symmetric_kernel_moment_unchanged() {
        let k = Fragmentation::Linear { eps: 0.1, slope: 0.0 };
        let eps = k.eps();
        let direct = adaptive_simpson(|z| z * z * k.density(z), eps, 1.0 - eps, 1e-12);
        assert!((fragmentation_second_moment(&k).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn drift_constants_need_bounds() {
        let spec = ModelSpec::new(
            DiffusionSpec::ornstein_uhlenbeck(1.0, 1.0),
            DivisionRate::constant(1.0),
            Fragmentation::uniform(0.1),
        );
        assert!(matches!(drift_constants(&spec), Err(Error::Configuration(_))));
        let spec = spec.with_bounds(DiffusionBounds { growth: 1.0, radius: 0.5, sigma_min: 1.0, sigma_max: 1.0 });
        let c = drift_constants(&spec).unwrap();
        let m = (0.01 - 0.1 + 1.0) / 3.0;
        assert!((c.v1 - m).abs() < 1e-12);
        assert!((c.v2 - m * (2.0 * 0.5 * 2.0 + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn rho_branches() {
        let r = ou_rho_bound(0.9, 0.3, 1.0, 10.0, 0.3, 0.5).unwrap();
        assert!((r.mass_branch - 0.4).abs() < 1e-15);
        let (eta, v1) = (0.2, 0.3);
        let r = ou_rho_bound(0.9, v1, 1.0, 1e12, 0.3, eta).unwrap();
        assert!((r.drift_branch - (eta + (1.0 - eta) * v1)).abs() < 1e-9);
        assert!(ou_rho_bound(0.9, 0.3, 1.0, 2.0, 0.3, 0.5).is_err());
        assert!(ou_rho_bound(0.9, 0.3, 1.0, 10.0, 0.95, 0.5).is_err());
    }

    #[test]
    fn lambda_grows_with_radius_on_small_balls() {
        let l: Vec<f64> =
            [1.0, 2.0, 3.0].iter().map(|&w| ou_minorisation_lambda(1.0, 1.0, 0.05, 0.1, w).unwrap()).collect();
        assert!(l[0] < l[1] && l[1] < l[2], "{l:?}");
    }
}
