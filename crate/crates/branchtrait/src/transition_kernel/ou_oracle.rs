use crate::error::{ensure, Result};
use crate::numerics::adaptive_simpson;
use crate::sde_flow::ou_transition_density;

const RTOL: f64 = 1e-9;
const DISCOUNT_FLOOR: f64 = 1e-10;

/// q(x, y) for the OU process dX = -beta X dt + sigma dW, constant division
/// rate b and uniform fragmentation on [eps, 1 - eps]:
/// (b / (1 - 2 eps)) int_eps^{1-eps} z^{-1} int_0^inf e^{-b t} rho_t(x, y/z) dt dz.
pub fn ou_q_oracle(beta: f64, sigma: f64, b: f64, eps: f64, x: f64, y: f64) -> Result<f64> {
    ensure(beta > 0.0 && sigma > 0.0 && b > 0.0, || {
        format!("need beta, sigma, b > 0, got ({beta}, {sigma}, {b})")
    })?;
    ensure(eps > 0.0 && eps < 0.5, || format!("eps must lie in (0, 1/2), got {eps}"))?;
    ensure(x.is_finite() && y.is_finite(), || format!("non-finite state ({x}, {y})"))?;
    // t = s^2 keeps the integrand bounded at s = 0 when the level equals x
    let s_max = ((1.0 / DISCOUNT_FLOOR).ln() / b).sqrt();
    let resolvent = |v: f64| {
        let at_zero = if v == x { 2.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt()) } else { 0.0 };
        let inner = |s: f64| {
            if s <= 0.0 {
                at_zero
            } else {
                let t = s * s;
                2.0 * s * (-b * t).exp() * ou_transition_density(beta, sigma, x, v, t).unwrap_or(0.0)
            }
        };
        adaptive_simpson(inner, 0.0, s_max, RTOL)
    };
    let outer = |z: f64| resolvent(y / z) / z;
    let (lo, hi) = (eps, 1.0 - eps);
    // the resolvent has a kink where the level y/z crosses x
    let kink = if x != 0.0 { y / x } else { f64::NAN };
    let integral = if kink > lo && kink < hi {
        adaptive_simpson(outer, lo, kink, RTOL) + adaptive_simpson(outer, kink, hi, RTOL)
    } else {
        adaptive_simpson(outer, lo, hi, RTOL)
    };
    Ok(b / (1.0 - 2.0 * eps) * integral)
}
