//! Fundamental solution Z(x, u) = int_0^inf (rho_t(x, u) - pi(u)) dt of the
//! unit-volatility reflected motion with drift mu on [0, len], pi being the
//! stationary density. In eigenfunctions it is the sum over n >= 1 of
//! (2/len) e^{mu (u - x)} g(n, x) g(n, u) 2 / a(n)^2, which converges slowly;
//! here it is evaluated from the ODE it solves:
//! (1/2) Z'' + mu Z' = pi(u) - delta_u in x, Z'(0) = Z'(len) = 0,
//! int pi(x) Z(x, u) dx = 0.

use std::f64::consts::PI;

use crate::numerics::GaussLegendre;

/// (s + (e^{-2 mu s} - 1)/(2 mu)) / mu, which tends to s^2 as mu -> 0.
fn psi(mu: f64, s: f64) -> f64 {
    let w = 2.0 * mu * s;
    if w.abs() < 0.1 {
        // sum_{k>=2} (-1)^k 2^{k-1} mu^{k-2} s^k / k!
        let mut term = s * s;
        let mut sum = term;
        for k in 3..16 {
            term *= -w / k as f64;
            sum += term;
        }
        sum
    } else {
        (s + (-w).exp_m1() / (2.0 * mu)) / mu
    }
}

/// (e^{-2 mu s} - 1) / (2 mu), or -s at mu = 0.
fn em(mu: f64, s: f64) -> f64 {
    if mu == 0.0 {
        -s
    } else {
        (-2.0 * mu * s).exp_m1() / (2.0 * mu)
    }
}

/// (e^{2 mu s} - 1) / mu, or 2 s at mu = 0.
fn ep(mu: f64, s: f64) -> f64 {
    if mu == 0.0 {
        2.0 * s
    } else {
        (2.0 * mu * s).exp_m1() / mu
    }
}

pub(super) fn stationary_density(mu: f64, len: f64, u: f64) -> f64 {
    let s = 2.0 * mu * len;
    if s.abs() < 1e-10 {
        1.0 / len
    } else if mu > 0.0 {
        2.0 * mu * (2.0 * mu * (u - len)).exp() / (-(-s).exp_m1())
    } else {
        2.0 * mu * (2.0 * mu * u).exp() / s.exp_m1()
    }
}

const CHEB_DEGREE: usize = 48;

/// Z(x, u) = C(u) + h(x, u), with h explicit and C fixed by the zero
/// stationary mean; C is smooth and held as a Chebyshev interpolant.
#[derive(Debug, Clone)]
pub(super) struct Potential {
    mu: f64,
    len: f64,
    cheb: Vec<f64>,
}

impl Potential {
    pub fn new(mu: f64, len: f64) -> Self {
        let rule = GaussLegendre::new(32);
        let n = CHEB_DEGREE;
        let values: Vec<f64> = (0..n)
            .map(|k| {
                let t = (PI * (k as f64 + 0.5) / n as f64).cos();
                let u = 0.5 * len * (1.0 - t);
                let f = |x: f64| stationary_density(mu, len, x) * h(mu, len, x, u);
                -(rule.integrate(f, 0.0, u) + rule.integrate(f, u, len))
            })
            .collect();
        let cheb = (0..n)
            .map(|j| {
                let s: f64 = values
                    .iter()
                    .enumerate()
                    .map(|(k, v)| v * (PI * j as f64 * (k as f64 + 0.5) / n as f64).cos())
                    .sum();
                if j == 0 { s / n as f64 } else { 2.0 * s / n as f64 }
            })
            .collect();
        Self { mu, len, cheb }
    }

    fn offset(&self, u: f64) -> f64 {
        // Clenshaw on t = 1 - 2u/len, matching the node placement
        let t = 1.0 - 2.0 * u / self.len;
        let (mut b1, mut b2) = (0.0, 0.0);
        for &c in self.cheb.iter().skip(1).rev() {
            let b0 = 2.0 * t * b1 - b2 + c;
            b2 = b1;
            b1 = b0;
        }
        t * b1 - b2 + self.cheb[0]
    }

    pub fn eval(&self, x: f64, u: f64) -> f64 {
        self.offset(u) + h(self.mu, self.len, x, u)
    }

    /// int_lo^hi Z(x, u) / u du, for 0 < lo < hi <= len.
    pub fn integral_over_u(&self, x: f64, lo: f64, hi: f64, rule: &GaussLegendre) -> f64 {
        let mut total = 0.0;
        let mut piece = |a: f64, b: f64| {
            if b <= a {
                return;
            }
            // u = e^s: smooth in s on each side of the kink at u = x
            let (sa, sb) = (a.ln(), b.ln());
            let panels = ((sb - sa) / 1.0).ceil().max(1.0) as usize;
            let w = (sb - sa) / panels as f64;
            for p in 0..panels {
                let lo = sa + p as f64 * w;
                let hi = if p + 1 == panels { sb } else { lo + w };
                total += rule.integrate(|s| self.eval(x, s.exp()), lo, hi);
            }
        };
        if x > lo && x < hi {
            piece(lo, x);
            piece(x, hi);
        } else {
            piece(lo, hi);
        }
        total
    }
}

/// Explicit part of Z, zero at x = 0 for x <= u.
fn h(mu: f64, len: f64, x: f64, u: f64) -> f64 {
    let s = stationary_density(mu, len, u);
    if x <= u {
        s * psi(mu, x)
    } else {
        s * (psi(mu, u) + psi(mu, x - u) + ep(mu, len - u) * em(mu, x - u))
    }
}
