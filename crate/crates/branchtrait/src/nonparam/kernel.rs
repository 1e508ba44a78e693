use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::numerics::{adaptive_simpson, legendre_with_derivative, GaussLegendre};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Gaussian,
    Polynomial,
}

/// Highest polynomial order offered; beyond it the kernel oscillates wildly.
pub const MAX_POLYNOMIAL_ORDER: usize = 20;

/// Smoothing kernel G with its moment table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub order: usize,
    /// Support radius; `None` for the Gaussian.
    pub support: Option<f64>,
    /// int x^l G(x) dx for l = 0..=order.
    pub moments: Vec<f64>,
    /// Set when the kernel is not compactly supported.
    pub unbounded_support: bool,
    /// Legendre coefficients on [-1, 1] for the polynomial kind.
    coefficients: Vec<f64>,
}

/// Gaussian tails beyond this many bandwidths are dropped (relative mass < 1e-16).
const GAUSSIAN_CUTOFF: f64 = 8.5;

pub fn make_kernel(kind: KernelKind, order: usize) -> Result<KernelSpec> {
    let mut k = match kind {
        KernelKind::Gaussian => {
            ensure(order <= 1, || format!("the Gaussian kernel has order 1 at most, asked for {order}"))?;
            KernelSpec {
                kind,
                order,
                support: None,
                moments: Vec::new(),
                unbounded_support: true,
                coefficients: Vec::new(),
            }
        }
        KernelKind::Polynomial => {
            ensure(order <= MAX_POLYNOMIAL_ORDER, || {
                format!("polynomial kernels go up to order {MAX_POLYNOMIAL_ORDER}, asked for {order}")
            })?;
            // G = sum_j phi_j(0) phi_j with phi_j the orthonormal Legendre polynomials,
            // so int x^l G = (x^l)(0) for every l <= order
            let coefficients = (0..=order)
                .map(|j| (2 * j + 1) as f64 / 2.0 * legendre_with_derivative(j, 0.0).0)
                .collect();
            KernelSpec {
                kind,
                order,
                support: Some(1.0),
                moments: Vec::new(),
                unbounded_support: false,
                coefficients,
            }
        }
    };
    k.moments = (0..=order).map(|l| k.moment(l)).collect();
    Ok(k)
}

impl KernelSpec {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self.kind {
            KernelKind::Gaussian => {
                if x.abs() > GAUSSIAN_CUTOFF {
                    0.0
                } else {
                    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
                }
            }
            KernelKind::Polynomial => {
                if x.abs() > 1.0 {
                    return 0.0;
                }
                // Legendre recurrence
                let (mut p0, mut p1) = (1.0, x);
                let mut sum = self.coefficients[0];
                if self.coefficients.len() > 1 {
                    sum += self.coefficients[1] * x;
                }
                for (n, c) in self.coefficients.iter().enumerate().skip(2) {
                    let n = n as f64;
                    let p2 = ((2.0 * n - 1.0) * x * p1 - (n - 1.0) * p0) / n;
                    sum += c * p2;
                    p0 = p1;
                    p1 = p2;
                }
                sum
            }
        }
    }

    /// G_h(x) = G(x / h) / h.
    #[inline]
    pub fn scaled(&self, x: f64, h: f64) -> f64 {
        self.eval(x / h) / h
    }

    /// Radius (in bandwidths) outside which the kernel is zero.
    pub fn reach(&self) -> f64 {
        self.support.unwrap_or(GAUSSIAN_CUTOFF)
    }

    /// int x^l G(x) dx by quadrature.
    pub fn moment(&self, l: usize) -> f64 {
        match self.kind {
            KernelKind::Gaussian => {
                let f = |x: f64| x.powi(l as i32) * self.eval(x);
                adaptive_simpson(f, -GAUSSIAN_CUTOFF, 0.0, 1e-12) + adaptive_simpson(f, 0.0, GAUSSIAN_CUTOFF, 1e-12)
            }
            KernelKind::Polynomial => {
                let rule = GaussLegendre::new(self.order / 2 + l / 2 + 2);
                rule.integrate(|x| x.powi(l as i32) * self.eval(x), -1.0, 1.0)
            }
        }
    }
}
