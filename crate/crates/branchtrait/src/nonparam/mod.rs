//! Kernel estimators of the invariant density and of the transition density
//! from observed (parent, child) pairs, with bandwidth rules and spline
//! interpolation of tabulated estimates.

mod estimators;
mod interp;
mod kernel;

pub use estimators::{estimate_nu, estimate_q, Bandwidths, DensityEstimate, TransitionEstimate};
pub use interp::{interpolate_grid, GridInterpolator};
pub use kernel::{make_kernel, KernelKind, KernelSpec, MAX_POLYNOMIAL_ORDER};

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

/// Denominator floor used by default.
pub const DEFAULT_THRESHOLD: f64 = 1e-6;
/// Default number of grid points per axis.
pub const DEFAULT_GRID_POINTS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum BandwidthMode {
    /// Rate-optimal exponents for smoothness alpha (in x) and beta (in y).
    Theoretical { alpha: f64, beta: f64 },
    /// h = 2 n^{-1/3}, h1 = h2 = h^{1/2} / 10.
    Practical,
}

/// Bandwidths for a sample of `n` observations.
pub fn bandwidth_rule(n: usize, mode: BandwidthMode) -> Result<Bandwidths> {
    ensure(n >= 1, || "bandwidths need at least one observation".into())?;
    let n = n as f64;
    match mode {
        BandwidthMode::Theoretical { alpha, beta } => {
            ensure(alpha > 0.0 && beta > 0.0, || format!("smoothness must be positive, got ({alpha}, {beta})"))?;
            let low = alpha.min(beta);
            // effective anisotropic smoothness: 1/s = 1/min(alpha, beta) + 1/beta
            let s = 1.0 / (1.0 / low + 1.0 / beta);
            Ok(Bandwidths {
                h: n.powf(-1.0 / (2.0 * beta + 1.0)),
                h1: n.powf(-s / (low * (2.0 * s + 1.0))),
                h2: n.powf(-s / (beta * (2.0 * s + 1.0))),
            })
        }
        BandwidthMode::Practical => {
            let h = 2.0 * n.powf(-1.0 / 3.0);
            let h12 = 0.1 * h.sqrt();
            Ok(Bandwidths { h, h1: h12, h2: h12 })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theoretical_exponents() {
        let b = bandwidth_rule(1000, BandwidthMode::Theoretical { alpha: 1.0, beta: 1.0 }).unwrap();
        assert!((b.h - 0.1).abs() < 1e-12);
        let quarter = 1000f64.powf(-0.25);
        assert!((b.h1 - quarter).abs() < 1e-12 && (b.h2 - quarter).abs() < 1e-12);
        assert!(bandwidth_rule(1000, BandwidthMode::Theoretical { alpha: 0.0, beta: 1.0 }).is_err());
    }

    #[test]
    fn practical_constants() {
        let b = bandwidth_rule(32767, BandwidthMode::Practical).unwrap();
        assert!((b.h - 0.0625).abs() < 1e-4, "{}", b.h);
        assert!((b.h1 - 0.025).abs() < 1e-4 && b.h1 == b.h2);
    }
}
