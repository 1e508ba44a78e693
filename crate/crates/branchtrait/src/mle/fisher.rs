use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::likelihood::Q_FLOOR;
use super::{QEvaluator, RateFamily};
use crate::error::{Error, Result};

/// Largest accepted condition number of the information matrix.
pub const MAX_CONDITION: f64 = 1e12;
/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.96;
/// Relative step of the central differences in theta.
pub const FD_STEP: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherEstimate {
    /// Row-major d x d matrix.
    pub psi: Vec<Vec<f64>>,
    pub condition: f64,
    /// 95% interval per coordinate.
    pub ci: Vec<(f64, f64)>,
    pub pairs: usize,
}

/// Psi^ = n^-1 sum s s^T over the per-pair scores s = d log q / d theta at
/// theta^, and the intervals theta^_i +- 1.96 sqrt((Psi^-1)_ii / n).
pub fn fisher_from_scores(theta_hat: &[f64], scores: &[Vec<f64>]) -> Result<FisherEstimate> {
    let d = theta_hat.len();
    let n = scores.len();
    if d == 0 || n == 0 {
        return Err(Error::Data("need a parameter and at least one score".into()));
    }
    let mut psi = DMatrix::<f64>::zeros(d, d);
    for s in scores {
        if s.len() != d {
            return Err(Error::Data(format!("score of length {} for a {d}-parameter model", s.len())));
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite score".into()));
        }
        for i in 0..d {
            for j in 0..d {
                psi[(i, j)] += s[i] * s[j];
            }
        }
    }
    psi /= n as f64;
    let eigen = SymmetricEigen::new(psi.clone()).eigenvalues;
    let (lo, hi) = eigen.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v.abs()), hi.max(v.abs())));
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::NonInvertibleInformation(condition));
    }
    let inverse = psi.clone().try_inverse().ok_or(Error::NonInvertibleInformation(condition))?;
    let ci = (0..d)
        .map(|i| {
            let half = Z_95 * (inverse[(i, i)] / n as f64).sqrt();
            (theta_hat[i] - half, theta_hat[i] + half)
        })
        .collect();
    let psi = (0..d).map(|i| (0..d).map(|j| psi[(i, j)]).collect()).collect();
    Ok(FisherEstimate { psi, condition, ci, pairs: n })
}

/// Fisher estimate from a per-pair score function.
pub fn fisher_info_estimate<G>(theta_hat: &[f64], pairs: &[(f64, f64)], grad: G) -> Result<FisherEstimate>
where
    G: Fn(&[f64], f64, f64) -> Result<Vec<f64>> + Sync,
{
    let scores: Vec<Vec<f64>> = pairs.par_iter().map(|&(x, y)| grad(theta_hat, x, y)).collect::<Result<_>>()?;
    fisher_from_scores(theta_hat, &scores)
}

/// d log q_theta / d theta at every pair: analytic when the evaluator offers
/// it, otherwise central differences with step 1e-4 |theta| (one-sided at the
/// edges of the family box). Floored q values contribute a zero score.
pub fn scores(
    evaluator: &dyn QEvaluator,
    family: &RateFamily,
    theta: f64,
    pairs: &[(f64, f64)],
    replicate: u64,
) -> Result<Vec<f64>> {
    if let Some(values) = evaluator.q_and_dq(theta, pairs) {
        return Ok(values?.into_iter().map(|(q, g)| if q > Q_FLOOR { g / q } else { 0.0 }).collect());
    }
    let h = FD_STEP * if theta != 0.0 { theta.abs() } else { 1.0 };
    let up = (theta + h).min(family.theta_max);
    let down = (theta - h).max(family.theta_min);
    if up <= down {
        return Err(Error::Parameter("the parameter box is too narrow for a difference quotient".into()));
    }
    let rows = evaluator.evaluate_many(&[down, up], pairs, replicate)?;
    let log = |q: f64| q.max(Q_FLOOR).ln();
    Ok(rows[0]
        .iter()
        .zip(&rows[1])
        .map(|(&a, &b)| if a > Q_FLOOR && b > Q_FLOOR { (log(b) - log(a)) / (up - down) } else { 0.0 })
        .collect())
}
