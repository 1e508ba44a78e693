use serde::{Deserialize, Serialize};

use super::QEvaluator;
use crate::error::{Error, Result};

/// q values below this are raised to it before taking logs.
pub const Q_FLOOR: f64 = 1e-12;
/// Share of floored evaluations above which the likelihood is flagged.
pub const FLOOR_WARNING_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLikelihood {
    pub theta: f64,
    pub value: f64,
    pub floored: usize,
    pub evaluations: usize,
}

impl LogLikelihood {
    /// More than 1% of the q evaluations hit the floor.
    pub fn unreliable(&self) -> bool {
        self.floored as f64 > FLOOR_WARNING_FRACTION * self.evaluations as f64
    }

    pub fn warning(&self) -> Option<String> {
        self.unreliable().then(|| {
            format!(
                "unreliable likelihood at theta={}: {} of {} q values below {Q_FLOOR:e}",
                self.theta, self.floored, self.evaluations
            )
        })
    }
}

/// Sum of log q over the pairs with the floor applied.
pub fn sum_log_q(theta: f64, values: &[f64]) -> Result<LogLikelihood> {
    let mut value = 0.0;
    let mut floored = 0;
    for &q in values {
        if q.is_nan() {
            return Err(Error::Numeric(format!("q evaluated to NaN at theta={theta}")));
        }
        if q < Q_FLOOR {
            floored += 1;
            value += Q_FLOOR.ln();
        } else {
            value += q.ln();
        }
    }
    Ok(LogLikelihood { theta, value, floored, evaluations: values.len() })
}

/// sum over the observed pairs of log q_theta(parent, child).
pub fn log_likelihood(theta: f64, pairs: &[(f64, f64)], evaluator: &dyn QEvaluator) -> Result<LogLikelihood> {
    sum_log_q(theta, &evaluator.evaluate(theta, pairs, 0)?)
}
