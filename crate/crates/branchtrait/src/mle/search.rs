use std::io::Write;

use serde::{Deserialize, Serialize};

use super::fisher::{fisher_from_scores, scores, FisherEstimate};
use super::likelihood::sum_log_q;
use super::{QEvaluator, RateFamily};
use crate::error::{Error, Result};
use crate::numerics::mean_and_std_error;

/// Initial window and step of the grid search, and when to stop refining.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPlan {
    pub theta_min: f64,
    pub theta_max: f64,
    pub step: f64,
    /// Refinement halves the step while it stays at or above this value; a
    /// floor equal to `step` means a single grid.
    pub step_floor: f64,
    #[serde(default = "default_max_levels")]
    pub max_levels: usize,
    /// Re-evaluations of the window's argmax used to size the noise of a
    /// stochastic evaluator.
    #[serde(default = "default_reseeds")]
    pub noise_reseeds: u64,
    /// Stream of the main evaluations; reseeds use the following ones.
    #[serde(default)]
    pub replicate: u64,
    #[serde(default = "default_true")]
    pub fisher: bool,
}

fn default_max_levels() -> usize {
    12
}

fn default_reseeds() -> u64 {
    5
}

fn default_true() -> bool {
    true
}

impl GridPlan {
    pub fn single(theta_min: f64, theta_max: f64, step: f64) -> Self {
        Self {
            theta_min,
            theta_max,
            step,
            step_floor: step,
            max_levels: default_max_levels(),
            noise_reseeds: default_reseeds(),
            replicate: 0,
            fisher: true,
        }
    }

    fn validate(&self, family: &RateFamily) -> Result<()> {
        if !(self.step > 0.0 && self.step_floor > 0.0 && self.theta_min <= self.theta_max) {
            return Err(Error::Parameter(format!(
                "grid plan needs theta_min <= theta_max and positive steps, got [{}, {}] step {} floor {}",
                self.theta_min, self.theta_max, self.step, self.step_floor
            )));
        }
        if !(family.contains(self.theta_min) && family.contains(self.theta_max)) {
            return Err(Error::Parameter(format!(
                "search window [{}, {}] leaves the parameter box [{}, {}]",
                self.theta_min, self.theta_max, family.theta_min, family.theta_max
            )));
        }
        if self.max_levels == 0 {
            return Err(Error::Parameter("need at least one grid level".into()));
        }
        Ok(())
    }
}

/// Grid points lo, lo + step, ..., with hi always included.
fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step * (1.0 + 1e-12)).floor() as usize;
    let mut g: Vec<f64> = (0..=n).map(|k| lo + k as f64 * step).collect();
    if hi - g[n] > 1e-9 * step {
        g.push(hi);
    } else {
        g[n] = hi;
    }
    g
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub level: usize,
    pub theta: f64,
    pub log_likelihood: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefinementLevel {
    pub step: f64,
    pub lo: f64,
    pub hi: f64,
    pub argmax: f64,
    /// max - min of the log-likelihood over the window.
    pub range: f64,
    /// Standard deviation of the argmax's log-likelihood across reseeds
    /// (stochastic evaluators only).
    pub noise: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MleResult {
    pub theta_hat: f64,
    pub contrast: f64,
    pub trace: Vec<TracePoint>,
    pub refinement: Vec<RefinementLevel>,
    pub fisher: Option<FisherEstimate>,
    /// Fisher-based 95% interval.
    pub ci: Option<(f64, f64)>,
    pub pairs: usize,
    pub warnings: Vec<String>,
}

impl MleResult {
    /// Plot data: header "level,theta,loglik".
    pub fn write_trace_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(["level", "theta", "loglik"]).map_err(io)?;
        for p in &self.trace {
            w.write_record([p.level.to_string(), p.theta.to_string(), p.log_likelihood.to_string()]).map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Index of the largest value; the first one wins ties.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Grid maximisation of the log-likelihood with progressive refinement.
///
/// Each level evaluates the window, takes the argmax (smallest theta on ties),
/// then halves the step and re-centres a window of half the width on the
/// argmax, clipped to the parameter box. Refinement stops at the step floor,
/// after `max_levels` levels, or when a stochastic evaluator's noise (3 sd of
/// the reseeded argmax) exceeds the spread of the window.
pub fn grid_mle(pairs: &[(f64, f64)], family: &RateFamily, evaluator: &dyn QEvaluator, plan: &GridPlan) -> Result<MleResult> {
    plan.validate(family)?;
    if pairs.is_empty() {
        return Err(Error::Data("no pairs to estimate from".into()));
    }
    let (mut lo, mut hi, mut step) = (plan.theta_min, plan.theta_max, plan.step);
    let mut trace = Vec::new();
    let mut refinement: Vec<RefinementLevel> = Vec::new();
    let mut warnings = Vec::new();
    let mut best = (f64::NAN, f64::NEG_INFINITY);
    for level in 0..plan.max_levels {
        let thetas = grid(lo, hi, step);
        let rows = evaluator.evaluate_many(&thetas, pairs, plan.replicate)?;
        let mut values = Vec::with_capacity(thetas.len());
        for (&t, row) in thetas.iter().zip(&rows) {
            let ll = sum_log_q(t, row)?;
            if let Some(w) = ll.warning() {
                warnings.push(w);
            }
            trace.push(TracePoint { level, theta: t, log_likelihood: ll.value });
            values.push(ll.value);
        }
        let k = argmax(&values);
        best = (thetas[k], values[k]);
        let range = values.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b)) - values.iter().fold(f64::INFINITY, |a, &b| a.min(b));
        let noise = if evaluator.is_stochastic() && plan.noise_reseeds >= 2 {
            let reseeded: Vec<f64> = (1..=plan.noise_reseeds)
                .map(|r| sum_log_q(best.0, &evaluator.evaluate(best.0, pairs, plan.replicate + r)?).map(|l| l.value))
                .collect::<Result<_>>()?;
            let (_, se) = mean_and_std_error(&reseeded);
            Some(se * (reseeded.len() as f64).sqrt())
        } else {
            None
        };
        refinement.push(RefinementLevel { step, lo, hi, argmax: best.0, range, noise });
        if let Some(sd) = noise {
            if range < 3.0 * sd {
                warnings.push(format!("refinement stopped at step {step}: contrast spread {range:.3e} below 3 x noise {sd:.3e}"));
                break;
            }
        }
        if step / 2.0 < plan.step_floor * (1.0 - 1e-12) || level + 1 == plan.max_levels {
            break;
        }
        let half = (hi - lo) / 4.0;
        step /= 2.0;
        lo = (best.0 - half).max(family.theta_min);
        hi = (best.0 + half).min(family.theta_max);
    }
    let last = refinement.last().expect("at least one level");
    if best.0 == last.lo || best.0 == last.hi {
        warnings.push(format!("argmax {} on the boundary of the search window [{}, {}]", best.0, last.lo, last.hi));
    }
    let (fisher, ci) = if plan.fisher {
        match scores(evaluator, family, best.0, pairs, plan.replicate)
            .and_then(|s| fisher_from_scores(&[best.0], &s.into_iter().map(|v| vec![v]).collect::<Vec<_>>()))
        {
            Ok(f) => {
                let ci = f.ci[0];
                (Some(f), Some(ci))
            }
            Err(e) => {
                warnings.push(format!("no Fisher interval: {e}"));
                (None, None)
            }
        }
    } else {
        (None, None)
    };
    Ok(MleResult { theta_hat: best.0, contrast: best.1, trace, refinement, fisher, ci, pairs: pairs.len(), warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mle::{FnEvaluator, QuadraticEvaluator, RateShape};
    use crate::sde_flow::Domain;

    fn family() -> RateFamily {
        RateFamily::new(RateShape::Constant, 0.5, 5.0, Domain::Reflected { length: 1.0 }).unwrap()
    }

    #[test]
    fn grid_includes_both_ends() {
        assert_eq!(grid(1.8, 2.2, 0.05).len(), 9);
        assert_eq!(*grid(1.8, 2.2, 0.05).last().unwrap(), 2.2);
        assert_eq!(grid(0.0, 1.0, 0.3), vec![0.0, 0.3, 0.6, 0.8999999999999999, 1.0]);
    }

    #[test]
    fn quadratic_contrast_is_maximised_at_its_centre() {
        let ev = QuadraticEvaluator { center: 2.0, curvature: 1.0 };
        let plan = GridPlan { step_floor: 0.01, ..GridPlan::single(1.0, 3.3, 0.4) };
        let r = grid_mle(&[(0.1, 0.1); 10], &family(), &ev, &plan).unwrap();
        assert!((r.theta_hat - 2.0).abs() <= 0.01, "{}", r.theta_hat);
        // monotone steps, each window holding the previous argmax
        for w in r.refinement.windows(2) {
            assert!(w[1].step < w[0].step);
            assert!(w[1].lo <= w[0].argmax && w[0].argmax <= w[1].hi);
        }
        let f = r.fisher.unwrap();
        assert!(f.psi[0][0] >= 0.0);
    }

    #[test]
    fn ties_go_to_the_smallest_theta() {
        let ev = FnEvaluator(|_, _, _| 0.5);
        let mut plan = GridPlan::single(1.0, 2.0, 0.25);
        plan.fisher = false;
        let r = grid_mle(&[(0.1, 0.1)], &family(), &ev, &plan).unwrap();
        assert_eq!(r.theta_hat, 1.0);
        assert!(r.warnings.iter().any(|w| w.contains("boundary")));
    }

    #[test]
    fn flat_contrast_has_no_interval() {
        let ev = FnEvaluator(|_, _, _| 0.5);
        let r = grid_mle(&[(0.1, 0.1)], &family(), &ev, &GridPlan::single(1.0, 2.0, 0.25)).unwrap();
        assert!(r.fisher.is_none() && r.warnings.iter().any(|w| w.contains("Fisher")));
    }

    #[test]
    fn window_outside_the_box_is_rejected() {
        let ev = QuadraticEvaluator { center: 2.0, curvature: 1.0 };
        assert!(grid_mle(&[(0.1, 0.1)], &family(), &ev, &GridPlan::single(0.1, 2.0, 0.5)).is_err());
    }

    #[test]
    fn trace_csv_has_one_row_per_evaluation() {
        let ev = QuadraticEvaluator { center: 2.0, curvature: 1.0 };
        let r = grid_mle(&[(0.1, 0.1)], &family(), &ev, &GridPlan::single(1.8, 2.2, 0.05)).unwrap();
        let mut buf = Vec::new();
        r.write_trace_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1 + r.trace.len());
        let json = serde_json::to_string(&r).unwrap();
        assert_eq!(serde_json::from_str::<MleResult>(&json).unwrap(), r);
    }
}
