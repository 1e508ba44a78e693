use rayon::prelude::*;

use super::RateFamily;
use crate::branching_sim::{extract_pairs, generate_tree, subsample_incomplete_tree, ModelSpec, TreeOptions};
use crate::error::{Error, Result};
use crate::nonparam::{bandwidth_rule, estimate_q, make_kernel, BandwidthMode, GridInterpolator, KernelKind};
use crate::numerics::linspace;
use crate::sde_flow::Domain;
use crate::seed::{derive_seed, stream};
use crate::transition_kernel::{mc_transition_density, McOptions, SpectralQ, SpectralTable};

/// Source of q_theta(x, y) at the observed pairs.
///
/// `replicate` selects the random stream of Monte Carlo based evaluators; the
/// same replicate gives common random numbers across theta. Deterministic
/// evaluators ignore it.
pub trait QEvaluator: Sync {
    fn evaluate(&self, theta: f64, pairs: &[(f64, f64)], replicate: u64) -> Result<Vec<f64>>;

    /// One row per theta. Override when work can be shared across theta.
    fn evaluate_many(&self, thetas: &[f64], pairs: &[(f64, f64)], replicate: u64) -> Result<Vec<Vec<f64>>> {
        thetas.iter().map(|&t| self.evaluate(t, pairs, replicate)).collect()
    }

    /// q_theta with its analytic theta-derivative at every pair, when available.
    fn q_and_dq(&self, _theta: f64, _pairs: &[(f64, f64)]) -> Option<Result<Vec<(f64, f64)>>> {
        None
    }

    fn is_stochastic(&self) -> bool {
        false
    }
}

/// Exact q for reflected Brownian motion with constant drift and the constant
/// rate family B(theta, x) = theta.
pub struct SpectralEvaluator {
    table: SpectralTable,
}

impl SpectralEvaluator {
    pub fn new(table: SpectralTable) -> Self {
        Self { table }
    }

    fn rows(&self, thetas: &[f64], pairs: &[(f64, f64)]) -> Result<Vec<Vec<SpectralQ>>> {
        let per_pair: Vec<Vec<SpectralQ>> = pairs
            .par_iter()
            .map(|&(x, y)| {
                let mut out = vec![SpectralQ { q: 0.0, dq_dtheta: 0.0, clamped: false, tail_warning: false }; thetas.len()];
                self.table.q_and_grad_many(thetas, x, y, &mut out)?;
                Ok(out)
            })
            .collect::<Result<_>>()?;
        Ok((0..thetas.len()).map(|k| per_pair.iter().map(|row| row[k]).collect()).collect())
    }
}

impl QEvaluator for SpectralEvaluator {
    fn evaluate(&self, theta: f64, pairs: &[(f64, f64)], replicate: u64) -> Result<Vec<f64>> {
        Ok(self.evaluate_many(&[theta], pairs, replicate)?.remove(0))
    }

    fn evaluate_many(&self, thetas: &[f64], pairs: &[(f64, f64)], _replicate: u64) -> Result<Vec<Vec<f64>>> {
        Ok(self.rows(thetas, pairs)?.into_iter().map(|row| row.iter().map(|s| s.q).collect()).collect())
    }

    fn q_and_dq(&self, theta: f64, pairs: &[(f64, f64)]) -> Option<Result<Vec<(f64, f64)>>> {
        Some(self.rows(&[theta], pairs).map(|mut r| r.remove(0).iter().map(|s| (s.q, s.dq_dtheta)).collect()))
    }
}

/// Monte Carlo q at each pair, for any diffusion and rate family. Every pair
/// draws its paths from a stream fixed by (seed, replicate, pair index), so
/// neighbouring theta values share their noise.
pub struct McEvaluator {
    pub model: ModelSpec,
    pub family: RateFamily,
    pub options: McOptions,
    pub seed: u64,
}

impl QEvaluator for McEvaluator {
    fn evaluate(&self, theta: f64, pairs: &[(f64, f64)], replicate: u64) -> Result<Vec<f64>> {
        let mut spec = self.model.clone();
        spec.division = self.family.division_rate(theta)?;
        pairs
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| {
                let mut rng = stream(self.seed, &[replicate, i as u64]);
                Ok(mc_transition_density(&spec, x, y, &self.options, &mut rng)?.value)
            })
            .collect()
    }

    fn is_stochastic(&self) -> bool {
        true
    }
}

/// Settings of the auxiliary-dataset evaluator.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AuxiliaryPlan {
    pub depth: u32,
    pub x0: f64,
    pub dt: f64,
    pub grid_points: usize,
    pub threshold: f64,
    pub bandwidth: BandwidthMode,
}

/// q_theta from the quotient estimator on an auxiliary tree simulated at
/// theta, splined on a grid and read off at the observed pairs. The
/// auxiliary tree of a replicate uses the same seed for every theta.
pub struct NonparametricEvaluator {
    pub model: ModelSpec,
    pub family: RateFamily,
    pub plan: AuxiliaryPlan,
    pub seed: u64,
}

impl NonparametricEvaluator {
    fn axis(&self, pairs: &[(f64, f64)], aux: &[(f64, f64)]) -> Vec<f64> {
        let (lo, hi) = match self.model.diffusion.domain {
            Domain::Reflected { length } => (0.0, length),
            Domain::FullLine => pairs.iter().chain(aux).flat_map(|&(a, b)| [a, b]).fold(
                (f64::INFINITY, f64::NEG_INFINITY),
                |(lo, hi), v| (lo.min(v), hi.max(v)),
            ),
        };
        linspace(lo, hi, self.plan.grid_points)
    }
}

impl QEvaluator for NonparametricEvaluator {
    fn evaluate(&self, theta: f64, pairs: &[(f64, f64)], replicate: u64) -> Result<Vec<f64>> {
        let mut spec = self.model.clone();
        spec.division = self.family.division_rate(theta)?;
        let p = &self.plan;
        let tree = generate_tree(&spec, p.x0, p.depth, p.dt, derive_seed(self.seed, &[replicate]), TreeOptions::default())?;
        let aux = extract_pairs(&tree, &subsample_incomplete_tree(p.depth, 1.0)?)?;
        if aux.is_empty() {
            return Err(Error::Data("the auxiliary tree has no pairs".into()));
        }
        let axis = self.axis(pairs, &aux);
        let bw = bandwidth_rule(tree.node_count(), p.bandwidth)?;
        let kernel = make_kernel(KernelKind::Gaussian, 1)?;
        let est = estimate_q(&aux, &axis, &axis, bw, p.threshold, &kernel)?;
        let interp = GridInterpolator::new(est.xs, est.ys, est.values)?;
        pairs.par_iter().map(|&(x, y)| interp.eval(x, y)).collect()
    }

    fn is_stochastic(&self) -> bool {
        true
    }
}

/// q_theta(x, y) = exp(-curvature (theta - center)^2) for every pair, so the
/// log-likelihood is an exact downward parabola. Used to exercise the search.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct QuadraticEvaluator {
    pub center: f64,
    pub curvature: f64,
}

impl QEvaluator for QuadraticEvaluator {
    fn evaluate(&self, theta: f64, pairs: &[(f64, f64)], _replicate: u64) -> Result<Vec<f64>> {
        let v = (-self.curvature * (theta - self.center).powi(2)).exp();
        Ok(vec![v; pairs.len()])
    }

    fn q_and_dq(&self, theta: f64, pairs: &[(f64, f64)]) -> Option<Result<Vec<(f64, f64)>>> {
        let v = (-self.curvature * (theta - self.center).powi(2)).exp();
        Some(Ok(vec![(v, -2.0 * self.curvature * (theta - self.center) * v); pairs.len()]))
    }
}

/// Adapter for any closure (theta, x, y) -> q.
pub struct FnEvaluator<F>(pub F);

impl<F> QEvaluator for FnEvaluator<F>
where
    F: Fn(f64, f64, f64) -> f64 + Sync,
{
    fn evaluate(&self, theta: f64, pairs: &[(f64, f64)], _replicate: u64) -> Result<Vec<f64>> {
        Ok(pairs.iter().map(|&(x, y)| (self.0)(theta, x, y)).collect())
    }
}
