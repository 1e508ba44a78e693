use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{drift_constants, DriftConstants};
use crate::branching_sim::{tagged_step, ChildChoice, LifetimeSampler, ModelSpec};
use crate::error::{ensure, Result};
use crate::numerics::mean_and_std_error;
use crate::seed::stream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftPoint {
    pub x: f64,
    /// Monte-Carlo estimate of QV(x).
    pub mean: f64,
    pub std_error: f64,
    /// v1 x^2 + v2.
    pub bound: f64,
    /// (mean - bound) / std_error; positive means the estimate exceeds the bound.
    pub excess_z: f64,
    pub violation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub v1: f64,
    pub v2: f64,
    pub samples: usize,
    pub points: Vec<DriftPoint>,
    pub violations: usize,
}

const MIN_SAMPLES: usize = 1000;
const VIOLATION_Z: f64 = 3.0;

/// Estimates QV(x) = E[Y_1^2 | Y_0 = x] by `samples` one-step transitions per
/// grid point and flags estimates more than three standard errors above the bound.
pub fn verify_drift_mc<R: Rng + ?Sized>(
    spec: &ModelSpec,
    xs: &[f64],
    samples: usize,
    dt: f64,
    rng: &mut R,
) -> Result<DriftReport> {
    ensure(samples >= MIN_SAMPLES, || format!("need at least {MIN_SAMPLES} samples, got {samples}"))?;
    let DriftConstants { v1, v2 } = drift_constants(spec)?;
    let sampler = LifetimeSampler::new(spec, dt)?;
    let seed: u64 = rng.random();
    let mut points = Vec::with_capacity(xs.len());
    for (i, &x) in xs.iter().enumerate() {
        let squares = (0..samples)
            .into_par_iter()
            .map(|k| {
                let mut r = stream(seed, &[i as u64, k as u64]);
                tagged_step(spec, &sampler, x, ChildChoice::Random, &mut r).map(|y| y * y)
            })
            .collect::<Result<Vec<f64>>>()?;
        let (mean, std_error) = mean_and_std_error(&squares);
        let bound = v1 * x * x + v2;
        let excess_z = if std_error > 0.0 {
            (mean - bound) / std_error
        } else if mean > bound * (1.0 + 1e-12) {
            f64::INFINITY
        } else {
            f64::NEG_INFINITY
        };
        points.push(DriftPoint { x, mean, std_error, bound, excess_z, violation: excess_z > VIOLATION_Z });
    }
    let violations = points.iter().filter(|p| p.violation).count();
    Ok(DriftReport { v1, v2, samples, points, violations })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvariantOptions {
    pub burn_in: usize,
    /// Keep every `thin`-th state after the burn-in.
    pub thin: usize,
}

impl Default for InvariantOptions {
    fn default() -> Self {
        Self { burn_in: 50, thin: 1 }
    }
}

/// States of one tagged-branch chain started at `x0`, after the burn-in.
pub fn empirical_invariant<R: Rng + ?Sized>(
    spec: &ModelSpec,
    x0: f64,
    count: usize,
    dt: f64,
    opts: InvariantOptions,
    rng: &mut R,
) -> Result<Vec<f64>> {
    ensure(count >= 1, || "sample count must be at least 1".into())?;
    ensure(opts.thin >= 1, || "thinning must be at least 1".into())?;
    let sampler = LifetimeSampler::new(spec, dt)?;
    let mut x = x0;
    for _ in 0..opts.burn_in {
        x = tagged_step(spec, &sampler, x, ChildChoice::Random, rng)?;
    }
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        for _ in 0..opts.thin {
            x = tagged_step(spec, &sampler, x, ChildChoice::Random, rng)?;
        }
        out.push(x);
    }
    Ok(out)
}
