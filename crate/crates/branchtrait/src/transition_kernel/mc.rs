use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::in_pair_support;
use crate::branching_sim::ModelSpec;
use crate::error::{Error, Result};
use crate::numerics::GaussLegendre;
use crate::sde_flow::{default_band, Domain, LevelBands};
use crate::seed::stream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McOptions {
    pub paths: usize,
    pub dt: f64,
    /// Local-time band; 4 sigma_max sqrt(dt) when absent.
    pub band: Option<f64>,
    /// Paths stop once exp(-int B) drops below this.
    pub discount_floor: f64,
    /// Gauss-Legendre nodes per smooth piece of the fragmentation integral.
    pub z_nodes: usize,
}

impl McOptions {
    pub fn new(paths: usize, dt: f64) -> Self {
        Self { paths, dt, band: None, discount_floor: 1e-8, z_nodes: 24 }
    }

    fn validate(&self) -> Result<()> {
        if self.paths == 0 {
            return Err(Error::Parameter("need at least one path".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Parameter(format!("time step must be positive, got {}", self.dt)));
        }
        if !(self.discount_floor > 0.0 && self.discount_floor < 1.0) {
            return Err(Error::Parameter(format!("discount floor must lie in (0, 1), got {}", self.discount_floor)));
        }
        if self.z_nodes == 0 {
            return Err(Error::Parameter("need at least one quadrature node".into()));
        }
        Ok(())
    }
}

/// Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
    pub paths: usize,
}

impl McEstimate {
    fn exact_zero(paths: usize) -> Self {
        Self { value: 0.0, std_error: 0.0, paths }
    }
}

/// Levels probed along each path, each feeding one output with a weight.
struct LevelPlan {
    levels: Vec<f64>,
    weights: Vec<f64>,
    target: Vec<usize>,
}

fn sigma_max(spec: &ModelSpec) -> f64 {
    match spec.bounds {
        Some(b) => b.sigma_max,
        None => {
            let radius = match spec.diffusion.domain {
                Domain::FullLine => 10.0,
                Domain::Reflected { length } => length,
            };
            spec.diffusion.probe_grid(radius).iter().map(|&x| spec.diffusion.volatility.eval(x).abs()).fold(0.0, f64::max)
        }
    }
}

const CHUNK: usize = 64;

/// The per-step increment sum_i w_i 1{|x - level_i| <= band/2} / width_i of
/// every output, as a piecewise-constant function of the path value.
struct BandWeights {
    breaks: Vec<f64>,
    /// Row k holds the outputs on [breaks[k], breaks[k + 1]).
    values: Vec<f64>,
    /// Range of outputs that are non-zero on each segment.
    support: Vec<(usize, usize)>,
    outputs: usize,
}

impl BandWeights {
    fn new(plan: &LevelPlan, outputs: usize, band: f64, domain: Domain) -> Result<Self> {
        let bands = LevelBands::new(&plan.levels, band, domain)?;
        let half = 0.5 * band;
        let mut breaks: Vec<f64> = plan.levels.iter().flat_map(|&v| [v - half, v + half]).collect();
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        let segments = breaks.len().saturating_sub(1);
        let mut values = vec![0.0; segments * outputs];
        let mut support = vec![(0, 0); segments];
        for k in 0..segments {
            let mid = 0.5 * (breaks[k] + breaks[k + 1]);
            let row = &mut values[k * outputs..(k + 1) * outputs];
            bands.for_each_hit(mid, |i, inv_width| row[plan.target[i]] += plan.weights[i] * inv_width);
            let first = row.iter().position(|&v| v != 0.0).unwrap_or(0);
            let last = row.iter().rposition(|&v| v != 0.0).map_or(0, |p| p + 1);
            support[k] = (first, last.max(first));
        }
        Ok(Self { breaks, values, support, outputs })
    }

    /// Segment containing `x`, searched from the previous one.
    #[inline]
    fn locate(&self, x: f64, cursor: &mut usize) -> Option<usize> {
        let n = self.breaks.len();
        if n < 2 || x < self.breaks[0] || x >= self.breaks[n - 1] {
            return None;
        }
        let mut k = (*cursor).min(n - 2);
        while x < self.breaks[k] {
            k -= 1;
        }
        while x >= self.breaks[k + 1] {
            k += 1;
        }
        *cursor = k;
        Some(k)
    }
}

/// Averages, over independent paths started at `x`, the weighted discounted
/// local times sum_i w_i int e^{-int_0^t B} dL_t^{level_i}, grouped by output.
///
/// Within a step the rate is frozen at the left point, as in the lifetime
/// sampler, and the occupation of the step is weighted by the exact mean of
/// the discount over it.
fn run_paths(spec: &ModelSpec, x: f64, plan: &LevelPlan, outputs: usize, opts: &McOptions, seed: u64) -> Result<Vec<McEstimate>> {
    let band = match opts.band {
        Some(b) => b,
        None => default_band(sigma_max(spec), opts.dt),
    };
    let table = BandWeights::new(plan, outputs, band, spec.diffusion.domain)?;
    let stepper = spec.diffusion.stepper(opts.dt);
    let dt = opts.dt;
    // per-step factor e^{-B dt} and the mean discount over the step relative
    // to its left end, (1 - e^{-B dt}) / (B dt)
    let step_discount = |b: f64| {
        let f = (-b * dt).exp();
        let mean = if b * dt > 1e-12 { -(-b * dt).exp_m1() / (b * dt) } else { 1.0 };
        (f, mean)
    };
    let constant = spec.division.rate.as_constant().map(step_discount);
    let chunks = opts.paths.div_ceil(CHUNK);
    let (sum, sum_sq) = (0..chunks)
        .into_par_iter()
        .map(|c| -> Result<(Vec<f64>, Vec<f64>)> {
            let mut sum = vec![0.0; outputs];
            let mut sum_sq = vec![0.0; outputs];
            let mut acc = vec![0.0; outputs];
            for p in c * CHUNK..((c + 1) * CHUNK).min(opts.paths) {
                let mut rng = stream(seed, &[p as u64]);
                acc.iter_mut().for_each(|a| *a = 0.0);
                let mut xk = x;
                let mut discount = 1.0f64;
                let mut cursor = 0;
                loop {
                    let (factor, mean) = match constant {
                        Some(c) => c,
                        None => step_discount(spec.division.eval(xk)),
                    };
                    if let Some(k) = table.locate(xk, &mut cursor) {
                        let (lo, hi) = table.support[k];
                        if hi > lo {
                            let s = spec.diffusion.volatility.eval(xk);
                            let scale = discount * mean * s * s * dt;
                            let row = &table.values[k * table.outputs..];
                            for j in lo..hi {
                                acc[j] += row[j] * scale;
                            }
                        }
                    }
                    discount *= factor;
                    if discount < opts.discount_floor {
                        break;
                    }
                    xk = stepper.advance(xk, &mut rng)?;
                }
                for k in 0..outputs {
                    sum[k] += acc[k];
                    sum_sq[k] += acc[k] * acc[k];
                }
            }
            Ok((sum, sum_sq))
        })
        .try_reduce(
            || (vec![0.0; outputs], vec![0.0; outputs]),
            |(mut a, mut b), (c, d)| {
                a.iter_mut().zip(&c).for_each(|(u, v)| *u += v);
                b.iter_mut().zip(&d).for_each(|(u, v)| *u += v);
                Ok((a, b))
            },
        )?;
    let n = opts.paths as f64;
    Ok(sum
        .iter()
        .zip(&sum_sq)
        .map(|(&s, &ss)| {
            let mean = s / n;
            let var = if opts.paths > 1 { ((ss - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
            McEstimate { value: mean, std_error: (var / n).sqrt(), paths: opts.paths }
        })
        .collect())
}

/// Fragmentation-integral nodes for one y: z-range and kink at y/x.
fn z_pieces(spec: &ModelSpec, x: f64, y: f64) -> Option<Vec<(f64, f64)>> {
    let eps = spec.fragmentation.eps();
    let (mut lo, hi) = (eps, 1.0 - eps);
    if let Domain::Reflected { length } = spec.diffusion.domain {
        if !(y > 0.0) {
            return None;
        }
        lo = lo.max(y / length);
    }
    if lo >= hi {
        return None;
    }
    let kink = if x != 0.0 { y / x } else { f64::NAN };
    Some(if kink > lo && kink < hi { vec![(lo, kink), (kink, hi)] } else { vec![(lo, hi)] })
}

/// q(x, y_j) for every y_j from the same paths:
/// q(x, y) = int kappa~(z)/z B(y/z) sigma(y/z)^{-2} E[int e^{-int B} dL^{y/z}] dz,
/// with Gauss-Legendre nodes in z and a path average inside.
pub fn mc_transition_row<R: Rng + ?Sized>(
    spec: &ModelSpec,
    x: f64,
    ys: &[f64],
    opts: &McOptions,
    rng: &mut R,
) -> Result<Vec<McEstimate>> {
    opts.validate()?;
    spec.validate()?;
    if !spec.diffusion.domain.contains(x) {
        return Err(Error::Domain(format!("x={x} outside {:?}", spec.diffusion.domain)));
    }
    let seed = rng.random::<u64>();
    let rule = GaussLegendre::new(opts.z_nodes);
    let mut plan = LevelPlan { levels: Vec::new(), weights: Vec::new(), target: Vec::new() };
    for (j, &y) in ys.iter().enumerate() {
        let Some(pieces) = z_pieces(spec, x, y) else { continue };
        for (lo, hi) in pieces {
            for (z, w) in rule.mapped(lo, hi) {
                let v = y / z;
                let s = spec.diffusion.volatility.eval(v);
                let weight = w * spec.fragmentation.symmetrized(z) / z * spec.division.eval(v) / (s * s);
                if !weight.is_finite() {
                    return Err(Error::Numeric(format!("weight {weight} at level {v}")));
                }
                plan.levels.push(v);
                plan.weights.push(weight);
                plan.target.push(j);
            }
        }
    }
    if plan.levels.is_empty() {
        return Ok(vec![McEstimate::exact_zero(opts.paths); ys.len()]);
    }
    run_paths(spec, x, &plan, ys.len(), opts, seed)
}

/// Single-point version of [`mc_transition_row`].
pub fn mc_transition_density<R: Rng + ?Sized>(
    spec: &ModelSpec,
    x: f64,
    y: f64,
    opts: &McOptions,
    rng: &mut R,
) -> Result<McEstimate> {
    Ok(mc_transition_row(spec, x, &[y], opts, rng)?[0])
}

/// p(x, y1, y2) = kappa(y1/s)/s B(s) sigma(s)^{-2} E[int e^{-int B} dL^s], s = y1 + y2;
/// exactly zero outside the pair support.
pub fn mc_full_transition<R: Rng + ?Sized>(
    spec: &ModelSpec,
    x: f64,
    y1: f64,
    y2: f64,
    opts: &McOptions,
    rng: &mut R,
) -> Result<McEstimate> {
    opts.validate()?;
    spec.validate()?;
    if !spec.diffusion.domain.contains(x) {
        return Err(Error::Domain(format!("x={x} outside {:?}", spec.diffusion.domain)));
    }
    let seed = rng.random::<u64>();
    let eps = spec.fragmentation.eps();
    if !in_pair_support(eps, spec.diffusion.domain.length(), y1, y2) {
        return Ok(McEstimate::exact_zero(opts.paths));
    }
    let s = y1 + y2;
    let sig = spec.diffusion.volatility.eval(s);
    let weight = spec.fragmentation.density(y1 / s) / s.abs() * spec.division.eval(s) / (sig * sig);
    let plan = LevelPlan { levels: vec![s], weights: vec![weight], target: vec![0] };
    Ok(run_paths(spec, x, &plan, 1, opts, seed)?[0])
}
