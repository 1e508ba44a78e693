use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::likelihood::Q_FLOOR;
use super::RateFamily;
use crate::branching_sim::TreeDataset;
use crate::error::{Error, Result};
use crate::sde_flow::{default_band, DiffusionSpec};
use crate::seed::stream;

/// Settings of the discounted local-time expectations inside the contrast.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContrastOptions {
    /// Paths per internal node.
    pub paths: usize,
    pub dt: f64,
    /// Local-time band; 4 sigma_max sqrt(dt) when absent.
    pub band: Option<f64>,
    /// Paths stop once every discount is below this.
    pub discount_floor: f64,
}

impl ContrastOptions {
    pub fn new(paths: usize, dt: f64) -> Self {
        Self { paths, dt, band: None, discount_floor: 1e-8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContrastPoint {
    pub theta: f64,
    pub value: f64,
    /// Nodes whose local-time estimate fell below the floor.
    pub floored: usize,
    pub terms: usize,
}

/// Sum over divided nodes u of
/// log B_theta(s_u) - 2 log sigma(s_u) + log E[int e^{-int B_theta(phi)} dL^{s_u}(phi_{X_u})],
/// s_u = X_{u0} + X_{u1}, for every theta in `thetas`.
///
/// The fragmentation law never enters. All theta values share the same
/// simulated paths: each node draws from a stream fixed by the seed taken from
/// `rng` and the node's index.
pub fn full_tree_contrast<R: Rng + ?Sized>(
    thetas: &[f64],
    tree: &TreeDataset,
    diffusion: &DiffusionSpec,
    family: &RateFamily,
    opts: &ContrastOptions,
    rng: &mut R,
) -> Result<Vec<ContrastPoint>> {
    if !tree.is_complete() {
        return Err(Error::Contract("the full-tree contrast needs every node up to the last generation".into()));
    }
    if opts.paths == 0 || !(opts.dt > 0.0) || !(opts.discount_floor > 0.0 && opts.discount_floor < 1.0) {
        return Err(Error::Parameter("contrast needs paths >= 1, dt > 0 and a discount floor in (0, 1)".into()));
    }
    for &t in thetas {
        family.division_rate(t)?;
    }
    let seed = rng.random::<u64>();
    let sigma_max = diffusion
        .probe_grid(10.0)
        .iter()
        .map(|&x| diffusion.volatility.eval(x).abs())
        .fold(0.0, f64::max);
    let band = opts.band.unwrap_or_else(|| default_band(sigma_max.max(f64::MIN_POSITIVE), opts.dt));
    let nodes: Vec<(usize, f64, f64)> = tree
        .internal_nodes()
        .map(|(u, r, c0, c1)| (u.heap_index(), r.trait_at_birth, c0.trait_at_birth + c1.trait_at_birth))
        .collect();
    let per_node: Vec<Vec<f64>> = nodes
        .par_iter()
        .map(|&(h, x, s)| discounted_local_times(thetas, diffusion, family, x, s, band, opts, seed, h as u64))
        .collect::<Result<_>>()?;
    Ok(thetas
        .iter()
        .enumerate()
        .map(|(k, &theta)| {
            let mut value = 0.0;
            let mut floored = 0;
            for (&(_, _, s), e) in nodes.iter().zip(&per_node) {
                let sig = diffusion.volatility.eval(s);
                let mut e = e[k];
                if !(e >= Q_FLOOR) {
                    floored += 1;
                    e = Q_FLOOR;
                }
                value += family.eval(theta, s).ln() - 2.0 * sig.abs().max(f64::MIN_POSITIVE).ln() + e.ln();
            }
            ContrastPoint { theta, value, floored, terms: nodes.len() }
        })
        .collect())
}

/// Path average of int e^{-int_0^t B_theta} dL_t^level for every theta, from
/// `paths` Euler paths started at x. Rates are frozen over a step and the
/// occupation of a step is weighted by the mean discount over it.
#[allow(clippy::too_many_arguments)]
fn discounted_local_times(
    thetas: &[f64],
    diffusion: &DiffusionSpec,
    family: &RateFamily,
    x: f64,
    level: f64,
    band: f64,
    opts: &ContrastOptions,
    seed: u64,
    node: u64,
) -> Result<Vec<f64>> {
    let dt = opts.dt;
    let width = diffusion.domain.band_width(level, band);
    let mut totals = vec![0.0; thetas.len()];
    if width <= 0.0 {
        return Ok(totals);
    }
    if !diffusion.domain.contains(x) {
        return Err(Error::Domain(format!("node trait {x} outside {:?}", diffusion.domain)));
    }
    let stepper = diffusion.stepper(dt);
    let half = 0.5 * band;
    let mut discount = vec![1.0f64; thetas.len()];
    for p in 0..opts.paths {
        let mut rng = stream(seed, &[node, p as u64]);
        discount.iter_mut().for_each(|d| *d = 1.0);
        let mut xk = x;
        loop {
            let inside = (xk - level).abs() <= half;
            let occupation = if inside {
                let s = diffusion.volatility.eval(xk);
                s * s * dt / width
            } else {
                0.0
            };
            let mut alive = false;
            for (k, &theta) in thetas.iter().enumerate() {
                let b = family.eval(theta, xk);
                let bdt = b * dt;
                if inside {
                    let mean = if bdt > 1e-12 { -(-bdt).exp_m1() / bdt } else { 1.0 };
                    totals[k] += discount[k] * mean * occupation;
                }
                discount[k] *= (-bdt).exp();
                alive |= discount[k] >= opts.discount_floor;
            }
            if !alive {
                break;
            }
            xk = stepper.advance(xk, &mut rng)?;
        }
    }
    let n = opts.paths as f64;
    Ok(totals.into_iter().map(|t| t / n).collect())
}
