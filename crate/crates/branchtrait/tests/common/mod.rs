#![allow(dead_code)]

use branchtrait::branching_sim::{extract_pairs, generate_tree, subsample_incomplete_tree, DivisionRate, Fragmentation, ModelSpec, TreeOptions};
use branchtrait::numerics::GaussLegendre;
use branchtrait::sde_flow::DiffusionSpec;
use branchtrait::transition_kernel::{SpectralParams, SpectralTable};

pub const DRIFT: f64 = -0.5;
pub const EPS: f64 = 0.1;
pub const RATE: f64 = 2.0;

pub fn reflected_model() -> ModelSpec {
    ModelSpec::new(DiffusionSpec::reflected_brownian(DRIFT, 1.0, 1.0), DivisionRate::constant(RATE), Fragmentation::uniform(EPS))
}

pub fn reflected_pairs(depth: u32, dt: f64, seed: u64) -> (Vec<f64>, Vec<(f64, f64)>) {
    let tree = generate_tree(&reflected_model(), 0.5, depth, dt, seed, TreeOptions::default()).unwrap();
    let scheme = subsample_incomplete_tree(depth, 1.0).unwrap();
    (tree.traits(), extract_pairs(&tree, &scheme).unwrap())
}

/// Invariant density of the tagged chain of the reflected model, from the
/// exact transition density by Nystrom power iteration. Returns a closure
/// evaluating it anywhere in [0, 1].
pub fn invariant_density() -> impl Fn(f64) -> f64 {
    let table = SpectralTable::new(SpectralParams::new(DRIFT, 1.0, 1.0, EPS)).unwrap();
    let rule = GaussLegendre::new(6);
    let panels = 40;
    let nodes: Vec<(f64, f64)> = (0..panels)
        .flat_map(|p| rule.mapped(p as f64 / panels as f64, (p + 1) as f64 / panels as f64).collect::<Vec<_>>())
        .collect();
    let n = nodes.len();
    let matrix: Vec<f64> = nodes
        .iter()
        .flat_map(|&(x, _)| nodes.iter().map(move |&(y, _)| (x, y)))
        .map(|(x, y)| table.q_and_grad(RATE, x, y).unwrap().q)
        .collect();
    let mut nu = vec![1.0; n];
    for _ in 0..200 {
        let mut next = vec![0.0; n];
        for i in 0..n {
            let wi = nodes[i].1 * nu[i];
            for j in 0..n {
                next[j] += wi * matrix[i * n + j];
            }
        }
        let mass: f64 = next.iter().zip(&nodes).map(|(v, w)| v * w.1).sum();
        nu = next.into_iter().map(|v| v / mass).collect();
    }
    move |y: f64| nodes.iter().zip(&nu).map(|(&(x, w), v)| w * v * table.q_and_grad(RATE, x, y).unwrap().q).sum()
}
