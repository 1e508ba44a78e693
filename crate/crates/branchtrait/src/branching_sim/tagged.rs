use rand::Rng;

use super::{LifetimeSampler, ModelSpec};
use crate::error::Result;

/// Which child the tagged lineage follows at each division.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ChildChoice {
    #[default]
    Random,
    First,
    Second,
}

/// One transition of the tagged chain: live, divide, keep one child.
pub fn tagged_step<R: Rng + ?Sized>(
    spec: &ModelSpec,
    sampler: &LifetimeSampler<'_>,
    x: f64,
    choice: ChildChoice,
    rng: &mut R,
) -> Result<f64> {
    let d = sampler.sample(x, rng)?;
    let theta = spec.fragmentation.sample(rng);
    let first = match choice {
        ChildChoice::Random => rng.random::<bool>(),
        ChildChoice::First => true,
        ChildChoice::Second => false,
    };
    Ok(if first { theta } else { 1.0 - theta } * d.trait_at_division)
}

/// Y_0 = x0, then `steps` transitions of the mean kernel (P0 + P1) / 2.
pub fn tagged_branch_chain<R: Rng + ?Sized>(
    spec: &ModelSpec,
    x0: f64,
    steps: usize,
    dt: f64,
    choice: ChildChoice,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let sampler = LifetimeSampler::new(spec, dt)?;
    let mut out = Vec::with_capacity(steps + 1);
    out.push(x0);
    let mut x = x0;
    for _ in 0..steps {
        x = tagged_step(spec, &sampler, x, choice, rng)?;
        out.push(x);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::branching_sim::{DivisionRate, Fragmentation};
    use crate::sde_flow::DiffusionSpec;
    use crate::seed::stream;

    #[test]
    fn zero_steps_returns_start() {
        let spec = ModelSpec::new(
            DiffusionSpec::ornstein_uhlenbeck(1.0, 1.0),
            DivisionRate::constant(1.0),
            Fragmentation::uniform(0.1),
        );
        let y = tagged_branch_chain(&spec, 0.7, 0, 1e-3, ChildChoice::Random, &mut stream(1, &[])).unwrap();
        assert_eq!(y, vec![0.7]);
    }
}
