//! The branching population: model description, lifetime sampling by
//! thinning, tree generation, observation schemes and the tagged-branch chain.

mod lifetime;
mod scheme;
mod tagged;
mod tree;
mod ulam;

pub use lifetime::{sample_lifetime, Division, LifetimeSampler};
pub use scheme::{extract_pairs, subsample_incomplete_tree, ObservationScheme};
pub use tagged::{tagged_branch_chain, tagged_step, ChildChoice};
pub use tree::{generate_tree, recover_fragmentation_fractions, NodeRecord, TreeDataset, TreeOptions};
pub use ulam::{UlamHarrisId, MAX_GENERATION};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sde_flow::{Coefficient, DiffusionBounds, DiffusionSpec, Domain};

/// Growth envelope B(x) <= scale |x|^exponent + lower.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub scale: f64,
    pub exponent: f64,
}

/// Division rate with its declared bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivisionRate {
    pub rate: Coefficient,
    /// Uniform lower bound b1 > 0.
    pub lower: f64,
    /// Uniform upper bound, when one is known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub envelope: Option<Envelope>,
}

impl DivisionRate {
    /// Constant rate b, with b1 = b4 = b.
    pub fn constant(b: f64) -> Self {
        Self { rate: Coefficient::constant(b), lower: b, upper: Some(b), envelope: None }
    }

    pub fn new(rate: Coefficient, lower: f64) -> Self {
        Self { rate, lower, upper: None, envelope: None }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.rate.eval(x)
    }
}

/// Law of the fraction inherited by the first child, supported on [eps, 1 - eps].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Fragmentation {
    Uniform { eps: f64 },
    /// Density proportional to 1 + slope (z - 1/2).
    Linear { eps: f64, slope: f64 },
}

impl Fragmentation {
    pub fn uniform(eps: f64) -> Self {
        Fragmentation::Uniform { eps }
    }

    pub fn eps(&self) -> f64 {
        match *self {
            Fragmentation::Uniform { eps } | Fragmentation::Linear { eps, .. } => eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let eps = self.eps();
        if !(eps > 0.0 && eps < 0.5) {
            return Err(Error::Parameter(format!("fragmentation gap must lie in (0, 1/2), got {eps}")));
        }
        if let Fragmentation::Linear { slope, .. } = *self {
            if !(slope.abs() * (0.5 - eps) < 1.0) {
                return Err(Error::Parameter(format!(
                    "slope {slope} makes the fragmentation density vanish on its support"
                )));
            }
        }
        Ok(())
    }

    /// Density kappa(z).
    pub fn density(&self, z: f64) -> f64 {
        let eps = self.eps();
        if z < eps || z > 1.0 - eps {
            return 0.0;
        }
        match *self {
            Fragmentation::Uniform { .. } => 1.0 / (1.0 - 2.0 * eps),
            Fragmentation::Linear { slope, .. } => (1.0 + slope * (z - 0.5)) / (1.0 - 2.0 * eps),
        }
    }

    /// Symmetrised density (kappa(z) + kappa(1 - z)) / 2.
    pub fn symmetrized(&self, z: f64) -> f64 {
        0.5 * (self.density(z) + self.density(1.0 - z))
    }

    /// Infimum of the density on its support.
    pub fn density_floor(&self) -> f64 {
        let eps = self.eps();
        match *self {
            Fragmentation::Uniform { .. } => self.density(0.5),
            Fragmentation::Linear { slope, .. } => (1.0 - slope.abs() * (0.5 - eps)) / (1.0 - 2.0 * eps),
        }
    }

    pub fn is_symmetric(&self) -> bool {
        match *self {
            Fragmentation::Uniform { .. } => true,
            Fragmentation::Linear { slope, .. } => slope == 0.0,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let eps = self.eps();
        let u = |rng: &mut R| eps + (1.0 - 2.0 * eps) * rng.random::<f64>();
        match *self {
            Fragmentation::Uniform { .. } => u(rng),
            Fragmentation::Linear { slope, .. } => {
                let top = 1.0 + slope.abs() * (0.5 - eps);
                loop {
                    let z = u(rng);
                    if rng.random::<f64>() * top <= 1.0 + slope * (z - 0.5) {
                        return z;
                    }
                }
            }
        }
    }
}

/// Everything that determines the branching law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub diffusion: DiffusionSpec,
    pub division: DivisionRate,
    pub fragmentation: Fragmentation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<DiffusionBounds>,
}

impl ModelSpec {
    pub fn new(diffusion: DiffusionSpec, division: DivisionRate, fragmentation: Fragmentation) -> Self {
        Self { diffusion, division, fragmentation, bounds: None }
    }

    pub fn with_bounds(mut self, bounds: DiffusionBounds) -> Self {
        self.bounds = Some(bounds);
        self
    }

    pub fn domain(&self) -> Domain {
        self.diffusion.domain
    }

    /// Checks the division-rate floor, the fragmentation law and, when
    /// declared, the diffusion bounds on probe grids.
    pub fn validate(&self) -> Result<()> {
        self.fragmentation.validate()?;
        let lower = self.division.lower;
        if !(lower > 0.0 && lower.is_finite()) {
            return Err(Error::Parameter(format!("division-rate floor must be positive, got {lower}")));
        }
        let radius = self.bounds.map_or(10.0, |b| 10f64.max(4.0 * b.radius));
        for x in self.diffusion.probe_grid(radius) {
            let b = self.division.eval(x);
            if !(b >= lower * (1.0 - 1e-12)) {
                return Err(Error::Parameter(format!("division rate {b} at x={x} below declared floor {lower}")));
            }
            if let Some(upper) = self.division.upper {
                if b > upper * (1.0 + 1e-12) {
                    return Err(Error::Parameter(format!("division rate {b} at x={x} above declared bound {upper}")));
                }
            }
        }
        if let Some(bounds) = &self.bounds {
            self.diffusion.validate(bounds)?;
        }
        Ok(())
    }
}
