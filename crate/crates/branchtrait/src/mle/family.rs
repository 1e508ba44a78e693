use serde::{Deserialize, Serialize};

use crate::branching_sim::DivisionRate;
use crate::error::{Error, Result};
use crate::numerics::linspace;
use crate::sde_flow::{Coefficient, Domain};

/// Shape of the one-parameter division-rate class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateShape {
    /// B(theta, x) = theta.
    Constant,
    /// B(theta, x) = 1 + theta x.
    Affine,
}

/// One-parameter division-rate family on a box [theta_min, theta_max], with
/// the bounds b3 <= B <= b4 found on a probe grid of box x domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFamily {
    pub shape: RateShape,
    pub theta_min: f64,
    pub theta_max: f64,
    pub b3: f64,
    pub b4: f64,
}

const THETA_PROBES: usize = 41;
const X_PROBES: usize = 201;

impl RateFamily {
    /// Builds the family and checks nondegeneracy and orderliness on a probe
    /// grid. The affine shape needs a bounded trait domain.
    pub fn new(shape: RateShape, theta_min: f64, theta_max: f64, domain: Domain) -> Result<Self> {
        if !(theta_min.is_finite() && theta_max.is_finite() && theta_min <= theta_max) {
            return Err(Error::Parameter(format!("invalid parameter box [{theta_min}, {theta_max}]")));
        }
        let xs = match (shape, domain) {
            (RateShape::Constant, _) => vec![0.0],
            (RateShape::Affine, Domain::Reflected { length }) => linspace(0.0, length, X_PROBES),
            (RateShape::Affine, Domain::FullLine) => {
                return Err(Error::Configuration("the affine rate family is unbounded on the real line".into()))
            }
        };
        let thetas = linspace(theta_min, theta_max, THETA_PROBES);
        let mut family = Self { shape, theta_min, theta_max, b3: f64::INFINITY, b4: 0.0 };
        for &t in &thetas {
            for &x in &xs {
                let b = family.eval(t, x);
                family.b3 = family.b3.min(b);
                family.b4 = family.b4.max(b);
            }
        }
        if !(family.b3 > 0.0 && family.b4.is_finite()) {
            return Err(Error::Parameter(format!(
                "rate family leaves (0, inf) on the box: bounds [{}, {}]",
                family.b3, family.b4
            )));
        }
        // orderly: consecutive probe members never cross
        for w in thetas.windows(2) {
            let diffs: Vec<f64> = xs.iter().map(|&x| family.eval(w[1], x) - family.eval(w[0], x)).collect();
            let up = diffs.iter().all(|&d| d >= 0.0);
            let down = diffs.iter().all(|&d| d <= 0.0);
            if !(up || down) {
                return Err(Error::Parameter(format!("rate family is not orderly between {} and {}", w[0], w[1])));
            }
        }
        Ok(family)
    }

    #[inline]
    pub fn eval(&self, theta: f64, x: f64) -> f64 {
        match self.shape {
            RateShape::Constant => theta,
            RateShape::Affine => 1.0 + theta * x,
        }
    }

    pub fn contains(&self, theta: f64) -> bool {
        (self.theta_min..=self.theta_max).contains(&theta)
    }

    /// B(theta, .) as a division rate, with the family bounds attached.
    pub fn division_rate(&self, theta: f64) -> Result<DivisionRate> {
        if !self.contains(theta) {
            return Err(Error::Parameter(format!(
                "theta {theta} outside [{}, {}]",
                self.theta_min, self.theta_max
            )));
        }
        Ok(match self.shape {
            RateShape::Constant => DivisionRate::constant(theta),
            RateShape::Affine => {
                let mut rate = DivisionRate::new(Coefficient::affine(1.0, theta), self.b3);
                rate.upper = Some(self.b4);
                rate
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounds_of_the_affine_family() {
        let f = RateFamily::new(RateShape::Affine, 1.0, 3.0, Domain::Reflected { length: 1.0 }).unwrap();
        assert_eq!((f.b3, f.b4), (1.0, 4.0));
        assert_eq!(f.eval(2.0, 0.5), 2.0);
        let r = f.division_rate(2.0).unwrap();
        assert_eq!(r.eval(0.25), 1.5);
        assert!(f.division_rate(3.5).is_err());
    }

    #[test]
    fn degenerate_or_unbounded_families_are_rejected() {
        assert!(RateFamily::new(RateShape::Constant, -1.0, 2.0, Domain::FullLine).is_err());
        assert!(RateFamily::new(RateShape::Affine, 1.0, 2.0, Domain::FullLine).is_err());
        // 1 + theta x vanishes at x = 1 for theta = -1
        assert!(RateFamily::new(RateShape::Affine, -1.0, 1.0, Domain::Reflected { length: 1.0 }).is_err());
        assert!(RateFamily::new(RateShape::Constant, 3.0, 2.0, Domain::FullLine).is_err());
    }

    #[test]
    fn constant_family_is_orderly() {
        let f = RateFamily::new(RateShape::Constant, 1.8, 2.2, Domain::Reflected { length: 1.0 }).unwrap();
        assert_eq!((f.b3, f.b4), (1.8, 2.2));
    }
}
