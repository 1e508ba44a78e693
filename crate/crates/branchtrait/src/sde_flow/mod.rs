//! Euler simulation of the scalar trait diffusion, discretized local times and
//! closed-form Ornstein-Uhlenbeck references.

mod coefficient;
mod local_time;
mod ou;

pub use coefficient::{Coefficient, CustomFn};
pub use local_time::{default_band, estimate_local_time, LevelBands, LocalTimeCurve};
pub use ou::{
    ou_expected_local_time, ou_expected_local_time_randomized_start, ou_transition_density,
};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// State space of the trait.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Domain {
    FullLine,
    Reflected { length: f64 },
}

impl Domain {
    pub fn contains(&self, x: f64) -> bool {
        match *self {
            Domain::FullLine => x.is_finite(),
            Domain::Reflected { length } => (0.0..=length).contains(&x),
        }
    }

    pub fn length(&self) -> Option<f64> {
        match *self {
            Domain::FullLine => None,
            Domain::Reflected { length } => Some(length),
        }
    }

    /// Width of the band [y - band/2, y + band/2] that lies inside the domain.
    pub fn band_width(&self, y: f64, band: f64) -> f64 {
        match *self {
            Domain::FullLine => band,
            Domain::Reflected { length } => {
                let lo = (y - 0.5 * band).max(0.0);
                let hi = (y + 0.5 * band).min(length);
                (hi - lo).max(0.0)
            }
        }
    }
}

/// Constants of the growth and ellipticity assumptions, declared by the user.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffusionBounds {
    /// Linear-growth constant: |r(x)| <= r1 (1 + |x|).
    pub growth: f64,
    /// Radius beyond which the drift points inward.
    pub radius: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionSpec {
    pub drift: Coefficient,
    pub volatility: Coefficient,
    pub domain: Domain,
}

const PROBE_POINTS: usize = 401;

impl DiffusionSpec {
    pub fn new(drift: Coefficient, volatility: Coefficient, domain: Domain) -> Self {
        Self { drift, volatility, domain }
    }

    /// Ornstein-Uhlenbeck flow dx = -beta x dt + sigma dW on the real line.
    pub fn ornstein_uhlenbeck(beta: f64, sigma: f64) -> Self {
        Self::new(
            Coefficient::affine(0.0, -beta),
            Coefficient::constant(sigma),
            Domain::FullLine,
        )
    }

    /// Brownian motion with constant drift reflected on [0, length].
    pub fn reflected_brownian(drift: f64, sigma: f64, length: f64) -> Self {
        Self::new(
            Coefficient::constant(drift),
            Coefficient::constant(sigma),
            Domain::Reflected { length },
        )
    }

    /// Probe grid used to validate coefficient assumptions.
    pub fn probe_grid(&self, radius: f64) -> Vec<f64> {
        match self.domain {
            Domain::Reflected { length } => crate::numerics::linspace(0.0, length, PROBE_POINTS),
            Domain::FullLine => crate::numerics::linspace(-radius, radius, PROBE_POINTS),
        }
    }

    fn check_domain(&self) -> Result<()> {
        if let Domain::Reflected { length } = self.domain {
            if !(length > 0.0 && length.is_finite()) {
                return Err(Error::Parameter(format!("interval length must be positive, got {length}")));
            }
        }
        Ok(())
    }

    /// Checks the declared volatility bounds and inward-drift radius on a probe grid.
    pub fn validate(&self, bounds: &DiffusionBounds) -> Result<()> {
        self.check_domain()?;
        if !(bounds.sigma_min > 0.0 && bounds.sigma_min <= bounds.sigma_max) {
            return Err(Error::Parameter(format!(
                "volatility bounds need 0 < sigma_min <= sigma_max, got ({}, {})",
                bounds.sigma_min, bounds.sigma_max
            )));
        }
        let radius = 10f64.max(4.0 * bounds.radius);
        for x in self.probe_grid(radius) {
            let s = self.volatility.eval(x);
            if !(s >= bounds.sigma_min * (1.0 - 1e-12) && s <= bounds.sigma_max * (1.0 + 1e-12)) {
                return Err(Error::Parameter(format!(
                    "volatility {s} at x={x} outside [{}, {}]",
                    bounds.sigma_min, bounds.sigma_max
                )));
            }
            let r = self.drift.eval(x);
            if !r.is_finite() {
                return Err(Error::Numeric(format!("drift not finite at x={x}")));
            }
            if self.domain == Domain::FullLine && x.abs() >= bounds.radius {
                let sign = if x > 0.0 { 1.0 } else { -1.0 };
                if sign * r >= 0.0 {
                    return Err(Error::Parameter(format!(
                        "drift {r} at x={x} does not point inward beyond radius {}",
                        bounds.radius
                    )));
                }
            }
        }
        Ok(())
    }

    pub(crate) fn stepper(&self, dt: f64) -> Stepper<'_> {
        Stepper { spec: self, dt, sqrt_dt: dt.sqrt() }
    }
}

/// One Euler step at a time; shared by path simulation, thinning and the
/// local-time estimators.
#[derive(Clone, Copy)]
pub(crate) struct Stepper<'a> {
    spec: &'a DiffusionSpec,
    pub dt: f64,
    sqrt_dt: f64,
}

impl Stepper<'_> {
    /// Advances `x` by one step with the standard normal draw `xi`.
    /// Returns the new value and whether a boundary projection occurred.
    #[inline]
    pub fn step(&self, x: f64, xi: f64) -> Result<(f64, bool)> {
        let r = self.spec.drift.eval(x);
        let s = self.spec.volatility.eval(x);
        if !(r.is_finite() && s.is_finite()) {
            return Err(Error::Numeric(format!("non-finite coefficient at x={x} (drift {r}, volatility {s})")));
        }
        let y = x + r * self.dt + s * self.sqrt_dt * xi;
        match self.spec.domain {
            Domain::FullLine => {
                if !y.is_finite() {
                    return Err(Error::Numeric(format!("path diverged from x={x}")));
                }
                Ok((y, false))
            }
            Domain::Reflected { length } => {
                let mut y = y;
                let mut hit = false;
                if y < 0.0 {
                    y = -y;
                    hit = true;
                }
                if y > length {
                    y = 2.0 * length - y;
                    hit = true;
                }
                Ok((y.clamp(0.0, length), hit))
            }
        }
    }

    #[inline]
    pub fn advance<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> Result<f64> {
        let xi: f64 = rng.sample(StandardNormal);
        Ok(self.step(x, xi)?.0)
    }
}

/// Discretized trajectory on the uniform grid 0, dt, 2dt, ...
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    pub step: f64,
    pub values: Vec<f64>,
    /// `reflected[i]` is set when `values[i]` came out of a boundary projection.
    pub reflected: Vec<bool>,
}

impl PathSample {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        self.step * (self.values.len().saturating_sub(1)) as f64
    }
}

/// Number of grid intervals covering [0, horizon].
pub(crate) fn step_count(horizon: f64, dt: f64) -> usize {
    (horizon / dt * (1.0 + 1e-12)).floor() as usize
}

pub fn simulate_path<R: Rng + ?Sized>(
    spec: &DiffusionSpec,
    x0: f64,
    horizon: f64,
    dt: f64,
    rng: &mut R,
) -> Result<PathSample> {
    spec.check_domain()?;
    if !(dt > 0.0 && horizon > 0.0 && dt <= horizon * (1.0 + 1e-12)) {
        return Err(Error::Parameter(format!("need 0 < dt <= T, got dt={dt}, T={horizon}")));
    }
    if !spec.domain.contains(x0) {
        return Err(Error::Domain(format!("initial value {x0} outside {:?}", spec.domain)));
    }
    let n = step_count(horizon, dt);
    let stepper = spec.stepper(dt);
    let mut values = Vec::with_capacity(n + 1);
    let mut reflected = Vec::with_capacity(n + 1);
    values.push(x0);
    reflected.push(false);
    let mut x = x0;
    for _ in 0..n {
        let xi: f64 = rng.sample(StandardNormal);
        let (y, hit) = stepper.step(x, xi)?;
        values.push(y);
        reflected.push(hit);
        x = y;
    }
    Ok(PathSample { step: dt, values, reflected })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::stream;

    #[test]
    fn degenerate_noise_gives_constant_path() {
        let spec = DiffusionSpec::new(Coefficient::constant(0.0), Coefficient::constant(0.0), Domain::FullLine);
        let p = simulate_path(&spec, 0.5, 3.0, 0.01, &mut stream(1, &[])).unwrap();
        assert_eq!(p.len(), 301);
        assert!(p.values.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn reflected_paths_stay_in_interval() {
        let spec = DiffusionSpec::reflected_brownian(0.0, 1.0, 1.0);
        let p = simulate_path(&spec, 0.0, 5.0, 1e-3, &mut stream(2, &[])).unwrap();
        assert!(p.values.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(p.reflected.iter().any(|&r| r));
        assert!(!p.reflected[0]);
    }

    #[test]
    fn length_matches_floor_rule() {
        let spec = DiffusionSpec::ornstein_uhlenbeck(1.0, 1.0);
        let p = simulate_path(&spec, 0.0, 1.0, 0.3, &mut stream(3, &[])).unwrap();
        assert_eq!(p.len(), 4);
        let p = simulate_path(&spec, 0.0, 1.0, 0.1, &mut stream(3, &[])).unwrap();
        assert_eq!(p.len(), 11);
    }

    #[test]
    fn initial_value_outside_domain_is_rejected() {
        let spec = DiffusionSpec::reflected_brownian(0.0, 1.0, 1.0);
        let e = simulate_path(&spec, 1.5, 1.0, 0.1, &mut stream(3, &[])).unwrap_err();
        assert!(matches!(e, Error::Domain(_)));
    }

    #[test]
    fn non_finite_coefficient_aborts() {
        let spec = DiffusionSpec::new(
            Coefficient::custom(|x| if x > 0.2 { f64::NAN } else { 1.0 }),
            Coefficient::constant(0.0),
            Domain::FullLine,
        );
        let e = simulate_path(&spec, 0.0, 1.0, 0.01, &mut stream(3, &[])).unwrap_err();
        assert!(matches!(e, Error::Numeric(_)));
    }

    #[test]
    fn same_seed_same_path() {
        let spec = DiffusionSpec::ornstein_uhlenbeck(1.0, 1.0);
        let a = simulate_path(&spec, 0.3, 1.0, 1e-3, &mut stream(9, &[4])).unwrap();
        let b = simulate_path(&spec, 0.3, 1.0, 1e-3, &mut stream(9, &[4])).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ou_mean_matches_closed_form() {
        let spec = DiffusionSpec::ornstein_uhlenbeck(1.0, 1.0);
        let stepper = spec.stepper(1e-3);
        let m = 100_000;
        let mut rng = stream(11, &[]);
        let ends: Vec<f64> = (0..m)
            .map(|_| {
                let mut x = 2.0;
                for _ in 0..1000 {
                    x = stepper.advance(x, &mut rng).unwrap();
                }
                x
            })
            .collect();
        let (mean, se) = crate::numerics::mean_and_std_error(&ends);
        let exact = 2.0 * (-1f64).exp();
        assert!((mean - exact).abs() < 3.0 * se, "{mean} vs {exact} (se {se})");
    }

    #[test]
    fn bounds_validation_catches_outward_drift() {
        let spec = DiffusionSpec::new(Coefficient::affine(0.0, 1.0), Coefficient::constant(1.0), Domain::FullLine);
        let b = DiffusionBounds { growth: 1.0, radius: 1.0, sigma_min: 0.5, sigma_max: 2.0 };
        assert!(spec.validate(&b).is_err());
        let ou = DiffusionSpec::ornstein_uhlenbeck(1.0, 1.0);
        assert!(ou.validate(&b).is_ok());
        let tight = DiffusionBounds { sigma_min: 1.5, ..b };
        assert!(ou.validate(&tight).is_err());
    }
}
