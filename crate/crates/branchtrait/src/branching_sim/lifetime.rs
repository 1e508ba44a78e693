use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use super::ModelSpec;
use crate::error::{Error, Result};
use crate::sde_flow::{Domain, Stepper};

/// Outcome of one lifetime: division time and the trait just before division.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Division {
    pub lifetime: f64,
    pub trait_at_division: f64,
}

#[derive(Debug, Clone, Copy)]
enum Dominating {
    Uniform(f64),
    Envelope { scale: f64, exponent: f64, lower: f64 },
}

/// Thinning sampler for the division time with hazard B(phi(t)).
///
/// The hazard is held constant over each Euler step (left point), so the
/// thinning is exact for the discretized path.
pub struct LifetimeSampler<'a> {
    spec: &'a ModelSpec,
    stepper: Stepper<'a>,
    dominating: Dominating,
    window_steps: usize,
}

const PROBE: usize = 1001;
const WINDOW: f64 = 1.0;

impl<'a> LifetimeSampler<'a> {
    pub fn new(spec: &'a ModelSpec, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Parameter(format!("time step must be positive, got {dt}")));
        }
        let rate = &spec.division;
        let dominating = match (rate.rate.as_constant(), spec.diffusion.domain) {
            (Some(b), _) => Dominating::Uniform(b),
            (None, Domain::Reflected { length }) => {
                let sup = rate.rate.sup_on(0.0, length).unwrap_or_else(|| {
                    let probe = (0..PROBE)
                        .map(|i| rate.eval(length * i as f64 / (PROBE - 1) as f64))
                        .fold(0.0, f64::max);
                    // slack for the maximum falling between probe points
                    probe * 1.01
                });
                Dominating::Uniform(sup)
            }
            (None, Domain::FullLine) => match (rate.upper, rate.envelope) {
                (Some(b4), _) => Dominating::Uniform(b4),
                (None, Some(env)) => Dominating::Envelope {
                    scale: env.scale,
                    exponent: env.exponent,
                    lower: rate.lower,
                },
                (None, None) => {
                    return Err(Error::Configuration(
                        "division rate on the real line needs an upper bound or a growth envelope".into(),
                    ))
                }
            },
        };
        if let Dominating::Uniform(b) = dominating {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::Configuration(format!("dominating rate must be positive and finite, got {b}")));
            }
        }
        Ok(Self {
            spec,
            stepper: spec.diffusion.stepper(dt),
            dominating,
            window_steps: ((WINDOW / dt).round() as usize).max(1),
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, x0: f64, rng: &mut R) -> Result<Division> {
        if !self.spec.diffusion.domain.contains(x0) {
            return Err(Error::Domain(format!("initial trait {x0} outside {:?}", self.spec.diffusion.domain)));
        }
        match self.dominating {
            Dominating::Uniform(bound) => self.sample_uniform(x0, bound, rng),
            Dominating::Envelope { scale, exponent, lower } => {
                self.sample_windowed(x0, scale, exponent, lower, rng)
            }
        }
    }

    fn accept<R: Rng + ?Sized>(&self, x: f64, bound: f64, rng: &mut R) -> Result<bool> {
        let b = self.spec.division.eval(x);
        if !b.is_finite() || b < 0.0 {
            return Err(Error::Numeric(format!("division rate {b} at x={x}")));
        }
        if b > bound * (1.0 + 1e-9) {
            return Err(Error::Configuration(format!(
                "division rate {b} at x={x} exceeds the dominating rate {bound}"
            )));
        }
        Ok(rng.random::<f64>() * bound < b)
    }

    fn sample_uniform<R: Rng + ?Sized>(&self, x0: f64, bound: f64, rng: &mut R) -> Result<Division> {
        let dt = self.stepper.dt;
        let mut t = 0.0;
        let mut step = 0u64;
        let mut x = x0;
        loop {
            let e: f64 = Exp1.sample(rng);
            t += e / bound;
            let target = (t / dt).floor() as u64;
            while step < target {
                let xi: f64 = rng.sample(StandardNormal);
                x = self.stepper.step(x, xi)?.0;
                step += 1;
            }
            if self.accept(x, bound, rng)? {
                return Ok(Division { lifetime: t, trait_at_division: x });
            }
        }
    }

    fn sample_windowed<R: Rng + ?Sized>(
        &self,
        x0: f64,
        scale: f64,
        exponent: f64,
        lower: f64,
        rng: &mut R,
    ) -> Result<Division> {
        let dt = self.stepper.dt;
        let n = self.window_steps;
        let mut buffer = Vec::with_capacity(n + 1);
        let mut x = x0;
        let mut first_step = 0u64;
        loop {
            buffer.clear();
            buffer.push(x);
            for _ in 0..n {
                let xi: f64 = rng.sample(StandardNormal);
                x = self.stepper.step(x, xi)?.0;
                buffer.push(x);
            }
            let peak = buffer[..n].iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let bound = scale * peak.powf(exponent) + lower;
            let start = first_step as f64 * dt;
            let end = (first_step + n as u64) as f64 * dt;
            let mut t = start;
            loop {
                let e: f64 = Exp1.sample(rng);
                t += e / bound;
                if t >= end {
                    break;
                }
                let idx = (((t / dt).floor() as u64).saturating_sub(first_step) as usize).min(n - 1);
                let xt = buffer[idx];
                if self.accept(xt, bound, rng)? {
                    return Ok(Division { lifetime: t, trait_at_division: xt });
                }
            }
            first_step += n as u64;
        }
    }
}

/// One division time from `x0`; see [`LifetimeSampler`].
pub fn sample_lifetime<R: Rng + ?Sized>(spec: &ModelSpec, x0: f64, dt: f64, rng: &mut R) -> Result<Division> {
    LifetimeSampler::new(spec, dt)?.sample(x0, rng)
}
