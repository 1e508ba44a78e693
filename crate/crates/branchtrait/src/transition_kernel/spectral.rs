//! Eigenfunction expansion for Brownian motion with constant drift reflected
//! on [0, L], and the transition density q_theta it induces when the division
//! rate is the constant theta and fragmentation is uniform.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use super::potential::{stationary_density, Potential};
use crate::numerics::GaussLegendre;

/// Which argument the stationary term of the expansion depends on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StationaryVariant {
    /// 2 r e^{2 r z} / (e^{2 r L} - 1): the stationary law of the endpoint.
    #[default]
    Target,
    /// 2 r e^{2 r x} / (e^{2 r L} - 1), evaluated at the starting point.
    Source,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralParams {
    pub drift: f64,
    pub volatility: f64,
    pub length: f64,
    /// Fragmentation half-gap of the uniform law on [eps, 1 - eps].
    pub eps: f64,
    pub terms: usize,
    #[serde(default)]
    pub stationary: StationaryVariant,
}

impl SpectralParams {
    pub fn new(drift: f64, volatility: f64, length: f64, eps: f64) -> Self {
        Self { drift, volatility, length, eps, terms: 500, stationary: StationaryVariant::Target }
    }

    pub fn with_terms(mut self, terms: usize) -> Self {
        self.terms = terms;
        self
    }

    pub fn with_stationary(mut self, v: StationaryVariant) -> Self {
        self.stationary = v;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.drift.is_finite()
            && self.volatility > 0.0
            && self.length > 0.0
            && self.length.is_finite()
            && self.eps > 0.0
            && self.eps < 0.5
            && self.terms >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::Parameter(format!("invalid spectral parameters {self:?}")))
        }
    }

    /// Drift and length in units where the volatility is one.
    fn scaled(&self) -> (f64, f64) {
        (self.drift / self.volatility, self.length / self.volatility)
    }

    fn check_state(&self, v: f64, name: &str) -> Result<()> {
        if (0.0..=self.length).contains(&v) {
            Ok(())
        } else {
            Err(Error::Domain(format!("{name}={v} outside [0, {}]", self.length)))
        }
    }
}

/// Series value with its truncation diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesValue {
    pub value: f64,
    /// Truncated sum before clamping at zero.
    pub raw: f64,
    /// The raw sum was below -1e-8 and has been clamped.
    pub clamped: bool,
    /// The last retained term exceeds 1e-10 in magnitude.
    pub tail_warning: bool,
}

const NEGATIVE_TOLERANCE: f64 = -1e-8;
const TAIL_TOLERANCE: f64 = 1e-10;

impl SeriesValue {
    fn new(raw: f64, last_term: f64) -> Self {
        Self {
            value: raw.max(0.0),
            raw,
            clamped: raw < NEGATIVE_TOLERANCE,
            tail_warning: last_term.abs() > TAIL_TOLERANCE,
        }
    }
}

/// Transition density rho_t(x, z) of the reflected motion with drift r and
/// volatility sigma on [0, L], truncated to `terms` eigenfunctions.
pub fn spectral_density_reflected(params: &SpectralParams, t: f64, x: f64, z: f64) -> Result<SeriesValue> {
    params.validate()?;
    if !(t > 0.0) {
        return Err(Error::Parameter(format!("need t > 0, got {t}")));
    }
    params.check_state(x, "x")?;
    params.check_state(z, "z")?;
    let (mu, len) = params.scaled();
    let (xs, zs) = (x / params.volatility, z / params.volatility);
    let stat = match params.stationary {
        StationaryVariant::Target => stationary_density(mu, len, zs),
        StationaryVariant::Source => stationary_density(mu, len, xs),
    };
    let pref = 2.0 / len * (mu * (zs - xs)).exp();
    let mut sum = 0.0;
    let mut last = 0.0;
    for n in 1..=params.terms {
        let k = n as f64 * PI / len;
        let a = mu * mu + k * k;
        let (sx, cx) = (k * xs).sin_cos();
        let (sz, cz) = (k * zs).sin_cos();
        last = (-0.5 * a * t).exp() / a * (k * cx + mu * sx) * (k * cz + mu * sz);
        sum += last;
    }
    let inv = 1.0 / params.volatility;
    Ok(SeriesValue::new((stat + pref * sum) * inv, pref * last * inv))
}

/// Resolvent int_0^inf e^{-theta t} rho_t(x, u) dt from the same expansion.
///
/// The weights 1/(a (theta + a/2)) are split as 2/a^2 - 2 theta/(a^2 (theta + a/2));
/// the first part sums to the fundamental solution, evaluated in closed form,
/// and only the second, with terms of order n^-4, is truncated.
pub fn spectral_resolvent(params: &SpectralParams, theta: f64, x: f64, u: f64) -> Result<f64> {
    params.validate()?;
    params.check_state(x, "x")?;
    params.check_state(u, "u")?;
    check_theta(theta)?;
    let (mu, len) = params.scaled();
    let (xs, us) = (x / params.volatility, u / params.volatility);
    let stat = match params.stationary {
        StationaryVariant::Target => stationary_density(mu, len, us),
        StationaryVariant::Source => stationary_density(mu, len, xs),
    };
    let mut sum = 0.0;
    for n in 1..=params.terms {
        let k = n as f64 * PI / len;
        let a = mu * mu + k * k;
        let (sx, cx) = (k * xs).sin_cos();
        let (su, cu) = (k * us).sin_cos();
        sum += (k * cx + mu * sx) * (k * cu + mu * su) * 2.0 * theta / (a * a * (theta + 0.5 * a));
    }
    let potential = Potential::new(mu, len).eval(xs, us);
    Ok((stat / theta + potential - 2.0 / len * (mu * (us - xs)).exp() * sum) / params.volatility)
}

/// q_theta(x, y) and its derivative in theta.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralQ {
    pub q: f64,
    pub dq_dtheta: f64,
    pub clamped: bool,
    pub tail_warning: bool,
}

const CELLS: usize = 1024;
const PANEL_NODES: usize = 8;

/// Precomputed cumulative integrals int_0^v h_n(u) du of the smooth parts of
/// e^{mu u} g(n, u) / u, one row per grid node, so that every (x, y) pair
/// needs only two partial cells.
///
/// q_theta = (1/(sigma (1 - 2 eps))) int_{y/(1-eps)}^{min(y/eps, L)} theta R_theta(x, u) du/u
/// with R_theta the resolvent. As in [`spectral_resolvent`], the part of the
/// resolvent weights that does not depend on theta is summed in closed form,
/// so the truncated remainder decays like n^-5 for q and its derivative.
#[derive(Debug, Clone)]
pub struct SpectralTable {
    params: SpectralParams,
    mu: f64,
    len: f64,
    cell: f64,
    /// (CELLS + 1) rows of (terms + 1) cumulative values; column 0 is the
    /// stationary part.
    cumulative: Vec<f64>,
    /// Coefficient of log(b/a) in each column.
    log_weight: Vec<f64>,
    eigen: Vec<f64>,
    rule: GaussLegendre,
    potential: Potential,
}

struct PairTerms {
    /// Entry 0 is the stationary integral, entry n the x-eigenfunction times
    /// the u-integral of the n-th density eigenfunction.
    terms: Vec<f64>,
    /// int Z(x, u) du/u over the same range.
    potential: f64,
}

impl SpectralTable {
    pub fn new(params: SpectralParams) -> Result<Self> {
        params.validate()?;
        let (mu, len) = params.scaled();
        let n = params.terms;
        let cell = len / CELLS as f64;
        let mut log_weight = vec![0.0; n + 1];
        let mut eigen = vec![0.0; n + 1];
        if params.stationary == StationaryVariant::Target {
            log_weight[0] = stationary_density(mu, len, 0.0);
        }
        for k in 1..=n {
            let kk = k as f64 * PI / len;
            log_weight[k] = kk;
            eigen[k] = mu * mu + kk * kk;
        }
        let mut table = Self {
            params,
            mu,
            len,
            cell,
            cumulative: vec![0.0; (CELLS + 1) * (n + 1)],
            log_weight,
            eigen,
            rule: GaussLegendre::new(PANEL_NODES),
            potential: Potential::new(mu, len),
        };
        let mut acc = vec![0.0; n + 1];
        for j in 0..CELLS {
            let (lo, hi) = (j as f64 * cell, (j + 1) as f64 * cell);
            table.add_smooth_integral(lo, hi, &mut acc);
            table.cumulative[(j + 1) * (n + 1)..(j + 2) * (n + 1)].copy_from_slice(&acc);
        }
        Ok(table)
    }

    pub fn params(&self) -> &SpectralParams {
        &self.params
    }

    fn columns(&self) -> usize {
        self.params.terms + 1
    }

    /// Adds int_lo^hi h_n(u) du to `acc[n]` for every column.
    fn add_smooth_integral(&self, lo: f64, hi: f64, acc: &mut [f64]) {
        if hi <= lo {
            return;
        }
        let mu = self.mu;
        let stat0 = self.log_weight[0];
        let base = PI / self.len;
        for (u, w) in self.rule.mapped(lo, hi) {
            let inv_u = 1.0 / u;
            if self.params.stationary == StationaryVariant::Target {
                acc[0] += w * stat0 * (2.0 * mu * u).exp_m1() * inv_u;
            }
            let em = (mu * u).exp();
            let em1 = (mu * u).exp_m1();
            let (s1, c1) = (base * u).sin_cos();
            let (mut s, mut c) = (s1, c1);
            for (n, a) in acc.iter_mut().enumerate().skip(1) {
                let k = n as f64 * base;
                let h = (k * (em1 * c - (1.0 - c)) + mu * em * s) * inv_u;
                *a += w * h;
                let next_c = c * c1 - s * s1;
                s = s * c1 + c * s1;
                c = next_c;
            }
        }
    }

    /// Cumulative integrals up to `v` (scaled units).
    fn cumulative_at(&self, v: f64, out: &mut [f64]) {
        let cols = self.columns();
        let j = ((v / self.cell).floor() as usize).min(CELLS);
        out.copy_from_slice(&self.cumulative[j * cols..(j + 1) * cols]);
        let node = j as f64 * self.cell;
        if v > node {
            self.add_smooth_integral(node, v, out);
        }
    }

    /// Theta-free per-pair quantities; None when q vanishes at this pair.
    fn pair_terms(&self, x: f64, y: f64) -> Result<Option<PairTerms>> {
        self.params.check_state(x, "x")?;
        let p = &self.params;
        if !(y > 0.0) {
            return Ok(None);
        }
        let lo = y / (1.0 - p.eps) / p.volatility;
        let hi = (y / p.eps).min(p.length) / p.volatility;
        if lo >= hi {
            return Ok(None);
        }
        let cols = self.columns();
        let mut upper = vec![0.0; cols];
        let mut lower = vec![0.0; cols];
        self.cumulative_at(hi, &mut upper);
        self.cumulative_at(lo, &mut lower);
        let log_ratio = (hi / lo).ln();
        let xs = x / p.volatility;
        let mu = self.mu;
        let mut terms = vec![0.0; cols];
        terms[0] = match p.stationary {
            StationaryVariant::Target => self.log_weight[0] * log_ratio + upper[0] - lower[0],
            StationaryVariant::Source => stationary_density(mu, self.len, xs) * log_ratio,
        };
        let damp = (-mu * xs).exp();
        let base = PI / self.len;
        let (s1, c1) = (base * xs).sin_cos();
        let (mut s, mut c) = (s1, c1);
        for n in 1..cols {
            let k = n as f64 * base;
            let j = k * log_ratio + upper[n] - lower[n];
            terms[n] = damp * (k * c + mu * s) * j;
            let next_c = c * c1 - s * s1;
            s = s * c1 + c * s1;
            c = next_c;
        }
        let potential = self.potential.integral_over_u(xs, lo, hi, &self.rule);
        Ok(Some(PairTerms { terms, potential }))
    }

    fn assemble(&self, pair: &PairTerms, theta: f64, count: usize) -> SpectralQ {
        let p = &self.params;
        let pref = 1.0 / (p.volatility * (1.0 - 2.0 * p.eps));
        let four_over_len = 4.0 / self.len;
        let terms = &pair.terms;
        let mut series = 0.0;
        let mut grad = 0.0;
        let mut last = 0.0;
        for n in 1..=count {
            let a = self.eigen[n];
            let d = theta + 0.5 * a;
            let w = four_over_len / (a * a * d);
            last = theta * theta * w * terms[n];
            series += last;
            grad += theta * (a + theta) * w / d * terms[n];
        }
        let q = pref * (terms[0] + theta * pair.potential - series);
        SpectralQ {
            q: q.max(0.0),
            dq_dtheta: pref * (pair.potential - grad),
            clamped: q < NEGATIVE_TOLERANCE,
            tail_warning: (pref * last).abs() > TAIL_TOLERANCE,
        }
    }

    pub fn q_and_grad(&self, theta: f64, x: f64, y: f64) -> Result<SpectralQ> {
        self.q_and_grad_truncated(theta, x, y, self.params.terms)
    }

    /// Same as [`Self::q_and_grad`] using only the first `count` eigenfunctions.
    pub fn q_and_grad_truncated(&self, theta: f64, x: f64, y: f64, count: usize) -> Result<SpectralQ> {
        check_theta(theta)?;
        let count = count.min(self.params.terms);
        Ok(match self.pair_terms(x, y)? {
            Some(pair) => self.assemble(&pair, theta, count),
            None => SpectralQ { q: 0.0, dq_dtheta: 0.0, clamped: false, tail_warning: false },
        })
    }

    /// Evaluates every theta in `thetas` at one pair, sharing the
    /// theta-independent integrals.
    pub fn q_and_grad_many(&self, thetas: &[f64], x: f64, y: f64, out: &mut [SpectralQ]) -> Result<()> {
        for &t in thetas {
            check_theta(t)?;
        }
        let terms = self.pair_terms(x, y)?;
        for (o, &t) in out.iter_mut().zip(thetas) {
            *o = match &terms {
                Some(pair) => self.assemble(pair, t, self.params.terms),
                None => SpectralQ { q: 0.0, dq_dtheta: 0.0, clamped: false, tail_warning: false },
            };
        }
        Ok(())
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if theta > 0.0 && theta.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!("need theta > 0, got {theta}")))
    }
}

/// q_theta(x, y) and d q_theta / d theta for the constant rate theta.
///
/// Builds a fresh table; reuse a [`SpectralTable`] for repeated evaluations.
pub fn spectral_q_and_grad(params: &SpectralParams, theta: f64, x: f64, y: f64) -> Result<SpectralQ> {
    SpectralTable::new(*params)?.q_and_grad(theta, x, y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::adaptive_simpson;

    #[test]
    fn stationary_density_integrates_to_one() {
        for mu in [-2.0, -0.5, 0.0, 0.7, 30.0] {
            let m = adaptive_simpson(|u| stationary_density(mu, 1.3, u), 0.0, 1.3, 1e-12);
            assert!((m - 1.0).abs() < 1e-10, "mu={mu}: {m}");
        }
    }

    #[test]
    fn large_time_density_is_stationary() {
        let p = SpectralParams::new(-0.5, 1.0, 1.0, 0.1);
        let t = 200.0;
        for z in [0.0, 0.3, 0.9] {
            let v = spectral_density_reflected(&p, t, 0.2, z).unwrap();
            let s = -(-z).exp() / (-1f64).exp_m1();
            assert!((v.value - s).abs() < 1e-12, "{} vs {s}", v.value);
        }
    }

    #[test]
    fn density_is_normalised() {
        let p = SpectralParams::new(-0.5, 1.0, 1.0, 0.1);
        for t in [0.1, 1.0] {
            let m = adaptive_simpson(|z| spectral_density_reflected(&p, t, 0.3, z).unwrap().value, 0.0, 1.0, 1e-10);
            assert!((m - 1.0).abs() < 1e-6, "t={t}: {m}");
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = SpectralParams::new(-0.5, 1.0, 1.0, 0.1);
        assert!(spectral_density_reflected(&p, 0.0, 0.3, 0.3).is_err());
        assert!(matches!(spectral_density_reflected(&p, 1.0, 1.3, 0.3), Err(Error::Domain(_))));
        assert!(SpectralParams::new(-0.5, 1.0, 1.0, 0.6).validate().is_err());
    }

    #[test]
    fn q_vanishes_outside_support() {
        let t = SpectralTable::new(SpectralParams::new(-0.5, 1.0, 1.0, 0.1)).unwrap();
        assert_eq!(t.q_and_grad(2.0, 0.5, 0.95).unwrap().q, 0.0);
        assert_eq!(t.q_and_grad(2.0, 0.5, 0.0).unwrap().q, 0.0);
        assert!(t.q_and_grad(2.0, 0.5, 0.85).unwrap().q > 0.0);
    }

    #[test]
    fn batch_matches_single() {
        let t = SpectralTable::new(SpectralParams::new(-0.3, 1.2, 1.0, 0.05).with_terms(200)).unwrap();
        let thetas = [0.5, 2.0, 7.0];
        let mut out = [SpectralQ { q: 0.0, dq_dtheta: 0.0, clamped: false, tail_warning: false }; 3];
        t.q_and_grad_many(&thetas, 0.4, 0.3, &mut out).unwrap();
        for (o, &th) in out.iter().zip(&thetas) {
            assert_eq!(*o, t.q_and_grad(th, 0.4, 0.3).unwrap());
        }
    }
}
