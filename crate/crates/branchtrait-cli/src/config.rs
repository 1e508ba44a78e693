//! Experiment files: one TOML table per stage of the pipeline.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use branchtrait::branching_sim::{subsample_incomplete_tree, Fragmentation, ModelSpec, MAX_GENERATION};
use branchtrait::mle::{GridPlan, RateFamily, RateShape};
use branchtrait::nonparam::{bandwidth_rule, make_kernel, BandwidthMode, KernelKind, KernelSpec};
use branchtrait::sde_flow::{DiffusionBounds, DiffusionSpec, Domain};
use branchtrait::transition_kernel::{McOptions, SpectralParams};

use crate::error::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub observation: ObservationConfig,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub study: StudyConfig,
    #[serde(default)]
    pub diagnose: DiagnoseConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DiffusionConfig {
    /// Brownian motion with constant drift reflected on [0, length].
    Reflected { drift: f64, sigma: f64, length: f64 },
    OrnsteinUhlenbeck { beta: f64, sigma: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub diffusion: DiffusionConfig,
    /// Rate family: constant theta or 1 + theta x.
    pub rate: RateShape,
    /// Rate parameter of the simulated data.
    pub theta: f64,
    /// Parameter box; defaults to the smallest interval holding `theta` and
    /// the search window.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_box: Option<[f64; 2]>,
    #[serde(default = "default_fragmentation")]
    pub fragmentation: Fragmentation,
}

fn default_fragmentation() -> Fragmentation {
    Fragmentation::uniform(1e-4)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub depth: u32,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_x0")]
    pub x0: f64,
    pub seed: u64,
}

fn default_dt() -> f64 {
    5e-4
}

fn default_x0() -> f64 {
    0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SchemePolicy {
    /// Keep child 0 always and child 1 of the lexicographically first nodes.
    #[default]
    Lexicographic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationConfig {
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default)]
    pub policy: SchemePolicy,
}

fn default_rho() -> f64 {
    1.0
}

impl Default for ObservationConfig {
    fn default() -> Self {
        Self { rho: default_rho(), policy: SchemePolicy::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EvaluatorConfig {
    /// Closed-form q; reflected constant-drift model, constant rate, uniform fragmentation.
    Spectral {
        #[serde(default = "default_terms")]
        terms: usize,
    },
    /// Kernel estimate of q from an auxiliary tree simulated at each theta.
    Nonparametric { depth: u32 },
    MonteCarlo { paths: usize },
    /// Synthetic exp(-curvature (theta - center)^2), for testing the search.
    Quadratic { center: f64, curvature: f64 },
}

fn default_terms() -> usize {
    500
}

impl EvaluatorConfig {
    pub fn name(&self) -> &'static str {
        match self {
            EvaluatorConfig::Spectral { .. } => "spectral",
            EvaluatorConfig::Nonparametric { .. } => "nonparametric",
            EvaluatorConfig::MonteCarlo { .. } => "monte_carlo",
            EvaluatorConfig::Quadratic { .. } => "quadratic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    #[serde(default = "default_kernel")]
    pub kernel: KernelKind,
    #[serde(default = "default_order")]
    pub kernel_order: usize,
    #[serde(default = "default_bandwidth")]
    pub bandwidth: BandwidthMode,
    /// Points per axis of the nu and q grids.
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    /// Floor of the q denominator.
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_evaluator")]
    pub evaluator: EvaluatorConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridPlan>,
}

fn default_kernel() -> KernelKind {
    KernelKind::Gaussian
}

fn default_order() -> usize {
    1
}

fn default_bandwidth() -> BandwidthMode {
    BandwidthMode::Practical
}

fn default_grid_points() -> usize {
    64
}

fn default_threshold() -> f64 {
    0.05
}

fn default_evaluator() -> EvaluatorConfig {
    EvaluatorConfig::Spectral { terms: default_terms() }
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            kernel: default_kernel(),
            kernel_order: default_order(),
            bandwidth: default_bandwidth(),
            grid_points: default_grid_points(),
            threshold: default_threshold(),
            evaluator: default_evaluator(),
            grid: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    #[serde(default = "default_one")]
    pub replications: usize,
    /// Worker threads.
    #[serde(default = "default_one")]
    pub jobs: usize,
}

fn default_one() -> usize {
    1
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self { replications: 1, jobs: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseConfig {
    /// Radius beyond which the drift is taken to point inward (OU certificate).
    #[serde(default = "default_radius")]
    pub radius: f64,
    /// One-step transitions per probe point of the drift check.
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_points")]
    pub points: usize,
    /// Half-width of the probe grid on the real line.
    #[serde(default = "default_span")]
    pub span: f64,
}

fn default_radius() -> f64 {
    0.1
}

fn default_samples() -> usize {
    10_000
}

fn default_points() -> usize {
    7
}

fn default_span() -> f64 {
    3.0
}

impl Default for DiagnoseConfig {
    fn default() -> Self {
        Self { radius: default_radius(), samples: default_samples(), points: default_points(), span: default_span() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: default_dir() }
    }
}

fn invalid(msg: impl Into<String>) -> HarnessError {
    HarnessError::Validation(msg.into())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is always representable in TOML")
    }

    /// Hex SHA-256 of the serialized configuration.
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_toml().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn diffusion(&self) -> DiffusionSpec {
        match self.model.diffusion {
            DiffusionConfig::Reflected { drift, sigma, length } => DiffusionSpec::reflected_brownian(drift, sigma, length),
            DiffusionConfig::OrnsteinUhlenbeck { beta, sigma } => DiffusionSpec::ornstein_uhlenbeck(beta, sigma),
        }
    }

    fn bounds(&self) -> DiffusionBounds {
        match self.model.diffusion {
            DiffusionConfig::Reflected { drift, sigma, length } => {
                DiffusionBounds { growth: drift.abs(), radius: length, sigma_min: sigma, sigma_max: sigma }
            }
            DiffusionConfig::OrnsteinUhlenbeck { beta, sigma } => {
                DiffusionBounds { growth: beta, radius: self.diagnose.radius, sigma_min: sigma, sigma_max: sigma }
            }
        }
    }

    pub fn family(&self) -> Result<RateFamily, HarnessError> {
        let [lo, hi] = self.model.theta_box.unwrap_or_else(|| {
            let t = self.model.theta;
            match self.estimator.grid {
                Some(g) => [t.min(g.theta_min), t.max(g.theta_max)],
                None => [t, t],
            }
        });
        Ok(RateFamily::new(self.model.rate, lo, hi, self.diffusion().domain)?)
    }

    /// Model at the true parameter, with the declared diffusion bounds.
    pub fn model_spec(&self) -> Result<ModelSpec, HarnessError> {
        self.model_at(self.model.theta)
    }

    pub fn model_at(&self, theta: f64) -> Result<ModelSpec, HarnessError> {
        let division = self.family()?.division_rate(theta)?;
        Ok(ModelSpec::new(self.diffusion(), division, self.model.fragmentation).with_bounds(self.bounds()))
    }

    pub fn kernel(&self) -> Result<KernelSpec, HarnessError> {
        Ok(make_kernel(self.estimator.kernel, self.estimator.kernel_order)?)
    }

    pub fn grid_plan(&self) -> Result<GridPlan, HarnessError> {
        self.estimator.grid.ok_or_else(|| invalid("estimator.grid is required for maximum likelihood"))
    }

    pub fn spectral_params(&self) -> Result<SpectralParams, HarnessError> {
        let EvaluatorConfig::Spectral { terms } = self.estimator.evaluator else {
            return Err(invalid("not a spectral evaluator"));
        };
        let DiffusionConfig::Reflected { drift, sigma, length } = self.model.diffusion else {
            return Err(invalid("the spectral evaluator needs the reflected diffusion"));
        };
        if self.model.rate != RateShape::Constant {
            return Err(invalid("the spectral evaluator needs the constant rate family"));
        }
        let Fragmentation::Uniform { eps } = self.model.fragmentation else {
            return Err(invalid("the spectral evaluator needs uniform fragmentation"));
        };
        let p = SpectralParams::new(drift, sigma, length, eps).with_terms(terms);
        p.validate()?;
        Ok(p)
    }

    pub fn mc_options(&self) -> Option<McOptions> {
        match self.estimator.evaluator {
            EvaluatorConfig::MonteCarlo { paths } => Some(McOptions::new(paths, self.simulation.dt)),
            _ => None,
        }
    }

    /// Runs every parameter through the validation of the module that owns it.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let sim = &self.simulation;
        if sim.depth >= MAX_GENERATION {
            return Err(invalid(format!("depth {} exceeds the generation limit {MAX_GENERATION}", sim.depth)));
        }
        if !(sim.dt > 0.0 && sim.dt.is_finite()) {
            return Err(invalid(format!("time step must be positive, got {}", sim.dt)));
        }
        if !self.diffusion().domain.contains(sim.x0) {
            return Err(invalid(format!("initial trait {} outside the state space", sim.x0)));
        }
        if !(self.model.theta.is_finite()) {
            return Err(invalid("theta must be finite"));
        }
        let family = self.family()?;
        if !family.contains(self.model.theta) {
            return Err(invalid(format!("theta {} outside the parameter box", self.model.theta)));
        }
        let spec = self.model_spec()?;
        spec.validate()?;
        spec.diffusion.validate(&self.bounds())?;
        subsample_incomplete_tree(0, self.observation.rho)?;
        let est = &self.estimator;
        self.kernel()?;
        bandwidth_rule(1, est.bandwidth)?;
        if est.grid_points < 2 {
            return Err(invalid("estimator.grid_points must be at least 2"));
        }
        if !(est.threshold > 0.0) {
            return Err(invalid("estimator.threshold must be positive"));
        }
        if let Some(g) = est.grid {
            if !(g.step > 0.0 && g.step_floor > 0.0 && g.step_floor <= g.step && g.theta_min <= g.theta_max) {
                return Err(invalid("estimator.grid needs theta_min <= theta_max and 0 < step_floor <= step"));
            }
            if !(family.contains(g.theta_min) && family.contains(g.theta_max)) {
                return Err(invalid("estimator.grid leaves the parameter box"));
            }
        }
        match est.evaluator {
            // only binding once a search is configured; diagnose-only OU files keep the default
            EvaluatorConfig::Spectral { .. } => {
                if est.grid.is_some() {
                    self.spectral_params()?;
                }
            }
            EvaluatorConfig::Nonparametric { depth } => {
                if depth == 0 || depth >= MAX_GENERATION {
                    return Err(invalid(format!("auxiliary depth must be in 1..{MAX_GENERATION}")));
                }
            }
            EvaluatorConfig::MonteCarlo { paths } => {
                if paths == 0 {
                    return Err(invalid("Monte Carlo evaluator needs at least one path"));
                }
            }
            EvaluatorConfig::Quadratic { curvature, center } => {
                if !(curvature > 0.0 && center.is_finite()) {
                    return Err(invalid("quadratic evaluator needs a finite centre and positive curvature"));
                }
            }
        }
        if self.study.replications == 0 || self.study.jobs == 0 {
            return Err(invalid("study needs at least one replication and one job"));
        }
        let d = &self.diagnose;
        if !(d.radius > 0.0 && d.span > 0.0 && d.points >= 1 && d.samples >= 1) {
            return Err(invalid("diagnose needs positive radius, span, points and samples"));
        }
        Ok(())
    }

    /// Observed domain used for nu and q grids.
    pub fn axis_range(&self, data: &[f64]) -> (f64, f64) {
        match self.diffusion().domain {
            Domain::Reflected { length } => (0.0, length),
            Domain::FullLine => {
                let lo = data.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if lo < hi { (lo, hi) } else { (lo - 1.0, lo + 1.0) }
            }
        }
    }
}
