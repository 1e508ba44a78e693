use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use branchtrait::branching_sim::{extract_pairs, generate_tree, subsample_incomplete_tree, Fragmentation, TreeDataset, TreeOptions};
use branchtrait::ergodicity::{drift_constants, ou_certificate, verify_drift_mc, DriftConstants, DriftReport, ErgodicityCertificate};
use branchtrait::mle::{
    grid_mle, AuxiliaryPlan, McEvaluator, MleResult, NonparametricEvaluator, QEvaluator, QuadraticEvaluator, RateShape, SpectralEvaluator,
};
use branchtrait::nonparam::{bandwidth_rule, estimate_nu, estimate_q};
use branchtrait::numerics::linspace;
use branchtrait::seed::stream;
use branchtrait::transition_kernel::SpectralTable;

use crate::config::{DiffusionConfig, EvaluatorConfig, ExperimentConfig};
use crate::error::HarnessError;

pub type Result<T> = std::result::Result<T, HarnessError>;

/// What `estimate` computes from a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Which {
    Nu,
    Q,
    Mle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node_count: Option<usize>,
    pub files: Vec<String>,
    pub version: String,
}

impl Manifest {
    fn new(command: &str, cfg: &ExperimentConfig) -> Self {
        Self {
            command: command.into(),
            config_hash: cfg.hash(),
            seed: cfg.simulation.seed,
            node_count: None,
            files: Vec::new(),
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }

    fn write(&self, out: &Path) -> Result<()> {
        write_json(&out.join("manifest.json"), self)
    }
}

pub(crate) fn prepare_dir(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))
}

pub(crate) fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| HarnessError::io(path, e))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| HarnessError::io(path, e.into()))?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| HarnessError::io(path, e))
}

/// Builds the q evaluator named in the configuration; the spectral table is
/// computed once and shared by every replication.
pub struct EvaluatorFactory<'a> {
    cfg: &'a ExperimentConfig,
    table: Option<SpectralTable>,
}

impl<'a> EvaluatorFactory<'a> {
    pub fn new(cfg: &'a ExperimentConfig) -> Result<Self> {
        let table = match cfg.estimator.evaluator {
            EvaluatorConfig::Spectral { .. } => Some(SpectralTable::new(cfg.spectral_params()?)?),
            _ => None,
        };
        Ok(Self { cfg, table })
    }

    /// `seed` drives the stochastic evaluators.
    pub fn build(&self, seed: u64) -> Result<Box<dyn QEvaluator + 'a>> {
        let cfg = self.cfg;
        let est = &cfg.estimator;
        Ok(match est.evaluator {
            EvaluatorConfig::Spectral { .. } => {
                Box::new(SpectralEvaluator::new(self.table.clone().expect("table built with the factory")))
            }
            EvaluatorConfig::Nonparametric { depth } => Box::new(NonparametricEvaluator {
                model: cfg.model_spec()?,
                family: cfg.family()?,
                plan: AuxiliaryPlan {
                    depth,
                    x0: cfg.simulation.x0,
                    dt: cfg.simulation.dt,
                    grid_points: est.grid_points,
                    threshold: est.threshold,
                    bandwidth: est.bandwidth,
                },
                seed,
            }),
            EvaluatorConfig::MonteCarlo { .. } => Box::new(McEvaluator {
                model: cfg.model_spec()?,
                family: cfg.family()?,
                options: cfg.mc_options().expect("Monte Carlo evaluator"),
                seed,
            }),
            EvaluatorConfig::Quadratic { center, curvature } => Box::new(QuadraticEvaluator { center, curvature }),
        })
    }
}

pub fn simulate_tree(cfg: &ExperimentConfig, seed: u64) -> Result<TreeDataset> {
    let s = &cfg.simulation;
    Ok(generate_tree(&cfg.model_spec()?, s.x0, s.depth, s.dt, seed, TreeOptions::default())?)
}

/// Observed (parent, child) pairs of a tree under the configured scheme.
pub fn observed_pairs(cfg: &ExperimentConfig, tree: &TreeDataset) -> Result<Vec<(f64, f64)>> {
    let scheme = subsample_incomplete_tree(tree.max_generation(), cfg.observation.rho)?;
    Ok(extract_pairs(tree, &scheme)?)
}

/// Tree CSV and manifest.
pub fn run_simulate(cfg: &ExperimentConfig, out: &Path) -> Result<Manifest> {
    prepare_dir(out)?;
    let tree = simulate_tree(cfg, cfg.simulation.seed)?;
    let path = out.join("tree.csv");
    let mut w = create(&path)?;
    tree.write_csv(&mut w)?;
    w.flush().map_err(|e| HarnessError::io(&path, e))?;
    let mut m = Manifest::new("simulate", cfg);
    m.node_count = Some(tree.node_count());
    m.files.push("tree.csv".into());
    m.write(out)?;
    Ok(m)
}

pub fn read_tree(path: &Path) -> Result<TreeDataset> {
    let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    Ok(TreeDataset::read_csv(std::io::BufReader::new(file))?)
}

/// nu: `nu.csv` (x, value); q: `q_grid.csv` plus `q_grid.json`;
/// mle: `mle.json` plus `mle_trace.csv`.
pub fn run_estimate(cfg: &ExperimentConfig, data: &Path, which: Which, out: &Path) -> Result<Manifest> {
    let tree = read_tree(data)?;
    prepare_dir(out)?;
    let mut m = Manifest::new("estimate", cfg);
    m.node_count = Some(tree.node_count());
    let est = &cfg.estimator;
    let scheme = subsample_incomplete_tree(tree.max_generation(), cfg.observation.rho)?;
    match which {
        Which::Nu => {
            let traits: Vec<f64> = scheme
                .members()
                .iter()
                .map(|&u| tree.node(u).map(|r| r.trait_at_birth))
                .collect::<Option<_>>()
                .ok_or_else(|| branchtrait::Error::Consistency("scheme node missing from the dataset".into()))?;
            let (lo, hi) = cfg.axis_range(&traits);
            let bw = bandwidth_rule(traits.len(), est.bandwidth)?;
            let nu = estimate_nu(&traits, &linspace(lo, hi, est.grid_points), bw.h, &cfg.kernel()?)?;
            let path = out.join("nu.csv");
            let mut w = create(&path)?;
            nu.write_csv(&mut w)?;
            w.flush().map_err(|e| HarnessError::io(&path, e))?;
            m.files.push("nu.csv".into());
        }
        Which::Q => {
            let pairs = extract_pairs(&tree, &scheme)?;
            let values: Vec<f64> = pairs.iter().flat_map(|&(x, y)| [x, y]).collect();
            let (lo, hi) = cfg.axis_range(&values);
            let axis = linspace(lo, hi, est.grid_points);
            let bw = bandwidth_rule(scheme.len(), est.bandwidth)?;
            let q = estimate_q(&pairs, &axis, &axis, bw, est.threshold, &cfg.kernel()?)?;
            let path = out.join("q_grid.csv");
            let mut w = create(&path)?;
            q.write_csv(&mut w)?;
            w.flush().map_err(|e| HarnessError::io(&path, e))?;
            let sidecar = serde_json::json!({
                "source": "nonparametric",
                "x_points": axis.len(),
                "y_points": axis.len(),
                "x_range": [lo, hi],
                "y_range": [lo, hi],
                "parameters": {
                    "bandwidths": q.bandwidths,
                    "threshold": q.threshold,
                    "pairs": q.pairs,
                    "clamped_rows": q.clamped.iter().filter(|c| **c).count(),
                    "kernel": est.kernel,
                    "kernel_order": est.kernel_order,
                },
            });
            write_json(&out.join("q_grid.json"), &sidecar)?;
            m.files.extend(["q_grid.csv".into(), "q_grid.json".into()]);
        }
        Which::Mle => {
            let pairs = extract_pairs(&tree, &scheme)?;
            let factory = EvaluatorFactory::new(cfg)?;
            let evaluator = factory.build(branchtrait::seed::derive_seed(cfg.simulation.seed, &[1]))?;
            let result = grid_mle(&pairs, &cfg.family()?, evaluator.as_ref(), &cfg.grid_plan()?)?;
            write_mle(&result, out)?;
            m.files.extend(["mle.json".into(), "mle_trace.csv".into()]);
        }
    }
    m.write(out)?;
    Ok(m)
}

fn write_mle(result: &MleResult, out: &Path) -> Result<()> {
    write_json(&out.join("mle.json"), result)?;
    let path = out.join("mle_trace.csv");
    let mut w = create(&path)?;
    result.write_trace_csv(&mut w)?;
    w.flush().map_err(|e| HarnessError::io(&path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnoseReport {
    pub drift: Option<DriftConstants>,
    pub drift_check: Option<DriftReport>,
    pub certificate: Option<ErgodicityCertificate>,
    /// Why a section is missing.
    pub notes: Vec<String>,
}

/// Drift constants, their Monte-Carlo check on a probe grid and, for the OU
/// model with constant rate and uniform fragmentation, the explicit certificate.
pub fn run_diagnose(cfg: &ExperimentConfig, out: &Path) -> Result<DiagnoseReport> {
    prepare_dir(out)?;
    let spec = cfg.model_spec()?;
    let d = &cfg.diagnose;
    let mut notes = Vec::new();
    let drift = drift_constants(&spec)?;
    let xs = match cfg.model.diffusion {
        DiffusionConfig::Reflected { length, .. } => linspace(0.0, length, d.points),
        DiffusionConfig::OrnsteinUhlenbeck { .. } => linspace(-d.span, d.span, d.points),
    };
    let drift_check = verify_drift_mc(&spec, &xs, d.samples, cfg.simulation.dt, &mut stream(cfg.simulation.seed, &[2]))?;
    let certificate = match (cfg.model.diffusion, cfg.model.rate, cfg.model.fragmentation) {
        (DiffusionConfig::OrnsteinUhlenbeck { beta, sigma }, RateShape::Constant, Fragmentation::Uniform { eps }) => {
            Some(ou_certificate(beta, sigma, cfg.model.theta, eps, d.radius)?)
        }
        _ => {
            notes.push("explicit certificate only for the OU model with constant rate and uniform fragmentation".into());
            None
        }
    };
    let report = DiagnoseReport { drift: Some(drift), drift_check: Some(drift_check), certificate, notes };
    write_json(&out.join("diagnose.json"), &report)?;
    let mut m = Manifest::new("diagnose", cfg);
    m.files.push("diagnose.json".into());
    m.write(out)?;
    Ok(report)
}

pub fn output_dir(cfg: &ExperimentConfig, flag: Option<&Path>) -> PathBuf {
    flag.map_or_else(|| cfg.output.dir.clone(), Path::to_path_buf)
}
