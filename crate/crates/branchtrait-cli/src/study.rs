use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use branchtrait::mle::{grid_mle, GridPlan, MleResult, RateShape};
use branchtrait::seed::derive_seed;

use crate::config::ExperimentConfig;
use crate::error::HarnessError;
use crate::run::{create, observed_pairs, prepare_dir, simulate_tree, write_json, EvaluatorFactory, Manifest, Result};

/// Largest share of failed replications a study tolerates.
pub const MAX_FAILURE_SHARE: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub index: usize,
    pub seed: u64,
    pub theta_hat: Option<f64>,
    /// Fisher-based 95% interval.
    pub ci: Option<(f64, f64)>,
    pub pairs: usize,
    pub wall_clock_s: f64,
    pub warnings: Vec<String>,
    pub error: Option<String>,
}

/// Search window and step, echoed so the report is not confused with the CI.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridEcho {
    pub theta_min: f64,
    pub theta_max: f64,
    pub step: f64,
    pub step_floor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub config_hash: String,
    pub rate: RateShape,
    pub theta_true: f64,
    pub evaluator: String,
    pub depth: u32,
    pub replications: usize,
    pub completed: usize,
    pub failed: usize,
    /// Over the completed replications.
    pub mean: Option<f64>,
    /// Sample standard deviation (n - 1 denominator).
    pub std: Option<f64>,
    pub grid: GridEcho,
    pub records: Vec<ReplicationRecord>,
    pub wall_clock_s: f64,
}

impl StudyReport {
    pub fn estimates(&self) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.theta_hat).collect()
    }

    /// Header "replication,seed,theta_hat,ci_low,ci_high,wall_clock_s,status".
    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["replication", "seed", "theta_hat", "ci_low", "ci_high", "wall_clock_s", "status"])?;
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        for r in &self.records {
            w.write_record([
                r.index.to_string(),
                r.seed.to_string(),
                opt(r.theta_hat),
                opt(r.ci.map(|c| c.0)),
                opt(r.ci.map(|c| c.1)),
                r.wall_clock_s.to_string(),
                if r.error.is_some() { "failed".into() } else { "ok".into() },
            ])?;
        }
        w.flush()
    }
}

pub fn mean_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    let n = values.len();
    if n == 0 {
        return (None, None);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = (n >= 2).then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt());
    (Some(mean), std)
}

fn replicate(cfg: &ExperimentConfig, factory: &EvaluatorFactory, plan: &GridPlan, seed: u64) -> Result<MleResult> {
    let tree = simulate_tree(cfg, derive_seed(seed, &[0]))?;
    let pairs = observed_pairs(cfg, &tree)?;
    let evaluator = factory.build(derive_seed(seed, &[1]))?;
    Ok(grid_mle(&pairs, &cfg.family()?, evaluator.as_ref(), plan)?)
}

/// Simulates and estimates every replication on `jobs` worker threads.
/// Replication r uses the seed derived from (master seed, r), so the result
/// does not depend on scheduling.
pub fn study(cfg: &ExperimentConfig) -> Result<StudyReport> {
    let plan = cfg.grid_plan()?;
    let factory = EvaluatorFactory::new(cfg)?;
    study_with(cfg, &plan, |_, seed| replicate(cfg, &factory, &plan, seed))
}

/// Study loop around an arbitrary replication `(index, seed) -> result`.
pub fn study_with<F>(cfg: &ExperimentConfig, plan: &GridPlan, replication: F) -> Result<StudyReport>
where
    F: Fn(usize, u64) -> Result<MleResult> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.study.jobs)
        .build()
        .map_err(|e| HarnessError::Validation(format!("cannot start {} workers: {e}", cfg.study.jobs)))?;
    let start = Instant::now();
    let records: Vec<ReplicationRecord> = pool.install(|| {
        (0..cfg.study.replications)
            .into_par_iter()
            .map(|index| {
                let seed = derive_seed(cfg.simulation.seed, &[index as u64]);
                let t = Instant::now();
                let outcome = replication(index, seed);
                let wall_clock_s = t.elapsed().as_secs_f64();
                match outcome {
                    Ok(r) => ReplicationRecord {
                        index,
                        seed,
                        theta_hat: Some(r.theta_hat),
                        ci: r.ci,
                        pairs: r.pairs,
                        wall_clock_s,
                        warnings: r.warnings,
                        error: None,
                    },
                    Err(e) => ReplicationRecord {
                        index,
                        seed,
                        theta_hat: None,
                        ci: None,
                        pairs: 0,
                        wall_clock_s,
                        warnings: Vec::new(),
                        error: Some(e.to_string()),
                    },
                }
            })
            .collect()
    });
    let estimates: Vec<f64> = records.iter().filter_map(|r| r.theta_hat).collect();
    let (mean, std) = mean_std(&estimates);
    Ok(StudyReport {
        config_hash: cfg.hash(),
        rate: cfg.model.rate,
        theta_true: cfg.model.theta,
        evaluator: cfg.estimator.evaluator.name().into(),
        depth: cfg.simulation.depth,
        replications: cfg.study.replications,
        completed: estimates.len(),
        failed: records.len() - estimates.len(),
        mean,
        std,
        grid: GridEcho { theta_min: plan.theta_min, theta_max: plan.theta_max, step: plan.step, step_floor: plan.step_floor },
        records,
        wall_clock_s: start.elapsed().as_secs_f64(),
    })
}

/// Runs the study and writes `study_report.json`, `study_replications.csv`
/// and the manifest. More than 10% failed replications is a study error,
/// raised after the files are written.
pub fn run_study(cfg: &ExperimentConfig, out: &Path) -> Result<StudyReport> {
    prepare_dir(out)?;
    finish_study(cfg, study(cfg)?, out)
}

/// Writes the study files, then applies the failure policy.
pub fn finish_study(cfg: &ExperimentConfig, report: StudyReport, out: &Path) -> Result<StudyReport> {
    prepare_dir(out)?;
    write_json(&out.join("study_report.json"), &report)?;
    let path = out.join("study_replications.csv");
    let mut w = create(&path)?;
    report.write_csv(&mut w).map_err(|e| HarnessError::io(&path, e))?;
    w.flush().map_err(|e| HarnessError::io(&path, e))?;
    let m = Manifest {
        command: "study".into(),
        config_hash: report.config_hash.clone(),
        seed: cfg.simulation.seed,
        node_count: None,
        files: vec!["study_report.json".into(), "study_replications.csv".into()],
        version: env!("CARGO_PKG_VERSION").into(),
    };
    write_json(&out.join("manifest.json"), &m)?;
    if report.failed as f64 > MAX_FAILURE_SHARE * report.replications as f64 {
        let first = report.records.iter().find_map(|r| r.error.clone()).unwrap_or_default();
        return Err(HarnessError::Study(format!(
            "{} of {} replications failed (first: {first})",
            report.failed, report.replications
        )));
    }
    Ok(report)
}
