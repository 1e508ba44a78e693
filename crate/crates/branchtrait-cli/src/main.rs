use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use branchtrait_cli::{run_diagnose, run_estimate, run_simulate, run_study, ExperimentConfig, HarnessError, Which};

#[derive(Parser)]
#[command(name = "branchtrait", version, about = "Simulation and estimation for branching populations with a diffusing trait")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides output.dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed; overrides simulation.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; overrides study.jobs.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum WhichArg {
    Nu,
    Q,
    Mle,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a tree dataset.
    Simulate(Common),
    /// Run an estimator on a tree dataset.
    Estimate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        which: WhichArg,
        /// Tree CSV; defaults to tree.csv in the output directory.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Monte-Carlo replication study of the maximum-likelihood estimator.
    Study(Common),
    /// Drift constants and ergodicity certificate.
    Diagnose(Common),
}

fn load(common: &Common) -> Result<(ExperimentConfig, PathBuf), HarnessError> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.simulation.seed = seed;
    }
    if let Some(jobs) = common.jobs {
        cfg.study.jobs = jobs;
    }
    if let Some(out) = &common.out {
        cfg.output.dir = out.clone();
    }
    cfg.validate()?;
    let out = cfg.output.dir.clone();
    Ok((cfg, out))
}

/// Runs `f` on a pool of `jobs` threads.
fn with_jobs<T>(jobs: usize, f: impl FnOnce() -> Result<T, HarnessError> + Send) -> Result<T, HarnessError>
where
    T: Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| HarnessError::Validation(format!("cannot start {jobs} workers: {e}")))?;
    pool.install(f)
}

fn execute(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Simulate(c) => {
            let (cfg, out) = load(&c)?;
            let m = with_jobs(cfg.study.jobs, || run_simulate(&cfg, &out))?;
            println!("wrote {} nodes to {}", m.node_count.unwrap_or(0), out.join("tree.csv").display());
        }
        Command::Estimate { common, which, data } => {
            let (cfg, out) = load(&common)?;
            let data = data.unwrap_or_else(|| out.join("tree.csv"));
            let which = match which {
                WhichArg::Nu => Which::Nu,
                WhichArg::Q => Which::Q,
                WhichArg::Mle => Which::Mle,
            };
            let m = with_jobs(cfg.study.jobs, || run_estimate(&cfg, &data, which, &out))?;
            println!("wrote {} in {}", m.files.join(", "), out.display());
        }
        Command::Study(c) => {
            let (cfg, out) = load(&c)?;
            let r = run_study(&cfg, &out)?;
            let show = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.4}"));
            println!(
                "{} replications, {} failed: mean {} std {} ({})",
                r.replications,
                r.failed,
                show(r.mean),
                show(r.std),
                Path::new(&out).join("study_report.json").display()
            );
        }
        Command::Diagnose(c) => {
            let (cfg, out) = load(&c)?;
            let r = with_jobs(cfg.study.jobs, || run_diagnose(&cfg, &out))?;
            if let Some(c) = r.certificate {
                println!("certificate: lambda {:.4} rho {:.4} (below 1/2: {})", c.lambda, c.rho, c.below_half);
            }
            if let Some(d) = r.drift_check {
                println!("drift check: {} violations over {} points", d.violations, d.points.len());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
