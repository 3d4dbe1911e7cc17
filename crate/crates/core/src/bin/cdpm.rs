use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cdpm::harness::{self, ExperimentConfig, Overrides, RunReport};

#[derive(Parser)]
#[command(name = "cdpm", version, about = "Contractive diffusion model experiments and checks")]
struct Cli {
    /// Experiment config (TOML); every key is optional.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Base seed; overrides `output.seed`.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Output directory for CSV files; overrides `output.dir`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Snapshot every K sampler steps; overrides `sampler.save_every`.
    #[arg(long, global = true, value_name = "K")]
    save_every: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Forward EM moments against the closed-form kernels of every family.
    KernelCheck,
    /// OU vs COU W2 under injected score error over an (epsilon, delta) sweep.
    Compare,
    /// Swiss roll W2 per family with the exact empirical-mixture score.
    Swissroll,
    /// VE to CsubVP density, score and clock identities on a grid.
    TransformCheck,
    /// Error bounds, u(t) profiles and measured W2 for comparison.
    Bounds,
    /// Coupled backward runs and fitted contraction rates.
    Contraction,
    /// W2 between two sample files, or the estimator self-checks.
    W2 {
        #[arg(long, value_name = "CSV")]
        a: Option<PathBuf>,
        #[arg(long, value_name = "CSV")]
        b: Option<PathBuf>,
        /// sorted1d, assignment, sinkhorn or auto.
        #[arg(long)]
        method: Option<String>,
        /// Bootstrap replicates for the standard error.
        #[arg(long)]
        bootstrap: Option<usize>,
    },
}

fn run(cli: Cli) -> cdpm::Result<RunReport> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    cfg.apply(&Overrides { seed: cli.seed, out: cli.out.clone(), save_every: cli.save_every });
    if let Command::W2 { a, b, method, bootstrap } = &cli.command {
        if a.is_some() != b.is_some() {
            return Err(cdpm::Error::Usage("w2 needs both --a and --b".into()));
        }
        cfg.check.a = a.clone().or(cfg.check.a.take());
        cfg.check.b = b.clone().or(cfg.check.b.take());
        cfg.metric.method = method.clone().or(cfg.metric.method.take());
        cfg.metric.bootstrap = bootstrap.or(cfg.metric.bootstrap);
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(cdpm::Error::Usage("--threads must be >= 1".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| cdpm::Error::Config(e.to_string()))?;
    let report = pool.install(|| match cli.command {
        Command::KernelCheck => harness::run_kernel_check(&cfg),
        Command::Compare => harness::run_compare(&cfg),
        Command::Swissroll => harness::run_swissroll(&cfg),
        Command::TransformCheck => harness::run_transform_check(&cfg),
        Command::Bounds => harness::run_bounds(&cfg),
        Command::Contraction => harness::run_contraction(&cfg),
        Command::W2 { .. } => harness::run_w2(&cfg),
    })?;
    for path in report.write(&cfg.out_dir())? {
        eprintln!("wrote {}", path.display());
    }
    Ok(report)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(report) => {
            for c in &report.checks {
                println!("{}", c.line());
            }
            let failed = report.checks.iter().filter(|c| !c.pass).count();
            println!("{} of {} checks passed", report.checks.len() - failed, report.checks.len());
            if failed == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
