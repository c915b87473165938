use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use kddg::data::{gen_domains, write_bundle};
use kddg::harness::{
    bench_timing, run_classification, run_diagnose, run_noise_study, run_rl, write_diagnostics,
    write_results, write_timing, ExperimentConfig, Manifest, RunOptions,
};

/// Knowledge distillation for domain generalization: experiment driver.
#[derive(Parser)]
#[command(name = "kddg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON experiment config; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run only this seed instead of the config's seed list.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides `out_dir` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Suppress progress messages.
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic benchmark and write it as CSV plus its spec.
    GenData(Common),
    /// Leave-one-domain-out training of the configured methods.
    Train(Common),
    /// DeepAll across the config's noise grid.
    NoiseStudy(Common),
    /// Baseline DQN and distilled student on mountain car.
    Rl(Common),
    /// Training-set confidence histograms and domain leakage.
    Diagnose(Common),
    /// Per-iteration training time of the configured methods.
    Bench(Common),
}

struct Prepared {
    cfg: ExperimentConfig,
    out: PathBuf,
    opts: RunOptions,
}

fn prepare(c: &Common) -> Result<Prepared> {
    let mut cfg = match &c.config {
        Some(p) => {
            ExperimentConfig::load(p).with_context(|| format!("loading config {}", p.display()))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seeds = vec![s];
    }
    let out = match (&c.out, &cfg.out_dir) {
        (Some(o), _) | (None, Some(o)) => o.clone(),
        (None, None) => bail!("no output directory: pass --out or set out_dir in the config"),
    };
    cfg.out_dir = Some(out.clone());
    cfg.validate()?;
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let opts = RunOptions {
        checkpoint_dir: Some(out.join("checkpoints")),
        quiet: c.quiet,
    };
    Ok(Prepared { cfg, out, opts })
}

fn finish(command: &str, p: &Prepared, artifacts: &[&str]) -> Result<()> {
    Manifest::new(
        command,
        &p.cfg,
        artifacts.iter().map(|s| s.to_string()).collect(),
    )?
    .write(&p.out)?;
    if !p.opts.quiet {
        eprintln!("wrote {} to {}", artifacts.join(", "), p.out.display());
    }
    Ok(())
}

fn results(p: &Prepared, rows: &[kddg::harness::ResultRow]) -> Result<()> {
    write_results(p.out.join("results.csv"), rows)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData(c) => {
            let p = prepare(&c)?;
            let domains = gen_domains(&p.cfg.benchmark)?;
            write_bundle(&p.out, &p.cfg.benchmark, &domains)?;
            finish("gen-data", &p, &["data.csv", "spec.json"])
        }
        Command::Train(c) => {
            let p = prepare(&c)?;
            let rows = run_classification(&p.cfg, &p.opts)?;
            results(&p, &rows)?;
            finish("train", &p, &["results.csv", "checkpoints"])
        }
        Command::NoiseStudy(c) => {
            let p = prepare(&c)?;
            let rows = run_noise_study(&p.cfg, &p.cfg.noise_grid, &p.opts)?;
            results(&p, &rows)?;
            finish("noise-study", &p, &["results.csv", "checkpoints"])
        }
        Command::Rl(c) => {
            let p = prepare(&c)?;
            let rows = run_rl(&p.cfg, &p.opts)?;
            results(&p, &rows)?;
            finish("rl", &p, &["results.csv", "checkpoints"])
        }
        Command::Diagnose(c) => {
            let p = prepare(&c)?;
            let rows = run_diagnose(&p.cfg, &p.opts)?;
            write_diagnostics(p.out.join("diagnostics.csv"), &rows)?;
            finish("diagnose", &p, &["diagnostics.csv"])
        }
        Command::Bench(c) => {
            let p = prepare(&c)?;
            let rows = bench_timing(&p.cfg, &p.cfg.methods)?;
            write_timing(p.out.join("timing.csv"), &rows)?;
            if !p.opts.quiet {
                for r in &rows {
                    eprintln!(
                        "{}: {:.3e} s/iter over {} iterations",
                        r.method, r.sec_per_iter, r.iterations
                    );
                }
            }
            finish("bench", &p, &["timing.csv"])
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
