use super::config::ExperimentConfig;
use super::output::ResultRow;
use super::run::{RunOptions, TEACHER_SEED_OFFSET};
use crate::error::Result;
use crate::rl::{dqn_train, evaluate_fuel, policy_distill_train, QNetwork};

/// Baseline DQN and distilled student per seed, each evaluated at every gravity.
///
/// The teacher is a separate DQN trained with the seed offset, so the student and the
/// baseline share initialisation and exploration streams.
pub fn run_rl(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let rl = &cfg.rl;
    let source = rl.env(rl.source_gravity);
    let mut rows = Vec::new();
    for &seed in &cfg.seeds {
        let (baseline, _) = dqn_train(&source, &rl.hyper, seed)?;
        let (teacher, _) = dqn_train(&source, &rl.hyper, seed + TEACHER_SEED_OFFSET)?;
        let (student, _) = policy_distill_train(&teacher, &source, &rl.hyper, &cfg.distill, seed)?;
        for (name, net) in [("dqn", &baseline), ("kddg", &student)] {
            opts.save(&format!("{name}_s{seed}"), net.network())?;
            rows.extend(evaluate_all(cfg, name, net, seed, opts)?);
        }
    }
    Ok(rows)
}

fn evaluate_all(
    cfg: &ExperimentConfig,
    name: &str,
    net: &QNetwork,
    seed: u64,
    opts: &RunOptions,
) -> Result<Vec<ResultRow>> {
    let rl = &cfg.rl;
    let mut rows = Vec::with_capacity(rl.eval_gravities.len());
    for &g in &rl.eval_gravities {
        let stats = evaluate_fuel(net, &rl.env(g), rl.eval_episodes, seed)?;
        opts.progress(&format!(
            "{name} g={g} seed={seed}: fuel {:.1} ± {:.1}",
            stats.mean, stats.std
        ));
        let mut row = ResultRow::new(name, 0.0, format!("{g}"), seed);
        row.fuel_mean = Some(stats.mean);
        row.fuel_std = Some(stats.std);
        row.goal_rate = Some(stats.success_rate);
        rows.push(row);
    }
    Ok(rows)
}
