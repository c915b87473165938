use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::env::{env_step, Action, CarState, EnvConfig};
use super::qnet::{greedy_action, q_forward, QNetwork, NUM_ACTIONS};
use super::replay::{ReplayBuffer, Transition, DEFAULT_CAPACITY};
use crate::distill::{filter_weights, kd_logit_gradient, kd_loss_per_sample, DistillConfig};
use crate::error::{invalid_param, Result};
use crate::nn::{OptimizerConfig, OptimizerState, ParamVector, Tensor2D};
use crate::rng::{derive_seed, rng_for, stream, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DqnHyper {
    pub episodes: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub sync_every: usize,
    pub capacity: usize,
    /// Greedy source-domain check every this many episodes in the second half of
    /// training; the best checked network is returned. Zero returns the final network.
    pub select_every: usize,
    pub select_episodes: usize,
}

impl Default for DqnHyper {
    fn default() -> Self {
        Self {
            episodes: 2000,
            batch_size: 10,
            lr: 1e-4,
            gamma: 0.9,
            epsilon: 0.05,
            sync_every: 10,
            capacity: DEFAULT_CAPACITY,
            select_every: 50,
            select_episodes: 20,
        }
    }
}

impl DqnHyper {
    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 || self.batch_size == 0 || self.sync_every == 0 {
            return Err(invalid_param(
                "episodes, batch_size and sync_every must be positive",
            ));
        }
        if self.select_every > 0 && self.select_episodes == 0 {
            return Err(invalid_param(
                "checkpoint selection needs select_episodes > 0",
            ));
        }
        if self.capacity < self.batch_size {
            return Err(invalid_param(
                "replay capacity must hold at least one batch",
            ));
        }
        if !(self.lr > 0.0)
            || !(0.0..=1.0).contains(&self.gamma)
            || !(0.0..=1.0).contains(&self.epsilon)
        {
            return Err(invalid_param(
                "need lr > 0, gamma in [0, 1], epsilon in [0, 1]",
            ));
        }
        Ok(())
    }
}

/// `r` for terminal transitions, else `r + γ max_a Q_target(s', a)`.
pub fn bellman_target(tr: &Transition, target_net: &QNetwork, gamma: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(invalid_param(format!(
            "gamma must lie in [0, 1], got {gamma}"
        )));
    }
    if tr.done || gamma == 0.0 {
        return Ok(tr.reward);
    }
    let q = q_forward(target_net, &tr.next_state)?;
    Ok(tr.reward + gamma * q.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

/// Distillation term for the Q-learning objective.
#[derive(Debug, Clone, Copy)]
pub struct QDistill<'a> {
    pub teacher: &'a QNetwork,
    pub cfg: &'a DistillConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct QLossReport {
    pub total: f64,
    pub bellman_mse: f64,
    pub kd_component: f64,
    pub mean_filter_weight: f64,
}

/// Bellman MSE on the taken actions plus `λ_kd · mean(w_i · KD_i)` over Q-value softmaxes.
///
/// `w_i` is the filter weight of the student's largest action probability and is held
/// constant when differentiating.
pub fn q_batch_loss(
    online: &QNetwork,
    transitions: &[Transition],
    targets: &[f64],
    distill: Option<QDistill<'_>>,
) -> Result<(QLossReport, ParamVector)> {
    let n = transitions.len();
    if n == 0 || targets.len() != n {
        return Err(invalid_param(
            "need one target per transition and a nonempty batch",
        ));
    }
    let states: Vec<CarState> = transitions.iter().map(|t| t.state).collect();
    let teacher_q = match distill {
        Some(d) if d.cfg.lambda_kd > 0.0 => {
            d.cfg.validate()?;
            Some(d.teacher.q_batch(&states)?)
        }
        _ => None,
    };
    let mut report = QLossReport {
        mean_filter_weight: 1.0,
        ..Default::default()
    };
    let (total, g) = online.grad(&states, |q| {
        let mut dq = Tensor2D::zeros(n, NUM_ACTIONS);
        let mut mse = 0.0;
        for (i, (tr, &y)) in transitions.iter().zip(targets).enumerate() {
            let a = tr.action.index();
            let err = q[(i, a)] - y;
            mse += err * err;
            dq[(i, a)] = 2.0 * err / n as f64;
        }
        mse /= n as f64;
        report.bellman_mse = mse;
        let mut total = mse;
        if let (Some(d), Some(tq)) = (distill, &teacher_q) {
            let greedy: Vec<usize> = q.iter_rows().map(crate::nn::argmax).collect();
            let w = filter_weights(q, &greedy, &d.cfg.filter);
            let mut kd = 0.0;
            for i in 0..n {
                kd += w[i] * kd_loss_per_sample(tq.row(i), q.row(i), d.cfg.tau)?;
                let g = kd_logit_gradient(tq.row(i), q.row(i), d.cfg.tau)?;
                for (dst, gv) in dq.row_mut(i).iter_mut().zip(g) {
                    *dst += d.cfg.lambda_kd * w[i] * gv / n as f64;
                }
            }
            report.kd_component = kd / n as f64;
            report.mean_filter_weight = w.iter().sum::<f64>() / n as f64;
            total += d.cfg.lambda_kd * report.kd_component;
        }
        report.total = total;
        Ok((total, dq))
    })?;
    debug_assert_eq!(total, report.total);
    Ok((report, g))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub steps: usize,
    pub fuel: usize,
    #[serde(rename = "return")]
    pub episode_return: f64,
    pub reached_goal: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RlLog {
    pub episodes: Vec<EpisodeRecord>,
    /// Mean training loss per episode; `None` before the buffer holds a batch.
    pub mean_loss: Vec<Option<f64>>,
    pub gradient_steps: u64,
    /// Episode count at which the returned network was taken.
    pub selected_after: usize,
}

impl RlLog {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_episode_csv(path, &self.episodes)
    }
}

pub fn write_episode_csv(path: &Path, records: &[EpisodeRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_episode_csv(path: &Path) -> Result<Vec<EpisodeRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}

/// Online/target pair with replay, ε-greedy exploration and Adam.
pub struct DqnAgent<'a> {
    online: QNetwork,
    target: QNetwork,
    opt: OptimizerState,
    buffer: ReplayBuffer,
    hyper: DqnHyper,
    env: EnvConfig,
    distill: Option<QDistill<'a>>,
    explore_rng: Rng,
    replay_rng: Rng,
    episode_rng: Rng,
    episodes_done: usize,
    log: RlLog,
}

impl<'a> DqnAgent<'a> {
    pub fn new(
        env: EnvConfig,
        hyper: DqnHyper,
        seed: u64,
        distill: Option<QDistill<'a>>,
    ) -> Result<Self> {
        env.validate()?;
        hyper.validate()?;
        if let Some(d) = distill {
            d.cfg.validate()?;
        }
        let online = QNetwork::init(&mut rng_for(seed, stream::INIT))?;
        let opt = OptimizerState::new(OptimizerConfig::adam(hyper.lr), online.params().len())?;
        Ok(Self {
            target: online.clone(),
            online,
            opt,
            buffer: ReplayBuffer::new(hyper.capacity)?,
            hyper,
            env,
            distill,
            explore_rng: rng_for(seed, stream::EXPLORE),
            replay_rng: rng_for(seed, stream::REPLAY),
            episode_rng: rng_for(seed, stream::EPISODE),
            episodes_done: 0,
            log: RlLog::default(),
        })
    }

    pub fn online(&self) -> &QNetwork {
        &self.online
    }

    pub fn target(&self) -> &QNetwork {
        &self.target
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn log(&self) -> &RlLog {
        &self.log
    }

    /// ε-greedy on the online network.
    pub fn act(&mut self, s: &CarState) -> Result<Action> {
        if self.explore_rng.random::<f64>() < self.hyper.epsilon {
            return Ok(Action::from_index(
                self.explore_rng.random_range(0..NUM_ACTIONS),
            ));
        }
        Ok(greedy_action(&q_forward(&self.online, s)?))
    }

    /// One gradient step on a replay batch; `None` while the buffer is smaller than a batch.
    pub fn learn(&mut self) -> Result<Option<QLossReport>> {
        if self.buffer.len() < self.hyper.batch_size {
            return Ok(None);
        }
        let batch = self
            .buffer
            .sample(self.hyper.batch_size, &mut self.replay_rng)?;
        let targets = batch
            .iter()
            .map(|t| bellman_target(t, &self.target, self.hyper.gamma))
            .collect::<Result<Vec<_>>>()?;
        let (report, g) = q_batch_loss(&self.online, &batch, &targets, self.distill)?;
        let mut p = self.online.params();
        self.opt.step(&mut p, &g)?;
        self.online.set_params(&p)?;
        self.log.gradient_steps += 1;
        Ok(Some(report))
    }

    pub fn run_episode(&mut self) -> Result<EpisodeRecord> {
        let mut s = CarState::random_start(&mut self.episode_rng);
        let mut rec = EpisodeRecord {
            episode: self.episodes_done,
            steps: 0,
            fuel: 0,
            episode_return: 0.0,
            reached_goal: false,
        };
        let (mut loss_sum, mut loss_n) = (0.0, 0usize);
        while rec.steps < self.env.max_steps {
            let a = self.act(&s)?;
            let (next, r, done) = env_step(&s, a, &self.env)?;
            self.buffer.push(Transition {
                state: s,
                action: a,
                reward: r,
                next_state: next,
                done,
            });
            if let Some(rep) = self.learn()? {
                loss_sum += rep.total;
                loss_n += 1;
            }
            rec.steps += 1;
            rec.fuel += usize::from(a != Action::NoPush);
            rec.episode_return += r;
            s = next;
            if done {
                rec.reached_goal = true;
                break;
            }
        }
        self.episodes_done += 1;
        if self.episodes_done.is_multiple_of(self.hyper.sync_every) {
            self.target = self.online.clone();
        }
        self.log.episodes.push(rec);
        self.log
            .mean_loss
            .push((loss_n > 0).then(|| loss_sum / loss_n as f64));
        Ok(rec)
    }

    pub fn finish(self) -> (QNetwork, RlLog) {
        (self.online, self.log)
    }
}

fn train(
    env: &EnvConfig,
    hyper: &DqnHyper,
    seed: u64,
    distill: Option<QDistill<'_>>,
) -> Result<(QNetwork, RlLog)> {
    let mut agent = DqnAgent::new(*env, *hyper, seed, distill)?;
    // (success rate, mean fuel, episodes done, network)
    let mut best: Option<(f64, f64, usize, QNetwork)> = None;
    let check_seed = derive_seed(seed, stream::EVAL);
    for e in 1..=hyper.episodes {
        agent.run_episode()?;
        if hyper.select_every == 0 || e % hyper.select_every != 0 || 2 * e < hyper.episodes {
            continue;
        }
        let s = evaluate_fuel(
            agent.online(),
            env,
            hyper.select_episodes,
            check_seed.wrapping_add(e as u64),
        )?;
        let better = match &best {
            None => true,
            Some((rate, fuel, _, _)) => {
                s.success_rate > *rate || (s.success_rate == *rate && s.mean < *fuel)
            }
        };
        if better {
            best = Some((s.success_rate, s.mean, e, agent.online().clone()));
        }
    }
    let (net, mut log) = agent.finish();
    Ok(match best {
        Some((_, _, e, chosen)) => {
            log.selected_after = e;
            (chosen, log)
        }
        None => {
            log.selected_after = hyper.episodes;
            (net, log)
        }
    })
}

/// DQN on `env`. See [`DqnHyper::select_every`] for which network is returned.
pub fn dqn_train(env: &EnvConfig, hyper: &DqnHyper, seed: u64) -> Result<(QNetwork, RlLog)> {
    train(env, hyper, seed, None)
}

/// DQN whose loss adds the filtered distillation term toward `teacher`'s action softmax.
///
/// The teacher gate is not applied since there is no ground-truth action.
pub fn policy_distill_train(
    teacher: &QNetwork,
    env: &EnvConfig,
    hyper: &DqnHyper,
    cfg: &DistillConfig,
    seed: u64,
) -> Result<(QNetwork, RlLog)> {
    train(env, hyper, seed, Some(QDistill { teacher, cfg }))
}

/// Run one episode under `policy` from `start`.
pub fn run_policy<P>(mut policy: P, env: &EnvConfig, start: CarState) -> Result<EpisodeRecord>
where
    P: FnMut(&CarState) -> Result<Action>,
{
    let mut rec = EpisodeRecord {
        episode: 0,
        steps: 0,
        fuel: 0,
        episode_return: 0.0,
        reached_goal: false,
    };
    let mut s = start;
    while rec.steps < env.max_steps {
        let a = policy(&s)?;
        let (next, r, done) = env_step(&s, a, env)?;
        rec.steps += 1;
        rec.fuel += usize::from(a != Action::NoPush);
        rec.episode_return += r;
        s = next;
        if done {
            rec.reached_goal = true;
            break;
        }
    }
    Ok(rec)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuelStats {
    pub mean: f64,
    /// Population standard deviation over episodes.
    pub std: f64,
    pub success_rate: f64,
    pub episodes: Vec<EpisodeRecord>,
}

/// Greedy evaluation over `episodes` seeded random starts.
pub fn evaluate_fuel(
    qnet: &QNetwork,
    env: &EnvConfig,
    episodes: usize,
    seed: u64,
) -> Result<FuelStats> {
    if episodes == 0 {
        return Err(invalid_param("need at least one evaluation episode"));
    }
    env.validate()?;
    let mut rng = rng_for(derive_seed(seed, stream::EVAL), 0);
    let mut records = Vec::with_capacity(episodes);
    for e in 0..episodes {
        let start = CarState::random_start(&mut rng);
        let mut rec = run_policy(|s| Ok(greedy_action(&q_forward(qnet, s)?)), env, start)?;
        rec.episode = e;
        records.push(rec);
    }
    let n = episodes as f64;
    let mean = records.iter().map(|r| r.fuel as f64).sum::<f64>() / n;
    let var = records
        .iter()
        .map(|r| (r.fuel as f64 - mean).powi(2))
        .sum::<f64>()
        / n;
    let success_rate = records.iter().filter(|r| r.reached_goal).count() as f64 / n;
    Ok(FuelStats {
        mean,
        std: var.sqrt(),
        success_rate,
        episodes: records,
    })
}
