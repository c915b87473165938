//! Fixtures shared by the integration tests and the acceptance run.

#![allow(dead_code)]

use kddg::data::{gen_domains, BenchmarkSpec};
use kddg::diagnostics::{mi_estimate, FeatureDump, MiOptions};
use kddg::distill::{
    filter_weights, grad_filter_weight, init_network, kd_loss_per_sample, kddg_batch_loss,
    kddg_logit_loss_weighted, train_network, vanilla_student_loss, Batch, DistillConfig,
    FilterSpec, Objective, TrainSettings,
};
use kddg::nn::{grad, Architecture, Network, OptimizerConfig, ParamVector, Schedule, Tensor2D};
use kddg::rl::{
    encode_states, env_step, q_batch_loss, reward, Action, CarState, EnvConfig, QNetwork,
    ReplayBuffer, Transition, DEFAULT_CAPACITY, GRAVITY_DOMAINS, MAX_POSITION, MIN_POSITION,
};
use kddg::rng::rng_for;
use rand::Rng as _;
use rand_distr::StandardNormal;

pub const H: f64 = 1e-5;
pub const TOL: f64 = 1e-6;
pub const FIXTURES: u64 = 20;

pub struct Fixture {
    net: Network,
    teacher_logits: Tensor2D,
    x: Tensor2D,
    labels: Vec<usize>,
    sample_weights: Vec<f64>,
}

/// Finite differences are meaningless across a relu kink, so fixtures keep every
/// hidden pre-activation at least this far from zero.
const KINK_MARGIN: f64 = 1e-3;

fn clear_of_kinks(net: &Network, x: &Tensor2D) -> bool {
    let trace = net.forward_trace(x).unwrap();
    let hidden = &trace.pre[..trace.pre.len() - 1];
    hidden
        .iter()
        .flat_map(|z| z.data())
        .all(|v| v.abs() > KINK_MARGIN)
}

pub fn fixture(seed: u64) -> Fixture {
    (0..)
        .map(|attempt| fixture_attempt(seed, attempt))
        .find(|fx| clear_of_kinks(&fx.net, &fx.x))
        .unwrap()
}

fn fixture_attempt(seed: u64, attempt: u64) -> Fixture {
    let mut r = rng_for(seed, 99 + 1000 * attempt);
    let classes = r.random_range(2..6);
    let arch = Architecture {
        input: r.random_range(2..6),
        hidden: vec![r.random_range(3..8)],
        output: classes,
    };
    let net = Network::init(&arch, &mut r).unwrap();
    let n = r.random_range(2..7);
    let mut gauss = |rows, cols, scale: f64| {
        let v = (0..rows * cols)
            .map(|_| scale * r.sample::<f64, _>(StandardNormal))
            .collect();
        Tensor2D::from_vec(rows, cols, v).unwrap()
    };
    let x = gauss(n, arch.input, 1.0);
    let teacher_logits = gauss(n, classes, 2.0);
    let labels = (0..n).map(|i| (i * 7 + seed as usize) % classes).collect();
    let sample_weights = (0..n).map(|i| 0.5 + 0.1 * i as f64).collect();
    Fixture {
        net,
        teacher_logits,
        x,
        labels,
        sample_weights,
    }
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`.
fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(a).max(norm(b)).max(1e-300)
}

fn numeric_grad(params: &ParamVector, mut f: impl FnMut(&ParamVector) -> f64) -> Vec<f64> {
    (0..params.len())
        .map(|k| {
            let mut p = params.clone();
            p.0[k] += H;
            let up = f(&p);
            p.0[k] -= 2.0 * H;
            let down = f(&p);
            (up - down) / (2.0 * H)
        })
        .collect()
}

/// Checks the logit objective `cfg` with frozen filter weights `fw`.
pub fn check_classifier(fx: &Fixture, cfg: &DistillConfig, fw: &[f64]) -> f64 {
    let loss = |logits: &Tensor2D| {
        kddg_logit_loss_weighted(
            logits,
            Some(&fx.teacher_logits),
            &fx.labels,
            &fx.sample_weights,
            cfg,
            fw,
        )
        .map(|(r, g)| (r.total, g))
    };
    let (_, analytic) = grad(&fx.net, &fx.x, loss).unwrap();
    let mut probe = fx.net.clone();
    let numeric = numeric_grad(&fx.net.params(), |p| {
        probe.set_params(p).unwrap();
        loss(&probe.forward(&fx.x).unwrap()).unwrap().0
    });
    rel_err(analytic.as_slice(), &numeric)
}

pub fn q_fixture(seed: u64, attempt: u64) -> (QNetwork, Vec<Transition>) {
    let mut r = rng_for(seed, 98 + 1000 * attempt);
    let online = QNetwork::init(&mut r).unwrap();
    let n = r.random_range(1..8);
    let mut state = || CarState {
        position: r.random_range(-1.2..0.6),
        velocity: r.random_range(-0.07..0.07),
    };
    let transitions = (0..n)
        .map(|i| Transition {
            state: state(),
            action: Action::from_index(i % 3),
            reward: -0.1,
            next_state: state(),
            done: false,
        })
        .collect();
    (online, transitions)
}

/// Relative gradient error of every loss on every fixture, keyed by loss name.
pub fn gradient_errors() -> Vec<(&'static str, Vec<f64>)> {
    let ce = (0..FIXTURES)
        .map(|seed| {
            let fx = fixture(seed);
            check_classifier(
                &fx,
                &DistillConfig::cross_entropy_only(),
                &vec![1.0; fx.labels.len()],
            )
        })
        .collect();
    let kd = (0..FIXTURES)
        .map(|seed| {
            let fx = fixture(seed);
            let cfg = DistillConfig {
                tau: 1.0 + seed as f64 * 0.15,
                lambda_kd: 1.0,
                lambda_ce: 0.0,
                filter: FilterSpec::NONE,
                teacher_gate: false,
            };
            check_classifier(&fx, &cfg, &vec![1.0; fx.labels.len()])
        })
        .collect();
    let filtered = (0..FIXTURES)
        .map(|seed| {
            let fx = fixture(seed);
            // A low threshold puts samples on every branch of the smooth filter.
            let cfg = DistillConfig {
                filter: FilterSpec::smooth(0.3),
                ..DistillConfig::default()
            };
            let logits = fx.net.forward(&fx.x).unwrap();
            let fw = filter_weights(&logits, &fx.labels, &cfg.filter);
            check_classifier(&fx, &cfg, &fw)
        })
        .collect();
    let bellman = (0..FIXTURES).map(check_bellman).collect();
    vec![
        ("cross-entropy", ce),
        ("distillation", kd),
        ("filtered objective", filtered),
        ("bellman mse", bellman),
    ]
}

pub fn check_bellman(seed: u64) -> f64 {
    let (online, transitions) = (0..)
        .map(|attempt| q_fixture(seed, attempt))
        .find(|(q, t)| {
            let states: Vec<CarState> = t.iter().map(|t| t.state).collect();
            clear_of_kinks(q.network(), &encode_states(&states))
        })
        .unwrap();
    let targets: Vec<f64> = (0..transitions.len())
        .map(|i| 0.3 * i as f64 - 0.5)
        .collect();
    let (_, analytic) = q_batch_loss(&online, &transitions, &targets, None).unwrap();
    let mut probe = online.clone();
    let numeric = numeric_grad(&online.params(), |p| {
        probe.set_params(p).unwrap();
        q_batch_loss(&probe, &transitions, &targets, None)
            .unwrap()
            .0
            .total
    });
    rel_err(analytic.as_slice(), &numeric)
}

/// Smooth filter written out branch by branch.
pub fn smooth_oracle(p: f64, eta: f64) -> f64 {
    if p <= eta {
        1.0
    } else if p >= (1.0 + eta) / 2.0 {
        0.0
    } else {
        let u = (eta + 1.0 - 2.0 * p) / (1.0 - eta);
        u * u
    }
}

pub const FILTER_ETAS: [f64; 4] = [0.3, 0.8, 0.999, 1.0 - 1e-4];

/// Largest deviation from the branch formula on a 10⁴-point grid of `[0, 1]`.
pub fn filter_grid_error(eta: f64) -> f64 {
    let spec = FilterSpec::smooth(eta);
    (0..10_000)
        .map(|k| {
            let p = k as f64 / 9_999.0;
            (grad_filter_weight(p, &spec).unwrap() - smooth_oracle(p, eta)).abs()
        })
        .fold(0.0, f64::max)
}

/// Largest change between neighbours 1e-11 apart within ±1e-4 of `knot`.
pub fn largest_local_jump(spec: &FilterSpec, knot: f64) -> f64 {
    let step = 1e-11;
    let w = |p: f64| grad_filter_weight(p.clamp(0.0, 1.0), spec).unwrap();
    let n = (1e-4 / step) as i64;
    let mut prev = w(knot - n as f64 * step);
    let mut worst: f64 = 0.0;
    for k in (-n + 1)..=n {
        let cur = w(knot + k as f64 * step);
        worst = worst.max((cur - prev).abs());
        prev = cur;
    }
    worst
}

/// Random batch with teacher and student networks of matching shape.
pub fn loss_fixture(seed: u64) -> (Batch, Network, Network) {
    let mut r = rng_for(seed, 97);
    let arch = Architecture {
        input: 3,
        hidden: vec![6],
        output: 4,
    };
    let teacher = Network::init(&arch, &mut r).unwrap();
    let student = Network::init(&arch, &mut r).unwrap();
    let n = 8;
    let x = (0..n * 3)
        .map(|_| 2.0 * r.sample::<f64, _>(StandardNormal))
        .collect();
    let labels = (0..n).map(|_| r.random_range(0..4)).collect();
    let weights = (0..n).map(|_| r.random_range(0.5..1.5)).collect();
    (
        Batch::weighted(Tensor2D::from_vec(n, 3, x).unwrap(), labels, weights).unwrap(),
        teacher,
        student,
    )
}

/// `|kddg_batch_loss − vanilla|` with the filter and gate disabled.
pub fn vanilla_gap(seed: u64) -> f64 {
    let (batch, teacher, student) = loss_fixture(seed);
    let cfg = DistillConfig {
        filter: FilterSpec::NONE,
        teacher_gate: false,
        tau: 1.5 + seed as f64 * 0.1,
        ..Default::default()
    };
    let filtered = kddg_batch_loss(&batch, &teacher, &student, &cfg)
        .unwrap()
        .total;
    let vanilla = vanilla_student_loss(
        &batch,
        &teacher,
        &student,
        cfg.tau,
        cfg.lambda_ce,
        cfg.lambda_kd,
    )
    .unwrap();
    (filtered - vanilla).abs()
}

/// Eight samples; the teacher is right on the even ones and wrong on the odd ones.
/// Returns the gated `kd_component` and the same quantity summed over the even half.
pub fn gate_half_batch() -> (f64, f64) {
    let classes = 3;
    let labels: Vec<usize> = (0..8).map(|i| i % classes).collect();
    let teacher_rows: Vec<Vec<f64>> = labels
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let favoured = if i % 2 == 0 { y } else { (y + 1) % classes };
            (0..classes)
                .map(|c| {
                    if c == favoured {
                        2.0 + 0.1 * i as f64
                    } else {
                        -0.3 * c as f64
                    }
                })
                .collect()
        })
        .collect();
    let student_rows: Vec<Vec<f64>> = (0..8)
        .map(|i| {
            (0..classes)
                .map(|c| ((i * 3 + c) as f64 * 0.7).sin())
                .collect()
        })
        .collect();
    let t = Tensor2D::from_rows(&teacher_rows).unwrap();
    let s = Tensor2D::from_rows(&student_rows).unwrap();
    let cfg = DistillConfig {
        filter: FilterSpec::NONE,
        teacher_gate: true,
        ..Default::default()
    };
    let (report, _) =
        kddg_logit_loss_weighted(&s, Some(&t), &labels, &[1.0; 8], &cfg, &[1.0; 8]).unwrap();
    let kept: f64 = (0..8)
        .step_by(2)
        .map(|i| kd_loss_per_sample(&teacher_rows[i], &student_rows[i], cfg.tau).unwrap())
        .sum();
    (report.kd_component, kept / 8.0)
}

/// DeepAll and the zero-weight distillation objective trained from the same seed.
/// Returns both loss trajectories and final parameters.
pub fn degenerate_runs(seed: u64) -> ((Vec<f64>, ParamVector), (Vec<f64>, ParamVector)) {
    let domains = gen_domains(&BenchmarkSpec::with_angles(
        &[0.0, 25.0, 50.0],
        8,
        120,
        seed,
    ))
    .unwrap();
    let arch = Architecture {
        input: 8,
        hidden: vec![16, 16],
        output: 4,
    };
    let opt = OptimizerConfig::sgd(0.05, 5e-4).with_schedule(Schedule::Cosine { total_epochs: 4 });
    let settings = TrainSettings {
        epochs: 4,
        batch_size: 32,
    };
    let teacher = init_network(&arch, seed + 1000).unwrap();
    let cfg = DistillConfig {
        lambda_kd: 0.0,
        lambda_ce: 1.0,
        filter: FilterSpec::NONE,
        teacher_gate: false,
        ..Default::default()
    };
    let run = |objective| {
        let (net, log) = train_network(
            &domains,
            init_network(&arch, seed).unwrap(),
            objective,
            &opt,
            &settings,
            seed,
            None,
        )
        .unwrap();
        (log.loss_trajectory(), net.params())
    };
    (
        run(Objective::DeepAll),
        run(Objective::Distill {
            teacher: &teacher,
            cfg,
        }),
    )
}

/// Reward function written out branch by branch.
pub fn reward_oracle(p: f64) -> f64 {
    if p >= 0.5 {
        100.0
    } else if p > -0.4 {
        10.0 * (0.4 + p).powi(3)
    } else {
        -0.1
    }
}

/// Largest deviation of `reward` from the oracle on 1000 points spanning the track.
pub fn reward_grid_error() -> f64 {
    (0..1000)
        .map(|k| {
            let p = MIN_POSITION + (MAX_POSITION - MIN_POSITION) * k as f64 / 999.0;
            (reward(p) - reward_oracle(p)).abs()
        })
        .fold(0.0, f64::max)
}

/// Random actions under random gravity domains; counts states leaving the box.
pub fn out_of_bounds_over_random_steps(steps: usize, seed: u64) -> usize {
    let mut r = rng_for(seed, 96);
    let mut cfg = EnvConfig::with_gravity(GRAVITY_DOMAINS[0]);
    let mut s = CarState::random_start(&mut r);
    let mut bad = 0;
    for _ in 0..steps {
        let a = Action::from_index(r.random_range(0..3));
        let (next, _, done) = env_step(&s, a, &cfg).unwrap();
        if !next.in_bounds() {
            bad += 1;
        }
        s = if done {
            cfg =
                EnvConfig::with_gravity(GRAVITY_DOMAINS[r.random_range(0..GRAVITY_DOMAINS.len())]);
            CarState::random_start(&mut r)
        } else {
            next
        };
    }
    bad
}

/// Fills a default-capacity buffer with twice its capacity; returns the final size and
/// the reward tag of the oldest survivor.
pub fn replay_after_overflow() -> (usize, f64) {
    let mut buf = ReplayBuffer::new(DEFAULT_CAPACITY).unwrap();
    let s = CarState {
        position: -0.5,
        velocity: 0.0,
    };
    for k in 0..2 * DEFAULT_CAPACITY {
        buf.push(Transition {
            state: s,
            action: Action::NoPush,
            reward: k as f64,
            next_state: s,
            done: false,
        });
    }
    let oldest = buf.iter().next().unwrap().reward;
    (buf.len(), oldest)
}

pub const MI_SAMPLES: usize = 2000;

/// Balanced two-domain dump: Gaussian noise features, plus the domain id itself as
/// the first coordinate when `embed` is set.
pub fn mi_oracle_dump(embed: bool, seed: u64) -> FeatureDump {
    let mut r = rng_for(seed, 95);
    let dim = 4;
    let domains: Vec<usize> = (0..MI_SAMPLES).map(|i| i % 2).collect();
    let mut x = Tensor2D::zeros(MI_SAMPLES, dim);
    for (i, &d) in domains.iter().enumerate() {
        for v in x.row_mut(i) {
            *v = r.sample(StandardNormal);
        }
        if embed {
            x[(i, 0)] = d as f64;
        }
    }
    FeatureDump {
        features: x,
        domains,
    }
}

pub fn mi_oracle(embed: bool, seed: u64) -> f64 {
    mi_estimate(
        &mi_oracle_dump(embed, seed),
        &MiOptions {
            folds: 5,
            seed,
            ..Default::default()
        },
    )
    .unwrap()
}
