use std::path::PathBuf;
use std::time::Instant;

use super::config::{ExperimentConfig, Method};
use super::output::{DiagnosticRow, ResultRow, TimingRow};
use crate::data::{
    gen_domains, inject_label_noise, lodo_splits, split_train_val, DomainDataset, LodoSplit,
};
use crate::diagnostics::{
    confidence_histogram, cwd, extract_features, mi_estimate, train_confidences, FeatureDump,
    MiOptions,
};
use crate::distill::{
    accuracy, concat_sources, init_network, train_deepall, train_network, Batch, DistillConfig,
    FilterSpec, MetricsLog, Objective, Trainer,
};
use crate::error::Result;
use crate::nn::{checkpoint, Architecture, Network, Tensor2D};

/// Side channels of a run: where checkpoints go and whether to report progress.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub checkpoint_dir: Option<PathBuf>,
    pub quiet: bool,
}

impl RunOptions {
    pub(crate) fn progress(&self, msg: &str) {
        if !self.quiet {
            eprintln!("{msg}");
        }
    }

    pub(crate) fn save(&self, name: &str, net: &Network) -> Result<()> {
        if let Some(dir) = &self.checkpoint_dir {
            std::fs::create_dir_all(dir)?;
            checkpoint::save(net, dir.join(format!("{name}.net")))?;
        }
        Ok(())
    }
}

/// Source domains split into training (possibly noisy) and clean validation parts, plus
/// the held-out target.
#[derive(Debug, Clone)]
pub struct PreparedSplit {
    pub target_id: usize,
    pub train: Vec<DomainDataset>,
    pub val: Vec<DomainDataset>,
    pub target: DomainDataset,
}

pub fn prepare_split(
    split: &LodoSplit,
    train_fraction: f64,
    noise: f64,
    seed: u64,
) -> Result<PreparedSplit> {
    let mut train = Vec::with_capacity(split.sources.len());
    let mut val = Vec::with_capacity(split.sources.len());
    for d in &split.sources {
        let (tr, va) = split_train_val(d, train_fraction, seed)?;
        train.push(inject_label_noise(&tr, noise, seed)?);
        val.push(va);
    }
    Ok(PreparedSplit {
        target_id: split.target.domain_id,
        train,
        val,
        target: split.target.clone(),
    })
}

pub fn architecture(cfg: &ExperimentConfig) -> Architecture {
    Architecture {
        input: cfg.benchmark.dim,
        hidden: cfg.hidden.clone(),
        output: cfg.benchmark.num_classes,
    }
}

pub const TEACHER_SEED_OFFSET: u64 = 1000;

/// DeepAll teacher for a student trained with `seed`.
pub fn train_teacher(
    cfg: &ExperimentConfig,
    train: &[DomainDataset],
    seed: u64,
) -> Result<Network> {
    let (net, _) = train_deepall(
        train,
        &architecture(cfg),
        &cfg.optimizer,
        &cfg.training,
        seed + TEACHER_SEED_OFFSET,
    )?;
    Ok(net)
}

pub fn objective_for<'a>(
    method: Method,
    cfg: &ExperimentConfig,
    teacher: Option<&'a Network>,
) -> Objective<'a> {
    match (method, teacher) {
        (Method::Deepall, _) => Objective::DeepAll,
        (Method::Softlabel, _) => Objective::SoftLabel {
            alpha: cfg.smoothing_alpha.unwrap_or(0.0),
        },
        (Method::Gradfilter, _) => Objective::GradFilter {
            filter: cfg.gradfilter_spec(),
        },
        (Method::Kd, Some(t)) => Objective::Distill {
            teacher: t,
            cfg: DistillConfig {
                filter: FilterSpec::NONE,
                teacher_gate: false,
                ..cfg.distill
            },
        },
        (Method::Kddg, Some(t)) => Objective::Distill {
            teacher: t,
            cfg: cfg.distill,
        },
        (Method::Kd | Method::Kddg, None) => {
            unreachable!("distillation methods are given a teacher")
        }
    }
}

pub fn train_method(
    method: Method,
    cfg: &ExperimentConfig,
    train: &[DomainDataset],
    teacher: Option<&Network>,
    seed: u64,
) -> Result<(Network, MetricsLog, f64)> {
    let init = init_network(&architecture(cfg), seed)?;
    let start = Instant::now();
    let (net, log) = train_network(
        train,
        init,
        objective_for(method, cfg, teacher),
        &cfg.optimizer,
        &cfg.training,
        seed,
        None,
    )?;
    let secs = start.elapsed().as_secs_f64() / log.iterations.max(1) as f64;
    Ok((net, log, secs))
}

/// Domain-leakage MI of the penultimate features on the given (source) domains.
pub fn source_mi(net: &Network, domains: &[DomainDataset], opts: &MiOptions) -> Result<f64> {
    let parts: Vec<&Tensor2D> = domains.iter().map(|d| &d.features).collect();
    let features = extract_features(net, &Tensor2D::vstack(&parts)?)?;
    let ids = domains
        .iter()
        .flat_map(|d| std::iter::repeat_n(d.domain_id, d.len()))
        .collect();
    mi_estimate(
        &FeatureDump {
            features,
            domains: ids,
        },
        opts,
    )
}

fn evaluate_row(
    method: Method,
    cfg: &ExperimentConfig,
    split: &PreparedSplit,
    noise: f64,
    seed: u64,
    net: &Network,
    log: &MetricsLog,
    secs: f64,
) -> Result<ResultRow> {
    let mut row = ResultRow::new(method.name(), noise, split.target_id.to_string(), seed);
    row.source_val_acc = Some(accuracy(net, &split.val)?);
    row.target_acc = Some(accuracy(net, std::slice::from_ref(&split.target))?);
    row.cwd = Some(cwd(&log.snapshot_series())?);
    row.mi = Some(source_mi(net, &split.val, &MiOptions { seed, ..cfg.mi })?);
    row.sec_per_iter = Some(secs);
    Ok(row)
}

fn run_methods(
    cfg: &ExperimentConfig,
    methods: &[Method],
    noise: f64,
    opts: &RunOptions,
) -> Result<Vec<ResultRow>> {
    let domains = gen_domains(&cfg.benchmark)?;
    let splits = lodo_splits(&domains)?;
    let mut rows = Vec::new();
    for t in cfg.target_domains() {
        for &seed in &cfg.seeds {
            let split = prepare_split(&splits[t], cfg.train_fraction, noise, seed)?;
            let teacher = if methods.iter().any(|m| m.needs_teacher()) {
                Some(train_teacher(cfg, &split.train, seed)?)
            } else {
                None
            };
            for &m in methods {
                let (net, log, secs) = train_method(m, cfg, &split.train, teacher.as_ref(), seed)?;
                let row = evaluate_row(m, cfg, &split, noise, seed, &net, &log, secs)?;
                opts.progress(&format!(
                    "{} noise={} target={} seed={}: target_acc={:.4} cwd={:.3}",
                    m.name(),
                    noise,
                    t,
                    seed,
                    row.target_acc.unwrap_or(f64::NAN),
                    row.cwd.unwrap_or(f64::NAN)
                ));
                opts.save(&format!("{}_n{}_t{}_s{}", m.name(), noise, t, seed), &net)?;
                rows.push(row);
            }
        }
    }
    Ok(rows)
}

/// Leave-one-domain-out training of every configured method.
pub fn run_classification(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    run_methods(cfg, &cfg.methods, cfg.noise, opts)
}

/// DeepAll at every noise ratio of `grid`.
pub fn run_noise_study(
    cfg: &ExperimentConfig,
    grid: &[f64],
    opts: &RunOptions,
) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for &lambda in grid {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(crate::Error::Config(format!(
                "noise ratio {lambda} outside [0, 1]"
            )));
        }
        rows.extend(run_methods(cfg, &[Method::Deepall], lambda, opts)?);
    }
    Ok(rows)
}

pub const HISTOGRAM_EDGES: [f64; 7] = [0.0, 0.5, 0.9, 0.99, 0.999, 0.9999, 1.0];

/// Confidence histograms and domain leakage of every configured method.
pub fn run_diagnose(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Vec<DiagnosticRow>> {
    cfg.validate()?;
    let domains = gen_domains(&cfg.benchmark)?;
    let splits = lodo_splits(&domains)?;
    let eta = cfg.distill.filter.eta;
    let mut rows = Vec::new();
    for t in cfg.target_domains() {
        for &seed in &cfg.seeds {
            let split = prepare_split(&splits[t], cfg.train_fraction, cfg.noise, seed)?;
            let teacher = if cfg.methods.iter().any(|m| m.needs_teacher()) {
                Some(train_teacher(cfg, &split.train, seed)?)
            } else {
                None
            };
            for &m in &cfg.methods {
                let (net, _, _) = train_method(m, cfg, &split.train, teacher.as_ref(), seed)?;
                let conf = train_confidences(&net, &split.train)?;
                let hist = confidence_histogram(&conf, &HISTOGRAM_EDGES)?;
                let frac = conf.iter().filter(|&&c| c > eta).count() as f64 / conf.len() as f64;
                opts.progress(&format!(
                    "{} target={} seed={}: {:.3} above {}",
                    m.name(),
                    t,
                    seed,
                    frac,
                    eta
                ));
                rows.push(DiagnosticRow {
                    method: m.name().to_string(),
                    target: t,
                    seed,
                    frac_above_eta: frac,
                    histogram: hist
                        .iter()
                        .map(usize::to_string)
                        .collect::<Vec<_>>()
                        .join(" "),
                    mi: source_mi(&net, &split.val, &MiOptions { seed, ..cfg.mi })?,
                });
            }
        }
    }
    Ok(rows)
}

/// Mean wall-clock seconds per training iteration on one fixed batch.
///
/// Methods are timed in alternating blocks so drift in machine load affects them alike.
pub fn bench_timing(cfg: &ExperimentConfig, methods: &[Method]) -> Result<Vec<TimingRow>> {
    cfg.validate()?;
    let domains = gen_domains(&cfg.benchmark)?;
    let splits = lodo_splits(&domains)?;
    let seed = cfg.seeds[0];
    let split = prepare_split(
        &splits[cfg.target_domains()[0]],
        cfg.train_fraction,
        cfg.noise,
        seed,
    )?;
    let pool = concat_sources(&split.train)?;
    let n = cfg.training.batch_size.min(pool.len());
    let idx: Vec<usize> = (0..n).collect();
    let batch = Batch::weighted(
        pool.inputs.select_rows(&idx),
        pool.labels[..n].to_vec(),
        pool.sample_weights[..n].to_vec(),
    )?;
    let teacher = init_network(&architecture(cfg), seed + TEACHER_SEED_OFFSET)?;
    let mut trainers = methods
        .iter()
        .map(|&m| {
            let init = init_network(&architecture(cfg), seed)?;
            Trainer::new(init, &cfg.optimizer, objective_for(m, cfg, Some(&teacher)))
        })
        .collect::<Result<Vec<_>>>()?;
    for t in &mut trainers {
        for _ in 0..cfg.bench.warmup_iterations {
            t.step(&batch)?;
        }
    }
    let per_round = cfg.bench.iterations.div_ceil(cfg.bench.rounds);
    let mut secs = vec![0.0; methods.len()];
    for _ in 0..cfg.bench.rounds {
        for (t, s) in trainers.iter_mut().zip(&mut secs) {
            let start = Instant::now();
            for _ in 0..per_round {
                t.step(&batch)?;
            }
            *s += start.elapsed().as_secs_f64();
        }
    }
    let iterations = per_round * cfg.bench.rounds;
    Ok(methods
        .iter()
        .zip(secs)
        .map(|(m, s)| TimingRow {
            method: m.name().to_string(),
            iterations,
            batch_size: n,
            sec_per_iter: s / iterations as f64,
        })
        .collect())
}
