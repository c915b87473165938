use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::filter::FilterSpec;
use super::loss::{kddg_logit_loss, label_smooth, soft_target_logit_loss, Batch, DistillConfig};
use crate::data::DomainDataset;
use crate::diagnostics::SnapshotSeries;
use crate::error::{invalid_input, invalid_param, Result};
use crate::nn::{
    argmax, grad, Architecture, Network, OptimizerConfig, OptimizerState, ParamVector, Tensor2D,
};
use crate::rng::{rng_for, stream};

/// What the student minimises.
#[derive(Debug, Clone, Copy)]
pub enum Objective<'a> {
    /// Cross-entropy on the concatenated sources.
    DeepAll,
    /// Cross-entropy against label-smoothed targets.
    SoftLabel { alpha: f64 },
    /// Cross-entropy with the gradient filter, no teacher.
    GradFilter { filter: FilterSpec },
    /// Filtered distillation from a frozen teacher.
    Distill {
        teacher: &'a Network,
        cfg: DistillConfig,
    },
}

impl Objective<'_> {
    fn validate(&self, student: &Network) -> Result<()> {
        match self {
            Objective::DeepAll => Ok(()),
            Objective::SoftLabel { alpha } if !(0.0..=1.0).contains(alpha) => Err(invalid_param(
                format!("smoothing alpha must lie in [0, 1], got {alpha}"),
            )),
            Objective::SoftLabel { .. } => Ok(()),
            Objective::GradFilter { filter } => filter.validate(),
            Objective::Distill { teacher, cfg } => {
                cfg.validate()?;
                if teacher.input_dim() != student.input_dim()
                    || teacher.output_dim() != student.output_dim()
                {
                    return Err(invalid_input(format!(
                        "teacher maps {}→{} but student maps {}→{}",
                        teacher.input_dim(),
                        teacher.output_dim(),
                        student.input_dim(),
                        student.output_dim()
                    )));
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSettings {
    pub epochs: usize,
    pub batch_size: usize,
}

impl TrainSettings {
    fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(invalid_param("epochs and batch size must be positive"));
        }
        Ok(())
    }
}

/// Loss breakdown of one optimisation step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub loss: f64,
    pub kd: f64,
    pub ce: f64,
    pub mean_filter_weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub mean_kd: f64,
    pub mean_ce: f64,
    pub mean_filter_weight: f64,
    /// `‖w_epoch − w_{epoch−1}‖₂`.
    pub step_norm: f64,
    pub source_val_accuracy: Option<f64>,
}

/// Per-epoch training history with parameter snapshots `w_0 … w_N`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsLog {
    pub epochs: Vec<EpochRecord>,
    pub snapshots: Vec<ParamVector>,
    pub iterations: usize,
}

impl MetricsLog {
    pub fn snapshot_series(&self) -> SnapshotSeries {
        SnapshotSeries {
            snapshots: self.snapshots.clone(),
        }
    }

    /// Loss of every epoch, in order.
    pub fn loss_trajectory(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.mean_loss).collect()
    }
}

/// A network, its optimizer state and objective. One call to [`Trainer::step`] is
/// one training iteration.
pub struct Trainer<'a> {
    net: Network,
    params: ParamVector,
    opt: OptimizerState,
    objective: Objective<'a>,
}

impl<'a> Trainer<'a> {
    pub fn new(net: Network, opt: &OptimizerConfig, objective: Objective<'a>) -> Result<Self> {
        objective.validate(&net)?;
        let params = net.params();
        let opt = OptimizerState::new(opt.clone(), params.len())?;
        Ok(Self {
            net,
            params,
            opt,
            objective,
        })
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn into_network(self) -> Network {
        self.net
    }

    pub fn set_epoch(&mut self, epoch: usize) {
        self.opt.set_epoch(epoch);
    }

    pub fn step(&mut self, batch: &Batch) -> Result<StepOutcome> {
        if batch.is_empty() {
            return Err(invalid_input("empty batch"));
        }
        let classes = self.net.output_dim();
        let mut outcome = StepOutcome {
            loss: 0.0,
            kd: 0.0,
            ce: 0.0,
            mean_filter_weight: 1.0,
        };
        let (_, g) = match self.objective {
            Objective::DeepAll => grad(&self.net, &batch.inputs, |logits| {
                let cfg = DistillConfig::cross_entropy_only();
                let (r, g) =
                    kddg_logit_loss(logits, None, &batch.labels, &batch.sample_weights, &cfg)?;
                outcome.loss = r.total;
                outcome.ce = r.ce_component;
                Ok((r.total, g))
            })?,
            Objective::GradFilter { filter } => grad(&self.net, &batch.inputs, |logits| {
                let cfg = DistillConfig {
                    filter,
                    ..DistillConfig::cross_entropy_only()
                };
                let (r, g) =
                    kddg_logit_loss(logits, None, &batch.labels, &batch.sample_weights, &cfg)?;
                outcome = StepOutcome {
                    loss: r.total,
                    kd: 0.0,
                    ce: r.ce_component,
                    mean_filter_weight: mean(&r.per_sample_weight),
                };
                Ok((r.total, g))
            })?,
            Objective::SoftLabel { alpha } => {
                let mut targets = Tensor2D::zeros(batch.len(), classes);
                for (i, &y) in batch.labels.iter().enumerate() {
                    targets
                        .row_mut(i)
                        .copy_from_slice(&label_smooth(y, alpha, classes)?);
                }
                grad(&self.net, &batch.inputs, |logits| {
                    let (v, g) = soft_target_logit_loss(logits, &targets, &batch.sample_weights)?;
                    outcome.loss = v;
                    outcome.ce = v;
                    Ok((v, g))
                })?
            }
            Objective::Distill { teacher, cfg } => {
                let teacher_logits = teacher.forward(&batch.inputs)?;
                grad(&self.net, &batch.inputs, |logits| {
                    let (r, g) = kddg_logit_loss(
                        logits,
                        Some(&teacher_logits),
                        &batch.labels,
                        &batch.sample_weights,
                        &cfg,
                    )?;
                    outcome = StepOutcome {
                        loss: r.total,
                        kd: r.kd_component,
                        ce: r.ce_component,
                        mean_filter_weight: mean(&r.per_sample_weight),
                    };
                    Ok((r.total, g))
                })?
            }
        };
        self.opt.step(&mut self.params, &g)?;
        self.net.set_params(&self.params)?;
        Ok(outcome)
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

/// Concatenate source domains into one training pool.
pub fn concat_sources(sources: &[DomainDataset]) -> Result<Batch> {
    if sources.is_empty() {
        return Err(invalid_input("no source domains"));
    }
    let feats: Vec<&Tensor2D> = sources.iter().map(|d| &d.features).collect();
    let x = Tensor2D::vstack(&feats)?;
    let labels = sources
        .iter()
        .flat_map(|d| d.labels.iter().copied())
        .collect();
    let weights = sources
        .iter()
        .flat_map(|d| d.sample_weights.iter().copied())
        .collect();
    Batch::weighted(x, labels, weights)
}

/// Fraction of samples whose argmax prediction equals the clean label.
pub fn accuracy(net: &Network, domains: &[DomainDataset]) -> Result<f64> {
    let mut correct = 0usize;
    let mut total = 0usize;
    for d in domains {
        let logits = net.forward(&d.features)?;
        correct += logits
            .iter_rows()
            .zip(&d.original_labels)
            .filter(|(row, &y)| argmax(row) == y)
            .count();
        total += d.len();
    }
    if total == 0 {
        return Err(invalid_input("accuracy over an empty set"));
    }
    Ok(correct as f64 / total as f64)
}

/// Minibatch training loop shared by every objective.
///
/// Only `sources` (and the optional source-domain `val` sets, which are read for
/// per-epoch accuracy and never for gradients) are visible to the loop.
pub fn train_network(
    sources: &[DomainDataset],
    init: Network,
    objective: Objective<'_>,
    opt: &OptimizerConfig,
    settings: &TrainSettings,
    seed: u64,
    val: Option<&[DomainDataset]>,
) -> Result<(Network, MetricsLog)> {
    settings.validate()?;
    let pool = concat_sources(sources)?;
    if pool.inputs.cols() != init.input_dim() {
        return Err(invalid_input(format!(
            "sources have {} features, network expects {}",
            pool.inputs.cols(),
            init.input_dim()
        )));
    }
    let mut trainer = Trainer::new(init, opt, objective)?;
    let mut shuffle = rng_for(seed, stream::SHUFFLE);
    let mut order: Vec<usize> = (0..pool.len()).collect();
    let mut log = MetricsLog {
        snapshots: vec![trainer.params.clone()],
        ..Default::default()
    };
    for epoch in 0..settings.epochs {
        trainer.set_epoch(epoch);
        order.shuffle(&mut shuffle);
        let (mut loss, mut kd, mut ce, mut fw, mut steps) = (0.0, 0.0, 0.0, 0.0, 0usize);
        for chunk in order.chunks(settings.batch_size) {
            let batch = Batch::weighted(
                pool.inputs.select_rows(chunk),
                chunk.iter().map(|&i| pool.labels[i]).collect(),
                chunk.iter().map(|&i| pool.sample_weights[i]).collect(),
            )?;
            let out = trainer.step(&batch)?;
            loss += out.loss;
            kd += out.kd;
            ce += out.ce;
            fw += out.mean_filter_weight;
            steps += 1;
        }
        log.iterations += steps;
        let prev = log.snapshots.last().expect("initial snapshot");
        let step_norm = trainer.params.distance(prev)?;
        let s = steps as f64;
        log.epochs.push(EpochRecord {
            epoch,
            mean_loss: loss / s,
            mean_kd: kd / s,
            mean_ce: ce / s,
            mean_filter_weight: fw / s,
            step_norm,
            source_val_accuracy: val.map(|v| accuracy(trainer.network(), v)).transpose()?,
        });
        log.snapshots.push(trainer.params.clone());
    }
    Ok((trainer.into_network(), log))
}

/// Seeded initial network for a training run.
pub fn init_network(arch: &Architecture, seed: u64) -> Result<Network> {
    Network::init(arch, &mut rng_for(seed, stream::INIT))
}

/// Architecture of an existing relu-MLP.
pub fn architecture_of(net: &Network) -> Architecture {
    let layers = net.layers();
    Architecture {
        input: net.input_dim(),
        hidden: layers[..layers.len() - 1]
            .iter()
            .map(|l| l.output_dim())
            .collect(),
        output: net.output_dim(),
    }
}

/// Plain cross-entropy training on the concatenated sources.
pub fn train_deepall(
    sources: &[DomainDataset],
    arch: &Architecture,
    opt: &OptimizerConfig,
    settings: &TrainSettings,
    seed: u64,
) -> Result<(Network, MetricsLog)> {
    train_network(
        sources,
        init_network(arch, seed)?,
        Objective::DeepAll,
        opt,
        settings,
        seed,
        None,
    )
}

/// Train a student with the filtered distillation objective from a frozen teacher.
/// The student shares the teacher's architecture.
pub fn train_student(
    sources: &[DomainDataset],
    teacher: &Network,
    cfg: &DistillConfig,
    opt: &OptimizerConfig,
    settings: &TrainSettings,
    seed: u64,
) -> Result<(Network, MetricsLog)> {
    let init = init_network(&architecture_of(teacher), seed)?;
    train_network(
        sources,
        init,
        Objective::Distill { teacher, cfg: *cfg },
        opt,
        settings,
        seed,
        None,
    )
}
