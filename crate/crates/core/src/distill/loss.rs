use serde::{Deserialize, Serialize};

use super::filter::{weight_unchecked, FilterSpec};
use crate::error::{invalid_input, invalid_param, Result};
use crate::nn::{argmax, log_softmax, softmax_unchecked, Network, Tensor2D};

/// Hyperparameters of the distillation objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistillConfig {
    #[serde(default = "default_tau")]
    pub tau: f64,
    /// Weight of the distillation term.
    #[serde(default = "half")]
    pub lambda_kd: f64,
    /// Weight of the hard-label cross-entropy term.
    #[serde(default = "half")]
    pub lambda_ce: f64,
    #[serde(default)]
    pub filter: FilterSpec,
    #[serde(default = "yes")]
    pub teacher_gate: bool,
}

fn default_tau() -> f64 {
    2.0
}
fn half() -> f64 {
    0.5
}
fn yes() -> bool {
    true
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self {
            tau: 2.0,
            lambda_kd: 0.5,
            lambda_ce: 0.5,
            filter: FilterSpec::default(),
            teacher_gate: true,
        }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(invalid_param(format!(
                "tau must be positive, got {}",
                self.tau
            )));
        }
        if !(self.lambda_kd >= 0.0 && self.lambda_ce >= 0.0) {
            return Err(invalid_param("loss weights must be nonnegative"));
        }
        if !(self.lambda_kd + self.lambda_ce > 0.0) {
            return Err(invalid_param("at least one loss weight must be positive"));
        }
        self.filter.validate()
    }

    /// Configuration under which the objective reduces to plain cross-entropy.
    pub fn cross_entropy_only() -> Self {
        Self {
            lambda_kd: 0.0,
            lambda_ce: 1.0,
            filter: FilterSpec::NONE,
            teacher_gate: false,
            ..Self::default()
        }
    }
}

/// Inputs, labels and per-sample loss weights for one minibatch.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub inputs: Tensor2D,
    pub labels: Vec<usize>,
    pub sample_weights: Vec<f64>,
}

impl Batch {
    pub fn new(inputs: Tensor2D, labels: Vec<usize>) -> Result<Self> {
        let n = labels.len();
        Self::weighted(inputs, labels, vec![1.0; n])
    }

    pub fn weighted(
        inputs: Tensor2D,
        labels: Vec<usize>,
        sample_weights: Vec<f64>,
    ) -> Result<Self> {
        if inputs.rows() != labels.len() || labels.len() != sample_weights.len() {
            return Err(invalid_input(
                "batch inputs, labels and weights differ in length",
            ));
        }
        Ok(Self {
            inputs,
            labels,
            sample_weights,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Breakdown of the filtered distillation objective on one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchLossReport {
    pub total: f64,
    pub kd_component: f64,
    pub ce_component: f64,
    /// Gradient-filter weight of each sample.
    pub per_sample_weight: Vec<f64>,
    /// Samples whose distillation term was dropped by the teacher gate.
    pub gated_out: Vec<bool>,
}

fn check_pair(teacher: &[f64], student: &[f64]) -> Result<()> {
    if teacher.len() != student.len() {
        return Err(invalid_input(format!(
            "teacher has {} classes, student {}",
            teacher.len(),
            student.len()
        )));
    }
    if teacher.len() < 2 {
        return Err(invalid_input("need at least two classes"));
    }
    Ok(())
}

/// `τ² · Σ_i p_t^i(τ) · (−log p_s^i(τ))` for a single sample.
pub fn kd_loss_per_sample(teacher_logits: &[f64], student_logits: &[f64], tau: f64) -> Result<f64> {
    check_pair(teacher_logits, student_logits)?;
    let pt = crate::nn::softmax_temp(teacher_logits, tau)?;
    crate::nn::softmax_temp(student_logits, tau)?;
    Ok(kd_from_probs(&pt, student_logits, tau))
}

fn kd_from_probs(pt: &[f64], student_logits: &[f64], tau: f64) -> f64 {
    let ls = log_softmax(student_logits, tau);
    -tau * tau * pt.iter().zip(&ls).map(|(p, l)| p * l).sum::<f64>()
}

/// Gradient of [`kd_loss_per_sample`] with respect to the student logits: `τ (p_s − p_t)`.
pub fn kd_logit_gradient(
    teacher_logits: &[f64],
    student_logits: &[f64],
    tau: f64,
) -> Result<Vec<f64>> {
    check_pair(teacher_logits, student_logits)?;
    let pt = crate::nn::softmax_temp(teacher_logits, tau)?;
    let ps = crate::nn::softmax_temp(student_logits, tau)?;
    Ok(ps.iter().zip(&pt).map(|(s, t)| tau * (s - t)).collect())
}

/// Keep the distillation term only when the teacher's prediction matches the label.
pub fn teacher_gate(teacher_probs: &[f64], label: usize) -> Result<bool> {
    if label >= teacher_probs.len() {
        return Err(invalid_input(format!(
            "label {label} out of range for {} classes",
            teacher_probs.len()
        )));
    }
    Ok(argmax(teacher_probs) == label)
}

/// Smoothed target `(1−α)·onehot(y) + α/K`.
pub fn label_smooth(label: usize, alpha: f64, num_classes: usize) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(invalid_param(format!(
            "smoothing alpha must lie in [0, 1], got {alpha}"
        )));
    }
    if num_classes < 2 || label >= num_classes {
        return Err(invalid_input(format!(
            "label {label} invalid for {num_classes} classes"
        )));
    }
    let base = alpha / num_classes as f64;
    let mut q = vec![base; num_classes];
    q[label] = (1.0 - alpha) + base;
    Ok(q)
}

fn check_labels(labels: &[usize], classes: usize) -> Result<()> {
    match labels.iter().find(|&&y| y >= classes) {
        Some(y) => Err(invalid_input(format!(
            "label {y} out of range for {classes} classes"
        ))),
        None => Ok(()),
    }
}

/// Unfiltered student loss: `λ_ce · mean CE + λ_kd · mean KD`.
pub fn vanilla_student_loss(
    batch: &Batch,
    teacher: &Network,
    student: &Network,
    tau: f64,
    lambda_ce: f64,
    lambda_kd: f64,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(invalid_input("empty batch"));
    }
    if teacher.input_dim() != student.input_dim() || teacher.output_dim() != student.output_dim() {
        return Err(invalid_input("teacher and student shapes differ"));
    }
    check_labels(&batch.labels, student.output_dim())?;
    let t = teacher.forward(&batch.inputs)?;
    let s = student.forward(&batch.inputs)?;
    let n = batch.len() as f64;
    let mut ce = 0.0;
    let mut kd = 0.0;
    for (i, &y) in batch.labels.iter().enumerate() {
        let w = batch.sample_weights[i];
        ce += w * -log_softmax(s.row(i), 1.0)[y];
        kd += w * kd_loss_per_sample(t.row(i), s.row(i), tau)?;
    }
    Ok(lambda_ce * ce / n + lambda_kd * kd / n)
}

/// Filter weights (student confidence on the labelled class, temperature 1).
pub fn filter_weights(
    student_logits: &Tensor2D,
    labels: &[usize],
    filter: &FilterSpec,
) -> Vec<f64> {
    labels
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let p = softmax_unchecked(student_logits.row(i), 1.0)[y];
            weight_unchecked(p.clamp(0.0, 1.0), filter)
        })
        .collect()
}

/// Filtered objective and its gradient with respect to the student logits.
///
/// `teacher_logits` may be `None` only when `cfg.lambda_kd == 0`.
pub fn kddg_logit_loss(
    student_logits: &Tensor2D,
    teacher_logits: Option<&Tensor2D>,
    labels: &[usize],
    sample_weights: &[f64],
    cfg: &DistillConfig,
) -> Result<(BatchLossReport, Tensor2D)> {
    check_labels(labels, student_logits.cols())?;
    let w = filter_weights(student_logits, labels, &cfg.filter);
    kddg_logit_loss_weighted(
        student_logits,
        teacher_logits,
        labels,
        sample_weights,
        cfg,
        &w,
    )
}

/// As [`kddg_logit_loss`] with the filter weights supplied by the caller.
///
/// Filter weights act on the gradient and are never differentiated; supplying them
/// frozen is what finite-difference checks of the filtered loss need.
pub fn kddg_logit_loss_weighted(
    student_logits: &Tensor2D,
    teacher_logits: Option<&Tensor2D>,
    labels: &[usize],
    sample_weights: &[f64],
    cfg: &DistillConfig,
    filter_weights: &[f64],
) -> Result<(BatchLossReport, Tensor2D)> {
    cfg.validate()?;
    let n = labels.len();
    if n == 0 {
        return Err(invalid_input("empty batch"));
    }
    if student_logits.rows() != n || sample_weights.len() != n || filter_weights.len() != n {
        return Err(invalid_input("logits, labels and weights differ in length"));
    }
    let classes = student_logits.cols();
    check_labels(labels, classes)?;
    let use_kd = cfg.lambda_kd != 0.0;
    let teacher = match teacher_logits {
        Some(t) if t.rows() != n || t.cols() != classes => {
            return Err(invalid_input("teacher logits shape differs from student"))
        }
        Some(t) => Some(t),
        None if use_kd => return Err(invalid_input("distillation weight set but no teacher")),
        None => None,
    };

    let nf = n as f64;
    let tau = cfg.tau;
    let mut grad = Tensor2D::zeros(n, classes);
    let mut kd_sum = 0.0;
    let mut ce_sum = 0.0;
    let mut gated_out = vec![false; n];
    for i in 0..n {
        let y = labels[i];
        let s = student_logits.row(i);
        let fw = filter_weights[i];
        let sw = sample_weights[i];
        let weight = sw * fw;

        let p1 = softmax_unchecked(s, 1.0);
        let ce_i = -log_softmax(s, 1.0)[y];
        ce_sum += weight * ce_i;

        let mut kd_coef = 0.0;
        let mut kd_grad = vec![0.0; classes];
        if let Some(t) = teacher {
            let pt = softmax_unchecked(t.row(i), tau);
            let keep = !cfg.teacher_gate || argmax(&pt) == y;
            gated_out[i] = !keep;
            if keep {
                kd_sum += weight * kd_from_probs(&pt, s, tau);
                let ps = softmax_unchecked(s, tau);
                for c in 0..classes {
                    kd_grad[c] = tau * (ps[c] - pt[c]);
                }
                kd_coef = cfg.lambda_kd * weight;
            }
        }
        let g = grad.row_mut(i);
        for c in 0..classes {
            let ce_g = p1[c] - if c == y { 1.0 } else { 0.0 };
            g[c] = (kd_coef * kd_grad[c] + cfg.lambda_ce * weight * ce_g) / nf;
        }
    }
    let kd_component = kd_sum / nf;
    let ce_component = ce_sum / nf;
    let report = BatchLossReport {
        total: cfg.lambda_kd * kd_component + cfg.lambda_ce * ce_component,
        kd_component,
        ce_component,
        per_sample_weight: filter_weights.to_vec(),
        gated_out,
    };
    Ok((report, grad))
}

/// Filtered distillation objective for a batch.
pub fn kddg_batch_loss(
    batch: &Batch,
    teacher: &Network,
    student: &Network,
    cfg: &DistillConfig,
) -> Result<BatchLossReport> {
    cfg.validate()?;
    if batch.is_empty() {
        return Err(invalid_input("empty batch"));
    }
    if teacher.input_dim() != student.input_dim() || teacher.output_dim() != student.output_dim() {
        return Err(invalid_input("teacher and student shapes differ"));
    }
    let t = teacher.forward(&batch.inputs)?;
    let s = student.forward(&batch.inputs)?;
    kddg_logit_loss(&s, Some(&t), &batch.labels, &batch.sample_weights, cfg).map(|(r, _)| r)
}

/// Cross-entropy against soft targets and its logit gradient.
pub fn soft_target_logit_loss(
    logits: &Tensor2D,
    targets: &Tensor2D,
    sample_weights: &[f64],
) -> Result<(f64, Tensor2D)> {
    let n = logits.rows();
    if n == 0 || targets.rows() != n || targets.cols() != logits.cols() || sample_weights.len() != n
    {
        return Err(invalid_input("soft targets do not match logits"));
    }
    let nf = n as f64;
    let mut loss = 0.0;
    let mut grad = Tensor2D::zeros(n, logits.cols());
    for i in 0..n {
        let q = targets.row(i);
        let ls = log_softmax(logits.row(i), 1.0);
        let p = softmax_unchecked(logits.row(i), 1.0);
        let w = sample_weights[i];
        loss += w * -q.iter().zip(&ls).map(|(a, b)| a * b).sum::<f64>();
        for (c, g) in grad.row_mut(i).iter_mut().enumerate() {
            *g = w * (p[c] - q[c]) / nf;
        }
    }
    Ok((loss / nf, grad))
}
