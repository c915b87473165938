use serde::{Deserialize, Serialize};

use super::tensor::ParamVector;
use crate::error::{invalid_input, invalid_param, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", deny_unknown_fields)]
pub enum Schedule {
    Constant,
    /// Cosine annealing from the base rate to zero over `total_epochs`.
    Cosine {
        total_epochs: usize,
    },
}

impl Schedule {
    pub fn factor(&self, epoch: usize) -> f64 {
        match *self {
            Schedule::Constant => 1.0,
            Schedule::Cosine { total_epochs } => {
                let t = epoch.min(total_epochs) as f64 / total_epochs.max(1) as f64;
                0.5 * (1.0 + (std::f64::consts::PI * t).cos())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default = "default_schedule")]
    pub schedule: Schedule,
}

fn default_schedule() -> Schedule {
    Schedule::Constant
}

impl OptimizerConfig {
    pub fn sgd(lr: f64, weight_decay: f64) -> Self {
        Self {
            kind: OptimizerKind::Sgd,
            lr,
            weight_decay,
            schedule: Schedule::Constant,
        }
    }

    pub fn adam(lr: f64) -> Self {
        Self {
            kind: OptimizerKind::Adam,
            lr,
            weight_decay: 0.0,
            schedule: Schedule::Constant,
        }
    }

    pub fn with_schedule(mut self, schedule: Schedule) -> Self {
        self.schedule = schedule;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(invalid_param(format!(
                "learning rate must be nonnegative, got {}",
                self.lr
            )));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(invalid_param("weight decay must be nonnegative"));
        }
        if let Schedule::Cosine { total_epochs: 0 } = self.schedule {
            return Err(invalid_param("cosine schedule needs total_epochs > 0"));
        }
        Ok(())
    }
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone)]
struct Moments {
    m: ParamVector,
    v: ParamVector,
}

/// Mutable optimizer state: configuration, Adam moments and step counter.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    config: OptimizerConfig,
    moments: Option<Moments>,
    step: u64,
    epoch: usize,
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig, param_count: usize) -> Result<Self> {
        config.validate()?;
        let moments = (config.kind == OptimizerKind::Adam).then(|| Moments {
            m: ParamVector::zeros(param_count),
            v: ParamVector::zeros(param_count),
        });
        Ok(Self {
            config,
            moments,
            step: 0,
            epoch: 0,
        })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn set_epoch(&mut self, epoch: usize) {
        self.epoch = epoch;
    }

    /// Learning rate after applying the schedule at the current epoch.
    pub fn effective_lr(&self) -> f64 {
        self.config.lr * self.config.schedule.factor(self.epoch)
    }

    /// Apply one update in place.
    pub fn step(&mut self, params: &mut ParamVector, grad: &ParamVector) -> Result<()> {
        if params.len() != grad.len() {
            return Err(invalid_input(format!(
                "parameter/gradient length mismatch: {} vs {}",
                params.len(),
                grad.len()
            )));
        }
        let lr = self.effective_lr();
        let wd = self.config.weight_decay;
        self.step += 1;
        match &mut self.moments {
            None => {
                for (p, &g) in params.0.iter_mut().zip(&grad.0) {
                    *p -= lr * (g + wd * *p);
                }
            }
            Some(Moments { m, v }) => {
                if m.len() != params.len() {
                    return Err(invalid_input(
                        "optimizer moments sized for a different network",
                    ));
                }
                let t = self.step as i32;
                let c1 = 1.0 - BETA1.powi(t);
                let c2 = 1.0 - BETA2.powi(t);
                for i in 0..params.len() {
                    let g = grad.0[i] + wd * params.0[i];
                    m.0[i] = BETA1 * m.0[i] + (1.0 - BETA1) * g;
                    v.0[i] = BETA2 * v.0[i] + (1.0 - BETA2) * g * g;
                    let mh = m.0[i] / c1;
                    let vh = v.0[i] / c2;
                    params.0[i] -= lr * mh / (vh.sqrt() + ADAM_EPS);
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_step_definition() {
        let mut st = OptimizerState::new(OptimizerConfig::sgd(0.1, 0.0), 1).unwrap();
        let mut p = ParamVector(vec![1.0]);
        st.step(&mut p, &ParamVector(vec![2.0])).unwrap();
        assert!((p.0[0] - 0.8).abs() < 1e-15);
        assert_eq!(st.steps(), 1);
    }

    #[test]
    fn sgd_weight_decay() {
        let mut st = OptimizerState::new(OptimizerConfig::sgd(0.1, 0.5), 1).unwrap();
        let mut p = ParamVector(vec![2.0]);
        st.step(&mut p, &ParamVector(vec![0.0])).unwrap();
        assert!((p.0[0] - 1.9).abs() < 1e-15);
    }

    #[test]
    fn adam_zero_gradient_is_noop() {
        let mut st = OptimizerState::new(OptimizerConfig::adam(1e-3), 3).unwrap();
        let mut p = ParamVector(vec![0.5, -1.0, 2.0]);
        let before = p.clone();
        st.step(&mut p, &ParamVector::zeros(3)).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut st = OptimizerState::new(OptimizerConfig::adam(1e-2), 2).unwrap();
        let mut p = ParamVector(vec![0.0, 0.0]);
        st.step(&mut p, &ParamVector(vec![3.0, -0.5])).unwrap();
        assert!((p.0[0] + 1e-2).abs() < 1e-9);
        assert!((p.0[1] - 1e-2).abs() < 1e-9);
    }

    #[test]
    fn cosine_half_way_is_half_rate() {
        let cfg =
            OptimizerConfig::sgd(0.05, 0.0).with_schedule(Schedule::Cosine { total_epochs: 30 });
        let mut st = OptimizerState::new(cfg, 1).unwrap();
        st.set_epoch(15);
        assert!((st.effective_lr() - 0.025).abs() < 1e-15);
        st.set_epoch(0);
        assert_eq!(st.effective_lr(), 0.05);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut st = OptimizerState::new(OptimizerConfig::sgd(0.1, 0.0), 2).unwrap();
        let mut p = ParamVector(vec![1.0, 2.0]);
        assert!(st.step(&mut p, &ParamVector(vec![1.0])).is_err());
    }

    proptest::proptest! {
        #[test]
        fn zero_learning_rate_is_identity(
            p in proptest::collection::vec(-5.0f64..5.0, 1..10),
            adam in proptest::bool::ANY,
        ) {
            let n = p.len();
            let cfg = if adam { OptimizerConfig::adam(0.0) } else { OptimizerConfig::sgd(0.0, 0.01) };
            let mut st = OptimizerState::new(cfg, n).unwrap();
            let mut params = ParamVector(p.clone());
            let g = ParamVector(p.iter().map(|v| v * 0.3 + 1.0).collect());
            st.step(&mut params, &g).unwrap();
            proptest::prop_assert_eq!(params.0, p);
        }
    }
}
