use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::BenchmarkSpec;
use crate::diagnostics::MiOptions;
use crate::distill::{DistillConfig, FilterSpec, TrainSettings};
use crate::error::{Error, Result};
use crate::nn::{OptimizerConfig, Schedule};
use crate::rl::{DqnHyper, EnvConfig, GRAVITY_DOMAINS, SOURCE_GRAVITY};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Classification,
    Rl,
    Diagnose,
    Bench,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Cross-entropy on the pooled sources.
    Deepall,
    /// Unfiltered, ungated distillation.
    Kd,
    /// Cross-entropy with the gradient filter.
    Gradfilter,
    /// Filtered, gated distillation.
    Kddg,
    /// Cross-entropy against smoothed labels.
    Softlabel,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Deepall => "deepall",
            Method::Kd => "kd",
            Method::Gradfilter => "gradfilter",
            Method::Kddg => "kddg",
            Method::Softlabel => "softlabel",
        }
    }

    pub fn needs_teacher(self) -> bool {
        matches!(self, Method::Kd | Method::Kddg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RlSettings {
    pub hyper: DqnHyper,
    pub source_gravity: f64,
    pub eval_gravities: Vec<f64>,
    pub eval_episodes: usize,
    pub max_steps: usize,
}

impl Default for RlSettings {
    fn default() -> Self {
        Self {
            hyper: DqnHyper::default(),
            source_gravity: SOURCE_GRAVITY,
            eval_gravities: GRAVITY_DOMAINS.to_vec(),
            eval_episodes: 10,
            max_steps: crate::rl::DEFAULT_MAX_STEPS,
        }
    }
}

impl RlSettings {
    pub fn env(&self, gravity: f64) -> EnvConfig {
        EnvConfig {
            max_steps: self.max_steps,
            ..EnvConfig::with_gravity(gravity)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSettings {
    pub warmup_iterations: usize,
    pub iterations: usize,
    pub rounds: usize,
}

impl Default for BenchSettings {
    fn default() -> Self {
        Self {
            warmup_iterations: 50,
            iterations: 400,
            rounds: 5,
        }
    }
}

/// Everything needed to reproduce one study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub benchmark: BenchmarkSpec,
    pub methods: Vec<Method>,
    pub distill: DistillConfig,
    /// Smoothing strength for `softlabel`.
    pub smoothing_alpha: Option<f64>,
    pub hidden: Vec<usize>,
    pub optimizer: OptimizerConfig,
    pub training: TrainSettings,
    /// Fraction of every source domain used for training; the rest is source validation.
    pub train_fraction: f64,
    /// Label-noise ratio injected into the training split.
    pub noise: f64,
    pub noise_grid: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Restrict to these held-out domains; empty means all.
    pub targets: Vec<usize>,
    pub mi: MiOptions,
    pub rl: RlSettings,
    pub bench: BenchSettings,
    pub out_dir: Option<PathBuf>,
}

pub const DEFAULT_EPOCHS: usize = 30;

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            kind: ExperimentKind::Classification,
            benchmark: BenchmarkSpec::default(),
            methods: vec![Method::Deepall, Method::Kddg],
            distill: DistillConfig::default(),
            smoothing_alpha: None,
            hidden: vec![64, 64],
            optimizer: OptimizerConfig::sgd(0.05, 5e-4).with_schedule(Schedule::Cosine {
                total_epochs: DEFAULT_EPOCHS,
            }),
            training: TrainSettings {
                epochs: DEFAULT_EPOCHS,
                batch_size: 64,
            },
            train_fraction: 0.8,
            noise: 0.0,
            noise_grid: vec![0.0, 0.2, 0.4, 0.6],
            seeds: vec![0, 1, 2, 3, 4],
            targets: Vec::new(),
            mi: MiOptions::default(),
            rl: RlSettings::default(),
            bench: BenchSettings::default(),
            out_dir: None,
        }
    }
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// SHA-256 of the canonical JSON serialisation.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(serde_json::to_vec(self)?);
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(config_err("seeds must not be empty"));
        }
        if self.methods.is_empty()
            && matches!(
                self.kind,
                ExperimentKind::Classification | ExperimentKind::Bench
            )
        {
            return Err(config_err("methods must not be empty"));
        }
        self.benchmark
            .validate()
            .map_err(|e| config_err(e.to_string()))?;
        self.distill
            .validate()
            .map_err(|e| config_err(e.to_string()))?;
        self.optimizer
            .validate()
            .map_err(|e| config_err(e.to_string()))?;
        self.rl
            .hyper
            .validate()
            .map_err(|e| config_err(e.to_string()))?;
        if self.training.epochs == 0 || self.training.batch_size == 0 {
            return Err(config_err("epochs and batch_size must be positive"));
        }
        if self.methods.contains(&Method::Softlabel) {
            match self.smoothing_alpha {
                Some(a) if (0.0..=1.0).contains(&a) => {}
                Some(a) => {
                    return Err(config_err(format!(
                        "smoothing_alpha must lie in [0, 1], got {a}"
                    )))
                }
                None => return Err(config_err("method softlabel needs smoothing_alpha")),
            }
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(config_err("train_fraction must lie in (0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.noise)
            || self.noise_grid.iter().any(|l| !(0.0..=1.0).contains(l))
        {
            return Err(config_err("noise ratios must lie in [0, 1]"));
        }
        if let Some(&t) = self
            .targets
            .iter()
            .find(|&&t| t >= self.benchmark.num_domains)
        {
            return Err(config_err(format!("target {t} is not a domain index")));
        }
        if self.hidden.contains(&0) {
            return Err(config_err("hidden layer widths must be positive"));
        }
        if self.rl.eval_episodes == 0 || self.rl.eval_gravities.is_empty() {
            return Err(config_err("rl evaluation needs episodes and gravities"));
        }
        for &g in std::iter::once(&self.rl.source_gravity).chain(&self.rl.eval_gravities) {
            self.rl
                .env(g)
                .validate()
                .map_err(|e| config_err(e.to_string()))?;
        }
        if self.bench.iterations == 0 || self.bench.rounds == 0 {
            return Err(config_err("bench needs iterations and rounds"));
        }
        Ok(())
    }

    pub fn target_domains(&self) -> Vec<usize> {
        if self.targets.is_empty() {
            (0..self.benchmark.num_domains).collect()
        } else {
            self.targets.clone()
        }
    }

    /// Filter used by the `gradfilter` method.
    pub fn gradfilter_spec(&self) -> FilterSpec {
        self.distill.filter
    }
}
