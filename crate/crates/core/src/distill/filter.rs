use serde::{Deserialize, Serialize};

use crate::error::{invalid_input, invalid_param, Result};

/// Default threshold for classification tasks.
pub const DEFAULT_ETA: f64 = 0.999;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    None,
    /// Quadratic ramp from 1 at `η` down to 0 at `(1+η)/2`.
    Smooth,
    /// Step from 1 to 0 at `η`.
    Hard,
}

/// Confidence-based loss filter applied per sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSpec {
    pub kind: FilterKind,
    #[serde(default = "default_eta")]
    pub eta: f64,
}

fn default_eta() -> f64 {
    DEFAULT_ETA
}

impl Default for FilterSpec {
    fn default() -> Self {
        Self::smooth(DEFAULT_ETA)
    }
}

impl FilterSpec {
    pub const NONE: FilterSpec = FilterSpec {
        kind: FilterKind::None,
        eta: DEFAULT_ETA,
    };

    pub fn smooth(eta: f64) -> Self {
        Self {
            kind: FilterKind::Smooth,
            eta,
        }
    }

    pub fn hard(eta: f64) -> Self {
        Self {
            kind: FilterKind::Hard,
            eta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind != FilterKind::None && !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(invalid_param(format!(
                "filter eta must lie in (0, 1), got {}",
                self.eta
            )));
        }
        Ok(())
    }

    /// Confidence above which the smooth filter removes a sample entirely.
    pub fn cutoff(&self) -> f64 {
        match self.kind {
            FilterKind::None => f64::INFINITY,
            FilterKind::Smooth => 0.5 * (1.0 + self.eta),
            FilterKind::Hard => self.eta,
        }
    }
}

/// Loss weight for a sample whose ground-truth-class confidence is `p`.
pub fn grad_filter_weight(p: f64, spec: &FilterSpec) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(invalid_input(format!(
            "confidence must lie in [0, 1], got {p}"
        )));
    }
    spec.validate()?;
    Ok(weight_unchecked(p, spec))
}

pub(crate) fn weight_unchecked(p: f64, spec: &FilterSpec) -> f64 {
    let eta = spec.eta;
    match spec.kind {
        FilterKind::None => 1.0,
        FilterKind::Hard => {
            if p <= eta {
                1.0
            } else {
                0.0
            }
        }
        FilterKind::Smooth => {
            if p <= eta {
                1.0
            } else if p <= 0.5 * (1.0 + eta) {
                let r = (eta + 1.0 - 2.0 * p) / (1.0 - eta);
                r * r
            } else {
                0.0
            }
        }
    }
}
