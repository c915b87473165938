//! Training diagnostics: cumulative weight distance, domain-leakage mutual
//! information and confidence histograms.

mod histogram;
mod mi;

pub use histogram::{confidence_histogram, train_confidences};
pub use mi::{
    extract_features, mi_estimate, read_feature_dump, write_feature_dump, FeatureDump, MiOptions,
};

use crate::error::{invalid_input, Result};
use crate::nn::ParamVector;

/// Parameter vectors `w_0 … w_N`, one per epoch.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SnapshotSeries {
    pub snapshots: Vec<ParamVector>,
}

/// Cumulative weight distance `Σ_{k=1..N} ‖w_k − w_{k−1}‖₂`.
pub fn cwd(series: &SnapshotSeries) -> Result<f64> {
    let s = &series.snapshots;
    if let Some(first) = s.first() {
        if s.iter().any(|w| w.len() != first.len()) {
            return Err(invalid_input("snapshots differ in length"));
        }
    }
    s.windows(2).map(|w| w[1].distance(&w[0])).sum()
}
