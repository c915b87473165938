use crate::data::DomainDataset;
use crate::error::{invalid_input, invalid_param, Result};
use crate::nn::{softmax_temp, Network};

/// Count confidences per bin `(e_{i}, e_{i+1}]`; the first bin also takes `e_0`.
pub fn confidence_histogram(confidences: &[f64], edges: &[f64]) -> Result<Vec<usize>> {
    if edges.len() < 2 {
        return Err(invalid_param("need at least two bin edges"));
    }
    if edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(invalid_param("bin edges must be strictly increasing"));
    }
    if edges[0] > 0.0 || edges[edges.len() - 1] < 1.0 {
        return Err(invalid_param("bin edges must cover [0, 1]"));
    }
    let bins = edges.len() - 1;
    let mut counts = vec![0usize; bins];
    for &c in confidences {
        if !(0.0..=1.0).contains(&c) {
            return Err(invalid_input(format!("confidence {c} outside [0, 1]")));
        }
        // first edge strictly ≥ c closes the bin
        let k = edges.partition_point(|&e| e < c);
        counts[k.saturating_sub(1).min(bins - 1)] += 1;
    }
    Ok(counts)
}

/// Softmax probability of the labelled class for every training sample.
pub fn train_confidences(net: &Network, domains: &[DomainDataset]) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for d in domains {
        let logits = net.forward(&d.features)?;
        for (row, &y) in logits.iter_rows().zip(&d.labels) {
            out.push(softmax_temp(row, 1.0)?[y]);
        }
    }
    Ok(out)
}
