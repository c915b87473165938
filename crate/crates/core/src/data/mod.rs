//! Seeded multi-domain synthetic classification benchmark.
//!
//! Every domain shares the same class-conditional Gaussian mixture in a 2-d signal
//! plane. A domain rotates that plane, shifts the whole vector by a bias, and scales
//! the within-class spread. The remaining `dim − 2` coordinates are distractors: pure
//! noise plus the domain bias, plus an optional class-dependent spurious shift that
//! differs between domains.

mod csv_io;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use csv_io::{read_bundle, read_csv, write_bundle, write_csv};

use crate::error::{invalid_input, invalid_param, Result};
use crate::nn::Tensor2D;
use crate::rng::{derive_seed, rng_for, stream, Rng};

/// Spread of the default per-domain distractor biases.
pub const BIAS_STD: f64 = 2.0;

/// Samples of one domain.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainDataset {
    pub features: Tensor2D,
    /// Training labels (possibly corrupted).
    pub labels: Vec<usize>,
    /// Labels before noise injection.
    pub original_labels: Vec<usize>,
    pub domain_id: usize,
    pub sample_weights: Vec<f64>,
    pub num_classes: usize,
}

impl DomainDataset {
    pub fn new(
        features: Tensor2D,
        labels: Vec<usize>,
        domain_id: usize,
        num_classes: usize,
    ) -> Result<Self> {
        let n = labels.len();
        let ds = Self {
            features,
            original_labels: labels.clone(),
            labels,
            domain_id,
            sample_weights: vec![1.0; n],
            num_classes,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.labels.len();
        if self.features.rows() != n
            || self.original_labels.len() != n
            || self.sample_weights.len() != n
        {
            return Err(invalid_input("dataset columns differ in length"));
        }
        if self.num_classes < 2 {
            return Err(invalid_input("dataset needs at least two classes"));
        }
        if self
            .labels
            .iter()
            .chain(&self.original_labels)
            .any(|&y| y >= self.num_classes)
        {
            return Err(invalid_input("label out of range"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn noisy_count(&self) -> usize {
        self.labels
            .iter()
            .zip(&self.original_labels)
            .filter(|(a, b)| a != b)
            .count()
    }

    /// Rows at `indices`, in order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            original_labels: indices.iter().map(|&i| self.original_labels[i]).collect(),
            domain_id: self.domain_id,
            sample_weights: indices.iter().map(|&i| self.sample_weights[i]).collect(),
            num_classes: self.num_classes,
        }
    }
}

/// Parameters of the synthetic benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSpec {
    pub num_domains: usize,
    pub num_classes: usize,
    pub dim: usize,
    pub samples_per_domain: usize,
    /// Rotation of the signal plane per domain, in degrees.
    pub angles_deg: Vec<f64>,
    /// Additive shift per domain (length `dim` each).
    pub biases: Vec<Vec<f64>>,
    /// Multiplier on the within-class spread per domain.
    pub noise_scales: Vec<f64>,
    /// Distance of class centres from the origin in the signal plane.
    pub class_radius: f64,
    /// Standard deviation of each class around its centre.
    pub class_std: f64,
    /// Standard deviation of the distractor coordinates.
    pub distractor_std: f64,
    /// Magnitude of the per-domain, per-class shift in distractor coordinates.
    #[serde(default)]
    pub spurious_scale: f64,
    pub seed: u64,
}

impl Default for BenchmarkSpec {
    fn default() -> Self {
        Self::with_angles(&[0.0, 25.0, 50.0, 75.0], 16, 2000, 0)
    }
}

impl BenchmarkSpec {
    /// Default-shaped spec (4 classes) with the given angles; biases are drawn from a
    /// fixed stream so the spec itself is a pure function of its arguments.
    pub fn with_angles(
        angles_deg: &[f64],
        dim: usize,
        samples_per_domain: usize,
        seed: u64,
    ) -> Self {
        let d = angles_deg.len();
        let mut r = rng_for(0x5eed_b1a5, stream::DOMAIN);
        let biases = (0..d)
            .map(|_| {
                let mut b = vec![0.0; dim];
                for v in b.iter_mut().skip(2) {
                    *v = BIAS_STD * r.sample::<f64, _>(StandardNormal);
                }
                b
            })
            .collect();
        Self {
            num_domains: d,
            num_classes: 4,
            dim,
            samples_per_domain,
            angles_deg: angles_deg.to_vec(),
            biases,
            noise_scales: vec![1.0; d],
            class_radius: 5.0,
            class_std: 1.0,
            distractor_std: 1.0,
            spurious_scale: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.num_domains;
        if d == 0 || self.num_classes < 2 || self.dim < 2 || self.samples_per_domain == 0 {
            return Err(invalid_param(
                "benchmark needs ≥1 domain, ≥2 classes, dim ≥ 2 and samples",
            ));
        }
        if self.angles_deg.len() != d || self.biases.len() != d || self.noise_scales.len() != d {
            return Err(invalid_param(
                "per-domain parameter lists must have num_domains entries",
            ));
        }
        if self.biases.iter().any(|b| b.len() != self.dim) {
            return Err(invalid_param("each domain bias must have `dim` entries"));
        }
        for (i, a) in self.angles_deg.iter().enumerate() {
            if self.angles_deg[..i].iter().any(|b| (a - b).abs() < 1e-12) {
                return Err(invalid_param("domain angles must be distinct"));
            }
        }
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !self.noise_scales.iter().all(|&s| finite_nonneg(s))
            || !finite_nonneg(self.class_std)
            || !finite_nonneg(self.distractor_std)
            || !finite_nonneg(self.spurious_scale)
            || !self.class_radius.is_finite()
        {
            return Err(invalid_param("scales must be finite and nonnegative"));
        }
        Ok(())
    }

    fn center(&self, class: usize) -> (f64, f64) {
        let phi = 2.0 * std::f64::consts::PI * class as f64 / self.num_classes as f64;
        (self.class_radius * phi.cos(), self.class_radius * phi.sin())
    }

    fn labels(&self) -> Vec<usize> {
        (0..self.samples_per_domain)
            .map(|i| i % self.num_classes)
            .collect()
    }

    /// Draw the untransformed sample for domain slot `domain`: centres plus unit-scale
    /// deviations, using the same random stream as [`gen_domains`].
    pub fn base_sample(&self, domain: usize) -> Result<DomainDataset> {
        self.validate()?;
        let (_, dev) = self.draw(domain);
        let labels = self.labels();
        let mut x = dev;
        for (i, &y) in labels.iter().enumerate() {
            let (cx, cy) = self.center(y);
            x[(i, 0)] += cx;
            x[(i, 1)] += cy;
        }
        DomainDataset::new(x, labels, domain, self.num_classes)
    }

    /// Deviations (class spread in the plane, distractor noise elsewhere) and the
    /// per-class spurious shifts for one domain.
    fn draw(&self, domain: usize) -> (Vec<Vec<f64>>, Tensor2D) {
        let mut r: Rng = rng_for(derive_seed(self.seed, stream::DOMAIN), domain as u64);
        let n = self.samples_per_domain;
        let mut dev = Tensor2D::zeros(n, self.dim);
        for i in 0..n {
            let row = dev.row_mut(i);
            for (j, v) in row.iter_mut().enumerate() {
                let z: f64 = r.sample(StandardNormal);
                *v = if j < 2 {
                    self.class_std * z
                } else {
                    self.distractor_std * z
                };
            }
        }
        let spurious = (0..self.num_classes)
            .map(|_| {
                (0..self.dim)
                    .map(|j| {
                        if j < 2 {
                            0.0
                        } else {
                            self.spurious_scale * r.sample::<f64, _>(StandardNormal)
                        }
                    })
                    .collect()
            })
            .collect();
        (spurious, dev)
    }
}

/// Generate every domain of the benchmark.
pub fn gen_domains(spec: &BenchmarkSpec) -> Result<Vec<DomainDataset>> {
    spec.validate()?;
    (0..spec.num_domains).map(|d| gen_domain(spec, d)).collect()
}

fn gen_domain(spec: &BenchmarkSpec, d: usize) -> Result<DomainDataset> {
    let (spurious, dev) = spec.draw(d);
    let labels = spec.labels();
    let theta = spec.angles_deg[d].to_radians();
    let (sin, cos) = theta.sin_cos();
    let scale = spec.noise_scales[d];
    let bias = &spec.biases[d];
    let mut x = Tensor2D::zeros(labels.len(), spec.dim);
    for (i, &y) in labels.iter().enumerate() {
        let (cx, cy) = spec.center(y);
        let src = dev.row(i);
        let row = x.row_mut(i);
        let px = cx + scale * src[0];
        let py = cy + scale * src[1];
        row[0] = cos * px - sin * py + bias[0];
        row[1] = sin * px + cos * py + bias[1];
        for j in 2..spec.dim {
            row[j] = scale * src[j] + spurious[y][j] + bias[j];
        }
    }
    DomainDataset::new(x, labels, d, spec.num_classes)
}

/// Relabel exactly `round(λ·n)` samples, chosen by a seeded shuffle, with a class
/// drawn uniformly from the `K − 1` wrong ones. All other labels are restored to
/// their originals, so the result depends only on the clean labels and the seed.
pub fn inject_label_noise(ds: &DomainDataset, ratio: f64, seed: u64) -> Result<DomainDataset> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(invalid_param(format!(
            "noise ratio must lie in [0, 1], got {ratio}"
        )));
    }
    let n = ds.len();
    let count = (ratio * n as f64).round() as usize;
    let mut out = ds.clone();
    out.labels.clone_from(&ds.original_labels);
    if count == 0 {
        return Ok(out);
    }
    let mut r = rng_for(derive_seed(seed, ds.domain_id as u64), stream::NOISE);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut r);
    let k = ds.num_classes;
    for &i in &order[..count] {
        let shift = r.random_range(1..k);
        out.labels[i] = (ds.original_labels[i] + shift) % k;
    }
    Ok(out)
}

/// Seeded shuffle then split into `(train, val)` with `round(ratio·n)` training rows.
pub fn split_train_val(
    ds: &DomainDataset,
    ratio: f64,
    seed: u64,
) -> Result<(DomainDataset, DomainDataset)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(invalid_param(format!(
            "split ratio must lie in (0, 1), got {ratio}"
        )));
    }
    let n = ds.len();
    let n_train = (ratio * n as f64).round() as usize;
    if n_train == 0 || n_train == n {
        return Err(invalid_param(format!(
            "split of {n} samples at {ratio} leaves one side empty"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_for(
        derive_seed(seed, ds.domain_id as u64),
        stream::SPLIT,
    ));
    Ok((ds.subset(&order[..n_train]), ds.subset(&order[n_train..])))
}

/// One leave-one-domain-out fold.
#[derive(Debug, Clone)]
pub struct LodoSplit {
    pub sources: Vec<DomainDataset>,
    pub target: DomainDataset,
}

pub fn lodo_splits(domains: &[DomainDataset]) -> Result<Vec<LodoSplit>> {
    if domains.len() < 2 {
        return Err(invalid_input(
            "leave-one-domain-out needs at least two domains",
        ));
    }
    Ok((0..domains.len())
        .map(|t| LodoSplit {
            sources: domains
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != t)
                .map(|(_, d)| d.clone())
                .collect(),
            target: domains[t].clone(),
        })
        .collect())
}
