//! Domain-leakage mutual information `I(Z; Y_d) = H(Y_d) − E_z H(p(y_d | z))`.
//!
//! The posterior `p(y_d | z)` comes from an L2-regularised multinomial logistic
//! regression fitted with damped Newton steps on whitened features. Posteriors are
//! only ever evaluated on held-out folds.

use std::collections::BTreeMap;
use std::ops::AddAssign;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_input, invalid_param, Error, Result};
use crate::nn::{Network, Tensor2D};
use crate::rng::{rng_for, stream};

/// Latent features with the domain of each row.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDump {
    pub features: Tensor2D,
    pub domains: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MiOptions {
    pub folds: usize,
    /// L2 penalty on the mean cross-entropy.
    pub l2: f64,
    pub max_newton_steps: usize,
    pub seed: u64,
}

impl Default for MiOptions {
    fn default() -> Self {
        Self {
            folds: 5,
            l2: 1e-4,
            max_newton_steps: 40,
            seed: 0,
        }
    }
}

/// Activations of the penultimate layer.
pub fn extract_features(net: &Network, inputs: &Tensor2D) -> Result<Tensor2D> {
    let depth = net.layers().len();
    if depth < 2 {
        return Err(invalid_input(
            "feature extraction needs a network with at least two layers",
        ));
    }
    net.forward_prefix(inputs, depth - 1)
}

fn entropy(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&q| q > 0.0)
        .map(|q| q * q.ln())
        .sum::<f64>()
}

/// Estimate `I(Z; Y_d)` in nats.
pub fn mi_estimate(dump: &FeatureDump, opts: &MiOptions) -> Result<f64> {
    let n = dump.domains.len();
    if dump.features.rows() != n {
        return Err(invalid_input(
            "feature rows and domain labels differ in length",
        ));
    }
    if opts.folds < 2 {
        return Err(invalid_param("need at least two folds"));
    }
    if !(opts.l2 > 0.0) {
        return Err(invalid_param("l2 penalty must be positive"));
    }
    if n == 0 {
        return Err(invalid_input("empty feature dump"));
    }
    // remap arbitrary domain ids onto 0..D
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for &d in &dump.domains {
        *counts.entry(d).or_default() += 1;
    }
    let ids: Vec<usize> = counts.keys().copied().collect();
    let classes = ids.len();
    if classes == 1 {
        return Ok(0.0);
    }
    if let Some((d, c)) = counts.iter().find(|(_, &c)| c < 2) {
        return Err(invalid_input(format!(
            "domain {d} has {c} sample(s); cross-validation needs two"
        )));
    }
    let y: Vec<usize> = dump
        .domains
        .iter()
        .map(|d| ids.binary_search(d).expect("known id"))
        .collect();
    let prior: Vec<f64> = counts.values().map(|&c| c as f64 / n as f64).collect();
    let h_y = entropy(&prior);

    let x = whiten(&dump.features);
    let folds = stratified_folds(&y, classes, opts.folds, opts.seed);

    let mut posterior_entropy = 0.0;
    for f in 0..opts.folds {
        let train: Vec<usize> = (0..n).filter(|&i| folds[i] != f).collect();
        let test: Vec<usize> = (0..n).filter(|&i| folds[i] == f).collect();
        if test.is_empty() {
            continue;
        }
        let model = fit_softmax(&x, &y, &train, classes, opts)?;
        for &i in &test {
            posterior_entropy += entropy(&model.posterior(&x, i));
        }
    }
    Ok((h_y - posterior_entropy / n as f64).max(0.0))
}

/// Per-domain seeded shuffle dealt round-robin into folds, so every training
/// portion contains every domain that has at least two samples.
fn stratified_folds(y: &[usize], classes: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut r = rng_for(seed, stream::FOLDS);
    let mut assignment = vec![0; y.len()];
    let mut offset = 0;
    for c in 0..classes {
        let mut members: Vec<usize> = (0..y.len()).filter(|&i| y[i] == c).collect();
        members.shuffle(&mut r);
        for (k, &i) in members.iter().enumerate() {
            assignment[i] = (k + offset) % folds;
        }
        offset += members.len();
    }
    assignment
}

/// PCA whitening over the whole dump: centred, rotated onto the covariance
/// eigenbasis and scaled to unit variance. Directions with (numerically) zero
/// variance are dropped.
fn whiten(z: &Tensor2D) -> DMatrix<f64> {
    let (n, m) = (z.rows(), z.cols());
    let data = DMatrix::from_row_slice(n, m, z.data());
    if m == 0 {
        return DMatrix::zeros(n, 0);
    }
    let mean = data.row_mean();
    let mut centred = data;
    for mut row in centred.row_iter_mut() {
        row -= &mean;
    }
    let cov = centred.transpose() * &centred / n as f64;
    let eig = SymmetricEigen::new(cov);
    let max_ev = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..m)
        .filter(|&k| eig.eigenvalues[k] > 1e-10 * max_ev.max(1e-300))
        .collect();
    let mut proj = DMatrix::zeros(m, keep.len());
    for (c, &k) in keep.iter().enumerate() {
        let s = eig.eigenvalues[k].sqrt();
        proj.set_column(c, &(eig.eigenvectors.column(k) / s));
    }
    centred * proj
}

struct SoftmaxModel {
    /// `(features + 1) × classes`, last row is the bias.
    weights: DMatrix<f64>,
}

impl SoftmaxModel {
    fn posterior(&self, x: &DMatrix<f64>, i: usize) -> Vec<f64> {
        let m = x.ncols();
        let logits: Vec<f64> = (0..self.weights.ncols())
            .map(|c| {
                self.weights[(m, c)]
                    + (0..m)
                        .map(|j| x[(i, j)] * self.weights[(j, c)])
                        .sum::<f64>()
            })
            .collect();
        crate::nn::softmax_unchecked(&logits, 1.0)
    }
}

/// Row-wise softmax of `a · w` and the mean cross-entropy plus penalty.
fn evaluate(a: &DMatrix<f64>, w: &DMatrix<f64>, y: &[usize], l2: f64) -> (DMatrix<f64>, f64) {
    let mut p = a * w;
    let mut ce = 0.0;
    for (i, mut row) in p.row_iter_mut().enumerate() {
        let max = row.max();
        row.apply(|v| *v -= max);
        let lse = row.iter().map(|v| v.exp()).sum::<f64>().ln();
        ce -= row[y[i]] - lse;
        row.apply(|v| *v = (*v - lse).exp());
    }
    (p, ce / a.nrows() as f64 + 0.5 * l2 * w.norm_squared())
}

fn fit_softmax(
    x: &DMatrix<f64>,
    y: &[usize],
    rows: &[usize],
    classes: usize,
    opts: &MiOptions,
) -> Result<SoftmaxModel> {
    let m = x.ncols() + 1;
    let n = rows.len();
    let nf = n as f64;
    // design matrix with a trailing bias column
    let a = DMatrix::from_fn(n, m, |r, j| if j + 1 == m { 1.0 } else { x[(rows[r], j)] });
    let at = a.transpose();
    let ys: Vec<usize> = rows.iter().map(|&i| y[i]).collect();
    let mut onehot = DMatrix::zeros(n, classes);
    for (r, &c) in ys.iter().enumerate() {
        onehot[(r, c)] = 1.0;
    }
    let dim = m * classes;
    let mut w = DMatrix::zeros(m, classes);
    let (mut p, mut current) = evaluate(&a, &w, &ys, opts.l2);
    // parameter index of (feature j, class c) is c·m + j
    for _ in 0..opts.max_newton_steps {
        let gm = &at * (&p - &onehot) / nf + &w * opts.l2;
        let g = DVector::from_column_slice(gm.as_slice());
        if g.norm() < 1e-10 {
            break;
        }
        let mut h = DMatrix::identity(dim, dim) * opts.l2;
        for c in 0..classes {
            for c2 in c..classes {
                let s = DVector::from_fn(n, |r, _| {
                    let v = if c == c2 {
                        p[(r, c)] * (1.0 - p[(r, c)])
                    } else {
                        -p[(r, c)] * p[(r, c2)]
                    };
                    v / nf
                });
                let mut scaled = a.clone();
                for (r, mut row) in scaled.row_iter_mut().enumerate() {
                    row *= s[r];
                }
                let block = &at * scaled;
                h.view_mut((c * m, c2 * m), (m, m)).add_assign(&block);
                if c != c2 {
                    h.view_mut((c2 * m, c * m), (m, m))
                        .add_assign(&block.transpose());
                }
            }
        }
        let step = h
            .cholesky()
            .ok_or_else(|| Error::Numerical {
                layer: 0,
                detail: "domain classifier Hessian".into(),
            })?
            .solve(&g);
        let step = DMatrix::from_column_slice(m, classes, step.as_slice());
        let decrease = g.dot(&DVector::from_column_slice(step.as_slice()));
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-8 {
            let trial = &w - &step * t;
            let (tp, value) = evaluate(&a, &trial, &ys, opts.l2);
            if value <= current - 1e-4 * t * decrease {
                w = trial;
                p = tp;
                current = value;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok(SoftmaxModel { weights: w })
}

/// Write a dump as CSV: `feature_0..feature_{m−1},domain_id`.
pub fn write_feature_dump(dump: &FeatureDump, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let m = dump.features.cols();
    let mut header: Vec<String> = (0..m).map(|j| format!("feature_{j}")).collect();
    header.push("domain_id".into());
    w.write_record(&header)?;
    for (row, d) in dump.features.iter_rows().zip(&dump.domains) {
        let mut rec: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        rec.push(d.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_feature_dump(path: impl AsRef<Path>) -> Result<FeatureDump> {
    let mut r = csv::Reader::from_path(path)?;
    let cols = r.headers()?.len();
    if cols < 1 || &r.headers()?[cols - 1] != "domain_id" {
        return Err(Error::Format(
            "feature dump must end with a domain_id column".into(),
        ));
    }
    let m = cols - 1;
    let mut data = Vec::new();
    let mut domains = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        for j in 0..m {
            data.push(
                rec[j]
                    .parse::<f64>()
                    .map_err(|_| Error::Format(format!("bad number `{}`", &rec[j])))?,
            );
        }
        domains.push(
            rec[m]
                .parse::<usize>()
                .map_err(|_| Error::Format("bad domain id".into()))?,
        );
    }
    Ok(FeatureDump {
        features: Tensor2D::from_vec(domains.len(), m, data)?,
        domains,
    })
}
