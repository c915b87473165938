use std::collections::BTreeMap;
use std::path::Path;

use super::{BenchmarkSpec, DomainDataset};
use crate::error::{Error, Result};
use crate::nn::Tensor2D;

/// Write domains as one CSV: `feature_0..feature_{d−1},label,original_label,domain_id`.
pub fn write_csv(domains: &[DomainDataset], path: impl AsRef<Path>) -> Result<()> {
    let dim = domains.first().map_or(0, DomainDataset::dim);
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (0..dim).map(|j| format!("feature_{j}")).collect();
    header.extend(["label", "original_label", "domain_id"].map(String::from));
    w.write_record(&header)?;
    for ds in domains {
        if ds.dim() != dim {
            return Err(Error::InvalidInput(
                "domains differ in feature dimension".into(),
            ));
        }
        for i in 0..ds.len() {
            let mut rec: Vec<String> = ds
                .features
                .row(i)
                .iter()
                .map(|v| format!("{v:?}"))
                .collect();
            rec.push(ds.labels[i].to_string());
            rec.push(ds.original_labels[i].to_string());
            rec.push(ds.domain_id.to_string());
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Read a CSV written by [`write_csv`], grouping rows by `domain_id` (ascending).
pub fn read_csv(path: impl AsRef<Path>, num_classes: usize) -> Result<Vec<DomainDataset>> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    let cols = header.len();
    if cols < 4 {
        return Err(Error::Format(
            "dataset CSV needs features plus three label columns".into(),
        ));
    }
    let dim = cols - 3;
    for (j, h) in header.iter().take(dim).enumerate() {
        if h != format!("feature_{j}") {
            return Err(Error::Format(format!(
                "unexpected column `{h}` at position {j}"
            )));
        }
    }
    if header.iter().skip(dim).collect::<Vec<_>>() != ["label", "original_label", "domain_id"] {
        return Err(Error::Format(
            "last columns must be label, original_label, domain_id".into(),
        ));
    }
    let mut groups: BTreeMap<usize, (Vec<f64>, Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for rec in r.records() {
        let rec = rec?;
        let parse_f = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::Format(format!("bad number `{s}`")))
        };
        let parse_u = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::Format(format!("bad index `{s}`")))
        };
        let domain = parse_u(&rec[dim + 2])?;
        let g = groups.entry(domain).or_default();
        for j in 0..dim {
            g.0.push(parse_f(&rec[j])?);
        }
        g.1.push(parse_u(&rec[dim])?);
        g.2.push(parse_u(&rec[dim + 1])?);
    }
    groups
        .into_iter()
        .map(|(domain, (x, labels, orig))| {
            let n = labels.len();
            let mut ds =
                DomainDataset::new(Tensor2D::from_vec(n, dim, x)?, labels, domain, num_classes)?;
            ds.original_labels = orig;
            ds.validate()?;
            Ok(ds)
        })
        .collect()
}

/// Write `data.csv` plus the generating spec as `spec.json` into `dir`.
pub fn write_bundle(
    dir: impl AsRef<Path>,
    spec: &BenchmarkSpec,
    domains: &[DomainDataset],
) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    write_csv(domains, dir.join("data.csv"))?;
    std::fs::write(dir.join("spec.json"), serde_json::to_string_pretty(spec)?)?;
    Ok(())
}

pub fn read_bundle(dir: impl AsRef<Path>) -> Result<(BenchmarkSpec, Vec<DomainDataset>)> {
    let dir = dir.as_ref();
    let spec: BenchmarkSpec =
        serde_json::from_str(&std::fs::read_to_string(dir.join("spec.json"))?)?;
    let domains = read_csv(dir.join("data.csv"), spec.num_classes)?;
    Ok((spec, domains))
}
