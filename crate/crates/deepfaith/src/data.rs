//! Dataset ingestion, standardization, splitting, and a synthetic
//! ground-truth-attributable task generator.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Real;

/// An input instance: an `n x d` grid of reals, row-major. Tabular tasks use
/// `d = 1`; the type keeps the general contract.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    n: usize,
    d: usize,
    values: Vec<Real>,
}

impl Instance {
    pub fn new(n: usize, d: usize, values: Vec<Real>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::Invalid("instance needs n >= 1 and d >= 1".into()));
        }
        if values.len() != n * d {
            return Err(Error::ShapeMismatch(format!(
                "expected {} values for {}x{}, got {}",
                n * d,
                n,
                d,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("instance value at flat index {i}")));
        }
        Ok(Self { n, d, values })
    }

    pub fn from_row(values: Vec<Real>) -> Result<Self> {
        let n = values.len();
        Self::new(n, 1, values)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn values(&self) -> &[Real] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Real] {
        &mut self.values
    }

    /// The `d`-dimensional block of element `i`.
    pub fn block(&self, i: usize) -> &[Real] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn same_shape(&self, other: &Instance) -> bool {
        self.n == other.n && self.d == other.d
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    pub instances: Vec<Instance>,
    pub labels: Vec<usize>,
    pub feature_names: Vec<String>,
    /// Per flat feature (length `n * d`); identity transform when not standardized.
    pub feature_means: Vec<Real>,
    pub feature_stds: Vec<Real>,
    pub train_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    pub split_seed: u64,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn n(&self) -> usize {
        self.instances.first().map_or(0, |x| x.n())
    }

    pub fn d(&self) -> usize {
        self.instances.first().map_or(0, |x| x.d())
    }

    pub fn num_classes(&self) -> usize {
        self.labels.iter().copied().max().map_or(0, |m| m + 1)
    }

    pub fn train_instances(&self) -> impl Iterator<Item = (&Instance, usize)> {
        self.train_idx
            .iter()
            .map(move |&i| (&self.instances[i], self.labels[i]))
    }

    pub fn test_instances(&self) -> impl Iterator<Item = (&Instance, usize)> {
        self.test_idx
            .iter()
            .map(move |&i| (&self.instances[i], self.labels[i]))
    }

    /// Per-feature mean over the training split of the raw stored values.
    /// After standardization this is close to zero; used as the default
    /// baseline input.
    pub fn mean_instance(&self) -> Result<Instance> {
        if self.is_empty() {
            return Err(Error::Empty);
        }
        let n = self.n();
        let d = self.d();
        let mut acc = vec![0.0; n * d];
        for x in &self.instances {
            for (a, v) in acc.iter_mut().zip(x.values()) {
                *a += v;
            }
        }
        let m = self.len() as Real;
        for a in &mut acc {
            *a /= m;
        }
        Instance::new(n, d, acc)
    }

    fn assign_split(&mut self, seed: u64, train_fraction: f64) {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Fisher-Yates
        for i in (1..idx.len()).rev() {
            let j = rng.gen_range(0..=i);
            idx.swap(i, j);
        }
        let cut = ((idx.len() as f64) * train_fraction).round() as usize;
        let cut = cut.clamp(1, idx.len().saturating_sub(1).max(1));
        self.train_idx = idx[..cut].to_vec();
        self.test_idx = idx[cut..].to_vec();
        self.split_seed = seed;
    }
}

/// Loads a headered CSV of numeric features into a tabular dataset
/// (`d = 1`). Standardization is z-score per column with constant columns
/// guarded to std 1.
pub fn load_csv(path: impl AsRef<Path>, target_column: &str, standardize: bool) -> Result<Dataset> {
    load_csv_with_split(path, target_column, standardize, 0, 0.8)
}

pub fn load_csv_with_split(
    path: impl AsRef<Path>,
    target_column: &str,
    standardize: bool,
    split_seed: u64,
    train_fraction: f64,
) -> Result<Dataset> {
    let path = path.as_ref();
    let pstr = path.display().to_string();
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Csv {
        path: pstr.clone(),
        msg: e.to_string(),
    })?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Csv {
            path: pstr.clone(),
            msg: e.to_string(),
        })?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let target_pos = headers
        .iter()
        .position(|h| h == target_column)
        .ok_or_else(|| Error::Csv {
            path: pstr.clone(),
            msg: format!("unknown target column '{target_column}'"),
        })?;
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != target_pos)
        .map(|(_, h)| h.clone())
        .collect();

    let mut rows: Vec<Vec<Real>> = Vec::new();
    let mut raw_labels: Vec<Real> = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Csv {
            path: pstr.clone(),
            msg: e.to_string(),
        })?;
        let mut row = Vec::with_capacity(headers.len() - 1);
        for (col_idx, cell) in record.iter().enumerate() {
            let v: Real = cell.trim().parse().map_err(|_| Error::Csv {
                path: pstr.clone(),
                msg: format!(
                    "non-numeric cell '{}' at row {}, column '{}'",
                    cell.trim(),
                    row_idx + 2,
                    headers[col_idx]
                ),
            })?;
            if col_idx == target_pos {
                raw_labels.push(v);
            } else {
                row.push(v);
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Csv {
            path: pstr,
            msg: "no data rows".into(),
        });
    }

    // Labels: map distinct values to class indices in sorted order.
    let mut distinct: Vec<Real> = raw_labels.clone();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distinct.dedup();
    let labels: Vec<usize> = raw_labels
        .iter()
        .map(|v| distinct.iter().position(|d| d == v).unwrap())
        .collect();

    let n = rows[0].len();
    let mut feature_means = vec![0.0; n];
    let mut feature_stds = vec![1.0; n];
    if standardize {
        let m = rows.len() as Real;
        for j in 0..n {
            let mean = rows.iter().map(|r| r[j]).sum::<Real>() / m;
            let var = rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<Real>() / m;
            let std = var.sqrt();
            feature_means[j] = mean;
            feature_stds[j] = if std > 0.0 { std } else { 1.0 };
        }
        for row in &mut rows {
            for j in 0..n {
                row[j] = (row[j] - feature_means[j]) / feature_stds[j];
            }
        }
    }

    let instances = rows
        .into_iter()
        .map(Instance::from_row)
        .collect::<Result<Vec<_>>>()?;
    let mut ds = Dataset {
        instances,
        labels,
        feature_names,
        feature_means,
        feature_stds,
        train_idx: vec![],
        test_idx: vec![],
        split_seed: 0,
    };
    ds.assign_split(split_seed, train_fraction);
    Ok(ds)
}

/// Synthetic binary task with known nonnegative coefficients: features are
/// i.i.d. Uniform(0, 1), the label is `sum(c_i * x_i) > threshold` with the
/// threshold at the expected score, so classes stay roughly balanced.
pub fn synth_linear(n: usize, num_samples: usize, seed: u64) -> Result<(Dataset, Vec<Real>)> {
    if n < 2 {
        return Err(Error::OutOfRange {
            name: "n",
            value: n as f64,
        });
    }
    if num_samples < 1 {
        return Err(Error::OutOfRange {
            name: "num_samples",
            value: num_samples as f64,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coeffs: Vec<Real> = (0..n).map(|_| rng.gen_range(0.2..1.0)).collect();
    let threshold: Real = coeffs.iter().sum::<Real>() * 0.5;
    let mut instances = Vec::with_capacity(num_samples);
    let mut labels = Vec::with_capacity(num_samples);
    for _ in 0..num_samples {
        let row: Vec<Real> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let score: Real = row.iter().zip(&coeffs).map(|(x, c)| x * c).sum();
        labels.push(usize::from(score > threshold));
        instances.push(Instance::from_row(row)?);
    }
    let mut ds = Dataset {
        instances,
        labels,
        feature_names: (0..n).map(|i| format!("f{i}")).collect(),
        feature_means: vec![0.0; n],
        feature_stds: vec![1.0; n],
        train_idx: vec![],
        test_idx: vec![],
        split_seed: seed,
    };
    ds.assign_split(seed, 0.8);
    Ok((ds, coeffs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_csv(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn load_csv_shapes() {
        let f = write_csv("a,b,c,d,y\n1,2,3,4,0\n5,6,7,8,1\n9,10,11,12,0\n");
        let ds = load_csv(f.path(), "y", false).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.n(), 4);
        assert_eq!(ds.d(), 1);
        assert_eq!(ds.labels, vec![0, 1, 0]);
    }

    #[test]
    fn load_csv_standardizes() {
        let f = write_csv("a,y\n1,0\n2,1\n3,0\n4,1\n");
        let ds = load_csv(f.path(), "y", true).unwrap();
        let col: Vec<f64> = ds.instances.iter().map(|x| x.values()[0]).collect();
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        let std = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64).sqrt();
        assert!(mean.abs() < 1e-9);
        assert!((std - 1.0).abs() < 1e-9);
    }

    #[test]
    fn load_csv_constant_column_guard() {
        let f = write_csv("a,b,y\n7,1,0\n7,2,1\n7,3,0\n");
        let ds = load_csv(f.path(), "y", true).unwrap();
        assert_eq!(ds.feature_stds[0], 1.0);
        // constant column becomes all zeros after centering, values unchanged in spread
        for x in &ds.instances {
            assert!((x.values()[0] - 0.0).abs() < 1e-12);
        }
    }

    #[test]
    fn load_csv_reports_bad_cell() {
        let f = write_csv("a,y\n1,0\nfoo,1\n");
        let err = load_csv(f.path(), "y", false).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("foo") && msg.contains("row 3") && msg.contains("'a'"), "{msg}");
    }

    #[test]
    fn load_csv_unknown_target() {
        let f = write_csv("a,y\n1,0\n");
        assert!(load_csv(f.path(), "z", false).is_err());
    }

    #[test]
    fn load_csv_deterministic() {
        let f = write_csv("a,b,y\n1,2,0\n3,4,1\n5,6,0\n7,8,1\n9,0,0\n");
        let a = load_csv(f.path(), "y", true).unwrap();
        let b = load_csv(f.path(), "y", true).unwrap();
        assert_eq!(a.instances, b.instances);
        assert_eq!(a.train_idx, b.train_idx);
    }

    #[test]
    fn split_disjoint_and_covering() {
        let (ds, _) = synth_linear(5, 50, 3).unwrap();
        let mut all: Vec<usize> = ds.train_idx.iter().chain(&ds.test_idx).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn synth_linear_deterministic() {
        let (a, ca) = synth_linear(5, 200, 42).unwrap();
        let (b, cb) = synth_linear(5, 200, 42).unwrap();
        assert_eq!(a.instances, b.instances);
        assert_eq!(ca, cb);
        assert_eq!(a.len(), 200);
        assert_eq!(a.n(), 5);
    }

    #[test]
    fn synth_linear_class_balance() {
        for seed in 0..10 {
            let (ds, _) = synth_linear(6, 300, seed).unwrap();
            let pos = ds.labels.iter().filter(|&&l| l == 1).count() as f64 / 300.0;
            assert!((0.3..=0.7).contains(&pos), "seed {seed}: balance {pos}");
        }
    }

    #[test]
    fn instance_validation() {
        assert!(Instance::new(2, 2, vec![1.0, 2.0, 3.0]).is_err());
        assert!(Instance::new(1, 1, vec![f64::NAN]).is_err());
        assert!(Instance::new(0, 1, vec![]).is_err());
    }
}
