//! Datasets, the synthetic blob generator, CSV ingestion and partitioning.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::FlError;

pub const LABEL_COLUMN: &str = "label";

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    /// Row-major `n × p`.
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
    pub num_features: usize,
    pub num_classes: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.num_features..(i + 1) * self.num_features]
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.num_features);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        Dataset {
            name: self.name.clone(),
            features,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_features: self.num_features,
            num_classes: self.num_classes,
        }
    }

    /// Parses a CSV with a header row, a `label` column of class indices
    /// and float features in every other column.
    pub fn from_csv<R: Read>(reader: R, name: &str) -> Result<Dataset, FlError> {
        let bad = |m: String| FlError::Data(m);
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
        let label_pos = headers
            .iter()
            .position(|h| h.trim() == LABEL_COLUMN)
            .ok_or_else(|| bad(format!("missing `{LABEL_COLUMN}` column")))?;
        if headers.iter().filter(|h| h.trim() == LABEL_COLUMN).count() > 1 {
            return Err(bad(format!("duplicate `{LABEL_COLUMN}` column")));
        }
        let num_features = headers.len() - 1;
        if num_features == 0 {
            return Err(bad("no feature columns".into()));
        }

        let mut features = Vec::new();
        let mut labels = Vec::new();
        for (line, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| bad(e.to_string()))?;
            let row = line + 2;
            if record.len() != headers.len() {
                return Err(bad(format!("row {row}: expected {} fields", headers.len())));
            }
            for (col, field) in record.iter().enumerate() {
                let field = field.trim();
                if col == label_pos {
                    let label: usize = field
                        .parse()
                        .map_err(|_| bad(format!("row {row}: label `{field}` is not a class index")))?;
                    labels.push(label);
                } else {
                    let v: f64 = field
                        .parse()
                        .map_err(|_| bad(format!("row {row}: `{field}` is not a number")))?;
                    if !v.is_finite() {
                        return Err(bad(format!("row {row}: non-finite feature")));
                    }
                    features.push(v);
                }
            }
        }
        if labels.is_empty() {
            return Err(bad("no data rows".into()));
        }
        let num_classes = labels.iter().max().map_or(0, |m| m + 1);
        if num_classes > 1 << 16 {
            return Err(bad(format!("label {} is implausibly large", num_classes - 1)));
        }
        Ok(Dataset {
            name: name.to_string(),
            features,
            labels,
            num_features,
            num_classes,
        })
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), FlError> {
        let io = |e: csv::Error| FlError::Data(e.to_string());
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (0..self.num_features).map(|i| format!("x{i}")).collect();
        header.push(LABEL_COLUMN.into());
        w.write_record(&header).map_err(io)?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.row(i).iter().map(|v| v.to_string()).collect();
            rec.push(self.labels[i].to_string());
            w.write_record(&rec).map_err(io)?;
        }
        w.flush().map_err(|e| FlError::Data(e.to_string()))
    }
}

/// Gaussian blobs: one isotropic cluster per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub n_features: usize,
    pub n_classes: usize,
    /// Distance of every class centre from the origin.
    pub class_sep: f64,
    pub noise_std: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_train: 2000,
            n_test: 1000,
            n_features: 20,
            n_classes: 4,
            class_sep: 2.0,
            noise_std: 1.0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.n_train == 0 {
            return Err("n_train must be positive".into());
        }
        if self.n_features == 0 {
            return Err("n_features must be positive".into());
        }
        if self.n_classes < 2 {
            return Err("n_classes must be at least 2".into());
        }
        if !(self.class_sep.is_finite() && self.class_sep >= 0.0) {
            return Err("class_sep must be finite and non-negative".into());
        }
        if !(self.noise_std.is_finite() && self.noise_std > 0.0) {
            return Err("noise_std must be finite and positive".into());
        }
        Ok(())
    }

    /// Draws `(train, test)` from one set of class centres.
    pub fn generate(&self, rng: &mut ChaCha8Rng) -> (Dataset, Dataset) {
        let p = self.n_features;
        let centres: Vec<Vec<f64>> = (0..self.n_classes)
            .map(|_| {
                let dir: Vec<f64> = (0..p).map(|_| StandardNormal.sample(rng)).collect();
                let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
                dir.iter().map(|x| self.class_sep * x / norm).collect()
            })
            .collect();
        let mut draw = |n: usize, name: &str| {
            let mut labels: Vec<usize> = (0..n).map(|i| i % self.n_classes).collect();
            labels.shuffle(rng);
            let mut features = Vec::with_capacity(n * p);
            for &c in &labels {
                for centre in &centres[c] {
                    let z: f64 = StandardNormal.sample(rng);
                    features.push(centre + self.noise_std * z);
                }
            }
            Dataset {
                name: name.into(),
                features,
                labels,
                num_features: p,
                num_classes: self.n_classes,
            }
        };
        let train = draw(self.n_train, "synthetic-train");
        let test = draw(self.n_test, "synthetic-test");
        (train, test)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PartitionMode {
    #[serde(rename = "iid")]
    Iid,
    #[serde(rename = "noniid")]
    NonIid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Shards {
    pub indices: Vec<Vec<usize>>,
    pub rho: Vec<f64>,
}

impl Shards {
    pub fn num_users(&self) -> usize {
        self.indices.len()
    }
}

/// Splits `0..n` into `parts` contiguous runs whose sizes differ by at most 1.
fn split_even(items: &[usize], parts: usize) -> Vec<Vec<usize>> {
    let (base, extra) = (items.len() / parts, items.len() % parts);
    let mut out = Vec::with_capacity(parts);
    let mut start = 0;
    for i in 0..parts {
        let len = base + usize::from(i < extra);
        out.push(items[start..start + len].to_vec());
        start += len;
    }
    out
}

pub fn partition(
    labels: &[usize],
    num_users: usize,
    mode: PartitionMode,
    rng: &mut ChaCha8Rng,
) -> Result<Shards, FlError> {
    let n = labels.len();
    if num_users == 0 || n < num_users {
        return Err(FlError::TooFewSamples { n, k: num_users });
    }
    let indices = match mode {
        PartitionMode::Iid => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(rng);
            split_even(&order, num_users)
        }
        PartitionMode::NonIid => {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by_key(|&i| labels[i]);
            let pieces = if n >= 2 * num_users { 2 * num_users } else { num_users };
            let shards = split_even(&order, pieces);
            let per_user = pieces / num_users;
            shards
                .chunks(per_user)
                .map(|c| c.concat())
                .collect()
        }
    };
    let mut rho: Vec<f64> = indices.iter().map(|s| s.len() as f64 / n as f64).collect();
    let head: f64 = rho[..num_users - 1].iter().sum();
    rho[num_users - 1] = 1.0 - head;
    Ok(Shards { indices, rho })
}

/// Random sample of `size` distinct positions of `shard`, or the whole
/// shard when `size` covers it.
pub fn mini_batch(shard: &[usize], size: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if size >= shard.len() {
        return shard.to_vec();
    }
    rand::seq::index::sample(rng, shard.len(), size)
        .into_iter()
        .map(|i| shard[i])
        .collect()
}

/// Shuffled split of a dataset into `(train, test)` with `test_fraction`
/// of the rows held out.
pub fn train_test_split(data: &Dataset, test_fraction: f64, rng: &mut ChaCha8Rng) -> (Dataset, Dataset) {
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(rng);
    let n_test = ((data.len() as f64 * test_fraction).round() as usize).min(data.len().saturating_sub(1));
    let (test, train) = order.split_at(n_test);
    let mut train_set = data.subset(train);
    let mut test_set = data.subset(test);
    train_set.name = format!("{}-train", data.name);
    test_set.name = format!("{}-test", data.name);
    (train_set, test_set)
}
