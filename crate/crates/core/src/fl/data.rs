//! Datasets, the synthetic Gaussian-mixture task, and label-skewed shards.
//!
//! External data files are comma-separated text with no header: each record
//! is `feature_1,...,feature_D,label` with an integer label in `0..C`. Lines
//! starting with `#` are ignored.

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};
use crate::scalar::Real;

/// Labelled feature vectors stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    feature_dim: usize,
    classes: usize,
    features: Vec<T>,
    labels: Vec<usize>,
}

impl<T: Real> Dataset<T> {
    pub fn new(feature_dim: usize, classes: usize, features: Vec<T>, labels: Vec<usize>) -> Result<Self> {
        if feature_dim == 0 || classes < 2 {
            return Err(Error::Data("need at least one feature and two classes".into()));
        }
        if features.len() != feature_dim * labels.len() {
            return Err(Error::Dimension {
                expected: feature_dim * labels.len(),
                actual: features.len(),
            });
        }
        if let Some(&y) = labels.iter().find(|&&y| y >= classes) {
            return Err(Error::Data(format!("label {y} outside 0..{classes}")));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite feature".into()));
        }
        Ok(Self {
            feature_dim,
            classes,
            features,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn sample(&self, i: usize) -> (&[T], usize) {
        let d = self.feature_dim;
        (&self.features[i * d..(i + 1) * d], self.labels[i])
    }

    /// Copy with every feature multiplied by `c`.
    pub fn scaled(&self, c: T) -> Self {
        Self {
            features: self.features.iter().map(|&v| v * c).collect(),
            ..self.clone()
        }
    }
}

/// Shape of the synthetic classification task.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub feature_dim: usize,
    pub samples: usize,
    /// Norm of every class mean; features are mean plus `N(0, I)` noise.
    pub separation: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            classes: 10,
            feature_dim: 32,
            samples: 2000,
            separation: 3.0,
        }
    }
}

/// Gaussian mixture with balanced classes and random mean directions.
pub fn synthetic_gaussian_mixture<T: Real>(spec: &SyntheticSpec, seed: u64) -> Result<Dataset<T>> {
    if spec.samples == 0 {
        return Err(Error::Data("synthetic dataset needs samples".into()));
    }
    let mut rng = stream_rng(seed, Stream::Dataset, 0, 0);
    let d = spec.feature_dim;
    let means: Vec<Vec<f64>> = (0..spec.classes)
        .map(|_| {
            let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            v.into_iter().map(|a| a * spec.separation / n).collect()
        })
        .collect();
    let mut features = Vec::with_capacity(spec.samples * d);
    let mut labels = Vec::with_capacity(spec.samples);
    for i in 0..spec.samples {
        let y = i % spec.classes;
        for &m in &means[y] {
            let z: f64 = rng.sample(StandardNormal);
            features.push(T::lit(m + z));
        }
        labels.push(y);
    }
    Dataset::new(d, spec.classes, features, labels)
}

/// Loads a comma-separated `features..., label` file.
pub fn load_csv<T: Real>(path: &Path, classes: Option<usize>) -> Result<Dataset<T>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut dim = None;
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let n = record.len();
        if n < 2 {
            return Err(Error::Data(format!("record {line}: need features and a label")));
        }
        if *dim.get_or_insert(n - 1) != n - 1 {
            return Err(Error::Data(format!("record {line}: inconsistent feature count")));
        }
        for field in record.iter().take(n - 1) {
            let v: T = field
                .parse()
                .map_err(|_| Error::Data(format!("record {line}: bad feature {field:?}")))?;
            features.push(v);
        }
        let y: usize = record[n - 1]
            .parse()
            .map_err(|_| Error::Data(format!("record {line}: bad label {:?}", &record[n - 1])))?;
        labels.push(y);
    }
    let dim = dim.ok_or_else(|| Error::Data("empty dataset file".into()))?;
    let classes = classes.unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
    Dataset::new(dim, classes, features, labels)
}

/// One device's local data: sample indices into the shared dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DataShard<T> {
    pub owner: usize,
    pub indices: Vec<usize>,
    /// `alpha_k = n_k / sum_j n_j`
    pub weight: T,
}

impl<T: Real> DataShard<T> {
    pub fn size(&self) -> usize {
        self.indices.len()
    }
}

/// Splits label-sorted data into `devices` contiguous shards of random
/// sizes. Relative sizes are drawn uniformly from `[0.5, 1.5]`, then
/// rounded by largest remainder with at least one sample per shard.
pub fn partition_noniid<T: Real>(data: &Dataset<T>, devices: usize, seed: u64) -> Result<Vec<DataShard<T>>> {
    let n = data.len();
    if devices == 0 || n < devices {
        return Err(Error::Data(format!("cannot split {n} samples across {devices} devices")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| data.labels[i]);

    let mut rng = stream_rng(seed, Stream::Partition, 0, 0);
    let raw: Vec<f64> = (0..devices).map(|_| rng.random_range(0.5..1.5)).collect();
    let total: f64 = raw.iter().sum();
    let spare = (n - devices) as f64;
    let exact: Vec<f64> = raw.iter().map(|r| r / total * spare).collect();
    let mut sizes: Vec<usize> = exact.iter().map(|e| 1 + e.floor() as usize).collect();
    let mut left = n - sizes.iter().sum::<usize>();
    let mut by_remainder: Vec<usize> = (0..devices).collect();
    by_remainder.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.partial_cmp(&ra).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    for &k in by_remainder.iter().cycle() {
        if left == 0 {
            break;
        }
        sizes[k] += 1;
        left -= 1;
    }

    let mut start = 0;
    let total = T::count(n);
    Ok(sizes
        .into_iter()
        .enumerate()
        .map(|(owner, size)| {
            let indices = order[start..start + size].to_vec();
            start += size;
            DataShard {
                owner,
                indices,
                weight: T::count(size) / total,
            }
        })
        .collect())
}

/// Shannon entropy (nats) of the labels at `indices`.
pub fn label_entropy<T: Real>(data: &Dataset<T>, indices: &[usize]) -> f64 {
    let mut counts = vec![0usize; data.classes];
    for &i in indices {
        counts[data.labels[i]] += 1;
    }
    let n = indices.len() as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn synthetic_is_balanced_and_deterministic() {
        let spec = SyntheticSpec {
            samples: 100,
            ..Default::default()
        };
        let a: Dataset<f64> = synthetic_gaussian_mixture(&spec, 3).unwrap();
        let b: Dataset<f64> = synthetic_gaussian_mixture(&spec, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 100);
        for c in 0..10 {
            assert_eq!(a.labels().iter().filter(|&&y| y == c).count(), 10);
        }
    }

    #[test]
    fn partition_is_exhaustive_disjoint_and_skewed() {
        let data: Dataset<f64> = synthetic_gaussian_mixture(&SyntheticSpec::default(), 1).unwrap();
        let shards = partition_noniid(&data, 10, 7).unwrap();
        let mut seen = vec![false; data.len()];
        for s in &shards {
            for &i in &s.indices {
                assert!(!seen[i]);
                seen[i] = true;
            }
        }
        assert!(seen.iter().all(|&b| b));
        let mass: f64 = shards.iter().map(|s| s.weight).sum();
        assert!((mass - 1.0).abs() < 1e-12);
        let sizes: Vec<usize> = shards.iter().map(DataShard::size).collect();
        assert!(sizes.iter().max() > sizes.iter().min());
        let all: Vec<usize> = (0..data.len()).collect();
        let global = label_entropy(&data, &all);
        for s in &shards {
            assert!(label_entropy(&data, &s.indices) < global);
        }
        let one = partition_noniid(&data, 1, 7).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].weight, 1.0);
        assert!(partition_noniid(&Dataset::<f64>::new(1, 2, vec![0.0], vec![0]).unwrap(), 2, 0).is_err());
    }

    #[test]
    fn csv_loader_reads_records() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "# two features then label").unwrap();
        writeln!(f, "0.5, 1.0, 1").unwrap();
        writeln!(f, "-2,3e-1,0").unwrap();
        let d: Dataset<f64> = load_csv(f.path(), None).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.classes(), 2);
        assert_eq!(d.sample(1), (&[-2.0, 0.3][..], 0));
        let mut bad = tempfile::NamedTempFile::new().unwrap();
        writeln!(bad, "1.0,2.0,0\n1.0,0").unwrap();
        assert!(load_csv::<f64>(bad.path(), None).is_err());
    }
}
