//! Datasets and client partitioning.

mod idx;
mod partition;
mod synth;

pub use idx::{load_idx, parse_idx_images, parse_idx_labels};
pub use partition::{
    extract_shared_pool, partition_iid, partition_noniid_sorted, split_shared_pool, PartitionMode,
    PartitionPlan, SharedPoolConfig,
};
pub use synth::{synth_generate, synth_means, synth_train_test, BLOB_STD};

use crate::error::{Error, Result};

/// Dense feature matrix (row-major, `n × dim`) with integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<usize>,
    dim: usize,
    class_count: usize,
}

impl Dataset {
    pub fn new(
        features: Vec<f64>,
        labels: Vec<usize>,
        dim: usize,
        class_count: usize,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Config(
                "dataset must contain at least one sample".into(),
            ));
        }
        if dim == 0 {
            return Err(Error::Config("feature dimension must be positive".into()));
        }
        if features.len() != labels.len() * dim {
            return Err(Error::Shape(format!(
                "{} feature values for {} samples of dimension {dim}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::Config(format!(
                "label {bad} out of range for {class_count} classes"
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("dataset features must be finite".into()));
        }
        Ok(Self {
            features,
            labels,
            dim,
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    /// Copies the listed samples (in order) into a new dataset.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::Shape(format!(
                    "sample index {i} out of range ({} samples)",
                    self.len()
                )));
            }
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Self::new(features, labels, self.dim, self.class_count)
    }

    /// First `n` samples (or all of them when `n` exceeds the size).
    pub fn head(&self, n: usize) -> Result<Self> {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx)
    }

    /// Appends `other` after `self`; indices of `other` are shifted by `self.len()`.
    pub fn concat(&self, other: &Dataset) -> Result<Self> {
        if self.dim != other.dim || self.class_count != other.class_count {
            return Err(Error::Shape(
                "cannot concatenate datasets of different shape".into(),
            ));
        }
        let mut features = self.features.clone();
        features.extend_from_slice(&other.features);
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        Self::new(features, labels, self.dim, self.class_count)
    }

    pub fn label_histogram(&self) -> Vec<usize> {
        self.histogram_of(0..self.len())
    }

    pub fn histogram_of(&self, indices: impl IntoIterator<Item = usize>) -> Vec<usize> {
        let mut h = vec![0; self.class_count];
        for i in indices {
            h[self.labels[i]] += 1;
        }
        h
    }

    /// Indices grouped by label, each group in ascending order.
    pub fn indices_by_class(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.class_count];
        for (i, &l) in self.labels.iter().enumerate() {
            groups[l].push(i);
        }
        groups
    }
}
