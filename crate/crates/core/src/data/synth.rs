//! Gaussian-blob classification data, a fast stand-in for image datasets.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng::{stream, Stream};

pub const BLOB_STD: f64 = 0.15;

fn class_means(classes: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = stream(seed, Stream::Synthetic, 0, 0);
    (0..classes)
        .map(|_| (0..dim).map(|_| rng.random::<f64>()).collect())
        .collect()
}

/// `classes × per_class` samples, labels interleaved (`i % classes`), each
/// drawn around a seeded per-class mean with standard deviation 0.15 and
/// clamped to `[0, 1]`.
pub fn synth_generate(classes: usize, per_class: usize, dim: usize, seed: u64) -> Result<Dataset> {
    if classes < 2 || per_class < 1 || dim < 1 {
        return Err(Error::Config(format!(
            "synthetic data needs classes >= 2, per_class >= 1, dim >= 1 (got {classes}, {per_class}, {dim})"
        )));
    }
    let means = class_means(classes, dim, seed);
    let noise = Normal::new(0.0, BLOB_STD).expect("positive std");
    let mut rng = stream(seed, Stream::Synthetic, 1, 0);
    let n = classes * per_class;
    let mut features = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % classes;
        features.extend(
            means[c]
                .iter()
                .map(|m| (m + noise.sample(&mut rng)).clamp(0.0, 1.0)),
        );
        labels.push(c);
    }
    Dataset::new(features, labels, dim, classes)
}

/// Train/test pair drawn around the same class means.
pub fn synth_train_test(
    classes: usize,
    per_class: usize,
    test_per_class: usize,
    dim: usize,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    let all = synth_generate(classes, per_class + test_per_class.max(1), dim, seed)?;
    let cut = per_class * classes;
    let train: Vec<usize> = (0..cut).collect();
    let test: Vec<usize> = (cut..all.len()).collect();
    Ok((all.subset(&train)?, all.subset(&test)?))
}

/// The class means used by [`synth_generate`] for this seed.
pub fn synth_means(classes: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    class_means(classes, dim, seed)
}
