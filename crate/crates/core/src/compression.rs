//! Update encodings and their exact payload accounting.
//!
//! Payloads are accounted rather than serialised. The wire model is:
//!
//! | encoding  | bits                                   |
//! |-----------|----------------------------------------|
//! | dense     | `32·dim + 64`                          |
//! | sign      | `dim + 64`                             |
//! | top-k     | `k·(⌈log2 dim⌉ + 32) + 64`             |
//! | ternary   | `64 + k·(⌈log2 dim⌉ + 1) + 64`         |
//! | sub-model | `32·surviving + 64`                    |
//!
//! The 64-bit term is a fixed header; the ternary codec also ships its
//! shared magnitude as a 64-bit value. Indices use fixed-width
//! `⌈log2 dim⌉`-bit positions (an upper bound on what an entropy coder would
//! need).

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{ModelArch, ModelParams};
use crate::rng::rng_from;

pub const HEADER_BITS: u64 = 64;
pub const VALUE_BITS: u64 = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Encoding {
    Dense,
    Sign,
    Topk,
    Ternary,
    Submodel,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Dense(Vec<f64>),
    /// One `±1` per coordinate.
    Sign(Vec<i8>),
    Topk {
        indices: Vec<usize>,
        values: Vec<f64>,
    },
    Ternary {
        indices: Vec<usize>,
        signs: Vec<i8>,
        mu: f64,
    },
    /// Surviving parameters of a masked model, in sub-architecture order.
    Submodel(Vec<f64>),
}

/// An encoded model delta (or model) together with its wire size.
#[derive(Debug, Clone, PartialEq)]
pub struct Update {
    pub payload: Payload,
    pub dim: usize,
    pub bits: u64,
}

impl Update {
    fn sealed(payload: Payload, dim: usize) -> Self {
        let mut u = Self {
            payload,
            dim,
            bits: 0,
        };
        u.bits = measure_payload(&u);
        u
    }

    pub fn dense(values: Vec<f64>) -> Self {
        let dim = values.len();
        Self::sealed(Payload::Dense(values), dim)
    }

    pub fn submodel(values: Vec<f64>) -> Self {
        let dim = values.len();
        Self::sealed(Payload::Submodel(values), dim)
    }

    pub fn encoding(&self) -> Encoding {
        match self.payload {
            Payload::Dense(_) => Encoding::Dense,
            Payload::Sign(_) => Encoding::Sign,
            Payload::Topk { .. } => Encoding::Topk,
            Payload::Ternary { .. } => Encoding::Ternary,
            Payload::Submodel(_) => Encoding::Submodel,
        }
    }

    /// Number of transmitted entries for sparse encodings.
    pub fn nnz(&self) -> usize {
        match &self.payload {
            Payload::Topk { indices, .. } | Payload::Ternary { indices, .. } => indices.len(),
            _ => self.dim,
        }
    }
}

/// Error-feedback accumulator for lossy codecs.
#[derive(Debug, Clone, PartialEq)]
pub struct Residual(pub Vec<f64>);

impl Residual {
    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `⌈log2 dim⌉`, the fixed width of one position index.
pub fn index_bits(dim: usize) -> u64 {
    if dim <= 1 {
        0
    } else {
        u64::from(usize::BITS - (dim - 1).leading_zeros())
    }
}

/// Exact payload size in bits.
pub fn measure_payload(update: &Update) -> u64 {
    let dim = update.dim as u64;
    match &update.payload {
        Payload::Dense(_) => VALUE_BITS * dim + HEADER_BITS,
        Payload::Sign(_) => dim + HEADER_BITS,
        Payload::Topk { indices, .. } => {
            indices.len() as u64 * (index_bits(update.dim) + VALUE_BITS) + HEADER_BITS
        }
        Payload::Ternary { indices, .. } => {
            64 + indices.len() as u64 * (index_bits(update.dim) + 1) + HEADER_BITS
        }
        Payload::Submodel(values) => VALUE_BITS * values.len() as u64 + HEADER_BITS,
    }
}

pub fn dense_bits(dim: usize) -> u64 {
    VALUE_BITS * dim as u64 + HEADER_BITS
}

fn check_finite(v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric(
            "codec input contains NaN or infinity".into(),
        ))
    }
}

/// Sign with `sign(0) = +1`.
#[inline]
pub fn sign_of(x: f64) -> i8 {
    if x < 0.0 {
        -1
    } else {
        1
    }
}

pub fn sign_compress(vec: &[f64]) -> Result<Update> {
    check_finite(vec)?;
    Ok(Update::sealed(
        Payload::Sign(vec.iter().map(|&x| sign_of(x)).collect()),
        vec.len(),
    ))
}

/// Coordinate-wise majority of `±1` votes; a tied vote is `+1`.
pub fn majority_aggregate(signs: &[&[i8]]) -> Result<Vec<i8>> {
    let first = signs
        .first()
        .ok_or_else(|| Error::Aggregation("no sign vectors to aggregate".into()))?;
    let dim = first.len();
    if let Some(bad) = signs.iter().find(|s| s.len() != dim) {
        return Err(Error::Shape(format!(
            "sign vector of length {} among length {dim}",
            bad.len()
        )));
    }
    let mut tally = vec![0i64; dim];
    for s in signs {
        for (t, &v) in tally.iter_mut().zip(s.iter()) {
            *t += i64::from(v);
        }
    }
    Ok(tally
        .into_iter()
        .map(|t| if t < 0 { -1 } else { 1 })
        .collect())
}

/// `max(1, round_half_up(k_frac · dim))`, capped at `dim`.
pub fn select_count(k_frac: f64, dim: usize) -> Result<usize> {
    if !(k_frac > 0.0 && k_frac <= 1.0) {
        return Err(Error::Config(format!(
            "k_frac must lie in (0, 1], got {k_frac}"
        )));
    }
    // tolerance absorbs representation error, e.g. 0.01 * 7850
    let k = (k_frac * dim as f64 + 0.5 + 1e-9).floor() as usize;
    Ok(k.clamp(1, dim.max(1)))
}

/// Indices of the `k` largest magnitudes (ties to the lower index), ascending.
fn top_k_indices(t: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..t.len()).collect();
    let cmp = |a: &usize, b: &usize| t[*b].abs().total_cmp(&t[*a].abs()).then(a.cmp(b));
    if k < order.len() {
        order.select_nth_unstable_by(k, cmp);
        order.truncate(k);
    }
    order.sort_unstable();
    order
}

fn accumulate(vec: &[f64], residual: &Residual) -> Result<Vec<f64>> {
    check_finite(vec)?;
    if residual.len() != vec.len() {
        return Err(Error::Shape(format!(
            "residual of length {} for a vector of length {}",
            residual.len(),
            vec.len()
        )));
    }
    Ok(vec.iter().zip(&residual.0).map(|(v, r)| v + r).collect())
}

/// Top-k sparsification with error feedback.
pub fn topk_sparsify(vec: &[f64], k_frac: f64, residual: &Residual) -> Result<(Update, Residual)> {
    let k = select_count(k_frac, vec.len())?;
    let mut t = accumulate(vec, residual)?;
    let indices = top_k_indices(&t, k);
    let values: Vec<f64> = indices.iter().map(|&i| t[i]).collect();
    for &i in &indices {
        t[i] = 0.0;
    }
    let dim = vec.len();
    Ok((
        Update::sealed(Payload::Topk { indices, values }, dim),
        Residual(t),
    ))
}

/// Sparse ternary compression: top-k selection, then every kept entry is
/// replaced by `±μ` where `μ` is the mean kept magnitude.
pub fn stc_encode(vec: &[f64], k_frac: f64, residual: &Residual) -> Result<(Update, Residual)> {
    let k = select_count(k_frac, vec.len())?;
    let mut t = accumulate(vec, residual)?;
    let indices = top_k_indices(&t, k);
    let mu = if indices.is_empty() {
        0.0
    } else {
        indices.iter().map(|&i| t[i].abs()).sum::<f64>() / indices.len() as f64
    };
    let signs: Vec<i8> = indices.iter().map(|&i| sign_of(t[i])).collect();
    for (&i, &s) in indices.iter().zip(&signs) {
        t[i] -= f64::from(s) * mu;
    }
    let dim = vec.len();
    Ok((
        Update::sealed(Payload::Ternary { indices, signs, mu }, dim),
        Residual(t),
    ))
}

fn check_index(i: usize, dim: usize) -> Result<()> {
    if i >= dim {
        Err(Error::Corruption(format!(
            "index {i} outside dimension {dim}"
        )))
    } else {
        Ok(())
    }
}

/// Dense reconstruction. Sub-model payloads decode to their compact vector.
pub fn decode(update: &Update, dim: usize) -> Result<Vec<f64>> {
    if update.dim != dim {
        return Err(Error::Shape(format!(
            "update of dimension {} decoded as {dim}",
            update.dim
        )));
    }
    match &update.payload {
        Payload::Dense(v) | Payload::Submodel(v) => {
            if v.len() != dim {
                return Err(Error::Corruption(
                    "dense payload length differs from its dimension".into(),
                ));
            }
            Ok(v.clone())
        }
        Payload::Sign(s) => {
            if s.len() != dim {
                return Err(Error::Corruption(
                    "sign payload length differs from its dimension".into(),
                ));
            }
            Ok(s.iter().map(|&x| f64::from(x)).collect())
        }
        Payload::Topk { indices, values } => {
            let mut out = vec![0.0; dim];
            for (&i, &v) in indices.iter().zip(values) {
                check_index(i, dim)?;
                out[i] = v;
            }
            Ok(out)
        }
        Payload::Ternary { indices, signs, mu } => {
            let mut out = vec![0.0; dim];
            for (&i, &s) in indices.iter().zip(signs) {
                check_index(i, dim)?;
                out[i] = f64::from(s) * mu;
            }
            Ok(out)
        }
    }
}

/// Kept hidden units per hidden layer for federated dropout.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSet {
    pub rate: f64,
    pub seed: u64,
    /// `kept[h]`: strictly increasing unit indices of hidden layer `h`.
    pub kept: Vec<Vec<usize>>,
}

fn kept_count(size: usize, rate: f64) -> usize {
    (((1.0 - rate) * size as f64) + 0.5)
        .floor()
        .clamp(1.0, size as f64) as usize
}

pub fn make_masks(arch: &ModelArch, rate: f64, seed: u64) -> Result<MaskSet> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!(
            "dropout rate must lie in [0, 1), got {rate}"
        )));
    }
    if arch.hidden_layers().is_empty() {
        return Err(Error::Config(
            "federated dropout needs at least one hidden layer".into(),
        ));
    }
    let mut rng = rng_from(seed);
    let kept = arch
        .hidden_layers()
        .iter()
        .map(|&size| {
            let mut v = index::sample(&mut rng, size, kept_count(size, rate)).into_vec();
            v.sort_unstable();
            v
        })
        .collect();
    Ok(MaskSet { rate, seed, kept })
}

impl MaskSet {
    fn check(&self, arch: &ModelArch) -> Result<()> {
        let hidden = arch.hidden_layers();
        if hidden.len() != self.kept.len() {
            return Err(Error::Shape(format!(
                "mask covers {} hidden layers, model has {}",
                self.kept.len(),
                hidden.len()
            )));
        }
        for (units, &size) in self.kept.iter().zip(hidden) {
            if units.is_empty()
                || units.windows(2).any(|w| w[0] >= w[1])
                || units.last().is_some_and(|&u| u >= size)
            {
                return Err(Error::Shape(
                    "mask indices must be strictly increasing and in range".into(),
                ));
            }
        }
        Ok(())
    }

    /// Architecture of the thinned model.
    pub fn sub_arch(&self, arch: &ModelArch) -> Result<ModelArch> {
        self.check(arch)?;
        let sizes = arch.layer_sizes();
        let mut out = vec![sizes[0]];
        out.extend(self.kept.iter().map(Vec::len));
        out.push(arch.classes());
        ModelArch::new(out)
    }

    /// Global parameter indices that survive the mask, in sub-model order.
    pub fn surviving_indices(&self, arch: &ModelArch) -> Result<Vec<usize>> {
        self.check(arch)?;
        let sizes = arch.layer_sizes();
        let units = |layer: usize| -> Vec<usize> {
            if layer == 0 || layer == sizes.len() - 1 {
                (0..sizes[layer]).collect()
            } else {
                self.kept[layer - 1].clone()
            }
        };
        let mut out = Vec::new();
        for (l, layer) in arch.layers().iter().enumerate() {
            let rows = units(l);
            let cols = units(l + 1);
            for &i in &rows {
                let base = layer.weights.start + i * layer.n_out;
                out.extend(cols.iter().map(|&o| base + o));
            }
            out.extend(cols.iter().map(|&o| layer.biases.start + o));
        }
        Ok(out)
    }
}

/// Keeps the weights incident to surviving units and their biases.
pub fn extract_submodel(params: &ModelParams, masks: &MaskSet) -> Result<Update> {
    let idx = masks.surviving_indices(&params.arch)?;
    Ok(Update::submodel(
        idx.iter().map(|&i| params.values[i]).collect(),
    ))
}

/// The compact payload of `sub` viewed as a trainable model.
pub fn submodel_params(sub: &Update, masks: &MaskSet, arch: &ModelArch) -> Result<ModelParams> {
    let Payload::Submodel(values) = &sub.payload else {
        return Err(Error::Shape("expected a sub-model payload".into()));
    };
    ModelParams::new(masks.sub_arch(arch)?, values.clone())
}

/// Writes the surviving coordinates back into a copy of `global`.
pub fn expand_submodel(sub: &Update, masks: &MaskSet, global: &ModelParams) -> Result<ModelParams> {
    let Payload::Submodel(values) = &sub.payload else {
        return Err(Error::Shape("expected a sub-model payload".into()));
    };
    let idx = masks.surviving_indices(&global.arch)?;
    if idx.len() != values.len() {
        return Err(Error::Shape(format!(
            "sub-model has {} values, mask keeps {}",
            values.len(),
            idx.len()
        )));
    }
    let mut out = global.clone();
    for (&i, &v) in idx.iter().zip(values) {
        out.values[i] = v;
    }
    Ok(out)
}
