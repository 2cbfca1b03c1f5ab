//! Sign-agreement probe: for mini-batches of size `s`, how often does the
//! sign of each gradient coordinate match the sign of the full-data
//! gradient?
//!
//! `γ̂_p(s)` is the fraction of trials whose batch gradient has the same
//! sign as the full gradient at parameter `p` (`sign(0) = +1`). Parameters
//! whose full gradient is within `1e-12` of zero carry no sign information
//! and are left out of the summaries.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::compression::sign_of;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{
    gradient, init_model, local_train, Batch, GradVector, ModelArch, ModelParams, TrainSettings,
};
use crate::rng::{derive, stream, Stream};

pub const NEAR_ZERO: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbeMode {
    /// Batches drawn uniformly (without replacement) from the whole set.
    IidSample,
    /// Each trial picks one label uniformly, then draws the batch from that
    /// label only, like a client holding a single class.
    SingleClass,
}

impl ProbeMode {
    pub fn name(self) -> &'static str {
        match self {
            ProbeMode::IidSample => "iid-sample",
            ProbeMode::SingleClass => "single-class",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrialPlan {
    Random(usize),
    /// Every size-`s` subset exactly once (IID mode only).
    AllSubsets,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignProbeResult {
    pub mode: ProbeMode,
    pub batch_sizes: Vec<usize>,
    pub gamma_mean: Vec<f64>,
    /// `(p25, p50, p75)` over kept parameters, per batch size.
    pub gamma_quantiles: Vec<[f64; 3]>,
    /// Trials actually run per batch size.
    pub trials: Vec<usize>,
    pub kept_parameters: usize,
}

/// Per-parameter match rates for one batch size.
#[derive(Debug, Clone, PartialEq)]
pub struct SignMatch {
    /// Parameters with a non-negligible full gradient.
    pub kept: Vec<usize>,
    pub rates: Vec<f64>,
    pub trials: usize,
}

/// Mean gradient over every sample of `data`.
pub fn full_gradient(params: &ModelParams, data: &Dataset) -> Result<GradVector> {
    if data.is_empty() {
        return Err(Error::Evaluation(
            "full gradient of an empty dataset".into(),
        ));
    }
    gradient(params, &Batch::whole(data))
}

/// Lexicographic successor of a size-`s` combination of `0..n`.
fn next_combination(c: &mut [usize], n: usize) -> bool {
    let s = c.len();
    let mut i = s;
    while i > 0 {
        i -= 1;
        if c[i] < n - s + i {
            c[i] += 1;
            for j in i + 1..s {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

fn draw_batches(
    data: &Dataset,
    s: usize,
    plan: TrialPlan,
    mode: ProbeMode,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    let n = data.len();
    if s == 0 || s > n {
        return Err(Error::Config(format!("batch size {s} must lie in 1..={n}")));
    }
    match (plan, mode) {
        (TrialPlan::Random(0), _) => Err(Error::Config("at least one trial is required".into())),
        (TrialPlan::AllSubsets, ProbeMode::IidSample) => {
            let mut out = Vec::new();
            let mut c: Vec<usize> = (0..s).collect();
            loop {
                out.push(c.clone());
                if !next_combination(&mut c, n) {
                    break;
                }
            }
            Ok(out)
        }
        (TrialPlan::AllSubsets, ProbeMode::SingleClass) => Err(Error::Config(
            "exhaustive enumeration is only defined for iid-sample mode".into(),
        )),
        (TrialPlan::Random(trials), ProbeMode::IidSample) => {
            let mut rng = stream(seed, Stream::Gamma, s as u64, 0);
            Ok((0..trials)
                .map(|_| index::sample(&mut rng, n, s).into_vec())
                .collect())
        }
        (TrialPlan::Random(trials), ProbeMode::SingleClass) => {
            let groups: Vec<Vec<usize>> = data
                .indices_by_class()
                .into_iter()
                .filter(|g| g.len() >= s)
                .collect();
            if groups.is_empty() {
                return Err(Error::Config(format!(
                    "no class has {s} samples for single-class batches"
                )));
            }
            let mut rng = stream(seed, Stream::Gamma, s as u64, 1);
            Ok((0..trials)
                .map(|_| {
                    let g = &groups[rng.random_range(0..groups.len())];
                    index::sample(&mut rng, g.len(), s)
                        .into_iter()
                        .map(|i| g[i])
                        .collect()
                })
                .collect())
        }
    }
}

/// `γ̂_p(s)` for every parameter with a non-negligible full gradient.
pub fn sign_match_rates(
    params: &ModelParams,
    data: &Dataset,
    reference: &GradVector,
    s: usize,
    plan: TrialPlan,
    mode: ProbeMode,
    seed: u64,
) -> Result<SignMatch> {
    let kept: Vec<usize> = reference
        .values
        .iter()
        .enumerate()
        .filter(|(_, g)| g.abs() > NEAR_ZERO)
        .map(|(i, _)| i)
        .collect();
    let want: Vec<i8> = kept.iter().map(|&i| sign_of(reference.values[i])).collect();
    let batches = draw_batches(data, s, plan, mode, seed)?;
    let mut matches = vec![0u32; kept.len()];
    for b in &batches {
        let g = gradient(params, &Batch::from_indices(data, b)?)?;
        for ((m, &p), &w) in matches.iter_mut().zip(&kept).zip(&want) {
            if sign_of(g.values[p]) == w {
                *m += 1;
            }
        }
    }
    let t = batches.len() as f64;
    Ok(SignMatch {
        kept,
        rates: matches.iter().map(|&m| f64::from(m) / t).collect(),
        trials: batches.len(),
    })
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn gamma_estimate(
    params: &ModelParams,
    data: &Dataset,
    batch_sizes: &[usize],
    plan: TrialPlan,
    seed: u64,
    mode: ProbeMode,
) -> Result<SignProbeResult> {
    if batch_sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(
            "batch sizes must be strictly increasing".into(),
        ));
    }
    let reference = full_gradient(params, data)?;
    let mut out = SignProbeResult {
        mode,
        batch_sizes: batch_sizes.to_vec(),
        gamma_mean: Vec::new(),
        gamma_quantiles: Vec::new(),
        trials: Vec::new(),
        kept_parameters: 0,
    };
    for &s in batch_sizes {
        let m = sign_match_rates(params, data, &reference, s, plan, mode, seed)?;
        let mut sorted = m.rates.clone();
        sorted.sort_by(f64::total_cmp);
        let mean = if sorted.is_empty() {
            f64::NAN
        } else {
            sorted.iter().sum::<f64>() / sorted.len() as f64
        };
        out.gamma_mean.push(mean);
        out.gamma_quantiles.push([
            quantile(&sorted, 0.25),
            quantile(&sorted, 0.5),
            quantile(&sorted, 0.75),
        ]);
        out.trials.push(m.trials);
        out.kept_parameters = m.kept.len();
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaRow {
    pub mode: ProbeMode,
    pub s: usize,
    pub trials: usize,
    pub gamma_mean: f64,
    pub gamma_p25: f64,
    pub gamma_p50: f64,
    pub gamma_p75: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GammaReport {
    pub rows: Vec<GammaRow>,
    /// Per result: does mean `γ̂` grow with batch size?
    pub rises: Vec<(ProbeMode, bool)>,
}

/// Largest step down tolerated between consecutive batch sizes.
pub const MONOTONE_SLACK: f64 = 0.03;
/// Minimum total increase for a curve to count as rising.
pub const MIN_RISE: f64 = 0.05;

/// Non-decreasing within [`MONOTONE_SLACK`] and rising by at least
/// [`MIN_RISE`] overall. A flat curve does not count as rising.
pub fn rises_with_batch_size(means: &[f64]) -> bool {
    match (means.first(), means.last()) {
        (Some(a), Some(b)) => {
            means.windows(2).all(|w| w[1] >= w[0] - MONOTONE_SLACK) && b - a >= MIN_RISE
        }
        _ => false,
    }
}

pub fn gamma_report(results: &[SignProbeResult]) -> GammaReport {
    let mut rows = Vec::new();
    let mut rises = Vec::new();
    for r in results {
        for (i, &s) in r.batch_sizes.iter().enumerate() {
            let [p25, p50, p75] = r.gamma_quantiles[i];
            rows.push(GammaRow {
                mode: r.mode,
                s,
                trials: r.trials[i],
                gamma_mean: r.gamma_mean[i],
                gamma_p25: p25,
                gamma_p50: p50,
                gamma_p75: p75,
            });
        }
        rises.push((r.mode, rises_with_batch_size(&r.gamma_mean)));
    }
    GammaReport { rows, rises }
}

/// A model snapshot for probing: fresh initialisation followed by `epochs`
/// passes of mini-batch SGD over the whole dataset.
pub fn pretrained_snapshot(
    arch: &ModelArch,
    data: &Dataset,
    settings: TrainSettings,
    seed: u64,
) -> Result<ModelParams> {
    let init = init_model(arch, derive(seed, Stream::Init, 0, 0));
    let all: Vec<usize> = (0..data.len()).collect();
    local_train(
        &init,
        data,
        &all,
        settings,
        derive(seed, Stream::Pretrain, 0, 0),
    )
}
