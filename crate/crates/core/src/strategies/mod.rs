//! Federated algorithms behind one contract.
//!
//! Every strategy implements the same three steps: the server prepares a
//! [`Broadcast`] from the global model, each sampled client turns it into an
//! [`Upload`], and the server folds the uploads into the next global model.
//! [`play_round`] wires the three together and keeps the bit ledger.

mod cmfl;
mod datashare;
mod fedavg;
mod feddropout;
mod fedmmd;
mod signsgd;
mod stc;

pub use cmfl::{cmfl_relevance, Cmfl};
pub use datashare::{augment_with_pool, datashare_warmstart};
pub use fedavg::FedAvg;
pub use feddropout::FedDropout;
pub use fedmmd::{
    fedmmd_local_objective, median_bandwidth, mmd2, mmd2_with_grad, Bandwidth, FedMmd, MmdObjective,
};
pub use signsgd::SignSgd;
pub use stc::Stc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compression::{MaskSet, Residual, Update};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{ModelArch, ModelParams, TrainSettings};
use crate::rng::{derive, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    Fedavg,
    Signsgd,
    Stc,
    Cmfl,
    Fedmmd,
    Feddropout,
    Datashare,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 7] = [
        StrategyKind::Fedavg,
        StrategyKind::Signsgd,
        StrategyKind::Stc,
        StrategyKind::Cmfl,
        StrategyKind::Fedmmd,
        StrategyKind::Feddropout,
        StrategyKind::Datashare,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Fedavg => "fedavg",
            StrategyKind::Signsgd => "signsgd",
            StrategyKind::Stc => "stc",
            StrategyKind::Cmfl => "cmfl",
            StrategyKind::Fedmmd => "fedmmd",
            StrategyKind::Feddropout => "feddropout",
            StrategyKind::Datashare => "datashare",
        }
    }
}

impl std::fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Algorithm selection plus every algorithm-specific knob. Each field is
/// read only by the strategy it belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    /// Fraction of coordinates kept by STC.
    pub k_frac: f64,
    /// Minimum sign-agreement score for a CMFL upload.
    pub cmfl_threshold: f64,
    pub mmd_lambda: f64,
    pub mmd_bandwidth: Bandwidth,
    pub dropout_rate: f64,
    /// Also sign-compress the server step on the way down (signSGD only).
    pub sign_downstream: bool,
    /// Fraction of training data moved into the shared pool.
    pub shared_gamma: f64,
    /// Fraction of the shared pool copied to each client.
    pub alpha: f64,
    pub warmstart_epochs: usize,
}

impl StrategyConfig {
    pub fn new(kind: StrategyKind) -> Self {
        Self {
            kind,
            k_frac: 0.01,
            cmfl_threshold: 0.8,
            mmd_lambda: 0.1,
            mmd_bandwidth: Bandwidth::Median,
            dropout_rate: 0.25,
            sign_downstream: false,
            shared_gamma: 0.1,
            alpha: 1.0,
            warmstart_epochs: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        match self.kind {
            StrategyKind::Stc if !(self.k_frac > 0.0 && self.k_frac <= 1.0) => fail(format!(
                "strategy.k_frac must lie in (0, 1], got {}",
                self.k_frac
            )),
            StrategyKind::Cmfl if !(0.0..=1.0).contains(&self.cmfl_threshold) => fail(format!(
                "strategy.cmfl_threshold must lie in [0, 1], got {}",
                self.cmfl_threshold
            )),
            StrategyKind::Fedmmd if !(self.mmd_lambda >= 0.0 && self.mmd_lambda.is_finite()) => {
                fail(format!(
                    "strategy.mmd_lambda must be >= 0, got {}",
                    self.mmd_lambda
                ))
            }
            StrategyKind::Fedmmd if matches!(self.mmd_bandwidth, Bandwidth::Fixed(s) if !(s > 0.0 && s.is_finite())) => {
                fail("strategy.mmd_bandwidth must be positive".into())
            }
            StrategyKind::Feddropout if !(0.0..1.0).contains(&self.dropout_rate) => fail(format!(
                "strategy.dropout_rate must lie in [0, 1), got {}",
                self.dropout_rate
            )),
            StrategyKind::Datashare => {
                if self.warmstart_epochs == 0 {
                    return fail("strategy.warmstart_epochs must be at least 1".into());
                }
                crate::data::SharedPoolConfig::new(self.shared_gamma, self.alpha).map(|_| ())
            }
            _ => Ok(()),
        }
    }
}

impl Default for StrategyConfig {
    fn default() -> Self {
        Self::new(StrategyKind::Fedavg)
    }
}

/// Per-client simulation state.
#[derive(Debug, Clone)]
pub struct ClientState {
    pub id: usize,
    pub sample_indices: Vec<usize>,
    /// Error-feedback memory for lossy uploads.
    pub residual: Residual,
}

impl ClientState {
    pub fn new(id: usize, sample_indices: Vec<usize>, dim: usize) -> Self {
        Self {
            id,
            sample_indices,
            residual: Residual::zeros(dim),
        }
    }

    /// `m_k`, the sample count used as the aggregation weight.
    pub fn weight(&self) -> usize {
        self.sample_indices.len()
    }
}

/// What clients need to run their local step in a given round.
#[derive(Debug, Clone, Copy)]
pub struct TrainContext<'a> {
    pub data: &'a Dataset,
    pub settings: TrainSettings,
    pub seed: u64,
    pub round: usize,
}

impl TrainContext<'_> {
    pub fn client_seed(&self, client: usize) -> u64 {
        derive(
            self.seed,
            Stream::ClientTrain,
            self.round as u64,
            client as u64,
        )
    }
}

/// Server-to-client message.
#[derive(Debug, Clone)]
pub struct Broadcast {
    /// The model clients start from (a thinned model under dropout).
    pub model: ModelParams,
    /// Downlink size per participant.
    pub bits: u64,
    pub masks: Option<MaskSet>,
    /// Previous aggregated update, for relevance checks.
    pub reference: Option<Vec<f64>>,
}

impl Broadcast {
    pub fn dense(global: &ModelParams) -> Self {
        Self {
            model: global.clone(),
            bits: crate::compression::dense_bits(global.len()),
            masks: None,
            reference: None,
        }
    }
}

/// Client-to-server message; `update == None` means nothing was sent.
#[derive(Debug, Clone)]
pub struct Upload {
    pub client: usize,
    pub weight: usize,
    pub update: Option<Update>,
}

#[derive(Debug, Clone)]
pub struct Aggregated {
    pub model: ModelParams,
    /// No upload reached the server; the model is unchanged.
    pub stalled: bool,
}

pub trait Strategy: Send + Sync {
    fn kind(&self) -> StrategyKind;

    fn broadcast(&mut self, global: &ModelParams, round: usize) -> Result<Broadcast>;

    fn client_update(
        &self,
        broadcast: &Broadcast,
        client: &mut ClientState,
        ctx: &TrainContext,
    ) -> Result<Upload>;

    /// `uploads` arrive sorted by client id.
    fn aggregate(
        &mut self,
        global: &ModelParams,
        broadcast: &Broadcast,
        uploads: Vec<Upload>,
    ) -> Result<Aggregated>;
}

/// `m_k / m` for each client.
pub fn normalized_weights(weights: &[usize]) -> Result<Vec<f64>> {
    let total: usize = weights.iter().sum();
    if weights.is_empty() || weights.contains(&0) {
        return Err(Error::Aggregation(
            "aggregation weights must be positive".into(),
        ));
    }
    Ok(weights.iter().map(|&w| w as f64 / total as f64).collect())
}

/// Sample-count weighted mean `Σ (m_k / m) · u_k`, summed in the given
/// (client id) order.
///
/// Computed as `u_0 + Σ (m_k / m)(u_k − u_0)`, which is algebraically the
/// same and returns a shared input bit-for-bit when all inputs are equal.
pub fn weighted_average(updates: &[&[f64]], weights: &[usize]) -> Result<Vec<f64>> {
    let first = updates
        .first()
        .ok_or_else(|| Error::Aggregation("nothing to average".into()))?;
    if updates.len() != weights.len() {
        return Err(Error::Aggregation(format!(
            "{} updates but {} weights",
            updates.len(),
            weights.len()
        )));
    }
    if let Some(u) = updates.iter().find(|u| u.len() != first.len()) {
        return Err(Error::Shape(format!(
            "update of length {} among length {}",
            u.len(),
            first.len()
        )));
    }
    let w = normalized_weights(weights)?;
    let mut out = first.to_vec();
    for (u, wk) in updates.iter().zip(&w).skip(1) {
        for ((o, &x), &base) in out.iter_mut().zip(u.iter()).zip(first.iter()) {
            *o += wk * (x - base);
        }
    }
    Ok(out)
}

/// Decodes uploads and averages them; `None` when nothing was uploaded.
pub(crate) fn average_uploads(uploads: &[Upload], dim: usize) -> Result<Option<Vec<f64>>> {
    let mut vectors = Vec::new();
    let mut weights = Vec::new();
    for up in uploads {
        if let Some(u) = &up.update {
            vectors.push(crate::compression::decode(u, dim)?);
            weights.push(up.weight);
        }
    }
    if vectors.is_empty() {
        return Ok(None);
    }
    let refs: Vec<&[f64]> = vectors.iter().map(Vec::as_slice).collect();
    weighted_average(&refs, &weights).map(Some)
}

/// Averages uploaded models in delta form, `start + Σ (m_k / m)(u_k − start)`.
///
/// Delta-uploading strategies reduce with the same float operations, so
/// lossless configurations of them reproduce these trajectories exactly.
pub(crate) fn average_models(
    vectors: &[&[f64]],
    weights: &[usize],
    start: &[f64],
) -> Result<Vec<f64>> {
    if let Some(v) = vectors.iter().find(|v| v.len() != start.len()) {
        return Err(Error::Shape(format!(
            "model of length {} against length {}",
            v.len(),
            start.len()
        )));
    }
    let deltas: Vec<Vec<f64>> = vectors
        .iter()
        .map(|v| v.iter().zip(start).map(|(a, b)| a - b).collect())
        .collect();
    let refs: Vec<&[f64]> = deltas.iter().map(Vec::as_slice).collect();
    let avg = weighted_average(&refs, weights)?;
    Ok(start.iter().zip(&avg).map(|(s, d)| s + d).collect())
}

/// Decodes dense model uploads and averages them in delta form.
pub(crate) fn average_uploaded_models(
    uploads: &[Upload],
    start: &ModelParams,
) -> Result<ModelParams> {
    let mut vectors = Vec::new();
    let mut weights = Vec::new();
    for up in uploads {
        if let Some(u) = &up.update {
            vectors.push(crate::compression::decode(u, start.len())?);
            weights.push(up.weight);
        }
    }
    if vectors.is_empty() {
        return Err(Error::Aggregation(
            "every sampled client was skipped".into(),
        ));
    }
    let refs: Vec<&[f64]> = vectors.iter().map(Vec::as_slice).collect();
    ModelParams::new(
        start.arch.clone(),
        average_models(&refs, &weights, &start.values)?,
    )
}

pub(crate) fn delta(new: &ModelParams, old: &ModelParams) -> Vec<f64> {
    new.values
        .iter()
        .zip(&old.values)
        .map(|(a, b)| a - b)
        .collect()
}

pub(crate) fn add_delta(global: &ModelParams, delta: &[f64]) -> ModelParams {
    let mut out = global.clone();
    for (v, d) in out.values.iter_mut().zip(delta) {
        *v += d;
    }
    out
}

pub(crate) fn train_locally(
    objective: &dyn crate::nn::Objective,
    start: &ModelParams,
    client: &ClientState,
    ctx: &TrainContext,
) -> Result<ModelParams> {
    crate::nn::local_train_with(
        objective,
        start,
        ctx.data,
        &client.sample_indices,
        ctx.settings,
        ctx.client_seed(client.id),
    )
    .map_err(|e| match e {
        Error::EmptyClient(_) => Error::EmptyClient(client.id),
        e => e,
    })
}

/// Builds the strategy object for one run.
pub fn build_strategy(
    cfg: &StrategyConfig,
    arch: &ModelArch,
    eta: f64,
    seed: u64,
) -> Result<Box<dyn Strategy>> {
    cfg.validate()?;
    Ok(match cfg.kind {
        StrategyKind::Fedavg => Box::new(FedAvg::new()),
        StrategyKind::Datashare => Box::new(FedAvg::datashare()),
        StrategyKind::Signsgd => Box::new(SignSgd::new(eta, cfg.sign_downstream)),
        StrategyKind::Stc => Box::new(Stc::new(cfg.k_frac, arch.param_count())),
        StrategyKind::Cmfl => Box::new(Cmfl::new(cfg.cmfl_threshold)),
        StrategyKind::Fedmmd => Box::new(FedMmd::new(cfg.mmd_lambda, cfg.mmd_bandwidth)),
        StrategyKind::Feddropout => {
            Box::new(FedDropout::new(arch.clone(), cfg.dropout_rate, seed)?)
        }
    })
}

/// Ledger entries of one round.
#[derive(Debug, Clone)]
pub struct RoundOutcome {
    pub model: ModelParams,
    pub bits_up: u64,
    pub bits_down: u64,
    pub uploads_skipped: usize,
    pub stalled: bool,
}

/// One broadcast → local update → aggregate cycle over `participants`.
///
/// Client updates run in parallel; results are reduced in client-id order,
/// so the outcome does not depend on scheduling.
pub fn play_round(
    strategy: &mut dyn Strategy,
    global: &ModelParams,
    clients: &mut [ClientState],
    participants: &[usize],
    ctx: &TrainContext,
) -> Result<RoundOutcome> {
    if participants.is_empty() {
        return Err(Error::Aggregation("no participants sampled".into()));
    }
    let broadcast = strategy.broadcast(global, ctx.round)?;
    let shared: &dyn Strategy = strategy;
    let mut uploads: Vec<Upload> = clients
        .par_iter_mut()
        .filter(|c| participants.binary_search(&c.id).is_ok())
        .map(|c| match shared.client_update(&broadcast, c, ctx) {
            Err(Error::EmptyClient(_)) => Ok(Upload {
                client: c.id,
                weight: c.weight(),
                update: None,
            }),
            other => other,
        })
        .collect::<Result<_>>()?;
    if uploads.len() != participants.len() {
        return Err(Error::Aggregation(
            "participant id does not match any client".into(),
        ));
    }
    uploads.sort_by_key(|u| u.client);

    let bits_up = uploads
        .iter()
        .filter_map(|u| u.update.as_ref())
        .map(|u| u.bits)
        .sum();
    let uploads_skipped = uploads.iter().filter(|u| u.update.is_none()).count();
    let bits_down = broadcast.bits * participants.len() as u64;
    let agg = strategy.aggregate(global, &broadcast, uploads)?;
    Ok(RoundOutcome {
        model: agg.model,
        bits_up,
        bits_down,
        uploads_skipped,
        stalled: agg.stalled,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weighted_average_examples() {
        assert_eq!(
            weighted_average(&[&[0.0, 2.0], &[2.0, 0.0]], &[5, 5]).unwrap(),
            vec![1.0, 1.0]
        );
        assert_eq!(
            weighted_average(&[&[0.3, -7.0]], &[9]).unwrap(),
            vec![0.3, -7.0]
        );
        assert_eq!(
            weighted_average(&[&[4.0, 0.0], &[0.0, 4.0]], &[1, 3]).unwrap(),
            vec![1.0, 3.0]
        );
        assert!(weighted_average(&[], &[]).is_err());
        assert!(weighted_average(&[&[1.0], &[1.0, 2.0]], &[1, 1]).is_err());
        assert!(weighted_average(&[&[1.0]], &[0]).is_err());
    }

    #[test]
    fn equal_inputs_are_returned_exactly() {
        let u = [0.1, 1.0 / 3.0, -2.7e-9];
        let out = weighted_average(&[&u, &u, &u], &[3, 7, 11]).unwrap();
        assert_eq!(out, u.to_vec());
    }

    #[test]
    fn weights_normalise() {
        let w = normalized_weights(&[3, 7, 11, 600]).unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        let mut c = StrategyConfig::new(StrategyKind::Stc);
        c.k_frac = 0.0;
        assert!(c.validate().is_err());
        // unused fields are not checked
        c.kind = StrategyKind::Fedavg;
        assert!(c.validate().is_ok());
        let mut d = StrategyConfig::new(StrategyKind::Datashare);
        d.shared_gamma = 1.0;
        assert!(d.validate().is_err());
    }
}
