//! Shared-data warm start for non-IID federations: the server first trains
//! on a small globally shared pool, and every client also keeps a copy of
//! part of that pool next to its private data.

use rand::seq::index;

use super::ClientState;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{local_train, ModelParams, TrainSettings};
use crate::rng::{stream, Stream};

/// Trains `global` on `pool_indices` of `data` for `epochs` passes.
pub fn datashare_warmstart(
    global: &ModelParams,
    data: &Dataset,
    pool_indices: &[usize],
    epochs: usize,
    settings: TrainSettings,
    seed: u64,
) -> Result<ModelParams> {
    if pool_indices.is_empty() {
        return Err(Error::Config("shared pool is empty".into()));
    }
    if epochs == 0 {
        return Err(Error::Config("warm-start needs at least one epoch".into()));
    }
    local_train(
        global,
        data,
        pool_indices,
        TrainSettings { epochs, ..settings },
        seed,
    )
}

/// Copies `round(alpha · |pool|)` pool samples (chosen per client) into each
/// client's local index list.
pub fn augment_with_pool(
    clients: &mut [ClientState],
    pool_indices: &[usize],
    alpha: f64,
    seed: u64,
) {
    let take = ((alpha * pool_indices.len() as f64) + 0.5).floor() as usize;
    let take = take.min(pool_indices.len());
    if take == 0 {
        return;
    }
    for c in clients {
        if take == pool_indices.len() {
            c.sample_indices.extend_from_slice(pool_indices);
        } else {
            let mut rng = stream(seed, Stream::PoolCopy, c.id as u64, 0);
            let mut picks: Vec<usize> = index::sample(&mut rng, pool_indices.len(), take)
                .into_iter()
                .map(|i| pool_indices[i])
                .collect();
            picks.sort_unstable();
            c.sample_indices.extend(picks);
        }
    }
}
