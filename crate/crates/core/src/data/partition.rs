//! Client partitioning: IID shuffle, label-sorted shards, and the shared
//! data pool used by the warm-start strategy.

use std::collections::BTreeSet;

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng::{rng_from, stream, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PartitionMode {
    Iid,
    SortedNoniid,
    SharedPoolRemainder,
}

/// Per-client sample index lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionPlan {
    pub mode: PartitionMode,
    pub seed: u64,
    pub clients: Vec<ClientAssignment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientAssignment {
    pub id: usize,
    pub indices: Vec<usize>,
}

impl PartitionPlan {
    fn from_lists(mode: PartitionMode, seed: u64, lists: Vec<Vec<usize>>) -> Self {
        let clients = lists
            .into_iter()
            .enumerate()
            .map(|(id, indices)| ClientAssignment { id, indices })
            .collect();
        Self {
            mode,
            seed,
            clients,
        }
    }

    pub fn n_clients(&self) -> usize {
        self.clients.len()
    }

    pub fn assignment(&self, client: usize) -> &[usize] {
        &self.clients[client].indices
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.clients.iter().map(|c| c.indices.len()).collect()
    }

    /// Checks ids are `0..n`, lists are nonempty, pairwise disjoint, and
    /// inside `0..domain`.
    pub fn validate(&self, domain: usize) -> Result<()> {
        let mut seen = vec![false; domain];
        for (pos, c) in self.clients.iter().enumerate() {
            if c.id != pos {
                return Err(Error::Partition(format!(
                    "client ids must be 0..n in order, found {} at {pos}",
                    c.id
                )));
            }
            if c.indices.is_empty() {
                return Err(Error::Partition(format!("client {} has no samples", c.id)));
            }
            for &i in &c.indices {
                let slot = seen.get_mut(i).ok_or_else(|| {
                    Error::Partition(format!("index {i} outside dataset of {domain}"))
                })?;
                if *slot {
                    return Err(Error::Partition(format!("index {i} assigned twice")));
                }
                *slot = true;
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("partition plan serialises")
    }

    pub fn from_json(text: &str, domain: usize) -> Result<Self> {
        let plan: Self = serde_json::from_str(text)
            .map_err(|e| Error::Format(format!("partition plan: {e}")))?;
        plan.validate(domain)?;
        Ok(plan)
    }

    /// Per-client label histogram.
    pub fn label_histograms(&self, dataset: &Dataset) -> Vec<Vec<usize>> {
        self.clients
            .iter()
            .map(|c| dataset.histogram_of(c.indices.iter().copied()))
            .collect()
    }
}

/// Sizes of `n` items split into `parts` contiguous chunks; the first
/// `n % parts` chunks get one extra item.
fn even_sizes(n: usize, parts: usize) -> impl Iterator<Item = usize> {
    let base = n / parts;
    let extra = n % parts;
    (0..parts).map(move |i| base + usize::from(i < extra))
}

fn cut(order: &[usize], sizes: impl Iterator<Item = usize>) -> Vec<Vec<usize>> {
    let mut start = 0;
    sizes
        .map(|s| {
            let chunk = order[start..start + s].to_vec();
            start += s;
            chunk
        })
        .collect()
}

/// Shuffle, then split into equal contiguous pieces.
pub fn partition_iid(dataset: &Dataset, n_clients: usize, seed: u64) -> Result<PartitionPlan> {
    let n = dataset.len();
    if n_clients == 0 || n < n_clients {
        return Err(Error::Partition(format!(
            "cannot split {n} samples across {n_clients} clients"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from(seed));
    Ok(PartitionPlan::from_lists(
        PartitionMode::Iid,
        seed,
        cut(&order, even_sizes(n, n_clients)),
    ))
}

/// Number of shards each label group receives: one each, then the rest by
/// the highest-averages rule (largest `size / shards` first, ties to the
/// lower label). Never gives a group more shards than samples.
fn shards_per_group(group_sizes: &[usize], total: usize) -> Vec<usize> {
    let mut alloc: Vec<usize> = group_sizes.iter().map(|&s| usize::from(s > 0)).collect();
    let mut given: usize = alloc.iter().sum();
    while given < total {
        let best = group_sizes
            .iter()
            .zip(&alloc)
            .enumerate()
            .filter(|(_, (&s, &a))| a < s)
            .max_by(|(i, (&s1, &a1)), (j, (&s2, &a2))| {
                // s1/a1 vs s2/a2 without division
                (s1 * a2).cmp(&(s2 * a1)).then(j.cmp(i))
            })
            .map(|(i, _)| i)
            .expect("total never exceeds sample count");
        alloc[best] += 1;
        given += 1;
    }
    alloc
}

/// Sort by label, cut the sorted order into `n_clients * shards_per_client`
/// shards and deal each client `shards_per_client` random shards.
///
/// When there are at least as many shards as non-empty labels, cut points
/// fall on label boundaries so each shard holds a single label; otherwise the
/// sorted order is cut into equal contiguous pieces.
pub fn partition_noniid_sorted(
    dataset: &Dataset,
    n_clients: usize,
    shards_per_client: usize,
    seed: u64,
) -> Result<PartitionPlan> {
    let n = dataset.len();
    let shards = n_clients
        .checked_mul(shards_per_client)
        .filter(|&s| s > 0)
        .ok_or_else(|| {
            Error::Partition("need at least one client and one shard per client".into())
        })?;
    if shards > n {
        return Err(Error::Partition(format!(
            "{n} samples cannot form {shards} shards ({n_clients} clients x {shards_per_client})"
        )));
    }
    let groups: Vec<Vec<usize>> = dataset.indices_by_class();
    let group_sizes: Vec<usize> = groups.iter().map(Vec::len).collect();
    let nonempty = group_sizes.iter().filter(|&&s| s > 0).count();

    let shard_lists: Vec<Vec<usize>> = if shards >= nonempty {
        let alloc = shards_per_group(&group_sizes, shards);
        groups
            .iter()
            .zip(alloc)
            .filter(|(_, a)| *a > 0)
            .flat_map(|(g, a)| cut(g, even_sizes(g.len(), a)))
            .collect()
    } else {
        let sorted: Vec<usize> = groups.concat();
        cut(&sorted, even_sizes(n, shards))
    };
    debug_assert_eq!(shard_lists.len(), shards);

    let mut shard_order: Vec<usize> = (0..shards).collect();
    shard_order.shuffle(&mut rng_from(seed));
    let lists = shard_order
        .chunks(shards_per_client)
        .map(|ids| {
            let mut v: Vec<usize> = ids
                .iter()
                .flat_map(|&s| shard_lists[s].iter().copied())
                .collect();
            v.sort_unstable();
            v
        })
        .collect();
    Ok(PartitionPlan::from_lists(
        PartitionMode::SortedNoniid,
        seed,
        lists,
    ))
}

/// Globally shared data: `gamma` of the training set goes to the pool and
/// every client receives a copy of an `alpha` fraction of that pool.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SharedPoolConfig {
    pub gamma: f64,
    pub alpha: f64,
}

impl SharedPoolConfig {
    pub fn new(gamma: f64, alpha: f64) -> Result<Self> {
        let cfg = Self { gamma, alpha };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config(format!(
                "gamma must lie in (0, 1), got {}",
                self.gamma
            )));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!(
                "alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Stratified split into `(pool, remainder)` index lists, both ascending.
///
/// The pool holds `round(gamma * n)` samples; per-label quotas follow the
/// largest-remainder rule so every label is within one sample of its
/// proportional share.
pub fn split_shared_pool(
    dataset: &Dataset,
    cfg: &SharedPoolConfig,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    cfg.validate()?;
    let n = dataset.len();
    let target = cfg.gamma * n as f64;
    if target < dataset.class_count() as f64 {
        return Err(Error::Config(format!(
            "shared pool of {target:.1} samples is smaller than the {} classes",
            dataset.class_count()
        )));
    }
    let total = (target + 0.5).floor() as usize;
    let groups = dataset.indices_by_class();
    let shares: Vec<f64> = groups.iter().map(|g| cfg.gamma * g.len() as f64).collect();
    let mut quota: Vec<usize> = shares.iter().map(|s| s.floor() as usize).collect();
    let mut order: Vec<usize> = (0..groups.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = shares[a] - shares[a].floor();
        let rb = shares[b] - shares[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut missing = total.saturating_sub(quota.iter().sum());
    for &c in order.iter().cycle().take(groups.len() * 2) {
        if missing == 0 {
            break;
        }
        if quota[c] < groups[c].len() {
            quota[c] += 1;
            missing -= 1;
        }
    }

    let mut rng = stream(seed, Stream::SharedPool, 0, 0);
    let mut in_pool = BTreeSet::new();
    for (g, &q) in groups.iter().zip(&quota) {
        for pick in index::sample(&mut rng, g.len(), q) {
            in_pool.insert(g[pick]);
        }
    }
    let pool: Vec<usize> = in_pool.iter().copied().collect();
    let remainder: Vec<usize> = (0..n).filter(|i| !in_pool.contains(i)).collect();
    Ok((pool, remainder))
}

/// [`split_shared_pool`] materialised as `(pool, remainder)` datasets.
pub fn extract_shared_pool(
    dataset: &Dataset,
    cfg: &SharedPoolConfig,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    let (pool, rest) = split_shared_pool(dataset, cfg, seed)?;
    if rest.is_empty() {
        return Err(Error::Config(
            "shared pool leaves no data for clients".into(),
        ));
    }
    Ok((dataset.subset(&pool)?, dataset.subset(&rest)?))
}
