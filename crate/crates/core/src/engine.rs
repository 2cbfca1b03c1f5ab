//! The federated round loop and its communication ledger.
//!
//! One iteration is one communication round: sample participants, broadcast,
//! train locally, aggregate, optionally evaluate on the held-out set.

use std::time::{Duration, Instant};

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::data::{
    partition_iid, partition_noniid_sorted, split_shared_pool, Dataset, PartitionMode,
    PartitionPlan, SharedPoolConfig,
};
use crate::error::{Error, Result};
use crate::nn::{evaluate, init_model, ModelArch, ModelParams, TrainSettings};
use crate::rng::{derive, stream, Stream};
use crate::strategies::{
    augment_with_pool, build_strategy, datashare_warmstart, play_round, ClientState,
    StrategyConfig, StrategyKind, TrainContext,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum PartitionSpec {
    Iid,
    Sorted { shards_per_client: usize },
}

/// Every hyperparameter of a run. [`Default`] is the 100-client, 10%
/// participation, batch-20 baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FederatedConfig {
    pub n_clients: usize,
    pub participation: f64,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub rounds: usize,
    pub target_accuracy: Option<f64>,
    pub seed: u64,
    pub eval_every: usize,
    /// Hidden layer widths; empty means logistic regression.
    pub hidden_layers: Vec<usize>,
    pub partition: PartitionSpec,
    pub strategy: StrategyConfig,
}

impl Default for FederatedConfig {
    fn default() -> Self {
        Self {
            n_clients: 100,
            participation: 0.10,
            local_epochs: 1,
            batch_size: 20,
            learning_rate: 0.05,
            rounds: 100,
            target_accuracy: None,
            seed: 0,
            eval_every: 1,
            hidden_layers: vec![200],
            partition: PartitionSpec::Iid,
            strategy: StrategyConfig::default(),
        }
    }
}

impl FederatedConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.n_clients == 0 {
            return fail("clients must be at least 1");
        }
        if !(self.participation > 0.0 && self.participation <= 1.0) {
            return Err(Error::Config(format!(
                "participation must lie in (0, 1], got {}",
                self.participation
            )));
        }
        if self.local_epochs == 0 || self.batch_size == 0 {
            return fail("local_epochs and batch_size must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate must be positive");
        }
        if self.eval_every == 0 {
            return fail("eval_every must be at least 1");
        }
        if let PartitionSpec::Sorted {
            shards_per_client: 0,
        } = self.partition
        {
            return fail("shards_per_client must be at least 1");
        }
        if self.hidden_layers.contains(&0) {
            return fail("hidden layer widths must be positive");
        }
        self.strategy.validate()
    }

    pub fn arch_for(&self, data: &Dataset) -> Result<ModelArch> {
        ModelArch::mlp(data.dim(), &self.hidden_layers, data.class_count())
    }

    pub fn participants_per_round(&self) -> usize {
        participants_count(self.n_clients, self.participation)
    }

    fn settings(&self) -> TrainSettings {
        TrainSettings {
            epochs: self.local_epochs,
            batch_size: self.batch_size,
            eta: self.learning_rate,
        }
    }
}

/// Metrics of one round. Round 0 is the evaluation before any training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub participants: Vec<usize>,
    pub test_accuracy: Option<f64>,
    pub test_loss: Option<f64>,
    pub bits_up: u64,
    pub bits_down: u64,
    pub uploads_skipped: usize,
    pub stalled: bool,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub config: FederatedConfig,
    pub records: Vec<RoundRecord>,
    pub converged_at: Option<usize>,
    pub partition: PartitionPlan,
    pub final_model: ModelParams,
    pub wall_time: Duration,
}

impl RunResult {
    pub fn strategy(&self) -> StrategyKind {
        self.config.strategy.kind
    }

    pub fn total_bits_up(&self) -> u64 {
        self.records.iter().map(|r| r.bits_up).sum()
    }

    pub fn total_bits_down(&self) -> u64 {
        self.records.iter().map(|r| r.bits_down).sum()
    }

    /// Accuracy of the last evaluated round.
    pub fn final_accuracy(&self) -> Option<f64> {
        self.records.iter().rev().find_map(|r| r.test_accuracy)
    }

    pub fn accuracy_at(&self, round: usize) -> Option<f64> {
        self.records
            .iter()
            .find(|r| r.round == round)
            .and_then(|r| r.test_accuracy)
    }

    pub fn rounds_to(&self, target: f64) -> Option<usize> {
        detect_convergence(&self.records, target)
    }
}

pub fn participants_count(n_clients: usize, participation: f64) -> usize {
    ((participation * n_clients as f64 + 0.5).floor() as usize).clamp(1, n_clients.max(1))
}

/// `max(1, round(participation · n))` distinct client ids, ascending.
pub fn sample_clients(n_clients: usize, participation: f64, seed: u64, round: usize) -> Vec<usize> {
    let m = participants_count(n_clients, participation);
    let mut rng = stream(seed, Stream::Sampling, round as u64, 0);
    let mut ids = index::sample(&mut rng, n_clients, m).into_vec();
    ids.sort_unstable();
    ids
}

/// First evaluated round whose accuracy reaches `target`.
pub fn detect_convergence(records: &[RoundRecord], target: f64) -> Option<usize> {
    records
        .iter()
        .find(|r| r.test_accuracy.is_some_and(|a| a >= target))
        .map(|r| r.round)
}

fn plan_partition(cfg: &FederatedConfig, data: &Dataset) -> Result<PartitionPlan> {
    let seed = derive(cfg.seed, Stream::Partition, 0, 0);
    match cfg.partition {
        PartitionSpec::Iid => partition_iid(data, cfg.n_clients, seed),
        PartitionSpec::Sorted { shards_per_client } => {
            partition_noniid_sorted(data, cfg.n_clients, shards_per_client, seed)
        }
    }
}

/// Training data as the clients see it, after the optional shared pool is
/// carved out.
struct Federation {
    data: Dataset,
    plan: PartitionPlan,
    clients: Vec<ClientState>,
    /// Indices of the shared pool within `data`.
    pool: Vec<usize>,
}

fn build_federation(cfg: &FederatedConfig, train: &Dataset, dim: usize) -> Result<Federation> {
    if cfg.strategy.kind != StrategyKind::Datashare {
        let plan = plan_partition(cfg, train)?;
        let clients = plan
            .clients
            .iter()
            .map(|c| ClientState::new(c.id, c.indices.clone(), dim))
            .collect();
        return Ok(Federation {
            data: train.clone(),
            plan,
            clients,
            pool: Vec::new(),
        });
    }

    let pool_cfg = SharedPoolConfig::new(cfg.strategy.shared_gamma, cfg.strategy.alpha)?;
    let (pool_idx, rest_idx) =
        split_shared_pool(train, &pool_cfg, derive(cfg.seed, Stream::SharedPool, 0, 0))?;
    let remainder = train.subset(&rest_idx)?;
    let pool = train.subset(&pool_idx)?;
    let mut plan = plan_partition(cfg, &remainder)?;
    plan.mode = PartitionMode::SharedPoolRemainder;
    let offset = remainder.len();
    let data = remainder.concat(&pool)?;
    let pool_in_data: Vec<usize> = (offset..data.len()).collect();
    let mut clients: Vec<ClientState> = plan
        .clients
        .iter()
        .map(|c| ClientState::new(c.id, c.indices.clone(), dim))
        .collect();
    augment_with_pool(&mut clients, &pool_in_data, pool_cfg.alpha, cfg.seed);
    Ok(Federation {
        data,
        plan,
        clients,
        pool: pool_in_data,
    })
}

/// The client partition a run would use, with the dataset its indices refer
/// to (for the shared-data strategy, the non-pool remainder followed by the
/// pool).
pub fn client_partition(
    cfg: &FederatedConfig,
    train: &Dataset,
) -> Result<(PartitionPlan, Dataset)> {
    cfg.validate()?;
    let fed = build_federation(cfg, train, 0)?;
    Ok((fed.plan, fed.data))
}

fn evaluated(
    round: usize,
    participants: Vec<usize>,
    eval: Option<crate::nn::Evaluation>,
) -> RoundRecord {
    RoundRecord {
        round,
        participants,
        test_accuracy: eval.map(|e| e.accuracy),
        test_loss: eval.map(|e| e.loss),
        bits_up: 0,
        bits_down: 0,
        uploads_skipped: 0,
        stalled: false,
    }
}

/// Runs one full experiment. Deterministic in `(cfg, train, test)`.
pub fn run_federated(cfg: &FederatedConfig, train: &Dataset, test: &Dataset) -> Result<RunResult> {
    let started = Instant::now();
    cfg.validate()?;
    if train.dim() != test.dim() {
        return Err(Error::Consistency(format!(
            "train dimension {} differs from test dimension {}",
            train.dim(),
            test.dim()
        )));
    }
    let arch = cfg.arch_for(train)?;
    let mut fed = build_federation(cfg, train, arch.param_count())?;
    let mut strategy = build_strategy(&cfg.strategy, &arch, cfg.learning_rate, cfg.seed)?;

    let mut global = init_model(&arch, derive(cfg.seed, Stream::Init, 0, 0));
    if cfg.strategy.kind == StrategyKind::Datashare {
        global = datashare_warmstart(
            &global,
            &fed.data,
            &fed.pool,
            cfg.strategy.warmstart_epochs,
            cfg.settings(),
            derive(cfg.seed, Stream::Warmstart, 0, 0),
        )?;
    }

    let mut records = vec![evaluated(0, Vec::new(), Some(evaluate(&global, test)?))];
    let mut converged_at = cfg
        .target_accuracy
        .and_then(|t| detect_convergence(&records, t));

    for round in 1..=cfg.rounds {
        if converged_at.is_some() {
            break;
        }
        let participants = sample_clients(cfg.n_clients, cfg.participation, cfg.seed, round);
        let ctx = TrainContext {
            data: &fed.data,
            settings: cfg.settings(),
            seed: cfg.seed,
            round,
        };
        let outcome = play_round(
            strategy.as_mut(),
            &global,
            &mut fed.clients,
            &participants,
            &ctx,
        )
        .map_err(|e| e.at_round(round))?;
        global = outcome.model;
        if !global.is_finite() {
            return Err(Error::Numeric("global model diverged".into()).at_round(round));
        }
        let eval = if round % cfg.eval_every == 0 || round == cfg.rounds {
            Some(evaluate(&global, test).map_err(|e| e.at_round(round))?)
        } else {
            None
        };
        let mut rec = evaluated(round, participants, eval);
        rec.bits_up = outcome.bits_up;
        rec.bits_down = outcome.bits_down;
        rec.uploads_skipped = outcome.uploads_skipped;
        rec.stalled = outcome.stalled;
        records.push(rec);
        if let Some(t) = cfg.target_accuracy {
            converged_at = detect_convergence(&records, t);
        }
    }

    Ok(RunResult {
        config: cfg.clone(),
        records,
        converged_at,
        partition: fed.plan,
        final_model: global,
        wall_time: started.elapsed(),
    })
}
