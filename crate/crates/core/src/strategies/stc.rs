use super::{
    add_delta, average_uploads, delta, train_locally, Aggregated, Broadcast, ClientState, Strategy,
    StrategyKind, TrainContext, Upload,
};
use crate::compression::{decode, dense_bits, stc_encode, Residual, Update};
use crate::error::{Error, Result};
use crate::nn::{CrossEntropy, ModelParams};

/// Sparse ternary compression in both directions.
///
/// Clients upload the ternarised top-k of their model delta (with a
/// per-client residual); the server averages, ternarises the mean delta
/// against its own residual and applies exactly what it broadcasts, so server
/// and clients stay in sync.
///
/// With `k_frac = 1` there is nothing to sparsify and deltas travel dense,
/// making the run identical to federated averaging.
#[derive(Debug, Clone)]
pub struct Stc {
    k_frac: f64,
    server_residual: Residual,
    last_down_bits: Option<u64>,
}

impl Stc {
    pub fn new(k_frac: f64, dim: usize) -> Self {
        Self {
            k_frac,
            server_residual: Residual::zeros(dim),
            last_down_bits: None,
        }
    }

    fn lossless(&self) -> bool {
        self.k_frac >= 1.0
    }
}

impl Strategy for Stc {
    fn kind(&self) -> StrategyKind {
        StrategyKind::Stc
    }

    fn broadcast(&mut self, global: &ModelParams, _round: usize) -> Result<Broadcast> {
        let mut b = Broadcast::dense(global);
        // the first round ships the full model; later rounds ship the last delta
        if let Some(bits) = self.last_down_bits {
            b.bits = bits;
        }
        Ok(b)
    }

    fn client_update(
        &self,
        broadcast: &Broadcast,
        client: &mut ClientState,
        ctx: &TrainContext,
    ) -> Result<Upload> {
        let trained = train_locally(&CrossEntropy, &broadcast.model, client, ctx)?;
        let d = delta(&trained, &broadcast.model);
        let update = if self.lossless() {
            Update::dense(d)
        } else {
            let (u, r) = stc_encode(&d, self.k_frac, &client.residual)?;
            client.residual = r;
            u
        };
        Ok(Upload {
            client: client.id,
            weight: client.weight(),
            update: Some(update),
        })
    }

    fn aggregate(
        &mut self,
        global: &ModelParams,
        _broadcast: &Broadcast,
        uploads: Vec<Upload>,
    ) -> Result<Aggregated> {
        let avg = average_uploads(&uploads, global.len())?
            .ok_or_else(|| Error::Aggregation("every sampled client was skipped".into()))?;
        let step = if self.lossless() {
            self.last_down_bits = Some(dense_bits(avg.len()));
            avg
        } else {
            let (u, r) = stc_encode(&avg, self.k_frac, &self.server_residual)?;
            self.server_residual = r;
            self.last_down_bits = Some(u.bits);
            decode(&u, global.len())?
        };
        Ok(Aggregated {
            model: add_delta(global, &step),
            stalled: false,
        })
    }
}
