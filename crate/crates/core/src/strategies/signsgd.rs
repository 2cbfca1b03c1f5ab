use rand::seq::index;

use super::{Aggregated, Broadcast, ClientState, Strategy, StrategyKind, TrainContext, Upload};
use crate::compression::{majority_aggregate, sign_compress, Payload};
use crate::error::{Error, Result};
use crate::nn::{gradient, Batch, ModelParams};
use crate::rng::rng_from;

/// signSGD with majority vote: each client sends the sign of one mini-batch
/// gradient, the server steps by `-eta` times the coordinate-wise vote.
#[derive(Debug, Clone)]
pub struct SignSgd {
    eta: f64,
    downstream: bool,
    voted_last_round: bool,
}

impl SignSgd {
    pub fn new(eta: f64, downstream: bool) -> Self {
        Self {
            eta,
            downstream,
            voted_last_round: false,
        }
    }
}

impl Strategy for SignSgd {
    fn kind(&self) -> StrategyKind {
        StrategyKind::Signsgd
    }

    fn broadcast(&mut self, global: &ModelParams, _round: usize) -> Result<Broadcast> {
        let mut b = Broadcast::dense(global);
        if self.downstream && self.voted_last_round {
            // the server step is itself a sign vector
            b.bits = global.len() as u64 + crate::compression::HEADER_BITS;
        }
        Ok(b)
    }

    fn client_update(
        &self,
        broadcast: &Broadcast,
        client: &mut ClientState,
        ctx: &TrainContext,
    ) -> Result<Upload> {
        if client.sample_indices.is_empty() {
            return Err(Error::EmptyClient(client.id));
        }
        let n = client.sample_indices.len();
        let b = ctx.settings.batch_size.min(n);
        let mut rng = rng_from(ctx.client_seed(client.id));
        let picks: Vec<usize> = index::sample(&mut rng, n, b)
            .into_iter()
            .map(|i| client.sample_indices[i])
            .collect();
        let g = gradient(&broadcast.model, &Batch::from_indices(ctx.data, &picks)?)?;
        Ok(Upload {
            client: client.id,
            weight: client.weight(),
            update: Some(sign_compress(&g.values)?),
        })
    }

    fn aggregate(
        &mut self,
        global: &ModelParams,
        _broadcast: &Broadcast,
        uploads: Vec<Upload>,
    ) -> Result<Aggregated> {
        let signs: Vec<&[i8]> = uploads
            .iter()
            .filter_map(|u| match u.update.as_ref().map(|x| &x.payload) {
                Some(Payload::Sign(s)) => Some(s.as_slice()),
                _ => None,
            })
            .collect();
        if signs.is_empty() {
            return Err(Error::Aggregation(
                "every sampled client was skipped".into(),
            ));
        }
        let votes = majority_aggregate(&signs)?;
        let mut model = global.clone();
        for (v, &s) in model.values.iter_mut().zip(&votes) {
            *v -= self.eta * f64::from(s);
        }
        self.voted_last_round = true;
        Ok(Aggregated {
            model,
            stalled: false,
        })
    }
}
