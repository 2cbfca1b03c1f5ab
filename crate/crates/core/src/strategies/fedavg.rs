use super::{
    average_uploaded_models, train_locally, Aggregated, Broadcast, ClientState, Strategy,
    StrategyKind, TrainContext, Upload,
};
use crate::compression::Update;
use crate::error::Result;
use crate::nn::{CrossEntropy, ModelParams};

/// Federated averaging: dense model down, local SGD epochs, dense model up,
/// sample-count weighted mean.
///
/// Also serves the shared-data strategy, whose difference lies entirely in
/// how the run is set up (see [`super::datashare_warmstart`]).
#[derive(Debug, Clone)]
pub struct FedAvg {
    kind: StrategyKind,
}

impl FedAvg {
    pub fn new() -> Self {
        Self {
            kind: StrategyKind::Fedavg,
        }
    }

    pub fn datashare() -> Self {
        Self {
            kind: StrategyKind::Datashare,
        }
    }
}

impl Default for FedAvg {
    fn default() -> Self {
        Self::new()
    }
}

impl Strategy for FedAvg {
    fn kind(&self) -> StrategyKind {
        self.kind
    }

    fn broadcast(&mut self, global: &ModelParams, _round: usize) -> Result<Broadcast> {
        Ok(Broadcast::dense(global))
    }

    fn client_update(
        &self,
        broadcast: &Broadcast,
        client: &mut ClientState,
        ctx: &TrainContext,
    ) -> Result<Upload> {
        let trained = train_locally(&CrossEntropy, &broadcast.model, client, ctx)?;
        Ok(Upload {
            client: client.id,
            weight: client.weight(),
            update: Some(Update::dense(trained.values)),
        })
    }

    fn aggregate(
        &mut self,
        global: &ModelParams,
        _broadcast: &Broadcast,
        uploads: Vec<Upload>,
    ) -> Result<Aggregated> {
        Ok(Aggregated {
            model: average_uploaded_models(&uploads, global)?,
            stalled: false,
        })
    }
}
