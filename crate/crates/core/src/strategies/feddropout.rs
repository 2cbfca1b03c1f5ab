use super::{
    average_models, train_locally, Aggregated, Broadcast, ClientState, Strategy, StrategyKind,
    TrainContext, Upload,
};
use crate::compression::{
    expand_submodel, extract_submodel, make_masks, submodel_params, Payload, Update,
};
use crate::error::{Error, Result};
use crate::nn::{CrossEntropy, ModelArch, ModelParams};
use crate::rng::{derive, Stream};

/// Federated dropout: every round the server thins the hidden layers with
/// one fresh mask shared by all participants, ships the sub-model, and
/// averages the returned sub-models back into the surviving coordinates.
#[derive(Debug, Clone)]
pub struct FedDropout {
    arch: ModelArch,
    rate: f64,
    seed: u64,
}

impl FedDropout {
    pub fn new(arch: ModelArch, rate: f64, seed: u64) -> Result<Self> {
        if arch.hidden_layers().is_empty() {
            return Err(Error::Config(
                "feddropout needs a model with at least one hidden layer".into(),
            ));
        }
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!(
                "dropout rate must lie in [0, 1), got {rate}"
            )));
        }
        Ok(Self { arch, rate, seed })
    }
}

impl Strategy for FedDropout {
    fn kind(&self) -> StrategyKind {
        StrategyKind::Feddropout
    }

    fn broadcast(&mut self, global: &ModelParams, round: usize) -> Result<Broadcast> {
        let masks = make_masks(
            &self.arch,
            self.rate,
            derive(self.seed, Stream::Masks, round as u64, 0),
        )?;
        let sub = extract_submodel(global, &masks)?;
        Ok(Broadcast {
            model: submodel_params(&sub, &masks, &self.arch)?,
            bits: sub.bits,
            masks: Some(masks),
            reference: None,
        })
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
            update: Some(Update::submodel(trained.values)),
        })
    }

    fn aggregate(
        &mut self,
        global: &ModelParams,
        broadcast: &Broadcast,
        uploads: Vec<Upload>,
    ) -> Result<Aggregated> {
        let masks = broadcast
            .masks
            .as_ref()
            .ok_or_else(|| Error::Shape("dropout round without masks".into()))?;
        let mut vectors = Vec::new();
        let mut weights = Vec::new();
        for up in &uploads {
            match up.update.as_ref().map(|u| &u.payload) {
                Some(Payload::Submodel(v)) => {
                    vectors.push(v.as_slice());
                    weights.push(up.weight);
                }
                Some(_) => return Err(Error::Shape("expected sub-model uploads".into())),
                None => {}
            }
        }
        if vectors.is_empty() {
            return Err(Error::Aggregation(
                "every sampled client was skipped".into(),
            ));
        }
        let avg = average_models(&vectors, &weights, &broadcast.model.values)?;
        Ok(Aggregated {
            model: expand_submodel(&Update::submodel(avg), masks, global)?,
            stalled: false,
        })
    }
}
