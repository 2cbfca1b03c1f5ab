use super::{
    add_delta, average_uploads, delta, train_locally, Aggregated, Broadcast, ClientState, Strategy,
    StrategyKind, TrainContext, Upload,
};
use crate::compression::{sign_of, Update};
use crate::error::{Error, Result};
use crate::nn::{CrossEntropy, ModelParams};

/// Fraction of coordinates whose signs agree (`sign(0) = +1`).
pub fn cmfl_relevance(local_delta: &[f64], global_delta: &[f64]) -> Result<f64> {
    if local_delta.len() != global_delta.len() {
        return Err(Error::Shape(format!(
            "local update of length {} vs global update of length {}",
            local_delta.len(),
            global_delta.len()
        )));
    }
    if local_delta.is_empty() {
        return Ok(1.0);
    }
    let agree = local_delta
        .iter()
        .zip(global_delta)
        .filter(|(a, b)| sign_of(**a) == sign_of(**b))
        .count();
    Ok(agree as f64 / local_delta.len() as f64)
}

/// Communication-mitigated FL: a client uploads its delta only when it is
/// relevant enough to the last aggregated update.
///
/// The reference is the most recent non-empty aggregate; round 1 (no
/// reference yet) always uploads. A round in which every client stays
/// silent leaves the model and the reference untouched.
#[derive(Debug, Clone)]
pub struct Cmfl {
    threshold: f64,
    reference: Option<Vec<f64>>,
}

impl Cmfl {
    pub fn new(threshold: f64) -> Self {
        Self {
            threshold,
            reference: None,
        }
    }
}

impl Strategy for Cmfl {
    fn kind(&self) -> StrategyKind {
        StrategyKind::Cmfl
    }

    fn broadcast(&mut self, global: &ModelParams, _round: usize) -> Result<Broadcast> {
        let mut b = Broadcast::dense(global);
        b.reference = self.reference.clone();
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
        let relevant = match &broadcast.reference {
            Some(r) => cmfl_relevance(&d, r)? >= self.threshold,
            None => true,
        };
        Ok(Upload {
            client: client.id,
            weight: client.weight(),
            update: relevant.then(|| Update::dense(d)),
        })
    }

    fn aggregate(
        &mut self,
        global: &ModelParams,
        _broadcast: &Broadcast,
        uploads: Vec<Upload>,
    ) -> Result<Aggregated> {
        match average_uploads(&uploads, global.len())? {
            Some(avg) => {
                let model = add_delta(global, &avg);
                self.reference = Some(avg);
                Ok(Aggregated {
                    model,
                    stalled: false,
                })
            }
            None => Ok(Aggregated {
                model: global.clone(),
                stalled: true,
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relevance_examples() {
        let g = [0.5, -1.0, 2.0, -0.1];
        assert_eq!(cmfl_relevance(&g, &g).unwrap(), 1.0);
        let neg: Vec<f64> = g.iter().map(|x| -x).collect();
        assert_eq!(cmfl_relevance(&neg, &g).unwrap(), 0.0);
        assert_eq!(cmfl_relevance(&[1.0, -1.0, -1.0, 1.0], &g).unwrap(), 0.5);
        // zero counts as positive
        assert_eq!(cmfl_relevance(&[0.0], &[3.0]).unwrap(), 1.0);
        assert!(cmfl_relevance(&[1.0], &[1.0, 2.0]).is_err());
    }
}
