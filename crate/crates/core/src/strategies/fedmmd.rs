//! Federated training with a maximum mean discrepancy penalty.
//!
//! Each client adds `lambda · MMD²(local features, global features)` to its
//! cross-entropy, where features are the last hidden activations (logits
//! for logistic regression). The global features come from the broadcast
//! model evaluated on the same mini-batch, so no raw data leaves a client.

use serde::{Deserialize, Serialize};

use super::{
    average_uploaded_models, train_locally, Aggregated, Broadcast, ClientState, Strategy,
    StrategyKind, TrainContext, Upload,
};
use crate::compression::Update;
use crate::error::{Error, Result};
use crate::nn::{
    features, loss_and_gradient_with_penalty, Batch, GradVector, Matrix, ModelParams, Objective,
};

/// Gaussian kernel width σ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bandwidth {
    /// Median pairwise distance over both sets (1 when that median is 0).
    Median,
    Fixed(f64),
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_sets(x: &Matrix, y: &Matrix) -> Result<()> {
    if x.rows == 0 || y.rows == 0 {
        return Err(Error::Config("MMD needs two non-empty sample sets".into()));
    }
    if x.cols != y.cols {
        return Err(Error::Shape(format!(
            "feature dimensions {} and {} differ",
            x.cols, y.cols
        )));
    }
    Ok(())
}

pub fn median_bandwidth(x: &Matrix, y: &Matrix) -> f64 {
    let pooled: Vec<&[f64]> = (0..x.rows)
        .map(|i| x.row(i))
        .chain((0..y.rows).map(|j| y.row(j)))
        .collect();
    let mut d = Vec::with_capacity(pooled.len() * pooled.len().saturating_sub(1) / 2);
    for i in 0..pooled.len() {
        for j in i + 1..pooled.len() {
            d.push(sq_dist(pooled[i], pooled[j]).sqrt());
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(f64::total_cmp);
    let m = d.len() / 2;
    let med = if d.len() % 2 == 0 {
        0.5 * (d[m - 1] + d[m])
    } else {
        d[m]
    };
    if med > 0.0 {
        med
    } else {
        1.0
    }
}

fn sigma(bandwidth: Bandwidth, x: &Matrix, y: &Matrix) -> f64 {
    match bandwidth {
        Bandwidth::Median => median_bandwidth(x, y),
        Bandwidth::Fixed(s) => s,
    }
}

fn kernel(a: &[f64], b: &[f64], inv_two_s2: f64) -> f64 {
    (-sq_dist(a, b) * inv_two_s2).exp()
}

/// Biased (V-statistic) squared MMD with kernel `exp(-‖x−y‖² / 2σ²)`.
pub fn mmd2(x: &Matrix, y: &Matrix, sigma: f64) -> Result<f64> {
    mmd2_with_grad(x, y, sigma).map(|(v, _)| v)
}

/// Squared MMD and its gradient with respect to every row of `x`.
pub fn mmd2_with_grad(x: &Matrix, y: &Matrix, sigma: f64) -> Result<(f64, Matrix)> {
    check_sets(x, y)?;
    let inv = 1.0 / (2.0 * sigma * sigma);
    let inv_s2 = 1.0 / (sigma * sigma);
    let (n, m) = (x.rows as f64, y.rows as f64);
    let mut grad = Matrix::zeros(x.rows, x.cols);
    let mut xx = 0.0;
    let mut xy = 0.0;
    let mut yy = 0.0;
    for i in 0..x.rows {
        let xi = x.row(i);
        for a in 0..x.rows {
            let k = kernel(xi, x.row(a), inv);
            xx += k;
            // d/dx_i of k(x_i, x_a), counted twice by symmetry
            let c = -2.0 * k * inv_s2 / (n * n);
            for (g, (p, q)) in grad.row_mut(i).iter_mut().zip(xi.iter().zip(x.row(a))) {
                *g += c * (p - q);
            }
        }
        for j in 0..y.rows {
            let k = kernel(xi, y.row(j), inv);
            xy += k;
            let c = 2.0 * k * inv_s2 / (n * m);
            for (g, (p, q)) in grad.row_mut(i).iter_mut().zip(xi.iter().zip(y.row(j))) {
                *g += c * (p - q);
            }
        }
    }
    for j in 0..y.rows {
        for b in 0..y.rows {
            yy += kernel(y.row(j), y.row(b), inv);
        }
    }
    let value = xx / (n * n) + yy / (m * m) - 2.0 * xy / (n * m);
    Ok((value.max(0.0), grad))
}

/// `lambda · MMD²(local, global)`, the penalty added to the task loss.
pub fn fedmmd_local_objective(
    local: &Matrix,
    global: &Matrix,
    lambda: f64,
    bandwidth: Bandwidth,
) -> Result<f64> {
    check_sets(local, global)?;
    Ok(lambda * mmd2(local, global, sigma(bandwidth, local, global))?)
}

/// Cross-entropy plus the MMD penalty against a frozen reference model.
/// The median bandwidth is treated as a constant when differentiating.
pub struct MmdObjective<'a> {
    pub reference: &'a ModelParams,
    pub lambda: f64,
    pub bandwidth: Bandwidth,
}

impl MmdObjective<'_> {
    pub fn loss_and_gradient(
        &self,
        params: &ModelParams,
        batch: &Batch,
    ) -> Result<(f64, GradVector)> {
        let target = features(self.reference, batch)?;
        loss_and_gradient_with_penalty(params, batch, |local| {
            let s = sigma(self.bandwidth, local, &target);
            let (v, mut g) = mmd2_with_grad(local, &target, s)?;
            g.data.iter_mut().for_each(|x| *x *= self.lambda);
            Ok((self.lambda * v, g))
        })
    }
}

impl Objective for MmdObjective<'_> {
    fn gradient(&self, params: &ModelParams, batch: &Batch) -> Result<GradVector> {
        if self.lambda == 0.0 {
            return crate::nn::gradient(params, batch);
        }
        self.loss_and_gradient(params, batch).map(|(_, g)| g)
    }
}

#[derive(Debug, Clone)]
pub struct FedMmd {
    lambda: f64,
    bandwidth: Bandwidth,
}

impl FedMmd {
    pub fn new(lambda: f64, bandwidth: Bandwidth) -> Self {
        Self { lambda, bandwidth }
    }
}

impl Strategy for FedMmd {
    fn kind(&self) -> StrategyKind {
        StrategyKind::Fedmmd
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
        let objective = MmdObjective {
            reference: &broadcast.model,
            lambda: self.lambda,
            bandwidth: self.bandwidth,
        };
        let trained = train_locally(&objective, &broadcast.model, client, ctx)?;
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
