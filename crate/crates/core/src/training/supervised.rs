use rand::seq::SliceRandom;

use super::adam::{adam_step, AdamState};
use super::dataset::{DataItem, Dataset};
use crate::error::{check_len, Error, Result};
use crate::par::{self, Exec};
use crate::rng;
use crate::unrolling::{unroll_backward, unroll_forward, Trainable, UnrollConfig, UnrollParams, UnrollProblem};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    pub trainable: Trainable,
    /// Visit items in a seeded random order each epoch.
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            lr: 1e-3,
            seed: 0,
            trainable: Trainable::ALL,
            shuffle: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossRecord {
    pub epoch: usize,
    pub item: usize,
    pub loss: f64,
}

#[derive(Clone, Debug)]
pub struct TrainResult {
    pub params: UnrollParams,
    /// Mean per-item loss of each epoch (each loss taken before its step).
    pub epoch_losses: Vec<f64>,
    pub records: Vec<LossRecord>,
}

/// `‖x† − x_K‖²` for one item and its gradient with respect to every
/// parameter.
pub fn supervised_loss(
    problem: &UnrollProblem<'_>,
    config: &UnrollConfig,
    params: &UnrollParams,
    item: &DataItem,
) -> Result<(f64, UnrollParams)> {
    let p = problem.with_data(&item.data);
    check_len("ground truth", p.op.image_len(), item.truth.len())?;
    let traj = unroll_forward(&p, config, params, &item.x0, None)?;
    let out = traj.output();
    let resid: Vec<f64> = out.iter().zip(&item.truth).map(|(a, b)| a - b).collect();
    let loss = resid.iter().map(|r| r * r).sum::<f64>();
    let dx: Vec<f64> = resid.iter().map(|r| 2.0 * r).collect();
    let grads = unroll_backward(&p, &traj, config, params, &dx)?;
    Ok((loss, grads.params))
}

/// Batch-size-one Adam training over `dataset`.
pub fn train(
    problem: &UnrollProblem<'_>,
    dataset: &Dataset,
    config: &UnrollConfig,
    init: UnrollParams,
    tc: &TrainConfig,
) -> Result<TrainResult> {
    let mut params = init;
    let mut adam = AdamState::new(params.n_params(), tc.lr);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut epoch_losses = Vec::with_capacity(tc.epochs);
    let mut records = Vec::new();
    for epoch in 0..tc.epochs {
        if tc.shuffle {
            order.shuffle(&mut rng::stream(tc.seed, epoch as u64));
        }
        let mut total = 0.0;
        for &k in &order {
            let (loss, grads) = supervised_loss(problem, config, &params, &dataset.items[k])?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("loss is {loss} at epoch {epoch}, item {k}")));
            }
            adam_step(&mut adam, &mut params, &grads, tc.trainable)?;
            records.push(LossRecord { epoch, item: k, loss });
            total += loss;
        }
        epoch_losses.push(total / dataset.len() as f64);
    }
    Ok(TrainResult {
        params,
        epoch_losses,
        records,
    })
}

/// Network outputs for every item, evaluated concurrently.
pub fn evaluate(
    problem: &UnrollProblem<'_>,
    dataset: &Dataset,
    config: &UnrollConfig,
    params: &UnrollParams,
    exec: Exec,
) -> Result<Vec<Vec<f64>>> {
    par::map_collect(exec, dataset.len(), |k| {
        let item = &dataset.items[k];
        let p = problem.with_data(&item.data);
        unroll_forward(&p, config, params, &item.x0, None).map(|t| t.output().to_vec())
    })
    .into_iter()
    .collect()
}
