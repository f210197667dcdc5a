//! Minibatch Adam loop shared by every trainable model.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::numcore::{adam_update, rng, AdamConfig, AdamState, Params};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Units (sentences or paragraphs) per Adam step.
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Reshuffle unit order every epoch.
    pub shuffle: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 32,
            adam: AdamConfig::default(),
            shuffle: true,
            seed: crate::DEFAULT_SEED,
        }
    }
}

/// What to do after an epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

/// Runs `cfg.epochs` passes over `units`. Each step averages the per-unit
/// gradients of one batch and applies Adam. Per-unit work may run on several
/// threads; gradients are always summed in batch order, so the result does
/// not depend on the thread count.
///
/// Returns the mean unit loss of every completed epoch.
pub fn fit<P, U, G, E>(
    params: &mut P,
    units: &[U],
    cfg: &TrainConfig,
    grad: G,
    mut after_epoch: E,
) -> Result<Vec<f64>>
where
    P: Params + Send + Sync,
    U: Sync,
    G: Fn(&P, &U) -> Result<(f64, P)> + Sync,
    E: FnMut(usize, f64, &P) -> Result<Control>,
{
    contract!(cfg.batch_size >= 1, "batch size must be >= 1");
    let mut adam = AdamState::new(cfg.adam);
    let mut order: Vec<usize> = (0..units.len()).collect();
    let mut r = rng(cfg.seed);
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        if cfg.shuffle {
            order.shuffle(&mut r);
        }
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let results: Vec<Result<(f64, P)>> = batch
                .par_iter()
                .map(|&i| grad(params, &units[i]))
                .collect();
            let mut total = params.zeros_like();
            for res in results {
                let (loss, g) = res?;
                loss_sum += loss;
                total.add_assign(&g);
            }
            total.scale(1.0 / batch.len() as f64);
            adam_update(params, &total, &mut adam)?;
        }
        let mean = loss_sum / units.len().max(1) as f64;
        history.push(mean);
        log::info!("epoch {}: mean loss {mean:.6}", epoch + 1);
        if after_epoch(epoch, mean, params)? == Control::Stop {
            break;
        }
    }
    Ok(history)
}
