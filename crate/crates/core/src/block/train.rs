//! Stitch-mode training: the block is fit on frozen embeddings.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::grad::{loss_and_gradients, pair_loss};
use super::{Arch, BlockError, DreamParams, DropoutMask, PairSet, TrainingPair};
use crate::pose::{yaw_coefficient, GateMode};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub dropout_rate: f64,
    pub seed: u64,
    pub gate_mode: GateMode,
    pub arch: Arch,
    /// Hidden width; defaults to the embedding dimension.
    pub hidden: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            momentum: 0.9,
            weight_decay: 1e-4,
            batch_size: 128,
            epochs: 50,
            dropout_rate: 0.5,
            seed: 0,
            gate_mode: GateMode::Nonlinear,
            arch: Arch::TwoFc,
            hidden: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |msg: &str| Err(TrainError::InvalidConfig(msg.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout rate must lie in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight decay must be non-negative");
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        if self.hidden == Some(0) && self.arch == Arch::TwoFc {
            return bad("hidden width must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Block(#[from] BlockError),
    #[error("loss became non-finite in epoch {epoch}")]
    NonFiniteLoss {
        epoch: usize,
        /// Parameters before the step that diverged.
        last_finite: Box<DreamParams>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: DreamParams,
    /// Mean minibatch loss of each epoch, dropout active.
    pub loss_history: Vec<f64>,
    /// Full-set loss before training, dropout off.
    pub initial_loss: f64,
    /// Full-set loss after training, dropout off.
    pub final_loss: f64,
}

/// Trains a freshly initialized block.
pub fn train_stitch(pairs: &PairSet, cfg: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dim = pairs.dim();
    let hidden = cfg.hidden.unwrap_or(dim);
    let params = DreamParams::init(cfg.arch, dim, hidden, &mut rng);
    run(params, pairs, cfg, rng)
}

/// Continues training from the given parameters.
pub fn train_stitch_from(params: DreamParams, pairs: &PairSet, cfg: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    params.validate()?;
    if params.dim != pairs.dim() {
        return Err(BlockError::ShapeMismatch(format!(
            "block dimension {} but pairs have dimension {}",
            params.dim,
            pairs.dim()
        ))
        .into());
    }
    let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    run(params, pairs, cfg, rng)
}

/// Gate coefficients for every pair under `mode`.
pub fn pair_coefficients(pairs: &[TrainingPair], mode: GateMode) -> Vec<f64> {
    pairs.iter().map(|p| yaw_coefficient(p.profile_yaw, mode)).collect()
}

fn run(mut params: DreamParams, pairs: &PairSet, cfg: &TrainConfig, mut rng: ChaCha8Rng) -> Result<TrainOutcome, TrainError> {
    let all = pairs.pairs();
    let coeffs = pair_coefficients(all, cfg.gate_mode);
    let initial_loss = pair_loss(&params, all, &coeffs)?;
    let mut velocity = params.zeros_like();
    let mut order: Vec<usize> = (0..all.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let width = params.last_layer_inputs();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<TrainingPair> = chunk.iter().map(|&i| all[i].clone()).collect();
            let batch_coeffs: Vec<f64> = chunk.iter().map(|&i| coeffs[i]).collect();
            let masks: Option<Vec<DropoutMask>> = (cfg.dropout_rate > 0.0).then(|| {
                chunk
                    .iter()
                    .map(|_| DropoutMask::sample(width, cfg.dropout_rate, &mut rng))
                    .collect()
            });
            let (loss, grads) = match loss_and_gradients(&params, &batch, &batch_coeffs, masks.as_deref()) {
                Ok(v) => v,
                Err(BlockError::NonFiniteLoss) => {
                    return Err(TrainError::NonFiniteLoss {
                        epoch,
                        last_finite: Box::new(params),
                    })
                }
                Err(e) => return Err(e.into()),
            };
            let before = params.clone();
            sgd_step(&mut params, &mut velocity, &grads, cfg);
            if !params.is_finite() {
                return Err(TrainError::NonFiniteLoss {
                    epoch,
                    last_finite: Box::new(before),
                });
            }
            epoch_loss += loss * chunk.len() as f64;
        }
        history.push(epoch_loss / all.len() as f64);
    }

    let final_loss = match pair_loss(&params, all, &coeffs) {
        Ok(l) => l,
        Err(BlockError::NonFiniteLoss) => {
            return Err(TrainError::NonFiniteLoss {
                epoch: cfg.epochs,
                last_finite: Box::new(params),
            })
        }
        Err(e) => return Err(e.into()),
    };
    Ok(TrainOutcome {
        params,
        loss_history: history,
        initial_loss,
        final_loss,
    })
}

/// Momentum SGD; weight decay acts on the two weight matrices only.
fn sgd_step(params: &mut DreamParams, velocity: &mut DreamParams, grads: &DreamParams, cfg: &TrainConfig) {
    const DECAYED: [bool; 5] = [true, false, false, true, false];
    let grads = grads.groups();
    for (k, (p, v)) in params.groups_mut().into_iter().zip(velocity.groups_mut()).enumerate() {
        let wd = if DECAYED[k] { cfg.weight_decay } else { 0.0 };
        for ((p, v), g) in p.iter_mut().zip(v.iter_mut()).zip(grads[k]) {
            *v = cfg.momentum * *v + g + wd * *p;
            *p -= cfg.learning_rate * *v;
        }
    }
}
