//! End-to-end runs on synthetic data: naive vs corrected verification, and the
//! gate/architecture comparisons.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::block::{apply_batch, dream_forward, Arch, BlockError, DreamParams, TrainConfig, TrainError, TrainingPair};
use crate::embedding::Embedding;
use crate::eval::{compute_eer, compute_roc, kfold_eer, score_pair, EvalError, FoldProtocol, ScoredPair};
use crate::pose::{yaw_coefficient, GateMode};
use crate::synth::{generate, make_pairs, PairRequest, SynthConfig, SynthError};

#[derive(Debug, Error)]
pub enum AblationError {
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Block(#[from] BlockError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("pair references unknown embedding `{0}`")]
    UnknownId(String),
}

/// Scores every fold of a protocol against an id → embedding table.
pub fn score_protocol(
    protocol: &FoldProtocol,
    table: &HashMap<String, Embedding>,
) -> Result<Vec<Vec<ScoredPair>>, AblationError> {
    protocol
        .folds
        .iter()
        .map(|fold| {
            fold.iter()
                .map(|lp| {
                    let a = table.get(&lp.id1).ok_or_else(|| AblationError::UnknownId(lp.id1.clone()))?;
                    let b = table.get(&lp.id2).ok_or_else(|| AblationError::UnknownId(lp.id2.clone()))?;
                    Ok(score_pair(a, b, lp.same)?)
                })
                .collect()
        })
        .collect()
}

/// Multiplies each yaw by `1 ± rel`, the sign drawn per value.
pub fn jitter_yaws<R: Rng + ?Sized>(yaws: &[f64], rel: f64, rng: &mut R) -> Vec<f64> {
    yaws.iter()
        .map(|y| {
            let s = if rng.random::<bool>() { 1.0 } else { -1.0 };
            y * (1.0 + s * rel)
        })
        .collect()
}

/// Mean of `‖x_p + c·R(x_p) − x_f‖` over pairs; without a block, the raw distance.
pub fn mean_pair_distance(
    params: Option<&DreamParams>,
    pairs: &[TrainingPair],
    mode: GateMode,
) -> Result<f64, BlockError> {
    let mut total = 0.0;
    for p in pairs {
        let mapped = match params {
            Some(w) => dream_forward(w, &p.profile, yaw_coefficient(p.profile_yaw, mode))?,
            None => p.profile.clone(),
        };
        total += mapped
            .values
            .iter()
            .zip(&p.frontal.values)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
    }
    Ok(total / pairs.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub gate: GateMode,
    pub arch: Arch,
    /// EER over all evaluation pairs pooled.
    pub eer: f64,
    pub eer_mean: f64,
    pub eer_std: f64,
    /// Pooled EER when the apply-time yaws are jittered.
    pub eer_yaw_noise: Option<f64>,
    pub train_distance_before: f64,
    pub train_distance_after: f64,
    pub initial_loss: f64,
    pub final_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticExperiment {
    pub naive_eer: f64,
    pub naive_eer_mean: f64,
    pub runs: Vec<RunSummary>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub data: SynthConfig,
    pub pairs: PairRequest,
    pub train: TrainConfig,
    /// Gate/architecture combinations to train; the gate in `train` is ignored.
    pub variants: Vec<(GateMode, Arch)>,
    /// Relative yaw noise injected at apply time, with its seed; scored in
    /// addition to the clean yaws.
    pub apply_yaw_noise: Option<(f64, u64)>,
}

/// Every gate with the two-fc block, then the one-fc block with the nonlinear gate.
pub fn ablation_variants() -> Vec<(GateMode, Arch)> {
    GateMode::ALL
        .iter()
        .map(|&g| (g, Arch::TwoFc))
        .chain(std::iter::once((GateMode::Nonlinear, Arch::OneFc)))
        .collect()
}

fn pooled_eer(folds: &[Vec<ScoredPair>]) -> Result<f64, EvalError> {
    let all: Vec<ScoredPair> = folds.iter().flatten().cloned().collect();
    Ok(compute_eer(&compute_roc(&all)?))
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<SyntheticExperiment, AblationError> {
    let ds = generate(&spec.data)?;
    let split = make_pairs(&ds, &spec.pairs)?;
    let train_set = split.train_set()?;

    let eval_images: Vec<Embedding> = split
        .eval_subjects
        .iter()
        .flat_map(|&s| ds.images.iter().filter(move |im| im.subject == s))
        .map(|im| ds.image_embedding(im))
        .collect();
    let table: HashMap<String, Embedding> = eval_images.iter().map(|e| (e.id.clone(), e.clone())).collect();
    let naive = score_protocol(&split.protocol, &table)?;
    let naive_eer = pooled_eer(&naive)?;
    let naive_eer_mean = kfold_eer(&naive)?.mean;

    let true_yaws: Vec<f64> = eval_images.iter().map(|e| e.yaw.unwrap_or(0.0)).collect();
    let noisy_yaws = spec
        .apply_yaw_noise
        .map(|(rel, seed)| jitter_yaws(&true_yaws, rel, &mut ChaCha8Rng::seed_from_u64(seed)));
    let corrected_scores = |params: &DreamParams, yaws: &[f64], gate| -> Result<_, AblationError> {
        let inputs: Vec<(Embedding, f64)> = eval_images.iter().cloned().zip(yaws.iter().copied()).collect();
        let corrected = apply_batch(params, &inputs, gate)?;
        let table: HashMap<String, Embedding> = corrected.into_iter().map(|e| (e.id.clone(), e)).collect();
        score_protocol(&split.protocol, &table)
    };

    let mut runs = Vec::with_capacity(spec.variants.len());
    for &(gate, arch) in &spec.variants {
        let cfg = TrainConfig {
            gate_mode: gate,
            arch,
            ..spec.train.clone()
        };
        let out = crate::block::train_stitch(&train_set, &cfg)?;
        let scored = corrected_scores(&out.params, &true_yaws, gate)?;
        let kf = kfold_eer(&scored)?;
        let eer_yaw_noise = match &noisy_yaws {
            Some(y) => Some(pooled_eer(&corrected_scores(&out.params, y, gate)?)?),
            None => None,
        };
        runs.push(RunSummary {
            gate,
            arch,
            eer: pooled_eer(&scored)?,
            eer_mean: kf.mean,
            eer_std: kf.std,
            eer_yaw_noise,
            train_distance_before: mean_pair_distance(None, train_set.pairs(), gate)?,
            train_distance_after: mean_pair_distance(Some(&out.params), train_set.pairs(), gate)?,
            initial_loss: out.initial_loss,
            final_loss: out.final_loss,
        });
    }
    Ok(SyntheticExperiment {
        naive_eer,
        naive_eer_mean,
        runs,
    })
}
