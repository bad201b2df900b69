//! Pair loss and its hand-derived gradient.

use super::forward::residual_trace;
use super::{Arch, BlockError, DreamParams, DropoutMask};
use crate::embedding::Embedding;

/// One profile embedding and the frontal embedding of the same subject.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub profile: Embedding,
    pub frontal: Embedding,
    pub profile_yaw: f64,
}

/// Non-empty list of frontal/profile pairs with matching subjects.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSet {
    pairs: Vec<TrainingPair>,
}

impl PairSet {
    pub fn new(pairs: Vec<TrainingPair>) -> Result<Self, BlockError> {
        if pairs.is_empty() {
            return Err(BlockError::EmptyBatch);
        }
        let dim = pairs[0].profile.dim();
        for (i, p) in pairs.iter().enumerate() {
            if p.profile.subject_id != p.frontal.subject_id {
                return Err(BlockError::InvalidPair(format!("pair {i} mixes subjects")));
            }
            if !p.profile_yaw.is_finite() {
                return Err(BlockError::InvalidPair(format!("pair {i} has non-finite yaw")));
            }
            if p.profile.dim() != dim || p.frontal.dim() != dim {
                return Err(BlockError::ShapeMismatch(format!("pair {i} dimension differs")));
            }
            if !(p.profile.is_finite() && p.frontal.is_finite()) {
                return Err(BlockError::InvalidPair(format!("pair {i} has non-finite values")));
            }
        }
        Ok(Self { pairs })
    }

    pub fn pairs(&self) -> &[TrainingPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.pairs[0].profile.dim()
    }
}

/// Mean squared distance between corrected profiles and their frontals, and
/// its gradient with respect to every parameter of the block.
///
/// `coeffs[i]` is the gate coefficient of pair `i`; it is treated as a
/// constant. `masks`, when given, holds one dropout mask per pair.
pub fn loss_and_gradients(
    params: &DreamParams,
    batch: &[TrainingPair],
    coeffs: &[f64],
    masks: Option<&[DropoutMask]>,
) -> Result<(f64, DreamParams), BlockError> {
    if batch.is_empty() {
        return Err(BlockError::EmptyBatch);
    }
    if coeffs.len() != batch.len() || masks.is_some_and(|m| m.len() != batch.len()) {
        return Err(BlockError::ShapeMismatch(
            "coefficient or mask count differs from batch size".into(),
        ));
    }
    let d = params.dim;
    let h = params.hidden;
    let last_in = params.last_layer_inputs();
    let scale = 1.0 / batch.len() as f64;
    let mut grads = params.zeros_like();
    let mut loss = 0.0;

    for (i, pair) in batch.iter().enumerate() {
        if pair.frontal.dim() != d {
            return Err(BlockError::ShapeMismatch(format!(
                "frontal has dimension {}, block expects {d}",
                pair.frontal.dim()
            )));
        }
        let c = coeffs[i];
        let mask = masks.map(|m| &m[i]);
        let trace = residual_trace(params, &pair.profile.values, mask)?;

        // e = x_p + c·R(x_p) − x_f
        let err: Vec<f64> = (0..d)
            .map(|k| pair.profile.values[k] + c * trace.out[k] - pair.frontal.values[k])
            .collect();
        loss += err.iter().map(|e| e * e).sum::<f64>();
        if c == 0.0 {
            continue;
        }

        // dL/dR
        let g_out: Vec<f64> = err.iter().map(|e| 2.0 * scale * c * e).collect();
        for k in 0..d {
            grads.b2[k] += g_out[k];
            let row = &mut grads.w2[k * last_in..(k + 1) * last_in];
            for (w, a) in row.iter_mut().zip(&trace.last_in) {
                *w += g_out[k] * a;
            }
        }
        if params.arch == Arch::OneFc {
            continue;
        }

        // back through W2, the dropout mask and PReLU
        let mut g_pre = vec![0.0; h];
        for j in 0..h {
            let mut g_act: f64 = (0..d).map(|k| params.w2[k * h + j] * g_out[k]).sum();
            if let Some(m) = mask {
                g_act *= m.0[j];
            }
            let z = trace.pre[j];
            if z > 0.0 {
                g_pre[j] = g_act;
            } else {
                g_pre[j] = g_act * params.prelu_slope;
                grads.prelu_slope += g_act * z;
            }
        }
        for j in 0..h {
            grads.b1[j] += g_pre[j];
            let row = &mut grads.w1[j * d..(j + 1) * d];
            for (w, x) in row.iter_mut().zip(&pair.profile.values) {
                *w += g_pre[j] * x;
            }
        }
    }
    let loss = loss * scale;
    if !loss.is_finite() {
        return Err(BlockError::NonFiniteLoss);
    }
    Ok((loss, grads))
}

/// Loss alone, without dropout.
pub fn pair_loss(params: &DreamParams, batch: &[TrainingPair], coeffs: &[f64]) -> Result<f64, BlockError> {
    if batch.is_empty() {
        return Err(BlockError::EmptyBatch);
    }
    let mut loss = 0.0;
    for (pair, &c) in batch.iter().zip(coeffs) {
        let r = residual_trace(params, &pair.profile.values, None)?.out;
        loss += (0..params.dim)
            .map(|k| {
                let e = pair.profile.values[k] + c * r[k] - pair.frontal.values[k];
                e * e
            })
            .sum::<f64>();
    }
    let loss = loss / batch.len() as f64;
    if !loss.is_finite() {
        return Err(BlockError::NonFiniteLoss);
    }
    Ok(loss)
}
