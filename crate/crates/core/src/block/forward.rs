use rand::Rng;

use super::{Arch, BlockError, DreamParams};
use crate::embedding::Embedding;
use crate::pose::{yaw_coefficient, GateMode};

/// Per-unit multipliers on the activations entering the last layer.
///
/// Kept units are scaled by `1 / (1 - rate)` so the expected activation is
/// unchanged and no rescaling is needed at inference.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask(pub Vec<f64>);

impl DropoutMask {
    pub fn ones(width: usize) -> Self {
        Self(vec![1.0; width])
    }

    pub fn sample<R: Rng + ?Sized>(width: usize, rate: f64, rng: &mut R) -> Self {
        if rate <= 0.0 {
            return Self::ones(width);
        }
        let keep = 1.0 / (1.0 - rate);
        Self(
            (0..width)
                .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
                .collect(),
        )
    }
}

pub(crate) fn prelu(z: f64, slope: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        slope * z
    }
}

/// `out = m · x + b` for a row-major `rows × x.len()` matrix.
pub(crate) fn affine(m: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    let cols = x.len();
    m.chunks_exact(cols)
        .zip(b)
        .map(|(row, bias)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + bias)
        .collect()
}

/// Intermediate values of one residual evaluation, kept for backprop.
pub(crate) struct Trace {
    /// Pre-activation `W1·x + b1` (empty for one fc).
    pub pre: Vec<f64>,
    /// Masked input of the last layer.
    pub last_in: Vec<f64>,
    pub out: Vec<f64>,
}

pub(crate) fn residual_trace(
    params: &DreamParams,
    x: &[f64],
    mask: Option<&DropoutMask>,
) -> Result<Trace, BlockError> {
    if x.len() != params.dim {
        return Err(BlockError::ShapeMismatch(format!(
            "input has dimension {}, block expects {}",
            x.len(),
            params.dim
        )));
    }
    if let Some(m) = mask {
        if m.0.len() != params.last_layer_inputs() {
            return Err(BlockError::ShapeMismatch(format!(
                "dropout mask has width {}, expected {}",
                m.0.len(),
                params.last_layer_inputs()
            )));
        }
    }
    let (pre, mut last_in) = match params.arch {
        Arch::TwoFc => {
            let pre = affine(&params.w1, &params.b1, x);
            let act = pre.iter().map(|&z| prelu(z, params.prelu_slope)).collect();
            (pre, act)
        }
        Arch::OneFc => (Vec::new(), x.to_vec()),
    };
    if let Some(m) = mask {
        last_in.iter_mut().zip(&m.0).for_each(|(a, k)| *a *= k);
    }
    let out = affine(&params.w2, &params.b2, &last_in);
    Ok(Trace { pre, last_in, out })
}

/// The residual branch output `R(x)`. Pass a mask only while training.
pub fn residual(
    params: &DreamParams,
    x: &[f64],
    dropout: Option<&DropoutMask>,
) -> Result<Vec<f64>, BlockError> {
    residual_trace(params, x, dropout).map(|t| t.out)
}

/// `x + coeff · R(x)` with dropout disabled.
///
/// A zero coefficient returns the input unchanged, bit for bit.
pub fn dream_forward(params: &DreamParams, x: &Embedding, coeff: f64) -> Result<Embedding, BlockError> {
    if !(0.0..=1.0).contains(&coeff) {
        return Err(BlockError::InvalidCoefficient(coeff));
    }
    if x.dim() != params.dim {
        return Err(BlockError::ShapeMismatch(format!(
            "input has dimension {}, block expects {}",
            x.dim(),
            params.dim
        )));
    }
    if coeff == 0.0 {
        return Ok(x.clone());
    }
    let r = residual(params, &x.values, None)?;
    let values = x.values.iter().zip(&r).map(|(v, d)| v + coeff * d).collect();
    Ok(x.map_values(values))
}

/// Corrects every embedding using the gate coefficient of its yaw.
pub fn apply_batch(
    params: &DreamParams,
    embeddings: &[(Embedding, f64)],
    mode: GateMode,
) -> Result<Vec<Embedding>, BlockError> {
    embeddings
        .iter()
        .map(|(e, yaw)| dream_forward(params, e, yaw_coefficient(*yaw, mode)))
        .collect()
}
