//! Verification and identification metrics.
//!
//! Scores are cosine similarities; a pair is predicted "same" when its score
//! is at or above the threshold.

mod heatmap;
mod identify;
mod kfold;
mod report;
mod roc;

use thiserror::Error;

use crate::embedding::Embedding;

pub use heatmap::{yaw_error_heatmap, HeatmapCell, YawHeatmap, DEFAULT_YAW_BIN_EDGES_DEG};
pub use identify::{rank_k_identification, OpenSetPolicy, RankReport};
pub use kfold::{kfold_eer, FoldProtocol, KFoldReport};
pub use report::{grid_csv, roc_csv, EvalReport, VerificationReport};
pub use roc::{compute_eer, compute_roc, roc_from_scores, tar_at_far, Roc, RocPoint, TarAtFar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("embedding norm below 1e-12")]
    ZeroVector,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("need both classes, got {positives} same and {negatives} not-same pairs")]
    DegenerateLabels { positives: usize, negatives: usize },
    #[error("score is NaN")]
    NonFiniteScore,
    #[error("empty gallery")]
    EmptyGallery,
    #[error("probe `{0}` has no subject in the gallery")]
    ProbeSubjectMissing(String),
    #[error("embedding `{0}` has no subject id")]
    MissingSubject(String),
    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<EvalError>,
    },
    #[error("invalid fold protocol: {0}")]
    InvalidProtocol(String),
    #[error("{0}")]
    InvalidBins(String),
    #[error("no pair carries yaw annotations")]
    MissingYaw,
}

/// An unscored pair reference from a pair list or protocol file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledPair {
    pub id1: String,
    pub id2: String,
    pub same: bool,
}

/// A compared pair with its ground-truth label.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPair {
    pub id1: String,
    pub id2: String,
    pub score: f64,
    pub same: bool,
    pub yaw1: Option<f64>,
    pub yaw2: Option<f64>,
}

const ZERO_NORM: f64 = 1e-12;

pub fn cosine_score(a: &Embedding, b: &Embedding) -> Result<f64, EvalError> {
    cosine(&a.values, &b.values)
}

pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::DimensionMismatch(a.len(), b.len()));
    }
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(na >= ZERO_NORM && nb >= ZERO_NORM) {
        return Err(EvalError::ZeroVector);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Scores a labeled pair of embeddings, carrying their yaws along.
pub fn score_pair(a: &Embedding, b: &Embedding, same: bool) -> Result<ScoredPair, EvalError> {
    Ok(ScoredPair {
        id1: a.id.clone(),
        id2: b.id.clone(),
        score: cosine_score(a, b)?,
        same,
        yaw1: a.yaw,
        yaw2: b.yaw,
    })
}
