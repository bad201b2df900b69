use super::{EvalError, ScoredPair};

/// One operating point of the threshold sweep: predict "same" iff `score >= threshold`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub false_positives: usize,
    pub true_positives: usize,
    pub fpr: f64,
    pub tpr: f64,
}

impl RocPoint {
    pub fn fnr(&self) -> f64 {
        1.0 - self.tpr
    }
}

/// ROC curve ordered by decreasing threshold. The first point uses an
/// infinite threshold (nothing accepted); each following point corresponds
/// to one distinct score, the last one accepting everything.
#[derive(Debug, Clone, PartialEq)]
pub struct Roc {
    pub points: Vec<RocPoint>,
    pub positives: usize,
    pub negatives: usize,
}

pub fn compute_roc(pairs: &[ScoredPair]) -> Result<Roc, EvalError> {
    let scored: Vec<(f64, bool)> = pairs.iter().map(|p| (p.score, p.same)).collect();
    roc_from_scores(&scored)
}

/// Same as [`compute_roc`] on bare `(score, same)` tuples.
pub fn roc_from_scores(scored: &[(f64, bool)]) -> Result<Roc, EvalError> {
    if scored.iter().any(|(s, _)| s.is_nan()) {
        return Err(EvalError::NonFiniteScore);
    }
    let positives = scored.iter().filter(|(_, same)| *same).count();
    let negatives = scored.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(EvalError::DegenerateLabels { positives, negatives });
    }
    let mut sorted = scored.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));

    let (p, n) = (positives as f64, negatives as f64);
    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        false_positives: 0,
        true_positives: 0,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut fp, mut tp) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == t {
            if sorted[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold: t,
            false_positives: fp,
            true_positives: tp,
            fpr: fp as f64 / n,
            tpr: tp as f64 / p,
        });
    }
    Ok(Roc {
        points,
        positives,
        negatives,
    })
}

/// Equal error rate: where the false positive rate meets the false negative
/// rate, interpolated linearly between the two sweep points that straddle it.
pub fn compute_eer(roc: &Roc) -> f64 {
    let pts = &roc.points;
    for i in 0..pts.len() {
        let gap = pts[i].fpr - pts[i].fnr();
        if gap == 0.0 {
            return pts[i].fpr;
        }
        if gap > 0.0 {
            // i > 0 because the first point has fpr 0, fnr 1
            let (a, b) = (&pts[i - 1], &pts[i]);
            let ga = a.fpr - a.fnr();
            let w = ga / (ga - gap);
            return a.fpr + w * (b.fpr - a.fpr);
        }
    }
    // the last point accepts everything (fnr 0), so a crossing always exists
    pts.last().map_or(0.0, |p| p.fpr)
}

/// TAR at one target FAR.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TarAtFar {
    pub far: f64,
    pub tar: f64,
    /// The negative set is too small to resolve a nonzero FPR at `far`.
    pub unreachable: bool,
}

/// Best TPR among operating points whose FPR does not exceed each target.
///
/// With `interpolate`, the TPR is read off the ROC polyline at exactly the
/// target FPR instead.
pub fn tar_at_far(roc: &Roc, far_targets: &[f64], interpolate: bool) -> Vec<TarAtFar> {
    let min_nonzero = 1.0 / roc.negatives as f64;
    far_targets
        .iter()
        .map(|&far| {
            let step = roc
                .points
                .iter()
                .filter(|p| p.fpr <= far)
                .map(|p| p.tpr)
                .fold(0.0, f64::max);
            let tar = if interpolate {
                interpolated_tpr(roc, far).max(step)
            } else {
                step
            };
            TarAtFar {
                far,
                tar,
                unreachable: min_nonzero > far,
            }
        })
        .collect()
}

fn interpolated_tpr(roc: &Roc, far: f64) -> f64 {
    let pts = &roc.points;
    for w in pts.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if a.fpr <= far && far <= b.fpr {
            if b.fpr == a.fpr {
                return b.tpr;
            }
            let t = (far - a.fpr) / (b.fpr - a.fpr);
            return a.tpr + t * (b.tpr - a.tpr);
        }
    }
    pts.last().map_or(0.0, |p| p.tpr)
}
