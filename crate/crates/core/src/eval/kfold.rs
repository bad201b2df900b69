use std::collections::{BTreeMap, BTreeSet};

use super::{compute_eer, compute_roc, EvalError, LabeledPair, ScoredPair};

/// Labeled pairs split into folds.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FoldProtocol {
    pub folds: Vec<Vec<LabeledPair>>,
}

impl FoldProtocol {
    /// `(same, not_same)` per fold.
    pub fn counts(&self) -> Vec<(usize, usize)> {
        self.folds
            .iter()
            .map(|f| {
                let same = f.iter().filter(|p| p.same).count();
                (same, f.len() - same)
            })
            .collect()
    }

    /// Checks that no subject occurs in two folds and, if given, that every
    /// fold has exactly the expected `(same, not_same)` counts.
    pub fn validate<'a>(
        &self,
        subject_of: impl Fn(&str) -> Option<&'a str>,
        expected: Option<(usize, usize)>,
    ) -> Result<(), EvalError> {
        let mut owner: BTreeMap<&str, usize> = BTreeMap::new();
        for (k, fold) in self.folds.iter().enumerate() {
            let mut subjects = BTreeSet::new();
            for p in fold {
                for id in [&p.id1, &p.id2] {
                    let s = subject_of(id)
                        .ok_or_else(|| EvalError::InvalidProtocol(format!("unknown id `{id}`")))?;
                    subjects.insert(s);
                }
            }
            for s in subjects {
                if let Some(prev) = owner.insert(s, k) {
                    if prev != k {
                        return Err(EvalError::InvalidProtocol(format!(
                            "subject `{s}` appears in folds {prev} and {k}"
                        )));
                    }
                }
            }
        }
        if let Some(want) = expected {
            for (k, got) in self.counts().into_iter().enumerate() {
                if got != want {
                    return Err(EvalError::InvalidProtocol(format!(
                        "fold {k} has {got:?} same/not-same pairs, expected {want:?}"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KFoldReport {
    pub fold_eers: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

/// EER of every fold computed independently, with mean and spread.
pub fn kfold_eer(folds: &[Vec<ScoredPair>]) -> Result<KFoldReport, EvalError> {
    if folds.is_empty() {
        return Err(EvalError::InvalidProtocol("no folds".into()));
    }
    let fold_eers: Vec<f64> = folds
        .iter()
        .enumerate()
        .map(|(fold, pairs)| {
            compute_roc(pairs)
                .map(|roc| compute_eer(&roc))
                .map_err(|e| EvalError::Fold {
                    fold,
                    source: Box::new(e),
                })
        })
        .collect::<Result<_, _>>()?;
    let n = fold_eers.len() as f64;
    let mean = fold_eers.iter().sum::<f64>() / n;
    let var = fold_eers.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n;
    Ok(KFoldReport {
        fold_eers,
        mean,
        std: var.sqrt(),
    })
}
