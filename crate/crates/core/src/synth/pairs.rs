use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{SynthDataset, SynthError};
use crate::block::{BlockError, PairSet, TrainingPair};
use crate::eval::{FoldProtocol, LabeledPair};

/// How many eval pairs to draw, either per subject or per fold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairCounts {
    PerSubject { same: usize, not_same: usize },
    PerFold { same: usize, not_same: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairRequest {
    /// Share of subjects reserved for training, rounded to the nearest count.
    pub train_fraction: f64,
    pub folds: usize,
    pub counts: PairCounts,
    /// Split/shuffle seed; the dataset seed when `None`.
    pub seed: Option<u64>,
}

impl Default for PairRequest {
    fn default() -> Self {
        Self {
            train_fraction: 0.5,
            folds: 10,
            counts: PairCounts::PerSubject { same: 7, not_same: 7 },
            seed: None,
        }
    }
}

impl PairRequest {
    /// All subjects in evaluation, 10 folds of 350 same and 350 not-same pairs.
    pub fn cfp_shaped() -> Self {
        Self {
            train_fraction: 0.0,
            folds: 10,
            counts: PairCounts::PerFold {
                same: 350,
                not_same: 350,
            },
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthPairs {
    /// Every image of every training subject against its canonical frontal.
    pub train: Vec<TrainingPair>,
    pub train_subjects: Vec<usize>,
    pub eval_subjects: Vec<usize>,
    pub protocol: FoldProtocol,
}

impl SynthPairs {
    pub fn train_set(&self) -> Result<PairSet, BlockError> {
        PairSet::new(self.train.clone())
    }

    /// All folds concatenated.
    pub fn eval_pairs(&self) -> Vec<LabeledPair> {
        self.protocol.folds.iter().flatten().cloned().collect()
    }
}

// split a total over `k` slots, the remainder going to the first ones
fn share(total: usize, k: usize, j: usize) -> usize {
    total / k + usize::from(j < total % k)
}

pub fn make_pairs(ds: &SynthDataset, req: &PairRequest) -> Result<SynthPairs, SynthError> {
    if !(0.0..=1.0).contains(&req.train_fraction) {
        return Err(SynthError::InvalidConfig("train fraction must lie in [0, 1]".into()));
    }
    if req.folds == 0 {
        return Err(SynthError::InvalidConfig("need at least one fold".into()));
    }
    let n = ds.subjects.len();
    if n < 2 {
        return Err(SynthError::InsufficientSubjects { needed: 2, available: n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(req.seed.unwrap_or(ds.config.seed) ^ 0x9e37_79b9_7f4a_7c15);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_train = (req.train_fraction * n as f64).round() as usize;
    let (train_subjects, eval_subjects) = order.split_at(n_train);
    let mut train_subjects = train_subjects.to_vec();
    let eval_subjects = eval_subjects.to_vec();
    train_subjects.sort_unstable();
    if eval_subjects.len() < 2 * req.folds {
        return Err(SynthError::InsufficientSubjects {
            needed: n_train + 2 * req.folds,
            available: n,
        });
    }

    let mut by_subject: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, im) in ds.images.iter().enumerate() {
        by_subject[im.subject].push(i);
    }

    let train = train_subjects
        .iter()
        .flat_map(|&s| by_subject[s].iter().map(move |&i| (s, i)))
        .map(|(s, i)| TrainingPair {
            profile: ds.image_embedding(&ds.images[i]),
            frontal: ds.frontal_embedding(s),
            profile_yaw: ds.images[i].pose.yaw,
        })
        .collect();

    let mut folds = Vec::with_capacity(req.folds);
    for f in 0..req.folds {
        let members: Vec<usize> = eval_subjects.iter().copied().skip(f).step_by(req.folds).collect();
        let k = members.len();
        let mut fold = Vec::new();
        for (j, &s) in members.iter().enumerate() {
            let want = match req.counts {
                PairCounts::PerSubject { same, .. } => same,
                PairCounts::PerFold { same, .. } => share(same, k, j),
            };
            let imgs = &by_subject[s];
            let mut cands: Vec<(usize, usize)> = (0..imgs.len())
                .flat_map(|a| ((a + 1)..imgs.len()).map(move |b| (a, b)))
                .map(|(a, b)| (imgs[a], imgs[b]))
                .collect();
            if cands.len() < want {
                return Err(SynthError::InsufficientImages {
                    subject: ds.subjects[s].id.clone(),
                    needed: want,
                    kind: "same",
                });
            }
            cands.shuffle(&mut rng);
            fold.extend(cands[..want].iter().map(|&(a, b)| labeled(ds, a, b, true)));
        }

        let mut used: HashSet<(usize, usize)> = HashSet::new();
        for (j, &s) in members.iter().enumerate() {
            let want = match req.counts {
                PairCounts::PerSubject { not_same, .. } => not_same,
                PairCounts::PerFold { not_same, .. } => share(not_same, k, j),
            };
            let own = &by_subject[s];
            let others: Vec<usize> = members
                .iter()
                .filter(|&&t| t != s)
                .flat_map(|&t| by_subject[t].iter().copied())
                .collect();
            let total = own.len() * others.len();
            let key = |a: usize, b: usize| (a.min(b), a.max(b));
            let mut picked = Vec::with_capacity(want);
            let mut attempts = 0;
            while picked.len() < want && attempts < 20 * want + 1000 {
                attempts += 1;
                let c = rng.random_range(0..total);
                let (a, b) = (own[c / others.len()], others[c % others.len()]);
                if used.insert(key(a, b)) {
                    picked.push((a, b));
                }
            }
            // dense fallback once random draws keep colliding
            for c in 0..total {
                if picked.len() >= want {
                    break;
                }
                let (a, b) = (own[c / others.len()], others[c % others.len()]);
                if used.insert(key(a, b)) {
                    picked.push((a, b));
                }
            }
            if picked.len() < want {
                return Err(SynthError::InsufficientImages {
                    subject: ds.subjects[s].id.clone(),
                    needed: want,
                    kind: "not-same",
                });
            }
            fold.extend(picked.into_iter().map(|(a, b)| labeled(ds, a, b, false)));
        }
        folds.push(fold);
    }

    Ok(SynthPairs {
        train,
        train_subjects,
        eval_subjects,
        protocol: FoldProtocol { folds },
    })
}

// the more frontal image goes first
fn labeled(ds: &SynthDataset, a: usize, b: usize, same: bool) -> LabeledPair {
    let (ia, ib) = (&ds.images[a], &ds.images[b]);
    let (first, second) = if ib.pose.yaw.abs() < ia.pose.yaw.abs() {
        (ib, ia)
    } else {
        (ia, ib)
    };
    LabeledPair {
        id1: first.id.clone(),
        id2: second.id.clone(),
        same,
    }
}
