use std::collections::BTreeMap;

use super::{cosine, EvalError};
use crate::embedding::Embedding;

/// What to do with probes whose subject is absent from the gallery.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OpenSetPolicy {
    #[default]
    Reject,
    /// Drop them from the denominator and count them.
    Exclude,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankReport {
    /// Accuracy per requested k.
    pub accuracy: BTreeMap<usize, f64>,
    pub probes_used: usize,
    pub probes_excluded: usize,
}

/// Closed-set rank-k recognition rate.
///
/// The gallery is ranked by descending cosine score for each probe. Equal
/// scores keep gallery order, so an earlier gallery entry ranks first.
pub fn rank_k_identification(
    probes: &[Embedding],
    gallery: &[Embedding],
    ks: &[usize],
    policy: OpenSetPolicy,
) -> Result<RankReport, EvalError> {
    if gallery.is_empty() {
        return Err(EvalError::EmptyGallery);
    }
    let gallery_subjects: Vec<&str> = gallery
        .iter()
        .map(|g| g.subject_id.as_deref().ok_or_else(|| EvalError::MissingSubject(g.id.clone())))
        .collect::<Result<_, _>>()?;

    let mut hits = vec![0usize; ks.len()];
    let mut used = 0;
    let mut excluded = 0;
    for probe in probes {
        let subject = probe
            .subject_id
            .as_deref()
            .ok_or_else(|| EvalError::MissingSubject(probe.id.clone()))?;
        if !gallery_subjects.contains(&subject) {
            match policy {
                OpenSetPolicy::Reject => return Err(EvalError::ProbeSubjectMissing(probe.id.clone())),
                OpenSetPolicy::Exclude => {
                    excluded += 1;
                    continue;
                }
            }
        }
        let scores: Vec<f64> = gallery
            .iter()
            .map(|g| cosine(&probe.values, &g.values))
            .collect::<Result<_, _>>()?;
        let mut order: Vec<usize> = (0..gallery.len()).collect();
        // stable: equal scores keep gallery order
        order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]));
        let best_rank = order
            .iter()
            .position(|&i| gallery_subjects[i] == subject)
            .unwrap_or(usize::MAX);
        for (h, &k) in hits.iter_mut().zip(ks) {
            if best_rank < k {
                *h += 1;
            }
        }
        used += 1;
    }
    let accuracy = ks
        .iter()
        .zip(&hits)
        .map(|(&k, &h)| (k, if used == 0 { 0.0 } else { h as f64 / used as f64 }))
        .collect();
    Ok(RankReport {
        accuracy,
        probes_used: used,
        probes_excluded: excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn emb(id: &str, subject: &str, v: Vec<f64>) -> Embedding {
        Embedding::new(v).with_id(id).with_subject(subject)
    }

    #[test]
    fn exact_copies_rank_first() {
        let gallery = vec![
            emb("g0", "a", vec![1.0, 0.1, 0.0]),
            emb("g1", "b", vec![0.0, 1.0, 0.2]),
            emb("g2", "c", vec![0.3, 0.0, 1.0]),
        ];
        let r = rank_k_identification(&gallery, &gallery, &[1, 5], OpenSetPolicy::Reject).unwrap();
        assert_eq!(r.accuracy[&1], 1.0);
        assert_eq!(r.accuracy[&5], 1.0);
    }

    #[test]
    fn orthogonal_impostors() {
        let gallery = vec![
            emb("g0", "a", vec![0.0, 1.0, 0.0]),
            emb("g1", "b", vec![0.0, 0.0, 1.0]),
            emb("g2", "p", vec![0.2, 0.0, 0.0]),
        ];
        let probe = vec![emb("p0", "p", vec![1.0, 0.0, 0.0])];
        let r = rank_k_identification(&probe, &gallery, &[1], OpenSetPolicy::Reject).unwrap();
        assert_eq!(r.accuracy[&1], 1.0);
    }

    #[test]
    fn ties_follow_gallery_order() {
        let gallery = vec![
            emb("g0", "x", vec![1.0, 0.0]),
            emb("g1", "p", vec![1.0, 0.0]),
        ];
        let probe = vec![emb("p0", "p", vec![1.0, 0.0])];
        let r = rank_k_identification(&probe, &gallery, &[1, 2], OpenSetPolicy::Reject).unwrap();
        assert_eq!(r.accuracy[&1], 0.0);
        assert_eq!(r.accuracy[&2], 1.0);
    }

    #[test]
    fn open_set_handling() {
        let gallery = vec![emb("g0", "a", vec![1.0, 0.0])];
        let probes = vec![emb("p0", "a", vec![1.0, 0.1]), emb("p1", "z", vec![0.0, 1.0])];
        assert!(matches!(
            rank_k_identification(&probes, &gallery, &[1], OpenSetPolicy::Reject),
            Err(EvalError::ProbeSubjectMissing(id)) if id == "p1"
        ));
        let r = rank_k_identification(&probes, &gallery, &[1], OpenSetPolicy::Exclude).unwrap();
        assert_eq!((r.probes_used, r.probes_excluded), (1, 1));
        assert_eq!(r.accuracy[&1], 1.0);
        assert!(matches!(
            rank_k_identification(&probes, &[], &[1], OpenSetPolicy::Reject),
            Err(EvalError::EmptyGallery)
        ));
    }
}
