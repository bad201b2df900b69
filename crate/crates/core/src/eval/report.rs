use std::fmt::Write as _;

use super::{
    compute_eer, compute_roc, tar_at_far, yaw_error_heatmap, EvalError, KFoldReport, RankReport, Roc, ScoredPair,
    TarAtFar, YawHeatmap,
};

/// Verification metrics for one scored pair list.
#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub roc: Roc,
    pub eer: f64,
    /// Score at which the EER crossing happens (sweep point on the FPR side).
    pub eer_threshold: f64,
    pub tar_at_far: Vec<TarAtFar>,
    pub heatmap: Option<YawHeatmap>,
}

impl VerificationReport {
    /// ROC, EER and TAR@FAR; a yaw heatmap at the EER threshold when any pair has yaws.
    pub fn compute(
        pairs: &[ScoredPair],
        far_targets: &[f64],
        interpolate_tar: bool,
        yaw_edges: &[f64],
    ) -> Result<Self, EvalError> {
        let roc = compute_roc(pairs)?;
        let eer = compute_eer(&roc);
        let eer_threshold = eer_threshold(&roc);
        let tar = tar_at_far(&roc, far_targets, interpolate_tar);
        let heatmap = match yaw_error_heatmap(pairs, eer_threshold, yaw_edges) {
            Ok(h) => Some(h),
            Err(EvalError::MissingYaw) => None,
            Err(e) => return Err(e),
        };
        Ok(Self {
            roc,
            eer,
            eer_threshold,
            tar_at_far: tar,
            heatmap,
        })
    }
}

/// First sweep threshold at which the FPR reaches the FNR.
pub(crate) fn eer_threshold(roc: &Roc) -> f64 {
    roc.points
        .iter()
        .find(|p| p.fpr >= p.fnr())
        .map_or(f64::NEG_INFINITY, |p| p.threshold)
}

/// Everything the command line reports, rendered as one key=value document.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub verification: Option<VerificationReport>,
    pub kfold: Option<KFoldReport>,
    pub rank: Option<RankReport>,
}

pub(crate) fn fmt_rate(v: f64) -> String {
    format!("{v:.4}")
}

impl EvalReport {
    /// `metric=value` lines for standard output.
    pub fn metric_lines(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Some(v) = &self.verification {
            out.push(format!("eer={}", fmt_rate(v.eer)));
            for t in &v.tar_at_far {
                out.push(format!("tar@far={}={}", t.far, fmt_rate(t.tar)));
                if t.unreachable {
                    out.push(format!("far_unreachable={}", t.far));
                }
            }
        }
        if let Some(k) = &self.kfold {
            out.push(format!("eer_mean={}", fmt_rate(k.mean)));
            out.push(format!("eer_std={}", fmt_rate(k.std)));
        }
        if let Some(r) = &self.rank {
            for (k, acc) in &r.accuracy {
                out.push(format!("rank{}={}", k, fmt_rate(*acc)));
            }
            if r.probes_excluded > 0 {
                out.push(format!("probes_excluded={}", r.probes_excluded));
            }
        }
        out
    }

    /// Full text report with `[section]` headers.
    pub fn render(&self) -> String {
        let mut s = String::new();
        if let Some(v) = &self.verification {
            let _ = writeln!(s, "[verification]");
            let _ = writeln!(s, "pairs_same={}", v.roc.positives);
            let _ = writeln!(s, "pairs_not_same={}", v.roc.negatives);
            let _ = writeln!(s, "eer={}", v.eer);
            let _ = writeln!(s, "eer_threshold={}", v.eer_threshold);
            let _ = writeln!(s, "\n[tar_at_far]");
            for t in &v.tar_at_far {
                let _ = writeln!(s, "far={} tar={} unreachable={}", t.far, t.tar, t.unreachable);
            }
            if let Some(h) = &v.heatmap {
                let _ = writeln!(s, "\n[yaw_heatmap]");
                let _ = writeln!(s, "threshold={}", h.threshold);
                let edges: Vec<String> = h.edges.iter().map(|e| format!("{}", e.to_degrees())).collect();
                let _ = writeln!(s, "edges_deg={}", edges.join(","));
                let _ = writeln!(s, "missing_yaw={}", h.missing_yaw);
            }
            s.push('\n');
        }
        if let Some(k) = &self.kfold {
            let _ = writeln!(s, "[kfold]");
            for (i, e) in k.fold_eers.iter().enumerate() {
                let _ = writeln!(s, "fold{i}_eer={e}");
            }
            let _ = writeln!(s, "eer_mean={}", k.mean);
            let _ = writeln!(s, "eer_std={}", k.std);
            s.push('\n');
        }
        if let Some(r) = &self.rank {
            let _ = writeln!(s, "[identification]");
            let _ = writeln!(s, "probes_used={}", r.probes_used);
            let _ = writeln!(s, "probes_excluded={}", r.probes_excluded);
            for (k, acc) in &r.accuracy {
                let _ = writeln!(s, "rank{k}={acc}");
            }
            s.push('\n');
        }
        s
    }
}

/// `threshold,fpr,tpr` rows.
pub fn roc_csv(roc: &Roc) -> String {
    let mut s = String::from("threshold,fpr,tpr\n");
    for p in &roc.points {
        let _ = writeln!(s, "{},{},{}", p.threshold, p.fpr, p.tpr);
    }
    s
}

/// Square grid with yaw-bin labels; empty cells are written as `NaN`.
pub fn grid_csv(edges: &[f64], grid: &[Vec<Option<f64>>]) -> String {
    let labels: Vec<String> = edges
        .windows(2)
        .map(|w| format!("{}-{}", w[0].to_degrees().round(), w[1].to_degrees().round()))
        .collect();
    let mut s = format!("yaw_deg,{}\n", labels.join(","));
    for (label, row) in labels.iter().zip(grid) {
        let cells: Vec<String> = row
            .iter()
            .map(|c| c.map_or_else(|| "NaN".to_string(), |v| v.to_string()))
            .collect();
        let _ = writeln!(s, "{label},{}", cells.join(","));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::DEFAULT_YAW_BIN_EDGES_DEG;

    fn sp(score: f64, same: bool) -> ScoredPair {
        ScoredPair {
            id1: "a".into(),
            id2: "b".into(),
            score,
            same,
            yaw1: Some(0.1),
            yaw2: Some(1.2),
        }
    }

    #[test]
    fn separable_metric_lines() {
        let pairs = vec![sp(0.9, true), sp(0.8, true), sp(0.2, false), sp(0.3, false)];
        let edges: Vec<f64> = DEFAULT_YAW_BIN_EDGES_DEG.iter().map(|d| d.to_radians()).collect();
        let v = VerificationReport::compute(&pairs, &[0.01], false, &edges).unwrap();
        let report = EvalReport {
            verification: Some(v),
            ..Default::default()
        };
        let lines = report.metric_lines();
        assert_eq!(lines[0], "eer=0.0000");
        assert_eq!(lines[1], "tar@far=0.01=1.0000");
        let h = report.verification.as_ref().unwrap().heatmap.as_ref().unwrap();
        assert_eq!(h.total().false_positives + h.total().false_negatives, 0);
        assert!(report.render().contains("[verification]"));
    }

    #[test]
    fn csv_shapes() {
        let pairs = vec![sp(0.9, true), sp(0.2, false)];
        let roc = compute_roc(&pairs).unwrap();
        let csv = roc_csv(&roc);
        assert_eq!(csv.lines().count(), 1 + roc.points.len());
        assert!(csv.lines().nth(1).unwrap().starts_with("inf,"));
        let g = grid_csv(&[0.0, 0.5, 1.0], &[vec![Some(0.5), None], vec![None, Some(0.0)]]);
        assert_eq!(g.lines().nth(1).unwrap(), "0-29,0.5,NaN");
    }
}
