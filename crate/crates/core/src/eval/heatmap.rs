use super::{EvalError, ScoredPair};

/// Default yaw bin edges in degrees.
pub const DEFAULT_YAW_BIN_EDGES_DEG: [f64; 7] = [0.0, 15.0, 30.0, 45.0, 60.0, 75.0, 90.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct HeatmapCell {
    pub positives: usize,
    pub false_negatives: usize,
    pub negatives: usize,
    pub false_positives: usize,
}

impl HeatmapCell {
    /// `None` when the cell holds no not-same pairs.
    pub fn fpr(&self) -> Option<f64> {
        (self.negatives > 0).then(|| self.false_positives as f64 / self.negatives as f64)
    }

    /// `None` when the cell holds no same pairs.
    pub fn fnr(&self) -> Option<f64> {
        (self.positives > 0).then(|| self.false_negatives as f64 / self.positives as f64)
    }
}

/// Error counts binned by the pair's two absolute yaws.
///
/// A pair lands in `cells[i][j]` with `i <= j`, where `i` is the bin of the
/// smaller absolute yaw; cells below the diagonal stay empty.
#[derive(Debug, Clone, PartialEq)]
pub struct YawHeatmap {
    pub edges: Vec<f64>,
    pub threshold: f64,
    pub cells: Vec<Vec<HeatmapCell>>,
    /// Pairs skipped for lacking a yaw on either side.
    pub missing_yaw: usize,
}

impl YawHeatmap {
    pub fn bins(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn fpr_grid(&self) -> Vec<Vec<Option<f64>>> {
        self.cells.iter().map(|r| r.iter().map(HeatmapCell::fpr).collect()).collect()
    }

    pub fn fnr_grid(&self) -> Vec<Vec<Option<f64>>> {
        self.cells.iter().map(|r| r.iter().map(HeatmapCell::fnr).collect()).collect()
    }

    pub fn total(&self) -> HeatmapCell {
        self.cells.iter().flatten().fold(HeatmapCell::default(), |acc, c| HeatmapCell {
            positives: acc.positives + c.positives,
            false_negatives: acc.false_negatives + c.false_negatives,
            negatives: acc.negatives + c.negatives,
            false_positives: acc.false_positives + c.false_positives,
        })
    }
}

/// Bin index of an absolute yaw. Values past the last edge go to the last bin.
fn bin_of(edges: &[f64], v: f64) -> usize {
    let n = edges.len() - 1;
    edges[1..n].iter().take_while(|e| v >= **e).count()
}

/// FPR/FNR per yaw cell at a fixed threshold (edges in radians).
pub fn yaw_error_heatmap(pairs: &[ScoredPair], threshold: f64, edges: &[f64]) -> Result<YawHeatmap, EvalError> {
    if edges.len() < 2 {
        return Err(EvalError::InvalidBins("need at least two bin edges".into()));
    }
    if edges.iter().any(|e| !e.is_finite()) || edges[0] < 0.0 || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(EvalError::InvalidBins(
            "bin edges must be finite, non-negative and strictly increasing".into(),
        ));
    }
    let n = edges.len() - 1;
    let mut cells = vec![vec![HeatmapCell::default(); n]; n];
    let mut missing = 0;
    for p in pairs {
        let (Some(y1), Some(y2)) = (p.yaw1.filter(|y| y.is_finite()), p.yaw2.filter(|y| y.is_finite())) else {
            missing += 1;
            continue;
        };
        let (a, b) = (bin_of(edges, y1.abs()), bin_of(edges, y2.abs()));
        let cell = &mut cells[a.min(b)][a.max(b)];
        let accepted = p.score >= threshold;
        if p.same {
            cell.positives += 1;
            cell.false_negatives += usize::from(!accepted);
        } else {
            cell.negatives += 1;
            cell.false_positives += usize::from(accepted);
        }
    }
    if missing == pairs.len() && !pairs.is_empty() {
        return Err(EvalError::MissingYaw);
    }
    Ok(YawHeatmap {
        edges: edges.to_vec(),
        threshold,
        cells,
        missing_yaw: missing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn deg_edges() -> Vec<f64> {
        DEFAULT_YAW_BIN_EDGES_DEG.iter().map(|d| d.to_radians()).collect()
    }

    fn sp(score: f64, same: bool, y1: f64, y2: f64) -> ScoredPair {
        ScoredPair {
            id1: String::new(),
            id2: String::new(),
            score,
            same,
            yaw1: Some(y1.to_radians()),
            yaw2: Some(y2.to_radians()),
        }
    }

    #[test]
    fn separated_single_cell() {
        let pairs = vec![sp(0.9, true, 5.0, 10.0), sp(0.1, false, 3.0, -7.0)];
        let h = yaw_error_heatmap(&pairs, 0.5, &deg_edges()).unwrap();
        assert_eq!(h.cells[0][0].fpr(), Some(0.0));
        assert_eq!(h.cells[0][0].fnr(), Some(0.0));
        assert_eq!(h.cells[0][1].fpr(), None);
    }

    #[test]
    fn two_false_positives_of_ten() {
        let mut pairs: Vec<_> = (0..8).map(|_| sp(0.2, false, 70.0, -80.0)).collect();
        pairs.push(sp(0.8, false, 62.0, 88.0));
        pairs.push(sp(0.6, false, -65.0, 71.0));
        let h = yaw_error_heatmap(&pairs, 0.5, &[0.0, 60f64.to_radians(), 90f64.to_radians()]).unwrap();
        assert_eq!(h.cells[1][1].fpr(), Some(0.2));
    }

    #[test]
    fn pair_order_does_not_matter_and_upper_triangle_only() {
        let h = yaw_error_heatmap(&[sp(0.9, true, 80.0, 5.0)], 0.5, &deg_edges()).unwrap();
        assert_eq!(h.cells[0][5].positives, 1);
        assert_eq!(h.cells[5][0].positives, 0);
        // beyond the last edge: last bin
        let h = yaw_error_heatmap(&[sp(0.9, true, 120.0, 90.0)], 0.5, &deg_edges()).unwrap();
        assert_eq!(h.cells[5][5].positives, 1);
    }

    #[test]
    fn missing_yaw_counted() {
        let mut a = sp(0.4, true, 10.0, 20.0);
        let mut b = a.clone();
        b.yaw2 = None;
        let h = yaw_error_heatmap(&[a.clone(), b.clone()], 0.5, &deg_edges()).unwrap();
        assert_eq!(h.missing_yaw, 1);
        assert_eq!(h.total().false_negatives, 1);
        a.yaw1 = None;
        assert!(matches!(yaw_error_heatmap(&[a, b], 0.5, &deg_edges()), Err(EvalError::MissingYaw)));
    }

    #[test]
    fn bad_edges() {
        assert!(yaw_error_heatmap(&[], 0.5, &[0.0]).is_err());
        assert!(yaw_error_heatmap(&[], 0.5, &[0.0, 0.5, 0.5]).is_err());
        assert!(yaw_error_heatmap(&[], 0.5, &[-0.1, 0.5]).is_err());
    }
}
