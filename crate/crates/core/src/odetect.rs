//! Adaptive pruning of noisy transitions.
//!
//! Each row of the transition matrix is ranked in descending order. The first
//! differences of the ranked probabilities form a head (same identity, steep
//! and irregular) followed by a flat tail. Sliding a window from the tail
//! towards the head, the window mean is scored against the mean and standard
//! deviation of the remaining tail; the window center with the largest
//! z-score is the switch point and every transition below it is dropped.
//!
//! Positions and indices in [`SwitchPointReport`] are 1-based, matching the
//! ranked order (`q_star = 1` is the top neighbor).

use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};

use crate::corpus::LabelSet;
use crate::error::{Error, Result};
use crate::knngraph::SparseRowGraph;

pub const DEFAULT_WINDOW: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OdMode {
    Adaptive,
    /// Drop edges whose original similarity is below the threshold.
    FixedThreshold(f64),
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdConfig {
    pub window: usize,
    pub mode: OdMode,
}

impl Default for OdConfig {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            mode: OdMode::Adaptive,
        }
    }
}

impl OdConfig {
    pub fn adaptive(window: usize) -> Self {
        Self {
            window,
            mode: OdMode::Adaptive,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window < 2 {
            return Err(Error::param(format!(
                "window must be at least 2, got {}",
                self.window
            )));
        }
        if let OdMode::FixedThreshold(delta) = self.mode {
            if !(delta > 0.0 && delta < 1.0) {
                return Err(Error::param(format!(
                    "similarity threshold must lie in (0, 1), got {delta}"
                )));
            }
        }
        Ok(())
    }
}

/// One row of the transition matrix sorted by descending probability.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedRow {
    pub node: usize,
    pub order: Vec<usize>,
    pub probs: Vec<f64>,
    pub diffs: Vec<f64>,
}

impl RankedRow {
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// Ranks the nonzero entries of row `i`; equal probabilities keep the
/// smaller neighbor first.
pub fn rank_row(p: &SparseRowGraph, i: usize) -> RankedRow {
    let (cols, ws) = p.row(i);
    let mut pairs: Vec<(usize, f64)> = cols.iter().copied().zip(ws.iter().copied()).collect();
    pairs.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let (order, probs): (Vec<usize>, Vec<f64>) = pairs.into_iter().unzip();
    let diffs = probs.windows(2).map(|w| w[0] - w[1]).collect();
    RankedRow {
        node: i,
        order,
        probs,
        diffs,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SwitchPointReport {
    pub node: usize,
    /// 1-based position of the switch; 0 when skipped.
    pub q_star: usize,
    /// The `q_star`-th ranked probability (1-based); entries at or above it
    /// survive. 0 when skipped.
    pub threshold: f64,
    /// z-score per ranked position (index `q - 1`). Positions no window is
    /// centered on hold 0; an infinite score serializes as `null`.
    #[serde(serialize_with = "serialize_scores")]
    pub zscores: Vec<f64>,
    pub skipped: bool,
}

fn serialize_scores<S: Serializer>(scores: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(scores.iter().map(|z| z.is_finite().then_some(*z)))
}

fn window_offset(window: usize) -> usize {
    window.div_ceil(2)
}

/// Locates the switch point of a ranked row.
///
/// With `K` ranked entries and 1-based differences `d(1..K-1)`, the window
/// starting at `j` covers `d(j..j+w-1)` and the tail covers `d(j..K-2)`. The
/// loop runs `j = K-w-1 ..= 1` and scores candidate `j + ceil(w/2)`. Rows with
/// fewer than `w + 2` entries are skipped.
pub fn detect_switch_point(row: &RankedRow, cfg: &OdConfig) -> Result<SwitchPointReport> {
    if cfg.mode != OdMode::Adaptive {
        return Err(Error::param(
            "switch-point detection requires adaptive mode",
        ));
    }
    cfg.validate()?;
    Ok(switch_point(row, cfg.window))
}

fn switch_point(row: &RankedRow, w: usize) -> SwitchPointReport {
    let k = row.probs.len();
    let mut report = SwitchPointReport {
        node: row.node,
        q_star: 0,
        threshold: 0.0,
        zscores: vec![0.0; k],
        skipped: true,
    };
    if k < w + 2 {
        return report;
    }
    let d = &row.diffs;
    let half = window_offset(w);

    // Tail statistics over d(j..K-2) are accumulated as j decreases (Welford);
    // the window sum slides along with it.
    let last = k - w - 1;
    let mut tail_n = 0usize;
    let mut tail_mean = 0.0f64;
    let mut tail_m2 = 0.0f64;
    // 0-based: d(t) lives at d[t - 1]; seed the tail with d(last+1..K-2).
    for t in (last + 1..=k - 2).rev() {
        welford_push(&mut tail_n, &mut tail_mean, &mut tail_m2, d[t - 1]);
    }
    let mut window_sum: f64 = d[last - 1..last - 1 + w].iter().sum();

    let mut best_q = 0usize;
    let mut best_z = f64::NEG_INFINITY;
    for j in (1..=last).rev() {
        if j < last {
            window_sum += d[j - 1] - d[j - 1 + w];
        }
        welford_push(&mut tail_n, &mut tail_mean, &mut tail_m2, d[j - 1]);
        let window_mean = window_sum / w as f64;
        let sigma = (tail_m2 / tail_n as f64).sqrt();
        let z = zscore(window_mean, tail_mean, sigma);
        let q = j + half;
        report.zscores[q - 1] = z;
        // Strict comparison while q decreases keeps the larger q on ties.
        if z > best_z {
            best_z = z;
            best_q = q;
        }
    }
    report.q_star = best_q;
    report.threshold = row.probs[best_q - 1];
    report.skipped = false;
    report
}

fn welford_push(n: &mut usize, mean: &mut f64, m2: &mut f64, x: f64) {
    *n += 1;
    let delta = x - *mean;
    *mean += delta / *n as f64;
    *m2 += delta * (x - *mean);
}

pub(crate) fn zscore(window_mean: f64, tail_mean: f64, sigma: f64) -> f64 {
    let gap = (window_mean - tail_mean).abs();
    if sigma > 0.0 {
        gap / sigma
    } else if gap > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

/// Prunes the transition matrix according to `cfg.mode` and re-normalizes
/// surviving rows. `affinity` is the pre-normalization similarity graph and
/// is required by the fixed-threshold mode. Reports are returned for the
/// adaptive mode only.
pub fn adjust_transitions(
    p: &SparseRowGraph,
    cfg: &OdConfig,
    affinity: Option<&SparseRowGraph>,
) -> Result<(SparseRowGraph, Vec<SwitchPointReport>)> {
    if !p.is_stochastic() {
        return Err(Error::param("transition matrix must be row-normalized"));
    }
    cfg.validate()?;
    match cfg.mode {
        OdMode::None => Ok((p.clone(), Vec::new())),
        OdMode::Adaptive => {
            let (rows, reports): (Vec<_>, Vec<_>) = (0..p.node_count())
                .into_par_iter()
                .map(|i| {
                    let report = switch_point(&rank_row(p, i), cfg.window);
                    let (cols, ws) = p.row(i);
                    let row = if report.skipped {
                        cols.iter().copied().zip(ws.iter().copied()).collect()
                    } else {
                        prune_row(cols, ws, |_, w| w >= report.threshold)
                    };
                    (row, report)
                })
                .unzip();
            Ok((
                SparseRowGraph::from_rows(p.node_count(), rows, true)?,
                reports,
            ))
        }
        OdMode::FixedThreshold(delta) => {
            let affinity = affinity.ok_or_else(|| {
                Error::param("fixed-threshold pruning needs the raw similarity graph")
            })?;
            if affinity.node_count() != p.node_count() {
                return Err(Error::LengthMismatch {
                    left: affinity.node_count(),
                    right: p.node_count(),
                });
            }
            let rows = (0..p.node_count())
                .into_par_iter()
                .map(|i| {
                    let (cols, ws) = p.row(i);
                    let mut missing = None;
                    let row = prune_row(cols, ws, |j, _| match affinity.weight(i, j) {
                        Some(s) => s >= delta,
                        None => {
                            missing = Some(j);
                            false
                        }
                    });
                    match missing {
                        Some(j) => Err(Error::Inconsistent(format!(
                            "edge {i}->{j} has no similarity in the affinity graph"
                        ))),
                        None => Ok(row),
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((
                SparseRowGraph::from_rows(p.node_count(), rows, true)?,
                Vec::new(),
            ))
        }
    }
}

/// Keeps the entries accepted by `keep` and rescales them to sum to one.
pub(crate) fn prune_row(
    cols: &[usize],
    ws: &[f64],
    mut keep: impl FnMut(usize, f64) -> bool,
) -> Vec<(usize, f64)> {
    let mut row: Vec<(usize, f64)> = cols
        .iter()
        .zip(ws)
        .filter(|&(&j, &w)| keep(j, w))
        .map(|(&j, &w)| (j, w))
        .collect();
    let sum: f64 = row.iter().map(|e| e.1).sum();
    if sum > 0.0 {
        row.iter_mut().for_each(|e| e.1 /= sum);
    }
    row
}

/// Precision and recall of same-identity neighbors among the first `t`
/// ranked entries. Recall is 1 when the node has no other same-identity
/// member.
pub fn precision_recall_at(row: &RankedRow, truth: &LabelSet, t: usize) -> Result<(f64, f64)> {
    if t == 0 || t > row.len() {
        return Err(Error::param(format!(
            "t must lie in 1..={}, got {t}",
            row.len()
        )));
    }
    let labels = truth.labels();
    if row.node >= labels.len() || row.order.iter().any(|&j| j >= labels.len()) {
        return Err(Error::Inconsistent("labels do not cover the row".into()));
    }
    let own = &labels[row.node];
    let hits = row.order[..t]
        .iter()
        .filter(|&&j| &labels[j] == own)
        .count();
    let total = labels.iter().filter(|l| *l == own).count() - 1;
    let precision = hits as f64 / t as f64;
    let recall = if total == 0 {
        1.0
    } else {
        hits as f64 / total as f64
    };
    Ok((precision, recall))
}

/// Precision and recall for every `t` in `1..=len`, in one pass.
pub fn precision_recall_curve(row: &RankedRow, truth: &LabelSet) -> Result<Vec<(f64, f64)>> {
    if row.is_empty() {
        return Ok(Vec::new());
    }
    let labels = truth.labels();
    if row.node >= labels.len() || row.order.iter().any(|&j| j >= labels.len()) {
        return Err(Error::Inconsistent("labels do not cover the row".into()));
    }
    let own = &labels[row.node];
    let total = labels.iter().filter(|l| *l == own).count() - 1;
    let mut hits = 0usize;
    Ok(row
        .order
        .iter()
        .enumerate()
        .map(|(i, &j)| {
            if &labels[j] == own {
                hits += 1;
            }
            let recall = if total == 0 {
                1.0
            } else {
                hits as f64 / total as f64
            };
            (hits as f64 / (i + 1) as f64, recall)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ranked(probs: &[f64]) -> RankedRow {
        RankedRow {
            node: 0,
            order: (1..=probs.len()).collect(),
            probs: probs.to_vec(),
            diffs: probs.windows(2).map(|w| w[0] - w[1]).collect(),
        }
    }

    fn stochastic(rows: Vec<Vec<(usize, f64)>>) -> SparseRowGraph {
        let n = rows.len();
        SparseRowGraph::from_rows(n, rows, true).unwrap()
    }

    #[test]
    fn rank_orders_descending() {
        let mut rows = vec![vec![]; 8];
        rows[0] = vec![(3, 0.2), (1, 0.5), (7, 0.3)];
        let r = rank_row(&stochastic(rows), 0);
        assert_eq!(r.order, vec![1, 7, 3]);
        assert_eq!(r.probs, vec![0.5, 0.3, 0.2]);
        assert!((r.diffs[0] - 0.2).abs() < 1e-15 && (r.diffs[1] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn rank_uniform_row_and_ties() {
        let mut rows = vec![vec![]; 5];
        rows[0] = vec![(4, 0.25), (2, 0.25), (1, 0.25), (3, 0.25)];
        let r = rank_row(&stochastic(rows), 0);
        assert_eq!(r.order, vec![1, 2, 3, 4]);
        assert_eq!(r.diffs, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn empty_row_ranks_empty() {
        let r = rank_row(&stochastic(vec![vec![], vec![(0, 1.0)]]), 0);
        assert!(r.is_empty() && r.diffs.is_empty());
    }

    #[test]
    fn short_row_is_skipped() {
        let cfg = OdConfig::adaptive(4);
        let rep = detect_switch_point(&ranked(&[0.3, 0.25, 0.2, 0.15, 0.1]), &cfg).unwrap();
        assert!(rep.skipped);
        assert_eq!(rep.q_star, 0);
    }

    #[test]
    fn flat_row_picks_largest_candidate() {
        let k = 30;
        let w = 4;
        let rep =
            detect_switch_point(&ranked(&vec![1.0 / k as f64; k]), &OdConfig::adaptive(w)).unwrap();
        assert!(!rep.skipped);
        assert!(rep.zscores.iter().all(|&z| z == 0.0));
        assert_eq!(rep.q_star, k - w - 1 + 2);
    }

    #[test]
    fn minimal_length_row_has_one_candidate() {
        let w = 4;
        let probs: Vec<f64> = (0..w + 2).map(|i| 0.3 - 0.04 * i as f64).collect();
        let rep = detect_switch_point(&ranked(&probs), &OdConfig::adaptive(w)).unwrap();
        assert!(!rep.skipped);
        assert_eq!(rep.q_star, 1 + 2);
    }

    #[test]
    fn zero_variance_tail_is_infinite() {
        assert_eq!(zscore(0.5, 0.1, 0.0), f64::INFINITY);
        assert_eq!(zscore(0.1, 0.1, 0.0), 0.0);
        assert!((zscore(0.3, 0.1, 0.1) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn infinite_scores_serialize_as_null() {
        let rep = SwitchPointReport {
            node: 0,
            q_star: 1,
            threshold: 0.5,
            zscores: vec![0.0, f64::INFINITY],
            skipped: false,
        };
        let v = serde_json::to_value(&rep).unwrap();
        assert_eq!(v["zscores"], serde_json::json!([0.0, null]));
    }

    #[test]
    fn detect_rejects_other_modes() {
        let cfg = OdConfig {
            window: 4,
            mode: OdMode::None,
        };
        assert!(detect_switch_point(&ranked(&[0.5, 0.5]), &cfg).is_err());
        assert!(OdConfig::adaptive(1).validate().is_err());
    }

    #[test]
    fn prune_renormalizes_survivors() {
        let row = prune_row(&[1, 2, 3], &[0.5, 0.3, 0.2], |_, w| w >= 0.3);
        assert_eq!(row.len(), 2);
        assert_eq!((row[0].0, row[1].0), (1, 2));
        assert!((row[0].1 - 0.625).abs() < 1e-15 && (row[1].1 - 0.375).abs() < 1e-15);
    }

    #[test]
    fn none_mode_is_identity() {
        let p = stochastic(vec![vec![(1, 0.4), (2, 0.6)], vec![(0, 1.0)], vec![]]);
        let cfg = OdConfig {
            window: 20,
            mode: OdMode::None,
        };
        let (q, reports) = adjust_transitions(&p, &cfg, None).unwrap();
        assert_eq!(q, p);
        assert!(reports.is_empty());
    }

    #[test]
    fn fixed_threshold_needs_affinity() {
        let a = SparseRowGraph::from_rows(
            3,
            vec![vec![(1, 0.8), (2, 0.2)], vec![(0, 0.9)], vec![]],
            false,
        )
        .unwrap();
        let p = crate::knngraph::row_normalize(&a).unwrap();
        let cfg = OdConfig {
            window: 20,
            mode: OdMode::FixedThreshold(0.5),
        };
        assert!(adjust_transitions(&p, &cfg, None).is_err());
        let (q, _) = adjust_transitions(&p, &cfg, Some(&a)).unwrap();
        assert_eq!(
            q.edges().collect::<Vec<_>>(),
            vec![(0, 1, 1.0), (1, 0, 1.0)]
        );
    }

    #[test]
    fn precision_recall_examples() {
        let labels: Vec<String> = ["a", "a", "a", "a", "a", "a", "a", "a", "a", "b", "b"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let truth = LabelSet::new(labels).unwrap();
        let row = RankedRow {
            node: 0,
            order: vec![1, 2, 3, 4, 9, 10],
            probs: vec![0.3, 0.2, 0.2, 0.1, 0.1, 0.1],
            diffs: vec![0.1, 0.0, 0.1, 0.0, 0.0],
        };
        assert_eq!(precision_recall_at(&row, &truth, 4).unwrap(), (1.0, 0.5));
        let wrong = RankedRow {
            order: vec![9, 1],
            ..row.clone()
        };
        assert_eq!(precision_recall_at(&wrong, &truth, 1).unwrap(), (0.0, 0.0));
        assert!(precision_recall_at(&row, &truth, 0).is_err());
        assert!(precision_recall_at(&row, &truth, 7).is_err());
    }
}
