//! Clustering quality: pairwise and BCubed F-scores, the identity F-score
//! over well-matched cluster/identity pairs, and cluster-count ratios.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use crate::corpus::LabelSet;
use crate::error::{Error, Result};
use crate::mapeq::Partition;

pub const DEFAULT_THETAS: [f64; 2] = [0.5, 0.9];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub f_pairwise: f64,
    pub f_bcubed: f64,
    /// Identity F-score keyed by threshold.
    pub f_identity: BTreeMap<String, f64>,
    pub r_identity_pct: f64,
    pub r_singleton_pct: f64,
    pub num_clusters: usize,
    pub num_true: usize,
    pub num_bad_singletons: usize,
}

/// Overlap counts between predicted clusters and true identities.
struct Contingency {
    cells: Vec<(usize, usize, usize)>,
    cluster_sizes: Vec<usize>,
    identity_sizes: Vec<usize>,
    total: usize,
}

impl Contingency {
    fn new(pred: &Partition, truth: &LabelSet) -> Result<Self> {
        if pred.len() != truth.count() {
            return Err(Error::LengthMismatch {
                left: pred.len(),
                right: truth.count(),
            });
        }
        let (ids, num_true) = truth.dense_ids();
        let mut counts: HashMap<(usize, usize), usize> = HashMap::new();
        let mut cluster_sizes = vec![0; pred.num_clusters()];
        let mut identity_sizes = vec![0; num_true];
        for (&c, &t) in pred.assignments().iter().zip(&ids) {
            *counts.entry((c, t)).or_default() += 1;
            cluster_sizes[c] += 1;
            identity_sizes[t] += 1;
        }
        let mut cells: Vec<_> = counts.into_iter().map(|((c, t), n)| (c, t, n)).collect();
        cells.sort_unstable();
        Ok(Self {
            cells,
            cluster_sizes,
            identity_sizes,
            total: pred.len(),
        })
    }
}

fn pairs(n: usize) -> f64 {
    let n = n as f64;
    n * (n - 1.0) / 2.0
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

pub fn pairwise_fscore(pred: &Partition, truth: &LabelSet) -> Result<f64> {
    let c = Contingency::new(pred, truth)?;
    let both: f64 = c.cells.iter().map(|&(_, _, n)| pairs(n)).sum();
    let predicted: f64 = c.cluster_sizes.iter().map(|&n| pairs(n)).sum();
    let actual: f64 = c.identity_sizes.iter().map(|&n| pairs(n)).sum();
    Ok(harmonic(ratio(both, predicted), ratio(both, actual)))
}

pub fn bcubed_fscore(pred: &Partition, truth: &LabelSet) -> Result<f64> {
    let c = Contingency::new(pred, truth)?;
    let (mut precision, mut recall) = (0.0, 0.0);
    for &(ci, ti, n) in &c.cells {
        let n = n as f64;
        precision += n * n / c.cluster_sizes[ci] as f64;
        recall += n * n / c.identity_sizes[ti] as f64;
    }
    let total = c.total as f64;
    Ok(harmonic(precision / total, recall / total))
}

fn check_theta(theta: f64) -> Result<()> {
    if !(0.5..1.0).contains(&theta) {
        return Err(Error::param(format!(
            "theta must lie in [0.5, 1), got {theta}"
        )));
    }
    Ok(())
}

fn identity_from(c: &Contingency, theta: f64) -> f64 {
    let mut cluster_used = vec![false; c.cluster_sizes.len()];
    let mut identity_used = vec![false; c.identity_sizes.len()];
    let mut matched = 0usize;
    for &(ci, ti, n) in &c.cells {
        let pre = n as f64 / c.cluster_sizes[ci] as f64;
        let rec = n as f64 / c.identity_sizes[ti] as f64;
        if pre > theta && rec > theta {
            // Majority overlap on both sides makes each side match at most once.
            assert!(
                !cluster_used[ci] && !identity_used[ti],
                "duplicate optimal pair at theta {theta}"
            );
            cluster_used[ci] = true;
            identity_used[ti] = true;
            matched += 1;
        }
    }
    let matched = matched as f64;
    harmonic(
        ratio(matched, c.cluster_sizes.len() as f64),
        ratio(matched, c.identity_sizes.len() as f64),
    )
}

/// Identity F-score: cluster/identity pairs whose overlap exceeds `theta` of
/// both the cluster and the identity count as matches.
pub fn identity_fscore(pred: &Partition, truth: &LabelSet, theta: f64) -> Result<f64> {
    check_theta(theta)?;
    Ok(identity_from(&Contingency::new(pred, truth)?, theta))
}

/// Returns `(R_#I, R_#S, N_S)` with both ratios in percent. A predicted
/// singleton counts against `N_S` only when its identity has other images.
pub fn ratio_metrics(pred: &Partition, truth: &LabelSet) -> Result<(f64, f64, usize)> {
    let c = Contingency::new(pred, truth)?;
    let bad = bad_singletons(&c);
    let num_true = c.identity_sizes.len() as f64;
    Ok((
        100.0 * c.cluster_sizes.len() as f64 / num_true,
        100.0 * bad as f64 / num_true,
        bad,
    ))
}

fn bad_singletons(c: &Contingency) -> usize {
    c.cells
        .iter()
        .filter(|&&(ci, ti, _)| c.cluster_sizes[ci] == 1 && c.identity_sizes[ti] >= 2)
        .count()
}

pub fn evaluate(pred: &Partition, truth: &LabelSet, thetas: &[f64]) -> Result<MetricsReport> {
    for &t in thetas {
        check_theta(t)?;
    }
    let c = Contingency::new(pred, truth)?;
    let f_identity = thetas
        .iter()
        .map(|&t| (t.to_string(), identity_from(&c, t)))
        .collect();
    let (r_identity_pct, r_singleton_pct, num_bad_singletons) = ratio_metrics(pred, truth)?;
    Ok(MetricsReport {
        f_pairwise: pairwise_fscore(pred, truth)?,
        f_bcubed: bcubed_fscore(pred, truth)?,
        f_identity,
        r_identity_pct,
        r_singleton_pct,
        num_clusters: c.cluster_sizes.len(),
        num_true: c.identity_sizes.len(),
        num_bad_singletons,
    })
}
