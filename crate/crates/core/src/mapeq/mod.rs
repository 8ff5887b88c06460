//! Two-level map equation: stationary flow, codelength evaluation and
//! greedy minimization over partitions.
//!
//! Codelengths are in bits. Teleportation shapes the visit rates but is not
//! recorded as movement between modules, so exit flows use link flow only.

mod flow;
mod network;
mod objective;
mod optimizer;

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use flow::{compute_flow, stationary_distribution, teleport_step, Stationary};
pub use objective::{map_equation_direct, map_equation_fast, move_delta};
pub use optimizer::{optimize_partition, Optimized};

/// `x * log2(x)`, with `plogp(0) = 0`.
#[inline]
pub fn plogp(x: f64) -> f64 {
    if x > 0.0 {
        x * x.log2()
    } else {
        0.0
    }
}

/// Node-to-cluster assignment with ids contiguous from 0.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Partition {
    assignments: Vec<usize>,
    num_clusters: usize,
}

impl Partition {
    /// Accepts arbitrary cluster ids and relabels them by first occurrence.
    pub fn from_assignments<I: AsRef<[usize]>>(raw: I) -> Self {
        let raw = raw.as_ref();
        let mut ids: HashMap<usize, usize> = HashMap::new();
        let assignments = raw
            .iter()
            .map(|&c| {
                let next = ids.len();
                *ids.entry(c).or_insert(next)
            })
            .collect();
        Self {
            assignments,
            num_clusters: ids.len(),
        }
    }

    /// Accepts assignments that already use every id in `0..N`.
    pub fn new(assignments: Vec<usize>) -> Result<Self> {
        let num_clusters = assignments.iter().max().map_or(0, |&m| m + 1);
        let mut seen = vec![false; num_clusters];
        for &c in &assignments {
            seen[c] = true;
        }
        if let Some(gap) = seen.iter().position(|&s| !s) {
            return Err(Error::Inconsistent(format!("cluster id {gap} is unused")));
        }
        Ok(Self {
            assignments,
            num_clusters,
        })
    }

    pub fn singletons(n: usize) -> Self {
        Self {
            assignments: (0..n).collect(),
            num_clusters: n,
        }
    }

    pub fn one_module(n: usize) -> Self {
        Self {
            assignments: vec![0; n],
            num_clusters: usize::from(n > 0),
        }
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn num_clusters(&self) -> usize {
        self.num_clusters
    }

    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    pub fn module_of(&self, node: usize) -> usize {
        self.assignments[node]
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.num_clusters];
        for &c in &self.assignments {
            sizes[c] += 1;
        }
        sizes
    }

    pub fn singleton_count(&self) -> usize {
        self.cluster_sizes().iter().filter(|&&s| s == 1).count()
    }

    /// `node_index\tcluster_id` per line.
    pub fn to_tsv(&self) -> String {
        let mut out = String::with_capacity(self.len() * 8);
        for (i, c) in self.assignments.iter().enumerate() {
            writeln!(out, "{i}\t{c}").expect("writing to a String");
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }
}

/// Parses partition TSV. Every node in `0..n` must appear exactly once;
/// cluster ids may be arbitrary and are relabeled by first occurrence in
/// node order.
pub fn parse_partition(text: &str) -> Result<Partition> {
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let bad = |msg: String| Error::Parse {
            line: i + 1,
            message: msg,
        };
        let (node, cluster) = line
            .split_once('\t')
            .ok_or_else(|| bad("expected node<TAB>cluster".into()))?;
        let node: usize = node
            .parse()
            .map_err(|_| bad(format!("invalid node index {node:?}")))?;
        let cluster: usize = cluster
            .parse()
            .map_err(|_| bad(format!("invalid cluster id {cluster:?}")))?;
        pairs.push((node, cluster, i + 1));
    }
    if pairs.is_empty() {
        return Err(Error::Empty("partition file"));
    }
    let n = pairs.len();
    let mut raw = vec![usize::MAX; n];
    for (node, cluster, line) in pairs {
        if node >= n {
            return Err(Error::Parse {
                line,
                message: format!("node index {node} out of range for {n} nodes"),
            });
        }
        if raw[node] != usize::MAX {
            return Err(Error::Parse {
                line,
                message: format!("node {node} assigned twice"),
            });
        }
        raw[node] = cluster;
    }
    Ok(Partition::from_assignments(raw))
}

pub fn load_partition(path: impl AsRef<Path>) -> Result<Partition> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_partition(&text)
}

/// Flow aggregates of a partition: per-module exit flow `q_i`, codebook
/// usage `p_i = q_i + sum of member visit rates`, and their totals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowStats {
    pub visit: Vec<f64>,
    pub module_exit: Vec<f64>,
    pub module_circ: Vec<f64>,
    pub total_exit: f64,
    pub teleport: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub teleport: f64,
    pub power_tol: f64,
    pub power_max_iter: usize,
    pub seed: u64,
    pub restarts: usize,
    pub max_outer_passes: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            teleport: 0.15,
            power_tol: 1e-12,
            power_max_iter: 10_000,
            seed: 0,
            restarts: 5,
            max_outer_passes: 50,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.teleport) {
            return Err(Error::param(format!(
                "teleport must lie in [0, 1), got {}",
                self.teleport
            )));
        }
        if self.power_tol.is_nan() || self.power_tol <= 0.0 {
            return Err(Error::param("power_tol must be positive"));
        }
        if self.restarts == 0 {
            return Err(Error::param("restarts must be at least 1"));
        }
        if self.max_outer_passes == 0 {
            return Err(Error::param("max_outer_passes must be at least 1"));
        }
        Ok(())
    }
}
