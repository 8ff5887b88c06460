use serde::Serialize;

use super::{FlowStats, Partition, SolverConfig};
use crate::error::{Error, Result};
use crate::knngraph::SparseRowGraph;

/// Stationary visit rates of the teleporting random walk.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Stationary {
    pub visit: Vec<f64>,
    pub teleport: f64,
    pub iterations: usize,
    /// L1 change of the final iteration.
    pub residual: f64,
}

/// One application of `p -> (1-t)(pP + dangling/n) + t/n`.
pub fn teleport_step(p: &SparseRowGraph, visit: &[f64], teleport: f64) -> Vec<f64> {
    let n = p.node_count();
    let mut next = vec![0.0; n];
    let mut dangling = 0.0;
    for (i, &v) in visit.iter().enumerate() {
        let (cols, ws) = p.row(i);
        if cols.is_empty() {
            dangling += v;
            continue;
        }
        for (&j, &w) in cols.iter().zip(ws) {
            next[j] += v * w;
        }
    }
    let base = ((1.0 - teleport) * dangling + teleport) / n as f64;
    for x in next.iter_mut() {
        *x = (1.0 - teleport) * *x + base;
    }
    next
}

/// Power iteration from the uniform vector until the L1 change drops to
/// `power_tol`.
pub fn stationary_distribution(p: &SparseRowGraph, cfg: &SolverConfig) -> Result<Stationary> {
    cfg.validate()?;
    if !p.is_stochastic() {
        return Err(Error::param("transition matrix must be row-normalized"));
    }
    let n = p.node_count();
    if n == 0 {
        return Err(Error::Empty("graph"));
    }
    let mut visit = vec![1.0 / n as f64; n];
    let mut residual = f64::INFINITY;
    for iteration in 1..=cfg.power_max_iter {
        let mut next = teleport_step(p, &visit, cfg.teleport);
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|x| *x /= total);
        residual = next.iter().zip(&visit).map(|(a, b)| (a - b).abs()).sum();
        visit = next;
        if residual <= cfg.power_tol {
            return Ok(Stationary {
                visit,
                teleport: cfg.teleport,
                iterations: iteration,
                residual,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: cfg.power_max_iter,
        residual,
    })
}

/// Aggregates per-module exit and usage rates for `partition`.
pub fn compute_flow(
    p: &SparseRowGraph,
    partition: &Partition,
    stationary: &Stationary,
) -> Result<FlowStats> {
    let n = p.node_count();
    if partition.len() != n {
        return Err(Error::LengthMismatch {
            left: partition.len(),
            right: n,
        });
    }
    if stationary.visit.len() != n {
        return Err(Error::LengthMismatch {
            left: stationary.visit.len(),
            right: n,
        });
    }
    let m = partition.num_clusters();
    let mut module_exit = vec![0.0; m];
    let mut module_visit = vec![0.0; m];
    for (alpha, &v) in stationary.visit.iter().enumerate() {
        let home = partition.module_of(alpha);
        module_visit[home] += v;
        let (cols, ws) = p.row(alpha);
        for (&beta, &w) in cols.iter().zip(ws) {
            if partition.module_of(beta) != home {
                module_exit[home] += v * w;
            }
        }
    }
    let total_exit = module_exit.iter().sum();
    let module_circ = module_exit
        .iter()
        .zip(&module_visit)
        .map(|(q, v)| q + v)
        .collect();
    Ok(FlowStats {
        visit: stationary.visit.clone(),
        module_exit,
        module_circ,
        total_exit,
        teleport: stationary.teleport,
    })
}
