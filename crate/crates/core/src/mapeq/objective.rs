use super::network::{FlowNetwork, ModuleState};
use super::{plogp, FlowStats, Partition};
use crate::error::{Error, Result};
use crate::knngraph::SparseRowGraph;

/// Tolerance when checking a supplied `FlowStats` against `P`.
const FLOW_CONSISTENCY: f64 = 1e-9;

fn entropy(weights: impl IntoIterator<Item = f64>, total: f64) -> f64 {
    if total <= 0.0 {
        return 0.0;
    }
    -weights.into_iter().map(|w| plogp(w / total)).sum::<f64>()
}

/// Map equation as a weighted sum of codebook entropies.
///
/// Module exits are recomputed from `P` and `flow.visit`; the supplied
/// aggregates must agree with them.
pub fn map_equation_direct(
    p: &SparseRowGraph,
    partition: &Partition,
    flow: &FlowStats,
) -> Result<f64> {
    let n = p.node_count();
    let m = partition.num_clusters();
    if partition.len() != n || flow.visit.len() != n {
        return Err(Error::Inconsistent(format!(
            "graph has {n} nodes, partition {}, visit rates {}",
            partition.len(),
            flow.visit.len()
        )));
    }
    if flow.module_exit.len() != m || flow.module_circ.len() != m {
        return Err(Error::Inconsistent(format!(
            "partition has {m} modules but flow covers {}",
            flow.module_exit.len()
        )));
    }

    let mut exit = vec![0.0; m];
    let mut members: Vec<Vec<f64>> = vec![Vec::new(); m];
    for alpha in 0..n {
        let home = partition.module_of(alpha);
        members[home].push(flow.visit[alpha]);
        let (cols, ws) = p.row(alpha);
        for (&beta, &w) in cols.iter().zip(ws) {
            if partition.module_of(beta) != home {
                exit[home] += flow.visit[alpha] * w;
            }
        }
    }
    if let Some(i) = (0..m).find(|&i| (exit[i] - flow.module_exit[i]).abs() > FLOW_CONSISTENCY) {
        return Err(Error::Inconsistent(format!(
            "module {i} exit flow {} disagrees with the graph ({})",
            flow.module_exit[i], exit[i]
        )));
    }

    let total_exit: f64 = exit.iter().sum();
    let index = total_exit * entropy(exit.iter().copied(), total_exit);
    let modules: f64 = (0..m)
        .map(|i| {
            let usage = exit[i] + members[i].iter().sum::<f64>();
            let codebook = std::iter::once(exit[i]).chain(members[i].iter().copied());
            usage * entropy(codebook, usage)
        })
        .sum();
    Ok(index + modules)
}

/// Map equation from flow aggregates alone:
/// `plogp(q) - 2 sum plogp(q_i) + sum plogp(p_i) - sum plogp(p_a)`.
pub fn map_equation_fast(flow: &FlowStats) -> f64 {
    let exit: f64 = flow.module_exit.iter().map(|&q| plogp(q)).sum();
    let circ: f64 = flow.module_circ.iter().map(|&q| plogp(q)).sum();
    let visit: f64 = flow.visit.iter().map(|&v| plogp(v)).sum();
    plogp(flow.total_exit) - 2.0 * exit + circ - visit
}

/// Codelength change from moving `node` into module `target`. A target of
/// `partition.num_clusters()` denotes a fresh empty module.
pub fn move_delta(
    p: &SparseRowGraph,
    flow: &FlowStats,
    partition: &Partition,
    node: usize,
    target: usize,
) -> Result<f64> {
    let n = p.node_count();
    if partition.len() != n || flow.visit.len() != n {
        return Err(Error::Inconsistent(
            "partition or flow does not match graph".into(),
        ));
    }
    if node >= n {
        return Err(Error::param(format!("node {node} out of range")));
    }
    if target > partition.num_clusters() {
        return Err(Error::param(format!("module {target} out of range")));
    }
    if partition.module_of(node) == target {
        return Err(Error::param("target module equals the source module"));
    }
    let net = FlowNetwork::from_transitions(p, &flow.visit);
    let state = ModuleState::with_slots(
        &net,
        partition.assignments().to_vec(),
        partition.num_clusters() + 1,
    );
    let mut scratch = Vec::new();
    let mut touched = Vec::new();
    state.neighbor_flows(&net, node, &mut scratch, &mut touched);
    let to_source = scratch[partition.module_of(node)];
    let to_target = scratch.get(target).copied().unwrap_or_default();
    Ok(state.delta(&net, node, target, to_source, to_target))
}
