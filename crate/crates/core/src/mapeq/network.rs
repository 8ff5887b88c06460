//! Link-flow network and incremental module bookkeeping shared by the
//! objective and the optimizer.

use super::plogp;
use crate::knngraph::SparseRowGraph;

/// Directed network carrying link flow `visit[a] * P(a, b)`. Nodes may be
/// aggregates of fine-level nodes; flow inside an aggregate is dropped since
/// it can never count as a module exit.
#[derive(Debug, Clone)]
pub(crate) struct FlowNetwork {
    pub node_flow: Vec<f64>,
    pub out_offsets: Vec<usize>,
    pub out_targets: Vec<usize>,
    pub out_flow: Vec<f64>,
    pub in_offsets: Vec<usize>,
    pub in_sources: Vec<usize>,
    pub in_flow: Vec<f64>,
    pub node_out: Vec<f64>,
    /// `sum plogp(visit)` over the finest level; partition-independent.
    pub visit_entropy_term: f64,
}

impl FlowNetwork {
    pub fn from_transitions(p: &SparseRowGraph, visit: &[f64]) -> Self {
        let n = p.node_count();
        let edges: Vec<(usize, usize, f64)> = p
            .edges()
            .map(|(a, b, w)| (a, b, visit[a] * w))
            .filter(|e| e.2 > 0.0)
            .collect();
        let visit_entropy_term = visit.iter().map(|&v| plogp(v)).sum();
        Self::from_edges(visit.to_vec(), edges, n, visit_entropy_term)
    }

    /// `edges` must be sorted by source and free of self-loops.
    fn from_edges(
        node_flow: Vec<f64>,
        edges: Vec<(usize, usize, f64)>,
        n: usize,
        visit_entropy_term: f64,
    ) -> Self {
        let mut out_offsets = vec![0usize; n + 1];
        let mut in_counts = vec![0usize; n + 1];
        let mut node_out = vec![0.0; n];
        for &(a, b, f) in &edges {
            out_offsets[a + 1] += 1;
            in_counts[b + 1] += 1;
            node_out[a] += f;
        }
        for i in 0..n {
            out_offsets[i + 1] += out_offsets[i];
            in_counts[i + 1] += in_counts[i];
        }
        let in_offsets = in_counts.clone();
        let mut fill = in_counts;
        let mut in_sources = vec![0; edges.len()];
        let mut in_flow = vec![0.0; edges.len()];
        for &(a, b, f) in &edges {
            in_sources[fill[b]] = a;
            in_flow[fill[b]] = f;
            fill[b] += 1;
        }
        let (out_targets, out_flow) = edges.iter().map(|&(_, b, f)| (b, f)).unzip();
        Self {
            node_flow,
            out_offsets,
            out_targets,
            out_flow,
            in_offsets,
            in_sources,
            in_flow,
            node_out,
            visit_entropy_term,
        }
    }

    pub fn node_count(&self) -> usize {
        self.node_flow.len()
    }

    pub fn out_edges(&self, a: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.out_offsets[a]..self.out_offsets[a + 1];
        self.out_targets[span.clone()]
            .iter()
            .copied()
            .zip(self.out_flow[span].iter().copied())
    }

    pub fn in_edges(&self, a: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.in_offsets[a]..self.in_offsets[a + 1];
        self.in_sources[span.clone()]
            .iter()
            .copied()
            .zip(self.in_flow[span].iter().copied())
    }

    /// Collapses each module (ids contiguous in `0..m`) into one node.
    pub fn aggregate(&self, assign: &[usize], m: usize) -> Self {
        let mut node_flow = vec![0.0; m];
        for (a, &c) in assign.iter().enumerate() {
            node_flow[c] += self.node_flow[a];
        }
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
        for a in 0..self.node_count() {
            let ca = assign[a];
            for (b, f) in self.out_edges(a) {
                let cb = assign[b];
                if ca != cb {
                    rows[ca].push((cb, f));
                }
            }
        }
        let mut edges = Vec::new();
        for (ca, mut row) in rows.into_iter().enumerate() {
            row.sort_by_key(|e| e.0);
            let mut iter = row.into_iter();
            if let Some(mut cur) = iter.next() {
                for (cb, f) in iter {
                    if cb == cur.0 {
                        cur.1 += f;
                    } else {
                        edges.push((ca, cur.0, cur.1));
                        cur = (cb, f);
                    }
                }
                edges.push((ca, cur.0, cur.1));
            }
        }
        Self::from_edges(node_flow, edges, m, self.visit_entropy_term)
    }
}

/// Flow exchanged between one node and a module other than the node itself.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct LinkFlow {
    pub out: f64,
    pub inn: f64,
}

struct Moved {
    exit_source: f64,
    exit_target: f64,
    flow_source: f64,
    flow_target: f64,
}

/// Module aggregates of an assignment on a [`FlowNetwork`], updated in
/// place as nodes move.
#[derive(Debug, Clone)]
pub(crate) struct ModuleState {
    pub assign: Vec<usize>,
    pub exit: Vec<f64>,
    pub flow: Vec<f64>,
    pub members: Vec<usize>,
    sum_exit: f64,
    sum_plogp_exit: f64,
    sum_plogp_circ: f64,
}

impl ModuleState {
    /// `assign` ids must lie in `0..network.node_count()`; unused ids are
    /// empty modules.
    pub fn new(net: &FlowNetwork, assign: Vec<usize>) -> Self {
        Self::with_slots(net, assign, net.node_count())
    }

    pub fn with_slots(net: &FlowNetwork, assign: Vec<usize>, slots: usize) -> Self {
        let n = net.node_count();
        let mut exit = vec![0.0; slots];
        let mut flow = vec![0.0; slots];
        let mut members = vec![0usize; slots];
        for a in 0..n {
            let c = assign[a];
            flow[c] += net.node_flow[a];
            members[c] += 1;
            for (b, f) in net.out_edges(a) {
                if assign[b] != c {
                    exit[c] += f;
                }
            }
        }
        let mut state = Self {
            assign,
            exit,
            flow,
            members,
            sum_exit: 0.0,
            sum_plogp_exit: 0.0,
            sum_plogp_circ: 0.0,
        };
        state.refresh_sums();
        state
    }

    fn refresh_sums(&mut self) {
        self.sum_exit = self.exit.iter().sum();
        self.sum_plogp_exit = self.exit.iter().map(|&q| plogp(q)).sum();
        self.sum_plogp_circ = self
            .exit
            .iter()
            .zip(&self.flow)
            .map(|(&q, &f)| plogp(q + f))
            .sum();
    }

    pub fn codelength(&self, net: &FlowNetwork) -> f64 {
        plogp(self.sum_exit) - 2.0 * self.sum_plogp_exit + self.sum_plogp_circ
            - net.visit_entropy_term
    }

    /// Flow between node `a` and every module adjacent to it, keyed by
    /// module; `a` itself is excluded.
    pub fn neighbor_flows(
        &self,
        net: &FlowNetwork,
        a: usize,
        scratch: &mut Vec<LinkFlow>,
        touched: &mut Vec<usize>,
    ) {
        touched.clear();
        if scratch.len() < self.exit.len() {
            scratch.resize(self.exit.len(), LinkFlow::default());
        }
        for (b, f) in net.out_edges(a) {
            let c = self.assign[b];
            if scratch[c].out == 0.0 && scratch[c].inn == 0.0 {
                touched.push(c);
            }
            scratch[c].out += f;
        }
        for (b, f) in net.in_edges(a) {
            let c = self.assign[b];
            if scratch[c].out == 0.0 && scratch[c].inn == 0.0 {
                touched.push(c);
            }
            scratch[c].inn += f;
        }
    }

    /// Post-move exit and visit flow of the source and target modules.
    fn moved(
        &self,
        net: &FlowNetwork,
        a: usize,
        target: usize,
        to_source: LinkFlow,
        to_target: LinkFlow,
    ) -> Moved {
        let source = self.assign[a];
        let out = net.node_out[a];
        let fa = net.node_flow[a];
        let emptied = self.members[source] == 1;
        let exit_source = if emptied {
            0.0
        } else {
            (self.exit[source] - (out - to_source.out) + to_source.inn).max(0.0)
        };
        let flow_source = if emptied { 0.0 } else { self.flow[source] - fa };
        let exit_target = (self.exit[target] + (out - to_target.out) - to_target.inn).max(0.0);
        Moved {
            exit_source,
            exit_target,
            flow_source,
            flow_target: self.flow[target] + fa,
        }
    }

    /// Codelength change for moving `a` into `target`.
    pub fn delta(
        &self,
        net: &FlowNetwork,
        a: usize,
        target: usize,
        to_source: LinkFlow,
        to_target: LinkFlow,
    ) -> f64 {
        let (d_sum_exit, d_plogp_exit, d_plogp_circ) =
            self.sum_changes(&self.moved(net, a, target, to_source, to_target), a, target);
        plogp(self.sum_exit + d_sum_exit) - plogp(self.sum_exit) - 2.0 * d_plogp_exit + d_plogp_circ
    }

    fn sum_changes(&self, m: &Moved, a: usize, target: usize) -> (f64, f64, f64) {
        let source = self.assign[a];
        let (os, ot) = (self.exit[source], self.exit[target]);
        let (fs, ft) = (self.flow[source], self.flow[target]);
        (
            m.exit_source + m.exit_target - os - ot,
            plogp(m.exit_source) + plogp(m.exit_target) - plogp(os) - plogp(ot),
            plogp(m.exit_source + m.flow_source) + plogp(m.exit_target + m.flow_target)
                - plogp(os + fs)
                - plogp(ot + ft),
        )
    }

    pub fn apply(
        &mut self,
        net: &FlowNetwork,
        a: usize,
        target: usize,
        to_source: LinkFlow,
        to_target: LinkFlow,
    ) {
        let source = self.assign[a];
        let m = self.moved(net, a, target, to_source, to_target);
        let (d_sum_exit, d_plogp_exit, d_plogp_circ) = self.sum_changes(&m, a, target);
        self.sum_exit += d_sum_exit;
        self.sum_plogp_exit += d_plogp_exit;
        self.sum_plogp_circ += d_plogp_circ;
        self.exit[source] = m.exit_source;
        self.exit[target] = m.exit_target;
        self.flow[source] = m.flow_source;
        self.flow[target] = m.flow_target;
        self.members[source] -= 1;
        self.members[target] += 1;
        self.assign[a] = target;
    }

    /// Recomputes running sums from the per-module arrays to shed drift.
    pub fn resync(&mut self) {
        self.refresh_sums();
    }

    /// Relabels modules to `0..m` by first occurrence; returns the new
    /// assignment and `m`.
    pub fn compact(&self) -> (Vec<usize>, usize) {
        let mut map = vec![usize::MAX; self.assign.len()];
        let mut next = 0;
        let assign = self
            .assign
            .iter()
            .map(|&c| {
                if map[c] == usize::MAX {
                    map[c] = next;
                    next += 1;
                }
                map[c]
            })
            .collect();
        (assign, next)
    }
}
