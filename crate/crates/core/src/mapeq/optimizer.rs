//! Greedy two-level map-equation minimization: node moves with repeated
//! sweeps, module aggregation, and re-tuning of the fine-level partition.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::network::{FlowNetwork, LinkFlow, ModuleState};
use super::{stationary_distribution, Partition, SolverConfig, Stationary};
use crate::error::Result;
use crate::knngraph::SparseRowGraph;

/// A move is accepted only when it lowers the codelength by more than this.
const MIN_MOVE_GAIN: f64 = 1e-12;
/// An outer pass must improve on the previous one by more than this.
const MIN_PASS_GAIN: f64 = 1e-10;
const MAX_SWEEPS: usize = 1_000;

#[derive(Debug, Clone)]
pub struct Optimized {
    pub partition: Partition,
    /// Codelength of `partition`, in bits.
    pub codelength: f64,
    pub one_module_codelength: f64,
    /// Index of the winning restart.
    pub restart: usize,
    /// Codelength after each accepted move of the winning restart, starting
    /// from the all-singletons value.
    pub trace: Vec<f64>,
    pub stationary: Stationary,
}

#[derive(Debug, Clone)]
struct Trial {
    assign: Vec<usize>,
    codelength: f64,
    trace: Vec<f64>,
}

pub fn optimize_partition(p: &SparseRowGraph, cfg: &SolverConfig) -> Result<Optimized> {
    let stationary = stationary_distribution(p, cfg)?;
    let net = FlowNetwork::from_transitions(p, &stationary.visit);
    let n = net.node_count();

    let trials: Vec<Trial> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(restart_seed(cfg.seed, r));
            run_trial(&net, cfg, &mut rng)
        })
        .collect();
    let (restart, best) = trials
        .into_iter()
        .enumerate()
        .min_by(|a, b| {
            a.1.codelength
                .total_cmp(&b.1.codelength)
                .then(a.0.cmp(&b.0))
        })
        .expect("at least one restart");

    let one_module_codelength = ModuleState::new(&net, vec![0; n]).codelength(&net);
    let (assign, codelength) = if one_module_codelength < best.codelength {
        (vec![0; n], one_module_codelength)
    } else {
        (best.assign, best.codelength)
    };
    Ok(Optimized {
        partition: Partition::from_assignments(assign),
        codelength,
        one_module_codelength,
        restart,
        trace: best.trace,
        stationary,
    })
}

fn restart_seed(seed: u64, restart: usize) -> u64 {
    seed ^ (restart as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn run_trial(net: &FlowNetwork, cfg: &SolverConfig, rng: &mut ChaCha8Rng) -> Trial {
    let n = net.node_count();
    let mut assign: Vec<usize> = (0..n).collect();
    let start = ModuleState::new(net, assign.clone());
    let mut codelength = start.codelength(net);
    let mut trace = vec![codelength];

    for _ in 0..cfg.max_outer_passes {
        let mut state = ModuleState::new(net, assign.clone());
        sweep_until_stable(net, &mut state, rng, &mut trace);
        let (mut fine_to_level, mut m) = state.compact();
        let mut level = net.aggregate(&fine_to_level, m);

        while m > 1 {
            let mut coarse = ModuleState::new(&level, (0..m).collect());
            if !sweep_until_stable(&level, &mut coarse, rng, &mut trace) {
                break;
            }
            let (merged, merged_count) = coarse.compact();
            for x in fine_to_level.iter_mut() {
                *x = merged[*x];
            }
            level = level.aggregate(&merged, merged_count);
            m = merged_count;
        }

        let pass_codelength = ModuleState::new(net, fine_to_level.clone()).codelength(net);
        let improved = codelength - pass_codelength > MIN_PASS_GAIN;
        if pass_codelength < codelength {
            assign = fine_to_level;
            codelength = pass_codelength;
        }
        if !improved {
            break;
        }
    }
    Trial {
        assign,
        codelength,
        trace,
    }
}

/// Sweeps nodes in random order, moving each to the neighboring or fresh
/// module with the most negative codelength change, until a sweep makes no
/// move. Returns whether anything moved.
fn sweep_until_stable(
    net: &FlowNetwork,
    state: &mut ModuleState,
    rng: &mut ChaCha8Rng,
    trace: &mut Vec<f64>,
) -> bool {
    let n = net.node_count();
    let mut order: Vec<usize> = (0..n).collect();
    let mut scratch: Vec<LinkFlow> = vec![LinkFlow::default(); state.exit.len()];
    let mut touched = Vec::new();
    let mut empty: BTreeSet<usize> = (0..state.members.len())
        .filter(|&c| state.members[c] == 0)
        .collect();
    let mut moved_any = false;

    for _ in 0..MAX_SWEEPS {
        order.shuffle(rng);
        let mut moves = 0usize;
        for &a in &order {
            state.neighbor_flows(net, a, &mut scratch, &mut touched);
            let source = state.assign[a];
            let to_source = scratch[source];

            let mut best: Option<(f64, usize)> = None;
            let fresh = (state.members[source] > 1)
                .then(|| empty.first().copied())
                .flatten();
            for c in touched
                .iter()
                .copied()
                .filter(|&c| c != source)
                .chain(fresh)
            {
                let delta = state.delta(net, a, c, to_source, scratch[c]);
                let better = match best {
                    None => true,
                    Some((d, bc)) => delta < d || (delta == d && c < bc),
                };
                if better {
                    best = Some((delta, c));
                }
            }
            if let Some((delta, target)) = best {
                if delta < -MIN_MOVE_GAIN {
                    state.apply(net, a, target, to_source, scratch[target]);
                    empty.remove(&target);
                    if state.members[source] == 0 {
                        empty.insert(source);
                    }
                    trace.push(state.codelength(net));
                    moves += 1;
                }
            }
            for &c in &touched {
                scratch[c] = LinkFlow::default();
            }
        }
        state.resync();
        if moves == 0 {
            break;
        }
        moved_any = true;
    }
    moved_any
}
