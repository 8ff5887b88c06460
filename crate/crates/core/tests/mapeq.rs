mod common;

use facemap::knngraph::SparseRowGraph;
use facemap::mapeq::{
    compute_flow, map_equation_direct, map_equation_fast, move_delta, optimize_partition,
    stationary_distribution, teleport_step, Partition, SolverConfig, Stationary,
};
use rand::Rng;

fn graph(rows: Vec<Vec<(usize, f64)>>) -> SparseRowGraph {
    SparseRowGraph::from_rows(rows.len(), rows, true).unwrap()
}

fn two_cycle() -> SparseRowGraph {
    graph(vec![vec![(1, 1.0)], vec![(0, 1.0)]])
}

/// Pairs {0,1} and {2,3} with unit weights inside and a 0.1 bridge 0 <-> 2,
/// row-normalized.
fn two_cliques() -> SparseRowGraph {
    graph(vec![
        vec![(1, 1.0 / 1.1), (2, 0.1 / 1.1)],
        vec![(0, 1.0)],
        vec![(0, 0.1 / 1.1), (3, 1.0 / 1.1)],
        vec![(2, 1.0)],
    ])
}

fn solved(p: &SparseRowGraph, teleport: f64) -> Stationary {
    Stationary {
        visit: common::dense_stationary(p, teleport),
        teleport,
        iterations: 0,
        residual: 0.0,
    }
}

fn fast_codelength(p: &SparseRowGraph, part: &Partition, s: &Stationary) -> f64 {
    map_equation_fast(&compute_flow(p, part, s).unwrap())
}

#[test]
fn two_cycle_fixtures() {
    let p = two_cycle();
    let s = stationary_distribution(&p, &SolverConfig::default()).unwrap();
    for (part, expected) in [
        (Partition::one_module(2), 1.0),
        (Partition::singletons(2), 3.0),
    ] {
        let flow = compute_flow(&p, &part, &s).unwrap();
        assert!((map_equation_fast(&flow) - expected).abs() < 1e-12);
        assert!((map_equation_direct(&p, &part, &flow).unwrap() - expected).abs() < 1e-12);
    }
    let flow = compute_flow(&p, &Partition::singletons(2), &s).unwrap();
    let delta = move_delta(&p, &flow, &Partition::singletons(2), 1, 0).unwrap();
    assert!((delta + 2.0).abs() < 1e-12);
}

#[test]
fn three_node_chain_matches_dense_solve() {
    let p = graph(vec![vec![(1, 1.0)], vec![(2, 1.0)], vec![]]);
    let cfg = SolverConfig::default();
    let s = stationary_distribution(&p, &cfg).unwrap();
    let oracle = common::dense_stationary(&p, 0.15);
    for (a, b) in s.visit.iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }
}

#[test]
fn stationary_fixed_point_on_random_graphs() {
    let mut rng = common::rng(3);
    for _ in 0..50 {
        let n = rng.random_range(2..60);
        let density = rng.random_range(0.05..0.6);
        let p = common::random_stochastic(&mut rng, n, density);
        let s = stationary_distribution(&p, &SolverConfig::default()).unwrap();
        let next = teleport_step(&p, &s.visit, 0.15);
        let residual: f64 = next.iter().zip(&s.visit).map(|(a, b)| (a - b).abs()).sum();
        assert!(residual <= 1e-10);
        assert!((s.visit.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        let oracle = common::dense_stationary(&p, 0.15);
        for (a, b) in s.visit.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}

#[test]
fn two_cliques_prefer_two_modules() {
    let p = two_cliques();
    let s = solved(&p, 0.15);
    let value = |raw: [usize; 4]| {
        let part = Partition::from_assignments(raw);
        map_equation_direct(&p, &part, &compute_flow(&p, &part, &s).unwrap()).unwrap()
    };
    let split = value([0, 0, 1, 1]);
    assert!(split < value([0, 0, 0, 0]));
    assert!(split < value([0, 1, 2, 3]));
    for raw in common::set_partitions(4) {
        let other = value([raw[0], raw[1], raw[2], raw[3]]);
        assert!(split <= other + 1e-12, "{raw:?} gives {other} < {split}");
    }
    let opt = optimize_partition(&p, &SolverConfig::default()).unwrap();
    assert_eq!(opt.partition.assignments(), &[0, 0, 1, 1]);
    assert_eq!(opt.partition.num_clusters(), 2);
}

#[test]
fn fast_equals_direct_and_entropy_oracle() {
    let mut rng = common::rng(99);
    for _ in 0..300 {
        let n = rng.random_range(1..=50);
        let density = rng.random_range(0.02..0.5);
        let p = common::random_stochastic(&mut rng, n, density);
        let s = stationary_distribution(&p, &SolverConfig::default()).unwrap();
        let m = rng.random_range(1..=n);
        let raw = common::random_assignment(&mut rng, n, m);
        let part = Partition::from_assignments(&raw);
        let flow = compute_flow(&p, &part, &s).unwrap();
        let fast = map_equation_fast(&flow);
        let direct = map_equation_direct(&p, &part, &flow).unwrap();
        let oracle = common::codelength_by_entropy(&p, part.assignments(), &s.visit);
        assert!((fast - direct).abs() <= 1e-10, "{fast} vs {direct}");
        assert!((direct - oracle).abs() <= 1e-10, "{direct} vs {oracle}");
    }
}

#[test]
fn flow_identities_hold() {
    let mut rng = common::rng(5);
    for _ in 0..50 {
        let n = rng.random_range(2..40);
        let p = common::random_stochastic(&mut rng, n, 0.3);
        let s = stationary_distribution(&p, &SolverConfig::default()).unwrap();
        let part = Partition::from_assignments(common::random_assignment(&mut rng, n, 5));
        let flow = compute_flow(&p, &part, &s).unwrap();
        let mut exit = vec![0.0; part.num_clusters()];
        let mut visit = vec![0.0; part.num_clusters()];
        for a in 0..n {
            let ca = part.module_of(a);
            visit[ca] += s.visit[a];
            for (b, w) in p.row(a).0.iter().zip(p.row(a).1) {
                if part.module_of(*b) != ca {
                    exit[ca] += s.visit[a] * w;
                }
            }
        }
        for i in 0..part.num_clusters() {
            assert!((flow.module_exit[i] - exit[i]).abs() < 1e-12);
            assert!((flow.module_circ[i] - exit[i] - visit[i]).abs() < 1e-12);
        }
        assert!((flow.total_exit - exit.iter().sum::<f64>()).abs() < 1e-12);
    }
}

#[test]
fn move_delta_matches_full_recompute() {
    let mut rng = common::rng(500);
    let mut checked = 0;
    while checked < 500 {
        let n = rng.random_range(2..30);
        let p = common::random_stochastic(&mut rng, n, 0.3);
        let s = stationary_distribution(&p, &SolverConfig::default()).unwrap();
        let part = Partition::from_assignments(common::random_assignment(&mut rng, n, 4));
        let flow = compute_flow(&p, &part, &s).unwrap();
        let node = rng.random_range(0..n);
        let target = rng.random_range(0..=part.num_clusters());
        if target == part.module_of(node) {
            continue;
        }
        let delta = move_delta(&p, &flow, &part, node, target).unwrap();
        let mut raw = part.assignments().to_vec();
        raw[node] = target;
        let moved = Partition::from_assignments(&raw);
        let full = fast_codelength(&p, &moved, &s) - map_equation_fast(&flow);
        assert!((delta - full).abs() <= 1e-10, "{delta} vs {full}");

        // Moving straight back undoes the change.
        let back_flow = compute_flow(&p, &moved, &s).unwrap();
        let origin = part.module_of(node);
        let back_target = (0..n)
            .find(|&x| x != node && part.module_of(x) == origin)
            .map_or(moved.num_clusters(), |x| moved.module_of(x));
        let back = move_delta(&p, &back_flow, &moved, node, back_target).unwrap();
        assert!((delta + back).abs() <= 1e-10);
        checked += 1;
    }
}

#[test]
fn optimizer_fixtures() {
    let single = graph(vec![vec![]]);
    let opt = optimize_partition(&single, &SolverConfig::default()).unwrap();
    assert_eq!(opt.partition.assignments(), &[0]);
    assert_eq!(opt.codelength, 0.0);

    let opt = optimize_partition(&two_cycle(), &SolverConfig::default()).unwrap();
    assert_eq!(opt.partition.num_clusters(), 1);
    assert!((opt.codelength - 1.0).abs() < 1e-12);
}

#[test]
fn optimizer_properties_on_random_graphs() {
    let mut rng = common::rng(77);
    for _ in 0..30 {
        let n = rng.random_range(2..80);
        let density = rng.random_range(0.03..0.3);
        let p = common::random_stochastic(&mut rng, n, density);
        let cfg = SolverConfig {
            seed: rng.random(),
            ..Default::default()
        };
        let opt = optimize_partition(&p, &cfg).unwrap();
        let s = &opt.stationary;
        let one = fast_codelength(&p, &Partition::one_module(n), s);
        let singles = fast_codelength(&p, &Partition::singletons(n), s);
        assert!(opt.codelength <= one.min(singles) + 1e-12);
        let check = fast_codelength(&p, &opt.partition, s);
        assert!((check - opt.codelength).abs() < 1e-9);
        assert!(
            opt.trace.windows(2).all(|w| w[1] < w[0]),
            "trace not decreasing"
        );
        let again = optimize_partition(&p, &cfg).unwrap();
        assert_eq!(again.partition, opt.partition);
        assert_eq!(again.codelength.to_bits(), opt.codelength.to_bits());
    }
}

#[test]
fn optimizer_reaches_brute_force_optimum_on_tiny_graphs() {
    let mut rng = common::rng(1234);
    let mut exact = 0;
    let instances = 20;
    for _ in 0..instances {
        let n = rng.random_range(2..=6);
        let p = common::random_stochastic(&mut rng, n, 0.5);
        let opt = optimize_partition(&p, &SolverConfig::default()).unwrap();
        let best = common::set_partitions(n)
            .into_iter()
            .map(|raw| fast_codelength(&p, &Partition::from_assignments(raw), &opt.stationary))
            .fold(f64::INFINITY, f64::min);
        assert!(opt.codelength <= 1.02 * best + 1e-12);
        if opt.codelength <= best + 1e-9 {
            exact += 1;
        }
    }
    assert!(exact * 5 >= instances * 4, "{exact} of {instances}");
}
