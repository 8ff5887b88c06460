mod common;

use facemap::corpus::EmbeddingSet;
use facemap::knngraph::{build_knn_graph, parse_edges, row_normalize};
use proptest::prelude::*;
use rand::Rng;

fn random_set(seed: u64, n: usize, dim: usize) -> (EmbeddingSet, Vec<Vec<f64>>) {
    let mut rng = common::rng(seed);
    let data: Vec<f32> = (0..n * dim)
        .map(|_| rng.random_range(-1.0f32..1.0))
        .collect();
    let emb = EmbeddingSet::from_rows(dim, data).unwrap();
    let rows = emb
        .rows()
        .map(|r| r.iter().map(|&x| x as f64).collect())
        .collect();
    (emb, rows)
}

fn assert_matches_oracle(emb: &EmbeddingSet, rows: &[Vec<f64>], k: usize) {
    let g = build_knn_graph(emb, k).unwrap();
    let oracle = common::knn_full_sort(rows, k);
    for (i, expected) in oracle.iter().enumerate() {
        let (cols, ws) = g.row(i);
        let ids: Vec<usize> = expected.iter().map(|e| e.0).collect();
        assert_eq!(cols, ids.as_slice(), "row {i}");
        for (w, e) in ws.iter().zip(expected) {
            assert!((w - e.1).abs() < 1e-6, "row {i}: {w} vs {}", e.1);
        }
    }
}

#[test]
fn top_k_matches_full_sort_oracle() {
    let (emb, rows) = random_set(11, 200, 16);
    assert_matches_oracle(&emb, &rows, 10);
}

#[test]
fn sparsity_and_no_self_loops() {
    let (emb, _) = random_set(12, 120, 8);
    let g = build_knn_graph(&emb, 7).unwrap();
    assert!(g.edge_count() <= 120 * 7);
    for (a, b, w) in g.edges() {
        assert_ne!(a, b);
        assert!(w > 0.0);
    }
}

#[test]
fn normalized_rows_are_stochastic() {
    let (emb, _) = random_set(13, 80, 6);
    let p = row_normalize(&build_knn_graph(&emb, 9).unwrap()).unwrap();
    for i in 0..p.node_count() {
        if p.out_degree(i) > 0 {
            assert!((p.row_sum(i) - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn tsv_round_trip_is_exact() {
    let (emb, _) = random_set(14, 60, 5);
    let g = build_knn_graph(&emb, 6).unwrap();
    let back = parse_edges(&g.to_tsv(), Some(g.node_count())).unwrap();
    assert_eq!(back.col_idx(), g.col_idx());
    assert_eq!(back.weights(), g.weights());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]
    #[test]
    fn small_sets_match_oracle(seed in 0u64..1_000, n in 2usize..30, dim in 2usize..6) {
        let (emb, rows) = random_set(seed, n, dim);
        let k = 1 + (seed as usize) % (n - 1);
        assert_matches_oracle(&emb, &rows, k);
    }
}
