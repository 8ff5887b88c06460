#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(graph) = facemap::knngraph::parse_edges(text, None) {
        let again =
            facemap::knngraph::parse_edges(&graph.to_tsv(), Some(graph.node_count())).unwrap();
        assert_eq!(again.col_idx(), graph.col_idx());
        assert_eq!(again.weights(), graph.weights());
    }
    let _ = facemap::knngraph::parse_edges(text, Some(8));
});
