//! Directed kNN affinity graph in compressed sparse row form, and its
//! row-normalized transition matrix.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::corpus::EmbeddingSet;
use crate::error::{Error, Result};

/// Tolerance on row sums for a graph to count as stochastic.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// Weighted digraph stored row-major. Within a row, targets are strictly
/// increasing, never equal to the row index, and every weight is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRowGraph {
    row_offsets: Vec<usize>,
    col_idx: Vec<usize>,
    weights: Vec<f64>,
    stochastic: bool,
}

impl SparseRowGraph {
    /// Builds a graph from per-row adjacency lists. Rows are sorted by
    /// target; duplicates, self-loops and non-positive weights are rejected.
    pub fn from_rows<R>(node_count: usize, rows: R, stochastic: bool) -> Result<Self>
    where
        R: IntoIterator<Item = Vec<(usize, f64)>>,
    {
        let mut row_offsets = Vec::with_capacity(node_count + 1);
        row_offsets.push(0);
        let mut col_idx = Vec::new();
        let mut weights = Vec::new();
        for (src, mut row) in rows.into_iter().enumerate() {
            if src >= node_count {
                return Err(Error::Inconsistent(format!(
                    "more than {node_count} rows supplied"
                )));
            }
            row.sort_by_key(|&(dst, _)| dst);
            for (pos, &(dst, w)) in row.iter().enumerate() {
                if dst >= node_count {
                    return Err(Error::Inconsistent(format!(
                        "edge {src}->{dst} exceeds node count {node_count}"
                    )));
                }
                if dst == src {
                    return Err(Error::Inconsistent(format!("self-loop on node {src}")));
                }
                if pos > 0 && row[pos - 1].0 == dst {
                    return Err(Error::Inconsistent(format!("duplicate edge {src}->{dst}")));
                }
                if !(w > 0.0 && w.is_finite()) {
                    return Err(Error::Inconsistent(format!(
                        "edge {src}->{dst} has non-positive weight {w}"
                    )));
                }
                col_idx.push(dst);
                weights.push(w);
            }
            row_offsets.push(col_idx.len());
        }
        while row_offsets.len() < node_count + 1 {
            row_offsets.push(col_idx.len());
        }
        let graph = Self {
            row_offsets,
            col_idx,
            weights,
            stochastic,
        };
        if stochastic {
            if let Some(i) = graph.first_unbalanced_row() {
                return Err(Error::Inconsistent(format!(
                    "row {i} does not sum to 1 (sum {})",
                    graph.row_sum(i)
                )));
            }
        }
        Ok(graph)
    }

    pub fn node_count(&self) -> usize {
        self.row_offsets.len() - 1
    }

    pub fn edge_count(&self) -> usize {
        self.col_idx.len()
    }

    pub fn is_stochastic(&self) -> bool {
        self.stochastic
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Targets and weights of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let span = self.row_offsets[i]..self.row_offsets[i + 1];
        (&self.col_idx[span.clone()], &self.weights[span])
    }

    pub fn out_degree(&self, i: usize) -> usize {
        self.row_offsets[i + 1] - self.row_offsets[i]
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.row(i).1.iter().sum()
    }

    /// Weight of edge `src -> dst`, if present.
    pub fn weight(&self, src: usize, dst: usize) -> Option<f64> {
        let (cols, ws) = self.row(src);
        cols.binary_search(&dst).ok().map(|p| ws[p])
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.node_count()).flat_map(move |i| {
            let (cols, ws) = self.row(i);
            cols.iter().zip(ws).map(move |(&j, &w)| (i, j, w))
        })
    }

    pub fn dangling_count(&self) -> usize {
        (0..self.node_count())
            .filter(|&i| self.out_degree(i) == 0)
            .count()
    }

    fn first_unbalanced_row(&self) -> Option<usize> {
        (0..self.node_count())
            .find(|&i| self.out_degree(i) > 0 && (self.row_sum(i) - 1.0).abs() > ROW_SUM_TOLERANCE)
    }

    /// Writes one `src\tdst\tweight` line per edge.
    pub fn to_tsv(&self) -> String {
        let mut out = String::with_capacity(self.edge_count() * 24);
        for (i, j, w) in self.edges() {
            // `{}` on f64 prints the shortest decimal that parses back exactly.
            writeln!(out, "{i}\t{j}\t{w}").expect("writing to a String");
        }
        out
    }

    pub fn save_edges(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }
}

/// Exact kNN by cosine similarity (dot product of unit vectors). Candidates
/// exclude the node itself; ties go to the smaller index; non-positive
/// similarities are dropped, so rows may hold fewer than `k` edges.
pub fn build_knn_graph(emb: &EmbeddingSet, k: usize) -> Result<SparseRowGraph> {
    let n = emb.count();
    if k == 0 || k >= n {
        return Err(Error::param(format!(
            "k must lie in 1..={} for {n} nodes, got {k}",
            n.saturating_sub(1)
        )));
    }
    let rows: Vec<Vec<(usize, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| nearest_neighbors(emb, i, k))
        .collect();
    SparseRowGraph::from_rows(n, rows, false)
}

fn nearest_neighbors(emb: &EmbeddingSet, i: usize, k: usize) -> Vec<(usize, f64)> {
    let query = emb.row(i);
    let mut cand: Vec<(usize, f64)> = emb
        .rows()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(j, row)| (j, dot(query, row)))
        .collect();
    let by_rank = |a: &(usize, f64), b: &(usize, f64)| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0));
    if cand.len() > k {
        cand.select_nth_unstable_by(k - 1, by_rank);
        cand.truncate(k);
    }
    cand.retain(|&(_, s)| s > 0.0);
    cand
}

pub(crate) fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| f64::from(x) * f64::from(y))
        .sum()
}

/// Divides every nonempty row by its sum. Empty rows stay empty.
pub fn row_normalize(graph: &SparseRowGraph) -> Result<SparseRowGraph> {
    if graph.stochastic {
        return Err(Error::param("graph is already row-normalized"));
    }
    Ok(normalize_rows(graph))
}

pub(crate) fn normalize_rows(graph: &SparseRowGraph) -> SparseRowGraph {
    let mut weights = graph.weights.clone();
    for i in 0..graph.node_count() {
        let span = graph.row_offsets[i]..graph.row_offsets[i + 1];
        let sum: f64 = weights[span.clone()].iter().sum();
        if sum > 0.0 {
            weights[span].iter_mut().for_each(|w| *w /= sum);
        }
    }
    SparseRowGraph {
        row_offsets: graph.row_offsets.clone(),
        col_idx: graph.col_idx.clone(),
        weights,
        stochastic: true,
    }
}

/// Parses edge TSV. When `node_count` is `None` it is inferred as one past the
/// largest index seen. The result is flagged stochastic when every nonempty
/// row sums to one.
pub fn parse_edges(text: &str, node_count: Option<usize>) -> Result<SparseRowGraph> {
    let mut edges = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let mut next = |name: &str| {
            fields.next().ok_or_else(|| Error::Parse {
                line: lineno,
                message: format!("missing {name} field"),
            })
        };
        let (src, dst, w) = (next("source")?, next("target")?, next("weight")?);
        if fields.next().is_some() {
            return Err(Error::Parse {
                line: lineno,
                message: "expected 3 tab-separated fields".into(),
            });
        }
        let bad = |what: &str, v: &str| Error::Parse {
            line: lineno,
            message: format!("invalid {what} {v:?}"),
        };
        let src: usize = src.parse().map_err(|_| bad("source", src))?;
        let dst: usize = dst.parse().map_err(|_| bad("target", dst))?;
        let w: f64 = w.parse().map_err(|_| bad("weight", w))?;
        if !(w > 0.0 && w.is_finite()) {
            return Err(bad("weight", &w.to_string()));
        }
        if src == dst {
            return Err(Error::Parse {
                line: lineno,
                message: format!("self-loop on node {src}"),
            });
        }
        edges.push((src, dst, w, lineno));
    }

    let inferred = edges.iter().map(|e| e.0.max(e.1) + 1).max().unwrap_or(0);
    let n = match node_count {
        Some(n) if n < inferred => {
            let line = edges.iter().find(|e| e.0.max(e.1) >= n).map_or(0, |e| e.3);
            return Err(Error::Parse {
                line,
                message: format!("node index exceeds node count {n}"),
            });
        }
        Some(n) => n,
        None => inferred,
    };

    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    edges.sort_by_key(|e| (e.0, e.1, e.3));
    for pair in edges.windows(2) {
        if pair[0].0 == pair[1].0 && pair[0].1 == pair[1].1 {
            return Err(Error::Parse {
                line: pair[0].3.max(pair[1].3),
                message: format!("duplicate edge {}->{}", pair[1].0, pair[1].1),
            });
        }
    }
    for (s, d, w, _) in edges {
        rows[s].push((d, w));
    }
    let mut graph = SparseRowGraph::from_rows(n, rows, false)?;
    graph.stochastic = graph.first_unbalanced_row().is_none();
    Ok(graph)
}

pub fn load_edges(path: impl AsRef<Path>, node_count: Option<usize>) -> Result<SparseRowGraph> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_edges(&text, node_count)
}
