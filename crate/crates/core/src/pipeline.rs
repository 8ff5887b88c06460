//! End-to-end clustering: kNN graph, row normalization, transition pruning
//! and map-equation optimization, plus the (k, window) sensitivity grid.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{EmbeddingSet, LabelSet};
use crate::error::{Error, Result};
use crate::knngraph::{build_knn_graph, row_normalize, SparseRowGraph};
use crate::mapeq::{optimize_partition, Partition, SolverConfig};
use crate::metrics::{evaluate, MetricsReport};
use crate::odetect::{adjust_transitions, OdConfig, OdMode, SwitchPointReport};

pub const DEFAULT_K: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub k: usize,
    pub od: OdConfig,
    pub solver: SolverConfig,
    pub emit_diagnostics: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            od: OdConfig::default(),
            solver: SolverConfig::default(),
            emit_diagnostics: false,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::param(format!(
                "k must be at least 2, got {}",
                self.k
            )));
        }
        self.od.validate()?;
        self.solver.validate()
    }
}

/// Wall-clock time per stage, in milliseconds.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StageTimings {
    pub knn_ms: f64,
    pub normalize_ms: f64,
    pub outlier_ms: f64,
    pub optimize_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub nodes: usize,
    pub k_requested: usize,
    pub k_used: usize,
    pub window: usize,
    pub od_mode: OdMode,
    pub edges_before_od: usize,
    pub edges_after_od: usize,
    pub skipped_rows: usize,
    pub dangling_rows: usize,
    pub codelength_bits: f64,
    pub num_clusters: usize,
    pub singleton_count: usize,
    pub restarts: usize,
    pub seed: u64,
    pub warnings: Vec<String>,
    /// Excluded from serialization so that repeated runs produce identical
    /// files; report it separately.
    #[serde(skip)]
    pub timings: StageTimings,
}

#[derive(Debug, Clone)]
pub struct FacemapRun {
    pub partition: Partition,
    pub summary: RunSummary,
    /// Per-row switch-point reports; empty unless diagnostics are enabled.
    pub reports: Vec<SwitchPointReport>,
}

/// Raw similarity graph and its transition matrix for one `k`.
#[derive(Debug, Clone)]
pub struct Transitions {
    pub k_requested: usize,
    pub k_used: usize,
    pub affinity: SparseRowGraph,
    pub transitions: SparseRowGraph,
    pub warnings: Vec<String>,
    timings: StageTimings,
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

/// Builds the kNN affinity graph and row-normalizes it, clamping `k` to
/// `S - 1` when the set is too small.
pub fn build_transitions(emb: &EmbeddingSet, k: usize) -> Result<Transitions> {
    let n = emb.count();
    let mut warnings = Vec::new();
    let k_used = k.min(n.saturating_sub(1));
    if k_used < k {
        warnings.push(format!("k = {k} clamped to {k_used} for {n} nodes"));
    }
    let mut timings = StageTimings::default();
    let t = Instant::now();
    let affinity = if k_used == 0 {
        SparseRowGraph::from_rows(n, vec![Vec::new(); n], false)?
    } else {
        build_knn_graph(emb, k_used)?
    };
    timings.knn_ms = ms(t.elapsed());
    let t = Instant::now();
    let transitions = row_normalize(&affinity)?;
    timings.normalize_ms = ms(t.elapsed());
    Ok(Transitions {
        k_requested: k,
        k_used,
        affinity,
        transitions,
        warnings,
        timings,
    })
}

/// Prunes and partitions an already-built transition matrix.
pub fn cluster_transitions(graph: &Transitions, cfg: &PipelineConfig) -> Result<FacemapRun> {
    cfg.validate()?;
    let mut timings = graph.timings.clone();
    let t = Instant::now();
    let (pruned, reports) = adjust_transitions(&graph.transitions, &cfg.od, Some(&graph.affinity))?;
    timings.outlier_ms = ms(t.elapsed());
    let t = Instant::now();
    let optimized = optimize_partition(&pruned, &cfg.solver)?;
    timings.optimize_ms = ms(t.elapsed());

    let partition = optimized.partition;
    let summary = RunSummary {
        nodes: pruned.node_count(),
        k_requested: graph.k_requested,
        k_used: graph.k_used,
        window: cfg.od.window,
        od_mode: cfg.od.mode,
        edges_before_od: graph.transitions.edge_count(),
        edges_after_od: pruned.edge_count(),
        skipped_rows: reports.iter().filter(|r| r.skipped).count(),
        dangling_rows: pruned.dangling_count(),
        codelength_bits: optimized.codelength,
        num_clusters: partition.num_clusters(),
        singleton_count: partition.singleton_count(),
        restarts: cfg.solver.restarts,
        seed: cfg.solver.seed,
        warnings: graph.warnings.clone(),
        timings,
    };
    debug_assert!(summary.edges_after_od <= summary.edges_before_od);
    Ok(FacemapRun {
        partition,
        summary,
        reports: if cfg.emit_diagnostics {
            reports
        } else {
            Vec::new()
        },
    })
}

pub fn run_facemap(emb: &EmbeddingSet, cfg: &PipelineConfig) -> Result<FacemapRun> {
    cfg.validate()?;
    cluster_transitions(&build_transitions(emb, cfg.k)?, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub k: usize,
    pub window: usize,
    pub metrics: MetricsReport,
    pub codelength_bits: f64,
}

/// Mean and population standard deviation of each metric across the grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricSpread {
    pub mean: BTreeMap<String, f64>,
    pub std: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
    pub spread: MetricSpread,
}

fn metric_columns(r: &MetricsReport) -> Vec<(String, f64)> {
    let mut cols = vec![
        ("f_pairwise".to_string(), r.f_pairwise),
        ("f_bcubed".to_string(), r.f_bcubed),
        ("r_identity_pct".to_string(), r.r_identity_pct),
        ("r_singleton_pct".to_string(), r.r_singleton_pct),
    ];
    cols.extend(
        r.f_identity
            .iter()
            .map(|(t, v)| (format!("f_identity@{t}"), *v)),
    );
    cols
}

fn spread(rows: &[AblationRow]) -> MetricSpread {
    let mut columns: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for row in rows {
        for (name, v) in metric_columns(&row.metrics) {
            columns.entry(name).or_default().push(v);
        }
    }
    let mut mean = BTreeMap::new();
    let mut std = BTreeMap::new();
    for (name, vals) in columns {
        let n = vals.len() as f64;
        let m = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
        mean.insert(name.clone(), m);
        std.insert(name, var.sqrt());
    }
    MetricSpread { mean, std }
}

/// Runs every `(k, window)` cell and evaluates it against `truth`. Rows come
/// out in grid order, `k` major.
pub fn run_ablation_grid(
    emb: &EmbeddingSet,
    truth: &LabelSet,
    ks: &[usize],
    windows: &[usize],
    base: &PipelineConfig,
    thetas: &[f64],
) -> Result<AblationTable> {
    if ks.is_empty() || windows.is_empty() {
        return Err(Error::param(
            "ablation grid needs at least one k and one window",
        ));
    }
    if truth.count() != emb.count() {
        return Err(Error::LengthMismatch {
            left: truth.count(),
            right: emb.count(),
        });
    }
    let distinct: BTreeSet<usize> = ks.iter().copied().collect();
    let graphs: BTreeMap<usize, Transitions> = distinct
        .into_iter()
        .map(|k| Ok((k, build_transitions(emb, k)?)))
        .collect::<Result<_>>()?;

    let cells: Vec<(usize, usize)> = ks
        .iter()
        .flat_map(|&k| windows.iter().map(move |&w| (k, w)))
        .collect();
    let rows = cells
        .par_iter()
        .map(|&(k, window)| {
            let cfg = PipelineConfig {
                k,
                od: OdConfig {
                    window,
                    mode: base.od.mode,
                },
                ..base.clone()
            };
            let run = cluster_transitions(&graphs[&k], &cfg)?;
            Ok(AblationRow {
                k,
                window,
                metrics: evaluate(&run.partition, truth, thetas)?,
                codelength_bits: run.summary.codelength_bits,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let spread = spread(&rows);
    Ok(AblationTable { rows, spread })
}
