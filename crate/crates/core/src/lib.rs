//! Face clustering as community detection.
//!
//! Embeddings are linked into a directed kNN graph whose rows become random
//! walk transition probabilities. Each row is pruned at an adaptively
//! detected switch point between same-identity neighbors and the noisy tail,
//! and the pruned graph is partitioned by minimizing the two-level map
//! equation.

pub mod corpus;
pub mod error;
pub mod knngraph;
pub mod mapeq;
pub mod metrics;
pub mod odetect;
pub mod pipeline;

pub use corpus::{EmbeddingSet, LabelSet, SynthSpec};
pub use error::{Error, Result};
pub use knngraph::SparseRowGraph;
pub use mapeq::{FlowStats, Partition, SolverConfig};
pub use metrics::MetricsReport;
pub use odetect::{OdConfig, OdMode, RankedRow, SwitchPointReport};
pub use pipeline::{PipelineConfig, RunSummary};
