use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use facemap::corpus::{generate_synthetic, load_embeddings, load_labels, SynthSpec};
use facemap::mapeq::load_partition;
use facemap::metrics::evaluate;
use facemap::odetect::{
    adjust_transitions, detect_switch_point, precision_recall_curve, rank_row, DEFAULT_WINDOW,
};
use facemap::pipeline::{build_transitions, cluster_transitions, PipelineConfig, DEFAULT_K};
use facemap::{OdConfig, OdMode, SolverConfig};

#[derive(Parser)]
#[command(
    name = "facemap",
    version,
    about = "Face clustering with map-equation community detection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled synthetic embedding set.
    Synth(SynthArgs),
    /// Cluster an embedding set and write the partition and a run summary.
    Cluster(ClusterArgs),
    /// Score a predicted partition against ground-truth labels.
    Eval(EvalArgs),
    /// Dump one node's ranked transitions and switch-point scores.
    Inspect(InspectArgs),
    /// Write the kNN graph as an edge list.
    Graph(GraphArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    identities: usize,
    #[arg(long)]
    dim: usize,
    /// Images per identity, as MIN..MAX (inclusive) or a single count.
    #[arg(long, value_parser = parse_samples)]
    samples: (usize, usize),
    /// Per-coordinate Gaussian noise added to each identity center.
    #[arg(long)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output stem; writes STEM.meta.json, STEM.f32le and STEM.labels.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GraphOpts {
    /// Embedding metadata file (`*.meta.json`).
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = DEFAULT_K)]
    k: usize,
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    window: usize,
}

#[derive(Args)]
struct ClusterArgs {
    #[command(flatten)]
    graph: GraphOpts,
    /// Pruning mode: adaptive, none, or threshold=DELTA.
    #[arg(long, default_value = "adaptive", value_parser = parse_od)]
    od: OdMode,
    #[arg(long, default_value_t = 0.15)]
    teleport: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    restarts: usize,
    /// Iteration cap for the stationary-distribution solver.
    #[arg(long, default_value_t = 10_000)]
    power_max_iter: usize,
    /// Also write per-row switch-point reports to STEM.switchpoints.json.
    #[arg(long)]
    diagnostics: bool,
    /// Output stem; writes STEM.partition.tsv and STEM.summary.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Partition TSV (`node<TAB>cluster`).
    #[arg(long)]
    pred: PathBuf,
    /// Label file, one identity per line.
    #[arg(long)]
    truth: PathBuf,
    /// Comma-separated identity F-score thresholds.
    #[arg(long, default_value = "0.5,0.9", value_delimiter = ',')]
    theta: Vec<f64>,
}

#[derive(Args)]
struct InspectArgs {
    #[command(flatten)]
    graph: GraphOpts,
    #[arg(long)]
    node: usize,
    /// Adds precision and recall of same-identity neighbors at every rank.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args)]
struct GraphArgs {
    #[command(flatten)]
    graph: GraphOpts,
    /// Row-normalize similarities into transition probabilities.
    #[arg(long)]
    normalize: bool,
    /// Prune transitions first; implies --normalize.
    #[arg(long, value_parser = parse_od)]
    od: Option<OdMode>,
    /// Write the edge list here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_samples(s: &str) -> Result<(usize, usize), String> {
    let (lo, hi) = match s.split_once("..") {
        Some((lo, hi)) => (lo, hi.strip_prefix('=').unwrap_or(hi)),
        None => (s, s),
    };
    let lo: usize = lo.trim().parse().map_err(|_| format!("bad count {lo:?}"))?;
    let hi: usize = hi.trim().parse().map_err(|_| format!("bad count {hi:?}"))?;
    if lo == 0 || lo > hi {
        return Err(format!("expected 1 <= MIN <= MAX, got {lo}..{hi}"));
    }
    Ok((lo, hi))
}

fn parse_od(s: &str) -> Result<OdMode, String> {
    match s {
        "adaptive" => Ok(OdMode::Adaptive),
        "none" => Ok(OdMode::None),
        _ => s
            .strip_prefix("threshold=")
            .and_then(|d| d.parse().ok())
            .map(OdMode::FixedThreshold)
            .ok_or_else(|| format!("expected adaptive, none or threshold=DELTA, got {s:?}")),
    }
}

enum Failure {
    Usage(String),
    Lib(facemap::Error),
}

impl From<facemap::Error> for Failure {
    fn from(e: facemap::Error) -> Self {
        Failure::Lib(e)
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) | Failure::Lib(facemap::Error::InvalidParameter(_)) => 1,
            Failure::Lib(e) if e.is_numerical() => 3,
            Failure::Lib(_) => 2,
        }
    }
}

type Outcome = Result<(), Failure>;

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable value");
    s.push('\n');
    s
}

fn write(path: &Path, contents: &str) -> Outcome {
    fs::write(path, contents).map_err(|source| {
        Failure::Lib(facemap::Error::Io {
            path: path.to_path_buf(),
            source,
        })
    })
}

fn with_suffix(stem: &Path, suffix: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn synth(args: SynthArgs) -> Outcome {
    let spec = SynthSpec {
        identities: args.identities,
        dim: args.dim,
        samples_min: args.samples.0,
        samples_max: args.samples.1,
        noise_sigma: args.noise,
        seed: args.seed,
    };
    let (emb, labels) = generate_synthetic(&spec)?;
    let meta = emb.save(&args.out)?;
    let label_path = with_suffix(&args.out, ".labels");
    labels.save(&label_path)?;
    eprintln!(
        "wrote {} embeddings of dimension {}",
        emb.count(),
        emb.dim()
    );
    print!(
        "{}",
        json(&serde_json::json!({
            "count": emb.count(),
            "dim": emb.dim(),
            "identities": labels.distinct_count(),
            "meta": meta,
            "labels": label_path,
        }))
    );
    Ok(())
}

fn cluster(args: ClusterArgs) -> Outcome {
    let cfg = PipelineConfig {
        k: args.graph.k,
        od: OdConfig {
            window: args.graph.window,
            mode: args.od,
        },
        solver: SolverConfig {
            teleport: args.teleport,
            seed: args.seed,
            restarts: args.restarts,
            power_max_iter: args.power_max_iter,
            ..Default::default()
        },
        emit_diagnostics: args.diagnostics,
    };
    cfg.validate()?;
    let emb = load_embeddings(&args.graph.input)?;
    let graph = build_transitions(&emb, cfg.k)?;
    let run = cluster_transitions(&graph, &cfg)?;
    for w in &run.summary.warnings {
        eprintln!("warning: {w}");
    }
    let t = &run.summary.timings;
    eprintln!(
        "timings (ms): knn {:.1}, normalize {:.1}, outlier {:.1}, optimize {:.1}",
        t.knn_ms, t.normalize_ms, t.outlier_ms, t.optimize_ms
    );
    eprintln!(
        "{} nodes -> {} clusters, L = {:.6} bits",
        run.summary.nodes, run.summary.num_clusters, run.summary.codelength_bits
    );
    write(
        &with_suffix(&args.out, ".partition.tsv"),
        &run.partition.to_tsv(),
    )?;
    let summary = json(&run.summary);
    write(&with_suffix(&args.out, ".summary.json"), &summary)?;
    if args.diagnostics {
        write(
            &with_suffix(&args.out, ".switchpoints.json"),
            &json(&run.reports),
        )?;
    }
    print!("{summary}");
    Ok(())
}

fn eval(args: EvalArgs) -> Outcome {
    let pred = load_partition(&args.pred)?;
    let truth = load_labels(&args.truth)?;
    print!("{}", json(&evaluate(&pred, &truth, &args.theta)?));
    Ok(())
}

#[derive(Serialize)]
struct Inspection {
    k_used: usize,
    window: usize,
    order: Vec<usize>,
    probs: Vec<f64>,
    diffs: Vec<f64>,
    #[serde(flatten)]
    switch: facemap::SwitchPointReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    precision: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    recall: Option<Vec<f64>>,
}

fn inspect(args: InspectArgs) -> Outcome {
    let od = OdConfig::adaptive(args.graph.window);
    od.validate()?;
    let emb = load_embeddings(&args.graph.input)?;
    if args.node >= emb.count() {
        return Err(Failure::Usage(format!(
            "--node {} is out of range for {} embeddings",
            args.node,
            emb.count()
        )));
    }
    let graph = build_transitions(&emb, args.graph.k)?;
    let row = rank_row(&graph.transitions, args.node);
    let switch = detect_switch_point(&row, &od)?;
    let (precision, recall) = match &args.truth {
        Some(path) => {
            let truth = load_labels(path)?;
            let curve = precision_recall_curve(&row, &truth)?;
            let (p, r) = curve.into_iter().unzip();
            (Some(p), Some(r))
        }
        None => (None, None),
    };
    let report = Inspection {
        k_used: graph.k_used,
        window: od.window,
        order: row.order,
        probs: row.probs,
        diffs: row.diffs,
        switch,
        precision,
        recall,
    };
    print!("{}", json(&report));
    Ok(())
}

fn graph(args: GraphArgs) -> Outcome {
    let od = args.od.map(|mode| OdConfig {
        window: args.graph.window,
        mode,
    });
    if let Some(cfg) = &od {
        cfg.validate()?;
    }
    let emb = load_embeddings(&args.graph.input)?;
    let built = build_transitions(&emb, args.graph.k)?;
    for w in &built.warnings {
        eprintln!("warning: {w}");
    }
    let out = match od {
        Some(cfg) => adjust_transitions(&built.transitions, &cfg, Some(&built.affinity))?.0,
        None if args.normalize => built.transitions,
        None => built.affinity,
    };
    eprintln!("{} nodes, {} edges", out.node_count(), out.edge_count());
    match &args.out {
        Some(path) => out.save_edges(path)?,
        None => print!("{}", out.to_tsv()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Cluster(a) => cluster(a),
        Command::Eval(a) => eval(a),
        Command::Inspect(a) => inspect(a),
        Command::Graph(a) => graph(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(msg) => eprintln!("error: {msg}"),
                Failure::Lib(e) => eprintln!("error: {e}"),
            }
            ExitCode::from(f.exit_code())
        }
    }
}
