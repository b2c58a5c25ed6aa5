//! Command implementations behind the `hsed` binary.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;
use std::time::Instant;

use crate::config::{Mode, RunConfig};
use crate::contrastive::{train_uhsed, EmbeddingDump, LogisticOptions, LogisticRegression};
use crate::diffcore::Tensor;
use crate::encoders::{train_hsed, HsedModel};
use crate::error::{Error, Result};
use crate::fmt::write_atomic;
use crate::ingest::{build_message_graph, parse_messages, split_dataset, MessageGraph, Split, TokenEmbeddingTable};
use crate::manifold::ManifoldKind;
use crate::metrics::EvalReport;
use crate::synth::{synthetic_tree, SyntheticTreeSpec};

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const EMBEDDINGS_FILE: &str = "embeddings.json";
pub const REPORT_FILE: &str = "report.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GraphSummary {
    pub nodes: usize,
    pub edges: usize,
    pub classes: usize,
}

impl GraphSummary {
    pub fn of(g: &MessageGraph) -> Self {
        GraphSummary { nodes: g.num_nodes(), edges: g.edges.len(), classes: g.num_classes() }
    }
}

impl std::fmt::Display for GraphSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "nodes = {}\nedges = {}\nclasses = {}", self.nodes, self.edges, self.classes)
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::from(e).in_file(path))
}

/// Parses messages and the token table, builds the graph and writes it.
pub fn cmd_build_graph(input: &Path, embeddings: &Path, out: &Path) -> Result<GraphSummary> {
    let records = parse_messages(open(input)?).map_err(|e| e.in_file(input))?;
    let table = TokenEmbeddingTable::parse(open(embeddings)?).map_err(|e| e.in_file(embeddings))?;
    let graph = build_message_graph(&records, &table).map_err(|e| e.in_file(input))?;
    graph.write(out)?;
    Ok(GraphSummary::of(&graph))
}

/// What a training run leaves behind.
#[derive(Debug, Clone)]
pub enum Artifact {
    Checkpoint(HsedModel),
    Embeddings(EmbeddingDump),
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub artifact: Artifact,
    /// Absent for an unsupervised run on an unlabeled graph.
    pub report: Option<EvalReport>,
}

fn split_for(graph: &MessageGraph, config: &RunConfig) -> Result<Split> {
    split_dataset(
        graph.num_nodes(),
        config.train_fraction,
        config.test_fraction,
        config.val_fraction,
        config.seed,
    )
}

/// Fits the downstream classifier on the train rows and scores the test rows.
pub fn evaluate_embeddings(e: &Tensor, labels: &[usize], split: &Split, seed: u64) -> Result<EvalReport> {
    let opts = LogisticOptions { seed, ..LogisticOptions::default() };
    let clf = LogisticRegression::fit(e, labels, &split.train, &opts)?;
    let pred = clf.predict(&e.select_rows(&split.test))?;
    let truth: Vec<usize> = split.test.iter().map(|&i| labels[i]).collect();
    EvalReport::compute(&truth, &pred)
}

/// Runs the configured pipeline in memory.
pub fn run_pipeline(graph: &MessageGraph, config: &RunConfig) -> Result<RunOutcome> {
    config.validate()?;
    let start = Instant::now();
    let enc = config.encoder_config();
    let opts = config.train_options();
    let mut outcome = match config.mode {
        Mode::Hsed => {
            let split = split_for(graph, config)?;
            let out = train_hsed(graph, &enc, &opts, &split)?;
            RunOutcome { artifact: Artifact::Checkpoint(out.model), report: Some(out.report) }
        }
        Mode::Uhsed => {
            let out = train_uhsed(graph, &enc, &config.augmentation_spec(), &opts)?;
            let report = match &graph.labels {
                Some(labels) => Some(evaluate_embeddings(&out.embeddings, labels, &split_for(graph, config)?, config.seed)?),
                None => None,
            };
            let dump = EmbeddingDump { embeddings: out.embeddings, node_ids: graph.node_ids.clone() };
            RunOutcome { artifact: Artifact::Embeddings(dump), report }
        }
    };
    if let Some(r) = &mut outcome.report {
        r.wall_seconds = start.elapsed().as_secs_f64();
    }
    Ok(outcome)
}

/// Trains and writes `checkpoint.json` or `embeddings.json`, plus
/// `report.txt` when labels are available, into the directory `out`.
pub fn cmd_train(graph_path: &Path, config: &RunConfig, out: &Path) -> Result<RunOutcome> {
    let graph = MessageGraph::read(graph_path)?;
    if config.mode == Mode::Hsed && graph.labels.is_none() {
        return Err(Error::invalid("hsed mode needs a labeled graph").in_file(graph_path));
    }
    let outcome = run_pipeline(&graph, config)?;
    std::fs::create_dir_all(out).map_err(|e| Error::from(e).in_file(out))?;
    match &outcome.artifact {
        Artifact::Checkpoint(m) => m.write(&config.train_options(), &out.join(CHECKPOINT_FILE))?,
        Artifact::Embeddings(d) => d.write(&out.join(EMBEDDINGS_FILE))?,
    }
    if let Some(r) = &outcome.report {
        write_atomic(&out.join(REPORT_FILE), r.to_text().as_bytes())?;
    }
    Ok(outcome)
}

/// Scores a saved checkpoint or embedding dump on the test rows of the
/// configured split.
pub fn cmd_eval(graph_path: &Path, artifact: &Path, config: &RunConfig) -> Result<EvalReport> {
    let graph = MessageGraph::read(graph_path)?;
    let labels = graph.labels.as_deref().ok_or_else(|| Error::invalid("evaluation needs labels").in_file(graph_path))?;
    let split = split_for(&graph, config)?;
    let text = std::fs::read_to_string(artifact).map_err(|e| Error::from(e).in_file(artifact))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::from(e).in_file(artifact))?;
    if value.get("format").is_some() {
        let (model, _) = HsedModel::from_json(&text).map_err(|e| e.in_file(artifact))?;
        let pred = model.predict(&graph)?;
        let truth: Vec<usize> = split.test.iter().map(|&i| labels[i]).collect();
        let p: Vec<usize> = split.test.iter().map(|&i| pred[i]).collect();
        EvalReport::compute(&truth, &p)
    } else {
        let dump = EmbeddingDump::from_json(&text).map_err(|e| e.in_file(artifact))?;
        if dump.embeddings.rows() != graph.num_nodes() {
            return Err(Error::invalid("embedding count does not match the graph").in_file(artifact));
        }
        evaluate_embeddings(&dump.embeddings, labels, &split, config.seed)
    }
}

pub fn write_report(path: &Path, report: &EvalReport) -> Result<()> {
    write_atomic(path, report.to_text().as_bytes())
}

pub fn cmd_synth_tree(spec: &SyntheticTreeSpec, out: &Path) -> Result<GraphSummary> {
    let g = synthetic_tree(spec)?;
    g.write(out)?;
    Ok(GraphSummary::of(&g))
}

/// One row of the ablation table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AblationRow {
    pub manifold: ManifoldKind,
    pub report: EvalReport,
}

pub const ABLATION_ORDER: [ManifoldKind; 3] =
    [ManifoldKind::PoincareBall, ManifoldKind::Hyperboloid, ManifoldKind::Euclidean];

/// Runs the configured mode once per manifold with identical seeds.
pub fn ablate(graph: &MessageGraph, config: &RunConfig) -> Result<Vec<AblationRow>> {
    if graph.labels.is_none() {
        return Err(Error::invalid("ablation needs a labeled graph"));
    }
    ABLATION_ORDER
        .iter()
        .map(|&manifold| {
            let c = RunConfig { manifold, ..config.clone() };
            let report = run_pipeline(graph, &c)?.report.expect("labeled graph yields a report");
            Ok(AblationRow { manifold, report })
        })
        .collect()
}

pub fn ablation_table(rows: &[AblationRow]) -> String {
    let mut s = format!(
        "{:<12} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9}\n",
        "manifold", "acc", "nmi", "ami", "ari", "micro_f1", "macro_f1"
    );
    for r in rows {
        let m = &r.report;
        s += &format!(
            "{:<12} {:>9.6} {:>9.6} {:>9.6} {:>9.6} {:>9.6} {:>9.6}\n",
            r.manifold.name(),
            m.acc,
            m.nmi,
            m.ami,
            m.ari,
            m.micro_f1,
            m.macro_f1
        );
    }
    s
}

pub fn cmd_ablate(graph_path: &Path, config: &RunConfig, out: Option<&Path>) -> Result<Vec<AblationRow>> {
    let graph = MessageGraph::read(graph_path)?;
    let rows = ablate(&graph, config)?;
    if let Some(out) = out {
        write_atomic(out, ablation_table(&rows).as_bytes())?;
    }
    Ok(rows)
}
