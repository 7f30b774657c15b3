use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{mean_std, train_model, GraphSet, GroupError, Inputs, Metrics, Task, TrainConfig, TrainError, TrainOutcome};
use crate::graph::{BuildOptions, EdgeType, GraphVariant, NodeKind, SocialGraph};
use crate::model::{representations, Batch, GraphContext, ModelConfig, ModelKind};
use crate::tensor::Matrix;

pub const REPORT_FILE: &str = "report.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const ATTENTION_FILE: &str = "attention.csv";

/// Published F1 scores of the eight compared configurations, best first.
pub const REFERENCE_F1: [(&str, f64); 8] = [
    ("FullGat/PlusCue", 94.5),
    ("FullGat/NoCue", 84.2),
    ("FullGat/NoElicit", 82.0),
    ("FullGat/NoOblivious", 81.4),
    ("UserOnlyGat", 76.1),
    ("TextPlusUser2Vec", 73.4),
    ("TweetTweetGat", 70.1),
    ("TextOnly", 69.9),
];

/// One row of a comparison: a model kind, plus the graph variant for
/// `FullGat`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteEntry {
    pub kind: ModelKind,
    pub variant: Option<GraphVariant>,
}

impl SuiteEntry {
    pub fn new(kind: ModelKind, variant: Option<GraphVariant>) -> Self {
        Self { kind, variant }
    }

    /// Graph the entry trains on; `None` for graph-free baselines.
    pub fn graph_variant(&self) -> Option<GraphVariant> {
        match self.kind {
            ModelKind::FullGat => Some(self.variant.unwrap_or(GraphVariant::NoCue)),
            k => k.fixed_variant(),
        }
    }

    pub fn label(&self) -> String {
        match self.kind {
            ModelKind::FullGat => format!("FullGat/{}", self.graph_variant().unwrap()),
            k => k.to_string(),
        }
    }
}

impl std::str::FromStr for SuiteEntry {
    type Err = TrainError;

    /// Parses labels as printed by [`SuiteEntry::label`]; a bare `FullGat`
    /// means the `NoCue` variant.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = |e: &dyn std::fmt::Display| TrainError::InvalidConfig(format!("suite entry {s:?}: {e}"));
        let (kind, variant) = match s.split_once('/') {
            Some((k, v)) => (k, Some(v.parse::<GraphVariant>().map_err(|e| bad(&e))?)),
            None => (s, None),
        };
        let kind: ModelKind = kind.parse().map_err(|e| bad(&e))?;
        if let Some(v) = variant {
            if !kind.accepts_variant(v) {
                return Err(bad(&format!("{kind} cannot run on {v}")));
            }
        }
        let variant = if kind == ModelKind::FullGat { variant } else { None };
        Ok(SuiteEntry::new(kind, variant))
    }
}

/// The four graph variants of the full model followed by the baselines.
pub fn ablation_entries() -> Vec<SuiteEntry> {
    let mut v: Vec<SuiteEntry> = [
        GraphVariant::PlusCue,
        GraphVariant::NoCue,
        GraphVariant::NoElicit,
        GraphVariant::NoOblivious,
    ]
    .into_iter()
    .map(|g| SuiteEntry::new(ModelKind::FullGat, Some(g)))
    .collect();
    v.extend(
        [
            ModelKind::UserOnlyGat,
            ModelKind::TextPlusUser2Vec,
            ModelKind::TweetTweetGat,
            ModelKind::TextOnly,
        ]
        .into_iter()
        .map(|k| SuiteEntry::new(k, None)),
    );
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub val_f1: f64,
    pub train_accuracy: f64,
    pub test: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl Summary {
    fn of(values: &[f64]) -> Self {
        let (mean, std) = mean_std(values);
        Self {
            mean,
            std,
            min: values.iter().cloned().fold(f64::INFINITY, f64::min),
            max: values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub label: String,
    pub kind: ModelKind,
    pub variant: Option<GraphVariant>,
    pub seeds: Vec<SeedResult>,
    pub precision: Summary,
    pub recall: Summary,
    pub f1: Summary,
    pub accuracy: Summary,
    /// Test confusion matrices summed over seeds, `[gold][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    /// Test error rates per cue-authorship group, pooled over seeds.
    pub cue_errors: BTreeMap<String, GroupError>,
}

/// Mean attention over edges grouped by type and endpoint roles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionGroup {
    pub model: String,
    pub layer: usize,
    pub edge_type: EdgeType,
    pub src_role: String,
    pub dst_role: String,
    pub mean_alpha: f64,
    /// Number of (edge, head, seed) weights averaged.
    pub weights: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceEntry {
    pub label: String,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub task: Task,
    pub config: serde_json::Value,
    pub rows: Vec<ReportRow>,
    pub attention: Vec<AttentionGroup>,
    pub reference: Vec<ReferenceEntry>,
}

fn node_role(graph: &SocialGraph, kind: NodeKind, index: usize) -> String {
    match kind {
        NodeKind::User => "user".into(),
        NodeKind::Tweet => graph.tweet_role(index).as_str().into(),
    }
}

type GroupKey = (usize, EdgeType, String, String);

fn accumulate(graph: &SocialGraph, attention: &[Vec<Matrix>], acc: &mut BTreeMap<GroupKey, (f64, usize)>) {
    let roles: Vec<(String, String)> = graph
        .edges()
        .iter()
        .map(|e| {
            (
                node_role(graph, e.src.kind, e.src.index),
                node_role(graph, e.dst.kind, e.dst.index),
            )
        })
        .collect();
    for (layer, heads) in attention.iter().enumerate() {
        for alpha in heads {
            for (e, edge) in graph.edges().iter().enumerate() {
                let key = (layer, edge.kind, roles[e].0.clone(), roles[e].1.clone());
                let slot = acc.entry(key).or_insert((0.0, 0));
                slot.0 += alpha.get(e, 0);
                slot.1 += 1;
            }
        }
    }
}

fn groups_from(model: &str, acc: BTreeMap<GroupKey, (f64, usize)>) -> Vec<AttentionGroup> {
    acc.into_iter()
        .filter(|(_, (_, n))| *n > 0)
        .map(|((layer, edge_type, src_role, dst_role), (sum, n))| AttentionGroup {
            model: model.to_string(),
            layer,
            edge_type,
            src_role,
            dst_role,
            mean_alpha: sum / n as f64,
            weights: n,
        })
        .collect()
}

/// Average attention per layer over edges grouped by edge type and endpoint
/// roles, pooling heads. `attention[layer][head]` follows `graph.edges()`.
/// Groups without edges do not appear.
pub fn attention_stats(graph: &SocialGraph, attention: &[Vec<Matrix>]) -> Vec<AttentionGroup> {
    let mut acc = BTreeMap::new();
    accumulate(graph, attention, &mut acc);
    groups_from("", acc)
}

fn graph_for<'a>(graphs: &'a GraphSet, entry: &SuiteEntry) -> Option<&'a SocialGraph> {
    entry.graph_variant().and_then(|v| graphs.get(v))
}

/// Train `entry` once per configured seed (in parallel) and summarize.
pub fn run_entry(
    inputs: &Inputs,
    graphs: &GraphSet,
    entry: &SuiteEntry,
    model: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<(ReportRow, Vec<AttentionGroup>, Vec<TrainOutcome>), TrainError> {
    let graph = graph_for(graphs, entry);
    if entry.graph_variant().is_some() && graph.is_none() {
        return Err(TrainError::InvalidConfig(format!("graph for {} was not built", entry.label())));
    }
    let model = ModelConfig {
        kind: entry.kind,
        ..model.clone()
    };
    let outcomes: Vec<TrainOutcome> = cfg
        .seeds
        .par_iter()
        .map(|&seed| train_model(inputs, graph, &model, cfg, seed))
        .collect::<Result<_, _>>()?;

    let seeds: Vec<SeedResult> = outcomes
        .iter()
        .map(|o| SeedResult {
            seed: o.manifest.seed,
            best_epoch: o.best_epoch,
            epochs_run: o.epochs_run,
            val_f1: o.metrics.val.f1,
            train_accuracy: o.metrics.train.accuracy,
            test: o.metrics.test.clone(),
        })
        .collect();
    let pick = |f: fn(&Metrics) -> f64| seeds.iter().map(|s| f(&s.test)).collect::<Vec<_>>();
    let k = seeds[0].test.confusion.len();
    let mut confusion = vec![vec![0usize; k]; k];
    let mut cue_errors: BTreeMap<String, GroupError> = BTreeMap::new();
    for s in &seeds {
        for (g, row) in s.test.confusion.iter().enumerate() {
            for (p, c) in row.iter().enumerate() {
                confusion[g][p] += c;
            }
        }
        for (name, e) in &s.test.cue_errors {
            let slot = cue_errors.entry(name.clone()).or_insert(GroupError {
                count: 0,
                errors: 0,
                rate: 0.0,
            });
            slot.count += e.count;
            slot.errors += e.errors;
        }
    }
    for e in cue_errors.values_mut() {
        e.rate = e.errors as f64 / e.count as f64;
    }

    let mut attention = Vec::new();
    if let (Some(g), true) = (graph, entry.kind.uses_gat()) {
        let data = inputs.data(Some(g));
        let ctx = GraphContext::new(entry.kind, &data)?;
        let mut acc = BTreeMap::new();
        for o in &outcomes {
            let batch = Batch::new(entry.kind, &data, &o.splits.test)?;
            let reps = representations(&o.params, &ctx, &batch)?;
            accumulate(g, &reps.attention, &mut acc);
        }
        attention = groups_from(&entry.label(), acc);
    }

    let row = ReportRow {
        label: entry.label(),
        kind: entry.kind,
        variant: entry.graph_variant(),
        precision: Summary::of(&pick(|m| m.precision)),
        recall: Summary::of(&pick(|m| m.recall)),
        f1: Summary::of(&pick(|m| m.f1)),
        accuracy: Summary::of(&pick(|m| m.accuracy)),
        seeds,
        confusion,
        cue_errors,
    };
    Ok((row, attention, outcomes))
}

/// Train every entry on the same seeds and splits and collect a report.
pub fn run_suite(
    inputs: &Inputs,
    entries: &[SuiteEntry],
    model: &ModelConfig,
    cfg: &TrainConfig,
    build: &BuildOptions,
    config_echo: serde_json::Value,
) -> Result<RunReport, TrainError> {
    cfg.validate()?;
    let mut graphs = GraphSet::default();
    for e in entries {
        if let Some(v) = e.graph_variant() {
            graphs.ensure(&inputs.corpus, v, build)?;
        }
    }
    let mut rows = Vec::new();
    let mut attention = Vec::new();
    for e in entries {
        let (row, att, _) = run_entry(inputs, &graphs, e, model, cfg)?;
        rows.push(row);
        attention.extend(att);
    }
    Ok(RunReport::new(cfg.task, config_echo, rows, attention))
}

#[derive(Serialize)]
struct MetricsRow<'a> {
    model: &'a str,
    seed: String,
    precision: f64,
    recall: f64,
    f1: f64,
    accuracy: f64,
}

impl RunReport {
    /// Attaches the published reference scores.
    pub fn new(task: Task, config: serde_json::Value, rows: Vec<ReportRow>, attention: Vec<AttentionGroup>) -> Self {
        Self {
            task,
            config,
            rows,
            attention,
            reference: REFERENCE_F1
                .iter()
                .map(|(l, f)| ReferenceEntry {
                    label: l.to_string(),
                    f1: *f,
                })
                .collect(),
        }
    }

    pub fn row(&self, label: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    /// `report.json`, `metrics.csv` (per-seed rows plus `mean` and `std`) and
    /// `attention.csv`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<(), TrainError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(REPORT_FILE), serde_json::to_string_pretty(self)? + "\n")?;
        let mut w = csv::Writer::from_path(dir.join(METRICS_FILE))?;
        for r in &self.rows {
            for s in &r.seeds {
                w.serialize(MetricsRow {
                    model: &r.label,
                    seed: s.seed.to_string(),
                    precision: s.test.precision,
                    recall: s.test.recall,
                    f1: s.test.f1,
                    accuracy: s.test.accuracy,
                })?;
            }
            for (name, pick) in [("mean", (|s: &Summary| s.mean) as fn(&Summary) -> f64), ("std", |s| s.std)] {
                w.serialize(MetricsRow {
                    model: &r.label,
                    seed: name.into(),
                    precision: pick(&r.precision),
                    recall: pick(&r.recall),
                    f1: pick(&r.f1),
                    accuracy: pick(&r.accuracy),
                })?;
            }
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(dir.join(ATTENTION_FILE))?;
        for a in &self.attention {
            w.serialize(a)?;
        }
        w.flush()?;
        Ok(())
    }
}
