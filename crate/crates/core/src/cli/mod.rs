//! Command-line workflows. Each subcommand reads files, writes its artifacts
//! and a `manifest.json` under `--out`, and keeps no other state.

mod config;

pub use config::{apply_override, Paths, RunConfig};

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{generate_synthetic, load_corpus, save_corpus, Corpus, SarcasmLabel};
use crate::embed::{read_embeddings, write_embeddings, TweetSource};
use crate::gat::write_attention_csv;
use crate::graph::{build_graph, read_graph, user_majority_labels, write_graph, GraphStats, GraphVariant, SocialGraph};
use crate::model::{load_model, representations, save_model, Batch, GraphContext, ModelKind, ModelManifest, ModelParams, Task, CHECKPOINT_FILE};
use crate::tensor::Matrix;
use crate::train::{
    attention_stats, evaluate, run_entry, run_suite, task_examples, GraphSet, Inputs, RunReport, Splits, SuiteEntry,
    ATTENTION_FILE,
};

pub const MANIFEST: &str = "manifest.json";
pub const TWEET_VECTORS: &str = "tweets.emb";
pub const USER_VECTORS: &str = "users.emb";
pub const SPLITS_FILE: &str = "splits.json";
pub const CURVE_FILE: &str = "curve.json";
pub const GRAPH_STATS_FILE: &str = "graph_stats.json";
pub const EVAL_FILE: &str = "metrics.json";
pub const ATTENTION_EDGES_FILE: &str = "attention_edges.csv";
pub const NODE_EMBEDDINGS_FILE: &str = "node_embeddings.csv";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("no checkpoint at {}", .0.display())]
    MissingCheckpoint(PathBuf),
}

#[derive(Debug, Parser)]
#[command(name = "sarcasm-gat", version, about = "Graph attention models for sarcasm detection on social graphs")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON run configuration; defaults apply to missing keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for the command: corpus seed for `generate`, user2vec seed for
    /// `embed`, the single training seed for `train` and `ablate`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Config override, e.g. `--set train.learning_rate=0.001`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub set: Vec<String>,
    /// Graph variant (NoCue, NoElicit, NoOblivious, PlusCue, TweetTweetOnly, UserOnly).
    #[arg(long, global = true)]
    pub variant: Option<String>,
    /// Model kind (TextOnly, TextPlusUser2Vec, TweetTweetGat, UserOnlyGat, FullGat).
    #[arg(long, global = true)]
    pub model: Option<String>,
    /// detection or perception.
    #[arg(long, global = true)]
    pub task: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitName {
    Train,
    Val,
    Test,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus.
    Generate,
    /// Build a graph variant from a corpus.
    BuildGraph {
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Density and homophily of a written graph.
    GraphStats {
        #[arg(long)]
        graph: PathBuf,
        /// Corpus directory supplying the labels.
        #[arg(long)]
        labels: PathBuf,
    },
    /// Tweet vectors and filled user2vec vectors.
    Embed {
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Train one model over the configured seeds.
    Train {
        #[command(flatten)]
        inputs: InputArgs,
    },
    /// Score a trained checkpoint on one of its splits.
    Evaluate {
        #[command(flatten)]
        inputs: InputArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitName,
    },
    /// Run the ablation suite end to end; generates the corpus unless one is given.
    Ablate {
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Per-edge and grouped attention weights of a trained checkpoint.
    InspectAttention {
        #[command(flatten)]
        inputs: InputArgs,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Initial and learned user representations of a trained checkpoint.
    ExportEmbeddings {
        #[command(flatten)]
        inputs: InputArgs,
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Corpus directory.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Output directory of `embed`.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Graph directory from `build-graph`; built from the corpus when absent.
    #[arg(long)]
    pub graph: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub args: Vec<String>,
    pub version: String,
    pub config: RunConfig,
    pub inputs: BTreeMap<String, PathBuf>,
    pub outputs: Vec<String>,
}

/// Parse `std::env::args`, run, and map failures to exit codes.
pub fn main() -> ExitCode {
    let args: Vec<OsString> = std::env::args_os().collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let argv = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match run(cli, argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn parse_flag<T>(what: &str, value: &str) -> Result<T>
where
    T: std::str::FromStr,
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| CliError::Usage(format!("--{what} {value:?}: {e}")).into())
}

/// Resolve the configuration: file, then `--set`, then the dedicated flags.
pub fn resolve_config(common: &Common, command: &Command) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(common.config.as_deref(), &common.set)?;
    if let Some(v) = &common.variant {
        cfg.variant = parse_flag::<GraphVariant>("variant", v)?;
    }
    if let Some(m) = &common.model {
        cfg.model.kind = parse_flag::<ModelKind>("model", m)?;
    }
    if let Some(t) = &common.task {
        cfg.train.task = parse_flag::<Task>("task", t)?;
    }
    if let Some(seed) = common.seed {
        match command {
            Command::Generate => cfg.synthetic.seed = seed,
            Command::Embed { .. } => cfg.user2vec.seed = seed,
            Command::Train { .. } | Command::Ablate { .. } => cfg.train.seeds = vec![seed],
            _ => {}
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cli: Cli, argv: Vec<String>) -> Result<()> {
    let cfg = resolve_config(&cli.common, &cli.command)?;
    let out = cli.common.out.clone();
    let need_out = || out.clone().ok_or_else(|| CliError::Usage("--out is required".into()));
    let mut run = Run {
        cfg,
        argv,
        inputs: BTreeMap::new(),
    };
    match cli.command {
        Command::Generate => run.generate(&need_out()?),
        Command::BuildGraph { corpus } => run.build_graph(corpus, &need_out()?),
        Command::GraphStats { graph, labels } => run.graph_stats(&graph, &labels, out.as_deref()),
        Command::Embed { corpus } => run.embed(corpus, &need_out()?),
        Command::Train { inputs } => run.train(&inputs, &need_out()?),
        Command::Evaluate {
            inputs,
            checkpoint,
            split,
        } => run.evaluate(&inputs, &checkpoint, split, &need_out()?),
        Command::Ablate { corpus } => run.ablate(corpus, &need_out()?),
        Command::InspectAttention { inputs, checkpoint } => run.inspect_attention(&inputs, &checkpoint, &need_out()?),
        Command::ExportEmbeddings { inputs, checkpoint } => run.export_embeddings(&inputs, &checkpoint, &need_out()?),
    }
}

struct Run {
    cfg: RunConfig,
    argv: Vec<String>,
    inputs: BTreeMap<String, PathBuf>,
}

impl Run {
    fn input(&mut self, name: &str, flag: Option<PathBuf>, fallback: Option<&PathBuf>) -> Result<PathBuf> {
        let path = flag
            .or_else(|| fallback.cloned())
            .ok_or_else(|| CliError::Usage(format!("--{name} is required (or set paths.{name})")))?;
        self.inputs.insert(name.to_string(), path.clone());
        Ok(path)
    }

    fn corpus(&mut self, flag: Option<PathBuf>) -> Result<Corpus> {
        let fallback = self.cfg.paths.corpus.clone();
        let dir = self.input("corpus", flag, fallback.as_ref())?;
        load_corpus(&dir).with_context(|| format!("loading corpus from {}", dir.display()))
    }

    fn model_inputs(&mut self, args: &InputArgs) -> Result<Inputs> {
        let corpus = self.corpus(args.corpus.clone())?;
        let fallback = self.cfg.paths.embeddings.clone();
        let dir = self.input("embeddings", args.embeddings.clone(), fallback.as_ref())?;
        let read = |name: &str| {
            let p = dir.join(name);
            read_embeddings(&p).with_context(|| format!("reading {}", p.display()))
        };
        Ok(Inputs {
            corpus,
            tweets: read(TWEET_VECTORS)?,
            users: read(USER_VECTORS)?,
            user2vec: None,
        })
    }

    fn graph(&mut self, args: &InputArgs, corpus: &Corpus, variant: GraphVariant) -> Result<SocialGraph> {
        match &args.graph {
            Some(dir) => {
                self.inputs.insert("graph".into(), dir.clone());
                let g = read_graph(dir, corpus).with_context(|| format!("reading graph from {}", dir.display()))?;
                if g.variant() != variant {
                    return Err(CliError::Usage(format!("graph is {}, model needs {variant}", g.variant())).into());
                }
                Ok(g)
            }
            None => Ok(build_graph(corpus, variant, &self.cfg.graph).context("building graph")?),
        }
    }

    fn finish(&self, out: &Path, outputs: &[&str]) -> Result<()> {
        let manifest = Manifest {
            command: self.argv.get(1).cloned().unwrap_or_default(),
            args: self.argv.clone(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: self.cfg.clone(),
            inputs: self.inputs.clone(),
            outputs: outputs.iter().map(|s| s.to_string()).collect(),
        };
        std::fs::create_dir_all(out)?;
        std::fs::write(out.join(MANIFEST), serde_json::to_string_pretty(&manifest)? + "\n")
            .with_context(|| format!("writing manifest to {}", out.display()))?;
        Ok(())
    }

    fn generate(&mut self, out: &Path) -> Result<()> {
        let corpus = generate_synthetic(&self.cfg.synthetic).context("generating corpus")?;
        save_corpus(&corpus, out).with_context(|| format!("writing corpus to {}", out.display()))?;
        self.finish(out, &[crate::corpus::TWEETS_FILE, crate::corpus::USERS_FILE])
    }

    fn build_graph(&mut self, corpus: Option<PathBuf>, out: &Path) -> Result<()> {
        let corpus = self.corpus(corpus)?;
        let g = build_graph(&corpus, self.cfg.variant, &self.cfg.graph).context("building graph")?;
        write_graph(&g, out).with_context(|| format!("writing graph to {}", out.display()))?;
        self.finish(out, &[crate::graph::NODES_FILE, crate::graph::EDGES_FILE])
    }

    fn graph_stats(&mut self, graph: &Path, labels: &Path, out: Option<&Path>) -> Result<()> {
        let corpus = self.corpus(Some(labels.to_path_buf()))?;
        self.inputs.insert("graph".into(), graph.to_path_buf());
        let g = read_graph(graph, &corpus).with_context(|| format!("reading graph from {}", graph.display()))?;
        let stats = GraphStats::compute(&g, Some(&corpus.label_table()));
        let text = serde_json::to_string_pretty(&stats)? + "\n";
        print!("{text}");
        if let Some(out) = out {
            std::fs::create_dir_all(out)?;
            std::fs::write(out.join(GRAPH_STATS_FILE), &text)?;
            self.finish(out, &[GRAPH_STATS_FILE])?;
        }
        Ok(())
    }

    fn tweet_source(&mut self) -> Result<TweetSource> {
        match self.cfg.paths.tweet_vectors.clone() {
            Some(p) => {
                self.inputs.insert("tweet_vectors".into(), p.clone());
                let m = read_embeddings(&p).with_context(|| format!("reading tweet vectors from {}", p.display()))?;
                Ok(TweetSource::Precomputed(m))
            }
            None => Ok(TweetSource::Fallback),
        }
    }

    fn prepare(&mut self, corpus: Corpus) -> Result<Inputs> {
        let source = self.tweet_source()?;
        Inputs::prepare(corpus, &source, &self.cfg.user2vec, &self.cfg.graph).context("computing node features")
    }

    fn embed(&mut self, corpus: Option<PathBuf>, out: &Path) -> Result<()> {
        let corpus = self.corpus(corpus)?;
        let inputs = self.prepare(corpus)?;
        std::fs::create_dir_all(out)?;
        write_embeddings(&inputs.tweets, out.join(TWEET_VECTORS))?;
        write_embeddings(&inputs.users, out.join(USER_VECTORS))?;
        std::fs::write(out.join("user2vec.json"), serde_json::to_string_pretty(&inputs.user2vec)? + "\n")?;
        self.finish(out, &[TWEET_VECTORS, USER_VECTORS, "user2vec.json"])
    }

    fn entry(&self) -> Result<SuiteEntry> {
        let kind = self.cfg.model.kind;
        let variant = match kind {
            ModelKind::FullGat => Some(self.cfg.variant),
            _ => None,
        };
        let entry = SuiteEntry::new(kind, variant);
        if let (ModelKind::FullGat, false) = (kind, kind.accepts_variant(self.cfg.variant)) {
            return Err(CliError::Usage(format!("FullGat cannot run on {}", self.cfg.variant)).into());
        }
        Ok(entry)
    }

    fn train(&mut self, args: &InputArgs, out: &Path) -> Result<()> {
        let inputs = self.model_inputs(args)?;
        let entry = self.entry()?;
        let mut graphs = GraphSet::default();
        if let Some(v) = entry.graph_variant() {
            graphs.insert(self.graph(args, &inputs.corpus, v)?);
        }
        let (row, attention, outcomes) =
            run_entry(&inputs, &graphs, &entry, &self.cfg.model, &self.cfg.train).context("training")?;
        let report = RunReport::new(self.cfg.train.task, serde_json::to_value(&self.cfg)?, vec![row], attention);
        report.write(out)?;
        let mut outputs = vec![
            crate::train::REPORT_FILE.to_string(),
            crate::train::METRICS_FILE.to_string(),
            ATTENTION_FILE.to_string(),
        ];
        for o in &outcomes {
            let name = format!("seed-{}", o.manifest.seed);
            let dir = out.join(&name);
            save_model(&o.params, &o.manifest, &dir)?;
            std::fs::write(dir.join(SPLITS_FILE), serde_json::to_string_pretty(&o.splits)? + "\n")?;
            let curve = serde_json::json!({
                "best_epoch": o.best_epoch,
                "train_loss": o.train_loss,
                "val_f1": o.val_f1,
            });
            std::fs::write(dir.join(CURVE_FILE), serde_json::to_string_pretty(&curve)? + "\n")?;
            outputs.push(name);
        }
        let outputs: Vec<&str> = outputs.iter().map(String::as_str).collect();
        self.finish(out, &outputs)
    }

    fn checkpoint(&mut self, dir: &Path) -> Result<(ModelParams, ModelManifest)> {
        if !dir.join(CHECKPOINT_FILE).is_file() {
            return Err(CliError::MissingCheckpoint(dir.to_path_buf()).into());
        }
        self.inputs.insert("checkpoint".into(), dir.to_path_buf());
        load_model(dir).with_context(|| format!("loading model from {}", dir.display()))
    }

    fn checkpoint_graph(&mut self, args: &InputArgs, inputs: &Inputs, manifest: &ModelManifest) -> Result<Option<SocialGraph>> {
        match (manifest.kind.uses_gat(), manifest.variant) {
            (true, Some(v)) => Ok(Some(self.graph(args, &inputs.corpus, v)?)),
            (true, None) => Err(CliError::Usage(format!("{} checkpoint lacks a graph variant", manifest.kind)).into()),
            (false, _) => Ok(None),
        }
    }

    fn evaluate(&mut self, args: &InputArgs, checkpoint: &Path, split: SplitName, out: &Path) -> Result<()> {
        let (params, manifest) = self.checkpoint(checkpoint)?;
        let inputs = self.model_inputs(args)?;
        let graph = self.checkpoint_graph(args, &inputs, &manifest)?;
        let splits_path = checkpoint.join(SPLITS_FILE);
        let splits: Splits = serde_json::from_slice(
            &std::fs::read(&splits_path).with_context(|| format!("reading {}", splits_path.display()))?,
        )?;
        let ids = match split {
            SplitName::Train => &splits.train,
            SplitName::Val => &splits.val,
            SplitName::Test => &splits.test,
        };
        let metrics = evaluate(&params, &inputs, graph.as_ref(), ids, manifest.task).context("evaluating")?;
        std::fs::create_dir_all(out)?;
        let doc = serde_json::json!({ "split": split, "model": manifest, "metrics": metrics });
        std::fs::write(out.join(EVAL_FILE), serde_json::to_string_pretty(&doc)? + "\n")?;
        self.finish(out, &[EVAL_FILE])
    }

    fn ablate(&mut self, corpus: Option<PathBuf>, out: &Path) -> Result<()> {
        let corpus = match corpus.or_else(|| self.cfg.paths.corpus.clone()) {
            Some(dir) => self.corpus(Some(dir))?,
            None => generate_synthetic(&self.cfg.synthetic).context("generating corpus")?,
        };
        let inputs = self.prepare(corpus)?;
        let entries = self.cfg.suite_entries()?;
        let report = run_suite(
            &inputs,
            &entries,
            &self.cfg.model,
            &self.cfg.train,
            &self.cfg.graph,
            serde_json::to_value(&self.cfg)?,
        )
        .context("running ablation suite")?;
        report.write(out)?;
        self.finish(
            out,
            &[crate::train::REPORT_FILE, crate::train::METRICS_FILE, ATTENTION_FILE],
        )
    }

    /// Eval-mode node outputs and attention over the whole graph.
    fn node_pass(
        &self,
        params: &ModelParams,
        manifest: &ModelManifest,
        inputs: &Inputs,
        graph: &SocialGraph,
    ) -> Result<(Matrix, Vec<Vec<Matrix>>)> {
        let data = inputs.data(Some(graph));
        let ctx = GraphContext::new(manifest.kind, &data)?;
        let probe = task_examples(&inputs.corpus, manifest.task)
            .into_iter()
            .map(|e| e.tweet_id)
            .find(|id| Batch::new(manifest.kind, &data, std::slice::from_ref(id)).is_ok())
            .ok_or_else(|| CliError::Usage("no labeled tweet of the checkpoint's task is in the graph".into()))?;
        let batch = Batch::new(manifest.kind, &data, &[probe])?;
        let reps = representations(params, &ctx, &batch)?;
        let nodes = reps
            .nodes
            .ok_or_else(|| CliError::Usage(format!("{} has no graph encoder", manifest.kind)))?;
        Ok((nodes, reps.attention))
    }

    fn inspect_attention(&mut self, args: &InputArgs, checkpoint: &Path, out: &Path) -> Result<()> {
        let (params, manifest) = self.checkpoint(checkpoint)?;
        let inputs = self.model_inputs(args)?;
        let graph = self
            .checkpoint_graph(args, &inputs, &manifest)?
            .ok_or_else(|| CliError::Usage(format!("{} has no attention", manifest.kind)))?;
        let (_, attention) = self.node_pass(&params, &manifest, &inputs, &graph)?;
        std::fs::create_dir_all(out)?;
        write_attention_csv(&graph, &attention, out.join(ATTENTION_EDGES_FILE))?;
        let mut w = csv::Writer::from_path(out.join(ATTENTION_FILE))?;
        let label = SuiteEntry::new(manifest.kind, manifest.variant).label();
        for mut g in attention_stats(&graph, &attention) {
            g.model = label.clone();
            w.serialize(g)?;
        }
        w.flush()?;
        self.finish(out, &[ATTENTION_EDGES_FILE, ATTENTION_FILE])
    }

    fn export_embeddings(&mut self, args: &InputArgs, checkpoint: &Path, out: &Path) -> Result<()> {
        let (params, manifest) = self.checkpoint(checkpoint)?;
        let inputs = self.model_inputs(args)?;
        let graph = self.checkpoint_graph(args, &inputs, &manifest)?;
        let graph = match graph {
            Some(g) if g.num_users() > 0 => g,
            _ => return Err(CliError::Usage(format!("{} does not encode user nodes", manifest.kind)).into()),
        };
        let (nodes, _) = self.node_pass(&params, &manifest, &inputs, &graph)?;
        let rows = user_representations(&params, &inputs, &graph, &nodes)?;
        std::fs::create_dir_all(out)?;
        write_user_rows(&rows, &inputs.corpus, out.join(NODE_EMBEDDINGS_FILE))?;
        self.finish(out, &[NODE_EMBEDDINGS_FILE])
    }
}

/// One exported user representation.
#[derive(Debug, Clone, PartialEq)]
pub struct UserRow {
    pub id: String,
    /// `initial` (input features under the first layer's shared map) or `gat`.
    pub source: &'static str,
    pub values: Vec<f64>,
}

/// Initial and learned rows for every user node, initial rows first. Both
/// live in the `d'`-wide space of the first layer's shared map.
pub fn user_representations(
    params: &ModelParams,
    inputs: &Inputs,
    graph: &SocialGraph,
    nodes: &Matrix,
) -> Result<Vec<UserRow>> {
    let stack = params
        .gat
        .as_ref()
        .ok_or_else(|| CliError::Usage("model has no graph encoder".into()))?;
    let first = stack
        .layers
        .first()
        .ok_or_else(|| CliError::Usage("graph encoder has no layers".into()))?;
    if first.d_hidden() != nodes.cols() {
        return Err(CliError::Usage("export needs head_combine = mean so both spaces match".into()).into());
    }
    let x = inputs.users.select(graph.user_ids().iter().map(String::as_str))?;
    let initial = x.matmul(&first.w)?;
    let mut rows = Vec::with_capacity(2 * graph.num_users());
    for (source, m) in [("initial", &initial), ("gat", nodes)] {
        for (i, id) in graph.user_ids().iter().enumerate() {
            rows.push(UserRow {
                id: id.clone(),
                source,
                values: m.row(i).to_vec(),
            });
        }
    }
    Ok(rows)
}

/// `id,label,source,f0..`; `label` is 1 for a sarcastic majority, 0 for a
/// non-sarcastic one and empty for users without one.
pub fn write_user_rows(rows: &[UserRow], corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let majority = user_majority_labels(&corpus.label_table());
    let dim = rows.first().map_or(0, |r| r.values.len());
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["id".to_string(), "label".to_string(), "source".to_string()];
    header.extend((0..dim).map(|i| format!("f{i}")));
    w.write_record(&header)?;
    for r in rows {
        let label = match majority.get(&r.id) {
            Some(SarcasmLabel::Sarcastic) => "1",
            Some(SarcasmLabel::NonSarcastic) => "0",
            None => "",
        };
        let mut rec = vec![r.id.clone(), label.to_string(), r.source.to_string()];
        rec.extend(r.values.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
