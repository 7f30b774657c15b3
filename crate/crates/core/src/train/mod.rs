//! Splitting, full-batch training with early stopping, evaluation and the
//! multi-seed ablation driver.

mod metrics;
mod report;
mod split;

pub use metrics::{evaluate_predictions, group_errors, mean_std, GroupError, Metrics};
pub use report::{
    ablation_entries, attention_stats, run_entry, run_suite, AttentionGroup, ReferenceEntry, ReportRow, RunReport,
    SeedResult, Summary, SuiteEntry, ATTENTION_FILE, METRICS_FILE, REFERENCE_F1, REPORT_FILE,
};
pub use split::{make_splits, SplitSpec, Splits};

pub use crate::model::Task;

use std::collections::{BTreeMap, HashMap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, CueAuthorship, SarcasmLabel};
use crate::embed::{
    encode_tweets, fill_missing_users, train_user2vec, EmbedError, EmbeddingMatrix, TweetSource, User2VecConfig,
    User2VecManifest,
};
use crate::gat::Mode;
use crate::graph::{build_graph, BuildOptions, GraphError, GraphVariant, SocialGraph};
use crate::model::{
    forward, predict, Batch, GraphContext, ModelConfig, ModelData, ModelError, ModelManifest, ModelParams,
};
use crate::tensor::{AdamState, Matrix, Parameters, Tape, TensorError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("infeasible split: {0}")]
    InfeasibleSplit(String),
    #[error("training diverged (seed {seed}, epoch {epoch}): loss is {loss}")]
    Divergence { seed: u64, epoch: usize, loss: f64 },
    #[error("empty split")]
    EmptySplit,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Feature dropout; overrides the encoder's own setting.
    pub dropout: f64,
    pub max_epochs: usize,
    /// Epochs without a validation macro-F1 improvement before stopping.
    pub patience: usize,
    /// Warm-up length: the patience window starts here at the earliest.
    pub min_epochs: usize,
    pub seeds: Vec<u64>,
    pub task: Task,
    /// Inverse-frequency class weights in the loss.
    pub class_weighting: bool,
    pub test_fraction: f64,
    pub val_fraction: f64,
    pub split_tolerance: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            dropout: 0.4,
            max_epochs: 500,
            patience: 20,
            min_epochs: 0,
            seeds: (1..=10).collect(),
            task: Task::Detection,
            class_weighting: false,
            test_fraction: 0.1,
            val_fraction: 0.1,
            split_tolerance: 0.02,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::InvalidConfig("learning_rate must be positive".into()));
        }
        if self.max_epochs == 0 || self.patience >= self.max_epochs {
            return Err(TrainError::InvalidConfig("need 0 < patience < max_epochs".into()));
        }
        if self.min_epochs > self.max_epochs {
            return Err(TrainError::InvalidConfig("min_epochs exceeds max_epochs".into()));
        }
        if self.seeds.is_empty() {
            return Err(TrainError::InvalidConfig("at least one seed is required".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(TrainError::InvalidConfig("dropout must lie in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn split_spec(&self, seed: u64) -> SplitSpec {
        SplitSpec {
            test_fraction: self.test_fraction,
            val_fraction: self.val_fraction,
            tolerance: self.split_tolerance,
            seed: mix(seed, 0x53_504c_4954),
            ..Default::default()
        }
    }
}

/// A labeled tweet for the chosen task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub tweet_id: String,
    pub author_id: String,
    pub class: usize,
    pub cue: Option<CueAuthorship>,
}

/// Detection: every sarcastic or non-sarcastic tweet. Perception: sarcastic
/// tweets with a cue, labeled intended (0) or perceived (1).
pub fn task_examples(corpus: &Corpus, task: Task) -> Vec<Example> {
    corpus
        .label_table()
        .into_iter()
        .filter_map(|r| {
            let class = match task {
                Task::Detection => r.label.class_index(),
                Task::Perception => match (r.label, r.cue) {
                    (SarcasmLabel::Sarcastic, Some(c)) => c.class_index(),
                    _ => return None,
                },
            };
            Some(Example {
                tweet_id: r.tweet_id,
                author_id: r.author_id,
                class,
                cue: r.cue,
            })
        })
        .collect()
}

/// Corpus plus its node features: 768-dim tweet vectors and filled user
/// vectors for every corpus user.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub corpus: Corpus,
    pub tweets: EmbeddingMatrix,
    pub users: EmbeddingMatrix,
    pub user2vec: Option<User2VecManifest>,
}

impl Inputs {
    pub fn prepare(
        corpus: Corpus,
        source: &TweetSource,
        user2vec: &User2VecConfig,
        build: &BuildOptions,
    ) -> Result<Self, TrainError> {
        let tweets = encode_tweets(&corpus, source)?;
        let trained = train_user2vec(&corpus, user2vec)?;
        let social = build_graph(&corpus, GraphVariant::UserOnly, build)?;
        let users = fill_missing_users(&trained.embeddings, &social)?;
        Ok(Self {
            corpus,
            tweets,
            users,
            user2vec: Some(trained.manifest),
        })
    }

    pub fn data<'a>(&'a self, graph: Option<&'a SocialGraph>) -> ModelData<'a> {
        ModelData {
            corpus: &self.corpus,
            graph,
            tweets: &self.tweets,
            users: &self.users,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub train: Metrics,
    pub val: Metrics,
    pub test: Metrics,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub manifest: ModelManifest,
    pub splits: Splits,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub train_loss: Vec<f64>,
    pub val_f1: Vec<f64>,
    pub metrics: SplitMetrics,
}

pub(crate) fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn labels_of(ids: &[String], by_id: &HashMap<&str, &Example>) -> Vec<usize> {
    ids.iter().map(|id| by_id[id.as_str()].class).collect()
}

fn argmax_rows(p: &Matrix) -> Vec<usize> {
    (0..p.rows())
        .map(|r| {
            p.row(r)
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                .0
        })
        .collect()
}

fn class_weights(labels: &[usize], k: usize) -> Vec<f64> {
    let mut counts = vec![0usize; k];
    labels.iter().for_each(|&l| counts[l] += 1);
    counts
        .iter()
        .map(|&c| if c == 0 { 0.0 } else { labels.len() as f64 / (k as f64 * c as f64) })
        .collect()
}

/// Score `params` on `ids`, attaching cue-authorship error rates.
pub fn evaluate(
    params: &ModelParams,
    inputs: &Inputs,
    graph: Option<&SocialGraph>,
    ids: &[String],
    task: Task,
) -> Result<Metrics, TrainError> {
    if ids.is_empty() {
        return Err(TrainError::EmptySplit);
    }
    let examples = task_examples(&inputs.corpus, task);
    let by_id: HashMap<&str, &Example> = examples.iter().map(|e| (e.tweet_id.as_str(), e)).collect();
    for id in ids {
        if !by_id.contains_key(id.as_str()) {
            return Err(ModelError::UnknownTweet(id.clone()).into());
        }
    }
    let data = inputs.data(graph);
    let ctx = GraphContext::new(params.kind(), &data)?;
    let batch = Batch::new(params.kind(), &data, ids)?;
    score(params, &ctx, &batch, &by_id)
}

fn score(
    params: &ModelParams,
    ctx: &GraphContext,
    batch: &Batch,
    by_id: &HashMap<&str, &Example>,
) -> Result<Metrics, TrainError> {
    let pred = argmax_rows(&predict(params, ctx, batch)?);
    let gold = labels_of(&batch.tweet_ids, by_id);
    let mut m = evaluate_predictions(&pred, &gold, params.config.num_classes)?;
    let groups: Vec<Option<&str>> = batch
        .tweet_ids
        .iter()
        .map(|id| by_id[id.as_str()].cue.map(CueAuthorship::as_str))
        .collect();
    m.cue_errors = group_errors(&pred, &gold, &groups);
    Ok(m)
}

/// Train one model for one seed. The seed drives the split, the weight
/// initialization and dropout.
pub fn train_model(
    inputs: &Inputs,
    graph: Option<&SocialGraph>,
    model: &ModelConfig,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    let mut model_cfg = model.clone();
    model_cfg.gat.dropout = cfg.dropout;
    model_cfg.num_classes = 2;
    let kind = model_cfg.kind;

    let examples = task_examples(&inputs.corpus, cfg.task);
    let by_id: HashMap<&str, &Example> = examples.iter().map(|e| (e.tweet_id.as_str(), e)).collect();
    let splits = make_splits(&examples, 2, &cfg.split_spec(seed))?;

    let data = inputs.data(graph);
    let ctx = GraphContext::new(kind, &data)?;
    let train_batch = Batch::new(kind, &data, &splits.train)?;
    let val_batch = Batch::new(kind, &data, &splits.val)?;
    let test_batch = Batch::new(kind, &data, &splits.test)?;
    let train_labels = labels_of(&splits.train, &by_id);
    let val_labels = labels_of(&splits.val, &by_id);
    let weights = cfg.class_weighting.then(|| class_weights(&train_labels, 2));

    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, 0x494e_4954));
    let mut params = ModelParams::new(model_cfg.clone(), &mut rng)?;
    let mut adam = AdamState::new(cfg.learning_rate, params.named_params().into_iter().map(|(_, m)| m));

    let mut best = (f64::NEG_INFINITY, 0usize, params.clone());
    let mut train_loss = Vec::new();
    let mut val_f1 = Vec::new();
    for epoch in 0..cfg.max_epochs {
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape, true);
        let mode = Mode::Train {
            seed: mix(seed, epoch as u64 + 1),
        };
        let out = forward(&mut tape, &bound, kind, &ctx, &train_batch, mode)?;
        let loss = tape.weighted_cross_entropy(out.logits, &train_labels, weights.as_deref())?;
        let lv = tape.value(loss).item()?;
        if !lv.is_finite() {
            return Err(TrainError::Divergence { seed, epoch, loss: lv });
        }
        let grads = tape.backward(loss)?;
        let g: Vec<Matrix> = bound.vars().iter().map(|&v| grads.get_or_zeros(v)).collect();
        adam.step(&mut params.params_mut(), &g)?;
        train_loss.push(lv);

        let pred = argmax_rows(&predict(&params, &ctx, &val_batch)?);
        let f1 = evaluate_predictions(&pred, &val_labels, 2)?.f1;
        val_f1.push(f1);
        if f1 > best.0 {
            best = (f1, epoch, params.clone());
        } else if epoch >= cfg.min_epochs && epoch - best.1.max(cfg.min_epochs) >= cfg.patience {
            break;
        }
    }
    let (_, best_epoch, params) = best;
    let metrics = SplitMetrics {
        train: score(&params, &ctx, &train_batch, &by_id)?,
        val: score(&params, &ctx, &val_batch, &by_id)?,
        test: score(&params, &ctx, &test_batch, &by_id)?,
    };
    let manifest = ModelManifest {
        kind,
        variant: graph.map(|g| g.variant()),
        task: cfg.task,
        seed,
        parameter_count: params.param_count(),
        config: model_cfg,
    };
    Ok(TrainOutcome {
        params,
        manifest,
        splits,
        best_epoch,
        epochs_run: val_f1.len(),
        train_loss,
        val_f1,
        metrics,
    })
}

/// Graphs built once per variant and shared across runs.
#[derive(Debug, Default)]
pub struct GraphSet {
    graphs: BTreeMap<GraphVariant, SocialGraph>,
}

impl GraphSet {
    pub fn ensure(&mut self, corpus: &Corpus, variant: GraphVariant, build: &BuildOptions) -> Result<(), TrainError> {
        if let std::collections::btree_map::Entry::Vacant(e) = self.graphs.entry(variant) {
            e.insert(build_graph(corpus, variant, build)?);
        }
        Ok(())
    }

    /// Add a prebuilt graph, replacing any graph of the same variant.
    pub fn insert(&mut self, graph: SocialGraph) {
        self.graphs.insert(graph.variant(), graph);
    }

    pub fn get(&self, variant: GraphVariant) -> Option<&SocialGraph> {
        self.graphs.get(&variant)
    }
}
