//! The full classifier and its baselines.

mod persist;

pub use persist::{load_model, save_model, ModelManifest, Task, CHECKPOINT_FILE, MANIFEST_FILE};

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::embed::{EmbedError, EmbeddingMatrix, TWEET_DIM};
use crate::gat::{stack_forward_tape, BoundStack, GatError, GatStack, GatStackConfig, Mode, StackVars};
use crate::graph::{EdgeIndex, GraphVariant, SocialGraph};
use crate::tensor::{glorot_uniform, Matrix, Parameters, SparseRows, Tape, TensorError, Var};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("tweet {0:?} is not available to this model")]
    UnknownTweet(String),
    #[error("author {author:?} of tweet {tweet:?} has no user representation")]
    MissingAuthor { tweet: String, author: String },
    #[error("empty batch")]
    EmptyBatch,
    #[error("{kind} cannot run on graph variant {variant}")]
    WrongGraph { kind: ModelKind, variant: GraphVariant },
    #[error("{0} needs a graph")]
    MissingGraph(ModelKind),
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("unknown model kind {0:?}")]
    UnknownKind(String),
    #[error(transparent)]
    Gat(#[from] GatError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    TextOnly,
    TextPlusUser2Vec,
    TweetTweetGat,
    UserOnlyGat,
    FullGat,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::TextOnly,
        ModelKind::TextPlusUser2Vec,
        ModelKind::TweetTweetGat,
        ModelKind::UserOnlyGat,
        ModelKind::FullGat,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::TextOnly => "TextOnly",
            ModelKind::TextPlusUser2Vec => "TextPlusUser2Vec",
            ModelKind::TweetTweetGat => "TweetTweetGat",
            ModelKind::UserOnlyGat => "UserOnlyGat",
            ModelKind::FullGat => "FullGat",
        }
    }

    pub fn uses_gat(self) -> bool {
        matches!(self, ModelKind::TweetTweetGat | ModelKind::UserOnlyGat | ModelKind::FullGat)
    }

    /// Graph the kind is pinned to, if any. `FullGat` takes any variant with
    /// both users and tweets.
    pub fn fixed_variant(self) -> Option<GraphVariant> {
        match self {
            ModelKind::TweetTweetGat => Some(GraphVariant::TweetTweetOnly),
            ModelKind::UserOnlyGat => Some(GraphVariant::UserOnly),
            _ => None,
        }
    }

    pub fn accepts_variant(self, variant: GraphVariant) -> bool {
        match self {
            ModelKind::FullGat => variant.has_users() && variant.has_tweets(),
            ModelKind::TweetTweetGat => variant == GraphVariant::TweetTweetOnly,
            ModelKind::UserOnlyGat => variant == GraphVariant::UserOnly,
            ModelKind::TextOnly | ModelKind::TextPlusUser2Vec => true,
        }
    }

    fn text_bypass(self) -> bool {
        matches!(self, ModelKind::TextOnly | ModelKind::TextPlusUser2Vec | ModelKind::UserOnlyGat)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s.chars().filter(|c| *c != '-' && *c != '_').collect();
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(&norm))
            .ok_or_else(|| ModelError::UnknownKind(s.into()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// Width of precomputed tweet vectors.
    pub tweet_dim: usize,
    /// Encoder settings; `gat.d_in` is the shared node dimension `d`.
    pub gat: GatStackConfig,
    /// Hidden width `d1` of the classification head.
    pub head_hidden: usize,
    pub num_classes: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::FullGat,
            tweet_dim: TWEET_DIM,
            gat: GatStackConfig::default(),
            head_hidden: 64,
            num_classes: 2,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        self.gat.validate()?;
        if self.tweet_dim == 0 || self.head_hidden == 0 {
            return Err(ModelError::InvalidConfig("dimensions must be positive".into()));
        }
        if self.num_classes < 2 {
            return Err(ModelError::InvalidConfig("need at least two classes".into()));
        }
        if self.kind.uses_gat() && self.gat.n_layers == 0 {
            return Err(ModelError::InvalidConfig(format!("{} needs at least one GAT layer", self.kind)));
        }
        Ok(())
    }

    /// Width of `h_t` and `h_u`.
    pub fn node_dim(&self) -> usize {
        self.gat.layer_out_dim()
    }
}

/// Two-layer head: `w1` is `2d' x d1`, `w2` is `d1 x o`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierParams {
    pub w1: Matrix,
    pub w2: Matrix,
}

/// All trainable parts. Bypass maps (`d -> d'` with ReLU) stand in for the
/// encoder on paths that skip the GAT.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub projection: Matrix,
    pub gat: Option<GatStack>,
    pub bypass_tweet: Option<Matrix>,
    pub bypass_user: Option<Matrix>,
    pub head: ClassifierParams,
}

impl ModelParams {
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self, ModelError> {
        config.validate()?;
        let (d, h) = (config.gat.d_in, config.node_dim());
        let projection = glorot_uniform(config.tweet_dim, d, rng);
        let gat = if config.kind.uses_gat() {
            Some(GatStack::new(config.gat.clone(), rng)?)
        } else {
            None
        };
        let bypass_tweet = config.kind.text_bypass().then(|| glorot_uniform(d, h, rng));
        let bypass_user = (config.kind == ModelKind::TextPlusUser2Vec).then(|| glorot_uniform(d, h, rng));
        let head = ClassifierParams {
            w1: glorot_uniform(2 * h, config.head_hidden, rng),
            w2: glorot_uniform(config.head_hidden, config.num_classes, rng),
        };
        Ok(Self {
            config,
            projection,
            gat,
            bypass_tweet,
            bypass_user,
            head,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.config.kind
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundModel {
        let mut put = |m: &Matrix| {
            if trainable {
                tape.param(m.clone())
            } else {
                tape.constant(m.clone())
            }
        };
        let projection = put(&self.projection);
        let bypass_tweet = self.bypass_tweet.as_ref().map(&mut put);
        let bypass_user = self.bypass_user.as_ref().map(&mut put);
        let w1 = put(&self.head.w1);
        let w2 = put(&self.head.w2);
        let gat = self.gat.as_ref().map(|g| g.bind(tape, trainable));
        BoundModel {
            projection,
            gat,
            bypass_tweet,
            bypass_user,
            w1,
            w2,
            dropout: self.config.gat.dropout,
        }
    }
}

impl Parameters for ModelParams {
    fn named_params(&self) -> Vec<(String, &Matrix)> {
        let mut out = vec![("projection".to_string(), &self.projection)];
        if let Some(b) = &self.bypass_tweet {
            out.push(("bypass_tweet".into(), b));
        }
        if let Some(b) = &self.bypass_user {
            out.push(("bypass_user".into(), b));
        }
        out.push(("head.w1".into(), &self.head.w1));
        out.push(("head.w2".into(), &self.head.w2));
        if let Some(g) = &self.gat {
            out.extend(g.named_params());
        }
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = vec![&mut self.projection];
        if let Some(b) = &mut self.bypass_tweet {
            out.push(b);
        }
        if let Some(b) = &mut self.bypass_user {
            out.push(b);
        }
        out.push(&mut self.head.w1);
        out.push(&mut self.head.w2);
        if let Some(g) = &mut self.gat {
            out.extend(g.params_mut());
        }
        out
    }
}

/// Tape handles of a bound model.
#[derive(Debug, Clone)]
pub struct BoundModel {
    pub projection: Var,
    pub gat: Option<BoundStack>,
    pub bypass_tweet: Option<Var>,
    pub bypass_user: Option<Var>,
    pub w1: Var,
    pub w2: Var,
    dropout: f64,
}

impl BoundModel {
    /// Vars in [`Parameters`] order.
    pub fn vars(&self) -> Vec<Var> {
        let mut out = vec![self.projection];
        out.extend(self.bypass_tweet);
        out.extend(self.bypass_user);
        out.push(self.w1);
        out.push(self.w2);
        if let Some(g) = &self.gat {
            out.extend(g.vars());
        }
        out
    }
}

/// Everything a model reads: tweet vectors (`tweet_dim` wide), user vectors
/// (`d` wide), and the graph for GAT kinds.
#[derive(Debug, Clone, Copy)]
pub struct ModelData<'a> {
    pub corpus: &'a Corpus,
    pub graph: Option<&'a SocialGraph>,
    pub tweets: &'a EmbeddingMatrix,
    pub users: &'a EmbeddingMatrix,
}

/// Graph-level constants shared by every batch.
#[derive(Debug, Clone)]
pub struct GraphContext {
    pub kind: ModelKind,
    pub variant: Option<GraphVariant>,
    pub edges: Option<EdgeIndex>,
    pub num_users: usize,
    user_x: Option<Matrix>,
    tweet_x: Option<Arc<SparseRows>>,
}

impl GraphContext {
    pub fn new(kind: ModelKind, data: &ModelData) -> Result<Self, ModelError> {
        if !kind.uses_gat() {
            return Ok(Self {
                kind,
                variant: data.graph.map(|g| g.variant()),
                edges: None,
                num_users: 0,
                user_x: None,
                tweet_x: None,
            });
        }
        let graph = data.graph.ok_or(ModelError::MissingGraph(kind))?;
        if !kind.accepts_variant(graph.variant()) {
            return Err(ModelError::WrongGraph {
                kind,
                variant: graph.variant(),
            });
        }
        let user_x = (graph.num_users() > 0)
            .then(|| data.users.select(graph.user_ids().iter().map(String::as_str)))
            .transpose()?;
        let tweet_x = (graph.num_tweets() > 0)
            .then(|| data.tweets.select(graph.tweet_ids().iter().map(String::as_str)))
            .transpose()?
            .map(|m| Arc::new(SparseRows::from_dense(&m)));
        Ok(Self {
            kind,
            variant: Some(graph.variant()),
            edges: Some(graph.edge_index()),
            num_users: graph.num_users(),
            user_x,
            tweet_x,
        })
    }
}

/// A resolved set of tweets to classify.
#[derive(Debug, Clone)]
pub struct Batch {
    pub tweet_ids: Vec<String>,
    /// Global GAT node of each tweet, for kinds that encode tweets with the GAT.
    tweet_nodes: Option<Arc<[usize]>>,
    /// Global GAT node of each author, for kinds that encode users with the GAT.
    author_nodes: Option<Arc<[usize]>>,
    text: Option<Arc<SparseRows>>,
    users: Option<Matrix>,
}

impl Batch {
    pub fn new(kind: ModelKind, data: &ModelData, tweet_ids: &[String]) -> Result<Self, ModelError> {
        if tweet_ids.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        let mut authors = Vec::with_capacity(tweet_ids.len());
        for id in tweet_ids {
            let t = data.corpus.tweet(id).ok_or_else(|| ModelError::UnknownTweet(id.clone()))?;
            authors.push(t.author_id.as_str());
        }
        let missing_author = |i: usize| ModelError::MissingAuthor {
            tweet: tweet_ids[i].clone(),
            author: authors[i].to_string(),
        };
        let graph = if kind.uses_gat() {
            Some(data.graph.ok_or(ModelError::MissingGraph(kind))?)
        } else {
            None
        };
        let tweet_nodes = match (kind, graph) {
            (ModelKind::FullGat | ModelKind::TweetTweetGat, Some(g)) => Some(
                tweet_ids
                    .iter()
                    .map(|id| {
                        g.tweet_node(id)
                            .map(|n| g.global(n))
                            .ok_or_else(|| ModelError::UnknownTweet(id.clone()))
                    })
                    .collect::<Result<Arc<[usize]>, _>>()?,
            ),
            _ => None,
        };
        let author_nodes = match (kind, graph) {
            (ModelKind::FullGat | ModelKind::UserOnlyGat, Some(g)) => Some(
                (0..tweet_ids.len())
                    .map(|i| g.user_node(authors[i]).map(|n| g.global(n)).ok_or_else(|| missing_author(i)))
                    .collect::<Result<Arc<[usize]>, _>>()?,
            ),
            _ => None,
        };
        let text = if kind.text_bypass() {
            let dense = data.tweets.select(tweet_ids.iter().map(String::as_str))?;
            Some(Arc::new(SparseRows::from_dense(&dense)))
        } else {
            None
        };
        let users = if kind == ModelKind::TextPlusUser2Vec {
            for (i, a) in authors.iter().enumerate() {
                if data.users.position(a).is_none() {
                    return Err(missing_author(i));
                }
            }
            Some(data.users.select(authors.iter().copied())?)
        } else {
            None
        };
        Ok(Self {
            tweet_ids: tweet_ids.to_vec(),
            tweet_nodes,
            author_nodes,
            text,
            users,
        })
    }

    pub fn len(&self) -> usize {
        self.tweet_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tweet_ids.is_empty()
    }
}

/// Tape outputs of a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardVars {
    pub logits: Var,
    pub h_tweet: Var,
    pub h_user: Var,
    pub gat: Option<StackVars>,
}

fn maybe_dropout(tape: &mut Tape, x: Var, p: f64, mode: Mode, salt: u64) -> Result<Var, TensorError> {
    match mode {
        Mode::Train { seed } if p > 0.0 => tape.dropout(x, p, seed ^ salt),
        _ => Ok(x),
    }
}

fn bypass(tape: &mut Tape, x: Var, w: Option<Var>, p: f64, mode: Mode, salt: u64) -> Result<Var, ModelError> {
    let w = w.ok_or_else(|| ModelError::InvalidConfig("missing bypass parameters".into()))?;
    let x = maybe_dropout(tape, x, p, mode, salt)?;
    let y = tape.matmul(x, w)?;
    Ok(tape.relu(y))
}

const SALT_TWEET: u64 = 0x7477_6565_7400_0001;
const SALT_USER: u64 = 0x7573_6572_0000_0002;

/// Logits for `batch`, `len x o`.
pub fn forward(
    tape: &mut Tape,
    model: &BoundModel,
    kind: ModelKind,
    ctx: &GraphContext,
    batch: &Batch,
    mode: Mode,
) -> Result<ForwardVars, ModelError> {
    if batch.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    let n = batch.len();
    let h_dim = tape.shape(model.w1).0 / 2;

    let gat = if kind.uses_gat() {
        let edges = ctx.edges.as_ref().ok_or(ModelError::MissingGraph(kind))?;
        let stack = model
            .gat
            .as_ref()
            .ok_or_else(|| ModelError::InvalidConfig("missing GAT parameters".into()))?;
        let users = ctx.user_x.clone().map(|u| tape.constant(u));
        let tweets = match &ctx.tweet_x {
            Some(t) => Some(tape.sparse_matmul(t.clone(), model.projection)?),
            None => None,
        };
        let x = match (users, tweets) {
            (Some(u), Some(t)) => tape.concat_rows(u, t)?,
            (Some(u), None) => u,
            (None, Some(t)) => t,
            (None, None) => return Err(ModelError::MissingGraph(kind)),
        };
        Some(stack_forward_tape(tape, stack, x, edges, mode)?)
    } else {
        None
    };

    let text_path = |tape: &mut Tape| -> Result<Var, ModelError> {
        let t = batch.text.clone().ok_or(ModelError::EmptyBatch)?;
        let p = tape.sparse_matmul(t, model.projection)?;
        bypass(tape, p, model.bypass_tweet, model.dropout, mode, SALT_TWEET)
    };
    let zeros = |tape: &mut Tape| tape.constant(Matrix::zeros(n, h_dim));

    let (h_tweet, h_user) = match kind {
        ModelKind::TextOnly => (text_path(tape)?, zeros(tape)),
        ModelKind::TextPlusUser2Vec => {
            let t = text_path(tape)?;
            let u = tape.constant(batch.users.clone().ok_or(ModelError::EmptyBatch)?);
            (t, bypass(tape, u, model.bypass_user, model.dropout, mode, SALT_USER)?)
        }
        ModelKind::TweetTweetGat => {
            let out = gat.as_ref().unwrap().output;
            let t = tape.row_gather(out, batch.tweet_nodes.clone().ok_or(ModelError::EmptyBatch)?)?;
            (t, zeros(tape))
        }
        ModelKind::UserOnlyGat => {
            let out = gat.as_ref().unwrap().output;
            let u = tape.row_gather(out, batch.author_nodes.clone().ok_or(ModelError::EmptyBatch)?)?;
            (text_path(tape)?, u)
        }
        ModelKind::FullGat => {
            let out = gat.as_ref().unwrap().output;
            let t = tape.row_gather(out, batch.tweet_nodes.clone().ok_or(ModelError::EmptyBatch)?)?;
            let u = tape.row_gather(out, batch.author_nodes.clone().ok_or(ModelError::EmptyBatch)?)?;
            (t, u)
        }
    };
    let z = tape.concat_cols(h_tweet, h_user)?;
    let hidden = tape.matmul(z, model.w1)?;
    let hidden = tape.relu(hidden);
    let logits = tape.matmul(hidden, model.w2)?;
    Ok(ForwardVars {
        logits,
        h_tweet,
        h_user,
        gat,
    })
}

/// Class probabilities (eval mode), one row per batch tweet.
pub fn predict(params: &ModelParams, ctx: &GraphContext, batch: &Batch) -> Result<Matrix, ModelError> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, false);
    let out = forward(&mut tape, &bound, params.kind(), ctx, batch, Mode::Eval)?;
    Ok(tape.value(out.logits).softmax_rows())
}

/// Mean (optionally class-weighted) cross-entropy in eval mode.
pub fn loss(
    params: &ModelParams,
    ctx: &GraphContext,
    batch: &Batch,
    labels: &[usize],
    class_weights: Option<&[f64]>,
) -> Result<f64, ModelError> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, false);
    let out = forward(&mut tape, &bound, params.kind(), ctx, batch, Mode::Eval)?;
    let l = tape.weighted_cross_entropy(out.logits, labels, class_weights)?;
    Ok(tape.value(l).item()?)
}

/// Eval-mode node representations: the GAT output for every graph node, or
/// `[h_t | h_u]` rows for the batch when no GAT is used.
pub fn representations(params: &ModelParams, ctx: &GraphContext, batch: &Batch) -> Result<Representations, ModelError> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, false);
    let out = forward(&mut tape, &bound, params.kind(), ctx, batch, Mode::Eval)?;
    let joint = tape.concat_cols(out.h_tweet, out.h_user)?;
    Ok(Representations {
        nodes: out.gat.as_ref().map(|g| tape.value(g.output).clone()),
        attention: out
            .gat
            .as_ref()
            .map(|g| {
                g.layers
                    .iter()
                    .map(|l| l.alpha.iter().map(|&a| tape.value(a).clone()).collect())
                    .collect()
            })
            .unwrap_or_default(),
        batch: tape.value(joint).clone(),
    })
}

#[derive(Debug, Clone)]
pub struct Representations {
    pub nodes: Option<Matrix>,
    pub attention: Vec<Vec<Matrix>>,
    pub batch: Matrix,
}
