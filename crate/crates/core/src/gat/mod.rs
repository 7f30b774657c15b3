//! Multi-head graph attention layers and the stacked encoder.

use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{EdgeIndex, SocialGraph};
use crate::tensor::{glorot_uniform, Matrix, Parameters, Tape, TensorError, Var};

/// Negative slope of the LeakyReLU inside the attention function.
pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Error)]
pub enum GatError {
    #[error("node {0} has no incoming edge (missing self-loop)")]
    IsolatedNodeWithoutSelfLoop(usize),
    #[error("invalid GAT config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadCombine {
    Mean,
    Concat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatStackConfig {
    pub n_layers: usize,
    pub heads: usize,
    pub d_in: usize,
    pub d_hidden: usize,
    pub dropout: f64,
    pub head_combine: HeadCombine,
}

impl Default for GatStackConfig {
    fn default() -> Self {
        Self {
            n_layers: 3,
            heads: 4,
            d_in: 400,
            d_hidden: 100,
            dropout: 0.4,
            head_combine: HeadCombine::Mean,
        }
    }
}

impl GatStackConfig {
    pub fn validate(&self) -> Result<(), GatError> {
        if self.heads == 0 {
            return Err(GatError::InvalidConfig("heads must be at least 1".into()));
        }
        if self.d_in == 0 || self.d_hidden == 0 {
            return Err(GatError::InvalidConfig("dimensions must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(GatError::InvalidConfig(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    pub fn layer_out_dim(&self) -> usize {
        match self.head_combine {
            HeadCombine::Mean => self.d_hidden,
            HeadCombine::Concat => self.d_hidden * self.heads,
        }
    }

    /// Width of the stack output; equals `d_in` when there are no layers.
    pub fn out_dim(&self) -> usize {
        if self.n_layers == 0 {
            self.d_in
        } else {
            self.layer_out_dim()
        }
    }
}

/// One attention head: `w` is `d' x d'`, `a` is `2d' x 1` with the
/// destination half first.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub w: Matrix,
    pub a: Matrix,
}

/// Shared input map `w` (`d_in x d'`) and the per-head parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GatLayerParams {
    pub w: Matrix,
    pub heads: Vec<HeadParams>,
}

impl GatLayerParams {
    pub fn init<R: Rng + ?Sized>(d_in: usize, d_hidden: usize, heads: usize, rng: &mut R) -> Self {
        Self {
            w: glorot_uniform(d_in, d_hidden, rng),
            heads: (0..heads)
                .map(|_| HeadParams {
                    w: glorot_uniform(d_hidden, d_hidden, rng),
                    a: glorot_uniform(2 * d_hidden, 1, rng),
                })
                .collect(),
        }
    }

    pub fn d_in(&self) -> usize {
        self.w.rows()
    }

    pub fn d_hidden(&self) -> usize {
        self.w.cols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatStack {
    pub config: GatStackConfig,
    pub layers: Vec<GatLayerParams>,
}

impl GatStack {
    pub fn new<R: Rng + ?Sized>(config: GatStackConfig, rng: &mut R) -> Result<Self, GatError> {
        config.validate()?;
        let mut layers = Vec::with_capacity(config.n_layers);
        let mut d = config.d_in;
        for _ in 0..config.n_layers {
            layers.push(GatLayerParams::init(d, config.d_hidden, config.heads, rng));
            d = config.layer_out_dim();
        }
        Ok(Self { config, layers })
    }

    /// Put every parameter on `tape`, trainable or constant.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundStack {
        let mut put = |m: &Matrix| {
            if trainable {
                tape.param(m.clone())
            } else {
                tape.constant(m.clone())
            }
        };
        BoundStack {
            combine: self.config.head_combine,
            dropout: self.config.dropout,
            layers: self
                .layers
                .iter()
                .map(|l| BoundLayer {
                    w: put(&l.w),
                    heads: l.heads.iter().map(|h| (put(&h.w), put(&h.a))).collect(),
                })
                .collect(),
        }
    }
}

impl Parameters for GatStack {
    fn named_params(&self) -> Vec<(String, &Matrix)> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            out.push((format!("gat.{i}.w"), &l.w));
            for (k, h) in l.heads.iter().enumerate() {
                out.push((format!("gat.{i}.head{k}.w"), &h.w));
                out.push((format!("gat.{i}.head{k}.a"), &h.a));
            }
        }
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            out.push(&mut l.w);
            for h in &mut l.heads {
                out.push(&mut h.w);
                out.push(&mut h.a);
            }
        }
        out
    }
}

/// Tape handles for one layer, in [`Parameters`] order.
#[derive(Debug, Clone)]
pub struct BoundLayer {
    pub w: Var,
    pub heads: Vec<(Var, Var)>,
}

#[derive(Debug, Clone)]
pub struct BoundStack {
    pub combine: HeadCombine,
    pub dropout: f64,
    pub layers: Vec<BoundLayer>,
}

impl BoundStack {
    pub fn vars(&self) -> Vec<Var> {
        self.layers
            .iter()
            .flat_map(|l| std::iter::once(l.w).chain(l.heads.iter().flat_map(|&(w, a)| [w, a])))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Feature dropout active; layer `i` uses a stream derived from `seed`.
    Train { seed: u64 },
    Eval,
}

fn layer_seed(seed: u64, layer: usize) -> u64 {
    seed ^ (layer as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Every node must receive at least one edge.
pub fn check_neighborhoods(edges: &EdgeIndex) -> Result<(), GatError> {
    let mut seen = vec![false; edges.num_nodes];
    for &d in edges.dst.iter() {
        if d >= edges.num_nodes {
            return Err(TensorError::IndexOutOfRange {
                op: "gat",
                index: d,
                len: edges.num_nodes,
            }
            .into());
        }
        seen[d] = true;
    }
    match seen.iter().position(|s| !s) {
        Some(v) => Err(GatError::IsolatedNodeWithoutSelfLoop(v)),
        None => Ok(()),
    }
}

struct HeadOut {
    scores: Var,
    alpha: Var,
    message: Var,
}

fn head_forward(tape: &mut Tape, h: Var, head: (Var, Var), edges: &EdgeIndex) -> Result<HeadOut, GatError> {
    let (wk, ak) = head;
    let d = tape.shape(wk).1;
    let z = tape.matmul(h, wk)?;
    let a_dst = tape.slice_rows(ak, 0, d)?;
    let a_src = tape.slice_rows(ak, d, 2 * d)?;
    let s_dst = tape.matmul(z, a_dst)?;
    let s_src = tape.matmul(z, a_src)?;
    let e_dst = tape.row_gather(s_dst, edges.dst.clone())?;
    let e_src = tape.row_gather(s_src, edges.src.clone())?;
    let raw = tape.add(e_dst, e_src)?;
    let scores = tape.leaky_relu(raw, LEAKY_SLOPE);
    let alpha = tape.segment_softmax(scores, edges.dst.clone(), edges.num_nodes)?;
    let message = tape.edge_aggregate(z, alpha, edges.src.clone(), edges.dst.clone(), edges.num_nodes)?;
    Ok(HeadOut { scores, alpha, message })
}

/// Output of one layer on a tape: new features and per-head attention
/// weights (`E x 1`, edge order of the index).
#[derive(Debug, Clone)]
pub struct LayerVars {
    pub output: Var,
    pub scores: Vec<Var>,
    pub alpha: Vec<Var>,
}

pub fn layer_forward_tape(
    tape: &mut Tape,
    layer: &BoundLayer,
    x: Var,
    edges: &EdgeIndex,
    combine: HeadCombine,
    dropout: Option<(f64, u64)>,
) -> Result<LayerVars, GatError> {
    if tape.shape(x).0 != edges.num_nodes {
        return Err(TensorError::ShapeMismatch {
            op: "gat_layer",
            left: tape.shape(x),
            right: (edges.num_nodes, tape.shape(layer.w).0),
        }
        .into());
    }
    check_neighborhoods(edges)?;
    let x = match dropout {
        Some((p, seed)) if p > 0.0 => tape.dropout(x, p, seed)?,
        _ => x,
    };
    let h = tape.matmul(x, layer.w)?;
    let mut outs = Vec::with_capacity(layer.heads.len());
    for &head in &layer.heads {
        outs.push(head_forward(tape, h, head, edges)?);
    }
    let messages: Vec<Var> = outs.iter().map(|o| o.message).collect();
    let combined = match combine {
        HeadCombine::Mean => tape.mean_over(&messages)?,
        HeadCombine::Concat => {
            let mut acc = messages[0];
            for &m in &messages[1..] {
                acc = tape.concat_cols(acc, m)?;
            }
            acc
        }
    };
    Ok(LayerVars {
        output: tape.relu(combined),
        scores: outs.iter().map(|o| o.scores).collect(),
        alpha: outs.iter().map(|o| o.alpha).collect(),
    })
}

#[derive(Debug, Clone)]
pub struct StackVars {
    pub output: Var,
    pub layers: Vec<LayerVars>,
}

pub fn stack_forward_tape(
    tape: &mut Tape,
    stack: &BoundStack,
    x: Var,
    edges: &EdgeIndex,
    mode: Mode,
) -> Result<StackVars, GatError> {
    let mut h = x;
    let mut layers = Vec::with_capacity(stack.layers.len());
    for (i, layer) in stack.layers.iter().enumerate() {
        let dropout = match mode {
            Mode::Train { seed } => Some((stack.dropout, layer_seed(seed, i))),
            Mode::Eval => None,
        };
        let out = layer_forward_tape(tape, layer, h, edges, stack.combine, dropout)?;
        h = out.output;
        layers.push(out);
    }
    Ok(StackVars { output: h, layers })
}

fn single_layer(layer: &GatLayerParams) -> GatStack {
    GatStack {
        config: GatStackConfig {
            n_layers: 1,
            heads: layer.heads.len(),
            d_in: layer.d_in(),
            d_hidden: layer.d_hidden(),
            dropout: 0.0,
            head_combine: HeadCombine::Mean,
        },
        layers: vec![layer.clone()],
    }
}

/// Pre-softmax attention scores per head, one entry per edge.
pub fn attention_scores(layer: &GatLayerParams, h: &Matrix, edges: &EdgeIndex) -> Result<Vec<Matrix>, GatError> {
    let mut tape = Tape::new();
    let bound = single_layer(layer).bind(&mut tape, false);
    let x = tape.constant(h.clone());
    let out = layer_forward_tape(&mut tape, &bound.layers[0], x, edges, HeadCombine::Mean, None)?;
    Ok(out.scores.iter().map(|&s| tape.value(s).clone()).collect())
}

/// One layer outside of training; `dropout` is `(p, seed)` when active.
pub fn layer_forward(
    layer: &GatLayerParams,
    h: &Matrix,
    edges: &EdgeIndex,
    combine: HeadCombine,
    dropout: Option<(f64, u64)>,
) -> Result<Matrix, GatError> {
    let mut tape = Tape::new();
    let bound = single_layer(layer).bind(&mut tape, false);
    let x = tape.constant(h.clone());
    let out = layer_forward_tape(&mut tape, &bound.layers[0], x, edges, combine, dropout)?;
    Ok(tape.value(out.output).clone())
}

/// Final node representations and attention weights `[layer][head]`.
#[derive(Debug, Clone)]
pub struct StackOutput {
    pub output: Matrix,
    pub attention: Vec<Vec<Matrix>>,
}

pub fn stack_forward(stack: &GatStack, features: &Matrix, edges: &EdgeIndex, mode: Mode) -> Result<StackOutput, GatError> {
    let mut tape = Tape::new();
    let bound = stack.bind(&mut tape, false);
    let x = tape.constant(features.clone());
    let out = stack_forward_tape(&mut tape, &bound, x, edges, mode)?;
    Ok(StackOutput {
        output: tape.value(out.output).clone(),
        attention: out
            .layers
            .iter()
            .map(|l| l.alpha.iter().map(|&a| tape.value(a).clone()).collect())
            .collect(),
    })
}

#[derive(Serialize)]
struct AttentionRow<'a> {
    layer: usize,
    head: usize,
    src_kind: &'a str,
    src_index: usize,
    dst_kind: &'a str,
    dst_index: usize,
    edge_type: &'a str,
    alpha: f64,
}

/// CSV dump of attention weights; `attention[layer][head]` follows the edge
/// order of `graph.edges()`.
pub fn write_attention_csv(
    graph: &SocialGraph,
    attention: &[Vec<Matrix>],
    path: impl AsRef<Path>,
) -> Result<(), GatError> {
    let mut w = csv::Writer::from_path(path)?;
    for (l, heads) in attention.iter().enumerate() {
        for (k, alpha) in heads.iter().enumerate() {
            if alpha.rows() != graph.edges().len() {
                return Err(TensorError::ShapeMismatch {
                    op: "attention_dump",
                    left: alpha.shape(),
                    right: (graph.edges().len(), 1),
                }
                .into());
            }
            for (e, edge) in graph.edges().iter().enumerate() {
                w.serialize(AttentionRow {
                    layer: l,
                    head: k,
                    src_kind: edge.src.kind.as_str(),
                    src_index: edge.src.index,
                    dst_kind: edge.dst.kind.as_str(),
                    dst_index: edge.dst.index,
                    edge_type: edge.kind.as_str(),
                    alpha: alpha.get(e, 0),
                })?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Build an edge index from `(src, dst)` pairs over `n` nodes, adding a
/// self-loop to every node. Mostly useful for tests and small tools.
pub fn edge_index_from_pairs(n: usize, pairs: &[(usize, usize)]) -> EdgeIndex {
    let mut all: Vec<(usize, usize)> = pairs.to_vec();
    all.extend((0..n).map(|v| (v, v)));
    all.sort_by_key(|&(s, d)| (d, s));
    all.dedup();
    let kinds = all
        .iter()
        .map(|&(s, d)| {
            if s == d {
                crate::graph::EdgeType::SelfLoop
            } else {
                crate::graph::EdgeType::UserUser
            }
        })
        .collect();
    EdgeIndex {
        num_nodes: n,
        src: all.iter().map(|p| p.0).collect::<Arc<[usize]>>(),
        dst: all.iter().map(|p| p.1).collect::<Arc<[usize]>>(),
        kinds,
    }
}
