//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sarcasm_gat::corpus::{Corpus, HistoryPost, Interaction, InteractionKind, Tweet, TweetRole, User};
use sarcasm_gat::embed::{encode_tweets, EmbeddingMatrix, TweetSource};
use sarcasm_gat::gat::{edge_index_from_pairs, GatStack};
use sarcasm_gat::graph::{build_graph, BuildOptions, EdgeIndex, GraphVariant};
use sarcasm_gat::model::{forward, Batch, GraphContext, ModelConfig, ModelData, ModelParams};
use sarcasm_gat::tensor::{Matrix, Parameters, Tape};
use sarcasm_gat::gat::Mode;

/// Random undirected graph on `n` nodes with edge probability `p`; the
/// index adds both directions and self-loops.
pub fn random_graph(n: usize, p: f64, rng: &mut impl Rng) -> (EdgeIndex, Vec<(usize, usize)>) {
    let mut pairs = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.random::<f64>() < p {
                pairs.push((a, b));
                pairs.push((b, a));
            }
        }
    }
    (edge_index_from_pairs(n, &pairs), pairs)
}

pub fn random_matrix(rows: usize, cols: usize, scale: f64, rng: &mut impl Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-scale..scale))
}

/// Scale attention vectors up so that weights are far from uniform.
pub fn sharpen_attention(stack: &mut GatStack, rng: &mut impl Rng, scale: f64) {
    for l in &mut stack.layers {
        for h in &mut l.heads {
            h.a = random_matrix(h.a.rows(), 1, scale, rng);
        }
    }
}

fn naive_matmul(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.cols(), b.rows());
    Matrix::from_fn(a.rows(), b.cols(), |i, j| (0..a.cols()).map(|k| a.get(i, k) * b.get(k, j)).sum())
}

fn leaky(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.2 * x
    }
}

/// Dense masked-attention GAT: `n x n` score matrices with `-inf` off the
/// neighborhood, row softmax, weighted sum, mean of heads, ReLU. Returns the
/// output and the dense attention matrices `[layer][head]` (`alpha[v][u]`).
pub fn dense_stack(stack: &GatStack, x: &Matrix, edges: &EdgeIndex) -> (Matrix, Vec<Vec<Matrix>>) {
    let n = edges.num_nodes;
    let mut mask = vec![vec![false; n]; n];
    for (&s, &d) in edges.src.iter().zip(edges.dst.iter()) {
        mask[d][s] = true;
    }
    let mut h = x.clone();
    let mut all_alpha = Vec::new();
    for layer in &stack.layers {
        let hw = naive_matmul(&h, &layer.w);
        let d = layer.d_hidden();
        let mut acc = Matrix::zeros(n, d);
        let mut layer_alpha = Vec::new();
        for head in &layer.heads {
            let z = naive_matmul(&hw, &head.w);
            let score = |v: usize, u: usize| {
                let dst: f64 = (0..d).map(|i| head.a.get(i, 0) * z.get(v, i)).sum();
                let src: f64 = (0..d).map(|i| head.a.get(d + i, 0) * z.get(u, i)).sum();
                leaky(dst + src)
            };
            let mut alpha = Matrix::zeros(n, n);
            for v in 0..n {
                let e: Vec<f64> = (0..n).map(|u| if mask[v][u] { score(v, u) } else { f64::NEG_INFINITY }).collect();
                let m = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let w: Vec<f64> = e.iter().map(|&s| (s - m).exp()).collect();
                let total: f64 = w.iter().sum();
                for u in 0..n {
                    alpha.set(v, u, w[u] / total);
                }
            }
            for v in 0..n {
                for i in 0..d {
                    let s: f64 = (0..n).map(|u| alpha.get(v, u) * z.get(u, i)).sum();
                    acc.set(v, i, acc.get(v, i) + s);
                }
            }
            layer_alpha.push(alpha);
        }
        let k = layer.heads.len() as f64;
        h = acc.map(|v| (v / k).max(0.0));
        all_alpha.push(layer_alpha);
    }
    (h, all_alpha)
}

/// Undirected hop distances from `start`; `usize::MAX` when unreachable.
pub fn hops(n: usize, pairs: &[(usize, usize)], start: usize) -> Vec<usize> {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in pairs {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut dist = vec![usize::MAX; n];
    dist[start] = 0;
    let mut queue = VecDeque::from([start]);
    while let Some(v) = queue.pop_front() {
        for &u in &adj[v] {
            if dist[u] == usize::MAX {
                dist[u] = dist[v] + 1;
                queue.push_back(u);
            }
        }
    }
    dist
}

/// `|a - n| / max(|a|, |n|)`, with both-near-zero pairs scored by their
/// absolute difference against `floor`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

fn tweet(id: &str, author: &str, conv: &str, role: TweetRole, reply_to: Option<&str>, text: &str) -> Tweet {
    Tweet {
        id: id.into(),
        author_id: author.into(),
        conversation_id: conv.into(),
        text: text.into(),
        role,
        reply_to: reply_to.map(Into::into),
        timestamp: 0,
    }
}

/// Four users and six tweets (ten graph nodes under `NoCue`); three labeled.
pub fn tiny_corpus() -> Corpus {
    let tweets = vec![
        tweet("e1", "u0", "c1", TweetRole::Elicit, None, "what a lovely monday morning"),
        tweet("s1", "u1", "c1", TweetRole::Sarcastic, Some("e1"), "oh great another monday just what i needed"),
        tweet("o1", "u2", "c1", TweetRole::Oblivious, Some("s1"), "really you like mondays"),
        tweet("s2", "u3", "c1", TweetRole::Sarcastic, Some("e1"), "yeah totally love traffic"),
        tweet("e2", "u3", "c2", TweetRole::Elicit, None, "the new park opened today"),
        tweet("n1", "u2", "c2", TweetRole::NonSarcastic, Some("e2"), "went there with the kids it was nice"),
    ];
    let link = |peer: &str| Interaction {
        peer: peer.into(),
        kind: InteractionKind::Mention,
        timestamp: 0,
    };
    let users = (0..4)
        .map(|i| User {
            id: format!("u{i}"),
            history: vec![HistoryPost {
                text: "hello".into(),
                timestamp: 0,
            }],
            interactions: match i {
                0 => vec![link("u1")],
                2 => vec![link("u3"), link("u0")],
                _ => vec![],
            },
        })
        .collect();
    Corpus::new(tweets, users).unwrap()
}

/// Tweet vectors, random user vectors of width `d`, and the labeled ids.
pub struct TinySetup {
    pub corpus: Corpus,
    pub tweets: EmbeddingMatrix,
    pub users: EmbeddingMatrix,
}

impl TinySetup {
    pub fn new(d: usize, seed: u64) -> Self {
        let corpus = tiny_corpus();
        let tweets = encode_tweets(&corpus, &TweetSource::Fallback).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let users = EmbeddingMatrix::new(
            corpus.users().iter().map(|u| u.id.clone()).collect(),
            random_matrix(corpus.users().len(), d, 1.0, &mut rng),
        )
        .unwrap();
        Self { corpus, tweets, users }
    }
}

/// Worst relative error between tape gradients and central differences over
/// every entry of every parameter, with its parameter name.
pub fn gradient_check(setup: &TinySetup, cfg: ModelConfig, variant: GraphVariant, mode: Mode, seed: u64) -> (f64, String, usize) {
    let graph = build_graph(&setup.corpus, variant, &BuildOptions::default()).unwrap();
    let data = ModelData {
        corpus: &setup.corpus,
        graph: Some(&graph),
        tweets: &setup.tweets,
        users: &setup.users,
    };
    let kind = cfg.kind;
    let ids: Vec<String> = setup.corpus.label_table().into_iter().map(|r| r.tweet_id).collect();
    let labels: Vec<usize> = setup.corpus.label_table().into_iter().map(|r| r.label.class_index()).collect();
    let ctx = GraphContext::new(kind, &data).unwrap();
    let batch = Batch::new(kind, &data, &ids).unwrap();
    let mut params = ModelParams::new(cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    if let Some(stack) = params.gat.as_mut() {
        sharpen_attention(stack, &mut ChaCha8Rng::seed_from_u64(seed + 1), 1.0);
    }

    let eval = |p: &ModelParams, with_grads: bool| -> (f64, Vec<Matrix>) {
        let mut tape = Tape::new();
        let bound = p.bind(&mut tape, true);
        let out = forward(&mut tape, &bound, kind, &ctx, &batch, mode).unwrap();
        let l = tape.cross_entropy(out.logits, &labels).unwrap();
        let v = tape.value(l).item().unwrap();
        if !with_grads {
            return (v, vec![]);
        }
        let g = tape.backward(l).unwrap();
        (v, bound.vars().iter().map(|&var| g.get_or_zeros(var)).collect())
    };
    let (_, grads) = eval(&params, true);
    let names: Vec<String> = params.named_params().into_iter().map(|(n, _)| n).collect();
    let step = 1e-6;
    let mut worst = (0.0f64, String::new(), 0usize);
    let mut checked = 0usize;
    for (p, name) in names.iter().enumerate() {
        let len = params.params_mut()[p].len();
        for j in 0..len {
            let orig = params.params_mut()[p].as_slice()[j];
            params.params_mut()[p].as_mut_slice()[j] = orig + step;
            let (up, _) = eval(&params, false);
            params.params_mut()[p].as_mut_slice()[j] = orig - step;
            let (down, _) = eval(&params, false);
            params.params_mut()[p].as_mut_slice()[j] = orig;
            let numeric = (up - down) / (2.0 * step);
            let err = relative_error(grads[p].as_slice()[j], numeric, 1e-6);
            checked += 1;
            if err > worst.0 {
                worst = (err, format!("{name}[{j}]"), 0);
            }
        }
    }
    worst.2 = checked;
    worst
}
