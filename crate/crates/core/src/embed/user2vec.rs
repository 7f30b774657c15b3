use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{preprocess_tokens, EmbedError, EmbeddingMatrix};
use crate::corpus::Corpus;
use crate::tensor::Matrix;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;
const UNIGRAM_POWER: f64 = 0.75;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct User2VecConfig {
    pub dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub negatives_per_positive: usize,
    pub min_posts: usize,
    pub max_posts: usize,
    pub min_word_count: usize,
    pub seed: u64,
}

impl Default for User2VecConfig {
    fn default() -> Self {
        Self {
            dim: 400,
            epochs: 12,
            learning_rate: 1e-4,
            negatives_per_positive: 5,
            min_posts: 50,
            max_posts: 1000,
            min_word_count: 5,
            seed: 0,
        }
    }
}

impl User2VecConfig {
    pub fn validate(&self) -> Result<(), EmbedError> {
        if self.dim == 0 {
            return Err(EmbedError::InvalidConfig("dim must be positive".into()));
        }
        if self.min_posts > self.max_posts {
            return Err(EmbedError::InvalidConfig("min_posts exceeds max_posts".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(EmbedError::InvalidConfig("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

/// Reproducibility record for a user2vec run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct User2VecManifest {
    pub config: User2VecConfig,
    pub seed: u64,
    pub shards: usize,
    pub vocabulary_size: usize,
    pub eligible_users: usize,
    pub filtered_users: usize,
    pub token_count: usize,
    pub epoch_losses: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct User2VecOutput {
    pub embeddings: EmbeddingMatrix,
    pub manifest: User2VecManifest,
}

/// Rows of a parameter table with lazily updated Adam moments.
struct Table {
    dim: usize,
    values: Vec<f64>,
    m: Vec<f64>,
    v: Vec<f64>,
    steps: Vec<u32>,
}

impl Table {
    fn new(rows: usize, dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let scale = 0.5 / dim as f64;
        Self {
            dim,
            values: (0..rows * dim).map(|_| rng.random_range(-scale..scale)).collect(),
            m: vec![0.0; rows * dim],
            v: vec![0.0; rows * dim],
            steps: vec![0; rows],
        }
    }

    fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.dim..(r + 1) * self.dim]
    }

    fn adam(&mut self, r: usize, grad: &[f64], lr: f64) {
        self.steps[r] += 1;
        let t = self.steps[r] as i32;
        let c1 = 1.0 - BETA1.powi(t);
        let c2 = 1.0 - BETA2.powi(t);
        let span = r * self.dim..(r + 1) * self.dim;
        let (w, m, v) = (&mut self.values[span.clone()], &mut self.m[span.clone()], &mut self.v[span]);
        for i in 0..grad.len() {
            m[i] = BETA1 * m[i] + (1.0 - BETA1) * grad[i];
            v[i] = BETA2 * v[i] + (1.0 - BETA2) * grad[i] * grad[i];
            w[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + EPS);
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `-log sigmoid(x)`, stable for large |x|.
fn neg_log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

/// Negative-sampling paragraph-vector objective: for every (user, token) pair
/// raise `log s(u.w)` and lower `u.w'` for sampled negatives `w'`. Each pair
/// is one stochastic step; rows are updated with Adam.
pub fn train_user2vec(corpus: &Corpus, cfg: &User2VecConfig) -> Result<User2VecOutput, EmbedError> {
    cfg.validate()?;
    let eligible: Vec<_> = corpus
        .users()
        .iter()
        .filter(|u| u.history.len() >= cfg.min_posts)
        .collect();
    if eligible.is_empty() {
        return Err(EmbedError::NoEligibleUsers);
    }

    let docs: Vec<Vec<String>> = eligible
        .iter()
        .map(|u| {
            let start = u.history.len().saturating_sub(cfg.max_posts);
            u.history[start..]
                .iter()
                .flat_map(|p| preprocess_tokens(&p.text))
                .collect()
        })
        .collect();
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for doc in &docs {
        for t in doc {
            *counts.entry(t.as_str()).or_default() += 1;
        }
    }
    counts.retain(|_, c| *c >= cfg.min_word_count);
    let vocab: BTreeMap<&str, usize> = counts.keys().enumerate().map(|(i, w)| (*w, i)).collect();
    let freq: Vec<usize> = counts.values().copied().collect();
    let docs: Vec<Vec<usize>> = docs
        .iter()
        .map(|d| d.iter().filter_map(|t| vocab.get(t.as_str()).copied()).collect())
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut users = Table::new(eligible.len(), cfg.dim, &mut rng);
    let mut words = Table::new(vocab.len().max(1), cfg.dim, &mut rng);

    let mut pairs: Vec<(u32, u32)> = docs
        .iter()
        .enumerate()
        .flat_map(|(u, d)| d.iter().map(move |&w| (u as u32, w as u32)))
        .collect();
    let noise_weights: Vec<f64> = freq.iter().map(|&c| (c as f64).powf(UNIGRAM_POWER)).collect();
    let noise_total: f64 = noise_weights.iter().sum();
    let noise_probs: Vec<f64> = noise_weights.iter().map(|w| w / noise_total).collect();
    let sampler = if pairs.is_empty() {
        None
    } else {
        Some(WeightedIndex::new(&noise_weights).map_err(|e| EmbedError::InvalidConfig(e.to_string()))?)
    };

    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut grad_u = vec![0.0; cfg.dim];
    let mut grad_w = vec![0.0; cfg.dim];
    for _ in 0..cfg.epochs {
        pairs.shuffle(&mut rng);
        if let Some(sampler) = &sampler {
            for &(u, w) in &pairs {
                let u = u as usize;
                grad_u.iter_mut().for_each(|g| *g = 0.0);
                let targets = std::iter::once((w as usize, 1.0))
                    .chain((0..cfg.negatives_per_positive).map(|_| (sampler.sample(&mut rng), 0.0)));
                for (j, label) in targets {
                    let g = sigmoid(dot(users.row(u), words.row(j))) - label;
                    for (k, (gu, gw)) in grad_u.iter_mut().zip(grad_w.iter_mut()).enumerate() {
                        *gu += g * words.values[j * cfg.dim + k];
                        *gw = g * users.values[u * cfg.dim + k];
                    }
                    words.adam(j, &grad_w, cfg.learning_rate);
                }
                users.adam(u, &grad_u, cfg.learning_rate);
            }
        }
        if !users.values.iter().all(|v| v.is_finite()) || !words.values.iter().all(|v| v.is_finite()) {
            return Err(EmbedError::NonFinite("user2vec parameters".into()));
        }
        epoch_losses.push(full_objective(&users, &words, &docs, &noise_probs, cfg.negatives_per_positive));
    }

    let ids = eligible.iter().map(|u| u.id.clone()).collect();
    let values = Matrix::from_vec(eligible.len(), cfg.dim, users.values)?;
    Ok(User2VecOutput {
        embeddings: EmbeddingMatrix::new(ids, values)?,
        manifest: User2VecManifest {
            config: cfg.clone(),
            seed: cfg.seed,
            shards: 1,
            vocabulary_size: vocab.len(),
            eligible_users: eligible.len(),
            filtered_users: corpus.users().len() - eligible.len(),
            token_count: pairs.len(),
            epoch_losses,
        },
    })
}

/// Mean per-token loss with the negative term replaced by its expectation
/// under the noise distribution.
fn full_objective(users: &Table, words: &Table, docs: &[Vec<usize>], noise: &[f64], k: usize) -> f64 {
    let (mut total, mut n) = (0.0, 0usize);
    for (u, doc) in docs.iter().enumerate() {
        if doc.is_empty() {
            continue;
        }
        let urow = users.row(u);
        let expected_neg: f64 = noise
            .iter()
            .enumerate()
            .map(|(j, q)| q * neg_log_sigmoid(-dot(urow, words.row(j))))
            .sum();
        for &w in doc {
            total += neg_log_sigmoid(dot(urow, words.row(w)));
        }
        total += doc.len() as f64 * k as f64 * expected_neg;
        n += doc.len();
    }
    if n == 0 {
        0.0
    } else {
        total / n as f64
    }
}
