//! Seeded synthetic corpora with controllable label homophily.
//!
//! Every user draws a sarcastic tendency from a Beta distribution. All text a
//! user writes mixes a sarcastic-leaning and a neutral word pool in proportion
//! to that tendency, so history-based user embeddings can recover it. Each
//! conversation is an elicit root, one labeled reply (sarcastic with the
//! author's tendency), and optionally an oblivious reply and a cue reply.
//! Labeled replies come from a random subset of authors (`author_fraction`).
//! Interactions are drawn last, once every user's majority label is known, so
//! that the share of same-label user pairs hits the requested homophily. Within
//! the chosen label, peers can also be matched on tendency.

use std::collections::HashSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use super::{
    Corpus, CorpusError, HistoryPost, Interaction, InteractionKind, Tweet, TweetRole, User,
};

const CUE_WORDS: &[&str] = &[
    "sarcasm", "sarcastic", "kidding", "joking", "irony", "ironic", "obviously", "clearly",
];
const OBLIVIOUS_WORDS: &[&str] = &[
    "really", "seriously", "wait", "actually", "mean", "true", "sure", "why",
];
const BASE_TIME: i64 = 1_600_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub n_users: usize,
    pub n_conversations: usize,
    /// Beta shape parameters of the per-user sarcastic tendency.
    pub tendency_alpha: f64,
    pub tendency_beta: f64,
    pub target_homophily: f64,
    /// Mean interactions initiated per user.
    pub interaction_density: f64,
    /// Inclusive range of history posts per user.
    pub history_length: [usize; 2],
    /// Inclusive range of words per post or tweet.
    pub words_per_post: [usize; 2],
    pub sarcastic_pool_size: usize,
    pub neutral_pool_size: usize,
    /// Probability of a sarcastic-pool word is
    /// `0.5 + tendency_mix_span * (tendency - 0.5)` in a user's own writing.
    pub tendency_mix_span: f64,
    /// Labeled replies shift that probability by `+shift` (sarcastic) or
    /// `-shift` (non-sarcastic) around 0.5, ignoring the author's tendency.
    pub label_text_shift: f64,
    /// Elicit roots shift their mix by the same sign as the labeled reply.
    pub elicit_text_shift: f64,
    pub oblivious_prob_sarcastic: f64,
    pub oblivious_prob_non_sarcastic: f64,
    /// Probability that a sarcastic reply receives a cue reply.
    pub cue_prob: f64,
    /// Probability that a cue is written by the sarcastic tweet's author.
    pub intended_prob: f64,
    /// Share of users who write labeled replies; the rest only post histories,
    /// elicit roots and other replies.
    pub author_fraction: f64,
    /// Peers drawn per interaction from the label-selected pool; the one
    /// closest in tendency is kept. 1 disables tendency assortativity.
    pub peer_candidates: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_users: 200,
            n_conversations: 400,
            tendency_alpha: 0.5,
            tendency_beta: 0.5,
            target_homophily: 0.32,
            interaction_density: 3.0,
            history_length: [50, 80],
            words_per_post: [6, 10],
            sarcastic_pool_size: 60,
            neutral_pool_size: 60,
            tendency_mix_span: 0.5,
            label_text_shift: 0.15,
            elicit_text_shift: 0.1,
            oblivious_prob_sarcastic: 0.5,
            oblivious_prob_non_sarcastic: 0.2,
            cue_prob: 1.0,
            intended_prob: 2.0 / 3.0,
            author_fraction: 1.0,
            peer_candidates: 1,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let probs = [
            ("target_homophily", self.target_homophily),
            ("oblivious_prob_sarcastic", self.oblivious_prob_sarcastic),
            ("oblivious_prob_non_sarcastic", self.oblivious_prob_non_sarcastic),
            ("cue_prob", self.cue_prob),
            ("intended_prob", self.intended_prob),
            ("tendency_mix_span", self.tendency_mix_span),
            ("label_text_shift", self.label_text_shift * 2.0),
            ("elicit_text_shift", self.elicit_text_shift * 2.0),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(CorpusError::InvalidConfig(format!("{name} out of range: {p}")));
            }
        }
        if !(self.tendency_alpha > 0.0 && self.tendency_beta > 0.0) {
            return Err(CorpusError::InvalidConfig("Beta shape parameters must be positive".into()));
        }
        if !(self.interaction_density >= 0.0 && self.interaction_density.is_finite()) {
            return Err(CorpusError::InvalidConfig("interaction_density must be >= 0".into()));
        }
        for (name, [lo, hi]) in [
            ("history_length", self.history_length),
            ("words_per_post", self.words_per_post),
        ] {
            if lo > hi {
                return Err(CorpusError::InvalidConfig(format!("{name} range is empty")));
            }
        }
        if self.words_per_post[0] == 0 {
            return Err(CorpusError::InvalidConfig("words_per_post must be >= 1".into()));
        }
        if !(self.author_fraction > 0.0 && self.author_fraction <= 1.0) {
            return Err(CorpusError::InvalidConfig("author_fraction must be in (0, 1]".into()));
        }
        if self.peer_candidates == 0 {
            return Err(CorpusError::InvalidConfig("peer_candidates must be >= 1".into()));
        }
        if self.sarcastic_pool_size == 0 || self.neutral_pool_size == 0 {
            return Err(CorpusError::InvalidConfig("word pools must be non-empty".into()));
        }
        Ok(())
    }
}

struct Vocabulary {
    sarcastic: Vec<String>,
    neutral: Vec<String>,
}

impl Vocabulary {
    fn new(cfg: &SyntheticConfig) -> Self {
        Self {
            sarcastic: (0..cfg.sarcastic_pool_size).map(|i| format!("sar{i}")).collect(),
            neutral: (0..cfg.neutral_pool_size).map(|i| format!("neu{i}")).collect(),
        }
    }

    fn text(&self, rng: &mut ChaCha8Rng, n_words: usize, p_sarcastic: f64) -> String {
        let mut words = Vec::with_capacity(n_words);
        for _ in 0..n_words {
            let pool = if rng.random::<f64>() < p_sarcastic {
                &self.sarcastic
            } else {
                &self.neutral
            };
            words.push(pool.choose(rng).expect("non-empty pool").as_str());
        }
        words.join(" ")
    }
}

fn phrase(rng: &mut ChaCha8Rng, marker: &[&str], n_marker: usize, tail: &str) -> String {
    let mut words: Vec<&str> = (0..n_marker)
        .map(|_| *marker.choose(rng).expect("non-empty marker list"))
        .collect();
    if !tail.is_empty() {
        words.push(tail);
    }
    words.join(" ")
}

/// Generate a corpus that is a pure function of `cfg`.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<Corpus, CorpusError> {
    cfg.validate()?;
    if cfg.n_users == 0 {
        return Ok(Corpus::empty());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let vocab = Vocabulary::new(cfg);
    let beta = Beta::new(cfg.tendency_alpha, cfg.tendency_beta)
        .map_err(|e| CorpusError::InvalidConfig(e.to_string()))?;

    let n = cfg.n_users;
    let user_ids: Vec<String> = (0..n).map(|i| format!("u{i:05}")).collect();
    let tendency: Vec<f64> = (0..n).map(|_| beta.sample(&mut rng)).collect();
    let own_mix = |u: usize| 0.5 + cfg.tendency_mix_span * (tendency[u] - 0.5);
    let n_words = |rng: &mut ChaCha8Rng| rng.random_range(cfg.words_per_post[0]..=cfg.words_per_post[1]);
    let other_user = |rng: &mut ChaCha8Rng, not: usize| -> usize {
        if n == 1 {
            return 0;
        }
        let pick = rng.random_range(0..n - 1);
        if pick >= not {
            pick + 1
        } else {
            pick
        }
    };

    // Histories.
    let mut users: Vec<User> = Vec::with_capacity(n);
    for u in 0..n {
        let len = rng.random_range(cfg.history_length[0]..=cfg.history_length[1]);
        let mut ts = BASE_TIME - 400 * 86_400;
        let history = (0..len)
            .map(|_| {
                ts += rng.random_range(600..86_400);
                let w = n_words(&mut rng);
                HistoryPost {
                    text: vocab.text(&mut rng, w, own_mix(u)),
                    timestamp: ts,
                }
            })
            .collect();
        users.push(User {
            id: user_ids[u].clone(),
            history,
            interactions: Vec::new(),
        });
    }

    // Conversations.
    let mut authors: Vec<usize> = (0..n).collect();
    authors.shuffle(&mut rng);
    authors.truncate(((cfg.author_fraction * n as f64).round() as usize).max(1));
    let mut tweets = Vec::new();
    let mut sarcastic_count = vec![0usize; n];
    let mut labeled_count = vec![0usize; n];
    let mut next_tweet = 0usize;
    let mut new_id = || {
        let id = format!("t{next_tweet:07}");
        next_tweet += 1;
        id
    };
    for c in 0..cfg.n_conversations {
        let conv = format!("c{c:06}");
        let t0 = BASE_TIME + 3_600 * c as i64;
        let author = authors[rng.random_range(0..authors.len())];
        let sarcastic = rng.random::<f64>() < tendency[author];
        let sign = if sarcastic { 1.0 } else { -1.0 };
        labeled_count[author] += 1;
        if sarcastic {
            sarcastic_count[author] += 1;
        }

        let elicit_author = other_user(&mut rng, author);
        let elicit_id = new_id();
        let w = n_words(&mut rng);
        tweets.push(Tweet {
            id: elicit_id.clone(),
            author_id: user_ids[elicit_author].clone(),
            conversation_id: conv.clone(),
            text: vocab.text(&mut rng, w, 0.5 + sign * cfg.elicit_text_shift),
            role: TweetRole::Elicit,
            reply_to: None,
            timestamp: t0,
        });

        let labeled_id = new_id();
        let w = n_words(&mut rng);
        tweets.push(Tweet {
            id: labeled_id.clone(),
            author_id: user_ids[author].clone(),
            conversation_id: conv.clone(),
            text: vocab.text(&mut rng, w, 0.5 + sign * cfg.label_text_shift),
            role: if sarcastic {
                TweetRole::Sarcastic
            } else {
                TweetRole::NonSarcastic
            },
            reply_to: Some(elicit_id),
            timestamp: t0 + 60,
        });

        let p_oblivious = if sarcastic {
            cfg.oblivious_prob_sarcastic
        } else {
            cfg.oblivious_prob_non_sarcastic
        };
        if rng.random::<f64>() < p_oblivious {
            let who = other_user(&mut rng, author);
            let filler = vocab.text(&mut rng, 2, own_mix(who));
            tweets.push(Tweet {
                id: new_id(),
                author_id: user_ids[who].clone(),
                conversation_id: conv.clone(),
                text: phrase(&mut rng, OBLIVIOUS_WORDS, 3, &filler),
                role: TweetRole::Oblivious,
                reply_to: Some(labeled_id.clone()),
                timestamp: t0 + 120,
            });
        }

        if sarcastic && rng.random::<f64>() < cfg.cue_prob {
            let who = if rng.random::<f64>() < cfg.intended_prob {
                author
            } else {
                other_user(&mut rng, author)
            };
            tweets.push(Tweet {
                id: new_id(),
                author_id: user_ids[who].clone(),
                conversation_id: conv.clone(),
                text: phrase(&mut rng, CUE_WORDS, 3, ""),
                role: TweetRole::Cue,
                reply_to: Some(labeled_id),
                timestamp: t0 + 180,
            });
        }
    }

    // Interactions, drawn against the realized majority labels.
    let majority: Vec<Option<bool>> = (0..n)
        .map(|u| {
            let s = sarcastic_count[u];
            let ns = labeled_count[u] - s;
            match s.cmp(&ns) {
                std::cmp::Ordering::Greater => Some(true),
                std::cmp::Ordering::Less => Some(false),
                std::cmp::Ordering::Equal => None,
            }
        })
        .collect();
    let class_members = |label: bool| -> Vec<usize> {
        (0..n).filter(|&u| majority[u] == Some(label)).collect()
    };
    let sarc_users = class_members(true);
    let plain_users = class_members(false);
    let h = cfg.target_homophily;
    let expected_edges = cfg.interaction_density * n as f64;
    if expected_edges > 0.0 && n > 1 {
        if h > 0.0 && sarc_users.len() < 2 && plain_users.len() < 2 {
            return Err(CorpusError::InfeasibleTarget {
                target: h,
                reason: "no label class has two users".into(),
            });
        }
        if h < 1.0 && (sarc_users.is_empty() || plain_users.is_empty()) {
            return Err(CorpusError::InfeasibleTarget {
                target: h,
                reason: "every labeled user shares one majority label".into(),
            });
        }
    }

    let whole = cfg.interaction_density.floor() as usize;
    let frac = cfg.interaction_density - whole as f64;
    let kinds = [InteractionKind::Quote, InteractionKind::Mention, InteractionKind::Reply];
    let mut seen: HashSet<(usize, usize)> = HashSet::new();
    for u in 0..n {
        if n < 2 {
            break;
        }
        let count = whole + usize::from(rng.random::<f64>() < frac);
        for _ in 0..count {
            let mut chosen = None;
            let want = majority[u].map(|label| if rng.random::<f64>() < h { label } else { !label });
            for _attempt in 0..20 {
                let peer = match want {
                    Some(want) => {
                        let pool = if want { &sarc_users } else { &plain_users };
                        let gap = |p: usize| (tendency[p] - tendency[u]).abs();
                        let picks = (0..cfg.peer_candidates).filter_map(|_| pool.choose(&mut rng).copied());
                        match picks.min_by(|&a, &b| gap(a).total_cmp(&gap(b))) {
                            Some(p) => p,
                            None => other_user(&mut rng, u),
                        }
                    }
                    None => other_user(&mut rng, u),
                };
                if peer == u {
                    continue;
                }
                let key = (u.min(peer), u.max(peer));
                if seen.insert(key) {
                    chosen = Some(peer);
                    break;
                }
            }
            if let Some(peer) = chosen {
                let last = users[u].history.last().map_or(BASE_TIME, |p| p.timestamp);
                users[u].interactions.push(Interaction {
                    peer: user_ids[peer].clone(),
                    kind: *kinds.choose(&mut rng).expect("non-empty"),
                    timestamp: last - rng.random_range(0..30 * 86_400),
                });
            }
        }
    }

    Corpus::new(tweets, users)
}
