//! Tweets, users, conversations and their labels.
//!
//! A [`Corpus`] is validated on construction and immutable afterwards. On disk
//! it is a directory holding `tweets.jsonl` and `users.jsonl`.

mod io;
mod synthetic;

pub use io::{load_corpus, save_corpus, TWEETS_FILE, USERS_FILE};
pub use synthetic::{generate_synthetic, SyntheticConfig};

use std::collections::HashMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{file}:{line}: malformed record ({field})")]
    MalformedRecord {
        file: PathBuf,
        line: usize,
        field: String,
    },
    #[error("duplicate {kind} id {id:?}")]
    DuplicateId { kind: &'static str, id: String },
    #[error("{from:?} references unknown {kind} {to:?}")]
    DanglingReference {
        from: String,
        kind: &'static str,
        to: String,
    },
    #[error("invalid record {id:?}: {reason}")]
    InvalidRecord { id: String, reason: String },
    #[error("invalid synthetic config: {0}")]
    InvalidConfig(String),
    #[error("target homophily {target} unreachable: {reason}")]
    InfeasibleTarget { target: f64, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TweetRole {
    Sarcastic,
    #[serde(alias = "non_sarcastic", alias = "non-sarcastic")]
    NonSarcastic,
    Oblivious,
    Elicit,
    Cue,
}

impl TweetRole {
    pub const ALL: [TweetRole; 5] = [
        TweetRole::Sarcastic,
        TweetRole::NonSarcastic,
        TweetRole::Oblivious,
        TweetRole::Elicit,
        TweetRole::Cue,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TweetRole::Sarcastic => "sarcastic",
            TweetRole::NonSarcastic => "nonsarcastic",
            TweetRole::Oblivious => "oblivious",
            TweetRole::Elicit => "elicit",
            TweetRole::Cue => "cue",
        }
    }

    /// Sarcastic and non-sarcastic tweets are classification targets; the
    /// other roles are conversational context.
    pub fn is_labeled(self) -> bool {
        matches!(self, TweetRole::Sarcastic | TweetRole::NonSarcastic)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tweet {
    pub id: String,
    pub author_id: String,
    pub conversation_id: String,
    #[serde(default)]
    pub text: String,
    pub role: TweetRole,
    pub reply_to: Option<String>,
    pub timestamp: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistoryPost {
    pub text: String,
    pub timestamp: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InteractionKind {
    Quote,
    Mention,
    Reply,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Interaction {
    pub peer: String,
    pub kind: InteractionKind,
    pub timestamp: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct User {
    pub id: String,
    #[serde(default)]
    pub history: Vec<HistoryPost>,
    #[serde(default)]
    pub interactions: Vec<Interaction>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SarcasmLabel {
    Sarcastic,
    NonSarcastic,
}

impl SarcasmLabel {
    pub fn class_index(self) -> usize {
        match self {
            SarcasmLabel::NonSarcastic => 0,
            SarcasmLabel::Sarcastic => 1,
        }
    }
}

/// Who flagged a sarcastic tweet: its own author (intended) or someone else
/// (perceived).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CueAuthorship {
    Intended,
    Perceived,
}

impl CueAuthorship {
    pub fn class_index(self) -> usize {
        match self {
            CueAuthorship::Intended => 0,
            CueAuthorship::Perceived => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CueAuthorship::Intended => "intended",
            CueAuthorship::Perceived => "perceived",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRow {
    pub tweet_id: String,
    pub author_id: String,
    pub label: SarcasmLabel,
    pub cue: Option<CueAuthorship>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    tweets: Vec<Tweet>,
    users: Vec<User>,
    tweet_index: HashMap<String, usize>,
    user_index: HashMap<String, usize>,
    /// Derived from cue tweets; keyed by sarcastic tweet position.
    cue_authorship: HashMap<usize, CueAuthorship>,
    dangling_interactions: usize,
}

impl Corpus {
    /// Validate referential integrity and derive cue authorship.
    pub fn new(tweets: Vec<Tweet>, users: Vec<User>) -> Result<Self, CorpusError> {
        let mut user_index = HashMap::with_capacity(users.len());
        for (i, u) in users.iter().enumerate() {
            if user_index.insert(u.id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateId {
                    kind: "user",
                    id: u.id.clone(),
                });
            }
            if u.history.windows(2).any(|w| w[1].timestamp < w[0].timestamp) {
                return Err(CorpusError::InvalidRecord {
                    id: u.id.clone(),
                    reason: "history timestamps decrease".into(),
                });
            }
        }
        let mut tweet_index = HashMap::with_capacity(tweets.len());
        for (i, t) in tweets.iter().enumerate() {
            if tweet_index.insert(t.id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateId {
                    kind: "tweet",
                    id: t.id.clone(),
                });
            }
        }

        let mut earliest_cue: HashMap<usize, usize> = HashMap::new();
        for (i, t) in tweets.iter().enumerate() {
            if !user_index.contains_key(&t.author_id) {
                return Err(CorpusError::DanglingReference {
                    from: t.id.clone(),
                    kind: "user",
                    to: t.author_id.clone(),
                });
            }
            match &t.reply_to {
                Some(parent) => {
                    let p = *tweet_index.get(parent).ok_or_else(|| CorpusError::DanglingReference {
                        from: t.id.clone(),
                        kind: "tweet",
                        to: parent.clone(),
                    })?;
                    if tweets[p].conversation_id != t.conversation_id {
                        return Err(CorpusError::DanglingReference {
                            from: t.id.clone(),
                            kind: "tweet in the same conversation",
                            to: parent.clone(),
                        });
                    }
                    if t.role == TweetRole::Cue {
                        if tweets[p].role != TweetRole::Sarcastic {
                            return Err(CorpusError::InvalidRecord {
                                id: t.id.clone(),
                                reason: format!("cue replies to non-sarcastic tweet {parent:?}"),
                            });
                        }
                        let slot = earliest_cue.entry(p).or_insert(i);
                        if t.timestamp < tweets[*slot].timestamp {
                            *slot = i;
                        }
                    }
                }
                None if matches!(t.role, TweetRole::Cue | TweetRole::Oblivious) => {
                    return Err(CorpusError::InvalidRecord {
                        id: t.id.clone(),
                        reason: format!("{} tweet without reply_to", t.role.as_str()),
                    });
                }
                None => {}
            }
        }

        let cue_authorship = earliest_cue
            .into_iter()
            .map(|(sarcastic, cue)| {
                let kind = if tweets[cue].author_id == tweets[sarcastic].author_id {
                    CueAuthorship::Intended
                } else {
                    CueAuthorship::Perceived
                };
                (sarcastic, kind)
            })
            .collect();

        let dangling_interactions = users
            .iter()
            .flat_map(|u| &u.interactions)
            .filter(|i| !user_index.contains_key(&i.peer))
            .count();

        Ok(Self {
            tweets,
            users,
            tweet_index,
            user_index,
            cue_authorship,
            dangling_interactions,
        })
    }

    pub fn empty() -> Self {
        Self::new(Vec::new(), Vec::new()).expect("empty corpus is valid")
    }

    pub fn tweets(&self) -> &[Tweet] {
        &self.tweets
    }

    pub fn users(&self) -> &[User] {
        &self.users
    }

    /// `(tweets, users)`.
    pub fn size(&self) -> (usize, usize) {
        (self.tweets.len(), self.users.len())
    }

    pub fn is_empty(&self) -> bool {
        self.tweets.is_empty() && self.users.is_empty()
    }

    pub fn tweet(&self, id: &str) -> Option<&Tweet> {
        self.tweet_index.get(id).map(|&i| &self.tweets[i])
    }

    pub fn tweet_position(&self, id: &str) -> Option<usize> {
        self.tweet_index.get(id).copied()
    }

    pub fn user(&self, id: &str) -> Option<&User> {
        self.user_index.get(id).map(|&i| &self.users[i])
    }

    pub fn user_position(&self, id: &str) -> Option<usize> {
        self.user_index.get(id).copied()
    }

    /// Interactions whose peer is not a corpus user. They are kept in the
    /// corpus and dropped when the graph is built.
    pub fn dangling_interactions(&self) -> usize {
        self.dangling_interactions
    }

    pub fn cue_authorship(&self, tweet_id: &str) -> Option<CueAuthorship> {
        self.tweet_index
            .get(tweet_id)
            .and_then(|i| self.cue_authorship.get(i))
            .copied()
    }

    pub fn role_counts(&self) -> [(TweetRole, usize); 5] {
        TweetRole::ALL.map(|r| (r, self.tweets.iter().filter(|t| t.role == r).count()))
    }

    /// One row per sarcastic or non-sarcastic tweet, in corpus order.
    pub fn label_table(&self) -> Vec<LabelRow> {
        self.tweets
            .iter()
            .enumerate()
            .filter_map(|(i, t)| {
                let label = match t.role {
                    TweetRole::Sarcastic => SarcasmLabel::Sarcastic,
                    TweetRole::NonSarcastic => SarcasmLabel::NonSarcastic,
                    _ => return None,
                };
                Some(LabelRow {
                    tweet_id: t.id.clone(),
                    author_id: t.author_id.clone(),
                    label,
                    cue: self.cue_authorship.get(&i).copied(),
                })
            })
            .collect()
    }
}
