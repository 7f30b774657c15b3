//! Heterogeneous user/tweet graph with typed, undirected edges.

mod io;
mod stats;

pub use io::{read_graph, write_graph, EDGES_FILE, NODES_FILE};
pub use stats::{density, homophily, user_majority_labels, GraphStats};

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, TweetRole};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("corpus yields no nodes for variant {0}")]
    EmptyCorpus(GraphVariant),
    #[error("graph has {0} nodes; at least 2 are required")]
    TooFewNodes(usize),
    #[error("no user-user edge joins two labeled users")]
    NoEligibleEdges,
    #[error("unknown {what}: {value:?}")]
    Parse { what: &'static str, value: String },
    #[error("graph file: {0}")]
    Format(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    User,
    Tweet,
}

impl NodeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::User => "user",
            NodeKind::Tweet => "tweet",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId {
    pub kind: NodeKind,
    pub index: usize,
}

impl NodeId {
    pub fn user(index: usize) -> Self {
        Self {
            kind: NodeKind::User,
            index,
        }
    }

    pub fn tweet(index: usize) -> Self {
        Self {
            kind: NodeKind::Tweet,
            index,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeType {
    UserUser,
    TweetTweet,
    Authorship,
    SelfLoop,
}

impl EdgeType {
    pub const ALL: [EdgeType; 4] = [
        EdgeType::UserUser,
        EdgeType::TweetTweet,
        EdgeType::Authorship,
        EdgeType::SelfLoop,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EdgeType::UserUser => "user_user",
            EdgeType::TweetTweet => "tweet_tweet",
            EdgeType::Authorship => "authorship",
            EdgeType::SelfLoop => "self_loop",
        }
    }
}

impl FromStr for EdgeType {
    type Err = GraphError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EdgeType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| GraphError::Parse {
                what: "edge type",
                value: s.into(),
            })
    }
}

/// Which nodes and edge types a graph keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GraphVariant {
    /// Users and tweets, cue tweets excluded.
    NoCue,
    /// As `NoCue`, without elicit tweets.
    NoElicit,
    /// As `NoCue`, without oblivious tweets.
    NoOblivious,
    /// Users and all tweets, cue tweets included.
    PlusCue,
    /// Non-cue tweets only, with tweet-tweet edges.
    TweetTweetOnly,
    /// Users only, with user-user edges.
    UserOnly,
}

impl GraphVariant {
    pub const ALL: [GraphVariant; 6] = [
        GraphVariant::NoCue,
        GraphVariant::NoElicit,
        GraphVariant::NoOblivious,
        GraphVariant::PlusCue,
        GraphVariant::TweetTweetOnly,
        GraphVariant::UserOnly,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            GraphVariant::NoCue => "NoCue",
            GraphVariant::NoElicit => "NoElicit",
            GraphVariant::NoOblivious => "NoOblivious",
            GraphVariant::PlusCue => "PlusCue",
            GraphVariant::TweetTweetOnly => "TweetTweetOnly",
            GraphVariant::UserOnly => "UserOnly",
        }
    }

    pub fn keeps_role(self, role: TweetRole) -> bool {
        match self {
            GraphVariant::UserOnly => false,
            GraphVariant::PlusCue => true,
            GraphVariant::NoElicit => !matches!(role, TweetRole::Cue | TweetRole::Elicit),
            GraphVariant::NoOblivious => !matches!(role, TweetRole::Cue | TweetRole::Oblivious),
            GraphVariant::NoCue | GraphVariant::TweetTweetOnly => role != TweetRole::Cue,
        }
    }

    pub fn has_users(self) -> bool {
        self != GraphVariant::TweetTweetOnly
    }

    pub fn has_tweets(self) -> bool {
        self != GraphVariant::UserOnly
    }
}

impl fmt::Display for GraphVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GraphVariant {
    type Err = GraphError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s.chars().filter(|c| *c != '-' && *c != '_').collect();
        GraphVariant::ALL
            .into_iter()
            .find(|v| v.as_str().eq_ignore_ascii_case(&norm))
            .ok_or_else(|| GraphError::Parse {
                what: "graph variant",
                value: s.into(),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Edge {
    pub src: NodeId,
    pub dst: NodeId,
    pub kind: EdgeType,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BuildOptions {
    /// Keep only interactions at most this many seconds older than the most
    /// recent interaction in the corpus. `None` keeps the whole history.
    pub recency_window: Option<i64>,
}

/// Edge-parallel view of a graph over global node positions (users first,
/// then tweets). Edges are grouped by destination.
#[derive(Debug, Clone)]
pub struct EdgeIndex {
    pub num_nodes: usize,
    pub src: Arc<[usize]>,
    pub dst: Arc<[usize]>,
    pub kinds: Arc<[EdgeType]>,
}

#[derive(Debug, Clone)]
pub struct SocialGraph {
    variant: GraphVariant,
    user_ids: Vec<String>,
    tweet_ids: Vec<String>,
    tweet_roles: Vec<TweetRole>,
    tweet_authors: Vec<String>,
    user_lookup: HashMap<String, usize>,
    tweet_lookup: HashMap<String, usize>,
    /// Directed edges sorted by (dst, src) global position.
    edges: Vec<Edge>,
    /// `in_offsets[v]..in_offsets[v + 1]` indexes the edges into node `v`.
    in_offsets: Vec<usize>,
}

impl SocialGraph {
    /// Assemble a graph from node tables and undirected edge pairs; adds the
    /// reverse direction and one self-loop per node.
    pub(crate) fn assemble(
        variant: GraphVariant,
        user_ids: Vec<String>,
        tweets: Vec<(String, TweetRole, String)>,
        undirected: impl IntoIterator<Item = (NodeId, NodeId, EdgeType)>,
    ) -> Self {
        let (tweet_ids, rest): (Vec<String>, Vec<(TweetRole, String)>) =
            tweets.into_iter().map(|(id, r, a)| (id, (r, a))).unzip();
        let (tweet_roles, tweet_authors): (Vec<TweetRole>, Vec<String>) = rest.into_iter().unzip();
        let user_lookup = user_ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
        let tweet_lookup = tweet_ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
        let mut graph = Self {
            variant,
            user_ids,
            tweet_ids,
            tweet_roles,
            tweet_authors,
            user_lookup,
            tweet_lookup,
            edges: Vec::new(),
            in_offsets: Vec::new(),
        };

        let mut edges = Vec::new();
        for (a, b, kind) in undirected {
            edges.push(Edge { src: a, dst: b, kind });
            edges.push(Edge { src: b, dst: a, kind });
        }
        for i in 0..graph.user_ids.len() {
            let n = NodeId::user(i);
            edges.push(Edge {
                src: n,
                dst: n,
                kind: EdgeType::SelfLoop,
            });
        }
        for i in 0..graph.tweet_ids.len() {
            let n = NodeId::tweet(i);
            edges.push(Edge {
                src: n,
                dst: n,
                kind: EdgeType::SelfLoop,
            });
        }
        edges.sort_by_key(|e| (graph.global(e.dst), graph.global(e.src), e.kind));
        edges.dedup();

        let mut in_offsets = vec![0usize; graph.num_nodes() + 1];
        for e in &edges {
            in_offsets[graph.global(e.dst) + 1] += 1;
        }
        for i in 0..graph.num_nodes() {
            in_offsets[i + 1] += in_offsets[i];
        }
        graph.edges = edges;
        graph.in_offsets = in_offsets;
        graph
    }

    pub fn variant(&self) -> GraphVariant {
        self.variant
    }

    pub fn num_users(&self) -> usize {
        self.user_ids.len()
    }

    pub fn num_tweets(&self) -> usize {
        self.tweet_ids.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.user_ids.len() + self.tweet_ids.len()
    }

    /// Position of a node in the stacked feature matrix: users first.
    pub fn global(&self, node: NodeId) -> usize {
        match node.kind {
            NodeKind::User => node.index,
            NodeKind::Tweet => self.user_ids.len() + node.index,
        }
    }

    pub fn node_at(&self, global: usize) -> NodeId {
        if global < self.user_ids.len() {
            NodeId::user(global)
        } else {
            NodeId::tweet(global - self.user_ids.len())
        }
    }

    pub fn user_ids(&self) -> &[String] {
        &self.user_ids
    }

    pub fn tweet_ids(&self) -> &[String] {
        &self.tweet_ids
    }

    pub fn tweet_role(&self, index: usize) -> TweetRole {
        self.tweet_roles[index]
    }

    pub fn tweet_author(&self, index: usize) -> &str {
        &self.tweet_authors[index]
    }

    pub fn original_id(&self, node: NodeId) -> &str {
        match node.kind {
            NodeKind::User => &self.user_ids[node.index],
            NodeKind::Tweet => &self.tweet_ids[node.index],
        }
    }

    pub fn user_node(&self, id: &str) -> Option<NodeId> {
        self.user_lookup.get(id).map(|&i| NodeId::user(i))
    }

    pub fn tweet_node(&self, id: &str) -> Option<NodeId> {
        self.tweet_lookup.get(id).map(|&i| NodeId::tweet(i))
    }

    /// All directed edges, including both directions of every undirected
    /// edge and the self-loops, grouped by destination.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Edges whose destination is `node`.
    pub fn in_edges(&self, node: NodeId) -> &[Edge] {
        let g = self.global(node);
        &self.edges[self.in_offsets[g]..self.in_offsets[g + 1]]
    }

    /// Undirected edge count per type; self-loops counted once per node.
    pub fn edge_counts(&self) -> BTreeMap<EdgeType, usize> {
        let mut counts: BTreeMap<EdgeType, usize> = EdgeType::ALL.iter().map(|&t| (t, 0)).collect();
        for e in &self.edges {
            if e.kind == EdgeType::SelfLoop || self.global(e.src) < self.global(e.dst) {
                *counts.get_mut(&e.kind).expect("all types present") += 1;
            }
        }
        counts
    }

    pub fn edge_index(&self) -> EdgeIndex {
        EdgeIndex {
            num_nodes: self.num_nodes(),
            src: self.edges.iter().map(|e| self.global(e.src)).collect(),
            dst: self.edges.iter().map(|e| self.global(e.dst)).collect(),
            kinds: self.edges.iter().map(|e| e.kind).collect(),
        }
    }

    /// Neighbors (excluding the node itself) reachable over `kind` edges.
    pub fn neighbors(&self, node: NodeId, kind: EdgeType) -> impl Iterator<Item = NodeId> + '_ {
        self.in_edges(node)
            .iter()
            .filter(move |e| e.kind == kind && e.src != node)
            .map(|e| e.src)
    }
}

/// Build the graph of `variant` from a corpus.
pub fn build_graph(
    corpus: &Corpus,
    variant: GraphVariant,
    options: &BuildOptions,
) -> Result<SocialGraph, GraphError> {
    let user_ids: Vec<String> = if variant.has_users() {
        corpus.users().iter().map(|u| u.id.clone()).collect()
    } else {
        Vec::new()
    };
    let tweets: Vec<(String, TweetRole, String)> = corpus
        .tweets()
        .iter()
        .filter(|t| variant.keeps_role(t.role))
        .map(|t| (t.id.clone(), t.role, t.author_id.clone()))
        .collect();
    if user_ids.is_empty() && tweets.is_empty() {
        return Err(GraphError::EmptyCorpus(variant));
    }
    let user_pos: HashMap<&str, usize> = user_ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let tweet_pos: HashMap<&str, usize> = tweets.iter().enumerate().map(|(i, t)| (t.0.as_str(), i)).collect();

    let mut undirected: Vec<(NodeId, NodeId, EdgeType)> = Vec::new();

    if variant.has_users() && !user_ids.is_empty() {
        let cutoff = options.recency_window.map(|w| {
            let latest = corpus
                .users()
                .iter()
                .flat_map(|u| &u.interactions)
                .map(|i| i.timestamp)
                .max()
                .unwrap_or(0);
            latest.saturating_sub(w)
        });
        let mut pairs = BTreeSet::new();
        for (ui, user) in corpus.users().iter().enumerate() {
            for inter in &user.interactions {
                if cutoff.is_some_and(|c| inter.timestamp < c) {
                    continue;
                }
                let Some(&pi) = user_pos.get(inter.peer.as_str()) else {
                    continue;
                };
                if pi != ui {
                    pairs.insert((ui.min(pi), ui.max(pi)));
                }
            }
        }
        undirected.extend(
            pairs
                .into_iter()
                .map(|(a, b)| (NodeId::user(a), NodeId::user(b), EdgeType::UserUser)),
        );
    }

    if variant.has_tweets() {
        let mut conversations: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for t in corpus.tweets() {
            if let Some(&i) = tweet_pos.get(t.id.as_str()) {
                conversations.entry(t.conversation_id.as_str()).or_default().push(i);
            }
        }
        for members in conversations.values() {
            for (k, &a) in members.iter().enumerate() {
                for &b in &members[k + 1..] {
                    undirected.push((NodeId::tweet(a), NodeId::tweet(b), EdgeType::TweetTweet));
                }
            }
        }
        if variant.has_users() {
            for (i, (_, _, author)) in tweets.iter().enumerate() {
                if let Some(&u) = user_pos.get(author.as_str()) {
                    undirected.push((NodeId::tweet(i), NodeId::user(u), EdgeType::Authorship));
                }
            }
        }
    }

    Ok(SocialGraph::assemble(variant, user_ids, tweets, undirected))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::fixtures::{tweet, user};
    use crate::corpus::{Interaction, InteractionKind};

    fn thread() -> Corpus {
        Corpus::new(
            vec![
                tweet("e", "a", "c", TweetRole::Elicit, None),
                tweet("s", "b", "c", TweetRole::Sarcastic, Some("e")),
                tweet("o", "c", "c", TweetRole::Oblivious, Some("s")),
                tweet("q", "d", "c", TweetRole::Cue, Some("s")),
            ],
            vec![user("a"), user("b"), user("c"), user("d")],
        )
        .unwrap()
    }

    fn build(c: &Corpus, v: GraphVariant) -> SocialGraph {
        build_graph(c, v, &BuildOptions::default()).unwrap()
    }

    #[test]
    fn no_cue_thread_matches_hand_count() {
        let g = build(&thread(), GraphVariant::NoCue);
        assert_eq!(g.num_tweets(), 3);
        let counts = g.edge_counts();
        assert_eq!(counts[&EdgeType::TweetTweet], 3);
        assert_eq!(counts[&EdgeType::Authorship], 3);
        assert_eq!(counts[&EdgeType::UserUser], 0);
        assert_eq!(counts[&EdgeType::SelfLoop], 7);
    }

    #[test]
    fn plus_cue_and_no_oblivious_cliques() {
        let c = thread();
        let g = build(&c, GraphVariant::PlusCue);
        assert_eq!(g.num_tweets(), 4);
        assert_eq!(g.edge_counts()[&EdgeType::TweetTweet], 6);
        let g = build(&c, GraphVariant::NoOblivious);
        assert_eq!(g.num_tweets(), 2);
        assert_eq!(g.edge_counts()[&EdgeType::TweetTweet], 1);
    }

    #[test]
    fn restricted_variants_keep_one_node_kind() {
        let c = thread();
        let tt = build(&c, GraphVariant::TweetTweetOnly);
        assert_eq!((tt.num_users(), tt.num_tweets()), (0, 3));
        assert!(tt.edges().iter().all(|e| matches!(e.kind, EdgeType::TweetTweet | EdgeType::SelfLoop)));
        let uo = build(&c, GraphVariant::UserOnly);
        assert_eq!((uo.num_users(), uo.num_tweets()), (4, 0));
    }

    #[test]
    fn interactions_are_deduplicated_and_windowed() {
        let mut a = user("a");
        for (peer, ts) in [("b", 10), ("b", 20), ("c", 100), ("ghost", 100), ("a", 50)] {
            a.interactions.push(Interaction {
                peer: peer.into(),
                kind: InteractionKind::Reply,
                timestamp: ts,
            });
        }
        let mut b = user("b");
        b.interactions.push(Interaction {
            peer: "a".into(),
            kind: InteractionKind::Quote,
            timestamp: 5,
        });
        let c = Corpus::new(Vec::new(), vec![a, b, user("c")]).unwrap();
        let g = build(&c, GraphVariant::UserOnly);
        assert_eq!(g.edge_counts()[&EdgeType::UserUser], 2);
        let recent = build_graph(
            &c,
            GraphVariant::UserOnly,
            &BuildOptions {
                recency_window: Some(50),
            },
        )
        .unwrap();
        assert_eq!(recent.edge_counts()[&EdgeType::UserUser], 1);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(matches!(
            build_graph(&Corpus::empty(), GraphVariant::NoCue, &BuildOptions::default()),
            Err(GraphError::EmptyCorpus(_))
        ));
    }

    #[test]
    fn variant_names_parse() {
        for v in GraphVariant::ALL {
            assert_eq!(v.as_str().parse::<GraphVariant>().unwrap(), v);
        }
        assert_eq!("no-elicit".parse::<GraphVariant>().unwrap(), GraphVariant::NoElicit);
    }
}
