//! Structural invariants of built graphs over random synthetic corpora.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sarcasm_gat::corpus::{generate_synthetic, Corpus, SyntheticConfig, TweetRole};
use sarcasm_gat::graph::{build_graph, density, homophily, BuildOptions, EdgeType, GraphVariant, NodeKind, SocialGraph};

/// Small corpora can make the homophily target infeasible; a few nearby
/// seeds are tried, then interactions are dropped.
fn corpus(seed: u64, n_users: usize, n_conversations: usize) -> Corpus {
    let cfg = |seed: u64, interaction_density: f64| SyntheticConfig {
        n_users,
        n_conversations,
        history_length: [2, 4],
        cue_prob: 0.5,
        interaction_density,
        seed,
        ..Default::default()
    };
    (0..20)
        .find_map(|k| generate_synthetic(&cfg(seed.wrapping_add(k), 3.0)).ok())
        .unwrap_or_else(|| generate_synthetic(&cfg(seed, 0.0)).unwrap())
}

fn build(c: &Corpus, v: GraphVariant) -> SocialGraph {
    build_graph(c, v, &BuildOptions::default()).unwrap()
}

/// Directed edges as `(kind, src id, dst id, edge type)` with original ids.
fn labeled_edges(g: &SocialGraph) -> BTreeSet<(NodeKind, String, NodeKind, String, EdgeType)> {
    g.edges()
        .iter()
        .map(|e| {
            (
                e.src.kind,
                g.original_id(e.src).to_string(),
                e.dst.kind,
                g.original_id(e.dst).to_string(),
                e.kind,
            )
        })
        .collect()
}

/// Same corpus with users and tweets shuffled and user ids renamed.
fn relabeled(c: &Corpus, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rename: HashMap<String, String> = c.users().iter().map(|u| (u.id.clone(), format!("x-{}", u.id))).collect();
    let mut users = c.users().to_vec();
    for u in &mut users {
        u.id = rename[&u.id].clone();
        for i in &mut u.interactions {
            if let Some(r) = rename.get(&i.peer) {
                i.peer = r.clone();
            }
        }
    }
    let mut tweets = c.tweets().to_vec();
    for t in &mut tweets {
        t.author_id = rename[&t.author_id].clone();
    }
    users.shuffle(&mut rng);
    tweets.shuffle(&mut rng);
    Corpus::new(tweets, users).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn edges_are_symmetric_with_one_self_loop_per_node(seed in any::<u64>(), users in 3usize..30, convs in 1usize..15) {
        let c = corpus(seed, users, convs);
        for v in GraphVariant::ALL {
            let g = build(&c, v);
            let set: BTreeSet<(usize, usize, EdgeType)> =
                g.edges().iter().map(|e| (g.global(e.src), g.global(e.dst), e.kind)).collect();
            prop_assert_eq!(set.len(), g.edges().len(), "duplicate edge in {}", v);
            let mut loops = vec![0usize; g.num_nodes()];
            for &(s, d, k) in &set {
                if k == EdgeType::SelfLoop {
                    prop_assert_eq!(s, d);
                    loops[s] += 1;
                } else {
                    prop_assert_ne!(s, d);
                    prop_assert!(set.contains(&(d, s, k)), "{} lacks reverse of {:?}", v, (s, d, k));
                }
            }
            prop_assert!(loops.iter().all(|&n| n == 1));
        }
    }

    #[test]
    fn node_counts_follow_the_variant(seed in any::<u64>(), users in 3usize..30, convs in 1usize..15) {
        let c = corpus(seed, users, convs);
        for v in GraphVariant::ALL {
            let g = build(&c, v);
            let users = if v.has_users() { c.users().len() } else { 0 };
            let tweets = c.tweets().iter().filter(|t| v.keeps_role(t.role)).count();
            prop_assert_eq!(g.num_users(), users);
            prop_assert_eq!(g.num_tweets(), tweets);
            prop_assert_eq!(g.num_nodes(), users + tweets);
            let counts = g.edge_counts();
            prop_assert_eq!(counts.get(&EdgeType::SelfLoop).copied().unwrap_or(0), users + tweets);
            let authorship = counts.get(&EdgeType::Authorship).copied().unwrap_or(0);
            prop_assert_eq!(authorship, if v.has_users() { tweets } else { 0 });
            if !v.has_users() {
                prop_assert_eq!(counts.get(&EdgeType::UserUser).copied().unwrap_or(0), 0);
            }
        }
    }

    #[test]
    fn conversations_are_cliques(seed in any::<u64>(), users in 3usize..30, convs in 1usize..15) {
        let c = corpus(seed, users, convs);
        for v in [GraphVariant::NoCue, GraphVariant::PlusCue, GraphVariant::NoElicit, GraphVariant::TweetTweetOnly] {
            let g = build(&c, v);
            let mut by_conv: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
            for t in c.tweets().iter().filter(|t| v.keeps_role(t.role)) {
                by_conv.entry(t.conversation_id.as_str()).or_default().push(t.id.as_str());
            }
            let expected: usize = by_conv.values().map(|m| m.len() * (m.len() - 1) / 2).sum();
            prop_assert_eq!(g.edge_counts().get(&EdgeType::TweetTweet).copied().unwrap_or(0), expected);
            let edges = labeled_edges(&g);
            for m in by_conv.values() {
                for a in m {
                    for b in m {
                        if a != b {
                            let key = (NodeKind::Tweet, a.to_string(), NodeKind::Tweet, b.to_string(), EdgeType::TweetTweet);
                            prop_assert!(edges.contains(&key));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn ablations_are_induced_subgraphs(seed in any::<u64>(), users in 3usize..30, convs in 1usize..15) {
        let c = corpus(seed, users, convs);
        let full = labeled_edges(&build(&c, GraphVariant::NoCue));
        for v in [GraphVariant::NoElicit, GraphVariant::NoOblivious] {
            let g = build(&c, v);
            let kept: BTreeSet<String> = g.tweet_ids().iter().cloned().collect();
            let keep = |k: NodeKind, id: &str| k == NodeKind::User || kept.contains(id);
            let induced: BTreeSet<_> = full.iter().filter(|e| keep(e.0, &e.1) && keep(e.2, &e.3)).cloned().collect();
            prop_assert_eq!(&labeled_edges(&g), &induced);
        }
    }

    #[test]
    fn statistics_ignore_node_order_and_names(seed in any::<u64>(), users in 3usize..30, convs in 2usize..15) {
        let c = corpus(seed, users, convs);
        let r = relabeled(&c, seed ^ 1);
        for v in [GraphVariant::NoCue, GraphVariant::UserOnly] {
            let (a, b) = (build(&c, v), build(&r, v));
            prop_assert_eq!(a.edge_counts(), b.edge_counts());
            let (da, db) = (density(&a).ok(), density(&b).ok());
            prop_assert!(da.zip(db).is_none_or(|(x, y)| (x - y).abs() < 1e-12));
            prop_assert_eq!(da.is_some(), db.is_some());
            let ha = homophily(&a, &c.label_table()).ok();
            let hb = homophily(&b, &r.label_table()).ok();
            prop_assert_eq!(ha.is_some(), hb.is_some());
            prop_assert!(ha.zip(hb).is_none_or(|(x, y)| (x - y).abs() < 1e-12));
        }
    }

    #[test]
    fn restricted_variants_are_typed_subgraphs(seed in any::<u64>(), users in 3usize..30, convs in 1usize..15) {
        let c = corpus(seed, users, convs);
        let full = labeled_edges(&build(&c, GraphVariant::NoCue));
        let elicit = c.tweets().iter().filter(|t| t.role == TweetRole::Elicit).count();
        prop_assert_eq!(build(&c, GraphVariant::NoElicit).num_nodes() + elicit, build(&c, GraphVariant::NoCue).num_nodes());
        for (v, kind, keep) in [
            (GraphVariant::UserOnly, NodeKind::User, EdgeType::UserUser),
            (GraphVariant::TweetTweetOnly, NodeKind::Tweet, EdgeType::TweetTweet),
        ] {
            let expected: BTreeSet<_> = full
                .iter()
                .filter(|e| e.0 == kind && e.2 == kind && (e.4 == keep || e.4 == EdgeType::SelfLoop))
                .cloned()
                .collect();
            prop_assert_eq!(&labeled_edges(&build(&c, v)), &expected);
        }
    }
}
