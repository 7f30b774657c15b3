use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{EdgeType, GraphError, GraphVariant, NodeKind, SocialGraph};
use crate::corpus::{LabelRow, SarcasmLabel};

/// `2|E| / (|V| (|V| - 1))` over undirected non-self-loop edges.
pub fn density(graph: &SocialGraph) -> Result<f64, GraphError> {
    let v = graph.num_nodes();
    if v < 2 {
        return Err(GraphError::TooFewNodes(v));
    }
    let e: usize = graph
        .edge_counts()
        .iter()
        .filter(|(t, _)| **t != EdgeType::SelfLoop)
        .map(|(_, c)| c)
        .sum();
    Ok(2.0 * e as f64 / (v as f64 * (v as f64 - 1.0)))
}

/// Majority label per author over their labeled tweets; ties are omitted.
pub fn user_majority_labels(labels: &[LabelRow]) -> HashMap<String, SarcasmLabel> {
    let mut tally: HashMap<&str, (usize, usize)> = HashMap::new();
    for row in labels {
        let slot = tally.entry(row.author_id.as_str()).or_default();
        match row.label {
            SarcasmLabel::Sarcastic => slot.0 += 1,
            SarcasmLabel::NonSarcastic => slot.1 += 1,
        }
    }
    tally
        .into_iter()
        .filter_map(|(u, (s, n))| match s.cmp(&n) {
            std::cmp::Ordering::Greater => Some((u.to_string(), SarcasmLabel::Sarcastic)),
            std::cmp::Ordering::Less => Some((u.to_string(), SarcasmLabel::NonSarcastic)),
            std::cmp::Ordering::Equal => None,
        })
        .collect()
}

/// Fraction of user-user edges whose endpoints share a majority label,
/// counted over edges where both endpoints have one.
pub fn homophily(graph: &SocialGraph, labels: &[LabelRow]) -> Result<f64, GraphError> {
    let majority = user_majority_labels(labels);
    let (mut same, mut total) = (0usize, 0usize);
    for e in graph.edges() {
        if e.kind != EdgeType::UserUser || graph.global(e.src) >= graph.global(e.dst) {
            continue;
        }
        let a = majority.get(graph.original_id(e.src));
        let b = majority.get(graph.original_id(e.dst));
        if let (Some(a), Some(b)) = (a, b) {
            total += 1;
            if a == b {
                same += 1;
            }
        }
    }
    if total == 0 {
        return Err(GraphError::NoEligibleEdges);
    }
    Ok(same as f64 / total as f64)
}

/// Graph statistics report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphStats {
    pub variant: GraphVariant,
    pub nodes: BTreeMap<NodeKind, usize>,
    pub edges: BTreeMap<EdgeType, usize>,
    pub density: Option<f64>,
    pub homophily: Option<f64>,
}

impl GraphStats {
    pub fn compute(graph: &SocialGraph, labels: Option<&[LabelRow]>) -> Self {
        Self {
            variant: graph.variant(),
            nodes: BTreeMap::from([
                (NodeKind::User, graph.num_users()),
                (NodeKind::Tweet, graph.num_tweets()),
            ]),
            edges: graph.edge_counts(),
            density: density(graph).ok(),
            homophily: labels.and_then(|l| homophily(graph, l).ok()),
        }
    }
}
