//! CSV export and import of graphs.
//!
//! `nodes.csv`: `kind,index,original_id`. `edges.csv`:
//! `src_kind,src_index,dst_kind,dst_index,type`, one row per directed edge
//! including self-loops. `graph.json` records the variant.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EdgeType, GraphError, GraphVariant, NodeId, NodeKind, SocialGraph};
use crate::corpus::Corpus;

pub const NODES_FILE: &str = "nodes.csv";
pub const EDGES_FILE: &str = "edges.csv";
const META_FILE: &str = "graph.json";

#[derive(Serialize, Deserialize)]
struct NodeRow {
    kind: NodeKind,
    index: usize,
    original_id: String,
}

#[derive(Serialize, Deserialize)]
struct EdgeRow {
    src_kind: NodeKind,
    src_index: usize,
    dst_kind: NodeKind,
    dst_index: usize,
    #[serde(rename = "type")]
    kind: EdgeType,
}

#[derive(Serialize, Deserialize)]
struct GraphMeta {
    variant: GraphVariant,
}

pub fn write_graph(graph: &SocialGraph, dir: impl AsRef<Path>) -> Result<(), GraphError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut nodes = csv::Writer::from_path(dir.join(NODES_FILE))?;
    for (i, id) in graph.user_ids().iter().enumerate() {
        nodes.serialize(NodeRow {
            kind: NodeKind::User,
            index: i,
            original_id: id.clone(),
        })?;
    }
    for (i, id) in graph.tweet_ids().iter().enumerate() {
        nodes.serialize(NodeRow {
            kind: NodeKind::Tweet,
            index: i,
            original_id: id.clone(),
        })?;
    }
    nodes.flush()?;
    let mut edges = csv::Writer::from_path(dir.join(EDGES_FILE))?;
    for e in graph.edges() {
        edges.serialize(EdgeRow {
            src_kind: e.src.kind,
            src_index: e.src.index,
            dst_kind: e.dst.kind,
            dst_index: e.dst.index,
            kind: e.kind,
        })?;
    }
    edges.flush()?;
    let meta = serde_json::to_string_pretty(&GraphMeta {
        variant: graph.variant(),
    })
    .map_err(std::io::Error::other)?;
    std::fs::write(dir.join(META_FILE), meta + "\n")?;
    Ok(())
}

/// Load a graph written by [`write_graph`]. Tweet roles and authors are
/// resolved against `corpus`.
pub fn read_graph(dir: impl AsRef<Path>, corpus: &Corpus) -> Result<SocialGraph, GraphError> {
    let dir = dir.as_ref();
    let meta: GraphMeta = serde_json::from_slice(&std::fs::read(dir.join(META_FILE))?)
        .map_err(|e| GraphError::Format(format!("{META_FILE}: {e}")))?;

    let mut user_ids = Vec::new();
    let mut tweets = Vec::new();
    for row in csv::Reader::from_path(dir.join(NODES_FILE))?.deserialize() {
        let row: NodeRow = row?;
        match row.kind {
            NodeKind::User => {
                if row.index != user_ids.len() {
                    return Err(GraphError::Format(format!("user index {} out of order", row.index)));
                }
                user_ids.push(row.original_id);
            }
            NodeKind::Tweet => {
                if row.index != tweets.len() {
                    return Err(GraphError::Format(format!("tweet index {} out of order", row.index)));
                }
                let t = corpus.tweet(&row.original_id).ok_or_else(|| {
                    GraphError::Format(format!("tweet {:?} not in corpus", row.original_id))
                })?;
                tweets.push((row.original_id, t.role, t.author_id.clone()));
            }
        }
    }

    let (nu, nt) = (user_ids.len(), tweets.len());
    let in_range = |n: NodeId| match n.kind {
        NodeKind::User => n.index < nu,
        NodeKind::Tweet => n.index < nt,
    };
    let mut directed = HashSet::new();
    for row in csv::Reader::from_path(dir.join(EDGES_FILE))?.deserialize() {
        let row: EdgeRow = row?;
        let src = NodeId {
            kind: row.src_kind,
            index: row.src_index,
        };
        let dst = NodeId {
            kind: row.dst_kind,
            index: row.dst_index,
        };
        if !in_range(src) || !in_range(dst) {
            return Err(GraphError::Format(format!("edge {src:?} -> {dst:?} out of range")));
        }
        directed.insert((src, dst, row.kind));
    }
    let mut undirected = Vec::new();
    for &(src, dst, kind) in &directed {
        if kind == EdgeType::SelfLoop {
            continue;
        }
        if !directed.contains(&(dst, src, kind)) {
            return Err(GraphError::Format(format!("edge {src:?} -> {dst:?} has no reverse")));
        }
        if (src.kind, src.index) < (dst.kind, dst.index) {
            undirected.push((src, dst, kind));
        }
    }
    undirected.sort_by_key(|&(s, d, k)| (s, d, k));
    Ok(SocialGraph::assemble(meta.variant, user_ids, tweets, undirected))
}
