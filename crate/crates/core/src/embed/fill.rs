use super::{EmbedError, EmbeddingMatrix};
use crate::graph::{EdgeType, NodeId, SocialGraph};
use crate::tensor::Matrix;

/// One row per graph user, in graph order. Users without a trained row get
/// the mean of their trained user-user neighbors, or the global trained mean
/// when no neighbor is trained. Only originally trained rows are averaged.
pub fn fill_missing_users(trained: &EmbeddingMatrix, graph: &SocialGraph) -> Result<EmbeddingMatrix, EmbedError> {
    if trained.rows() == 0 {
        return Err(EmbedError::NoTrainedUsers);
    }
    let dim = trained.dim();
    let mut global = vec![0.0; dim];
    for r in 0..trained.rows() {
        for (g, v) in global.iter_mut().zip(trained.values().row(r)) {
            *g += v;
        }
    }
    global.iter_mut().for_each(|g| *g /= trained.rows() as f64);

    let ids = graph.user_ids().to_vec();
    let mut out = Matrix::zeros(ids.len(), dim);
    for (i, id) in ids.iter().enumerate() {
        if let Some(row) = trained.get(id) {
            out.row_mut(i).copy_from_slice(row);
            continue;
        }
        let mut acc = vec![0.0; dim];
        let mut n = 0usize;
        for nb in graph.neighbors(NodeId::user(i), EdgeType::UserUser) {
            if let Some(row) = trained.get(graph.original_id(nb)) {
                acc.iter_mut().zip(row).for_each(|(a, v)| *a += v);
                n += 1;
            }
        }
        if n == 0 {
            out.row_mut(i).copy_from_slice(&global);
        } else {
            out.row_mut(i)
                .iter_mut()
                .zip(&acc)
                .for_each(|(o, a)| *o = a / n as f64);
        }
    }
    EmbeddingMatrix::new(ids, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::TweetRole;
    use crate::graph::GraphVariant;

    fn graph(n: usize, pairs: &[(usize, usize)]) -> SocialGraph {
        SocialGraph::assemble(
            GraphVariant::UserOnly,
            (0..n).map(|i| format!("u{i}")).collect(),
            Vec::<(String, TweetRole, String)>::new(),
            pairs
                .iter()
                .map(|&(a, b)| (NodeId::user(a), NodeId::user(b), EdgeType::UserUser)),
        )
    }

    fn trained(rows: &[(&str, [f64; 2])]) -> EmbeddingMatrix {
        EmbeddingMatrix::new(
            rows.iter().map(|(id, _)| id.to_string()).collect(),
            Matrix::from_rows(&rows.iter().map(|(_, v)| v.to_vec()).collect::<Vec<_>>()).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn mean_of_two_neighbors() {
        let g = graph(3, &[(0, 2), (1, 2)]);
        let t = trained(&[("u0", [1.0, 2.0]), ("u1", [3.0, 6.0])]);
        let out = fill_missing_users(&t, &g).unwrap();
        assert_eq!(out.get("u2").unwrap(), &[2.0, 4.0]);
        assert_eq!(out.get("u0").unwrap(), &[1.0, 2.0]);
    }

    #[test]
    fn isolated_and_untrained_neighbors_get_global_mean() {
        let g = graph(5, &[(2, 3)]);
        let t = trained(&[("u0", [1.0, 0.0]), ("u1", [0.0, 1.0])]);
        let out = fill_missing_users(&t, &g).unwrap();
        assert_eq!(out.get("u2").unwrap(), &[0.5, 0.5]);
        assert_eq!(out.get("u3").unwrap(), &[0.5, 0.5]);
        assert_eq!(out.get("u4").unwrap(), &[0.5, 0.5]);
    }

    #[test]
    fn idempotent() {
        let g = graph(4, &[(0, 1), (1, 2)]);
        let t = trained(&[("u0", [1.0, -1.0]), ("u3", [2.0, 2.0])]);
        let once = fill_missing_users(&t, &g).unwrap();
        assert_eq!(fill_missing_users(&once, &g).unwrap(), once);
    }

    #[test]
    fn requires_trained_rows() {
        let empty = EmbeddingMatrix::new(vec![], Matrix::zeros(0, 2)).unwrap();
        assert!(matches!(
            fill_missing_users(&empty, &graph(2, &[])),
            Err(EmbedError::NoTrainedUsers)
        ));
    }
}
