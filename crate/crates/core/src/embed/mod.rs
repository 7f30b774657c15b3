//! Initial node representations: hashed or precomputed tweet vectors, a
//! trainable tweet projection, and history-based user embeddings.

mod encoder;
mod fill;
mod io;
mod user2vec;

pub use encoder::{encode_text, encode_tweets, preprocess_tokens, TweetSource, TWEET_DIM};
pub use fill::fill_missing_users;
pub use io::{read_embeddings, write_embeddings, write_embeddings_csv};
pub use user2vec::{train_user2vec, User2VecConfig, User2VecManifest, User2VecOutput};

use std::collections::HashMap;

use thiserror::Error;

use crate::tensor::{Matrix, TensorError};

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("no embedding for tweet {0:?}")]
    MissingEmbedding(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("duplicate embedding id {0:?}")]
    DuplicateId(String),
    #[error("embedding for {0:?} is not finite")]
    NonFinite(String),
    #[error("no user has enough history for user2vec")]
    NoEligibleUsers,
    #[error("no trained user vector available")]
    NoTrainedUsers,
    #[error("invalid user2vec config: {0}")]
    InvalidConfig(String),
    #[error("embedding file: {0}")]
    Format(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Rows of real vectors keyed by original id.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    ids: Vec<String>,
    values: Matrix,
    id_index: HashMap<String, usize>,
}

impl EmbeddingMatrix {
    pub fn new(ids: Vec<String>, values: Matrix) -> Result<Self, EmbedError> {
        if ids.len() != values.rows() {
            return Err(EmbedError::DimensionMismatch {
                expected: ids.len(),
                found: values.rows(),
            });
        }
        let mut id_index = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if id_index.insert(id.clone(), i).is_some() {
                return Err(EmbedError::DuplicateId(id.clone()));
            }
            if !values.row(i).iter().all(|v| v.is_finite()) {
                return Err(EmbedError::NonFinite(id.clone()));
            }
        }
        Ok(Self {
            ids,
            values,
            id_index,
        })
    }

    pub fn rows(&self) -> usize {
        self.ids.len()
    }

    pub fn dim(&self) -> usize {
        self.values.cols()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.id_index.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.position(id).map(|i| self.values.row(i))
    }

    /// Stack the rows for `ids` in order; every id must be present.
    pub fn select<'a>(&self, ids: impl IntoIterator<Item = &'a str>) -> Result<Matrix, EmbedError> {
        let mut data = Vec::new();
        let mut n = 0;
        for id in ids {
            let row = self
                .get(id)
                .ok_or_else(|| EmbedError::MissingEmbedding(id.to_string()))?;
            data.extend_from_slice(row);
            n += 1;
        }
        Ok(Matrix::from_vec(n, self.dim(), data)?)
    }
}

/// Row-wise linear map `768 -> d` of tweet vectors, with `weights` stored as
/// `768 x d`. The differentiable version of this map lives in the model.
pub fn project_tweets(tweets: &EmbeddingMatrix, weights: &Matrix) -> Result<EmbeddingMatrix, EmbedError> {
    if weights.rows() != tweets.dim() {
        return Err(EmbedError::DimensionMismatch {
            expected: tweets.dim(),
            found: weights.rows(),
        });
    }
    let values = tweets.values().matmul(weights)?;
    EmbeddingMatrix::new(tweets.ids().to_vec(), values)
}
