//! Dense matrices, a reverse-mode tape, Adam, and parameter checkpoints.

mod adam;
mod checkpoint;
mod matrix;
mod sparse;
mod tape;

pub use adam::AdamState;
pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use matrix::Matrix;
pub use sparse::SparseRows;
pub use tape::{segment_softmax_values, Gradients, Tape, Var};

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("index {index} out of range {len} in {op}")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        len: usize,
    },
    #[error("segment {0} has no elements")]
    EmptySegment(usize),
    #[error("loss is not a scalar: shape {0:?}")]
    NotScalar((usize, usize)),
    #[error("loss does not depend on any trainable value")]
    DisconnectedLoss,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Glorot-uniform initialization for a `fan_in x fan_out` weight.
pub fn glorot_uniform<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    let limit = (6.0 / (rows + cols).max(1) as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-limit..limit))
}

/// A bundle of named trainable matrices with a stable order.
///
/// The order of [`named_params`](Parameters::named_params) and
/// [`params_mut`](Parameters::params_mut) must agree; it is the order used
/// for binding onto a tape, for Adam moments and for checkpoints.
pub trait Parameters {
    fn named_params(&self) -> Vec<(String, &Matrix)>;
    fn params_mut(&mut self) -> Vec<&mut Matrix>;

    fn param_count(&self) -> usize {
        self.named_params().iter().map(|(_, m)| m.len()).sum()
    }

    /// Owned `(name, value)` pairs, suitable for [`write_checkpoint`].
    fn to_named_tensors(&self) -> Vec<(String, Matrix)> {
        self.named_params()
            .into_iter()
            .map(|(n, m)| (n, m.clone()))
            .collect()
    }

    /// Overwrite every parameter from checkpoint tensors, matching by name.
    fn load_named_tensors(&mut self, tensors: &[(String, Matrix)]) -> Result<(), TensorError> {
        let names: Vec<String> = self.named_params().into_iter().map(|(n, _)| n).collect();
        if names.len() != tensors.len() {
            return Err(TensorError::Checkpoint(format!(
                "expected {} tensors, found {}",
                names.len(),
                tensors.len()
            )));
        }
        for (slot, name) in self.params_mut().into_iter().zip(&names) {
            let (_, value) = tensors
                .iter()
                .find(|(n, _)| n == name)
                .ok_or_else(|| TensorError::Checkpoint(format!("missing tensor {name}")))?;
            slot.check_same("load_checkpoint", value)?;
            *slot = value.clone();
        }
        Ok(())
    }
}
