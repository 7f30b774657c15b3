use super::{Matrix, TensorError};

/// Compressed sparse row matrix, used for constant bag-of-words inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRows {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseRows {
    pub fn from_dense(m: &Matrix) -> Self {
        let mut indptr = Vec::with_capacity(m.rows() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for r in 0..m.rows() {
            for (c, &v) in m.row(r).iter().enumerate() {
                if v != 0.0 {
                    indices.push(c);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Self {
            rows: m.rows(),
            cols: m.cols(),
            indptr,
            indices,
            values,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                m.set(r, c, v);
            }
        }
        m
    }

    /// `self * w`; same summation order as the dense product.
    pub fn matmul(&self, w: &Matrix) -> Result<Matrix, TensorError> {
        if self.cols != w.rows() {
            return Err(TensorError::ShapeMismatch {
                op: "sparse_matmul",
                left: self.shape(),
                right: w.shape(),
            });
        }
        let n = w.cols();
        let mut out = Matrix::zeros(self.rows, n);
        for r in 0..self.rows {
            for (k, a) in self.row(r) {
                for (o, &b) in out.row_mut(r).iter_mut().zip(w.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self^T * g`.
    pub fn matmul_tn(&self, g: &Matrix) -> Result<Matrix, TensorError> {
        if self.rows != g.rows() {
            return Err(TensorError::ShapeMismatch {
                op: "sparse_matmul_tn",
                left: self.shape(),
                right: g.shape(),
            });
        }
        let mut out = Matrix::zeros(self.cols, g.cols());
        for r in 0..self.rows {
            for (k, a) in self.row(r) {
                for (o, &b) in out.row_mut(k).iter_mut().zip(g.row(r)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }
}
