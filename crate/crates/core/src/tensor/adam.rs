use super::{Matrix, TensorError};

/// Adam with bias-corrected first and second moments.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
}

impl AdamState {
    pub const BETA1: f64 = 0.9;
    pub const BETA2: f64 = 0.999;
    pub const EPSILON: f64 = 1e-8;

    /// Fresh state with zero moments shaped like `params`.
    pub fn new<'a>(learning_rate: f64, params: impl IntoIterator<Item = &'a Matrix>) -> Self {
        let (first, second) = params
            .into_iter()
            .map(|p| (Matrix::zeros(p.rows(), p.cols()), Matrix::zeros(p.rows(), p.cols())))
            .unzip();
        Self {
            learning_rate,
            beta1: Self::BETA1,
            beta2: Self::BETA2,
            epsilon: Self::EPSILON,
            step: 0,
            first,
            second,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Matrix] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Matrix] {
        &self.second
    }

    /// One update of every parameter from its gradient. Parameters and
    /// gradients are matched by position.
    pub fn step(&mut self, params: &mut [&mut Matrix], grads: &[Matrix]) -> Result<(), TensorError> {
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(TensorError::ShapeMismatch {
                op: "adam_step",
                left: (self.first.len(), 0),
                right: (params.len(), grads.len()),
            });
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.first) {
            p.check_same("adam_step", g)?;
            p.check_same("adam_step", m)?;
        }

        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (i, p) in params.iter_mut().enumerate() {
            let g = grads[i].as_slice();
            let m = self.first[i].as_mut_slice();
            let v = self.second[i].as_mut_slice();
            for (j, w) in p.as_mut_slice().iter_mut().enumerate() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                *w -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}
