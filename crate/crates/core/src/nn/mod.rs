//! Differentiable MLP core: forward/backward passes, losses and Adam.

mod adam;
pub(crate) mod loss;
mod mlp;

pub use adam::{adam_step, AdamState};
pub use loss::{bce_loss, softmax_ce_loss, PROB_CLAMP};
pub use mlp::{
    mlp_backward, mlp_forward, sigmoid, Activation, Backward, ForwardTrace, Layer, MlpGradients,
    MlpParams,
};

/// A bundle of flat parameter tensors, visited in a fixed order.
///
/// Gradient containers implement it with the same tensor layout as the
/// parameters they mirror, which is what the optimizer relies on.
pub trait Parameters {
    fn tensors(&self) -> Vec<&[f64]>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn to_flat(&self) -> Vec<f64> {
        self.tensors().concat()
    }
}

#[cfg(test)]
pub(crate) mod test_support {
    use crate::matrix::Matrix;
    use crate::rng::Rng;

    pub fn random_batch(rng: &mut Rng, rows: usize, cols: usize) -> Matrix {
        Matrix::new(rows, cols, (0..rows * cols).map(|_| rng.normal()).collect()).unwrap()
    }

    /// |a − b| / max(|a|, |b|, 1e-5). The floor keeps near-zero coordinates
    /// from turning round-off into huge relative errors.
    pub fn relative_error(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-5)
    }
}
