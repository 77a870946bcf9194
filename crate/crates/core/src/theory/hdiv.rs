//! Plug-in H-divergence between two samples: fit a classifier on half of
//! each, then measure how differently it fires on the other halves.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::{adam_step, bce_loss, mlp_backward, mlp_forward, Activation, AdamState, MlpParams};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HypothesisConfig {
    /// Hidden widths; empty gives a linear-threshold classifier.
    pub hidden: Vec<usize>,
    pub steps: usize,
    pub learning_rate: f64,
}

impl Default for HypothesisConfig {
    fn default() -> Self {
        HypothesisConfig {
            hidden: vec![16, 16],
            steps: 500,
            learning_rate: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HDivergence {
    /// |P̂_A(h = 1) − P̂_B(h = 1)| on the held-out halves.
    pub estimate: f64,
    /// 1 + estimate: the two-domain adversary value of the same classifier.
    pub adversary_value: f64,
}

fn halves(xs: &Matrix, rng: &mut Rng) -> (Matrix, Matrix) {
    let mut idx: Vec<usize> = (0..xs.rows()).collect();
    rng.shuffle(&mut idx);
    let cut = xs.rows() / 2;
    (xs.select_rows(&idx[..cut]), xs.select_rows(&idx[cut..]))
}

fn firing_rate(h: &MlpParams, xs: &Matrix) -> Result<f64> {
    let p = h.predict(xs)?;
    Ok(p.data().iter().filter(|&&v| v > 0.5).count() as f64 / xs.rows() as f64)
}

pub fn h_divergence_estimate(
    a: &Matrix,
    b: &Matrix,
    config: &HypothesisConfig,
    rng: &mut Rng,
) -> Result<HDivergence> {
    if a.rows() < 2 || b.rows() < 2 {
        return Err(Error::InvalidArgument(format!(
            "each sample needs at least 2 points to split ({} and {})",
            a.rows(),
            b.rows()
        )));
    }
    if a.cols() != b.cols() {
        return Err(Error::shape("h-divergence samples", a.cols(), b.cols()));
    }
    let (a_fit, a_test) = halves(a, rng);
    let (b_fit, b_test) = halves(b, rng);

    let mut widths = vec![a.cols()];
    widths.extend(&config.hidden);
    widths.push(1);
    let mut h = MlpParams::glorot(&widths, Activation::Sigmoid, rng)?;
    let xs = Matrix::vstack(&[&a_fit, &b_fit])?;
    let labels: Vec<u8> = std::iter::repeat(1)
        .take(a_fit.rows())
        .chain(std::iter::repeat(0).take(b_fit.rows()))
        .collect();
    let mut adam = AdamState::new("h-divergence classifier", &h);
    for _ in 0..config.steps {
        let trace = mlp_forward(&h, &xs)?;
        let (_, grad) = bce_loss(trace.output.data(), &labels)?;
        let grad = Matrix::new(xs.rows(), 1, grad)?;
        let back = mlp_backward(&h, &trace, &grad)?;
        adam_step(&mut h, &back.grads, &mut adam, config.learning_rate)?;
    }
    let estimate = (firing_rate(&h, &a_test)? - firing_rate(&h, &b_test)?).abs();
    Ok(HDivergence {
        estimate,
        adversary_value: 1.0 + estimate,
    })
}
