//! Invariance of an encoder that is linear in a fixed basis: φ(x) = M Γ(x).
//!
//! With f(x) = M⁻M Γ(x) − Γ(x), which lies in Ker(M), the event "the head
//! picks row i on φ(x)" coincides with "Γ(x) + f(x) ∈ M⁻ I_i", where I_i is
//! the region where row i is the strict argmax. The checker builds f,
//! verifies that it is in the kernel, and estimates both sides on common
//! samples.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::density::{common_dim, ProductDensity};
use super::head::{head_scores, strict_argmax};
use super::linalg::{pseudo_inverse, PseudoInverse};
use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};
use crate::nn::Layer;
use crate::rng::Rng;

/// Scalar basis function on ℝ^d.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BasisFunction {
    Constant,
    Coordinate { index: usize },
    Power { index: usize, exponent: i32 },
    Product { a: usize, b: usize },
    Sine { index: usize },
}

impl BasisFunction {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match *self {
            BasisFunction::Constant => 1.0,
            BasisFunction::Coordinate { index } => x[index],
            BasisFunction::Power { index, exponent } => x[index].powi(exponent),
            BasisFunction::Product { a, b } => x[a] * x[b],
            BasisFunction::Sine { index } => x[index].sin(),
        }
    }

    fn max_index(&self) -> Option<usize> {
        match *self {
            BasisFunction::Constant => None,
            BasisFunction::Coordinate { index }
            | BasisFunction::Power { index, .. }
            | BasisFunction::Sine { index } => Some(index),
            BasisFunction::Product { a, b } => Some(a.max(b)),
        }
    }
}

/// φ(x) = M Γ(x) with Γ the stacked basis, plus M⁻ and a kernel basis.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPhiDecomposition {
    pub basis: Vec<BasisFunction>,
    /// s × m.
    pub coef: Matrix,
    /// m × s.
    pub pinv: Matrix,
    /// m × r, orthonormal.
    pub kernel: Matrix,
}

impl LinearPhiDecomposition {
    pub fn new(basis: Vec<BasisFunction>, coef: Matrix) -> Result<Self> {
        if coef.cols() != basis.len() || basis.is_empty() || coef.rows() == 0 {
            return Err(Error::shape("basis coefficients", basis.len(), coef.cols()));
        }
        let PseudoInverse { pinv, kernel, .. } = pseudo_inverse(&coef);
        let scale = coef.max_abs().max(1.0);
        let back = coef.matmul(&pinv)?.matmul(&coef)?;
        if back.max_abs_diff(&coef) > 1e-9 * scale || coef.matmul(&kernel)?.max_abs() > 1e-9 * scale
        {
            return Err(Error::Numerical(
                "pseudo-inverse fails its defining identities".into(),
            ));
        }
        Ok(LinearPhiDecomposition {
            basis,
            coef,
            pinv,
            kernel,
        })
    }

    /// Smallest input dimension the basis can be evaluated on.
    pub fn min_input_dim(&self) -> usize {
        self.basis
            .iter()
            .filter_map(BasisFunction::max_index)
            .max()
            .map_or(0, |i| i + 1)
    }

    pub fn gamma(&self, x: &[f64]) -> Vec<f64> {
        self.basis.iter().map(|b| b.eval(x)).collect()
    }

    fn apply(m: &Matrix, v: &[f64]) -> Vec<f64> {
        m.iter_rows().map(|row| dot(row, v)).collect()
    }

    pub fn phi(&self, x: &[f64]) -> Vec<f64> {
        Self::apply(&self.coef, &self.gamma(x))
    }

    /// f(x) = M⁻M Γ(x) − Γ(x).
    pub fn kernel_shift(&self, x: &[f64]) -> Vec<f64> {
        let g = self.gamma(x);
        let back = Self::apply(&self.pinv, &Self::apply(&self.coef, &g));
        back.iter().zip(&g).map(|(a, b)| a - b).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvarianceReport {
    /// max over samples of ‖M f(x)‖₂.
    pub max_kernel_residual: f64,
    /// Σ_i P̂_i(head picks row i on φ(x)).
    pub adversary_success: f64,
    /// Σ_i P̂_i(Γ(x) + f(x) ∈ M⁻ I_i).
    pub preimage_success: f64,
    pub per_domain_adversary: Vec<f64>,
    pub per_domain_preimage: Vec<f64>,
    /// 3/√(samples per domain).
    pub tolerance: f64,
    pub sides_agree: bool,
    pub epsilon: f64,
    /// Whether this head's success is at most ε.
    pub within_epsilon: bool,
    pub samples_per_domain: usize,
}

fn check_head(head: &Layer) -> Result<()> {
    for i in 0..head.output_dim() {
        for j in i + 1..head.output_dim() {
            if head.weight.row(i) == head.weight.row(j) && head.bias[i] == head.bias[j] {
                return Err(Error::Precondition(format!(
                    "head rows {i} and {j} are identical, so their regions tie"
                )));
            }
        }
    }
    Ok(())
}

/// Row i of `head` stands for domain i. Domain i draws its samples from
/// `rng.stream(i)`; both sides are evaluated on the same samples.
/// Membership in M⁻ I_i is decided at the canonical preimage M u of
/// u = Γ(x) + f(x), the unique point of the range of M that M⁻ sends to u.
pub fn invariance_check(
    decomp: &LinearPhiDecomposition,
    domains: &[ProductDensity],
    head: &Layer,
    epsilon: f64,
    samples: usize,
    rng: &Rng,
) -> Result<InvarianceReport> {
    let d = common_dim(domains)?;
    if d < decomp.min_input_dim() {
        return Err(Error::shape("invariance inputs", decomp.min_input_dim(), d));
    }
    if head.input_dim() != decomp.coef.rows() {
        return Err(Error::shape(
            "invariance head",
            decomp.coef.rows(),
            head.input_dim(),
        ));
    }
    if head.output_dim() != domains.len() {
        return Err(Error::shape(
            "invariance head rows",
            domains.len(),
            head.output_dim(),
        ));
    }
    if samples == 0 {
        return Err(Error::InvalidArgument("need at least one sample".into()));
    }
    check_head(head)?;

    let per_domain: Vec<(f64, usize, usize)> = domains
        .par_iter()
        .enumerate()
        .map(|(i, law)| {
            let mut rng = rng.stream(i as u64);
            let mut residual: f64 = 0.0;
            let (mut lhs, mut rhs) = (0, 0);
            for _ in 0..samples {
                let x = law.sample(&mut rng);
                let g = decomp.gamma(&x);
                let phi = LinearPhiDecomposition::apply(&decomp.coef, &g);
                let f = decomp.kernel_shift(&x);
                let mf = LinearPhiDecomposition::apply(&decomp.coef, &f);
                residual = residual.max(dot(&mf, &mf).sqrt());
                if strict_argmax(&head_scores(head, &phi)) == Some(i) {
                    lhs += 1;
                }
                let u: Vec<f64> = g.iter().zip(&f).map(|(a, b)| a + b).collect();
                let z = LinearPhiDecomposition::apply(&decomp.coef, &u);
                if strict_argmax(&head_scores(head, &z)) == Some(i) {
                    rhs += 1;
                }
            }
            (residual, lhs, rhs)
        })
        .collect();

    let n = samples as f64;
    let per_domain_adversary: Vec<f64> = per_domain.iter().map(|t| t.1 as f64 / n).collect();
    let per_domain_preimage: Vec<f64> = per_domain.iter().map(|t| t.2 as f64 / n).collect();
    let adversary_success: f64 = per_domain_adversary.iter().sum();
    let preimage_success: f64 = per_domain_preimage.iter().sum();
    let tolerance = 3.0 / n.sqrt();
    Ok(InvarianceReport {
        max_kernel_residual: per_domain.iter().map(|t| t.0).fold(0.0, f64::max),
        adversary_success,
        preimage_success,
        per_domain_adversary,
        per_domain_preimage,
        tolerance,
        sides_agree: (adversary_success - preimage_success).abs() <= tolerance,
        epsilon,
        within_epsilon: adversary_success <= epsilon,
        samples_per_domain: samples,
    })
}

/// Self-contained description of one check, as read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvarianceInputs {
    pub basis: Vec<BasisFunction>,
    /// Rows of M (s × m).
    pub coef: Vec<Vec<f64>>,
    pub domains: Vec<ProductDensity>,
    pub head_weight: Vec<Vec<f64>>,
    pub head_bias: Vec<f64>,
    pub epsilon: f64,
    pub samples: usize,
    pub seed: u64,
}

impl InvarianceInputs {
    pub fn run(&self) -> Result<InvarianceReport> {
        let decomp =
            LinearPhiDecomposition::new(self.basis.clone(), Matrix::from_rows(&self.coef)?)?;
        let head = Layer::new(
            Matrix::from_rows(&self.head_weight)?,
            self.head_bias.clone(),
        )?;
        invariance_check(
            &decomp,
            &self.domains,
            &head,
            self.epsilon,
            self.samples,
            &Rng::new(self.seed),
        )
    }
}
