//! Top-two principal components by orthogonal iteration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};

/// Eigen-residual at which the iteration stops, relative to the top
/// eigenvalue.
const RESIDUAL_TOLERANCE: f64 = 1e-9;
const MAX_ITERATIONS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pca2 {
    /// n × 2 coordinates of the centred data on the two components.
    pub projection: Matrix,
    /// s × 2; column j is the j-th component.
    pub components: Matrix,
    /// Variances along the two components (covariance eigenvalues, 1/(n−1)).
    pub explained_variance: [f64; 2],
    /// The same divided by the total variance.
    pub explained_ratio: [f64; 2],
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

fn sym_mat_vec(c: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    c.iter().map(|row| dot(row, v)).collect()
}

/// Gram–Schmidt on two vectors. A column that collapses is replaced by the
/// unit axis least aligned with the first.
fn orthonormalize(a: &mut Vec<f64>, b: &mut Vec<f64>) {
    let na = norm(a);
    a.iter_mut().for_each(|x| *x /= na);
    for _ in 0..2 {
        let proj = dot(a, b);
        b.iter_mut().zip(a.iter()).for_each(|(x, y)| *x -= proj * y);
    }
    let nb = norm(b);
    if nb > 1e-150 {
        b.iter_mut().for_each(|x| *x /= nb);
    } else {
        let axis = (0..a.len())
            .min_by(|&i, &j| a[i].abs().total_cmp(&a[j].abs()))
            .unwrap_or(0);
        *b = vec![0.0; a.len()];
        b[axis] = 1.0;
        orthonormalize(a, b);
    }
}

/// Eigen-decomposition of [[p, q], [q, r]], larger eigenvalue first.
fn sym2_eigen(p: f64, q: f64, r: f64) -> ([f64; 2], [[f64; 2]; 2]) {
    let mid = 0.5 * (p + r);
    let rad = (0.25 * (p - r).powi(2) + q * q).sqrt();
    let (l1, l2) = (mid + rad, mid - rad);
    // Stable eigenvector of l1 from the larger of the two candidate forms.
    let v1 = if q == 0.0 {
        if p >= r {
            [1.0, 0.0]
        } else {
            [0.0, 1.0]
        }
    } else if (l1 - r).abs() >= (l1 - p).abs() {
        let n = (q * q + (l1 - r).powi(2)).sqrt();
        [(l1 - r) / n, q / n]
    } else {
        let n = (q * q + (l1 - p).powi(2)).sqrt();
        [q / n, (l1 - p) / n]
    };
    ([l1, l2], [v1, [-v1[1], v1[0]]])
}

/// Top-two principal components of the rows of `reps`. Deterministic: the
/// start vectors are fixed and every step is plain arithmetic. Each
/// component is signed so its largest-magnitude coordinate is positive.
pub fn pca2(reps: &Matrix) -> Result<Pca2> {
    let (n, s) = reps.shape();
    if n < 3 {
        return Err(Error::InvalidArgument(format!(
            "pca2 needs at least 3 points, got {n}"
        )));
    }
    if s < 2 {
        return Err(Error::InvalidArgument(format!(
            "pca2 needs at least 2 dimensions, got {s}"
        )));
    }
    if !reps.is_finite() {
        return Err(Error::InvalidArgument("pca2 input is not finite".into()));
    }
    let mean: Vec<f64> = reps.col_sums().iter().map(|v| v / n as f64).collect();
    let mut centred = reps.clone();
    centred.add_row_vector(&mean.iter().map(|m| -m).collect::<Vec<_>>());
    let gram = centred.t_matmul(&centred)?;
    let cov: Vec<Vec<f64>> = (0..s)
        .map(|i| gram.row(i).iter().map(|v| v / (n - 1) as f64).collect())
        .collect();
    let total: f64 = (0..s).map(|i| cov[i][i]).sum();
    if !(total > 0.0) {
        return Err(Error::InvalidArgument(
            "pca2 input has zero variance (rank 0)".into(),
        ));
    }

    let mut q1: Vec<f64> = (0..s).map(|j| 1.0 + (j as f64 * 0.7).sin()).collect();
    let mut q2: Vec<f64> = (0..s).map(|j| (j as f64 * 1.3 + 0.4).cos()).collect();
    orthonormalize(&mut q1, &mut q2);
    let mut lambdas = [0.0; 2];
    let mut converged = false;
    for _ in 0..MAX_ITERATIONS {
        let mut z1 = sym_mat_vec(&cov, &q1);
        let mut z2 = sym_mat_vec(&cov, &q2);
        if norm(&z1) <= 1e-300 {
            z1 = q1.clone();
        }
        orthonormalize(&mut z1, &mut z2);
        // Rayleigh–Ritz inside span{z1, z2}.
        let c1 = sym_mat_vec(&cov, &z1);
        let c2 = sym_mat_vec(&cov, &z2);
        let (vals, vecs) = sym2_eigen(dot(&z1, &c1), dot(&z1, &c2), dot(&z2, &c2));
        let combine = |v: [f64; 2]| -> Vec<f64> {
            z1.iter()
                .zip(&z2)
                .map(|(a, b)| v[0] * a + v[1] * b)
                .collect()
        };
        q1 = combine(vecs[0]);
        q2 = combine(vecs[1]);
        lambdas = vals;
        let residual = [(&q1, vals[0]), (&q2, vals[1])]
            .iter()
            .map(|(q, l)| {
                let cq = sym_mat_vec(&cov, q);
                norm(
                    &cq.iter()
                        .zip(q.iter())
                        .map(|(a, b)| a - l * b)
                        .collect::<Vec<_>>(),
                )
            })
            .fold(0.0, f64::max);
        if residual <= RESIDUAL_TOLERANCE * lambdas[0] {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Numerical(
            "orthogonal iteration did not converge".into(),
        ));
    }

    let mut components = Matrix::zeros(s, 2);
    for (c, q) in [q1, q2].iter().enumerate() {
        let lead = q
            .iter()
            .copied()
            .fold(0.0, |a: f64, b| if b.abs() > a.abs() { b } else { a });
        let sign = if lead < 0.0 { -1.0 } else { 1.0 };
        for (j, v) in q.iter().enumerate() {
            components[(j, c)] = sign * v;
        }
    }
    let projection = centred.matmul(&components)?;
    let explained_variance = [lambdas[0], lambdas[1].max(0.0)];
    Ok(Pca2 {
        projection,
        components,
        explained_variance,
        explained_ratio: [explained_variance[0] / total, explained_variance[1] / total],
    })
}
