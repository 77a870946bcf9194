//! Moore–Penrose pseudo-inverse and kernel basis via a full SVD (faer).

use faer::Mat;

use crate::matrix::Matrix;

/// Singular values below this fraction of the largest are treated as zero.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoInverse {
    /// n × m for an m × n input.
    pub pinv: Matrix,
    /// n × r, orthonormal columns spanning the null space.
    pub kernel: Matrix,
    pub rank: usize,
}

/// M = U Σ Vᵀ gives M⁻ = Σ_{σ_i > cutoff} v_i u_iᵀ / σ_i; the kernel is
/// spanned by the remaining columns of V.
pub fn pseudo_inverse(m: &Matrix) -> PseudoInverse {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return PseudoInverse {
            pinv: Matrix::zeros(cols, rows),
            kernel: Matrix::identity(cols),
            rank: 0,
        };
    }
    let a = Mat::<f64>::from_fn(rows, cols, |i, j| m[(i, j)]);
    let svd = a.svd().expect("SVD of a finite matrix converges");
    let (u, s, v) = (svd.U(), svd.S(), svd.V());
    let sigma: Vec<f64> = (0..rows.min(cols)).map(|i| s[i]).collect();
    let sigma_max = sigma.iter().copied().fold(0.0, f64::max);
    let cutoff = RANK_TOLERANCE * sigma_max;
    let rank = sigma.iter().filter(|&&x| x > cutoff && x > 0.0).count();

    let mut pinv = Matrix::zeros(cols, rows);
    for k in 0..rank {
        for i in 0..cols {
            let vi = v[(i, k)] / sigma[k];
            for j in 0..rows {
                pinv[(i, j)] += vi * u[(j, k)];
            }
        }
    }
    let mut kernel = Matrix::zeros(cols, cols - rank);
    for (c, k) in (rank..cols).enumerate() {
        let col: Vec<f64> = (0..cols).map(|i| v[(i, k)]).collect();
        // Fixed orientation: the largest-magnitude entry is positive.
        let lead = col
            .iter()
            .copied()
            .fold(0.0, |a: f64, b| if b.abs() > a.abs() { b } else { a });
        let sign = if lead < 0.0 { -1.0 } else { 1.0 };
        for (i, x) in col.into_iter().enumerate() {
            kernel[(i, c)] = sign * x;
        }
    }
    PseudoInverse { pinv, kernel, rank }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use proptest::prelude::*;

    fn residuals(m: &Matrix, p: &Matrix) -> [f64; 4] {
        let mp = m.matmul(p).unwrap();
        let pm = p.matmul(m).unwrap();
        [
            mp.matmul(m).unwrap().max_abs_diff(m),
            pm.matmul(p).unwrap().max_abs_diff(p),
            mp.max_abs_diff(&mp.transpose()),
            pm.max_abs_diff(&pm.transpose()),
        ]
    }

    fn low_rank(rng: &mut Rng, rows: usize, cols: usize, rank: usize) -> Matrix {
        let a = Matrix::new(rows, rank, (0..rows * rank).map(|_| rng.normal()).collect()).unwrap();
        let b = Matrix::new(rank, cols, (0..rank * cols).map(|_| rng.normal()).collect()).unwrap();
        a.matmul(&b).unwrap()
    }

    #[test]
    fn identity_inverts_to_itself() {
        let p = pseudo_inverse(&Matrix::identity(3));
        assert!(p.pinv.max_abs_diff(&Matrix::identity(3)) < 1e-15);
        assert_eq!(p.kernel.cols(), 0);
        assert_eq!(p.rank, 3);
    }

    #[test]
    fn axis_projection() {
        let m = Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        let p = pseudo_inverse(&m);
        assert_eq!(p.pinv.shape(), (2, 1));
        assert!((p.pinv[(0, 0)] - 1.0).abs() < 1e-15 && p.pinv[(1, 0)].abs() < 1e-15);
        assert_eq!(p.kernel.shape(), (2, 1));
        assert!(p.kernel[(0, 0)].abs() < 1e-15 && (p.kernel[(1, 0)].abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_matrix_has_full_kernel() {
        let p = pseudo_inverse(&Matrix::zeros(2, 3));
        assert_eq!(p.rank, 0);
        assert_eq!(p.pinv, Matrix::zeros(3, 2));
        assert_eq!(p.kernel.shape(), (3, 3));
    }

    #[test]
    fn rank_three_four_by_seven() {
        let mut rng = Rng::new(5);
        let m = low_rank(&mut rng, 4, 7, 3);
        let p = pseudo_inverse(&m);
        assert_eq!(p.rank, 3);
        for r in residuals(&m, &p.pinv) {
            assert!(r < 1e-9, "{r}");
        }
        assert_eq!(p.kernel.shape(), (7, 4));
        assert!(m.matmul(&p.kernel).unwrap().max_abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn penrose_conditions_hold(
            seed in any::<u64>(), rows in 1usize..7, cols in 1usize..7, rank in 0usize..7,
        ) {
            let mut rng = Rng::new(seed);
            let rank = rank.min(rows).min(cols);
            let m = low_rank(&mut rng, rows, cols, rank);
            let p = pseudo_inverse(&m);
            for r in residuals(&m, &p.pinv) {
                prop_assert!(r < 1e-9, "{}", r);
            }
            prop_assert!(m.matmul(&p.kernel).unwrap().max_abs() < 1e-9);
            let gram = p.kernel.t_matmul(&p.kernel).unwrap();
            prop_assert!(gram.max_abs_diff(&Matrix::identity(p.kernel.cols())) < 1e-9);
            prop_assert_eq!(p.rank + p.kernel.cols(), cols);
        }
    }
}
