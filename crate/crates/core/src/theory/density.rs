//! Product-form densities on ℝ^p with exact box probabilities.

use libm::erfc;
use serde::{Deserialize, Serialize};

use super::grid::{DensityEstimate, GridSpec};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::Rng;

/// A law whose coordinates are independent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProductDensity {
    /// Isotropic Gaussian N(mean, std² I).
    Gaussian { mean: Vec<f64>, std: f64 },
    /// Uniform on the box Π [lo_j, hi_j].
    Uniform { lo: Vec<f64>, hi: Vec<f64> },
}

/// Standard normal CDF, accurate in both tails.
fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

impl ProductDensity {
    pub fn gaussian(mean: Vec<f64>, std: f64) -> Self {
        ProductDensity::Gaussian { mean, std }
    }

    pub fn uniform(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        ProductDensity::Uniform { lo, hi }
    }

    pub fn dim(&self) -> usize {
        match self {
            ProductDensity::Gaussian { mean, .. } => mean.len(),
            ProductDensity::Uniform { lo, .. } => lo.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            ProductDensity::Gaussian { mean, std } => {
                !mean.is_empty()
                    && mean.iter().all(|m| m.is_finite())
                    && *std > 0.0
                    && std.is_finite()
            }
            ProductDensity::Uniform { lo, hi } => {
                !lo.is_empty()
                    && lo.len() == hi.len()
                    && lo
                        .iter()
                        .zip(hi)
                        .all(|(a, b)| a.is_finite() && b.is_finite() && a < b)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid density {self:?}")))
        }
    }

    /// P(coordinate `axis` ≤ x).
    pub fn axis_cdf(&self, axis: usize, x: f64) -> f64 {
        match self {
            ProductDensity::Gaussian { mean, std } => normal_cdf((x - mean[axis]) / std),
            ProductDensity::Uniform { lo, hi } => {
                ((x - lo[axis]) / (hi[axis] - lo[axis])).clamp(0.0, 1.0)
            }
        }
    }

    /// P(lo < coordinate ≤ hi), computed from whichever tail is smaller.
    fn axis_mass(&self, axis: usize, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return 0.0;
        }
        match self {
            ProductDensity::Gaussian { mean, std } => {
                let (a, b) = ((lo - mean[axis]) / std, (hi - mean[axis]) / std);
                if a > 0.0 {
                    normal_cdf(-a) - normal_cdf(-b)
                } else {
                    normal_cdf(b) - normal_cdf(a)
                }
            }
            ProductDensity::Uniform { .. } => self.axis_cdf(axis, hi) - self.axis_cdf(axis, lo),
        }
    }

    /// Probability of the box Π (lo_j, hi_j]; infinite ends allowed.
    pub fn box_mass(&self, bounds: &[(f64, f64)]) -> f64 {
        bounds
            .iter()
            .enumerate()
            .map(|(axis, &(lo, hi))| self.axis_mass(axis, lo, hi))
            .product()
    }

    /// P(‖z‖_∞ > b).
    pub fn cube_tail_mass(&self, b: f64) -> f64 {
        let inside = self.box_mass(&vec![(-b, b); self.dim()]);
        (1.0 - inside).max(0.0)
    }

    pub fn pdf(&self, z: &[f64]) -> f64 {
        match self {
            ProductDensity::Gaussian { mean, std } => z
                .iter()
                .zip(mean)
                .map(|(x, m)| {
                    let u = (x - m) / std;
                    (-0.5 * u * u).exp() / (std * (2.0 * std::f64::consts::PI).sqrt())
                })
                .product(),
            ProductDensity::Uniform { lo, hi } => z
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(x, (a, b))| {
                    if (a..=b).contains(&x) {
                        1.0 / (b - a)
                    } else {
                        0.0
                    }
                })
                .product(),
        }
    }

    /// sup_z pdf(z).
    pub fn max_density(&self) -> f64 {
        match self {
            ProductDensity::Gaussian { mean, .. } => self.pdf(mean),
            ProductDensity::Uniform { lo, hi } => {
                lo.iter().zip(hi).map(|(a, b)| 1.0 / (b - a)).product()
            }
        }
    }

    pub fn sample(&self, rng: &mut Rng) -> Vec<f64> {
        match self {
            ProductDensity::Gaussian { mean, std } => {
                mean.iter().map(|m| m + std * rng.normal()).collect()
            }
            ProductDensity::Uniform { lo, hi } => lo
                .iter()
                .zip(hi)
                .map(|(a, b)| rng.uniform(*a, *b))
                .collect(),
        }
    }

    pub fn sample_matrix(&self, n: usize, rng: &mut Rng) -> Matrix {
        let data = (0..n).flat_map(|_| self.sample(rng)).collect();
        Matrix::new(n, self.dim(), data).expect("sample rows have the density's dimension")
    }
}

/// Checks that there is at least one density and all share a dimension.
pub fn common_dim(bases: &[ProductDensity]) -> Result<usize> {
    let first = bases
        .first()
        .ok_or_else(|| Error::InvalidArgument("no base densities".into()))?;
    for b in bases {
        b.validate()?;
        if b.dim() != first.dim() {
            return Err(Error::shape("base densities", first.dim(), b.dim()));
        }
    }
    Ok(first.dim())
}

/// Exact cell masses of every density on `grid`.
pub fn exact_density(bases: &[ProductDensity], grid: GridSpec) -> Result<DensityEstimate> {
    let p = common_dim(bases)?;
    if p != grid.p {
        return Err(Error::shape("exact density", grid.p, p));
    }
    let mut masses = Matrix::zeros(bases.len(), grid.cell_count());
    let mut tails = Vec::with_capacity(bases.len());
    // Per-axis interval masses; cell masses are their products.
    for (i, base) in bases.iter().enumerate() {
        let axis: Vec<Vec<f64>> = (0..p)
            .map(|a| {
                (0..grid.n)
                    .map(|j| base.axis_mass(a, grid.edge(j), grid.edge(j + 1)))
                    .collect()
            })
            .collect();
        for (cell, m) in masses.row_mut(i).iter_mut().enumerate() {
            *m = grid
                .multi_index(cell)
                .iter()
                .enumerate()
                .map(|(a, &j)| axis[a][j])
                .product();
        }
        let inside: f64 = masses.row(i).iter().sum();
        tails.push((1.0 - inside).max(0.0));
    }
    DensityEstimate::new(grid, masses, tails)
}

/// Smallest radius b (to 1e-12 relative precision) with
/// Σ_i P_i(‖z‖_∞ > b) ≤ epsilon.
pub fn tail_radius(bases: &[ProductDensity], epsilon: f64) -> Result<f64> {
    common_dim(bases)?;
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tail level {epsilon} must be positive"
        )));
    }
    let tail = |b: f64| bases.iter().map(|d| d.cube_tail_mass(b)).sum::<f64>();
    let mut hi = 1.0;
    while tail(hi) > epsilon {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::Infeasible(format!(
                "no radius reaches tail level {epsilon}"
            )));
        }
    }
    let mut lo = 0.0;
    while hi - lo > 1e-12 * hi {
        let mid = 0.5 * (lo + hi);
        if tail(mid) > epsilon {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// Membership in the region where density `i` is pointwise largest: strictly
/// above every lower-index density and at least every higher-index one.
pub fn in_max_region(bases: &[ProductDensity], i: usize, z: &[f64]) -> bool {
    let own = bases[i].pdf(z);
    bases.iter().enumerate().all(|(j, b)| {
        let other = b.pdf(z);
        match j.cmp(&i) {
            std::cmp::Ordering::Less => own > other,
            std::cmp::Ordering::Equal => true,
            std::cmp::Ordering::Greater => own >= other,
        }
    })
}
