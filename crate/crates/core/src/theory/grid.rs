//! The cell grid G(n, B) on [−B, B]^p and per-domain histograms over it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// n^p axis-aligned cells covering [−B, B]^p. Cells are numbered in
/// row-major order of their per-axis indices, axis 0 slowest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Cells per axis.
    pub n: usize,
    /// Half-width B.
    pub half_width: f64,
    /// Dimension p.
    pub p: usize,
}

impl GridSpec {
    pub fn new(n: usize, half_width: f64, p: usize) -> Result<Self> {
        let grid = GridSpec { n, half_width, p };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 || !(self.half_width > 0.0 && self.half_width.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "grid needs n ≥ 1, p ≥ 1 and B > 0 (n={}, B={}, p={})",
                self.n, self.half_width, self.p
            )));
        }
        if (self.n as f64).powi(self.p as i32) > 1e8 {
            return Err(Error::InvalidArgument(format!(
                "grid with {}^{} cells is too large",
                self.n, self.p
            )));
        }
        Ok(())
    }

    pub fn cell_count(&self) -> usize {
        self.n.pow(self.p as u32)
    }

    pub fn cell_width(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    /// Left edge of per-axis interval `i` (0-based): −B + 2iB/n.
    pub fn edge(&self, i: usize) -> f64 {
        -self.half_width + 2.0 * i as f64 * self.half_width / self.n as f64
    }

    /// Per-axis interval index of `x`, or `None` outside [−B, B]. A point on
    /// an interior edge goes to the higher-index interval; x = B belongs to
    /// the last one.
    pub fn axis_index(&self, x: f64) -> Option<usize> {
        let b = self.half_width;
        if !(-b..=b).contains(&x) {
            return None;
        }
        let n = self.n;
        let mut i = (((x + b) / self.cell_width()).floor() as usize).min(n - 1);
        // Re-align with the edges as `edge` computes them.
        while i > 0 && x < self.edge(i) {
            i -= 1;
        }
        while i + 1 < n && x >= self.edge(i + 1) {
            i += 1;
        }
        Some(i)
    }

    /// Flat cell index of a point, or `None` if it lies outside the box.
    pub fn cell_of(&self, point: &[f64]) -> Option<usize> {
        debug_assert_eq!(point.len(), self.p);
        point
            .iter()
            .try_fold(0usize, |acc, &x| Some(acc * self.n + self.axis_index(x)?))
    }

    pub fn multi_index(&self, cell: usize) -> Vec<usize> {
        let mut idx = vec![0; self.p];
        let mut rest = cell;
        for slot in idx.iter_mut().rev() {
            *slot = rest % self.n;
            rest /= self.n;
        }
        idx
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi.iter().fold(0, |acc, &i| acc * self.n + i)
    }

    /// (lo, hi) per axis.
    pub fn cell_bounds(&self, cell: usize) -> Vec<(f64, f64)> {
        self.multi_index(cell)
            .into_iter()
            .map(|i| (self.edge(i), self.edge(i + 1)))
            .collect()
    }

    /// The 2^p corners of a cell, pulled towards its centre by `inset`.
    pub fn corners(&self, cell: usize, inset: f64) -> Vec<Vec<f64>> {
        let bounds = self.cell_bounds(cell);
        (0..1usize << self.p)
            .map(|mask| {
                bounds
                    .iter()
                    .enumerate()
                    .map(|(axis, &(lo, hi))| {
                        if mask >> axis & 1 == 0 {
                            lo + inset
                        } else {
                            hi - inset
                        }
                    })
                    .collect()
            })
            .collect()
    }

    /// Same cells per axis, twice as many per axis.
    pub fn refined(&self) -> GridSpec {
        GridSpec {
            n: self.n * 2,
            ..*self
        }
    }
}

/// Per-domain cell masses over a grid plus the mass that fell outside it.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityEstimate {
    pub grid: GridSpec,
    /// N × n^p.
    pub masses: Matrix,
    pub tail_mass: Vec<f64>,
}

/// Tolerance on each domain's total mass.
pub const MASS_TOLERANCE: f64 = 1e-9;

impl DensityEstimate {
    /// Checks shapes, nonnegativity and that each row plus its tail sums to 1.
    pub fn new(grid: GridSpec, masses: Matrix, tail_mass: Vec<f64>) -> Result<Self> {
        grid.validate()?;
        if masses.cols() != grid.cell_count() {
            return Err(Error::shape(
                "density masses",
                grid.cell_count(),
                masses.cols(),
            ));
        }
        if masses.rows() != tail_mass.len() {
            return Err(Error::shape("density tail", masses.rows(), tail_mass.len()));
        }
        if masses.rows() == 0 {
            return Err(Error::InvalidArgument("density with no domains".into()));
        }
        for (i, row) in masses.iter_rows().enumerate() {
            if row.iter().chain([&tail_mass[i]]).any(|&m| !(m >= 0.0)) {
                return Err(Error::InvalidArgument(format!(
                    "domain {i} has a negative or non-finite mass"
                )));
            }
            let total: f64 = row.iter().sum::<f64>() + tail_mass[i];
            if (total - 1.0).abs() > MASS_TOLERANCE {
                return Err(Error::InvalidArgument(format!(
                    "domain {i} masses sum to {total}, not 1"
                )));
            }
        }
        Ok(DensityEstimate {
            grid,
            masses,
            tail_mass,
        })
    }

    pub fn n_domains(&self) -> usize {
        self.masses.rows()
    }

    pub fn n_cells(&self) -> usize {
        self.masses.cols()
    }
}

/// Histogram of each domain's samples (rows of an m × p matrix) on the grid.
pub fn estimate_density(samples: &[Matrix], grid: GridSpec) -> Result<DensityEstimate> {
    grid.validate()?;
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no domains to estimate".into()));
    }
    let cells = grid.cell_count();
    let mut masses = Matrix::zeros(samples.len(), cells);
    let mut tail = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        if s.rows() == 0 {
            return Err(Error::InvalidArgument(format!("domain {i} has no samples")));
        }
        if s.cols() != grid.p {
            return Err(Error::shape("density samples", grid.p, s.cols()));
        }
        let mut counts = vec![0u64; cells];
        let mut outside = 0u64;
        for point in s.iter_rows() {
            match grid.cell_of(point) {
                Some(c) => counts[c] += 1,
                None => outside += 1,
            }
        }
        let n = s.rows() as f64;
        for (m, c) in masses.row_mut(i).iter_mut().zip(counts) {
            *m = c as f64 / n;
        }
        tail.push(outside as f64 / n);
    }
    DensityEstimate::new(grid, masses, tail)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use proptest::prelude::*;

    #[test]
    fn origin_goes_to_the_upper_cell() {
        let grid = GridSpec::new(2, 1.0, 1).unwrap();
        let est = estimate_density(&[Matrix::new(1, 1, vec![0.0]).unwrap()], grid).unwrap();
        assert_eq!(est.masses.row(0), &[0.0, 1.0]);
        assert_eq!(est.tail_mass, vec![0.0]);
    }

    #[test]
    fn box_edges_are_inside() {
        let grid = GridSpec::new(4, 1.0, 1).unwrap();
        assert_eq!(grid.axis_index(-1.0), Some(0));
        assert_eq!(grid.axis_index(1.0), Some(3));
        assert_eq!(grid.axis_index(0.5), Some(3));
        assert_eq!(grid.axis_index(-0.5), Some(1));
        assert_eq!(grid.axis_index(1.0 + 1e-12), None);
    }

    #[test]
    fn uniform_histogram_is_flat() {
        let mut rng = Rng::new(3);
        let n = 100_000;
        let xs = Matrix::new(n, 1, (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap();
        let est = estimate_density(&[xs], GridSpec::new(4, 1.0, 1).unwrap()).unwrap();
        for &m in est.masses.row(0) {
            assert!((m - 0.25).abs() < 0.01, "{m}");
        }
    }

    #[test]
    fn points_outside_are_tail() {
        let est = estimate_density(
            &[Matrix::new(1, 1, vec![1.5]).unwrap()],
            GridSpec::new(3, 1.0, 1).unwrap(),
        )
        .unwrap();
        assert_eq!(est.tail_mass, vec![1.0]);
        assert!(est.masses.row(0).iter().all(|&m| m == 0.0));
    }

    #[test]
    fn empty_domain_is_rejected() {
        let grid = GridSpec::new(2, 1.0, 1).unwrap();
        assert!(estimate_density(&[Matrix::zeros(0, 1)], grid).is_err());
        assert!(estimate_density(&[], grid).is_err());
    }

    #[test]
    fn invalid_grids_are_rejected() {
        assert!(GridSpec::new(0, 1.0, 1).is_err());
        assert!(GridSpec::new(2, 0.0, 1).is_err());
        assert!(GridSpec::new(2, 1.0, 0).is_err());
    }

    #[test]
    fn masses_must_sum_to_one() {
        let grid = GridSpec::new(2, 1.0, 1).unwrap();
        let bad = Matrix::new(1, 2, vec![0.5, 0.4]).unwrap();
        assert!(DensityEstimate::new(grid, bad, vec![0.0]).is_err());
        let neg = Matrix::new(1, 2, vec![1.5, -0.5]).unwrap();
        assert!(DensityEstimate::new(grid, neg, vec![0.0]).is_err());
    }

    #[test]
    fn corners_of_a_square_cell() {
        let grid = GridSpec::new(2, 1.0, 2).unwrap();
        let corners = grid.corners(grid.flat_index(&[1, 0]), 0.0);
        assert_eq!(corners.len(), 4);
        assert!(corners.contains(&vec![0.0, -1.0]));
        assert!(corners.contains(&vec![1.0, 0.0]));
    }

    proptest! {
        #[test]
        fn cell_of_lands_inside_its_bounds(
            n in 1usize..9, p in 1usize..4, b in 0.1f64..5.0,
            raw in prop::collection::vec(-1.0f64..=1.0, 3),
        ) {
            let grid = GridSpec::new(n, b, p).unwrap();
            let point: Vec<f64> = raw[..p].iter().map(|u| u * b).collect();
            let cell = grid.cell_of(&point).unwrap();
            for (x, (lo, hi)) in point.iter().zip(grid.cell_bounds(cell)) {
                prop_assert!(lo <= *x && *x <= hi);
            }
            prop_assert_eq!(grid.flat_index(&grid.multi_index(cell)), cell);
        }
    }
}
