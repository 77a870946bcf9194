//! Best disjoint partition of the grid among N domains, and the boundary /
//! interior split of cells against continuous regions.

use serde::{Deserialize, Serialize};

use super::grid::{DensityEstimate, GridSpec};
use crate::error::{Error, Result};

/// Which domain owns each cell, plus the boundary and interior cell sets of
/// every domain once they have been classified.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionAssignment {
    pub n_domains: usize,
    /// Owning domain of every cell.
    pub owner: Vec<usize>,
    /// Per domain: cells that straddle the domain's region.
    pub boundary: Vec<Vec<usize>>,
    /// Per domain: cells lying inside the domain's region.
    pub interior: Vec<Vec<usize>>,
}

impl RegionAssignment {
    pub fn new(n_domains: usize, owner: Vec<usize>) -> Result<Self> {
        if let Some(&bad) = owner.iter().find(|&&d| d >= n_domains) {
            return Err(Error::InvalidArgument(format!(
                "cell owner {bad} out of range for {n_domains} domains"
            )));
        }
        Ok(RegionAssignment {
            n_domains,
            owner,
            boundary: vec![Vec::new(); n_domains],
            interior: vec![Vec::new(); n_domains],
        })
    }

    pub fn cells_of(&self, domain: usize) -> Vec<usize> {
        (0..self.owner.len())
            .filter(|&c| self.owner[c] == domain)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionValue {
    /// Σ over cells of the largest domain mass.
    pub value: f64,
    /// Range the value over all of ℝ^p can take given the tail masses:
    /// at least `value + max_i tail_i`, at most `value + Σ_i tail_i`.
    pub tail_interval: (f64, f64),
    pub assignment: RegionAssignment,
}

/// Exact optimum of Σ_i P_i(A_i) over assignments of cells to domains. The
/// objective splits over cells, so each cell goes to its heaviest domain
/// (lowest index on ties).
pub fn partition_value(est: &DensityEstimate) -> PartitionValue {
    let n = est.n_domains();
    let mut owner = Vec::with_capacity(est.n_cells());
    let mut value = 0.0;
    for c in 0..est.n_cells() {
        let mut best = 0;
        for d in 1..n {
            if est.masses[(d, c)] > est.masses[(best, c)] {
                best = d;
            }
        }
        value += est.masses[(best, c)];
        owner.push(best);
    }
    let tail_max = est.tail_mass.iter().copied().fold(0.0, f64::max);
    let tail_sum: f64 = est.tail_mass.iter().sum();
    PartitionValue {
        value,
        tail_interval: (value + tail_max, value + tail_sum),
        assignment: RegionAssignment::new(n, owner).expect("owners are in range"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TvRelation {
    pub tv: f64,
    pub value_minus_one: f64,
}

/// For two domains, half the L1 distance of the cell masses equals the
/// partition value minus one when no mass is in the tail.
pub fn tv_relation_check(est: &DensityEstimate) -> Result<TvRelation> {
    if est.n_domains() != 2 {
        return Err(Error::InvalidArgument(format!(
            "total variation needs 2 domains, got {}",
            est.n_domains()
        )));
    }
    let tv = 0.5
        * est
            .masses
            .row(0)
            .iter()
            .zip(est.masses.row(1))
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>();
    let value_minus_one = partition_value(est).value - 1.0;
    let tail: f64 = est.tail_mass.iter().sum();
    if tail == 0.0 && (tv - value_minus_one).abs() > 1e-9 {
        return Err(Error::Precondition(format!(
            "tv {tv} differs from value − 1 = {value_minus_one}"
        )));
    }
    Ok(TvRelation {
        tv,
        value_minus_one,
    })
}

/// Inset of the corner test, relative to the cell width. Keeps region edges
/// that coincide with cell faces from marking neighbours as boundary cells.
pub const CORNER_INSET: f64 = 1e-9;

/// Classifies every cell against continuous regions: interior to domain `i`
/// if all (slightly inset) corners satisfy `in_region(i, corner)`, boundary if
/// only some do. The sets are stored on `assignment`; the return value is
/// (boundary count, interior count) per domain.
pub fn boundary_interior_counts(
    assignment: &mut RegionAssignment,
    grid: &GridSpec,
    in_region: impl Fn(usize, &[f64]) -> bool,
) -> Result<Vec<(usize, usize)>> {
    if assignment.owner.len() != grid.cell_count() {
        return Err(Error::shape(
            "region assignment",
            grid.cell_count(),
            assignment.owner.len(),
        ));
    }
    let inset = CORNER_INSET * grid.cell_width();
    let n = assignment.n_domains;
    let mut boundary = vec![Vec::new(); n];
    let mut interior = vec![Vec::new(); n];
    for cell in 0..grid.cell_count() {
        let corners = grid.corners(cell, inset);
        for d in 0..n {
            let inside = corners.iter().filter(|c| in_region(d, c)).count();
            if inside == corners.len() {
                interior[d].push(cell);
            } else if inside > 0 {
                boundary[d].push(cell);
            }
        }
    }
    let counts = boundary
        .iter()
        .zip(&interior)
        .map(|(b, i)| (b.len(), i.len()))
        .collect();
    assignment.boundary = boundary;
    assignment.interior = interior;
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use proptest::prelude::*;

    fn estimate(rows: &[Vec<f64>]) -> DensityEstimate {
        let cells = rows[0].len();
        let grid = GridSpec::new(cells, 1.0, 1).unwrap();
        DensityEstimate::new(
            grid,
            Matrix::from_rows(rows).unwrap(),
            vec![0.0; rows.len()],
        )
        .unwrap()
    }

    /// Exhaustive search over all N^cells assignments.
    fn brute_force(est: &DensityEstimate) -> f64 {
        let (n, cells) = (est.n_domains(), est.n_cells());
        let mut best = f64::NEG_INFINITY;
        for code in 0..n.pow(cells as u32) {
            let mut rest = code;
            let mut total = 0.0;
            for c in 0..cells {
                total += est.masses[(rest % n, c)];
                rest /= n;
            }
            best = best.max(total);
        }
        best
    }

    #[test]
    fn identical_domains_give_one() {
        let row = vec![0.125, 0.25, 0.125, 0.5];
        let pv = partition_value(&estimate(&[row.clone(), row.clone(), row]));
        assert_eq!(pv.value, 1.0);
        assert!(pv.assignment.owner.iter().all(|&d| d == 0));
    }

    #[test]
    fn disjoint_supports_give_n() {
        let pv = partition_value(&estimate(&[
            vec![0.5, 0.5, 0.0, 0.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 0.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0, 0.2, 0.3, 0.5],
        ]));
        assert_eq!(pv.value, 3.0);
    }

    #[test]
    fn two_cell_example() {
        let est = estimate(&[vec![0.6, 0.4], vec![0.2, 0.8]]);
        let pv = partition_value(&est);
        assert!((pv.value - 1.4).abs() < 1e-15);
        assert_eq!(pv.assignment.owner, vec![0, 1]);
        assert!((brute_force(&est) - 1.4).abs() < 1e-15);
        let tv = tv_relation_check(&est).unwrap();
        assert!((tv.tv - 0.4).abs() < 1e-15);
        assert!((tv.value_minus_one - 0.4).abs() < 1e-15);
    }

    #[test]
    fn tv_of_identical_and_disjoint() {
        let same = tv_relation_check(&estimate(&[vec![0.5, 0.5], vec![0.5, 0.5]])).unwrap();
        assert_eq!(same.tv, 0.0);
        assert_eq!(same.value_minus_one, 0.0);
        let apart = tv_relation_check(&estimate(&[vec![1.0, 0.0], vec![0.0, 1.0]])).unwrap();
        assert_eq!(apart.tv, 1.0);
        assert_eq!(apart.value_minus_one, 1.0);
    }

    #[test]
    fn tv_needs_two_domains() {
        let row = vec![0.5, 0.5];
        assert!(tv_relation_check(&estimate(&[row.clone(), row.clone(), row])).is_err());
    }

    #[test]
    fn ties_go_to_the_lowest_index() {
        let pv = partition_value(&estimate(&[vec![0.5, 0.5], vec![0.5, 0.5]]));
        assert_eq!(pv.assignment.owner, vec![0, 0]);
    }

    #[test]
    fn tail_interval_brackets_the_value() {
        let grid = GridSpec::new(2, 1.0, 1).unwrap();
        let est = DensityEstimate::new(
            grid,
            Matrix::from_rows(&[vec![0.5, 0.3], vec![0.1, 0.8]]).unwrap(),
            vec![0.2, 0.1],
        )
        .unwrap();
        let pv = partition_value(&est);
        assert!((pv.value - 1.3).abs() < 1e-15);
        assert!((pv.tail_interval.0 - 1.5).abs() < 1e-15);
        assert!((pv.tail_interval.1 - 1.6).abs() < 1e-15);
    }

    fn half_space_counts(threshold: f64) -> (usize, usize) {
        let grid = GridSpec::new(4, 1.0, 2).unwrap();
        let mut a = RegionAssignment::new(2, vec![0; 16]).unwrap();
        let counts =
            boundary_interior_counts(&mut a, &grid, |d, x| (x[0] <= threshold) == (d == 0))
                .unwrap();
        for d in 0..2 {
            assert!(a.boundary[d].iter().all(|c| !a.interior[d].contains(c)));
        }
        counts[0]
    }

    #[test]
    fn aligned_half_space_has_no_boundary_cells() {
        assert_eq!(half_space_counts(0.0), (0, 8));
    }

    #[test]
    fn shifted_half_space_has_one_straddling_column() {
        assert_eq!(half_space_counts(0.1), (4, 8));
    }

    #[test]
    fn whole_space_is_all_interior() {
        let grid = GridSpec::new(3, 2.0, 2).unwrap();
        let mut a = RegionAssignment::new(1, vec![0; 9]).unwrap();
        let counts = boundary_interior_counts(&mut a, &grid, |_, _| true).unwrap();
        assert_eq!(counts, vec![(0, 9)]);
    }

    /// N rows of nonnegative masses that each sum to 1 up to round-off.
    fn masses(n: usize, cells: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
        prop::collection::vec(prop::collection::vec(0.01f64..1.0, cells), n).prop_map(|rows| {
            rows.into_iter()
                .map(|r| {
                    let s: f64 = r.iter().sum();
                    r.into_iter().map(|x| x / s).collect()
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn matches_exhaustive_search(
            rows in (1usize..4, 1usize..9).prop_flat_map(|(n, c)| masses(n, c))
        ) {
            let cells = rows[0].len();
            let grid = GridSpec::new(cells, 1.0, 1).unwrap();
            let total: Vec<f64> = rows.iter().map(|r| 1.0 - r.iter().sum::<f64>()).collect();
            let tails = total.iter().map(|t| t.max(0.0)).collect();
            let est = DensityEstimate::new(grid, Matrix::from_rows(&rows).unwrap(), tails).unwrap();
            let pv = partition_value(&est);
            prop_assert!((pv.value - brute_force(&est)).abs() < 1e-12);
        }

        #[test]
        fn value_is_at_least_one(
            rows in (1usize..4, 1usize..9).prop_flat_map(|(n, c)| masses(n, c))
        ) {
            let cells = rows[0].len();
            let grid = GridSpec::new(cells, 1.0, 1).unwrap();
            let tails = rows.iter().map(|r| (1.0 - r.iter().sum::<f64>()).max(0.0)).collect();
            let est = DensityEstimate::new(grid, Matrix::from_rows(&rows).unwrap(), tails).unwrap();
            prop_assert!(partition_value(&est).value >= 1.0 - 1e-9);
        }

        #[test]
        fn refinement_never_lowers_the_value(
            fine in (1usize..4, 1usize..5).prop_flat_map(|(n, c)| masses(n, 2 * c))
        ) {
            // Coarse cell j is the union of fine cells 2j and 2j+1.
            let coarse: Vec<Vec<f64>> = fine
                .iter()
                .map(|r| r.chunks(2).map(|p| p[0] + p[1]).collect())
                .collect();
            let tails: Vec<f64> = fine.iter().map(|r| (1.0 - r.iter().sum::<f64>()).max(0.0)).collect();
            let est = |rows: &Vec<Vec<f64>>| {
                let grid = GridSpec::new(rows[0].len(), 1.0, 1).unwrap();
                DensityEstimate::new(grid, Matrix::from_rows(rows).unwrap(), tails.clone()).unwrap()
            };
            let v_fine = partition_value(&est(&fine)).value;
            let v_coarse = partition_value(&est(&coarse)).value;
            prop_assert!(v_fine >= v_coarse - 1e-12);
        }
    }
}
