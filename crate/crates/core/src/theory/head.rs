//! Explicit discriminator head whose argmax regions are the grid cells.
//!
//! Along one axis with n intervals, line i has slope (i+1)·π/(2(n+1)) and an
//! intercept chosen so that lines i−1 and i cross exactly at the left edge of
//! interval i. Slopes increase, so the upper envelope is line i on interval
//! i, with the first and last lines extending to ∓∞. In p dimensions a
//! cell's row adds the lines of its per-axis indices; the score is separable,
//! so the row of cell (i_1, …, i_p) wins on the product of its intervals.

use std::f64::consts::PI;

use super::grid::GridSpec;
use super::partition::RegionAssignment;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::Layer;

/// Bias of rows that own no cell; far below any cell row's score.
pub const UNASSIGNED_BIAS: f64 = -1e6;

/// Largest B·p for which [`UNASSIGNED_BIAS`] stays out of reach.
const MAX_SCALE: f64 = 1e4;

/// Slopes and intercepts of the n lines on one axis; the first intercept is
/// `first_intercept`.
fn axis_lines(grid: &GridSpec, first_intercept: f64) -> (Vec<f64>, Vec<f64>) {
    let n = grid.n;
    let step = PI / (2.0 * (n + 1) as f64);
    let slopes: Vec<f64> = (1..=n).map(|i| i as f64 * step).collect();
    let mut intercepts = Vec::with_capacity(n);
    intercepts.push(first_intercept);
    for i in 1..n {
        let prev = intercepts[i - 1];
        intercepts.push((slopes[i - 1] - slopes[i]) * grid.edge(i) + prev);
    }
    (slopes, intercepts)
}

/// Head with `rows` rows in which row `cell_rows[c]` is the strict argmax on
/// the interior of cell `c`. A row may own at most one cell; rows owning none
/// get weights 0 and bias [`UNASSIGNED_BIAS`].
pub fn constructive_head(cell_rows: &[usize], rows: usize, grid: &GridSpec) -> Result<Layer> {
    grid.validate()?;
    if cell_rows.len() != grid.cell_count() {
        return Err(Error::shape(
            "constructive head cells",
            grid.cell_count(),
            cell_rows.len(),
        ));
    }
    if grid.half_width * grid.p as f64 > MAX_SCALE {
        return Err(Error::InvalidArgument(format!(
            "grid too wide for the constructive head (B·p = {})",
            grid.half_width * grid.p as f64
        )));
    }
    let mut owned = vec![false; rows];
    for &r in cell_rows {
        if r >= rows {
            return Err(Error::InvalidArgument(format!(
                "row {r} out of range for {rows} rows"
            )));
        }
        if std::mem::replace(&mut owned[r], true) {
            return Err(Error::Precondition(format!(
                "row {r} owns more than one cell"
            )));
        }
    }

    let (slopes, first_axis) = axis_lines(grid, grid.half_width * PI / (2.0 * (grid.n + 1) as f64));
    let (_, other_axes) = axis_lines(grid, 0.0);
    let mut weight = Matrix::zeros(rows, grid.p);
    let mut bias = vec![UNASSIGNED_BIAS; rows];
    for (cell, &r) in cell_rows.iter().enumerate() {
        let idx = grid.multi_index(cell);
        bias[r] = 0.0;
        for (axis, &i) in idx.iter().enumerate() {
            weight[(r, axis)] = slopes[i];
            bias[r] += if axis == 0 {
                first_axis[i]
            } else {
                other_axes[i]
            };
        }
    }
    Layer::new(weight, bias)
}

/// One row per cell (row c for cell c), with the domain each row stands for.
pub fn head_for_assignment(
    assignment: &RegionAssignment,
    grid: &GridSpec,
) -> Result<(Layer, Vec<usize>)> {
    let rows: Vec<usize> = (0..assignment.owner.len()).collect();
    let head = constructive_head(&rows, rows.len(), grid)?;
    Ok((head, assignment.owner.clone()))
}

/// Affine scores W z + b of every row.
pub fn head_scores(head: &Layer, z: &[f64]) -> Vec<f64> {
    (0..head.output_dim())
        .map(|r| {
            head.weight
                .row(r)
                .iter()
                .zip(z)
                .map(|(w, x)| w * x)
                .sum::<f64>()
                + head.bias[r]
        })
        .collect()
}

/// Index of the strictly largest score, or `None` on a tie.
pub fn strict_argmax(scores: &[f64]) -> Option<usize> {
    let mut best = 0;
    let mut tied = false;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
            tied = false;
        } else if s == scores[best] {
            tied = true;
        }
    }
    (!tied && !scores.is_empty()).then_some(best)
}

/// Region where the row of `cell` wins: the cell's intervals, with the
/// outermost ones on each axis extended to ±∞.
pub fn extended_cell(grid: &GridSpec, cell: usize) -> Vec<(f64, f64)> {
    grid.multi_index(cell)
        .into_iter()
        .map(|i| {
            let lo = if i == 0 {
                f64::NEG_INFINITY
            } else {
                grid.edge(i)
            };
            let hi = if i + 1 == grid.n {
                f64::INFINITY
            } else {
                grid.edge(i + 1)
            };
            (lo, hi)
        })
        .collect()
}
