//! Adversary value as the number of seen domains grows.
//!
//! For each k, k domain IDs are drawn from μ over N base densities that live
//! directly in representation space (ζ is the identity). Three numbers are
//! compared: the value of the explicit grid head, the value of a head fitted
//! by gradient descent on the softmax surrogate, and the partition value of
//! the base densities, which is the limit as k → ∞.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bounds::{cells_per_axis, high_probability_count, m_k};
use super::density::{common_dim, exact_density, tail_radius, ProductDensity};
use super::grid::{DensityEstimate, GridSpec};
use super::head::{constructive_head, extended_cell};
use super::partition::partition_value;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::argmax_set;
use crate::nn::loss::weighted_softmax_ce;
use crate::nn::{adam_step, AdamState, Layer};
use crate::rng::Rng;

/// Base densities in representation space and the law μ over them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RepWorld {
    pub bases: Vec<ProductDensity>,
    pub mu: Vec<f64>,
}

impl RepWorld {
    /// Uniform μ over the given bases.
    pub fn uniform(bases: Vec<ProductDensity>) -> Self {
        let n = bases.len();
        RepWorld {
            bases,
            mu: vec![1.0 / n as f64; n],
        }
    }

    pub fn validate(&self) -> Result<usize> {
        let p = common_dim(&self.bases)?;
        if self.mu.len() != self.bases.len() {
            return Err(Error::shape("mu", self.bases.len(), self.mu.len()));
        }
        if self.mu.iter().any(|&m| !(m >= 0.0)) || (self.mu.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(Error::Config(format!(
                "mu {:?} is not a probability vector",
                self.mu
            )));
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LimitConfig {
    pub k_schedule: Vec<usize>,
    pub seeds: Vec<u64>,
    /// Cells per axis of the grid used for the oracle and for scoring the
    /// fitted head.
    pub oracle_cells: usize,
    /// Points drawn per domain ID to fit the head; 0 skips fitting.
    pub fit_samples: usize,
    pub fit_steps: usize,
    pub fit_learning_rate: f64,
}

impl Default for LimitConfig {
    fn default() -> Self {
        LimitConfig {
            k_schedule: vec![4, 16, 64, 256],
            seeds: (0..5).collect(),
            oracle_cells: 2048,
            fit_samples: 64,
            fit_steps: 200,
            fit_learning_rate: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitRecord {
    pub k: usize,
    pub constructive_value: f64,
    /// NaN when fitting is disabled.
    pub trained_value: f64,
    pub oracle_value: f64,
    pub seed: u64,
    pub cells_per_axis: usize,
    pub radius: f64,
}

pub const LIMIT_HEADER: &str = "k,constructive_value,trained_value,oracle_value,seed";

/// Tail level of the oracle grid's box.
const ORACLE_TAIL: f64 = 1e-12;

/// Draws each cell's owner among the drawn IDs. Cells are visited in order;
/// a cell goes to the first not-yet-used ID of its heaviest base, or of the
/// heaviest base that still has unused IDs. Returns `None` for cells left
/// over once every ID is used.
pub fn assign_cells(draws: &[usize], cell_masses: &DensityEstimate) -> Vec<Option<usize>> {
    let n_bases = cell_masses.n_domains();
    let mut unused: Vec<std::collections::VecDeque<usize>> = vec![Default::default(); n_bases];
    for (id, &b) in draws.iter().enumerate() {
        unused[b].push_back(id);
    }
    (0..cell_masses.n_cells())
        .map(|cell| {
            let mut order: Vec<usize> = (0..n_bases).collect();
            // Stable sort keeps the lowest index first among equal masses.
            order.sort_by(|&a, &b| {
                cell_masses.masses[(b, cell)]
                    .partial_cmp(&cell_masses.masses[(a, cell)])
                    .expect("masses are finite")
            });
            order.into_iter().find_map(|b| unused[b].pop_front())
        })
        .collect()
}

/// Σ_i P_{base(i)}(row i wins) for the grid head built from `owners`.
fn constructive_value(
    bases: &[ProductDensity],
    draws: &[usize],
    owners: &[usize],
    grid: &GridSpec,
) -> f64 {
    owners
        .iter()
        .enumerate()
        .map(|(cell, &id)| bases[draws[id]].box_mass(&extended_cell(grid, cell)))
        .sum()
}

/// Σ_i P_{base(i)}(row i is the argmax), integrated over the oracle grid
/// with the argmax taken at each cell centre (lowest row on ties).
pub fn head_value(head: &Layer, draws: &[usize], fine: &DensityEstimate) -> Result<f64> {
    let grid = fine.grid;
    let centres: Vec<f64> = (0..grid.cell_count())
        .flat_map(|c| {
            grid.cell_bounds(c)
                .into_iter()
                .map(|(lo, hi)| 0.5 * (lo + hi))
        })
        .collect();
    let centres = Matrix::new(grid.cell_count(), grid.p, centres)?;
    let scores = head.affine(&centres)?;
    Ok((0..grid.cell_count())
        .map(|c| {
            let row = argmax_set(scores.row(c))[0];
            fine.masses[(draws[row], c)]
        })
        .sum())
}

/// Fits a k-row head on samples of each drawn ID by minimizing the softmax
/// cross-entropy (domain-balanced) with Adam.
fn fit_head(
    bases: &[ProductDensity],
    draws: &[usize],
    config: &LimitConfig,
    rng: &mut Rng,
) -> Result<Layer> {
    let k = draws.len();
    let p = bases[0].dim();
    let n = config.fit_samples;
    let parts: Vec<Matrix> = draws
        .iter()
        .map(|&b| bases[b].sample_matrix(n, rng))
        .collect();
    let xs = Matrix::vstack(&parts.iter().collect::<Vec<_>>())?;
    let ids: Vec<usize> = (0..k).flat_map(|i| std::iter::repeat(i).take(n)).collect();
    let weights = vec![1.0 / (k * n) as f64; k * n];
    let mut head = Layer::glorot(p, k, rng);
    let mut adam = AdamState::new("limit head", &head);
    for _ in 0..config.fit_steps {
        let logits = head.affine(&xs)?;
        let (_, grad) = weighted_softmax_ce(&logits, &ids, &weights);
        let (g, _) = head.affine_backward(&xs, &grad)?;
        adam_step(&mut head, &g, &mut adam, config.fit_learning_rate)?;
    }
    Ok(head)
}

fn run_one(
    world: &RepWorld,
    p: usize,
    k: usize,
    seed: u64,
    fine: &DensityEstimate,
    oracle: f64,
    config: &LimitConfig,
) -> Result<LimitRecord> {
    let mut rng = Rng::new(seed).stream(k as u64);
    let draws: Vec<usize> = (0..k).map(|_| rng.categorical(&world.mu)).collect();

    let frequent = high_probability_count(&world.mu, k).max(1);
    let cells = match m_k(k, frequent) {
        Ok(m) => cells_per_axis(m, p),
        Err(Error::Infeasible(_)) => 1,
        Err(e) => return Err(e),
    };
    let radius = tail_radius(&world.bases, 1.0 / (k as f64).sqrt())?;
    let grid = GridSpec::new(cells, radius, p)?;
    let coarse = exact_density(&world.bases, grid)?;
    let owners = assign_cells(&draws, &coarse)
        .into_iter()
        .collect::<Option<Vec<usize>>>()
        .ok_or_else(|| {
            Error::Infeasible(format!(
                "{} cells but only {k} domain IDs",
                grid.cell_count()
            ))
        })?;
    // The head must exist; its value follows from the cell regions.
    constructive_head(&owners, k, &grid)?;
    let constructive = constructive_value(&world.bases, &draws, &owners, &grid);

    let trained = if config.fit_samples > 0 && config.fit_steps > 0 {
        let head = fit_head(&world.bases, &draws, config, &mut rng)?;
        head_value(&head, &draws, fine)?
    } else {
        f64::NAN
    };
    Ok(LimitRecord {
        k,
        constructive_value: constructive,
        trained_value: trained,
        oracle_value: oracle,
        seed,
        cells_per_axis: cells,
        radius,
    })
}

/// One record per (k, seed), ordered by k then seed. Each pair runs on its
/// own stream `Rng::new(seed).stream(k)`, so results do not depend on
/// scheduling.
pub fn adversary_limit_experiment(
    world: &RepWorld,
    config: &LimitConfig,
) -> Result<Vec<LimitRecord>> {
    let p = world.validate()?;
    if config.k_schedule.is_empty() || config.seeds.is_empty() {
        return Err(Error::Config(
            "k_schedule and seeds must be nonempty".into(),
        ));
    }
    if config.k_schedule.windows(2).any(|w| w[0] >= w[1]) || config.k_schedule[0] == 0 {
        return Err(Error::Config(
            "k_schedule must be positive and increasing".into(),
        ));
    }
    if config.oracle_cells == 0 {
        return Err(Error::Config("oracle_cells must be positive".into()));
    }
    let fine_grid = GridSpec::new(
        config.oracle_cells,
        tail_radius(&world.bases, ORACLE_TAIL)?,
        p,
    )?;
    let fine = exact_density(&world.bases, fine_grid)?;
    let oracle = partition_value(&fine).value;

    let jobs: Vec<(usize, u64)> = config
        .k_schedule
        .iter()
        .flat_map(|&k| config.seeds.iter().map(move |&s| (k, s)))
        .collect();
    jobs.par_iter()
        .map(|&(k, seed)| run_one(world, p, k, seed, &fine, oracle, config))
        .collect()
}

/// Mean |constructive value − oracle value| for each k, in schedule order.
pub fn mean_gaps(records: &[LimitRecord]) -> Vec<(usize, f64)> {
    let mut out: Vec<(usize, f64, usize)> = Vec::new();
    for r in records {
        let gap = (r.constructive_value - r.oracle_value).abs();
        match out.iter_mut().find(|(k, _, _)| *k == r.k) {
            Some(entry) => {
                entry.1 += gap;
                entry.2 += 1;
            }
            None => out.push((r.k, gap, 1)),
        }
    }
    out.into_iter().map(|(k, s, n)| (k, s / n as f64)).collect()
}

pub fn write_limit_csv(records: &[LimitRecord], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(LIMIT_HEADER.split(','))?;
    for r in records {
        w.write_record([
            r.k.to_string(),
            r.constructive_value.to_string(),
            r.trained_value.to_string(),
            r.oracle_value.to_string(),
            r.seed.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<limit csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussians() -> RepWorld {
        RepWorld::uniform(vec![
            ProductDensity::gaussian(vec![0.0], 1.0),
            ProductDensity::gaussian(vec![1.0], 1.0),
        ])
    }

    fn quick() -> LimitConfig {
        LimitConfig {
            k_schedule: vec![4, 16, 64],
            seeds: vec![0, 1],
            oracle_cells: 1024,
            fit_samples: 32,
            fit_steps: 100,
            fit_learning_rate: 0.05,
        }
    }

    #[test]
    fn single_base_gives_one_everywhere() {
        let world = RepWorld::uniform(vec![ProductDensity::gaussian(vec![0.3], 2.0)]);
        for r in adversary_limit_experiment(&world, &quick()).unwrap() {
            assert!((r.constructive_value - 1.0).abs() < 1e-9, "{r:?}");
            assert!((r.trained_value - 1.0).abs() < 1e-9, "{r:?}");
            assert!((r.oracle_value - 1.0).abs() < 1e-9, "{r:?}");
        }
    }

    #[test]
    fn disjoint_bases_approach_two() {
        let world = RepWorld::uniform(vec![
            ProductDensity::uniform(vec![-2.0], vec![-1.0]),
            ProductDensity::uniform(vec![1.0], vec![2.0]),
        ]);
        let mut cfg = quick();
        cfg.k_schedule = vec![16, 64, 256];
        let records = adversary_limit_experiment(&world, &cfg).unwrap();
        for r in &records {
            assert!((r.oracle_value - 2.0).abs() < 1e-9);
        }
        let last: Vec<&LimitRecord> = records.iter().filter(|r| r.k == 256).collect();
        for r in last {
            assert!(r.constructive_value > 1.99, "{r:?}");
            assert!(r.trained_value > 1.9, "{r:?}");
        }
    }

    #[test]
    fn gaussian_gap_shrinks() {
        let records = adversary_limit_experiment(&gaussians(), &quick()).unwrap();
        let oracle = records[0].oracle_value;
        assert!((oracle - 1.382_924_922_548_026).abs() < 1e-4, "{oracle}");
        let gaps = mean_gaps(&records);
        assert!(gaps[2].1 < gaps[0].1, "{gaps:?}");
    }

    #[test]
    fn runs_are_deterministic() {
        let a = adversary_limit_experiment(&gaussians(), &quick()).unwrap();
        let b = adversary_limit_experiment(&gaussians(), &quick()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ownership_uses_each_id_once() {
        let grid = GridSpec::new(4, 2.0, 1).unwrap();
        let world = gaussians();
        let est = exact_density(&world.bases, grid).unwrap();
        // Base 0 is heavier on the left half, base 1 on the right.
        let owners = assign_cells(&[1, 0, 0, 1, 1], &est);
        assert_eq!(owners, vec![Some(1), Some(2), Some(0), Some(3)]);
        // Base 0 runs out after one ID, so the next cells fall back to base 1.
        let owners = assign_cells(&[0, 1, 1], &est);
        assert_eq!(owners, vec![Some(0), Some(1), Some(2), None]);
    }

    #[test]
    fn bad_schedules_are_rejected() {
        let mut cfg = quick();
        cfg.k_schedule = vec![];
        assert!(adversary_limit_experiment(&gaussians(), &cfg).is_err());
        cfg.k_schedule = vec![16, 4];
        assert!(adversary_limit_experiment(&gaussians(), &cfg).is_err());
    }

    #[test]
    fn csv_has_the_header() {
        let records = adversary_limit_experiment(
            &gaussians(),
            &LimitConfig {
                k_schedule: vec![4],
                seeds: vec![3],
                ..quick()
            },
        )
        .unwrap();
        let mut buf = Vec::new();
        write_limit_csv(&records, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(LIMIT_HEADER));
        assert_eq!(text.lines().count(), 2);
    }
}
