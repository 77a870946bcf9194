//! Unseen-domain accuracy as the number of seen domains grows.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::accuracy;
use super::logistic::{logistic_baseline, LogisticConfig};
use crate::error::{Error, Result};
use crate::model::{build_bundle, Architecture};
use crate::rng::Rng;
use crate::trainer::{train, TrainConfig};
use crate::worlds::{draw_domains, sample_domain, sample_domains, WorldSpec};

pub const K_GROWTH_HEADER: &str = "k,seed,rvr_accuracy,logistic_accuracy";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KGrowthConfig {
    /// Strictly increasing numbers of seen domains.
    pub k_values: Vec<usize>,
    pub n_per_domain: usize,
    /// Test points drawn from the unseen domain.
    pub unseen_points: usize,
    pub seeds: Vec<u64>,
    /// `train.seed` is replaced by each run's seed.
    pub train: TrainConfig,
    /// Output width of ζ; the preset's default when absent.
    pub zeta_dim: Option<usize>,
    pub logistic: LogisticConfig,
}

impl Default for KGrowthConfig {
    fn default() -> Self {
        KGrowthConfig {
            k_values: vec![4, 10],
            n_per_domain: 2000,
            unseen_points: 2000,
            seeds: vec![0, 1, 2],
            train: TrainConfig::default(),
            zeta_dim: None,
            logistic: LogisticConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KGrowthRecord {
    pub k: usize,
    pub seed: u64,
    pub rvr_accuracy: f64,
    pub logistic_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KGrowthSummaryRow {
    pub k: usize,
    pub runs: usize,
    pub rvr_mean: f64,
    pub rvr_std: f64,
    pub logistic_mean: f64,
    pub logistic_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KGrowthSummary {
    pub rows: Vec<KGrowthSummaryRow>,
}

impl KGrowthConfig {
    pub fn validate(&self, world: &WorldSpec) -> Result<usize> {
        if self.k_values.is_empty() || self.k_values[0] == 0 {
            return Err(Error::Config(
                "k_values must be non-empty and positive".into(),
            ));
        }
        if self.k_values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "k_values {:?} must be strictly increasing",
                self.k_values
            )));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must be non-empty".into()));
        }
        if self.n_per_domain == 0 || self.unseen_points == 0 {
            return Err(Error::Config(
                "n_per_domain and unseen_points must be positive".into(),
            ));
        }
        self.train.validate()?;
        let max_k = *self.k_values.last().expect("non-empty");
        let unseen = world.unseen.ok_or_else(|| {
            Error::Config("world has no unseen base domain to evaluate on".into())
        })?;
        if world.n_bases() < max_k + 1 {
            return Err(Error::Config(format!(
                "world has {} base domains; k = {max_k} needs at least {}",
                world.n_bases(),
                max_k + 1
            )));
        }
        Ok(unseen)
    }
}

/// One run: seen domains are the first `k` of a per-seed sequence of draws,
/// so larger k extends the smaller runs' data. The unseen test sample is the
/// same for every k of a seed.
fn run_one(
    world: &WorldSpec,
    cfg: &KGrowthConfig,
    unseen: usize,
    k: usize,
    seed: u64,
) -> Result<KGrowthRecord> {
    let root = Rng::new(seed);
    let max_k = *cfg.k_values.last().expect("validated");
    let bases = draw_domains(world, max_k, &mut root.stream(0));
    let seen = sample_domains(world, &bases[..k], cfg.n_per_domain, &root.stream(1))?;
    let test = sample_domain(world, unseen, cfg.unseen_points, &mut root.stream(2))?;

    let mut arch = Architecture::preset(&cfg.train.preset)?;
    if let Some(p) = cfg.zeta_dim {
        arch = arch.with_zeta_dim(p);
    }
    let bundle = build_bundle(&arch, k, &mut root.stream(3))?;
    let train_cfg = TrainConfig {
        seed,
        ..cfg.train.clone()
    };
    let (model, _) = train(&bundle, &seen, &train_cfg)?;
    let rvr_accuracy = accuracy(&model, &test)?;
    let logistic_accuracy = logistic_baseline(&seen, &test, &cfg.logistic, &mut root.stream(4))?;
    Ok(KGrowthRecord {
        k,
        seed,
        rvr_accuracy,
        logistic_accuracy,
    })
}

/// Every (k, seed) pair, run in parallel; records come back ordered by k,
/// then by position in `seeds`.
pub fn k_growth_experiment(world: &WorldSpec, cfg: &KGrowthConfig) -> Result<Vec<KGrowthRecord>> {
    world.validate()?;
    let unseen = cfg.validate(world)?;
    let jobs: Vec<(usize, u64)> = cfg
        .k_values
        .iter()
        .flat_map(|&k| cfg.seeds.iter().map(move |&s| (k, s)))
        .collect();
    jobs.par_iter()
        .map(|&(k, seed)| run_one(world, cfg, unseen, k, seed))
        .collect()
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

/// Mean and sample standard deviation per k, in order of first appearance.
pub fn summarize_k_growth(records: &[KGrowthRecord]) -> KGrowthSummary {
    let mut ks: Vec<usize> = Vec::new();
    for r in records {
        if !ks.contains(&r.k) {
            ks.push(r.k);
        }
    }
    let rows = ks
        .into_iter()
        .map(|k| {
            let runs: Vec<&KGrowthRecord> = records.iter().filter(|r| r.k == k).collect();
            let rvr: Vec<f64> = runs.iter().map(|r| r.rvr_accuracy).collect();
            let logistic: Vec<f64> = runs.iter().map(|r| r.logistic_accuracy).collect();
            let (rvr_mean, rvr_std) = mean_std(&rvr);
            let (logistic_mean, logistic_std) = mean_std(&logistic);
            KGrowthSummaryRow {
                k,
                runs: runs.len(),
                rvr_mean,
                rvr_std,
                logistic_mean,
                logistic_std,
            }
        })
        .collect();
    KGrowthSummary { rows }
}

pub fn write_k_growth_csv(records: &[KGrowthRecord], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(K_GROWTH_HEADER.split(','))?;
    for r in records {
        w.write_record([
            r.k.to_string(),
            r.seed.to_string(),
            r.rvr_accuracy.to_string(),
            r.logistic_accuracy.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<k-growth csv>", e))?;
    Ok(())
}
