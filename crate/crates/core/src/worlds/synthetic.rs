//! Hierarchical synthetic worlds: a distribution over Gaussian base domains
//! whose labels follow one invariant rule and one domain-specific rule.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};
use crate::nn::sigmoid;
use crate::objective::DomainDataset;
use crate::rng::Rng;

pub const COVARIATES: usize = 30;
pub const COMMON: usize = 20;
pub const SPECIFIC: usize = COVARIATES - COMMON;
pub const BASE_RATE: f64 = 0.7;
pub const DEFAULT_BASES: usize = 11;
/// Attempts allowed between two accepted points before giving up.
pub const MAX_ATTEMPTS_PER_POINT: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleVariant {
    LinearInteraction,
    LogicalOr,
}

impl RuleVariant {
    fn shared_vectors(self) -> usize {
        match self {
            RuleVariant::LinearInteraction => 1,
            RuleVariant::LogicalOr => 3,
        }
    }

    fn invariant_vectors(self) -> usize {
        match self {
            RuleVariant::LinearInteraction => 1,
            RuleVariant::LogicalOr => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseDomainSpec {
    pub mean: Vec<f64>,
    /// Row-major 30 × 30 factor; the covariance is `factor · factorᵀ`.
    pub factor: Vec<f64>,
    pub base_rate: f64,
    /// One perturbation of the shared weights on the common covariates per
    /// invariant vector (one for the linear rule, two for the OR rule).
    pub common_perturbation: Vec<Vec<f64>>,
    /// Perturbation on the domain-specific covariates.
    pub specific_perturbation: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldSpec {
    pub seed: u64,
    pub variant: RuleVariant,
    /// Probability of drawing each base domain.
    pub mu: Vec<f64>,
    /// Base domain excluded from `mu`'s support and kept for testing.
    pub unseen: Option<usize>,
    /// Sorted indices of the covariates shared by every domain's invariant rule.
    pub common: Vec<usize>,
    /// Sorted complement of `common`.
    pub specific: Vec<usize>,
    /// Shared weight vectors of length 20 (one, or three for the OR rule).
    pub shared_weights: Vec<Vec<f64>>,
    pub interaction_coeff: f64,
    /// Interacting pair inside `common`, as covariate indices.
    pub common_pair: (usize, usize),
    /// Interacting pair inside `specific`, as covariate indices.
    pub specific_pair: (usize, usize),
    pub domains: Vec<BaseDomainSpec>,
}

fn uniform_vec(rng: &mut Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.uniform(lo, hi)).collect()
}

fn two_distinct(rng: &mut Rng, from: &[usize]) -> (usize, usize) {
    let a = rng.below(from.len());
    let mut b = rng.below(from.len() - 1);
    if b >= a {
        b += 1;
    }
    (from[a], from[b])
}

/// Builds a world with `n_bases` base domains. The last base domain is held
/// out as the unseen test domain and `mu` is uniform over the rest; with a
/// single base domain `mu` is the point mass on it.
///
/// Draw order from `Rng::new(seed)`: common subset, shared weights,
/// interaction coefficient, interaction pairs, then per base domain its mean,
/// factor, common perturbations and specific perturbation.
pub fn build_world(seed: u64, variant: RuleVariant, n_bases: usize) -> Result<WorldSpec> {
    if n_bases == 0 {
        return Err(Error::Config("world.N must be at least 1".into()));
    }
    let mut rng = Rng::new(seed);
    let mut order: Vec<usize> = (0..COVARIATES).collect();
    rng.shuffle(&mut order);
    let mut common = order[..COMMON].to_vec();
    let mut specific = order[COMMON..].to_vec();
    common.sort_unstable();
    specific.sort_unstable();

    let shared_weights = (0..variant.shared_vectors())
        .map(|_| uniform_vec(&mut rng, COMMON, 0.25, 2.0))
        .collect();
    let interaction_coeff = rng.uniform(0.25, 1.0);
    let common_pair = two_distinct(&mut rng, &common);
    let specific_pair = two_distinct(&mut rng, &specific);

    let domains = (0..n_bases)
        .map(|_| BaseDomainSpec {
            mean: uniform_vec(&mut rng, COVARIATES, -3.0, 3.0),
            factor: uniform_vec(&mut rng, COVARIATES * COVARIATES, -1.0, 1.0),
            base_rate: BASE_RATE,
            common_perturbation: (0..variant.invariant_vectors())
                .map(|_| uniform_vec(&mut rng, COMMON, -0.1, 0.1))
                .collect(),
            specific_perturbation: uniform_vec(&mut rng, SPECIFIC, -2.0, 2.0),
        })
        .collect();

    let (mu, unseen) = if n_bases == 1 {
        (vec![1.0], None)
    } else {
        let mut mu = vec![1.0 / (n_bases - 1) as f64; n_bases];
        mu[n_bases - 1] = 0.0;
        (mu, Some(n_bases - 1))
    };
    Ok(WorldSpec {
        seed,
        variant,
        mu,
        unseen,
        common,
        specific,
        shared_weights,
        interaction_coeff,
        common_pair,
        specific_pair,
        domains,
    })
}

impl WorldSpec {
    pub fn n_bases(&self) -> usize {
        self.domains.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.domains.len();
        if self.mu.len() != n {
            return Err(Error::Data(format!(
                "mu has {} entries for {n} domains",
                self.mu.len()
            )));
        }
        let total: f64 = self.mu.iter().sum();
        if self.mu.iter().any(|&m| !(m >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::Data(format!(
                "mu is not a probability vector (sum {total})"
            )));
        }
        if self.common.len() != COMMON || self.specific.len() != SPECIFIC {
            return Err(Error::Data(
                "covariate subsets must have sizes 20 and 10".into(),
            ));
        }
        for d in &self.domains {
            if d.mean.len() != COVARIATES
                || d.factor.len() != COVARIATES * COVARIATES
                || d.specific_perturbation.len() != SPECIFIC
                || d.common_perturbation.len() != self.variant.invariant_vectors()
                || d.common_perturbation.iter().any(|v| v.len() != COMMON)
            {
                return Err(Error::Data(
                    "base domain parameters have wrong sizes".into(),
                ));
            }
        }
        if self.shared_weights.len() != self.variant.shared_vectors()
            || self.shared_weights.iter().any(|w| w.len() != COMMON)
        {
            return Err(Error::Data("shared weights have wrong sizes".into()));
        }
        Ok(())
    }

    /// Σ_i = σ_i σ_iᵀ.
    pub fn covariance(&self, base: usize) -> Matrix {
        let f = Matrix::from_raw(COVARIATES, COVARIATES, self.domains[base].factor.clone());
        f.matmul_t(&f).expect("square factor")
    }

    fn gather(x: &[f64], idx: &[usize]) -> Vec<f64> {
        idx.iter().map(|&i| x[i]).collect()
    }

    fn perturbed(shared: &[f64], eps: &[f64]) -> Vec<f64> {
        shared.iter().zip(eps).map(|(w, e)| w + e).collect()
    }

    /// Invariant score on the common covariates. For the OR rule this is the
    /// pair of logits feeding the two Bernoulli draws.
    pub fn invariant_scores(&self, base: usize, x: &[f64]) -> Vec<f64> {
        let d = &self.domains[base];
        let xa = Self::gather(x, &self.common);
        match self.variant {
            RuleVariant::LinearInteraction => {
                let w = Self::perturbed(&self.shared_weights[0], &d.common_perturbation[0]);
                let (a, b) = self.common_pair;
                vec![dot(&w, &xa) + self.interaction_coeff * x[a] * x[b]]
            }
            RuleVariant::LogicalOr => (0..2)
                .map(|v| {
                    dot(
                        &Self::perturbed(&self.shared_weights[v], &d.common_perturbation[v]),
                        &xa,
                    )
                })
                .collect(),
        }
    }

    /// Domain-specific score on the remaining covariates. The shared vectors
    /// have length 20, so their first 10 entries serve these 10 covariates.
    pub fn specific_score(&self, base: usize, x: &[f64]) -> f64 {
        let d = &self.domains[base];
        let xc = Self::gather(x, &self.specific);
        let shared = match self.variant {
            RuleVariant::LinearInteraction => &self.shared_weights[0],
            RuleVariant::LogicalOr => &self.shared_weights[2],
        };
        let w = Self::perturbed(&shared[..SPECIFIC], &d.specific_perturbation);
        let linear = dot(&w, &xc);
        match self.variant {
            RuleVariant::LinearInteraction => {
                let (a, b) = self.specific_pair;
                linear + self.interaction_coeff * x[a] * x[b]
            }
            RuleVariant::LogicalOr => linear,
        }
    }

    /// Draws one raw covariate vector x = μ + σ z.
    pub fn draw_covariates(&self, base: usize, rng: &mut Rng) -> Vec<f64> {
        let d = &self.domains[base];
        let z: Vec<f64> = (0..COVARIATES).map(|_| rng.normal()).collect();
        (0..COVARIATES)
            .map(|r| d.mean[r] + dot(&d.factor[r * COVARIATES..(r + 1) * COVARIATES], &z))
            .collect()
    }
}

/// i.i.d. draws of base-domain indices from `mu`; repeats are allowed.
pub fn draw_domains(world: &WorldSpec, k: usize, rng: &mut Rng) -> Vec<usize> {
    (0..k).map(|_| rng.categorical(&world.mu)).collect()
}

/// y₁ OR y₂ with y_j ~ Ber(p_j), drawn in that order.
pub fn or_label(p1: f64, p2: f64, rng: &mut Rng) -> u8 {
    let y1 = rng.bernoulli(p1);
    let y2 = rng.bernoulli(p2);
    u8::from(y1 || y2)
}

/// Stochastic invariant label of the OR rule at `x`.
pub fn label_logical_or(world: &WorldSpec, base: usize, x: &[f64], rng: &mut Rng) -> Result<u8> {
    if world.variant != RuleVariant::LogicalOr {
        return Err(Error::InvalidArgument(
            "world does not use the logical_or rule".into(),
        ));
    }
    let s = world.invariant_scores(base, x);
    Ok(or_label(sigmoid(s[0]), sigmoid(s[1]), rng))
}

/// Accept-reject sampling of `n` labelled points from base domain `base`.
/// Each attempt draws x, then y ~ Ber(b), then (OR rule) the invariant label;
/// the point is kept when the invariant and domain-specific rules both agree
/// with y. The result has domain id 0.
pub fn sample_domain(
    world: &WorldSpec,
    base: usize,
    n: usize,
    rng: &mut Rng,
) -> Result<DomainDataset> {
    if base >= world.n_bases() {
        return Err(Error::InvalidArgument(format!(
            "base domain {base} out of range for {} domains",
            world.n_bases()
        )));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("sample_domain needs n ≥ 1".into()));
    }
    let rate = world.domains[base].base_rate;
    let mut xs = Vec::with_capacity(n * COVARIATES);
    let mut ys = Vec::with_capacity(n);
    let mut attempts = 0u64;
    while ys.len() < n {
        attempts += 1;
        if attempts > MAX_ATTEMPTS_PER_POINT {
            return Err(Error::AcceptanceStall {
                domain: base,
                attempts,
            });
        }
        let x = world.draw_covariates(base, rng);
        let y = u8::from(rng.bernoulli(rate));
        let invariant = match world.variant {
            RuleVariant::LinearInteraction => u8::from(world.invariant_scores(base, &x)[0] > 0.0),
            RuleVariant::LogicalOr => label_logical_or(world, base, &x, rng)?,
        };
        let specific = u8::from(world.specific_score(base, &x) > 0.0);
        if y == invariant && y == specific {
            xs.extend(x);
            ys.push(y);
            attempts = 0;
        }
    }
    DomainDataset::new(0, Matrix::new(n, COVARIATES, xs)?, ys)
}

/// Samples `n` points for each listed base domain, giving them domain ids
/// `0..bases.len()` in order. Each domain uses its own keyed stream of `rng`,
/// so the result does not depend on scheduling.
pub fn sample_domains(
    world: &WorldSpec,
    bases: &[usize],
    n: usize,
    rng: &Rng,
) -> Result<Vec<DomainDataset>> {
    bases
        .par_iter()
        .enumerate()
        .map(|(id, &base)| {
            let mut stream = rng.stream(id as u64);
            let mut ds = sample_domain(world, base, n, &mut stream)?;
            ds.domain_id = id;
            Ok(ds)
        })
        .collect()
}
