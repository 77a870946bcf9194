//! Generalization-bound arithmetic: the finite-k bound on the gap between
//! empirical and population objectives, and the worst-case unseen-domain
//! error bound. Logarithms are natural.

use serde::{Deserialize, Serialize};

use super::density::{in_max_region, tail_radius, ProductDensity};
use super::grid::GridSpec;
use super::partition::{boundary_interior_counts, RegionAssignment};
use crate::error::{Error, Result};

/// Probability level above which a base domain counts as frequently drawn:
/// k^{-1/4}.
pub fn high_probability_threshold(k: usize) -> f64 {
    (k as f64).powf(-0.25)
}

/// Number of base domains with μ ≥ k^{-1/4}.
pub fn high_probability_count(mu: &[f64], k: usize) -> usize {
    let t = high_probability_threshold(k);
    mu.iter().filter(|&&m| m >= t).count()
}

/// ⌈k^{3/4} − √((k·ln h + k^{3/4})/√2)⌉ for h frequent domains.
pub fn m_k(k: usize, high_prob_count: usize) -> Result<u64> {
    if k == 0 || high_prob_count == 0 {
        return Err(Error::InvalidArgument(format!(
            "m_k needs k ≥ 1 and at least one frequent domain (k={k}, |H|={high_prob_count})"
        )));
    }
    let k = k as f64;
    let k34 = k.powf(0.75);
    let m = (k34 - ((k * (high_prob_count as f64).ln() + k34) / std::f64::consts::SQRT_2).sqrt())
        .ceil();
    if m <= 0.0 {
        return Err(Error::Infeasible(format!(
            "m_k = {m} ≤ 0: k = {k} is too small for {high_prob_count} frequent domains"
        )));
    }
    Ok(m as u64)
}

/// Largest c with c^p ≤ m, at least 1.
pub fn cells_per_axis(m: u64, p: usize) -> usize {
    let mut c = ((m as f64).powf(1.0 / p as f64).floor() as u64).max(1);
    while c > 1 && c.pow(p as u32) > m {
        c -= 1;
    }
    while (c + 1).pow(p as u32) <= m {
        c += 1;
    }
    c as usize
}

/// VC dimension of the k-row discriminator class: k·V·(ln V)².
pub fn vc_dimension_of_heads(k: usize, pairwise_vc: f64) -> f64 {
    let l = pairwise_vc.ln();
    k as f64 * pairwise_vc * l * l
}

/// √(V ln(n/V) / n); zero when V = 0. Requires n > V.
pub fn vc_complexity(vc: f64, n: f64) -> Result<f64> {
    if vc == 0.0 {
        return Ok(0.0);
    }
    if n <= vc {
        return Err(Error::Infeasible(format!(
            "sample size {n} does not exceed VC dimension {vc}"
        )));
    }
    Ok((vc * (n / vc).ln() / n).sqrt())
}

fn default_c() -> f64 {
    1.0
}

/// Inputs of the finite-k bound. All quantities are nonnegative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundInputs {
    /// Number of seen domains.
    pub k: usize,
    /// Number of base domains N.
    pub n_domains: usize,
    /// Sample size of each seen domain (length k).
    pub sample_sizes: Vec<usize>,
    pub lambda: f64,
    pub t1: f64,
    pub t2: f64,
    /// Universal constant of the VC terms.
    #[serde(default = "default_c")]
    pub c: f64,
    /// VC dimension of the predictor∘encoder class.
    pub vc_predictor: f64,
    /// VC dimension of pairwise head comparisons.
    pub vc_pairwise: f64,
    /// Uniform bound on the pushed-forward densities.
    pub density_bound: f64,
    /// Radius with tail mass at most 1/√k.
    pub radius: f64,
    /// Number of base domains with μ ≥ k^{-1/4}.
    pub high_prob_count: usize,
    /// Σ over frequent domains of their boundary-cell counts.
    pub boundary_cells: f64,
    /// Output dimension of ζ.
    pub p: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub inputs: BoundInputs,
    /// (1 + kλ)t₁ + 2λ/√k + N·t₂.
    pub leading: f64,
    /// λ·max{N − |H_k|, 0}.
    pub term_i: f64,
    /// Boundary-cell term.
    pub term_ii: f64,
    /// VC sum.
    pub term_iii: f64,
    pub m_k: u64,
    pub cells_per_axis: usize,
    pub v_ck: f64,
    pub total: f64,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        let reals = [
            ("lambda", self.lambda),
            ("t1", self.t1),
            ("t2", self.t2),
            ("c", self.c),
            ("vc_predictor", self.vc_predictor),
            ("vc_pairwise", self.vc_pairwise),
            ("density_bound", self.density_bound),
            ("radius", self.radius),
            ("boundary_cells", self.boundary_cells),
        ];
        if let Some((name, v)) = reals.iter().find(|(_, v)| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config(format!(
                "{name} = {v} must be finite and ≥ 0"
            )));
        }
        if self.k == 0 || self.p == 0 {
            return Err(Error::Config("k and p must be positive".into()));
        }
        if self.sample_sizes.len() != self.k {
            return Err(Error::Config(format!(
                "sample_sizes has {} entries, expected k = {}",
                self.sample_sizes.len(),
                self.k
            )));
        }
        if self.high_prob_count > self.n_domains {
            return Err(Error::Config(format!(
                "high_prob_count {} exceeds n_domains {}",
                self.high_prob_count, self.n_domains
            )));
        }
        Ok(())
    }
}

/// 2λ B_ρ B^p / c^p · (boundary cells), with c cells per axis.
pub fn boundary_term(
    lambda: f64,
    density_bound: f64,
    radius: f64,
    p: usize,
    cells: usize,
    boundary_cells: f64,
) -> f64 {
    let volume_ratio = (radius / cells as f64).powi(p as i32);
    2.0 * lambda * density_bound * volume_ratio * boundary_cells
}

pub fn bound_rhs(inputs: &BoundInputs) -> Result<BoundReport> {
    inputs.validate()?;
    let k = inputs.k as f64;
    let n = inputs.n_domains as f64;
    let m = m_k(inputs.k, inputs.high_prob_count)?;
    let cells = cells_per_axis(m, inputs.p);
    let v_ck = vc_dimension_of_heads(inputs.k, inputs.vc_pairwise);

    let leading =
        (1.0 + k * inputs.lambda) * inputs.t1 + 2.0 * inputs.lambda / k.sqrt() + n * inputs.t2;
    let term_i = inputs.lambda * inputs.n_domains.saturating_sub(inputs.high_prob_count) as f64;
    let term_ii = boundary_term(
        inputs.lambda,
        inputs.density_bound,
        inputs.radius,
        inputs.p,
        cells,
        inputs.boundary_cells,
    );
    let mut vc_sum = 0.0;
    for &n_i in &inputs.sample_sizes {
        let n_i = n_i as f64;
        vc_sum += vc_complexity(v_ck, n_i)? + vc_complexity(inputs.vc_predictor, n_i)?;
    }
    let term_iii = 2.0 * inputs.c / k * vc_sum;
    Ok(BoundReport {
        inputs: inputs.clone(),
        leading,
        term_i,
        term_ii,
        term_iii,
        m_k: m,
        cells_per_axis: cells,
        v_ck,
        total: leading + term_i + term_ii + term_iii,
    })
}

/// One point of the boundary term along a two-Gaussian scenario in ℝ^p.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioPoint {
    pub k: usize,
    pub radius: f64,
    pub cells_per_axis: usize,
    pub boundary_cells: usize,
    pub term_ii: f64,
}

/// Boundary term for two unit Gaussians at −0.4·e₁ and 0.6·e₁ with uniform
/// μ. Their regions are split by the hyperplane z₁ = 0.1, which does not
/// line up with cell faces. The radius has tail mass 1/√k; boundary cells
/// come from the corner test on the density regions.
pub fn gaussian_boundary_term(k: usize, p: usize, lambda: f64) -> Result<ScenarioPoint> {
    let mut e1 = vec![0.0; p];
    let bases: Vec<ProductDensity> = [-0.4, 0.6]
        .iter()
        .map(|&shift| {
            e1[0] = shift;
            ProductDensity::gaussian(e1.clone(), 1.0)
        })
        .collect();
    let h = high_probability_count(&[0.5, 0.5], k);
    let m = m_k(k, h)?;
    let cells = cells_per_axis(m, p);
    let radius = tail_radius(&bases, 1.0 / (k as f64).sqrt())?;
    let grid = GridSpec::new(cells, radius, p)?;
    let mut assignment = RegionAssignment::new(2, vec![0; grid.cell_count()])?;
    let counts =
        boundary_interior_counts(&mut assignment, &grid, |i, z| in_max_region(&bases, i, z))?;
    let boundary: usize = counts.iter().take(h).map(|c| c.0).sum();
    let density_bound = bases[0].max_density();
    Ok(ScenarioPoint {
        k,
        radius,
        cells_per_axis: cells,
        boundary_cells: boundary,
        term_ii: boundary_term(lambda, density_bound, radius, p, cells, boundary as f64),
    })
}

/// Inputs of the worst-case unseen-domain bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorstCaseInputs {
    /// Lower bound on the μ-mass of a nearby domain, in (0, 1).
    pub p_l: f64,
    /// H-divergence slack.
    pub delta: f64,
    /// Domain-averaged empirical 0-1 error.
    pub beta_hat: f64,
    pub t: f64,
    /// Either the VC term itself, or (c, vc_predictor, n_min) to compute it.
    #[serde(default)]
    pub vc_term: Option<f64>,
    #[serde(default = "default_c")]
    pub c: f64,
    #[serde(default)]
    pub vc_predictor: Option<f64>,
    #[serde(default)]
    pub n_min: Option<usize>,
    /// Seen-domain count and sample sizes for the probability floor.
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub sample_sizes: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstCaseReport {
    pub inputs: WorstCaseInputs,
    pub vc_term: f64,
    pub bound: f64,
    /// 1 − exp(−k²p_l²/2)/p_l − Σ 4e^{−n_i t²}, written out.
    pub probability_expression: String,
    /// Its value, when k and the sample sizes are given.
    pub probability_floor: Option<f64>,
}

/// (2/p_l)(β̂ + t + vc) + δ.
pub fn worst_case_value(p_l: f64, delta: f64, beta_hat: f64, t: f64, vc: f64) -> Result<f64> {
    if !(p_l > 0.0 && p_l < 1.0) {
        return Err(Error::Config(format!("p_l = {p_l} must lie in (0, 1)")));
    }
    if let Some((name, v)) = [
        ("delta", delta),
        ("beta_hat", beta_hat),
        ("t", t),
        ("vc_term", vc),
    ]
    .into_iter()
    .find(|(_, v)| !(v.is_finite() && *v >= 0.0))
    {
        return Err(Error::Config(format!(
            "{name} = {v} must be finite and ≥ 0"
        )));
    }
    Ok(2.0 / p_l * (beta_hat + t + vc) + delta)
}

pub fn worst_case_bound(inputs: &WorstCaseInputs) -> Result<WorstCaseReport> {
    let vc = match (inputs.vc_term, inputs.vc_predictor, inputs.n_min) {
        (Some(v), _, _) => v,
        (None, Some(v), Some(n)) => inputs.c * vc_complexity(v, n as f64)?,
        _ => {
            return Err(Error::Config(
                "give vc_term, or both vc_predictor and n_min".into(),
            ))
        }
    };
    let bound = worst_case_value(inputs.p_l, inputs.delta, inputs.beta_hat, inputs.t, vc)?;
    let (expression, floor) = match (inputs.k, &inputs.sample_sizes) {
        (Some(k), Some(sizes)) => {
            let p_l = inputs.p_l;
            let t2 = inputs.t * inputs.t;
            let head = (-(k as f64).powi(2) * p_l * p_l / 2.0).exp() / p_l;
            let tail: f64 = sizes.iter().map(|&n| 4.0 * (-(n as f64) * t2).exp()).sum();
            let terms: Vec<String> = sizes.iter().map(|n| format!("4·exp(−{n}·{t2})")).collect();
            (
                format!("1 − exp(−{k}²·{p_l}²/2)/{p_l} − ({})", terms.join(" + ")),
                Some(1.0 - head - tail),
            )
        }
        _ => (
            "1 − exp(−k²·p_l²/2)/p_l − Σ_i 4·exp(−n_i·t²)".to_string(),
            None,
        ),
    };
    Ok(WorstCaseReport {
        inputs: inputs.clone(),
        vc_term: vc,
        bound,
        probability_expression: expression,
        probability_floor: floor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inputs(k: usize, h: usize) -> BoundInputs {
        BoundInputs {
            k,
            n_domains: 3,
            sample_sizes: vec![1_000_000; k],
            lambda: 0.1,
            t1: 0.01,
            t2: 0.02,
            c: 1.0,
            vc_predictor: 10.0,
            vc_pairwise: 5.0,
            density_bound: 0.4,
            radius: 3.0,
            high_prob_count: h,
            boundary_cells: 7.0,
            p: 2,
        }
    }

    #[test]
    fn m_k_hand_value() {
        // 64 − √((256·ln 2 + 64)/√2) = 64 − 13.066…
        assert_eq!(m_k(256, 2).unwrap(), 51);
    }

    #[test]
    fn threshold_at_sixteen() {
        assert_eq!(high_probability_threshold(16), 0.5);
        assert_eq!(high_probability_count(&[0.5, 0.3, 0.2], 16), 1);
    }

    #[test]
    fn head_vc_hand_value() {
        let v = vc_dimension_of_heads(10, 5.0);
        assert!((v - 129.52).abs() < 0.5, "{v}");
        let l = 5f64.ln();
        assert!((v - 50.0 * l * l).abs() < 1e-12);
    }

    #[test]
    fn small_k_is_infeasible() {
        assert_eq!(m_k(2, 3).unwrap(), 1);
        let err = m_k(4, 10).unwrap_err();
        assert!(matches!(err, Error::Infeasible(_)));
        assert!(bound_rhs(&inputs(4, 10)).is_err());
        assert!(m_k(0, 1).is_err());
    }

    #[test]
    fn cells_per_axis_is_an_integer_root() {
        assert_eq!(cells_per_axis(51, 1), 51);
        assert_eq!(cells_per_axis(51, 2), 7);
        assert_eq!(cells_per_axis(64, 3), 4);
        assert_eq!(cells_per_axis(63, 3), 3);
        assert_eq!(cells_per_axis(1, 4), 1);
    }

    #[test]
    fn bound_terms_follow_their_formulas() {
        let inp = inputs(256, 2);
        let r = bound_rhs(&inp).unwrap();
        assert_eq!(r.m_k, 51);
        assert_eq!(r.cells_per_axis, 7);
        let leading = (1.0 + 25.6) * 0.01 + 0.2 / 16.0 + 3.0 * 0.02;
        assert!((r.leading - leading).abs() < 1e-15);
        assert!((r.term_i - 0.1).abs() < 1e-15);
        let term_ii = 2.0 * 0.1 * 0.4 * 9.0 / 49.0 * 7.0;
        assert!((r.term_ii - term_ii).abs() < 1e-14);
        let v_ck = 256.0 * 5.0 * 5f64.ln().powi(2);
        let per = (v_ck * (1e6 / v_ck).ln() / 1e6).sqrt() + (10.0 * (1e5f64).ln() / 1e6).sqrt();
        assert!((r.term_iii - 2.0 * per).abs() < 1e-12);
        assert!((r.total - (r.leading + r.term_i + r.term_ii + r.term_iii)).abs() < 1e-15);
    }

    #[test]
    fn too_few_samples_for_the_vc_term() {
        let mut inp = inputs(256, 2);
        inp.sample_sizes = vec![100; 256];
        assert!(matches!(bound_rhs(&inp).unwrap_err(), Error::Infeasible(_)));
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        let mut inp = inputs(256, 2);
        inp.high_prob_count = 4;
        assert!(bound_rhs(&inp).is_err());
        let mut inp = inputs(256, 2);
        inp.lambda = -1.0;
        assert!(bound_rhs(&inp).is_err());
        let mut inp = inputs(256, 2);
        inp.sample_sizes.pop();
        assert!(bound_rhs(&inp).is_err());
    }

    #[test]
    fn inputs_reject_unknown_fields() {
        let mut v = serde_json::to_value(inputs(16, 1)).unwrap();
        v["bogus"] = serde_json::json!(1);
        assert!(serde_json::from_value::<BoundInputs>(v).is_err());
    }

    #[test]
    fn boundary_term_shrinks_along_the_gaussian_scenario() {
        let terms: Vec<f64> = [8, 10, 12, 14, 16]
            .iter()
            .map(|e| gaussian_boundary_term(1 << e, 2, 1.0).unwrap().term_ii)
            .collect();
        for w in terms.windows(2) {
            assert!(w[1] < w[0], "{terms:?}");
        }
    }

    #[test]
    fn gaussian_scenario_has_one_straddling_column() {
        let pt = gaussian_boundary_term(256, 2, 1.0).unwrap();
        assert_eq!(pt.cells_per_axis, 7);
        assert_eq!(pt.boundary_cells, 2 * 7);
    }

    fn worst(p_l: f64, beta: f64, t: f64, vc: f64, delta: f64) -> WorstCaseInputs {
        WorstCaseInputs {
            p_l,
            delta,
            beta_hat: beta,
            t,
            vc_term: Some(vc),
            c: 1.0,
            vc_predictor: None,
            n_min: None,
            k: None,
            sample_sizes: None,
        }
    }

    #[test]
    fn worst_case_hand_value() {
        let r = worst_case_bound(&worst(0.5, 0.1, 0.05, 0.05, 0.1)).unwrap();
        assert_eq!(r.bound, 0.9);
    }

    #[test]
    fn worst_case_zero_and_passthrough() {
        assert_eq!(
            worst_case_bound(&worst(0.5, 0.0, 0.0, 0.0, 0.0))
                .unwrap()
                .bound,
            0.0
        );
        assert_eq!(
            worst_case_bound(&worst(0.3, 0.0, 0.0, 0.0, 0.17))
                .unwrap()
                .bound,
            0.17
        );
    }

    #[test]
    fn worst_case_rejects_bad_p_l() {
        assert!(worst_case_bound(&worst(0.0, 0.1, 0.1, 0.1, 0.1)).is_err());
        assert!(worst_case_bound(&worst(1.0, 0.1, 0.1, 0.1, 0.1)).is_err());
    }

    #[test]
    fn worst_case_computes_the_vc_term() {
        let mut inp = worst(0.5, 0.1, 0.05, 0.0, 0.1);
        inp.vc_term = None;
        inp.vc_predictor = Some(10.0);
        inp.n_min = Some(1000);
        inp.c = 2.0;
        inp.k = Some(3);
        inp.sample_sizes = Some(vec![1000, 2000, 3000]);
        let r = worst_case_bound(&inp).unwrap();
        let vc = 2.0 * (10.0 * 100f64.ln() / 1000.0).sqrt();
        assert!((r.vc_term - vc).abs() < 1e-15);
        let floor = 1.0
            - (-9.0 * 0.25 / 2.0f64).exp() / 0.5
            - [1000.0, 2000.0, 3000.0]
                .iter()
                .map(|n: &f64| 4.0 * (-n * 0.0025f64).exp())
                .sum::<f64>();
        assert!((r.probability_floor.unwrap() - floor).abs() < 1e-15);
        assert!(r.probability_expression.contains("exp"));
    }
}
