//! Unseen-domain evaluation, the logistic baseline, PCA of representations
//! and the k-growth driver.

mod kgrowth;
mod logistic;
mod pca;

pub use kgrowth::{
    k_growth_experiment, summarize_k_growth, write_k_growth_csv, KGrowthConfig, KGrowthRecord,
    KGrowthSummary, KGrowthSummaryRow, K_GROWTH_HEADER,
};
pub use logistic::{
    logistic_baseline, logistic_gradient, LogisticConfig, LogisticGradient, LogisticModel,
};
pub use pca::{pca2, Pca2};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelBundle;
use crate::objective::{empirical_loss, DomainDataset};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub unseen_accuracy: f64,
    pub unseen_points: usize,
    /// Accuracy on each seen domain, in domain-id order (empty if none given).
    pub seen_accuracies: Vec<f64>,
    /// Σ_i P̂_i(adversary names domain i) on the seen domains.
    pub adv_term: Option<f64>,
    pub seed: u64,
    /// Whatever configuration the caller wants echoed into the report.
    #[serde(default)]
    pub config: serde_json::Value,
}

/// Fraction of points where the thresholded prediction equals the label.
pub fn accuracy(bundle: &ModelBundle, data: &DomainDataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot evaluate an empty dataset".into(),
        ));
    }
    let labels = bundle.predict_labels(&data.xs)?;
    let hits = labels.iter().zip(&data.ys).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / data.len() as f64)
}

/// Accuracy of f(φ(x)) on the unseen domain.
pub fn evaluate_unseen(bundle: &ModelBundle, unseen: &DomainDataset) -> Result<EvalReport> {
    Ok(EvalReport {
        unseen_accuracy: accuracy(bundle, unseen)?,
        unseen_points: unseen.len(),
        seen_accuracies: Vec::new(),
        adv_term: None,
        seed: 0,
        config: serde_json::Value::Null,
    })
}

/// [`evaluate_unseen`] plus per-domain accuracies and the adversary's 0-1
/// success on the seen domains. `seed` breaks argmax ties.
pub fn evaluate_with_seen(
    bundle: &ModelBundle,
    seen: &[DomainDataset],
    unseen: &DomainDataset,
    seed: u64,
) -> Result<EvalReport> {
    let mut report = evaluate_unseen(bundle, unseen)?;
    let mut ordered: Vec<&DomainDataset> = seen.iter().collect();
    ordered.sort_by_key(|d| d.domain_id);
    report.seen_accuracies = ordered
        .iter()
        .map(|d| accuracy(bundle, d))
        .collect::<Result<_>>()?;
    let loss = empirical_loss(seen, bundle, 0.0, &mut Rng::new(seed))?;
    report.adv_term = Some(loss.adv_term);
    report.seed = seed;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use crate::model::{build_bundle, Architecture};
    use crate::nn::Activation;

    fn bundle(seed: u64) -> ModelBundle {
        build_bundle(&Architecture::custom(3, 2, vec![4]), 2, &mut Rng::new(seed)).unwrap()
    }

    fn random_data(n: usize, rng: &mut Rng) -> DomainDataset {
        let xs = Matrix::new(n, 3, (0..3 * n).map(|_| rng.normal()).collect()).unwrap();
        let ys = (0..n).map(|_| u8::from(rng.bernoulli(0.5))).collect();
        DomainDataset::new(0, xs, ys).unwrap()
    }

    #[test]
    fn constant_predictor_on_matching_labels() {
        let mut b = bundle(1);
        // Zero last layer with a positive bias: f ≡ σ(3) > 0.5.
        let last = b.predictor.net.layers.last_mut().unwrap();
        last.weight.scale(0.0);
        last.bias[0] = 3.0;
        assert_eq!(b.predictor.net.output_activation, Activation::Sigmoid);
        let mut rng = Rng::new(2);
        let mut data = random_data(50, &mut rng);
        data.ys = vec![1; 50];
        assert_eq!(evaluate_unseen(&b, &data).unwrap().unseen_accuracy, 1.0);
    }

    #[test]
    fn flipped_labels_complement_accuracy() {
        let b = bundle(3);
        let mut rng = Rng::new(4);
        let data = random_data(500, &mut rng);
        let mut flipped = data.clone();
        for y in flipped.ys.iter_mut() {
            *y = 1 - *y;
        }
        let a = evaluate_unseen(&b, &data).unwrap().unseen_accuracy;
        let f = evaluate_unseen(&b, &flipped).unwrap().unseen_accuracy;
        assert!((a + f - 1.0).abs() < 1e-12);
    }

    #[test]
    fn random_bundle_is_at_chance() {
        let b = bundle(5);
        let mut rng = Rng::new(6);
        let data = random_data(10_000, &mut rng);
        let a = evaluate_unseen(&b, &data).unwrap().unseen_accuracy;
        assert!((a - 0.5).abs() < 0.02, "{a}");
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let b = bundle(7);
        let xs = Matrix::zeros(4, 5);
        let data = DomainDataset::new(0, xs, vec![0; 4]).unwrap();
        assert!(evaluate_unseen(&b, &data).is_err());
    }

    #[test]
    fn seen_domains_are_reported_in_id_order() {
        let b = bundle(8);
        let mut rng = Rng::new(9);
        let mut d0 = random_data(40, &mut rng);
        let mut d1 = random_data(40, &mut rng);
        d1.domain_id = 1;
        d0.ys = vec![0; 40];
        let unseen = random_data(40, &mut rng);
        let r = evaluate_with_seen(&b, &[d1.clone(), d0.clone()], &unseen, 11).unwrap();
        assert_eq!(r.seen_accuracies.len(), 2);
        assert_eq!(r.seen_accuracies[0], accuracy(&b, &d0).unwrap());
        let adv = r.adv_term.unwrap();
        assert!((0.0..=2.0).contains(&adv));
        assert_eq!(r.seed, 11);
    }
}
