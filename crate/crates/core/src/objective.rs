//! Domain-balanced losses: 0-1 evaluation losses and the differentiable
//! surrogates used for training.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{argmax_pi_k, discriminator_logits, encode, ModelBundle, DECISION_THRESHOLD};
use crate::nn::loss::{weighted_bce, weighted_softmax_ce};
use crate::nn::{mlp_backward, mlp_forward, Layer, MlpGradients, Parameters};
use crate::rng::Rng;

/// The labelled sample drawn from one training domain.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainDataset {
    pub domain_id: usize,
    pub xs: Matrix,
    pub ys: Vec<u8>,
}

impl DomainDataset {
    pub fn new(domain_id: usize, xs: Matrix, ys: Vec<u8>) -> Result<Self> {
        if xs.rows() != ys.len() {
            return Err(Error::shape("domain dataset labels", xs.rows(), ys.len()));
        }
        if ys.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "domain {domain_id} is empty"
            )));
        }
        if let Some(y) = ys.iter().find(|&&y| y > 1) {
            return Err(Error::InvalidArgument(format!("label {y} is not binary")));
        }
        if !xs.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "domain {domain_id} has non-finite covariates"
            )));
        }
        Ok(DomainDataset { domain_id, xs, ys })
    }

    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> DomainDataset {
        DomainDataset {
            domain_id: self.domain_id,
            xs: self.xs.select_rows(idx),
            ys: idx.iter().map(|&i| self.ys[i]).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    /// Mean over domains of the misclassification rate.
    pub pred_term: f64,
    /// Sum over domains of the rate at which the adversary names the domain.
    pub adv_term: f64,
    pub total: f64,
    pub lambda: f64,
}

/// Returns dataset positions ordered by domain id, after checking that the
/// ids are exactly `0..k` and the inputs match the bundle.
fn domain_order(datasets: &[DomainDataset], bundle: &ModelBundle) -> Result<Vec<usize>> {
    let k = bundle.dims.k;
    if datasets.len() != k {
        return Err(Error::shape("number of domains", k, datasets.len()));
    }
    let mut order = vec![usize::MAX; k];
    for (pos, ds) in datasets.iter().enumerate() {
        if ds.domain_id >= k || order[ds.domain_id] != usize::MAX {
            return Err(Error::InvalidArgument(format!(
                "domain ids must be exactly 0..{k}; got {} twice or out of range",
                ds.domain_id
            )));
        }
        if ds.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "domain {} is empty",
                ds.domain_id
            )));
        }
        bundle.check_input(&ds.xs)?;
        order[ds.domain_id] = pos;
    }
    Ok(order)
}

/// Checks that `datasets` cover domain ids `0..k` exactly once each and match
/// the bundle's input dimension.
pub fn check_datasets(datasets: &[DomainDataset], bundle: &ModelBundle) -> Result<()> {
    domain_order(datasets, bundle).map(|_| ())
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "lambda {lambda} must be finite and ≥ 0"
        )));
    }
    Ok(())
}

/// 0-1 version of the objective. Argmax ties are broken with `rng`, visiting
/// domains in id order and rows in order.
pub fn empirical_loss(
    datasets: &[DomainDataset],
    bundle: &ModelBundle,
    lambda: f64,
    rng: &mut Rng,
) -> Result<LossReport> {
    check_lambda(lambda)?;
    let order = domain_order(datasets, bundle)?;
    let k = order.len() as f64;
    let (mut pred_term, mut adv_term) = (0.0, 0.0);
    for (id, &pos) in order.iter().enumerate() {
        let ds = &datasets[pos];
        let n = ds.len() as f64;
        let z = encode(&bundle.encoder, &ds.xs)?;
        let probs = bundle.predictor.net.predict(&z)?;
        let wrong = probs
            .data()
            .iter()
            .zip(&ds.ys)
            .filter(|(&p, &y)| u8::from(p > DECISION_THRESHOLD) != y)
            .count();
        let logits = discriminator_logits(&bundle.discriminator, &z)?;
        let mut caught = 0usize;
        for row in logits.iter_rows() {
            if argmax_pi_k(row, rng)? == id {
                caught += 1;
            }
        }
        pred_term += wrong as f64 / n;
        adv_term += caught as f64 / n;
    }
    pred_term /= k;
    Ok(LossReport {
        pred_term,
        adv_term,
        total: pred_term + lambda * adv_term,
        lambda,
    })
}

/// All domains stacked into one batch, each row weighted `1 / (k · n_i)` so
/// weighted sums equal the mean over domains of per-domain means.
struct Stacked {
    xs: Matrix,
    ys: Vec<u8>,
    domains: Vec<usize>,
    weights: Vec<f64>,
}

fn stack(datasets: &[DomainDataset], bundle: &ModelBundle) -> Result<Stacked> {
    let order = domain_order(datasets, bundle)?;
    let k = order.len() as f64;
    let parts: Vec<&Matrix> = order.iter().map(|&p| &datasets[p].xs).collect();
    let xs = Matrix::vstack(&parts)?;
    let mut ys = Vec::with_capacity(xs.rows());
    let mut domains = Vec::with_capacity(xs.rows());
    let mut weights = Vec::with_capacity(xs.rows());
    for (id, &pos) in order.iter().enumerate() {
        let ds = &datasets[pos];
        let w = 1.0 / (k * ds.len() as f64);
        ys.extend_from_slice(&ds.ys);
        domains.extend(std::iter::repeat(id).take(ds.len()));
        weights.extend(std::iter::repeat(w).take(ds.len()));
    }
    Ok(Stacked {
        xs,
        ys,
        domains,
        weights,
    })
}

/// Gradients with the same tensor layout as [`crate::model::Discriminator`].
#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorGradients {
    pub zeta: MlpGradients,
    pub head: Layer,
}

impl Parameters for DiscriminatorGradients {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut t = self.zeta.tensors();
        t.extend(self.head.tensors());
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut t = self.zeta.tensors_mut();
        t.extend(self.head.tensors_mut());
        t
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderPredictorGradients {
    pub encoder: MlpGradients,
    pub predictor: MlpGradients,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorLoss {
    pub loss: f64,
    pub grads: DiscriminatorGradients,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderPredictorLoss {
    /// `pred_loss − λ · adv_loss`.
    pub loss: f64,
    pub pred_loss: f64,
    pub adv_loss: f64,
    pub grads: EncoderPredictorGradients,
}

/// Softmax cross-entropy of the discriminator against the true domain ids,
/// averaged within each domain and then across domains. The encoder is held
/// fixed.
pub fn surrogate_discriminator_loss(
    datasets: &[DomainDataset],
    bundle: &ModelBundle,
) -> Result<DiscriminatorLoss> {
    let batch = stack(datasets, bundle)?;
    let z = encode(&bundle.encoder, &batch.xs)?;
    let disc = &bundle.discriminator;
    let zeta_trace = mlp_forward(&disc.zeta, &z)?;
    let logits = disc.head.affine(&zeta_trace.output)?;
    let (loss, g_logits) = weighted_softmax_ce(&logits, &batch.domains, &batch.weights);
    let (head, g_features) = disc.head.affine_backward(&zeta_trace.output, &g_logits)?;
    let zeta = mlp_backward(&disc.zeta, &zeta_trace, &g_features)?.grads;
    Ok(DiscriminatorLoss {
        loss,
        grads: DiscriminatorGradients { zeta, head },
    })
}

/// Prediction BCE minus `λ` times the discriminator surrogate. Gradients reach
/// the encoder through both branches and the predictor through the first.
pub fn surrogate_encoder_predictor_loss(
    datasets: &[DomainDataset],
    bundle: &ModelBundle,
    lambda: f64,
) -> Result<EncoderPredictorLoss> {
    check_lambda(lambda)?;
    let batch = stack(datasets, bundle)?;
    let enc_trace = mlp_forward(&bundle.encoder.net, &batch.xs)?;
    let z = &enc_trace.output;

    let pred_trace = mlp_forward(&bundle.predictor.net, z)?;
    let (pred_loss, g_prob) = weighted_bce(pred_trace.output.data(), &batch.ys, &batch.weights)?;
    let g_prob = Matrix::new(g_prob.len(), 1, g_prob)?;
    let pred_back = mlp_backward(&bundle.predictor.net, &pred_trace, &g_prob)?;
    let mut g_z = pred_back.input_grad;

    let disc = &bundle.discriminator;
    let zeta_trace = mlp_forward(&disc.zeta, z)?;
    let logits = disc.head.affine(&zeta_trace.output)?;
    let (adv_loss, mut g_logits) = weighted_softmax_ce(&logits, &batch.domains, &batch.weights);
    if lambda != 0.0 {
        g_logits.scale(-lambda);
        let (_, g_features) = disc.head.affine_backward(&zeta_trace.output, &g_logits)?;
        let adv_back = mlp_backward(&disc.zeta, &zeta_trace, &g_features)?;
        for (a, b) in g_z.data_mut().iter_mut().zip(adv_back.input_grad.data()) {
            *a += b;
        }
    }
    let encoder = mlp_backward(&bundle.encoder.net, &enc_trace, &g_z)?.grads;
    Ok(EncoderPredictorLoss {
        loss: pred_loss - lambda * adv_loss,
        pred_loss,
        adv_loss,
        grads: EncoderPredictorGradients {
            encoder,
            predictor: pred_back.grads,
        },
    })
}
