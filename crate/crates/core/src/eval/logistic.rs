//! Logistic-regression baseline: one affine unit and a sigmoid, fitted by
//! full-batch gradient descent on the mean BCE of the pooled training data.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};
use crate::model::DECISION_THRESHOLD;
use crate::nn::sigmoid;
use crate::objective::DomainDataset;
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LogisticConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Fit on z-scored features (pooled mean and standard deviation).
    pub standardize: bool,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig {
            epochs: 1000,
            learning_rate: 0.5,
            standardize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticGradient {
    /// Mean BCE.
    pub loss: f64,
    pub weight: Vec<f64>,
    pub bias: f64,
}

/// Mean BCE of σ(x·w + b) and its gradient, Xᵀ(σ(Xw + b) − y)/n. The loss
/// uses softplus(z) − y·z, which is exact for any logit.
pub fn logistic_gradient(
    weight: &[f64],
    bias: f64,
    xs: &Matrix,
    ys: &[u8],
) -> Result<LogisticGradient> {
    if xs.cols() != weight.len() {
        return Err(Error::shape("logistic weights", xs.cols(), weight.len()));
    }
    if xs.rows() != ys.len() {
        return Err(Error::shape("logistic labels", xs.rows(), ys.len()));
    }
    if ys.is_empty() {
        return Err(Error::InvalidArgument("logistic fit needs data".into()));
    }
    let n = ys.len() as f64;
    let mut loss = 0.0;
    let mut gw = vec![0.0; weight.len()];
    let mut gb = 0.0;
    for (x, &y) in xs.iter_rows().zip(ys) {
        let z = dot(x, weight) + bias;
        let y = f64::from(y);
        let softplus = z.max(0.0) + (-z.abs()).exp().ln_1p();
        loss += softplus - y * z;
        let r = sigmoid(z) - y;
        for (g, xi) in gw.iter_mut().zip(x) {
            *g += r * xi;
        }
        gb += r;
    }
    for g in gw.iter_mut() {
        *g /= n;
    }
    Ok(LogisticGradient {
        loss: loss / n,
        weight: gw,
        bias: gb / n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    /// Feature shift and scale applied before the affine unit.
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub weight: Vec<f64>,
    pub bias: f64,
}

impl LogisticModel {
    fn transform(&self, xs: &Matrix) -> Result<Matrix> {
        if xs.cols() != self.weight.len() {
            return Err(Error::shape("logistic input", self.weight.len(), xs.cols()));
        }
        let mut out = xs.clone();
        for row in 0..out.rows() {
            for (j, v) in out.row_mut(row).iter_mut().enumerate() {
                *v = (*v - self.mean[j]) / self.scale[j];
            }
        }
        Ok(out)
    }

    pub fn predict_proba(&self, xs: &Matrix) -> Result<Vec<f64>> {
        let z = self.transform(xs)?;
        Ok(z.iter_rows()
            .map(|x| sigmoid(dot(x, &self.weight) + self.bias))
            .collect())
    }

    pub fn accuracy(&self, data: &DomainDataset) -> Result<f64> {
        let p = self.predict_proba(&data.xs)?;
        let hits = p
            .iter()
            .zip(&data.ys)
            .filter(|(&p, &y)| u8::from(p > DECISION_THRESHOLD) == y)
            .count();
        Ok(hits as f64 / data.len() as f64)
    }

    /// Pools `train` and runs gradient descent from a small random start.
    pub fn fit(train: &[DomainDataset], config: &LogisticConfig, rng: &mut Rng) -> Result<Self> {
        if !(config.learning_rate > 0.0 && config.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "logistic.learning_rate: {} is not a positive number",
                config.learning_rate
            )));
        }
        let parts: Vec<&Matrix> = train.iter().map(|d| &d.xs).collect();
        if parts.is_empty() || train.iter().all(DomainDataset::is_empty) {
            return Err(Error::InvalidArgument(
                "logistic baseline needs pooled training data".into(),
            ));
        }
        let xs = Matrix::vstack(&parts)?;
        let ys: Vec<u8> = train.iter().flat_map(|d| d.ys.iter().copied()).collect();
        let d = xs.cols();
        let n = xs.rows() as f64;

        let (mean, scale) = if config.standardize {
            let mean: Vec<f64> = xs.col_sums().iter().map(|s| s / n).collect();
            let mut var = vec![0.0; d];
            for row in xs.iter_rows() {
                for j in 0..d {
                    var[j] += (row[j] - mean[j]).powi(2);
                }
            }
            let scale = var
                .iter()
                .map(|v| {
                    let s = (v / n).sqrt();
                    if s > 0.0 {
                        s
                    } else {
                        1.0
                    }
                })
                .collect();
            (mean, scale)
        } else {
            (vec![0.0; d], vec![1.0; d])
        };

        let mut model = LogisticModel {
            mean,
            scale,
            weight: (0..d).map(|_| 0.01 * rng.normal()).collect(),
            bias: 0.0,
        };
        let z = model.transform(&xs)?;
        for epoch in 1..=config.epochs {
            let g = logistic_gradient(&model.weight, model.bias, &z, &ys)?;
            if !g.loss.is_finite() || g.weight.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence {
                    epoch,
                    detail: format!("logistic loss became {}", g.loss),
                });
            }
            for (w, gw) in model.weight.iter_mut().zip(&g.weight) {
                *w -= config.learning_rate * gw;
            }
            model.bias -= config.learning_rate * g.bias;
        }
        if model.weight.iter().any(|w| !w.is_finite()) || !model.bias.is_finite() {
            return Err(Error::Divergence {
                epoch: config.epochs,
                detail: "logistic weights became non-finite".into(),
            });
        }
        Ok(model)
    }
}

/// Accuracy on `test` of the logistic model fitted on the pooled `train`.
pub fn logistic_baseline(
    train: &[DomainDataset],
    test: &DomainDataset,
    config: &LogisticConfig,
    rng: &mut Rng,
) -> Result<f64> {
    LogisticModel::fit(train, config, rng)?.accuracy(test)
}
