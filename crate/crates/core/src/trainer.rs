//! Alternating minimax training of the encoder, discriminator and predictor.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelBundle;
use crate::nn::{adam_step, AdamState};
use crate::objective::{
    check_datasets, empirical_loss, surrogate_discriminator_loss, surrogate_encoder_predictor_loss,
    DomainDataset, LossReport,
};
use crate::rng::Rng;

/// Which epoch's weights `train` returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ModelSelection {
    #[default]
    LastEpoch,
    /// End of the trailing window with the best mean validation accuracy.
    StabilityWindow { window: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Points drawn from each domain per round.
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    pub disc_steps: usize,
    pub seed: u64,
    pub validation_fraction: f64,
    pub preset: String,
    pub selection: ModelSelection,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 64,
            learning_rate: 1e-3,
            lambda: 0.1,
            disc_steps: 1,
            seed: 0,
            validation_fraction: 0.2,
            preset: "synthetic".into(),
            selection: ModelSelection::LastEpoch,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: String| Err(Error::Config(format!("train.{field}: {why}")));
        if self.epochs == 0 {
            return bad("epochs", "must be positive".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be positive".into());
        }
        if self.disc_steps == 0 {
            return bad("disc_steps", "must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(
                "learning_rate",
                format!("{} is not a positive number", self.learning_rate),
            );
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(
                "lambda",
                format!("{} is not a non-negative number", self.lambda),
            );
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad(
                "validation_fraction",
                format!("{} is outside (0, 1)", self.validation_fraction),
            );
        }
        if let ModelSelection::StabilityWindow { window } = self.selection {
            if window == 0 || window > self.epochs {
                return bad(
                    "selection.window",
                    format!("{window} must be in 1..={}", self.epochs),
                );
            }
        }
        Ok(())
    }
}

/// The λ grid searched by tuning, scaled down by the number of domains.
pub fn lambda_grid(k: usize) -> Vec<f64> {
    [0.01, 0.05, 0.1, 0.5, 1.0]
        .iter()
        .map(|l| l / k.max(1) as f64)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub pred_surrogate: f64,
    pub adv_surrogate: f64,
    pub val_pred01: f64,
    pub val_adv01: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub records: Vec<EpochRecord>,
    /// Epoch (1-based) whose weights were returned.
    pub selected_epoch: usize,
}

pub const TRACE_HEADER: [&str; 6] = [
    "epoch",
    "pred_surrogate",
    "adv_surrogate",
    "val_pred01",
    "val_adv01",
    "val_accuracy",
];

impl TrainTrace {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(TRACE_HEADER)?;
        for r in &self.records {
            w.write_record([
                r.epoch.to_string(),
                r.pred_surrogate.to_string(),
                r.adv_surrogate.to_string(),
                r.val_pred01.to_string(),
                r.val_adv01.to_string(),
                r.val_accuracy.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<trace csv>", e))?;
        Ok(())
    }
}

/// Per-domain shuffled split; validation receives ⌈fraction · n_i⌉ points.
/// Both sides must end up non-empty.
pub fn split_train_validation(
    datasets: &[DomainDataset],
    fraction: f64,
    rng: &mut Rng,
) -> Result<(Vec<DomainDataset>, Vec<DomainDataset>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "validation fraction {fraction} is outside (0, 1)"
        )));
    }
    let mut train = Vec::with_capacity(datasets.len());
    let mut val = Vec::with_capacity(datasets.len());
    for ds in datasets {
        let n = ds.len();
        let n_val = (fraction * n as f64).ceil() as usize;
        if n_val >= n {
            return Err(Error::InvalidArgument(format!(
                "domain {} has {n} points, too few to split with fraction {fraction}",
                ds.domain_id
            )));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut idx);
        val.push(ds.subset(&idx[..n_val]));
        train.push(ds.subset(&idx[n_val..]));
    }
    Ok((train, val))
}

fn ensure_finite(value: f64, what: &str, epoch: usize) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::Divergence {
            epoch,
            detail: format!("{what} became {value}"),
        })
    }
}

/// Domain-balanced accuracy: 1 − mean per-domain error rate.
fn accuracy_of(report: &LossReport) -> f64 {
    1.0 - report.pred_term
}

/// Trains `bundle` on `datasets` after holding out a validation split.
/// Fully determined by `config.seed`.
pub fn train(
    bundle: &ModelBundle,
    datasets: &[DomainDataset],
    config: &TrainConfig,
) -> Result<(ModelBundle, TrainTrace)> {
    config.validate()?;
    let mut rng = Rng::new(config.seed);
    let mut split_rng = rng.split();
    let (train_sets, val_sets) =
        split_train_validation(datasets, config.validation_fraction, &mut split_rng)?;
    check_datasets(datasets, bundle)?;

    let mut model = bundle.clone();
    let mut disc_state = AdamState::new("discriminator", &model.discriminator);
    let mut enc_state = AdamState::new("encoder", &model.encoder.net);
    let mut pred_state = AdamState::new("predictor", &model.predictor.net);
    let lr = config.learning_rate;

    let max_n = train_sets.iter().map(DomainDataset::len).max().unwrap_or(0);
    let rounds = max_n.div_ceil(config.batch_size);
    let mut shuffle_rng = rng.split();
    let eval_rng = rng.split();

    let mut records = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, ModelBundle)> = None;
    for epoch in 1..=config.epochs {
        let orders: Vec<Vec<usize>> = train_sets
            .iter()
            .map(|ds| {
                let mut idx: Vec<usize> = (0..ds.len()).collect();
                shuffle_rng.shuffle(&mut idx);
                idx
            })
            .collect();
        let (mut pred_sum, mut adv_sum) = (0.0, 0.0);
        for round in 0..rounds {
            let batch: Vec<DomainDataset> = train_sets
                .iter()
                .zip(&orders)
                .map(|(ds, order)| {
                    let n = order.len();
                    let start = round * config.batch_size;
                    let take = config.batch_size.min(n);
                    let idx: Vec<usize> = (0..take).map(|j| order[(start + j) % n]).collect();
                    ds.subset(&idx)
                })
                .collect();

            let mut disc_loss = 0.0;
            for _ in 0..config.disc_steps {
                let out = surrogate_discriminator_loss(&batch, &model)?;
                ensure_finite(out.loss, "discriminator loss", epoch)?;
                disc_loss = out.loss;
                adam_step(&mut model.discriminator, &out.grads, &mut disc_state, lr)?;
            }
            let out = surrogate_encoder_predictor_loss(&batch, &model, config.lambda)?;
            ensure_finite(out.loss, "encoder/predictor loss", epoch)?;
            adam_step(
                &mut model.encoder.net,
                &out.grads.encoder,
                &mut enc_state,
                lr,
            )?;
            adam_step(
                &mut model.predictor.net,
                &out.grads.predictor,
                &mut pred_state,
                lr,
            )?;
            pred_sum += out.pred_loss;
            adv_sum += disc_loss;
        }

        let report = empirical_loss(
            &val_sets,
            &model,
            config.lambda,
            &mut eval_rng.stream(epoch as u64),
        )?;
        let record = EpochRecord {
            epoch,
            pred_surrogate: pred_sum / rounds as f64,
            adv_surrogate: adv_sum / rounds as f64,
            val_pred01: report.pred_term,
            val_adv01: report.adv_term,
            val_accuracy: accuracy_of(&report),
        };
        ensure_finite(record.pred_surrogate, "mean prediction loss", epoch)?;
        records.push(record);

        if let ModelSelection::StabilityWindow { window } = config.selection {
            if epoch >= window {
                let mean = records[epoch - window..]
                    .iter()
                    .map(|r| r.val_accuracy)
                    .sum::<f64>()
                    / window as f64;
                if best.as_ref().map_or(true, |(b, _, _)| mean > *b) {
                    best = Some((mean, epoch, model.clone()));
                }
            }
        }
    }

    let (model, selected_epoch) = match best {
        Some((_, epoch, m)) => (m, epoch),
        None => (model, config.epochs),
    };
    Ok((
        model,
        TrainTrace {
            records,
            selected_epoch,
        },
    ))
}
