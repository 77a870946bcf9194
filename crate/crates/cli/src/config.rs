//! Run configuration documents.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use rvr_core::eval::{KGrowthConfig, LogisticConfig};
use rvr_core::model::Architecture;
use rvr_core::trainer::{ModelSelection, TrainConfig};
use rvr_core::worlds::RuleVariant;
use rvr_core::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub world: WorldSection,
    #[serde(default)]
    pub sampling: SamplingSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub outputs: OutputsSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldSection {
    pub variant: RuleVariant,
    /// Number of base domains, the last of which is held out.
    #[serde(rename = "N")]
    pub n_bases: usize,
    pub seed: u64,
}

/// A single count or an increasing list of counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KValues {
    One(usize),
    Many(Vec<usize>),
}

impl KValues {
    pub fn single(&self) -> Result<usize> {
        match self {
            KValues::One(k) => Ok(*k),
            KValues::Many(ks) if ks.len() == 1 => Ok(ks[0]),
            KValues::Many(ks) => Err(Error::Config(format!(
                "sampling.k: expected one value here, got {ks:?}"
            ))),
        }
    }

    pub fn list(&self) -> Vec<usize> {
        match self {
            KValues::One(k) => vec![*k],
            KValues::Many(ks) => ks.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingSection {
    pub k: KValues,
    pub n_per_domain: usize,
    /// Points drawn from the held-out base domain.
    pub unseen_points: usize,
}

impl Default for SamplingSection {
    fn default() -> Self {
        SamplingSection {
            k: KValues::One(4),
            n_per_domain: 2000,
            unseen_points: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub preset: String,
    /// Output width of ζ; the preset's default when absent.
    pub p: Option<usize>,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            preset: "synthetic".into(),
            p: None,
        }
    }
}

impl ModelSection {
    pub fn architecture(&self) -> Result<Architecture> {
        let arch = Architecture::preset(&self.preset)
            .map_err(|e| Error::Config(format!("model.preset: {e}")))?;
        Ok(match self.p {
            Some(0) => return Err(Error::Config("model.p must be positive".into())),
            Some(p) => arch.with_zeta_dim(p),
            None => arch,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lambda: f64,
    pub disc_steps: usize,
    pub seed: u64,
    pub validation_fraction: f64,
    pub selection: ModelSelection,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            epochs: t.epochs,
            batch_size: t.batch_size,
            lr: t.learning_rate,
            lambda: t.lambda,
            disc_steps: t.disc_steps,
            seed: t.seed,
            validation_fraction: t.validation_fraction,
            selection: t.selection,
        }
    }
}

impl TrainSection {
    pub fn to_train_config(&self, preset: &str) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.lr,
            lambda: self.lambda,
            disc_steps: self.disc_steps,
            seed: self.seed,
            validation_fraction: self.validation_fraction,
            preset: preset.into(),
            selection: self.selection,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub seeds: Vec<u64>,
    /// Settings of the logistic-regression baseline.
    pub baseline: LogisticConfig,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            seeds: vec![0, 1, 2],
            baseline: LogisticConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputsSection {
    /// Used when `--out` is not given.
    pub directory: Option<PathBuf>,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.world.n_bases < 2 {
            return Err(Error::Config(
                "world.N must be at least 2 (one base domain is held out)".into(),
            ));
        }
        if self.sampling.n_per_domain == 0 {
            return Err(Error::Config(
                "sampling.n_per_domain must be positive".into(),
            ));
        }
        if self.sampling.unseen_points == 0 {
            return Err(Error::Config(
                "sampling.unseen_points must be positive".into(),
            ));
        }
        if self.sampling.k.list().contains(&0) {
            return Err(Error::Config("sampling.k must be positive".into()));
        }
        if self.eval.seeds.is_empty() {
            return Err(Error::Config("eval.seeds must be non-empty".into()));
        }
        self.model.architecture()?;
        self.train.to_train_config(&self.model.preset)?;
        Ok(())
    }

    pub fn k_growth(&self) -> Result<KGrowthConfig> {
        Ok(KGrowthConfig {
            k_values: self.sampling.k.list(),
            n_per_domain: self.sampling.n_per_domain,
            unseen_points: self.sampling.unseen_points,
            seeds: self.eval.seeds.clone(),
            train: self.train.to_train_config(&self.model.preset)?,
            zeta_dim: self.model.p,
            logistic: self.eval.baseline.clone(),
        })
    }
}

/// A parsed document together with the raw JSON it came from.
#[derive(Debug, Clone)]
pub struct Loaded<T> {
    pub value: T,
    pub raw: Value,
}

/// Reads and parses a JSON document. Any failure, including a missing
/// file, is a configuration error naming the file.
pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<Loaded<T>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let raw: Value = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let value = parse_value(&raw).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    Ok(Loaded { value, raw })
}

pub fn parse_value<T: DeserializeOwned>(raw: &Value) -> Result<T> {
    serde_json::from_value(raw.clone()).map_err(|e| Error::Config(e.to_string()))
}

pub fn load_run_config(path: &Path) -> Result<Loaded<RunConfig>> {
    let loaded: Loaded<RunConfig> = load_json(path)?;
    loaded.value.validate()?;
    Ok(loaded)
}

/// Compact JSON with object keys in sorted order.
pub fn canonical_json(value: &Value) -> String {
    fn sorted(v: &Value) -> Value {
        match v {
            Value::Object(map) => {
                let mut keys: Vec<&String> = map.keys().collect();
                keys.sort();
                Value::Object(
                    keys.into_iter()
                        .map(|k| (k.clone(), sorted(&map[k])))
                        .collect(),
                )
            }
            Value::Array(items) => Value::Array(items.iter().map(sorted).collect()),
            other => other.clone(),
        }
    }
    sorted(value).to_string()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn config_hash(value: &Value) -> String {
    sha256_hex(canonical_json(value).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn minimal() -> Value {
        json!({"world": {"variant": "linear_interaction", "N": 5, "seed": 3}})
    }

    #[test]
    fn defaults_fill_missing_sections() {
        let cfg: RunConfig = parse_value(&minimal()).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.sampling.k, KValues::One(4));
        assert_eq!(
            cfg.train.to_train_config("synthetic").unwrap(),
            TrainConfig::default()
        );
    }

    #[test]
    fn unknown_keys_are_named() {
        let mut doc = minimal();
        doc["train"] = json!({"learning_rate": 0.1});
        let err = parse_value::<RunConfig>(&doc).unwrap_err();
        assert!(err.to_string().contains("learning_rate"), "{err}");
        let mut doc = minimal();
        doc["extra"] = json!(1);
        assert!(parse_value::<RunConfig>(&doc).is_err());
    }

    #[test]
    fn k_accepts_scalar_or_list() {
        let mut doc = minimal();
        doc["sampling"] = json!({"k": [4, 10]});
        let cfg: RunConfig = parse_value(&doc).unwrap();
        assert_eq!(cfg.sampling.k.list(), vec![4, 10]);
        assert!(cfg.sampling.k.single().is_err());
        assert_eq!(cfg.k_growth().unwrap().k_values, vec![4, 10]);
    }

    #[test]
    fn invalid_values_are_config_errors() {
        let mut doc = minimal();
        doc["train"] = json!({"epochs": 0});
        let cfg: RunConfig = parse_value(&doc).unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config(m)) if m.contains("epochs")));
        let mut doc = minimal();
        doc["model"] = json!({"preset": "nope"});
        let cfg: RunConfig = parse_value(&doc).unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn canonical_form_ignores_key_order_and_whitespace() {
        let a: Value = serde_json::from_str(r#"{"b": 1, "a": {"y": [1, 2], "x": null}}"#).unwrap();
        let b: Value = serde_json::from_str(r#"{"a":{"x":null,"y":[1,2]},"b":1}"#).unwrap();
        assert_eq!(canonical_json(&a), r#"{"a":{"x":null,"y":[1,2]},"b":1}"#);
        assert_eq!(config_hash(&a), config_hash(&b));
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
