//! The three-network bundle: encoder φ: ℝ^d → ℝ^s, discriminator
//! ψ_k(z) = W ζ(z) + B with ζ: ℝ^s → ℝ^p and a k-row head, and the
//! predictor f: ℝ^s → (0, 1).

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::{mlp_forward, Activation, Layer, MlpParams, Parameters};
use crate::rng::Rng;

/// Hard-label threshold on the predictor's probability.
pub const DECISION_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    /// Covariate dimension.
    pub d: usize,
    /// Representation dimension.
    pub s: usize,
    /// Output width of ζ.
    pub p: usize,
    /// Number of seen-domain IDs (discriminator head rows).
    pub k: usize,
}

/// Layer widths for the three networks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub preset: String,
    pub input_dim: usize,
    pub rep_dim: usize,
    /// Output width of ζ; defaults to the representation width.
    pub zeta_dim: usize,
    pub encoder_hidden: Vec<usize>,
    pub zeta_hidden: Vec<usize>,
    pub predictor_hidden: Vec<usize>,
}

impl Architecture {
    /// Named presets:
    /// - `synthetic`: d = 30, s = 10, ζ and f with 6 hidden layers of 10 units,
    ///   encoder with 2 hidden layers of 20 units.
    /// - `mnist`: d = 3·28·28, s = 50, ζ and f with 6 hidden layers of 200
    ///   units, encoder with one hidden layer of 200 units (an MLP stands in
    ///   for the convolutional encoder).
    pub fn preset(name: &str) -> Result<Self> {
        let arch = match name {
            "synthetic" => Architecture {
                preset: name.into(),
                input_dim: 30,
                rep_dim: 10,
                zeta_dim: 10,
                encoder_hidden: vec![20, 20],
                zeta_hidden: vec![10; 6],
                predictor_hidden: vec![10; 6],
            },
            "mnist" => Architecture {
                preset: name.into(),
                input_dim: 3 * 28 * 28,
                rep_dim: 50,
                zeta_dim: 50,
                encoder_hidden: vec![200],
                zeta_hidden: vec![200; 6],
                predictor_hidden: vec![200; 6],
            },
            other => {
                return Err(Error::Config(format!(
                    "unknown architecture preset `{other}`"
                )))
            }
        };
        Ok(arch)
    }

    /// Small architecture for arbitrary dimensions, used by tests and the
    /// theory experiments.
    pub fn custom(input_dim: usize, rep_dim: usize, hidden: Vec<usize>) -> Self {
        Architecture {
            preset: "custom".into(),
            input_dim,
            rep_dim,
            zeta_dim: rep_dim,
            encoder_hidden: hidden.clone(),
            zeta_hidden: hidden.clone(),
            predictor_hidden: hidden,
        }
    }

    pub fn with_zeta_dim(mut self, p: usize) -> Self {
        self.zeta_dim = p;
        self
    }
}

fn widths(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut w = vec![input];
    w.extend_from_slice(hidden);
    w.push(output);
    w
}

#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub net: MlpParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    pub zeta: MlpParams,
    /// `W` (k × p) and `B` (length k).
    pub head: Layer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Predictor {
    pub net: MlpParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub dims: Dims,
    pub architecture: Architecture,
    pub encoder: Encoder,
    pub discriminator: Discriminator,
    pub predictor: Predictor,
}

impl Discriminator {
    pub fn k(&self) -> usize {
        self.head.output_dim()
    }
}

impl Parameters for Discriminator {
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

/// Row i of the result is `W ζ(reps_i) + B`.
pub fn discriminator_logits(disc: &Discriminator, reps: &Matrix) -> Result<Matrix> {
    let features = disc.zeta.predict(reps)?;
    disc.head.affine(&features)
}

pub fn encode(encoder: &Encoder, batch: &Matrix) -> Result<Matrix> {
    Ok(mlp_forward(&encoder.net, batch)?.output)
}

/// Indices attaining the maximum of `weights`.
pub fn argmax_set(weights: &[f64]) -> Vec<usize> {
    let max = weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    weights
        .iter()
        .enumerate()
        .filter(|(_, &w)| w == max)
        .map(|(i, _)| i)
        .collect()
}

/// π_k: index of a maximal entry, uniform among ties.
pub fn argmax_pi_k(weights: &[f64], rng: &mut Rng) -> Result<usize> {
    if weights.is_empty() {
        return Err(Error::InvalidArgument("argmax of an empty vector".into()));
    }
    if let Some(bad) = weights.iter().find(|w| !w.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite weight {bad}")));
    }
    let ties = argmax_set(weights);
    Ok(if ties.len() == 1 {
        ties[0]
    } else {
        ties[rng.below(ties.len())]
    })
}

/// Fresh bundle with Glorot-uniform weights and zero biases. Initialization
/// order: encoder, ζ, head, predictor.
pub fn build_bundle(arch: &Architecture, k: usize, rng: &mut Rng) -> Result<ModelBundle> {
    if arch.input_dim == 0 || arch.rep_dim == 0 || arch.zeta_dim == 0 || k == 0 {
        return Err(Error::Config(format!(
            "dimensions must be positive (d={}, s={}, p={}, k={k})",
            arch.input_dim, arch.rep_dim, arch.zeta_dim
        )));
    }
    let encoder = MlpParams::glorot(
        &widths(arch.input_dim, &arch.encoder_hidden, arch.rep_dim),
        Activation::Identity,
        rng,
    )?;
    let zeta = MlpParams::glorot(
        &widths(arch.rep_dim, &arch.zeta_hidden, arch.zeta_dim),
        Activation::Identity,
        rng,
    )?;
    let head = Layer::glorot(arch.zeta_dim, k, rng);
    let predictor = MlpParams::glorot(
        &widths(arch.rep_dim, &arch.predictor_hidden, 1),
        Activation::Sigmoid,
        rng,
    )?;
    Ok(ModelBundle {
        dims: Dims {
            d: arch.input_dim,
            s: arch.rep_dim,
            p: arch.zeta_dim,
            k,
        },
        architecture: arch.clone(),
        encoder: Encoder { net: encoder },
        discriminator: Discriminator { zeta, head },
        predictor: Predictor { net: predictor },
    })
}

impl ModelBundle {
    pub fn check_input(&self, xs: &Matrix) -> Result<()> {
        if xs.cols() != self.dims.d {
            return Err(Error::shape("bundle input", self.dims.d, xs.cols()));
        }
        Ok(())
    }

    /// f(φ(x)) for every row.
    pub fn predict_proba(&self, xs: &Matrix) -> Result<Vec<f64>> {
        self.check_input(xs)?;
        let z = encode(&self.encoder, xs)?;
        Ok(self.predictor.net.predict(&z)?.into_data())
    }

    pub fn predict_labels(&self, xs: &Matrix) -> Result<Vec<u8>> {
        Ok(self
            .predict_proba(xs)?
            .into_iter()
            .map(|p| u8::from(p > DECISION_THRESHOLD))
            .collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&BundleDoc::from_bundle(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: BundleDoc = serde_json::from_str(text)?;
        doc.into_bundle()
    }
}

// --- serialization -------------------------------------------------------

const BUNDLE_FORMAT: &str = "rvr-bundle/1";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerDoc {
    rows: usize,
    cols: usize,
    /// Little-endian f64, row-major.
    weight: String,
    bias: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetDoc {
    hidden_activation: Activation,
    output_activation: Activation,
    layers: Vec<LayerDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BundleDoc {
    format: String,
    dims: Dims,
    architecture: Architecture,
    encoder: NetDoc,
    zeta: NetDoc,
    head: LayerDoc,
    predictor: NetDoc,
}

fn encode_f64s(values: &[f64]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    BASE64.encode(bytes)
}

fn decode_f64s(text: &str, expected: usize) -> Result<Vec<f64>> {
    let bytes = BASE64
        .decode(text)
        .map_err(|e| Error::Data(format!("bad base64 blob: {e}")))?;
    if bytes.len() != expected * 8 {
        return Err(Error::shape("bundle blob", expected * 8, bytes.len()));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

impl LayerDoc {
    fn from_layer(layer: &Layer) -> Self {
        LayerDoc {
            rows: layer.weight.rows(),
            cols: layer.weight.cols(),
            weight: encode_f64s(layer.weight.data()),
            bias: encode_f64s(&layer.bias),
        }
    }

    fn into_layer(self) -> Result<Layer> {
        let w = decode_f64s(&self.weight, self.rows * self.cols)?;
        let b = decode_f64s(&self.bias, self.rows)?;
        Layer::new(Matrix::new(self.rows, self.cols, w)?, b)
    }
}

impl NetDoc {
    fn from_net(net: &MlpParams) -> Self {
        NetDoc {
            hidden_activation: net.hidden_activation,
            output_activation: net.output_activation,
            layers: net.layers.iter().map(LayerDoc::from_layer).collect(),
        }
    }

    fn into_net(self) -> Result<MlpParams> {
        let layers = self
            .layers
            .into_iter()
            .map(LayerDoc::into_layer)
            .collect::<Result<Vec<_>>>()?;
        MlpParams::new(layers, self.hidden_activation, self.output_activation)
    }
}

impl BundleDoc {
    fn from_bundle(b: &ModelBundle) -> Self {
        BundleDoc {
            format: BUNDLE_FORMAT.into(),
            dims: b.dims,
            architecture: b.architecture.clone(),
            encoder: NetDoc::from_net(&b.encoder.net),
            zeta: NetDoc::from_net(&b.discriminator.zeta),
            head: LayerDoc::from_layer(&b.discriminator.head),
            predictor: NetDoc::from_net(&b.predictor.net),
        }
    }

    fn into_bundle(self) -> Result<ModelBundle> {
        if self.format != BUNDLE_FORMAT {
            return Err(Error::Data(format!(
                "unsupported bundle format `{}`",
                self.format
            )));
        }
        let encoder = self.encoder.into_net()?;
        let zeta = self.zeta.into_net()?;
        let head = self.head.into_layer()?;
        let predictor = self.predictor.into_net()?;
        let dims = self.dims;
        let chained = encoder.input_dim() == dims.d
            && encoder.output_dim() == dims.s
            && zeta.input_dim() == dims.s
            && zeta.output_dim() == dims.p
            && head.input_dim() == dims.p
            && head.output_dim() == dims.k
            && predictor.input_dim() == dims.s
            && predictor.output_dim() == 1;
        if !chained {
            return Err(Error::Data(format!(
                "bundle layer widths do not chain for dims {dims:?}"
            )));
        }
        Ok(ModelBundle {
            dims,
            architecture: self.architecture,
            encoder: Encoder { net: encoder },
            discriminator: Discriminator { zeta, head },
            predictor: Predictor { net: predictor },
        })
    }
}
