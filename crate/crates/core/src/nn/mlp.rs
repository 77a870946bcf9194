//! Fixed-topology feed-forward networks with hand-written backpropagation.
//!
//! A layer computes `z = x Wᵀ + b` on a row-major batch and then applies an
//! activation: ReLU between layers, identity or sigmoid after the last one.

use serde::{Deserialize, Serialize};

use super::Parameters;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            // Written so NaN propagates instead of being clipped to 0.
            Activation::Relu => {
                if z < 0.0 {
                    0.0
                } else {
                    z
                }
            }
            Activation::Sigmoid => sigmoid(z),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => a * (1.0 - a),
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// One affine map; `weight` is `out × in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn new(weight: Matrix, bias: Vec<f64>) -> Result<Self> {
        if weight.rows() != bias.len() {
            return Err(Error::shape("Layer::new", weight.rows(), bias.len()));
        }
        Ok(Layer { weight, bias })
    }

    pub fn zeros(input: usize, output: usize) -> Self {
        Layer {
            weight: Matrix::zeros(output, input),
            bias: vec![0.0; output],
        }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot(input: usize, output: usize, rng: &mut Rng) -> Self {
        let limit = (6.0 / (input + output) as f64).sqrt();
        let data = (0..input * output)
            .map(|_| rng.uniform(-limit, limit))
            .collect();
        Layer {
            weight: Matrix::from_raw(output, input, data),
            bias: vec![0.0; output],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.rows()
    }

    /// `x Wᵀ + b`.
    pub fn affine(&self, x: &Matrix) -> Result<Matrix> {
        let mut z = x.matmul_t(&self.weight)?;
        z.add_row_vector(&self.bias);
        Ok(z)
    }

    /// Gradients of the affine map given upstream `delta` (n × out).
    /// Returns (layer gradient, gradient w.r.t. the input).
    pub fn affine_backward(&self, input: &Matrix, delta: &Matrix) -> Result<(Layer, Matrix)> {
        let grad_w = delta.t_matmul(input)?;
        let grad_b = delta.col_sums();
        let grad_in = delta.matmul(&self.weight)?;
        Ok((
            Layer {
                weight: grad_w,
                bias: grad_b,
            },
            grad_in,
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

/// Gradient container mirroring [`MlpParams`] layer by layer.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGradients {
    pub layers: Vec<Layer>,
}

/// Everything [`mlp_backward`] needs from the forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// Input to each layer; `inputs[0]` is the batch.
    pub inputs: Vec<Matrix>,
    /// Pre-activation of each layer.
    pub pre_activations: Vec<Matrix>,
    pub output: Matrix,
}

#[derive(Debug, Clone)]
pub struct Backward {
    pub grads: MlpGradients,
    pub input_grad: Matrix,
}

impl MlpParams {
    pub fn new(
        layers: Vec<Layer>,
        hidden_activation: Activation,
        output_activation: Activation,
    ) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument(
                "an MLP needs at least one layer".into(),
            ));
        }
        for pair in layers.windows(2) {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::shape(
                    "MlpParams::new",
                    pair[0].output_dim(),
                    pair[1].input_dim(),
                ));
            }
        }
        Ok(MlpParams {
            layers,
            hidden_activation,
            output_activation,
        })
    }

    /// Glorot-initialized network with the given layer widths
    /// (`widths[0]` is the input dimension) and ReLU hidden units.
    pub fn glorot(widths: &[usize], output_activation: Activation, rng: &mut Rng) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "bad layer widths {widths:?}"
            )));
        }
        let layers = widths
            .windows(2)
            .map(|w| Layer::glorot(w[0], w[1], rng))
            .collect();
        MlpParams::new(layers, Activation::Relu, output_activation)
    }

    /// Single identity layer of size `n`.
    pub fn identity(n: usize) -> Self {
        MlpParams {
            layers: vec![Layer {
                weight: Matrix::identity(n),
                bias: vec![0.0; n],
            }],
            hidden_activation: Activation::Relu,
            output_activation: Activation::Identity,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Layer::output_dim)
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim()];
        w.extend(self.layers.iter().map(Layer::output_dim));
        w
    }

    fn activation_of(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers.len() {
            self.output_activation
        } else {
            self.hidden_activation
        }
    }

    pub fn zero_gradients(&self) -> MlpGradients {
        MlpGradients {
            layers: self
                .layers
                .iter()
                .map(|l| Layer::zeros(l.input_dim(), l.output_dim()))
                .collect(),
        }
    }

    /// Forward pass without keeping the trace.
    pub fn predict(&self, batch: &Matrix) -> Result<Matrix> {
        check_input(self, batch)?;
        let mut x = batch.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let act = self.activation_of(i);
            x = layer.affine(&x)?.map(|z| act.apply(z));
        }
        Ok(x)
    }

    /// Product of the layers' spectral-norm upper bounds (Frobenius norms);
    /// a Lipschitz constant for the network with ReLU/identity activations.
    pub fn lipschitz_bound(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| l.weight.data().iter().map(|w| w * w).sum::<f64>().sqrt())
            .product()
    }
}

fn check_input(params: &MlpParams, batch: &Matrix) -> Result<()> {
    if batch.cols() != params.input_dim() {
        return Err(Error::shape(
            "mlp_forward",
            params.input_dim(),
            batch.cols(),
        ));
    }
    Ok(())
}

pub fn mlp_forward(params: &MlpParams, batch: &Matrix) -> Result<ForwardTrace> {
    check_input(params, batch)?;
    let mut inputs = Vec::with_capacity(params.layers.len());
    let mut pre_activations = Vec::with_capacity(params.layers.len());
    let mut x = batch.clone();
    for (i, layer) in params.layers.iter().enumerate() {
        let z = layer.affine(&x)?;
        let act = params.activation_of(i);
        let a = z.map(|v| act.apply(v));
        inputs.push(x);
        pre_activations.push(z);
        x = a;
    }
    Ok(ForwardTrace {
        inputs,
        pre_activations,
        output: x,
    })
}

/// Backpropagates `output_gradient` (dL/d output, n × out) through the network.
pub fn mlp_backward(
    params: &MlpParams,
    trace: &ForwardTrace,
    output_gradient: &Matrix,
) -> Result<Backward> {
    let depth = params.layers.len();
    if trace.inputs.len() != depth || trace.pre_activations.len() != depth {
        return Err(Error::shape(
            "mlp_backward (stale trace)",
            depth,
            trace.inputs.len(),
        ));
    }
    for (i, layer) in params.layers.iter().enumerate() {
        let (n, d_in) = trace.inputs[i].shape();
        let (n2, d_out) = trace.pre_activations[i].shape();
        if d_in != layer.input_dim() || d_out != layer.output_dim() || n != n2 {
            return Err(Error::shape(
                "mlp_backward (stale trace)",
                format!("layer {i} {}x{}", layer.output_dim(), layer.input_dim()),
                format!("{d_out}x{d_in}"),
            ));
        }
    }
    if output_gradient.shape() != trace.output.shape() {
        return Err(Error::shape(
            "mlp_backward output gradient",
            format!("{:?}", trace.output.shape()),
            format!("{:?}", output_gradient.shape()),
        ));
    }

    let mut grads = Vec::with_capacity(depth);
    let mut upstream = output_gradient.clone();
    let mut post = trace.output.clone();
    for i in (0..depth).rev() {
        let act = params.activation_of(i);
        let z = &trace.pre_activations[i];
        let mut delta = upstream;
        for ((d, &zv), &av) in delta.data_mut().iter_mut().zip(z.data()).zip(post.data()) {
            *d *= act.derivative(zv, av);
        }
        let (g, grad_in) = params.layers[i].affine_backward(&trace.inputs[i], &delta)?;
        grads.push(g);
        upstream = grad_in;
        post = trace.inputs[i].clone();
    }
    grads.reverse();
    Ok(Backward {
        grads: MlpGradients { layers: grads },
        input_grad: upstream,
    })
}

impl MlpGradients {
    pub fn add_assign(&mut self, other: &MlpGradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weight.data_mut().iter_mut().zip(b.weight.data()) {
                *x += y;
            }
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += y;
            }
        }
    }
}

fn layer_tensors(layers: &[Layer]) -> Vec<&[f64]> {
    layers
        .iter()
        .flat_map(|l| [l.weight.data(), l.bias.as_slice()])
        .collect()
}

fn layer_tensors_mut(layers: &mut [Layer]) -> Vec<&mut [f64]> {
    layers
        .iter_mut()
        .flat_map(|l| [l.weight.data_mut(), l.bias.as_mut_slice()])
        .collect()
}

impl Parameters for MlpParams {
    fn tensors(&self) -> Vec<&[f64]> {
        layer_tensors(&self.layers)
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        layer_tensors_mut(&mut self.layers)
    }
}

impl Parameters for MlpGradients {
    fn tensors(&self) -> Vec<&[f64]> {
        layer_tensors(&self.layers)
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        layer_tensors_mut(&mut self.layers)
    }
}

impl Parameters for Layer {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![self.weight.data(), self.bias.as_slice()]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.weight.data_mut(), self.bias.as_mut_slice()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::test_support::{random_batch, relative_error};

    /// Per-example forward written without matrices.
    fn naive_forward(params: &MlpParams, x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        for (i, layer) in params.layers.iter().enumerate() {
            let mut next = Vec::new();
            for o in 0..layer.output_dim() {
                let mut z = layer.bias[o];
                for (j, &aj) in a.iter().enumerate() {
                    z += layer.weight[(o, j)] * aj;
                }
                let last = i + 1 == params.layers.len();
                next.push(match (last, params.output_activation) {
                    (false, _) => z.max(0.0),
                    (true, Activation::Sigmoid) => 1.0 / (1.0 + (-z).exp()),
                    (true, _) => z,
                });
            }
            a = next;
        }
        a
    }

    #[test]
    fn activations_propagate_nan() {
        for act in [Activation::Identity, Activation::Relu, Activation::Sigmoid] {
            assert!(act.apply(f64::NAN).is_nan(), "{act:?}");
        }
        assert_eq!(Activation::Relu.apply(-2.0), 0.0);
        assert_eq!(Activation::Relu.apply(-0.0), 0.0);
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let net = MlpParams::identity(2);
        let x = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        assert_eq!(mlp_forward(&net, &x).unwrap().output, x);
    }

    #[test]
    fn relu_hidden_layer_clips_negatives() {
        let net = MlpParams::new(
            vec![
                Layer::new(Matrix::identity(2), vec![0.0; 2]).unwrap(),
                Layer::new(Matrix::identity(2), vec![0.0; 2]).unwrap(),
            ],
            Activation::Relu,
            Activation::Identity,
        )
        .unwrap();
        let x = Matrix::from_rows(&[vec![-1.0, 3.0]]).unwrap();
        let trace = mlp_forward(&net, &x).unwrap();
        assert_eq!(trace.inputs[1].row(0), &[0.0, 3.0]);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let net = MlpParams::identity(3);
        let x = Matrix::zeros(4, 2);
        assert!(matches!(mlp_forward(&net, &x), Err(Error::Shape { .. })));
    }

    #[test]
    fn forward_matches_naive_oracle() {
        let mut rng = Rng::new(3);
        for output in [Activation::Identity, Activation::Sigmoid] {
            let net = MlpParams::glorot(&[5, 7, 6, 3], output, &mut rng).unwrap();
            let x = random_batch(&mut rng, 9, 5);
            let out = mlp_forward(&net, &x).unwrap().output;
            for (i, row) in x.iter_rows().enumerate() {
                let naive = naive_forward(&net, row);
                for (a, b) in out.row(i).iter().zip(&naive) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn zero_output_gradient_gives_zero_gradients() {
        let mut rng = Rng::new(4);
        let net = MlpParams::glorot(&[3, 4, 2], Activation::Identity, &mut rng).unwrap();
        let x = random_batch(&mut rng, 5, 3);
        let trace = mlp_forward(&net, &x).unwrap();
        let back = mlp_backward(&net, &trace, &Matrix::zeros(5, 2)).unwrap();
        assert!(back
            .grads
            .tensors()
            .iter()
            .all(|t| t.iter().all(|&g| g == 0.0)));
    }

    #[test]
    fn linear_least_squares_gradient_is_closed_form() {
        // L = (1/n) Σ ||x W - y||² for a single identity-output layer;
        // dL/dW (stored out×in) = 2/n (XW - Y)ᵀ X.
        let mut rng = Rng::new(5);
        let net = MlpParams::glorot(&[4, 3], Activation::Identity, &mut rng).unwrap();
        let x = random_batch(&mut rng, 6, 4);
        let y = random_batch(&mut rng, 6, 3);
        let trace = mlp_forward(&net, &x).unwrap();
        let n = 6.0;
        let mut resid = trace.output.clone();
        for (r, t) in resid.data_mut().iter_mut().zip(y.data()) {
            *r = 2.0 * (*r - t) / n;
        }
        let back = mlp_backward(&net, &trace, &resid).unwrap();
        for o in 0..3 {
            for j in 0..4 {
                let mut expect = 0.0;
                for i in 0..6 {
                    let pred: f64 = (0..4)
                        .map(|l| x[(i, l)] * net.layers[0].weight[(o, l)])
                        .sum();
                    expect += 2.0 / n * (pred - y[(i, o)]) * x[(i, j)];
                }
                assert!((back.grads.layers[0].weight[(o, j)] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn stale_trace_is_rejected() {
        let mut rng = Rng::new(6);
        let a = MlpParams::glorot(&[3, 4, 2], Activation::Identity, &mut rng).unwrap();
        let b = MlpParams::glorot(&[3, 5, 2], Activation::Identity, &mut rng).unwrap();
        let trace = mlp_forward(&a, &random_batch(&mut rng, 2, 3)).unwrap();
        assert!(mlp_backward(&b, &trace, &Matrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        // Loss = Σ c_ij · out_ij with random c, so dL/dout = c.
        let mut rng = Rng::new(7);
        for (case, output) in [Activation::Identity, Activation::Sigmoid]
            .into_iter()
            .enumerate()
        {
            let mut net = MlpParams::glorot(&[4, 6, 5, 2], output, &mut rng).unwrap();
            // Nonzero biases: with zero biases a fully dead input row puts the
            // next pre-activation exactly on the ReLU kink.
            for l in &mut net.layers {
                l.bias.iter_mut().for_each(|b| *b = 0.3 * rng.normal());
            }
            let x = random_batch(&mut rng, 7, 4);
            let c = random_batch(&mut rng, 7, 2);
            let loss = |net: &MlpParams| -> f64 {
                let out = net.predict(&x).unwrap();
                out.data().iter().zip(c.data()).map(|(a, b)| a * b).sum()
            };
            let trace = mlp_forward(&net, &x).unwrap();
            let back = mlp_backward(&net, &trace, &c).unwrap();
            let analytic: Vec<f64> = back.grads.tensors().concat();
            let h = 1e-5;
            let mut idx = 0;
            for t in 0..net.tensors().len() {
                for e in 0..net.tensors()[t].len() {
                    let orig = net.tensors()[t][e];
                    net.tensors_mut()[t][e] = orig + h;
                    let up = loss(&net);
                    net.tensors_mut()[t][e] = orig - h;
                    let down = loss(&net);
                    net.tensors_mut()[t][e] = orig;
                    let fd = (up - down) / (2.0 * h);
                    let err = relative_error(analytic[idx], fd);
                    assert!(
                        err < 1e-4,
                        "case {case} tensor {t} entry {e}: {} vs {fd}",
                        analytic[idx]
                    );
                    idx += 1;
                }
            }
        }
    }
}
