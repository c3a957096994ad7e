//! Dense multi-layer perceptrons with exact reverse-mode gradients.
//!
//! Each layer computes `y = act(W x + b)` with `W` stored row-major as
//! `out x in`. Weights are initialised uniformly in `±1/sqrt(fan_in)` and
//! biases start at zero.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::matrix::{gemm, Matrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
    Tanh,
    Linear,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Linear => z,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `y`.
    #[inline]
    fn derivative(self, z: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Linear => 1.0,
        }
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Tanh => 1,
            Activation::Linear => 2,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Tanh),
            2 => Some(Activation::Linear),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    in_dim: usize,
    out_dim: usize,
    /// Row-major `out_dim x in_dim`.
    weights: Vec<f64>,
    bias: Vec<f64>,
    activation: Activation,
}

impl Layer {
    pub fn new(
        in_dim: usize,
        out_dim: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
        activation: Activation,
    ) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::invalid("zero-width layer"));
        }
        if weights.len() != in_dim * out_dim || bias.len() != out_dim {
            return Err(Error::shape(format!(
                "layer {out_dim}x{in_dim} got {} weights and {} biases",
                weights.len(),
                bias.len()
            )));
        }
        if !weights.iter().chain(&bias).all(|v| v.is_finite()) {
            return Err(Error::NonFinite("layer parameters"));
        }
        Ok(Self {
            in_dim,
            out_dim,
            weights,
            bias,
            activation,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }
}

/// Parameters of a dense network: a chain of layers.
#[derive(Debug, Clone, PartialEq)]
pub struct NetParams {
    layers: Vec<Layer>,
}

/// Per-parameter gradients shaped like [`NetParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradBundle {
    pub layers: Vec<LayerGrad>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Intermediate values kept from a batched forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// Input to each layer; `inputs[0]` is the network input.
    inputs: Vec<Matrix>,
    pre: Vec<Matrix>,
    output: Matrix,
}

impl ForwardTrace {
    pub fn output(&self) -> &Matrix {
        &self.output
    }
}

impl NetParams {
    /// Builds a network with `sizes.len() - 1` layers. Deterministic in `seed`.
    pub fn init(sizes: &[usize], activations: &[Activation], seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::init_with_rng(sizes, activations, &mut rng)
    }

    pub fn init_with_rng<R: Rng + ?Sized>(
        sizes: &[usize],
        activations: &[Activation],
        rng: &mut R,
    ) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::invalid("need at least input and output sizes"));
        }
        if activations.len() != sizes.len() - 1 {
            return Err(Error::invalid(format!(
                "{} activations for {} layers",
                activations.len(),
                sizes.len() - 1
            )));
        }
        if sizes.contains(&0) {
            return Err(Error::invalid("zero-width layer"));
        }
        let layers = sizes
            .windows(2)
            .zip(activations)
            .map(|(w, &act)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = 1.0 / (fan_in as f64).sqrt();
                let weights = (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-limit..limit))
                    .collect();
                Layer::new(fan_in, fan_out, weights, vec![0.0; fan_out], act)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("network needs at least one layer"));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::shape(format!(
                    "layer dims do not chain: {} -> {}",
                    pair[0].out_dim, pair[1].in_dim
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn same_shape(&self, other: &NetParams) -> bool {
        self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| {
                a.in_dim == b.in_dim && a.out_dim == b.out_dim && a.activation == b.activation
            })
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    /// Single-sample forward pass.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.in_dim() {
            return Err(Error::shape(format!(
                "input length {} != network input {}",
                input.len(),
                self.in_dim()
            )));
        }
        let mut x = input.to_vec();
        for layer in &self.layers {
            x = layer_forward(layer, &x).1;
        }
        Ok(x)
    }

    /// Gradient of `output_grad · f(input)` with respect to every parameter.
    pub fn backprop(&self, input: &[f64], output_grad: &[f64]) -> Result<GradBundle> {
        Ok(self.backprop_with_input(input, output_grad)?.0)
    }

    /// As [`NetParams::backprop`], also returning the gradient w.r.t. the input.
    pub fn backprop_with_input(
        &self,
        input: &[f64],
        output_grad: &[f64],
    ) -> Result<(GradBundle, Vec<f64>)> {
        if input.len() != self.in_dim() {
            return Err(Error::shape("input length does not match network"));
        }
        if output_grad.len() != self.out_dim() {
            return Err(Error::shape(
                "output gradient length does not match network",
            ));
        }
        if !input.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("backprop input"));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pres = Vec::with_capacity(self.layers.len());
        let mut outs = Vec::with_capacity(self.layers.len());
        let mut x = input.to_vec();
        for layer in &self.layers {
            let (z, y) = layer_forward(layer, &x);
            inputs.push(std::mem::replace(&mut x, y.clone()));
            pres.push(z);
            outs.push(y);
        }

        let mut grads = GradBundle::zeros_like(self);
        let mut delta = output_grad.to_vec();
        for (li, layer) in self.layers.iter().enumerate().rev() {
            for (d, (&z, &y)) in delta.iter_mut().zip(pres[li].iter().zip(&outs[li])) {
                *d *= layer.activation.derivative(z, y);
            }
            let g = &mut grads.layers[li];
            let xin = &inputs[li];
            for o in 0..layer.out_dim {
                g.bias[o] = delta[o];
                let row = &mut g.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (w, &xi) in row.iter_mut().zip(xin) {
                    *w = delta[o] * xi;
                }
            }
            let mut next = vec![0.0; layer.in_dim];
            for o in 0..layer.out_dim {
                let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (n, &w) in next.iter_mut().zip(row) {
                    *n += w * delta[o];
                }
            }
            delta = next;
        }
        Ok((grads, delta))
    }

    /// Batched forward pass; rows of `input` are samples.
    pub fn forward_batch(&self, input: &Matrix) -> Result<ForwardTrace> {
        if input.cols() != self.in_dim() {
            return Err(Error::shape(format!(
                "batch width {} != network input {}",
                input.cols(),
                self.in_dim()
            )));
        }
        let b = input.rows();
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut x = input.clone();
        for layer in &self.layers {
            let mut z = Matrix::zeros(b, layer.out_dim);
            for i in 0..b {
                z.row_mut(i).copy_from_slice(&layer.bias);
            }
            // z = x * W^T + z
            gemm(
                b,
                layer.in_dim,
                layer.out_dim,
                1.0,
                x.data(),
                layer.in_dim,
                1,
                &layer.weights,
                1,
                layer.in_dim,
                1.0,
                z.data_mut(),
                layer.out_dim,
                1,
            );
            let mut y = z.clone();
            if layer.activation != Activation::Linear {
                for v in y.data_mut() {
                    *v = layer.activation.apply(*v);
                }
            }
            inputs.push(std::mem::replace(&mut x, y));
            pre.push(z);
        }
        Ok(ForwardTrace {
            inputs,
            pre,
            output: x,
        })
    }

    /// Batched reverse pass. Parameter gradients are summed over the batch;
    /// the input gradient is returned per sample when requested.
    pub fn backward_batch(
        &self,
        trace: &ForwardTrace,
        output_grad: &Matrix,
        want_input_grad: bool,
    ) -> Result<(GradBundle, Option<Matrix>)> {
        let b = trace.output.rows();
        if output_grad.rows() != b || output_grad.cols() != self.out_dim() {
            return Err(Error::shape("output gradient does not match batch output"));
        }
        let mut grads = GradBundle::zeros_like(self);
        let mut delta = output_grad.clone();
        for (li, layer) in self.layers.iter().enumerate().rev() {
            let out = if li + 1 == self.layers.len() {
                &trace.output
            } else {
                &trace.inputs[li + 1]
            };
            if layer.activation != Activation::Linear {
                let z = trace.pre[li].data();
                for ((d, &zi), &yi) in delta.data_mut().iter_mut().zip(z).zip(out.data()) {
                    *d *= layer.activation.derivative(zi, yi);
                }
            }
            let g = &mut grads.layers[li];
            // dW = delta^T * x
            gemm(
                layer.out_dim,
                b,
                layer.in_dim,
                1.0,
                delta.data(),
                1,
                layer.out_dim,
                trace.inputs[li].data(),
                layer.in_dim,
                1,
                0.0,
                &mut g.weights,
                layer.in_dim,
                1,
            );
            for i in 0..b {
                for (gb, &d) in g.bias.iter_mut().zip(delta.row(i)) {
                    *gb += d;
                }
            }
            if li > 0 || want_input_grad {
                let mut next = Matrix::zeros(b, layer.in_dim);
                // dx = delta * W
                gemm(
                    b,
                    layer.out_dim,
                    layer.in_dim,
                    1.0,
                    delta.data(),
                    layer.out_dim,
                    1,
                    &layer.weights,
                    layer.in_dim,
                    1,
                    0.0,
                    next.data_mut(),
                    layer.in_dim,
                    1,
                );
                delta = next;
            }
        }
        Ok((grads, want_input_grad.then_some(delta)))
    }

    /// Input gradient only, skipping parameter gradients.
    pub fn input_grad_batch(&self, trace: &ForwardTrace, output_grad: &Matrix) -> Result<Matrix> {
        let b = trace.output.rows();
        if output_grad.rows() != b || output_grad.cols() != self.out_dim() {
            return Err(Error::shape("output gradient does not match batch output"));
        }
        let mut delta = output_grad.clone();
        for (li, layer) in self.layers.iter().enumerate().rev() {
            let out = if li + 1 == self.layers.len() {
                &trace.output
            } else {
                &trace.inputs[li + 1]
            };
            if layer.activation != Activation::Linear {
                let z = trace.pre[li].data();
                for ((d, &zi), &yi) in delta.data_mut().iter_mut().zip(z).zip(out.data()) {
                    *d *= layer.activation.derivative(zi, yi);
                }
            }
            let mut next = Matrix::zeros(b, layer.in_dim);
            gemm(
                b,
                layer.out_dim,
                layer.in_dim,
                1.0,
                delta.data(),
                layer.out_dim,
                1,
                &layer.weights,
                layer.in_dim,
                1,
                0.0,
                next.data_mut(),
                layer.in_dim,
                1,
            );
            delta = next;
        }
        Ok(delta)
    }
}

fn layer_forward(layer: &Layer, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut z = layer.bias.clone();
    for (o, zo) in z.iter_mut().enumerate() {
        let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
        *zo += row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>();
    }
    let y = z.iter().map(|&v| layer.activation.apply(v)).collect();
    (z, y)
}

impl GradBundle {
    pub fn zeros_like(params: &NetParams) -> Self {
        Self {
            layers: params
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weights: vec![0.0; l.weights.len()],
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    pub fn matches(&self, params: &NetParams) -> bool {
        self.layers.len() == params.layers.len()
            && self
                .layers
                .iter()
                .zip(&params.layers)
                .all(|(g, l)| g.weights.len() == l.weights.len() && g.bias.len() == l.bias.len())
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            for v in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                *v *= s;
            }
        }
    }

    pub fn add_assign(&mut self, other: &GradBundle) -> Result<()> {
        if self.layers.len() != other.layers.len() {
            return Err(Error::shape("gradient bundles differ"));
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            if a.weights.len() != b.weights.len() || a.bias.len() != b.bias.len() {
                return Err(Error::shape("gradient bundles differ"));
            }
            for (x, y) in a.weights.iter_mut().zip(&b.weights) {
                *x += y;
            }
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += y;
            }
        }
        Ok(())
    }
}

/// `target <- (1 - tau) * target + tau * online`, elementwise.
pub fn polyak_update(target: &mut NetParams, online: &NetParams, tau: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::invalid(format!("polyak tau {tau} outside [0, 1]")));
    }
    if !target.same_shape(online) {
        return Err(Error::shape(
            "polyak update between differently shaped nets",
        ));
    }
    for (t, o) in target.layers.iter_mut().zip(&online.layers) {
        for (tv, ov) in t
            .weights
            .iter_mut()
            .chain(t.bias.iter_mut())
            .zip(o.weights.iter().chain(&o.bias))
        {
            *tv = (1.0 - tau) * *tv + tau * ov;
        }
    }
    Ok(())
}
