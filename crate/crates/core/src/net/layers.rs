use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{ParameterSet, Tensor};
use crate::rng::Stream;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

/// Fully connected layer `y = act(x W + b)` with `W: [inputs, outputs]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dense {
    pub name: String,
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
}

impl Dense {
    pub fn new(name: impl Into<String>, inputs: usize, outputs: usize, activation: Activation) -> Self {
        Self { name: name.into(), inputs, outputs, activation }
    }

    pub fn weight_name(&self) -> String {
        format!("{}.weight", self.name)
    }

    pub fn bias_name(&self) -> String {
        format!("{}.bias", self.name)
    }
}

/// A stack of dense layers. Parameters live in a [`ParameterSet`] under
/// `<layer>.weight` / `<layer>.bias`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mlp {
    layers: Vec<Dense>,
}

/// Activations saved by [`Mlp::forward`] for the backward pass.
#[derive(Debug, Clone, Default)]
pub struct MlpTape {
    /// Input to each layer.
    inputs: Vec<Tensor>,
    /// Post-activation output of each layer.
    outputs: Vec<Tensor>,
}

impl MlpTape {
    pub fn output(&self) -> Option<&Tensor> {
        self.outputs.last()
    }
}

impl Mlp {
    pub fn new(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(crate::error::contract("network needs at least one layer"));
        }
        for pair in layers.windows(2) {
            if pair[0].outputs != pair[1].inputs {
                return Err(crate::error::contract(format!(
                    "layer `{}` outputs {} but `{}` expects {}",
                    pair[0].name, pair[0].outputs, pair[1].name, pair[1].inputs
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    /// Adds this network's parameters to `params`: weights drawn from
    /// U(-1/√fan_in, 1/√fan_in), biases zero.
    pub fn init(&self, params: &mut ParameterSet, rng: &mut Stream) -> Result<()> {
        for layer in &self.layers {
            let bound = 1.0 / libm::sqrt(layer.inputs as f64);
            let weights = (0..layer.inputs * layer.outputs).map(|_| (2.0 * rng.uniform() - 1.0) * bound).collect();
            params.insert(layer.weight_name(), Tensor::matrix(layer.inputs, layer.outputs, weights)?)?;
            params.insert(layer.bias_name(), Tensor::zeros(vec![layer.outputs]))?;
        }
        Ok(())
    }

    fn layer_params<'p>(&self, layer: &Dense, params: &'p ParameterSet) -> Result<(&'p Tensor, &'p Tensor)> {
        let w = params.get(&layer.weight_name())?;
        let b = params.get(&layer.bias_name())?;
        if w.shape() != [layer.inputs, layer.outputs] || b.shape() != [layer.outputs] {
            return Err(crate::error::contract(format!("layer `{}`: parameter shapes do not match", layer.name)));
        }
        Ok((w, b))
    }

    fn check_input(&self, layer: &Dense, input: &Tensor) -> Result<()> {
        if input.shape().len() != 2 || input.cols() != layer.inputs {
            return Err(crate::error::contract(format!(
                "layer `{}` expects [batch, {}] input, got {:?}",
                layer.name,
                layer.inputs,
                input.shape()
            )));
        }
        Ok(())
    }

    /// Forward pass without saving activations.
    pub fn infer(&self, params: &ParameterSet, input: &Tensor) -> Result<Tensor> {
        let mut x = input.clone();
        for layer in &self.layers {
            self.check_input(layer, &x)?;
            let (w, b) = self.layer_params(layer, params)?;
            x = dense_forward(&x, w, b, layer.activation);
        }
        Ok(x)
    }

    pub fn forward(&self, params: &ParameterSet, input: &Tensor) -> Result<(Tensor, MlpTape)> {
        let mut tape = MlpTape::default();
        let mut x = input.clone();
        for layer in &self.layers {
            self.check_input(layer, &x)?;
            let (w, b) = self.layer_params(layer, params)?;
            let y = dense_forward(&x, w, b, layer.activation);
            tape.inputs.push(x);
            tape.outputs.push(y.clone());
            x = y;
        }
        Ok((x, tape))
    }

    /// Accumulates parameter gradients into `grads` given the gradient of a
    /// scalar loss with respect to the network output. Returns the gradient
    /// with respect to the input when `need_input_grad` is set.
    pub fn backward(
        &self,
        params: &ParameterSet,
        tape: &MlpTape,
        grad_output: Tensor,
        grads: &mut ParameterSet,
        need_input_grad: bool,
    ) -> Result<Option<Tensor>> {
        if tape.inputs.len() != self.layers.len() {
            return Err(crate::error::contract("backward called without a matching forward pass"));
        }
        let out = &tape.outputs[self.layers.len() - 1];
        if out.shape() != grad_output.shape() {
            return Err(crate::error::contract(format!(
                "output gradient shape {:?} does not match output {:?}",
                grad_output.shape(),
                out.shape()
            )));
        }
        let mut grad = grad_output;
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let (w, _) = self.layer_params(layer, params)?;
            if layer.activation == Activation::Relu {
                for (g, &y) in grad.data_mut().iter_mut().zip(tape.outputs[i].data()) {
                    if y <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            let x = &tape.inputs[i];
            dense_param_grads(x, &grad, grads.get_mut(&layer.weight_name())?.data_mut());
            let db = grads.get_mut(&layer.bias_name())?.data_mut();
            for r in 0..grad.rows() {
                for (d, g) in db.iter_mut().zip(grad.row(r)) {
                    *d += g;
                }
            }
            if i > 0 || need_input_grad {
                grad = dense_input_grad(&grad, w);
            }
        }
        Ok(need_input_grad.then_some(grad))
    }
}

fn dense_forward(x: &Tensor, w: &Tensor, b: &Tensor, activation: Activation) -> Tensor {
    let (rows, inputs, outputs) = (x.rows(), w.rows(), w.cols());
    let mut out = Vec::with_capacity(rows * outputs);
    let wd = w.data();
    for r in 0..rows {
        let start = out.len();
        out.extend_from_slice(b.data());
        let y = &mut out[start..];
        for (i, &xi) in x.row(r).iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (yj, &wij) in y.iter_mut().zip(&wd[i * outputs..(i + 1) * outputs]) {
                *yj += xi * wij;
            }
        }
        if activation == Activation::Relu {
            y.iter_mut().for_each(|v| *v = v.max(0.0));
        }
    }
    debug_assert_eq!(inputs, x.cols());
    Tensor::matrix(rows, outputs, out).expect("sizes agree")
}

/// dW += xᵀ · grad.
fn dense_param_grads(x: &Tensor, grad: &Tensor, dw: &mut [f64]) {
    let outputs = grad.cols();
    for r in 0..x.rows() {
        let g = grad.row(r);
        for (i, &xi) in x.row(r).iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (d, &gj) in dw[i * outputs..(i + 1) * outputs].iter_mut().zip(g) {
                *d += xi * gj;
            }
        }
    }
}

/// grad · Wᵀ.
fn dense_input_grad(grad: &Tensor, w: &Tensor) -> Tensor {
    let (rows, inputs, outputs) = (grad.rows(), w.rows(), w.cols());
    let wd = w.data();
    let mut out = vec![0.0; rows * inputs];
    for r in 0..rows {
        let g = grad.row(r);
        if g.iter().all(|&v| v == 0.0) {
            continue;
        }
        for i in 0..inputs {
            out[r * inputs + i] = wd[i * outputs..(i + 1) * outputs].iter().zip(g).map(|(a, b)| a * b).sum();
        }
    }
    Tensor::matrix(rows, inputs, out).expect("sizes agree")
}
