// Copyright 2026 The quditcal Authors
// SPDX-License-Identifier: Apache-2.0

//! Dense ReLU networks with a hand-written backward pass, Adam and Polyak
//! averaging. Batches are row-major: one sample per row.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::error::{Error, Result};

/// One affine layer, `y = x·W + b` with `W` shaped `in × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: Array2::zeros((fan_in, fan_out)),
            bias: Array1::zeros(fan_out),
        }
    }

    fn len(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

/// Multilayer perceptron: affine → ReLU for hidden layers, affine output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    layers: Vec<Dense>,
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input of every layer; entries past the first are post-ReLU.
    inputs: Vec<Array2<f64>>,
}

/// Parameter gradients, shaped like the network.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<Dense>,
}

impl MlpGrads {
    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weight *= factor;
            l.bias *= factor;
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        flatten(&self.layers)
    }
}

fn flatten(layers: &[Dense]) -> Vec<f64> {
    let mut out = Vec::with_capacity(layers.iter().map(Dense::len).sum());
    for l in layers {
        out.extend(l.weight.iter());
        out.extend(l.bias.iter());
    }
    out
}

impl Mlp {
    /// Uniform `±1/√fan_in` initialization of weights and biases.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidDimension(format!("bad layer sizes {sizes:?}")));
        }
        let layers = sizes
            .windows(2)
            .map(|w| {
                let bound = 1.0 / (w[0] as f64).sqrt();
                let mut layer = Dense::zeros(w[0], w[1]);
                layer.weight.mapv_inplace(|_| rng.random_range(-bound..bound));
                layer.bias.mapv_inplace(|_| rng.random_range(-bound..bound));
                layer
            })
            .collect();
        Ok(Self {
            sizes: sizes.to_vec(),
            layers,
        })
    }

    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidDimension(format!("bad layer sizes {sizes:?}")));
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            layers: sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("at least two sizes")
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Dense::len).sum()
    }

    pub fn zero_output_layer(&mut self) {
        let last = self.layers.last_mut().expect("at least one layer");
        last.weight.fill(0.0);
        last.bias.fill(0.0);
    }

    pub fn forward(&self, input: ArrayView2<f64>) -> Result<(Array2<f64>, ForwardCache)> {
        if input.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: input.ncols(),
            });
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut x = input.to_owned();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut y = x.dot(&layer.weight);
            y += &layer.bias;
            if i < last {
                y.mapv_inplace(|v| v.max(0.0));
            }
            inputs.push(x);
            x = y;
        }
        Ok((x, ForwardCache { inputs }))
    }

    /// Forward pass without keeping activations.
    pub fn predict(&self, input: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward(input)?.0)
    }

    pub fn predict_one(&self, input: &[f64]) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, input.len()), input)
            .map_err(|e| Error::InvalidDimension(e.to_string()))?;
        Ok(self.predict(view)?.into_raw_vec_and_offset().0)
    }

    /// Gradients of `Σ output_grad ∘ output` with respect to every parameter
    /// and to the input. The ReLU derivative at zero is taken as zero.
    pub fn backward(&self, cache: &ForwardCache, output_grad: &Array2<f64>) -> (MlpGrads, Array2<f64>) {
        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        let mut delta = output_grad.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let x = &cache.inputs[i];
            let weight = x.t().dot(&delta);
            let bias = delta.sum_axis(Axis(0));
            let mut upstream = delta.dot(&layer.weight.t());
            if i > 0 {
                // x is the post-ReLU activation of the previous layer
                ndarray::Zip::from(&mut upstream)
                    .and(x)
                    .for_each(|d, &a| {
                        if a <= 0.0 {
                            *d = 0.0;
                        }
                    });
            }
            grads.push(Dense { weight, bias });
            delta = upstream;
        }
        grads.reverse();
        (MlpGrads { layers: grads }, delta)
    }

    /// `θ ← τ·θ_online + (1−τ)·θ`.
    pub fn soft_update(&mut self, online: &Mlp, tau: f64) {
        for (t, o) in self.layers.iter_mut().zip(&online.layers) {
            ndarray::Zip::from(&mut t.weight)
                .and(&o.weight)
                .for_each(|a, &b| *a = tau * b + (1.0 - tau) * *a);
            ndarray::Zip::from(&mut t.bias)
                .and(&o.bias)
                .for_each(|a, &b| *a = tau * b + (1.0 - tau) * *a);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    /// Parameters in checkpoint order: per layer, the `in × out` weight in
    /// row-major order followed by the bias.
    pub fn to_flat(&self) -> Vec<f64> {
        flatten(&self.layers)
    }

    pub fn load_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameters, found {}",
                self.num_params(),
                flat.len()
            )));
        }
        let mut pos = 0;
        for l in &mut self.layers {
            for v in l.weight.iter_mut().chain(l.bias.iter_mut()) {
                *v = flat[pos];
                pos += 1;
            }
        }
        Ok(())
    }
}

/// Free-function form of [`Mlp::soft_update`].
pub fn soft_update(target: &mut Mlp, online: &Mlp, tau: f64) {
    target.soft_update(online, tau);
}

/// Bias-corrected Adam over a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(num_params: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
        }
    }

    pub fn for_mlp(net: &Mlp, lr: f64) -> Self {
        Self::new(net.num_params(), lr)
    }

    /// One descent step on `params` given the loss gradient `grads`.
    pub fn step_slice(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::DimensionMismatch {
                expected: self.m.len(),
                actual: params.len().min(grads.len()),
            });
        }
        self.step += 1;
        let (c1, c2) = self.corrections();
        for i in 0..params.len() {
            params[i] -= self.delta(i, grads[i], c1, c2);
        }
        Ok(())
    }

    pub fn step_mlp(&mut self, net: &mut Mlp, grads: &MlpGrads) -> Result<()> {
        if net.num_params() != self.m.len() {
            return Err(Error::DimensionMismatch {
                expected: self.m.len(),
                actual: net.num_params(),
            });
        }
        self.step += 1;
        let (c1, c2) = self.corrections();
        let mut i = 0;
        for (layer, grad) in net.layers.iter_mut().zip(&grads.layers) {
            for (p, g) in layer.weight.iter_mut().zip(grad.weight.iter()) {
                *p -= self.delta(i, *g, c1, c2);
                i += 1;
            }
            for (p, g) in layer.bias.iter_mut().zip(grad.bias.iter()) {
                *p -= self.delta(i, *g, c1, c2);
                i += 1;
            }
        }
        Ok(())
    }

    fn corrections(&self) -> (f64, f64) {
        let t = self.step as i32;
        (1.0 - self.beta1.powi(t), 1.0 - self.beta2.powi(t))
    }

    #[inline]
    fn delta(&mut self, i: usize, g: f64, c1: f64, c2: f64) -> f64 {
        self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
        self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
        let m_hat = self.m[i] / c1;
        let v_hat = self.v[i] / c2;
        self.lr * m_hat / (v_hat.sqrt() + self.eps)
    }
}

/// Free-function form of [`AdamState::step_mlp`].
pub fn adam_step(net: &mut Mlp, grads: &MlpGrads, state: &mut AdamState) -> Result<()> {
    state.step_mlp(net, grads)
}
