//! Feedforward networks with rectifier hidden layers and hand-written backprop.
//!
//! Inputs are batched row-wise: a `B x in` matrix maps to a `B x out` matrix.
//! Every output unit carries its own activation so that a single network can
//! expose several heads (the actor's mean and sigma heads share one trunk).

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    Sigmoid,
    /// `scale * sigmoid(z)`, mapping onto `[0, scale]`.
    ScaledSigmoid(f64),
    /// `softplus(z) + floor`.
    Softplus { floor: f64 },
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z
    } else {
        z.exp().ln_1p()
    }
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Sigmoid => sigmoid(z),
            Activation::ScaledSigmoid(c) => c * sigmoid(z),
            Activation::Softplus { floor } => softplus(z) + floor,
        }
    }

    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Sigmoid => {
                let s = sigmoid(z);
                s * (1.0 - s)
            }
            Activation::ScaledSigmoid(c) => {
                let s = sigmoid(z);
                c * s * (1.0 - s)
            }
            Activation::Softplus { .. } => sigmoid(z),
        }
    }

    /// Pre-activation that produces `y`, where the activation is invertible.
    pub fn inverse(self, y: f64) -> f64 {
        match self {
            Activation::Identity => y,
            Activation::Sigmoid => (y / (1.0 - y)).ln(),
            Activation::ScaledSigmoid(c) => {
                let t = y / c;
                (t / (1.0 - t)).ln()
            }
            Activation::Softplus { floor } => {
                let v = y - floor;
                v.exp_m1().ln()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `in x out`
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    fn zeros(input: usize, output: usize) -> Self {
        Self {
            weights: Array2::zeros((input, output)),
            bias: Array1::zeros(output),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layer_dims: Vec<usize>,
    layers: Vec<Dense>,
    output_activations: Vec<Activation>,
}

/// Intermediate values retained by [`Mlp::forward_cached`] for backprop.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each dense layer (index 0 is the network input).
    inputs: Vec<Array2<f64>>,
    /// Pre-activation of each dense layer.
    pre: Vec<Array2<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<Dense>,
}

impl MlpGrads {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| Dense::zeros(l.weights.nrows(), l.weights.ncols()))
                .collect(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weights *= factor;
            l.bias *= factor;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|g| g.is_finite())
    }
}

impl Mlp {
    /// Uniform fan-in initialization, `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn new<R: Rng + ?Sized>(
        layer_dims: &[usize],
        output_activations: Vec<Activation>,
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::zeros(layer_dims, output_activations)?;
        for layer in &mut net.layers {
            let bound = 1.0 / (layer.weights.nrows() as f64).sqrt();
            layer
                .weights
                .mapv_inplace(|_| rng.random_range(-bound..bound));
            layer.bias.mapv_inplace(|_| rng.random_range(-bound..bound));
        }
        Ok(net)
    }

    pub fn zeros(layer_dims: &[usize], output_activations: Vec<Activation>) -> Result<Self> {
        if layer_dims.len() < 2 || layer_dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidConfig(format!(
                "layer dims must have at least two positive entries, got {layer_dims:?}"
            )));
        }
        let out = *layer_dims.last().unwrap();
        if output_activations.len() != out {
            return Err(Error::DimensionMismatch {
                context: "output activations",
                expected: out,
                got: output_activations.len(),
            });
        }
        let layers = layer_dims
            .windows(2)
            .map(|w| Dense::zeros(w[0], w[1]))
            .collect();
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            layers,
            output_activations,
        })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn output_activations(&self) -> &[Activation] {
        &self.output_activations
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn is_finite(&self) -> bool {
        self.params().all(|p| p.is_finite())
    }

    fn check_input(&self, cols: usize) -> Result<()> {
        if cols != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "mlp input",
                expected: self.input_dim(),
                got: cols,
            });
        }
        Ok(())
    }

    fn activate_output(&self, mut z: Array2<f64>) -> Array2<f64> {
        for mut row in z.rows_mut() {
            for (v, act) in row.iter_mut().zip(&self.output_activations) {
                *v = act.apply(*v);
            }
        }
        z
    }

    pub fn forward(&self, input: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(input.ncols())?;
        let last = self.layers.len() - 1;
        let mut h = input.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = h.dot(&layer.weights);
            z += &layer.bias;
            if i < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            h = z;
        }
        Ok(self.activate_output(h))
    }

    /// Single-example forward pass.
    pub fn forward_one(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input.len())?;
        let last = self.layers.len() - 1;
        let mut h: Array1<f64> = ArrayView1::from(input).to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = h.dot(&layer.weights);
            z += &layer.bias;
            if i < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            h = z;
        }
        Ok(h
            .iter()
            .zip(&self.output_activations)
            .map(|(&z, act)| act.apply(z))
            .collect())
    }

    pub fn forward_cached(&self, input: ArrayView2<f64>) -> Result<(Array2<f64>, ForwardCache)> {
        self.check_input(input.ncols())?;
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = input.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = h.dot(&layer.weights);
            z += &layer.bias;
            inputs.push(h);
            h = if i < last { z.mapv(|v| v.max(0.0)) } else { z.clone() };
            pre.push(z);
        }
        Ok((self.activate_output(h), ForwardCache { inputs, pre }))
    }

    /// Exact gradients of `sum(upstream * output)` with respect to every
    /// parameter and to the input.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        upstream: ArrayView2<f64>,
    ) -> Result<(MlpGrads, Array2<f64>)> {
        let out_pre = cache.pre.last().expect("cache has at least one layer");
        if upstream.dim() != out_pre.dim() {
            return Err(Error::DimensionMismatch {
                context: "mlp upstream gradient",
                expected: out_pre.ncols(),
                got: upstream.ncols(),
            });
        }
        let mut delta = upstream.to_owned();
        for (mut row, pre_row) in delta.rows_mut().into_iter().zip(out_pre.rows()) {
            for ((d, &z), act) in row.iter_mut().zip(pre_row).zip(&self.output_activations) {
                *d *= act.derivative(z);
            }
        }

        let mut grads = Vec::with_capacity(self.layers.len());
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let dw = cache.inputs[i].t().dot(&delta);
            let db = delta.sum_axis(Axis(0));
            grads.push(Dense {
                weights: dw,
                bias: db,
            });
            let mut dinput = delta.dot(&layer.weights.t());
            if i > 0 {
                ndarray::Zip::from(&mut dinput)
                    .and(&cache.pre[i - 1])
                    .for_each(|d, &z| {
                        if z <= 0.0 {
                            *d = 0.0;
                        }
                    });
            }
            delta = dinput;
        }
        grads.reverse();
        Ok((MlpGrads { layers: grads }, delta))
    }

    pub fn copy_from(&mut self, other: &Mlp) -> Result<()> {
        self.check_same_shape(other)?;
        self.layers.clone_from(&other.layers);
        Ok(())
    }

    pub fn check_same_shape(&self, other: &Mlp) -> Result<()> {
        if self.layer_dims != other.layer_dims {
            return Err(Error::DimensionMismatch {
                context: "mlp shape",
                expected: self.param_count(),
                got: other.param_count(),
            });
        }
        Ok(())
    }
}

/// Stack equally-sized rows into a `B x d` matrix.
pub fn stack_rows<'a, I>(rows: I, dim: usize) -> Array2<f64>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut data = Vec::new();
    let mut n = 0;
    for r in rows {
        debug_assert_eq!(r.len(), dim);
        data.extend_from_slice(r);
        n += 1;
    }
    Array2::from_shape_vec((n, dim), data).expect("rows have the declared width")
}
