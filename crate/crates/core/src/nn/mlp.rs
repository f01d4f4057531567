use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    Sigmoid,
    /// ELU with `alpha = 1`.
    Elu,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Elu => {
                if z > 0.0 {
                    z
                } else {
                    z.exp_m1()
                }
            }
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    pub fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => (z > 0.0) as u8 as f64,
            Activation::Tanh => 1.0 - a * a,
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Elu => {
                if z > 0.0 {
                    1.0
                } else {
                    a + 1.0
                }
            }
        }
    }
}

/// Layer sizes and activations of a fully connected network.
///
/// Flat parameter layout, layer by layer: weights row-major
/// (`out x in`), then biases.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpShape {
    pub sizes: Vec<usize>,
    pub hidden: Activation,
    pub output: Activation,
}

/// Cached pre- and post-activations of one forward pass.
#[derive(Clone, Debug)]
pub struct Tape {
    /// `a_0 = x, a_1, ..., a_L`.
    activations: Vec<Vec<f64>>,
    /// `z_1, ..., z_L`.
    pre: Vec<Vec<f64>>,
}

impl Tape {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("tape has the input layer")
    }
}

impl MlpShape {
    pub fn new(sizes: Vec<usize>, hidden: Activation, output: Activation) -> Result<Self> {
        if sizes.len() < 2 || sizes.iter().any(|&s| s == 0) {
            return Err(Error::InvalidDimension(format!("bad layer sizes {sizes:?}")));
        }
        Ok(Self {
            sizes,
            hidden,
            output,
        })
    }

    /// `input -> hidden... -> output` with the given activations.
    pub fn stack(input: usize, hidden: &[usize], output: usize, act: Activation, out_act: Activation) -> Result<Self> {
        let mut sizes = Vec::with_capacity(hidden.len() + 2);
        sizes.push(input);
        sizes.extend_from_slice(hidden);
        sizes.push(output);
        Self::new(sizes, act, out_act)
    }

    pub fn input_len(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_len(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    /// Weights only (biases excluded).
    pub fn num_weights(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1]).sum()
    }

    pub fn num_params(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.num_layers() {
            self.output
        } else {
            self.hidden
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.num_params());
        for w in self.sizes.windows(2) {
            let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
            p.extend((0..w[0] * w[1]).map(|_| rng.random_range(-limit..limit)));
            p.extend(std::iter::repeat_n(0.0, w[1]));
        }
        p
    }

    fn check(&self, params: &[f64], x: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::DimensionMismatch(format!(
                "{} parameters, expected {}",
                params.len(),
                self.num_params()
            )));
        }
        if x.len() != self.input_len() {
            return Err(Error::DimensionMismatch(format!(
                "input of length {}, expected {}",
                x.len(),
                self.input_len()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, params: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        self.check(params, x)?;
        let mut a = x.to_vec();
        let mut offset = 0;
        for (layer, w) in self.sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &params[offset..offset + n_in * n_out];
            let bias = &params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            offset += n_in * n_out + n_out;
            let act = self.activation(layer);
            a = weights
                .chunks_exact(n_in)
                .zip(bias)
                .map(|(row, b)| act.apply(row.iter().zip(&a).map(|(w, x)| w * x).sum::<f64>() + b))
                .collect();
        }
        Ok(a)
    }

    pub fn forward_tape(&self, params: &[f64], x: &[f64]) -> Result<Tape> {
        self.check(params, x)?;
        let mut activations = vec![x.to_vec()];
        let mut pre = Vec::with_capacity(self.num_layers());
        let mut offset = 0;
        for (layer, w) in self.sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &params[offset..offset + n_in * n_out];
            let bias = &params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            offset += n_in * n_out + n_out;
            let a = activations.last().unwrap();
            let z: Vec<f64> = weights
                .chunks_exact(n_in)
                .zip(bias)
                .map(|(row, b)| row.iter().zip(a).map(|(w, x)| w * x).sum::<f64>() + b)
                .collect();
            let act = self.activation(layer);
            activations.push(z.iter().map(|&v| act.apply(v)).collect());
            pre.push(z);
        }
        Ok(Tape { activations, pre })
    }

    /// Reverse pass. Adds parameter gradients into `grad_params` and
    /// returns the gradient with respect to the input.
    pub fn backward(&self, params: &[f64], tape: &Tape, grad_out: &[f64], grad_params: &mut [f64]) -> Result<Vec<f64>> {
        if grad_out.len() != self.output_len() || grad_params.len() != self.num_params() {
            return Err(Error::DimensionMismatch("backward buffer sizes".into()));
        }
        let offsets: Vec<usize> = self
            .sizes
            .windows(2)
            .scan(0, |o, w| {
                let start = *o;
                *o += w[0] * w[1] + w[1];
                Some(start)
            })
            .collect();
        let mut delta = grad_out.to_vec();
        for layer in (0..self.num_layers()).rev() {
            let (n_in, n_out) = (self.sizes[layer], self.sizes[layer + 1]);
            let act = self.activation(layer);
            let z = &tape.pre[layer];
            let a_out = &tape.activations[layer + 1];
            for j in 0..n_out {
                delta[j] *= act.derivative(z[j], a_out[j]);
            }
            let a_in = &tape.activations[layer];
            let off = offsets[layer];
            let (gw, rest) = grad_params[off..].split_at_mut(n_in * n_out);
            for (j, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                for (g, x) in gw[j * n_in..(j + 1) * n_in].iter_mut().zip(a_in) {
                    *g += d * x;
                }
                rest[j] += d;
            }
            let weights = &params[off..off + n_in * n_out];
            let mut next = vec![0.0; n_in];
            for (row, d) in weights.chunks_exact(n_in).zip(&delta) {
                if *d == 0.0 {
                    continue;
                }
                for (n, w) in next.iter_mut().zip(row) {
                    *n += d * w;
                }
            }
            delta = next;
        }
        Ok(delta)
    }
}

/// A network together with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub shape: MlpShape,
    pub params: Vec<f64>,
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(shape: MlpShape, rng: &mut R) -> Self {
        let params = shape.init(rng);
        Self { shape, params }
    }

    pub fn from_params(shape: MlpShape, params: Vec<f64>) -> Result<Self> {
        if params.len() != shape.num_params() {
            return Err(Error::DimensionMismatch("parameter count".into()));
        }
        Ok(Self { shape, params })
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.shape.forward(&self.params, x)
    }

    pub fn forward_tape(&self, x: &[f64]) -> Result<Tape> {
        self.shape.forward_tape(&self.params, x)
    }

    pub fn backward(&self, tape: &Tape, grad_out: &[f64], grad_params: &mut [f64]) -> Result<Vec<f64>> {
        self.shape.backward(&self.params, tape, grad_out, grad_params)
    }

    pub fn zero_grad(&self) -> Vec<f64> {
        vec![0.0; self.params.len()]
    }
}
