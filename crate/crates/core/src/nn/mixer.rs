use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{Activation, MlpShape, Tape};
use crate::error::{Error, Result};

/// Monotone mixing network.
///
/// `Q_tot = elu(q^T |W1(s)| + b1(s)) . |w2(s)| + b2(s)` where `W1, b1, w2`
/// are linear hypernetworks of the auxiliary input `s` and `b2` is a
/// two-layer one. `|.|` keeps every `dQ_tot/dq_i >= 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixerShape {
    pub num_agents: usize,
    pub aux_len: usize,
    pub hidden: usize,
    pub activation: Activation,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MonotonicMixer {
    pub shape: MixerShape,
    pub params: Vec<f64>,
}

/// Cached values of one mixing pass.
#[derive(Clone, Debug)]
pub struct MixTape {
    q: Vec<f64>,
    w1_raw: Vec<f64>,
    w2_raw: Vec<f64>,
    pre: Vec<f64>,
    hidden: Vec<f64>,
    tapes: [Tape; 4],
    pub q_tot: f64,
}

/// Index of each hypernetwork in the flat parameter vector.
const W1: usize = 0;
const B1: usize = 1;
const W2: usize = 2;
const B2: usize = 3;

impl MixerShape {
    pub fn new(num_agents: usize, aux_len: usize, hidden: usize, activation: Activation) -> Result<Self> {
        if num_agents == 0 || aux_len == 0 || hidden == 0 {
            return Err(Error::InvalidDimension("mixer sizes must be >= 1".into()));
        }
        Ok(Self {
            num_agents,
            aux_len,
            hidden,
            activation,
        })
    }

    pub fn hypernets(&self) -> [MlpShape; 4] {
        let (d, h, n) = (self.aux_len, self.hidden, self.num_agents);
        let lin = |out| MlpShape::new(vec![d, out], Activation::Identity, Activation::Identity).expect("sizes >= 1");
        [
            lin(n * h),
            lin(h),
            lin(h),
            MlpShape::new(vec![d, h, 1], Activation::Relu, Activation::Identity).expect("sizes >= 1"),
        ]
    }

    fn offsets(&self) -> [usize; 5] {
        let nets = self.hypernets();
        let mut o = [0; 5];
        for i in 0..4 {
            o[i + 1] = o[i] + nets[i].num_params();
        }
        o
    }

    pub fn num_params(&self) -> usize {
        self.offsets()[4]
    }

    pub fn num_weights(&self) -> usize {
        self.hypernets().iter().map(MlpShape::num_weights).sum()
    }

    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.hypernets().iter().flat_map(|s| s.init(rng)).collect()
    }

    pub fn forward(&self, params: &[f64], q: &[f64], aux: &[f64]) -> Result<MixTape> {
        if params.len() != self.num_params() {
            return Err(Error::DimensionMismatch("mixer parameter count".into()));
        }
        if q.len() != self.num_agents || aux.len() != self.aux_len {
            return Err(Error::DimensionMismatch(format!(
                "mixer got {} q-values and aux of length {}, expected {} and {}",
                q.len(),
                aux.len(),
                self.num_agents,
                self.aux_len
            )));
        }
        let nets = self.hypernets();
        let o = self.offsets();
        let tape = |i: usize| nets[i].forward_tape(&params[o[i]..o[i + 1]], aux);
        let tapes = [tape(W1)?, tape(B1)?, tape(W2)?, tape(B2)?];
        let h = self.hidden;
        let w1_raw = tapes[W1].output().to_vec();
        let b1 = tapes[B1].output();
        let w2_raw = tapes[W2].output().to_vec();
        let b2 = tapes[B2].output()[0];
        let pre: Vec<f64> = (0..h)
            .map(|j| b1[j] + q.iter().enumerate().map(|(i, qi)| qi * w1_raw[i * h + j].abs()).sum::<f64>())
            .collect();
        let hidden: Vec<f64> = pre.iter().map(|&z| self.activation.apply(z)).collect();
        let q_tot = hidden.iter().zip(&w2_raw).map(|(a, w)| a * w.abs()).sum::<f64>() + b2;
        Ok(MixTape {
            q: q.to_vec(),
            w1_raw,
            w2_raw,
            pre,
            hidden,
            tapes,
            q_tot,
        })
    }

    /// Adds `g * dQ_tot/dparams` into `grad_params`; returns
    /// `(g * dQ_tot/dq, g * dQ_tot/daux)`.
    pub fn backward(&self, params: &[f64], tape: &MixTape, g: f64, grad_params: &mut [f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if grad_params.len() != self.num_params() {
            return Err(Error::DimensionMismatch("mixer gradient buffer".into()));
        }
        let nets = self.hypernets();
        let o = self.offsets();
        let (h, n) = (self.hidden, self.num_agents);
        let sign = |x: f64| if x > 0.0 { 1.0 } else if x < 0.0 { -1.0 } else { 0.0 };

        let d_b2 = [g];
        let d_w2: Vec<f64> = tape.hidden.iter().zip(&tape.w2_raw).map(|(a, w)| g * a * sign(*w)).collect();
        let d_pre: Vec<f64> = (0..h)
            .map(|j| g * tape.w2_raw[j].abs() * self.activation.derivative(tape.pre[j], tape.hidden[j]))
            .collect();
        let d_b1 = d_pre.clone();
        let mut d_w1 = vec![0.0; n * h];
        let mut d_q = vec![0.0; n];
        for i in 0..n {
            for j in 0..h {
                let w = tape.w1_raw[i * h + j];
                d_w1[i * h + j] = d_pre[j] * tape.q[i] * sign(w);
                d_q[i] += d_pre[j] * w.abs();
            }
        }
        let mut d_aux = vec![0.0; self.aux_len];
        for (i, upstream) in [(W1, &d_w1[..]), (B1, &d_b1[..]), (W2, &d_w2[..]), (B2, &d_b2[..])] {
            let gx = nets[i].backward(&params[o[i]..o[i + 1]], &tape.tapes[i], upstream, &mut grad_params[o[i]..o[i + 1]])?;
            d_aux.iter_mut().zip(gx).for_each(|(a, b)| *a += b);
        }
        Ok((d_q, d_aux))
    }
}

impl MonotonicMixer {
    pub fn new<R: Rng + ?Sized>(shape: MixerShape, rng: &mut R) -> Self {
        let params = shape.init(rng);
        Self { shape, params }
    }

    pub fn from_params(shape: MixerShape, params: Vec<f64>) -> Result<Self> {
        if params.len() != shape.num_params() {
            return Err(Error::DimensionMismatch("mixer parameter count".into()));
        }
        Ok(Self { shape, params })
    }

    pub fn mix(&self, q: &[f64], aux: &[f64]) -> Result<f64> {
        Ok(self.shape.forward(&self.params, q, aux)?.q_tot)
    }

    pub fn forward(&self, q: &[f64], aux: &[f64]) -> Result<MixTape> {
        self.shape.forward(&self.params, q, aux)
    }

    pub fn backward(&self, tape: &MixTape, g: f64, grad_params: &mut [f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.shape.backward(&self.params, tape, g, grad_params)
    }

    /// Parameters that make the mixer return `sum_i q_i` (hidden width 1,
    /// identity activation): `|W1| = 1`, `|w2| = 1`, zero biases.
    pub fn additive(num_agents: usize, aux_len: usize) -> Result<Self> {
        let shape = MixerShape::new(num_agents, aux_len, 1, Activation::Identity)?;
        let nets = shape.hypernets();
        let mut params = Vec::with_capacity(shape.num_params());
        for (i, net) in nets.iter().enumerate() {
            let mut p = vec![0.0; net.num_params()];
            if i == W1 || i == W2 {
                let w = net.num_weights();
                p[w..].iter_mut().for_each(|b| *b = 1.0);
            }
            params.extend(p);
        }
        Self::from_params(shape, params)
    }
}
