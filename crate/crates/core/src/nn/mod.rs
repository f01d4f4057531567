//! Dense networks with manual reverse mode, optimizers, the monotone mixing
//! network and checkpoint serialization.

pub mod checkpoint;
pub mod count;
pub mod mixer;
pub mod mlp;
pub mod optim;

use serde::{Deserialize, Serialize};

pub use checkpoint::Checkpoint;
pub use mixer::{MixTape, MixerShape, MonotonicMixer};
pub use mlp::{Activation, Mlp, MlpShape, Tape};
pub use optim::{clip_grad_norm, Optimizer, OptimizerConfig, OptimizerKind};

use crate::error::{Error, Result};

/// Widths and activations shared by all learners.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub agent_hidden: Vec<usize>,
    pub policy_hidden: Vec<usize>,
    pub mixer_hidden: usize,
    pub hidden_activation: Activation,
    pub mixer_activation: Activation,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            agent_hidden: vec![64, 64],
            policy_hidden: vec![64, 64],
            mixer_hidden: 32,
            hidden_activation: Activation::Relu,
            mixer_activation: Activation::Elu,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = |h: &[usize]| !h.is_empty() && h.iter().all(|&w| w > 0);
        if !ok(&self.agent_hidden) || !ok(&self.policy_hidden) || self.mixer_hidden == 0 {
            return Err(Error::Config("every network needs >= 1 hidden layer of width >= 1".into()));
        }
        Ok(())
    }

    pub fn agent(&self, input: usize, output: usize) -> Result<MlpShape> {
        MlpShape::stack(input, &self.agent_hidden, output, self.hidden_activation, Activation::Identity)
    }

    pub fn policy(&self, input: usize, output: usize, out_act: Activation) -> Result<MlpShape> {
        MlpShape::stack(input, &self.policy_hidden, output, self.hidden_activation, out_act)
    }

    pub fn mixer(&self, agents: usize, aux: usize) -> Result<MixerShape> {
        MixerShape::new(agents, aux, self.mixer_hidden, self.mixer_activation)
    }
}

/// Anything that owns a flat trainable parameter vector.
pub trait Params {
    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];
}

impl Params for Mlp {
    fn params(&self) -> &[f64] {
        &self.params
    }
    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }
}

impl Params for MonotonicMixer {
    fn params(&self) -> &[f64] {
        &self.params
    }
    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }
}

/// `target <- eta * source + (1 - eta) * target`.
pub fn soft_update<P: Params>(target: &mut P, source: &P, eta: f64) {
    if eta == 1.0 {
        target.params_mut().copy_from_slice(source.params());
        return;
    }
    for (t, s) in target.params_mut().iter_mut().zip(source.params()) {
        *t = eta * s + (1.0 - eta) * *t;
    }
}

/// A network bundled with its optimizer state.
#[derive(Clone, Debug)]
pub struct Trainable<P> {
    pub net: P,
    pub opt: Optimizer,
}

impl<P: Params> Trainable<P> {
    pub fn new(net: P, config: OptimizerConfig) -> Self {
        let n = net.params().len();
        Self {
            net,
            opt: Optimizer::new(config, n),
        }
    }

    /// Gradient-descent step on the accumulated gradient.
    pub fn apply(&mut self, grads: &[f64]) -> Result<()> {
        self.opt.step(self.net.params_mut(), grads)
    }
}
