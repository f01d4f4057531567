//! Two-level Q-mix machinery: per-agent value networks combined by a
//! monotone mixer, their target copies, TD updates, epsilon-greedy
//! resolution choice and the replay buffer.
//!
//! Both levels share [`QMixHead`]. The high level has one agent per IRS
//! emitting `|B|` values; the low level has one scalar agent per IRS plus
//! the BS agent.

use std::collections::VecDeque;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{soft_update, MixerShape, Mlp, MlpShape, MonotonicMixer, OptimizerConfig, Trainable};

// ============================================================================
// Exploration
// ============================================================================

/// Linear anneal from `start` to `end` over `anneal_steps`, then constant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub anneal_steps: u64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self {
            start: 0.2,
            end: 0.02,
            anneal_steps: 1,
        }
    }
}

impl EpsilonSchedule {
    pub fn value(&self, step: u64) -> f64 {
        if step >= self.anneal_steps || self.anneal_steps == 0 {
            return self.end;
        }
        let f = step as f64 / self.anneal_steps as f64;
        self.start + (self.end - self.start) * f
    }
}

/// Index of the largest value; ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}

/// Epsilon-greedy over the head output. Resolutions are ascending, so the
/// lowest-index tie rule picks the cheapest resolution.
pub fn select_resolution<R: Rng + ?Sized>(q_values: &[f64], epsilon: f64, rng: &mut R) -> Result<usize> {
    if q_values.is_empty() {
        return Err(Error::InvalidDimension("empty resolution set".into()));
    }
    if rng.random::<f64>() < epsilon {
        Ok(rng.random_range(0..q_values.len()))
    } else {
        Ok(argmax(q_values))
    }
}

// ============================================================================
// Replay buffer
// ============================================================================

/// FIFO ring with uniform sampling without replacement.
#[derive(Clone, Debug)]
pub struct ReplayBuffer<T> {
    capacity: usize,
    items: VecDeque<T>,
}

impl<T> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("replay capacity must be >= 1".into()));
        }
        Ok(Self {
            capacity,
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
        })
    }

    pub fn push(&mut self, item: T) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(item);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&self, i: usize) -> Option<&T> {
        self.items.get(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.items.iter()
    }

    /// `batch` distinct positions, oldest = 0.
    pub fn sample_indices<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Vec<usize>> {
        if batch == 0 {
            return Err(Error::EmptyBatch);
        }
        if self.items.len() < batch {
            return Err(Error::Domain(format!(
                "buffer holds {} items, batch needs {batch}",
                self.items.len()
            )));
        }
        Ok(index::sample(rng, self.items.len(), batch).into_vec())
    }

    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Vec<&T>> {
        Ok(self
            .sample_indices(batch, rng)?
            .into_iter()
            .map(|i| &self.items[i])
            .collect())
    }
}

// ============================================================================
// Q-mix head
// ============================================================================

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum TargetSync {
    /// Copy every `period` learn steps.
    Hard { period: u64 },
    /// Polyak update with weight `eta` after every learn step.
    Soft { eta: f64 },
}

impl Default for TargetSync {
    fn default() -> Self {
        TargetSync::Hard { period: 200 }
    }
}

/// One training example for a head.
#[derive(Clone, Debug, PartialEq)]
pub struct MixSample {
    /// Input of each agent.
    pub inputs: Vec<Vec<f64>>,
    /// Output index of each agent whose value enters the mixer.
    pub chosen: Vec<usize>,
    pub aux: Vec<f64>,
    /// TD target `y`.
    pub target: f64,
}

/// Gradients of the mean squared TD error.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadGradients {
    pub loss: f64,
    pub agents: Vec<Vec<f64>>,
    pub mixer: Vec<f64>,
}

/// Agent networks plus mixer, each with a target copy.
#[derive(Clone, Debug)]
pub struct QMixHead {
    pub agents: Vec<Trainable<Mlp>>,
    pub mixer: Trainable<MonotonicMixer>,
    pub target_agents: Vec<Mlp>,
    pub target_mixer: MonotonicMixer,
    pub sync: TargetSync,
    pub learn_steps: u64,
    pub syncs: u64,
}

impl QMixHead {
    pub fn new<R: Rng + ?Sized>(
        agent_shapes: Vec<MlpShape>,
        mixer_shape: MixerShape,
        optimizer: OptimizerConfig,
        sync: TargetSync,
        rng: &mut R,
    ) -> Result<Self> {
        if agent_shapes.len() != mixer_shape.num_agents {
            return Err(Error::DimensionMismatch(format!(
                "{} agents for a mixer over {}",
                agent_shapes.len(),
                mixer_shape.num_agents
            )));
        }
        let agents: Vec<Trainable<Mlp>> = agent_shapes
            .into_iter()
            .map(|s| Trainable::new(Mlp::new(s, rng), optimizer))
            .collect();
        let mixer = Trainable::new(MonotonicMixer::new(mixer_shape, rng), optimizer);
        Ok(Self {
            target_agents: agents.iter().map(|a| a.net.clone()).collect(),
            target_mixer: mixer.net.clone(),
            agents,
            mixer,
            sync,
            learn_steps: 0,
            syncs: 0,
        })
    }

    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn agent_values(&self, agent: usize, input: &[f64]) -> Result<Vec<f64>> {
        self.agents[agent].net.forward(input)
    }

    pub fn target_agent_values(&self, agent: usize, input: &[f64]) -> Result<Vec<f64>> {
        self.target_agents[agent].forward(input)
    }

    pub fn mix(&self, q: &[f64], aux: &[f64]) -> Result<f64> {
        self.mixer.net.mix(q, aux)
    }

    pub fn target_mix(&self, q: &[f64], aux: &[f64]) -> Result<f64> {
        self.target_mixer.mix(q, aux)
    }

    /// `Q_tot` of the evaluated networks on one sample.
    pub fn q_total(&self, sample: &MixSample) -> Result<f64> {
        let q = self.chosen_values(sample)?;
        self.mix(&q, &sample.aux)
    }

    fn chosen_values(&self, sample: &MixSample) -> Result<Vec<f64>> {
        self.check_sample(sample)?;
        sample
            .inputs
            .iter()
            .zip(&sample.chosen)
            .enumerate()
            .map(|(i, (x, &c))| Ok(self.agent_values(i, x)?[c]))
            .collect()
    }

    fn check_sample(&self, sample: &MixSample) -> Result<()> {
        if sample.inputs.len() != self.num_agents() || sample.chosen.len() != self.num_agents() {
            return Err(Error::DimensionMismatch("sample agent count".into()));
        }
        for (i, &c) in sample.chosen.iter().enumerate() {
            let out = self.agents[i].net.shape.output_len();
            if c >= out {
                return Err(Error::OutOfRange {
                    index: c as u64,
                    cardinality: out as u64,
                });
            }
        }
        Ok(())
    }

    /// Mean squared TD error and its parameter gradients.
    pub fn td_gradients(&self, batch: &[MixSample]) -> Result<HeadGradients> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let mut grads = HeadGradients {
            loss: 0.0,
            agents: self.agents.iter().map(|a| a.net.zero_grad()).collect(),
            mixer: vec![0.0; self.mixer.net.params.len()],
        };
        let scale = 1.0 / batch.len() as f64;
        for sample in batch {
            self.check_sample(sample)?;
            let tapes: Vec<_> = sample
                .inputs
                .iter()
                .enumerate()
                .map(|(i, x)| self.agents[i].net.forward_tape(x))
                .collect::<Result<_>>()?;
            let q: Vec<f64> = tapes.iter().zip(&sample.chosen).map(|(t, &c)| t.output()[c]).collect();
            let mix = self.mixer.net.forward(&q, &sample.aux)?;
            let err = mix.q_tot - sample.target;
            grads.loss += scale * err * err;
            let (dq, _) = self.mixer.net.backward(&mix, 2.0 * scale * err, &mut grads.mixer)?;
            for (i, tape) in tapes.iter().enumerate() {
                let net = &self.agents[i].net;
                let mut up = vec![0.0; net.shape.output_len()];
                up[sample.chosen[i]] = dq[i];
                net.backward(tape, &up, &mut grads.agents[i])?;
            }
        }
        if !grads.loss.is_finite() {
            return Err(Error::NonFinite("TD loss".into()));
        }
        Ok(grads)
    }

    /// One optimizer step on the batch; returns the pre-update loss.
    /// Target networks are synchronised according to [`TargetSync`].
    pub fn td_update(&mut self, batch: &[MixSample]) -> Result<f64> {
        let g = self.td_gradients(batch)?;
        for (agent, grad) in self.agents.iter_mut().zip(&g.agents) {
            agent.apply(grad)?;
        }
        self.mixer.apply(&g.mixer)?;
        self.learn_steps += 1;
        match self.sync {
            TargetSync::Hard { period } => {
                if period > 0 && self.learn_steps % period == 0 {
                    self.sync_targets(1.0);
                }
            }
            TargetSync::Soft { eta } => self.sync_targets(eta),
        }
        Ok(g.loss)
    }

    /// `target <- eta * eval + (1 - eta) * target`; `eta = 1` is a hard copy.
    pub fn sync_targets(&mut self, eta: f64) {
        for (t, a) in self.target_agents.iter_mut().zip(&self.agents) {
            soft_update(t, &a.net, eta);
        }
        soft_update(&mut self.target_mixer, &self.mixer.net, eta);
        self.syncs += 1;
    }

    /// `dQ_i / d input` for agent `i`'s output `chosen`.
    pub fn agent_input_gradient(&self, agent: usize, input: &[f64], chosen: usize) -> Result<(f64, Vec<f64>)> {
        let net = &self.agents[agent].net;
        let tape = net.forward_tape(input)?;
        let mut up = vec![0.0; net.shape.output_len()];
        up[chosen] = 1.0;
        let mut scratch = net.zero_grad();
        let gx = net.backward(&tape, &up, &mut scratch)?;
        Ok((tape.output()[chosen], gx))
    }

    pub fn num_weights(&self) -> usize {
        self.agents.iter().map(|a| a.net.shape.num_weights()).sum::<usize>() + self.mixer.net.shape.num_weights()
    }
}

/// One value network with a target copy, trained without a mixer.
#[derive(Clone, Debug)]
pub struct Critic {
    pub net: Trainable<Mlp>,
    pub target: Mlp,
    pub sync: TargetSync,
    pub learn_steps: u64,
}

impl Critic {
    pub fn new<R: Rng + ?Sized>(shape: MlpShape, optimizer: OptimizerConfig, sync: TargetSync, rng: &mut R) -> Self {
        let net = Mlp::new(shape, rng);
        Self {
            target: net.clone(),
            net: Trainable::new(net, optimizer),
            sync,
            learn_steps: 0,
        }
    }

    pub fn values(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.net.net.forward(input)
    }

    pub fn target_values(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.target.forward(input)
    }

    /// Mean squared error of output `chosen` against `target` per sample.
    pub fn td_gradients(&self, batch: &[(Vec<f64>, usize, f64)]) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let scale = 1.0 / batch.len() as f64;
        let mut grad = self.net.net.zero_grad();
        let mut loss = 0.0;
        for (x, c, y) in batch {
            let tape = self.net.net.forward_tape(x)?;
            let out = tape.output();
            if *c >= out.len() {
                return Err(Error::OutOfRange {
                    index: *c as u64,
                    cardinality: out.len() as u64,
                });
            }
            let err = out[*c] - y;
            loss += scale * err * err;
            let mut up = vec![0.0; out.len()];
            up[*c] = 2.0 * scale * err;
            self.net.net.backward(&tape, &up, &mut grad)?;
        }
        if !loss.is_finite() {
            return Err(Error::NonFinite("critic loss".into()));
        }
        Ok((loss, grad))
    }

    pub fn td_update(&mut self, batch: &[(Vec<f64>, usize, f64)]) -> Result<f64> {
        let (loss, g) = self.td_gradients(batch)?;
        self.net.apply(&g)?;
        self.learn_steps += 1;
        match self.sync {
            TargetSync::Hard { period } => {
                if period > 0 && self.learn_steps % period == 0 {
                    soft_update(&mut self.target, &self.net.net, 1.0);
                }
            }
            TargetSync::Soft { eta } => soft_update(&mut self.target, &self.net.net, eta),
        }
        Ok(loss)
    }

    /// `(Q, dQ / d input)` for output `chosen`.
    pub fn input_gradient(&self, input: &[f64], chosen: usize) -> Result<(f64, Vec<f64>)> {
        let net = &self.net.net;
        let tape = net.forward_tape(input)?;
        let mut up = vec![0.0; net.shape.output_len()];
        up[chosen] = 1.0;
        let mut scratch = net.zero_grad();
        let gx = net.backward(&tape, &up, &mut scratch)?;
        Ok((tape.output()[chosen], gx))
    }
}

/// Per-agent argmax of each agent's target outputs, then target mix.
///
/// Valid as the joint max because the mixer is monotone in each input and
/// `aux` does not depend on the chosen indices.
pub fn decomposed_max(head: &QMixHead, inputs: &[Vec<f64>], aux: &[f64]) -> Result<(Vec<usize>, f64)> {
    let mut chosen = Vec::with_capacity(inputs.len());
    let mut q = Vec::with_capacity(inputs.len());
    for (i, x) in inputs.iter().enumerate() {
        let v = head.target_agent_values(i, x)?;
        let a = argmax(&v);
        chosen.push(a);
        q.push(v[a]);
    }
    let total = head.target_mix(&q, aux)?;
    Ok((chosen, total))
}

/// Exhaustive max of the target mix over every joint choice.
pub fn joint_max(head: &QMixHead, inputs: &[Vec<f64>], aux: &[f64]) -> Result<(Vec<usize>, f64)> {
    let values: Vec<Vec<f64>> = inputs
        .iter()
        .enumerate()
        .map(|(i, x)| head.target_agent_values(i, x))
        .collect::<Result<_>>()?;
    let sizes: Vec<usize> = values.iter().map(Vec::len).collect();
    let total: usize = sizes.iter().product();
    let mut best = (vec![0; sizes.len()], f64::NEG_INFINITY);
    for flat in 0..total {
        let mut rest = flat;
        let choice: Vec<usize> = sizes
            .iter()
            .map(|&s| {
                let c = rest % s;
                rest /= s;
                c
            })
            .collect();
        let q: Vec<f64> = choice.iter().enumerate().map(|(i, &c)| values[i][c]).collect();
        let v = head.target_mix(&q, aux)?;
        if v > best.1 {
            best = (choice, v);
        }
    }
    Ok(best)
}
