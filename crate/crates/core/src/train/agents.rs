//! Learners behind a common [`Agent`] interface: MAQ-WP, MAQ-PG, independent
//! learners, MADDPG and the uniform random policy.

use rand::Rng;

use super::config::{Algorithm, RunConfig};
use crate::env::{HierarchicalAction, IrsAction};
use crate::error::{Error, Result};
use crate::maq::{argmax, select_resolution, Critic, MixSample, QMixHead, TargetSync};
use crate::mdp::{irs_action_features, DiscreteActionSpace, GlobalState, StateEncoder};
use crate::nn::count::{count_parameters, ActorFamily, ProblemSize};
use crate::nn::{soft_update, Activation, Checkpoint, Mlp, NetworkConfig, Params, Trainable};
use crate::policies::{map_proto, raw_to_beamformer, round_phase, BsPolicy, MappingEstimator, ProtoGaussianPolicy, WolpertingerPolicy};
use crate::rng::{standard_normal, SimRng};

/// Exploration settings for one decision.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActMode {
    pub epsilon: f64,
    /// Enables epsilon-greedy resolutions and actor noise.
    pub explore: bool,
}

impl ActMode {
    pub const GREEDY: ActMode = ActMode {
        epsilon: 0.0,
        explore: false,
    };
}

#[derive(Clone, Debug, PartialEq)]
pub struct Decision {
    pub action: HierarchicalAction,
    /// Continuous IRS outputs needed for learning (proto vectors or raw
    /// actor outputs); empty for agents that do not use them.
    pub irs_protos: Vec<Vec<f64>>,
}

/// Replay record. `reward` is already normalised.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: GlobalState,
    pub prev_resolutions: Vec<u32>,
    pub action: HierarchicalAction,
    pub irs_protos: Vec<Vec<f64>>,
    pub reward: f64,
    pub next_state: GlobalState,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LearnStats {
    pub high_loss: Option<f64>,
    pub low_loss: Option<f64>,
    pub estimator_loss: Option<f64>,
}

pub trait Agent {
    fn algorithm(&self) -> Algorithm;
    fn act(&self, state: &GlobalState, prev: &[u32], mode: ActMode, rng: &mut SimRng) -> Result<Decision>;
    fn learn(&mut self, batch: &[&Transition], rng: &mut SimRng) -> Result<LearnStats>;
    fn save(&self, ck: &mut Checkpoint) -> Result<()>;
    fn load(&mut self, ck: &Checkpoint) -> Result<()>;
    /// Weights (biases excluded) of every evaluated network.
    fn weight_count(&self) -> usize;
}

pub fn build_agent(cfg: &RunConfig, rng: &mut SimRng) -> Result<Box<dyn Agent>> {
    cfg.validate()?;
    let ctx = Ctx::new(cfg);
    Ok(match cfg.algorithm {
        Algorithm::MaqWp | Algorithm::MaqPg => Box::new(MaqAgent::new(ctx, cfg, rng)?),
        Algorithm::Il => Box::new(IlAgent::new(ctx, cfg, rng)?),
        Algorithm::Maddpg => Box::new(MaddpgAgent::new(ctx, cfg, rng)?),
        Algorithm::Random => Box::new(RandomAgent { ctx }),
    })
}

/// Problem sizes for the closed-form weight count of `cfg`.
pub fn problem_size(cfg: &RunConfig) -> ProblemSize {
    ProblemSize {
        num_irs: cfg.env.num_irs,
        num_users: cfg.env.num_users,
        num_elements: cfg.env.irs.num_elements,
        bs_antennas: cfg.env.bs_antennas,
        num_resolutions: cfg.env.irs.resolutions.len(),
        max_resolution: cfg.env.irs.max_resolution(),
    }
}

/// `(formula, constructed)` weight counts for a MAQ algorithm.
pub fn parameter_counts(cfg: &RunConfig) -> Result<(u64, u64)> {
    let family = match cfg.algorithm {
        Algorithm::MaqWp => ActorFamily::Wolpertinger,
        Algorithm::MaqPg => ActorFamily::ProtoGaussian,
        other => return Err(Error::Config(format!("parameter counts cover maq-wp and maq-pg, not {other}"))),
    };
    let formula = count_parameters(&cfg.network, problem_size(cfg), family)?.total;
    let agent = build_agent(cfg, &mut crate::rng::stream(cfg.seed, crate::rng::streams::AGENT_INIT))?;
    Ok((formula, agent.weight_count() as u64))
}

// ============================================================================
// Shared helpers
// ============================================================================

#[derive(Clone, Debug)]
struct Ctx {
    enc: StateEncoder,
    resolutions: Vec<u32>,
    gamma: f64,
    exact_low_max: u64,
    sync: TargetSync,
    noise: f64,
}

impl Ctx {
    fn new(cfg: &RunConfig) -> Self {
        Self {
            enc: StateEncoder::new(&cfg.env),
            resolutions: cfg.env.irs.resolutions.clone(),
            gamma: cfg.learning.gamma,
            exact_low_max: cfg.learning.exact_low_max,
            sync: cfg.learning.target_sync,
            noise: cfg.actor_noise_std,
        }
    }

    fn l(&self) -> usize {
        self.enc.num_irs
    }

    fn n(&self) -> usize {
        self.enc.num_elements
    }

    fn res_index(&self, b: u32) -> Result<usize> {
        self.resolutions
            .iter()
            .position(|&r| r == b)
            .ok_or_else(|| Error::Domain(format!("resolution {b} not configured")))
    }

    fn low_input(&self, s: &GlobalState, l: usize, b: u32, a: &IrsAction) -> Result<Vec<f64>> {
        let mut x = self.enc.agent_input(s, l, b)?;
        x.extend(irs_action_features(a));
        Ok(x)
    }

    fn bs_critic_input(&self, s: &GlobalState, features: &[f64]) -> Vec<f64> {
        let mut x = self.enc.bs_input(s);
        x.extend_from_slice(features);
        x
    }

    fn bs_shape(&self, net: &NetworkConfig) -> Result<crate::nn::MlpShape> {
        net.policy(self.enc.bs_input_len(), self.enc.bs_action_len(), Activation::Tanh)
    }
}

fn concat(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(a.len() + b.len());
    v.extend_from_slice(a);
    v.extend_from_slice(b);
    v
}

/// Weight applied to targets after `steps` learn steps, if any.
fn sync_weight(sync: TargetSync, steps: u64) -> Option<f64> {
    match sync {
        TargetSync::Hard { period } => (period > 0 && steps % period == 0).then_some(1.0),
        TargetSync::Soft { eta } => Some(eta),
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn load_into<P: Params>(ck: &Checkpoint, name: &str, net: &mut P) -> Result<()> {
    let p = ck.params(name, net.params().len())?;
    net.params_mut().copy_from_slice(&p);
    Ok(())
}

fn bs_policy(ctx: &Ctx, cfg: &RunConfig, rng: &mut SimRng) -> Result<BsPolicy> {
    BsPolicy::new(
        ctx.bs_shape(&cfg.network)?,
        cfg.env.bs_antennas,
        cfg.env.num_users,
        cfg.env.p_max_mw(),
        cfg.actor_noise_std,
        cfg.learning.policy_optimizer,
        rng,
    )
}

fn bs_target_features(ctx: &Ctx, target: &BsPolicy, s: &GlobalState, rng: &mut SimRng) -> Result<Vec<f64>> {
    let raw = target.raw(&ctx.enc.bs_input(s), false, rng)?;
    Ok(target.features(&raw))
}

// ============================================================================
// MAQ-WP and MAQ-PG
// ============================================================================

#[derive(Clone, Debug)]
enum IrsActors {
    Wp {
        eval: Vec<WolpertingerPolicy>,
        target: Vec<WolpertingerPolicy>,
    },
    Pg {
        eval: Vec<ProtoGaussianPolicy>,
        target: Vec<ProtoGaussianPolicy>,
        estimators: Vec<MappingEstimator>,
    },
}

#[derive(Clone, Debug)]
pub struct MaqAgent {
    ctx: Ctx,
    algorithm: Algorithm,
    pub high: QMixHead,
    pub low: QMixHead,
    irs: IrsActors,
    pub bs: BsPolicy,
    bs_target: BsPolicy,
    train_estimator: bool,
}

impl MaqAgent {
    fn new(ctx: Ctx, cfg: &RunConfig, rng: &mut SimRng) -> Result<Self> {
        let (l, n) = (ctx.l(), ctx.n());
        let net = &cfg.network;
        let enc = &ctx.enc;
        let lr = &cfg.learning;
        let high = QMixHead::new(
            (0..l).map(|_| net.agent(enc.agent_input_len(), ctx.resolutions.len())).collect::<Result<_>>()?,
            net.mixer(l, enc.high_mixer_aux_len())?,
            lr.high_optimizer,
            lr.target_sync,
            rng,
        )?;
        let mut low_shapes: Vec<_> = (0..l)
            .map(|_| net.agent(enc.agent_input_len() + enc.irs_action_len(), 1))
            .collect::<Result<_>>()?;
        low_shapes.push(net.agent(enc.bs_input_len() + enc.bs_action_len(), 1)?);
        let low = QMixHead::new(low_shapes, net.mixer(l + 1, enc.low_mixer_aux_len())?, lr.low_optimizer, lr.target_sync, rng)?;
        let irs = match cfg.algorithm {
            Algorithm::MaqWp => {
                let eval: Vec<_> = (0..l)
                    .map(|_| {
                        let shape = net.policy(enc.agent_input_len(), 2 * n, Activation::Identity)?;
                        WolpertingerPolicy::new(shape, n, cfg.wolpertinger, lr.policy_optimizer, rng)
                    })
                    .collect::<Result<_>>()?;
                IrsActors::Wp {
                    target: eval.clone(),
                    eval,
                }
            }
            _ => {
                let eval: Vec<_> = (0..l)
                    .map(|_| {
                        let shape = net.policy(enc.agent_input_len(), 4 * n, Activation::Identity)?;
                        ProtoGaussianPolicy::new(shape, n, cfg.proto_gaussian, lr.policy_optimizer, rng)
                    })
                    .collect::<Result<_>>()?;
                let bmax = cfg.env.irs.max_resolution();
                let estimators = (0..l)
                    .map(|_| {
                        let shape = MappingEstimator::shape(n, bmax, &net.policy_hidden, net.hidden_activation)?;
                        MappingEstimator::new(shape, n, bmax, lr.policy_optimizer, rng)
                    })
                    .collect::<Result<_>>()?;
                IrsActors::Pg {
                    target: eval.clone(),
                    eval,
                    estimators,
                }
            }
        };
        let bs = bs_policy(&ctx, cfg, rng)?;
        Ok(Self {
            algorithm: cfg.algorithm,
            high,
            low,
            irs,
            bs_target: bs.clone(),
            bs,
            train_estimator: cfg.learning.train_estimator,
            ctx,
        })
    }

    fn low_q(&self, l: usize, input: &[f64], target: bool) -> Result<f64> {
        let v = if target {
            self.low.target_agent_values(l, input)?
        } else {
            self.low.agent_values(l, input)?
        };
        Ok(v[0])
    }

    /// Greedy discrete action of IRS `l` under the target actor.
    fn target_irs_action(&self, s: &GlobalState, l: usize, b: u32, rng: &mut SimRng) -> Result<IrsAction> {
        let input = self.ctx.enc.agent_input(s, l, b)?;
        match &self.irs {
            IrsActors::Wp { target, .. } => target[l].select(&input, b, false, |a| self.low_q(l, &concat(&input, &irs_action_features(a)), true), rng),
            IrsActors::Pg { target, .. } => target[l].deterministic(&input, b),
        }
    }

    fn targets(&self, t: &Transition, rng: &mut SimRng) -> Result<(f64, f64)> {
        let ctx = &self.ctx;
        let (l_n, s2) = (ctx.l(), &t.next_state);
        let b = t.action.resolutions();
        let mut b_next = Vec::with_capacity(l_n);
        let mut q_high = Vec::with_capacity(l_n);
        for l in 0..l_n {
            let v = self.high.target_agent_values(l, &ctx.enc.agent_input(s2, l, b[l])?)?;
            let i = argmax(&v);
            b_next.push(ctx.resolutions[i]);
            q_high.push(v[i]);
        }
        let x_next: Vec<IrsAction> = (0..l_n)
            .map(|l| self.target_irs_action(s2, l, b_next[l], rng))
            .collect::<Result<_>>()?;
        let high = self.high.target_mix(&q_high, &ctx.enc.high_mixer_aux(s2, &x_next))?;

        let mut q_low = Vec::with_capacity(l_n + 1);
        for l in 0..l_n {
            let space = DiscreteActionSpace::new(b_next[l], ctx.n())?;
            let base = ctx.enc.agent_input(s2, l, b_next[l])?;
            let q = match space.cardinality() {
                Some(c) if c <= ctx.exact_low_max => {
                    let mut best = f64::NEG_INFINITY;
                    for a in space.iter()? {
                        best = best.max(self.low_q(l, &concat(&base, &irs_action_features(&a)), true)?);
                    }
                    best
                }
                _ => self.low_q(l, &concat(&base, &irs_action_features(&x_next[l])), true)?,
            };
            q_low.push(q);
        }
        let bs_feat = bs_target_features(ctx, &self.bs_target, s2, rng)?;
        q_low.push(self.low_q(l_n, &ctx.bs_critic_input(s2, &bs_feat), true)?);
        let low = self.low.target_mix(&q_low, &ctx.enc.low_mixer_aux(s2, &b_next))?;
        Ok((high, low))
    }

    fn sync_actor_targets(&mut self) {
        let Some(eta) = sync_weight(self.ctx.sync, self.low.learn_steps) else {
            return;
        };
        match &mut self.irs {
            IrsActors::Wp { eval, target } => {
                for (t, e) in target.iter_mut().zip(eval.iter()) {
                    soft_update(&mut t.actor.net, &e.actor.net, eta);
                }
            }
            IrsActors::Pg { eval, target, .. } => {
                for (t, e) in target.iter_mut().zip(eval.iter()) {
                    soft_update(&mut t.actor.net, &e.actor.net, eta);
                }
            }
        }
        soft_update(&mut self.bs_target.actor.net, &self.bs.actor.net, eta);
    }
}

impl Agent for MaqAgent {
    fn algorithm(&self) -> Algorithm {
        self.algorithm
    }

    fn act(&self, s: &GlobalState, prev: &[u32], mode: ActMode, rng: &mut SimRng) -> Result<Decision> {
        let ctx = &self.ctx;
        let eps = if mode.explore { mode.epsilon } else { 0.0 };
        let mut irs = Vec::with_capacity(ctx.l());
        let mut protos = Vec::new();
        for l in 0..ctx.l() {
            let q = self.high.agent_values(l, &ctx.enc.agent_input(s, l, prev[l])?)?;
            let b = ctx.resolutions[select_resolution(&q, eps, rng)?];
            let input = ctx.enc.agent_input(s, l, b)?;
            let a = match &self.irs {
                IrsActors::Wp { eval, .. } => {
                    eval[l].select(&input, b, mode.explore, |a| self.low_q(l, &concat(&input, &irs_action_features(a)), false), rng)?
                }
                IrsActors::Pg { eval, .. } => {
                    if mode.explore {
                        let smp = eval[l].sample(&input, b, rng)?;
                        protos.push(smp.e);
                        smp.action
                    } else {
                        let mean = eval[l].distribution(&input)?.0;
                        let a = map_proto(&mean, b)?;
                        protos.push(mean);
                        a
                    }
                }
            };
            irs.push(a);
        }
        let raw = self.bs.raw(&ctx.enc.bs_input(s), mode.explore, rng)?;
        Ok(Decision {
            action: HierarchicalAction {
                beamformer: self.bs.beamformer(&raw)?,
                irs,
            },
            irs_protos: protos,
        })
    }

    fn learn(&mut self, batch: &[&Transition], rng: &mut SimRng) -> Result<LearnStats> {
        let ctx = self.ctx.clone();
        let l_n = ctx.l();
        let mut high_batch = Vec::with_capacity(batch.len());
        let mut low_batch = Vec::with_capacity(batch.len());
        for t in batch {
            let (yh, yl) = self.targets(t, rng)?;
            let s = &t.state;
            let b = t.action.resolutions();
            high_batch.push(MixSample {
                inputs: (0..l_n).map(|l| ctx.enc.agent_input(s, l, t.prev_resolutions[l])).collect::<Result<_>>()?,
                chosen: b.iter().map(|&r| ctx.res_index(r)).collect::<Result<_>>()?,
                aux: ctx.enc.high_mixer_aux(s, &t.action.irs),
                target: t.reward + ctx.gamma * yh,
            });
            let mut inputs: Vec<Vec<f64>> = (0..l_n)
                .map(|l| ctx.low_input(s, l, b[l], &t.action.irs[l]))
                .collect::<Result<_>>()?;
            inputs.push(ctx.bs_critic_input(s, &ctx.enc.bs_action_features(&t.action.beamformer)));
            low_batch.push(MixSample {
                inputs,
                chosen: vec![0; l_n + 1],
                aux: ctx.enc.low_mixer_aux(s, &b),
                target: t.reward + ctx.gamma * yl,
            });
        }
        let high_loss = self.high.td_update(&high_batch)?;
        let low_loss = self.low.td_update(&low_batch)?;

        let mut estimator_loss = None;
        let low = &self.low;
        match &mut self.irs {
            IrsActors::Wp { eval, .. } => {
                for (l, actor) in eval.iter_mut().enumerate() {
                    let inputs: Vec<Vec<f64>> = batch
                        .iter()
                        .map(|t| ctx.enc.agent_input(&t.state, l, t.action.irs[l].resolution))
                        .collect::<Result<_>>()?;
                    let width = 2 * ctx.n();
                    actor.actor_update(&inputs, |j, f| {
                        let g = low.agent_input_gradient(l, &concat(&inputs[j], f), 0)?.1;
                        Ok(g[g.len() - width..].to_vec())
                    })?;
                }
            }
            IrsActors::Pg { eval, estimators, .. } => {
                let mut losses = Vec::new();
                for (l, actor) in eval.iter_mut().enumerate() {
                    let inputs: Vec<Vec<f64>> = batch
                        .iter()
                        .map(|t| ctx.enc.agent_input(&t.state, l, t.action.irs[l].resolution))
                        .collect::<Result<_>>()?;
                    let protos: Vec<Vec<f64>> = batch.iter().map(|t| t.irs_protos[l].clone()).collect();
                    // Advantage over the deterministic action phi(mean) in the same
                    // state; the per-state baseline does not depend on the sample.
                    let q: Vec<f64> = batch
                        .iter()
                        .zip(&inputs)
                        .map(|(t, x)| {
                            let taken = low.agent_values(l, &concat(x, &irs_action_features(&t.action.irs[l])))?[0];
                            let greedy = actor.deterministic(x, t.action.irs[l].resolution)?;
                            let base = low.agent_values(l, &concat(x, &irs_action_features(&greedy)))?[0];
                            Ok(taken - base)
                        })
                        .collect::<Result<_>>()?;
                    actor.update(&inputs, &protos, &q)?;
                    if self.train_estimator {
                        let data: Vec<(Vec<f64>, IrsAction)> = batch.iter().map(|t| (t.irs_protos[l].clone(), t.action.irs[l].clone())).collect();
                        losses.push(estimators[l].update(&data)?);
                    }
                }
                if !losses.is_empty() {
                    estimator_loss = Some(mean(&losses));
                }
            }
        }
        let bs_inputs: Vec<Vec<f64>> = batch.iter().map(|t| ctx.enc.bs_input(&t.state)).collect();
        let k = ctx.enc.bs_input_len();
        self.bs.actor_update(&bs_inputs, |j, f| {
            let g = low.agent_input_gradient(l_n, &concat(&bs_inputs[j], f), 0)?.1;
            Ok(g[k..].to_vec())
        })?;
        self.sync_actor_targets();
        Ok(LearnStats {
            high_loss: Some(high_loss),
            low_loss: Some(low_loss),
            estimator_loss,
        })
    }

    fn save(&self, ck: &mut Checkpoint) -> Result<()> {
        for (i, a) in self.high.agents.iter().enumerate() {
            ck.insert(&format!("high.agent.{i}"), &a.net.shape, &a.net.params)?;
        }
        ck.insert("high.mixer", &self.high.mixer.net.shape, &self.high.mixer.net.params)?;
        for (i, a) in self.low.agents.iter().enumerate() {
            ck.insert(&format!("low.agent.{i}"), &a.net.shape, &a.net.params)?;
        }
        ck.insert("low.mixer", &self.low.mixer.net.shape, &self.low.mixer.net.params)?;
        match &self.irs {
            IrsActors::Wp { eval, .. } => {
                for (i, a) in eval.iter().enumerate() {
                    ck.insert(&format!("irs.actor.{i}"), &a.actor.net.shape, &a.actor.net.params)?;
                }
            }
            IrsActors::Pg { eval, estimators, .. } => {
                for (i, a) in eval.iter().enumerate() {
                    ck.insert(&format!("irs.actor.{i}"), &a.actor.net.shape, &a.actor.net.params)?;
                }
                for (i, e) in estimators.iter().enumerate() {
                    ck.insert(&format!("irs.estimator.{i}"), &e.net.net.shape, &e.net.net.params)?;
                }
            }
        }
        ck.insert("bs.actor", &self.bs.actor.net.shape, &self.bs.actor.net.params)
    }

    fn load(&mut self, ck: &Checkpoint) -> Result<()> {
        for (i, a) in self.high.agents.iter_mut().enumerate() {
            load_into(ck, &format!("high.agent.{i}"), &mut a.net)?;
        }
        load_into(ck, "high.mixer", &mut self.high.mixer.net)?;
        for (i, a) in self.low.agents.iter_mut().enumerate() {
            load_into(ck, &format!("low.agent.{i}"), &mut a.net)?;
        }
        load_into(ck, "low.mixer", &mut self.low.mixer.net)?;
        match &mut self.irs {
            IrsActors::Wp { eval, .. } => {
                for (i, a) in eval.iter_mut().enumerate() {
                    load_into(ck, &format!("irs.actor.{i}"), &mut a.actor.net)?;
                }
            }
            IrsActors::Pg { eval, estimators, .. } => {
                for (i, a) in eval.iter_mut().enumerate() {
                    load_into(ck, &format!("irs.actor.{i}"), &mut a.actor.net)?;
                }
                for (i, e) in estimators.iter_mut().enumerate() {
                    load_into(ck, &format!("irs.estimator.{i}"), &mut e.net.net)?;
                }
            }
        }
        load_into(ck, "bs.actor", &mut self.bs.actor.net)?;
        self.high.sync_targets(1.0);
        self.low.sync_targets(1.0);
        self.low.learn_steps = 0;
        self.ctx.sync = TargetSync::Hard { period: 1 };
        self.sync_actor_targets();
        Ok(())
    }

    fn weight_count(&self) -> usize {
        let irs: usize = match &self.irs {
            IrsActors::Wp { eval, .. } => eval.iter().map(|a| a.actor.net.shape.num_weights()).sum(),
            IrsActors::Pg { eval, estimators, .. } => {
                eval.iter().map(|a| a.actor.net.shape.num_weights()).sum::<usize>()
                    + estimators.iter().map(|e| e.net.net.shape.num_weights()).sum::<usize>()
            }
        };
        self.high.num_weights() + self.low.num_weights() + irs + self.bs.actor.net.shape.num_weights()
    }
}

// ============================================================================
// Independent learners
// ============================================================================

/// Each IRS learns its own resolution values and proto-Gaussian
/// actor-critic; the BS learns a deterministic actor-critic. All share the
/// global reward; nothing is mixed.
#[derive(Clone, Debug)]
pub struct IlAgent {
    ctx: Ctx,
    high: Vec<Critic>,
    low: Vec<Critic>,
    bs_critic: Critic,
    actors: Vec<ProtoGaussianPolicy>,
    actor_targets: Vec<ProtoGaussianPolicy>,
    bs: BsPolicy,
    bs_target: BsPolicy,
}

impl IlAgent {
    fn new(ctx: Ctx, cfg: &RunConfig, rng: &mut SimRng) -> Result<Self> {
        let (l, n) = (ctx.l(), ctx.n());
        let net = &cfg.network;
        let enc = &ctx.enc;
        let lr = &cfg.learning;
        let high = (0..l)
            .map(|_| Ok(Critic::new(net.agent(enc.agent_input_len(), ctx.resolutions.len())?, lr.high_optimizer, lr.target_sync, rng)))
            .collect::<Result<Vec<_>>>()?;
        let low = (0..l)
            .map(|_| Ok(Critic::new(net.agent(enc.agent_input_len() + enc.irs_action_len(), 1)?, lr.low_optimizer, lr.target_sync, rng)))
            .collect::<Result<Vec<_>>>()?;
        let bs_critic = Critic::new(net.agent(enc.bs_input_len() + enc.bs_action_len(), 1)?, lr.low_optimizer, lr.target_sync, rng);
        let actors: Vec<_> = (0..l)
            .map(|_| {
                let shape = net.policy(enc.agent_input_len(), 4 * n, Activation::Identity)?;
                ProtoGaussianPolicy::new(shape, n, cfg.proto_gaussian, lr.policy_optimizer, rng)
            })
            .collect::<Result<_>>()?;
        let bs = bs_policy(&ctx, cfg, rng)?;
        Ok(Self {
            high,
            low,
            bs_critic,
            actor_targets: actors.clone(),
            actors,
            bs_target: bs.clone(),
            bs,
            ctx,
        })
    }
}

impl Agent for IlAgent {
    fn algorithm(&self) -> Algorithm {
        Algorithm::Il
    }

    fn act(&self, s: &GlobalState, prev: &[u32], mode: ActMode, rng: &mut SimRng) -> Result<Decision> {
        let ctx = &self.ctx;
        let eps = if mode.explore { mode.epsilon } else { 0.0 };
        let mut irs = Vec::with_capacity(ctx.l());
        let mut protos = Vec::with_capacity(ctx.l());
        for l in 0..ctx.l() {
            let q = self.high[l].values(&ctx.enc.agent_input(s, l, prev[l])?)?;
            let b = ctx.resolutions[select_resolution(&q, eps, rng)?];
            let input = ctx.enc.agent_input(s, l, b)?;
            if mode.explore {
                let smp = self.actors[l].sample(&input, b, rng)?;
                protos.push(smp.e);
                irs.push(smp.action);
            } else {
                let mean = self.actors[l].distribution(&input)?.0;
                irs.push(map_proto(&mean, b)?);
                protos.push(mean);
            }
        }
        let raw = self.bs.raw(&ctx.enc.bs_input(s), mode.explore, rng)?;
        Ok(Decision {
            action: HierarchicalAction {
                beamformer: self.bs.beamformer(&raw)?,
                irs,
            },
            irs_protos: protos,
        })
    }

    fn learn(&mut self, batch: &[&Transition], rng: &mut SimRng) -> Result<LearnStats> {
        let ctx = self.ctx.clone();
        let l_n = ctx.l();
        let mut high_losses = Vec::new();
        let mut low_losses = Vec::new();
        for l in 0..l_n {
            let mut hb = Vec::with_capacity(batch.len());
            let mut lb = Vec::with_capacity(batch.len());
            for t in batch {
                let (s, s2) = (&t.state, &t.next_state);
                let b = t.action.irs[l].resolution;
                let v = self.high[l].target_values(&ctx.enc.agent_input(s2, l, b)?)?;
                let i = argmax(&v);
                hb.push((ctx.enc.agent_input(s, l, t.prev_resolutions[l])?, ctx.res_index(b)?, t.reward + ctx.gamma * v[i]));
                let b2 = ctx.resolutions[i];
                let in2 = ctx.enc.agent_input(s2, l, b2)?;
                let x2 = self.actor_targets[l].deterministic(&in2, b2)?;
                let q2 = self.low[l].target_values(&concat(&in2, &irs_action_features(&x2)))?[0];
                lb.push((ctx.low_input(s, l, b, &t.action.irs[l])?, 0, t.reward + ctx.gamma * q2));
            }
            high_losses.push(self.high[l].td_update(&hb)?);
            low_losses.push(self.low[l].td_update(&lb)?);
        }
        let mut bb = Vec::with_capacity(batch.len());
        for t in batch {
            let f2 = bs_target_features(&ctx, &self.bs_target, &t.next_state, rng)?;
            let q2 = self.bs_critic.target_values(&ctx.bs_critic_input(&t.next_state, &f2))?[0];
            bb.push((ctx.bs_critic_input(&t.state, &ctx.enc.bs_action_features(&t.action.beamformer)), 0, t.reward + ctx.gamma * q2));
        }
        low_losses.push(self.bs_critic.td_update(&bb)?);

        for l in 0..l_n {
            let inputs: Vec<Vec<f64>> = batch
                .iter()
                .map(|t| ctx.enc.agent_input(&t.state, l, t.action.irs[l].resolution))
                .collect::<Result<_>>()?;
            let protos: Vec<Vec<f64>> = batch.iter().map(|t| t.irs_protos[l].clone()).collect();
            let q: Vec<f64> = batch
                .iter()
                .zip(&inputs)
                .map(|(t, x)| Ok(self.low[l].values(&concat(x, &irs_action_features(&t.action.irs[l])))?[0]))
                .collect::<Result<_>>()?;
            self.actors[l].update(&inputs, &protos, &q)?;
        }
        let bs_inputs: Vec<Vec<f64>> = batch.iter().map(|t| ctx.enc.bs_input(&t.state)).collect();
        let k = ctx.enc.bs_input_len();
        let critic = &self.bs_critic;
        self.bs.actor_update(&bs_inputs, |j, f| Ok(critic.input_gradient(&concat(&bs_inputs[j], f), 0)?.1[k..].to_vec()))?;
        if let Some(eta) = sync_weight(ctx.sync, self.bs_critic.learn_steps) {
            for (t, e) in self.actor_targets.iter_mut().zip(&self.actors) {
                soft_update(&mut t.actor.net, &e.actor.net, eta);
            }
            soft_update(&mut self.bs_target.actor.net, &self.bs.actor.net, eta);
        }
        Ok(LearnStats {
            high_loss: Some(mean(&high_losses)),
            low_loss: Some(mean(&low_losses)),
            estimator_loss: None,
        })
    }

    fn save(&self, ck: &mut Checkpoint) -> Result<()> {
        for (i, c) in self.high.iter().enumerate() {
            ck.insert(&format!("high.critic.{i}"), &c.net.net.shape, &c.net.net.params)?;
        }
        for (i, c) in self.low.iter().enumerate() {
            ck.insert(&format!("low.critic.{i}"), &c.net.net.shape, &c.net.net.params)?;
        }
        ck.insert("bs.critic", &self.bs_critic.net.net.shape, &self.bs_critic.net.net.params)?;
        for (i, a) in self.actors.iter().enumerate() {
            ck.insert(&format!("irs.actor.{i}"), &a.actor.net.shape, &a.actor.net.params)?;
        }
        ck.insert("bs.actor", &self.bs.actor.net.shape, &self.bs.actor.net.params)
    }

    fn load(&mut self, ck: &Checkpoint) -> Result<()> {
        for (i, c) in self.high.iter_mut().enumerate() {
            load_into(ck, &format!("high.critic.{i}"), &mut c.net.net)?;
            c.target = c.net.net.clone();
        }
        for (i, c) in self.low.iter_mut().enumerate() {
            load_into(ck, &format!("low.critic.{i}"), &mut c.net.net)?;
            c.target = c.net.net.clone();
        }
        load_into(ck, "bs.critic", &mut self.bs_critic.net.net)?;
        self.bs_critic.target = self.bs_critic.net.net.clone();
        for (i, a) in self.actors.iter_mut().enumerate() {
            load_into(ck, &format!("irs.actor.{i}"), &mut a.actor.net)?;
        }
        self.actor_targets = self.actors.clone();
        load_into(ck, "bs.actor", &mut self.bs.actor.net)?;
        self.bs_target = self.bs.clone();
        Ok(())
    }

    fn weight_count(&self) -> usize {
        let critics = self.high.iter().chain(&self.low).chain(std::iter::once(&self.bs_critic));
        critics.map(|c| c.net.net.shape.num_weights()).sum::<usize>()
            + self.actors.iter().map(|a| a.actor.net.shape.num_weights()).sum::<usize>()
            + self.bs.actor.net.shape.num_weights()
    }
}

// ============================================================================
// MADDPG
// ============================================================================

/// Deterministic actors (the IRS actor also emits its resolution) with one
/// centralized critic over the global state and every actor output.
#[derive(Clone, Debug)]
pub struct MaddpgAgent {
    ctx: Ctx,
    actors: Vec<Trainable<Mlp>>,
    actor_targets: Vec<Mlp>,
    bs: BsPolicy,
    bs_target: BsPolicy,
    critic: Critic,
}

impl MaddpgAgent {
    fn new(ctx: Ctx, cfg: &RunConfig, rng: &mut SimRng) -> Result<Self> {
        let (l, n) = (ctx.l(), ctx.n());
        let net = &cfg.network;
        let enc = &ctx.enc;
        let lr = &cfg.learning;
        let actors: Vec<_> = (0..l)
            .map(|_| Ok(Trainable::new(Mlp::new(net.policy(enc.agent_input_len(), 2 * n + 1, Activation::Tanh)?, rng), lr.policy_optimizer)))
            .collect::<Result<_>>()?;
        let critic_in = enc.global_len() + l * (2 * n + 1) + enc.bs_action_len();
        let critic = Critic::new(net.agent(critic_in, 1)?, lr.low_optimizer, lr.target_sync, rng);
        let bs = bs_policy(&ctx, cfg, rng)?;
        Ok(Self {
            actor_targets: actors.iter().map(|a: &Trainable<Mlp>| a.net.clone()).collect(),
            actors,
            bs_target: bs.clone(),
            bs,
            critic,
            ctx,
        })
    }

    fn width(&self) -> usize {
        2 * self.ctx.n() + 1
    }

    /// Rounds a raw `[-1, 1]` IRS output to a lattice action.
    fn discretize(&self, raw: &[f64]) -> IrsAction {
        let n = self.ctx.n();
        let top = (self.ctx.resolutions.len() - 1) as f64;
        let idx = (((raw[2 * n] + 1.0) / 2.0 * top) - 0.5).ceil().clamp(0.0, top) as usize;
        let b = self.ctx.resolutions[idx];
        IrsAction {
            resolution: b,
            phase_levels: raw[..n].iter().map(|e| round_phase(std::f64::consts::PI * (1.0 + e), b, false)).collect(),
            status: raw[n..2 * n].iter().map(|&e| e > 0.0).collect(),
        }
    }

    fn critic_input(&self, s: &GlobalState, raws: &[Vec<f64>], bs_feat: &[f64]) -> Vec<f64> {
        let mut x = self.ctx.enc.global_features(s);
        for r in raws {
            x.extend_from_slice(r);
        }
        x.extend_from_slice(bs_feat);
        x
    }
}

impl Agent for MaddpgAgent {
    fn algorithm(&self) -> Algorithm {
        Algorithm::Maddpg
    }

    fn act(&self, s: &GlobalState, prev: &[u32], mode: ActMode, rng: &mut SimRng) -> Result<Decision> {
        let ctx = &self.ctx;
        let mut irs = Vec::with_capacity(ctx.l());
        let mut protos = Vec::with_capacity(ctx.l());
        for l in 0..ctx.l() {
            let mut raw = self.actors[l].net.forward(&ctx.enc.agent_input(s, l, prev[l])?)?;
            if mode.explore && ctx.noise > 0.0 {
                for v in &mut raw {
                    *v = (*v + ctx.noise * standard_normal(rng)).clamp(-1.0, 1.0);
                }
            }
            irs.push(self.discretize(&raw));
            protos.push(raw);
        }
        let raw = self.bs.raw(&ctx.enc.bs_input(s), mode.explore, rng)?;
        Ok(Decision {
            action: HierarchicalAction {
                beamformer: self.bs.beamformer(&raw)?,
                irs,
            },
            irs_protos: protos,
        })
    }

    fn learn(&mut self, batch: &[&Transition], rng: &mut SimRng) -> Result<LearnStats> {
        let ctx = self.ctx.clone();
        let l_n = ctx.l();
        let mut cb = Vec::with_capacity(batch.len());
        for t in batch {
            let s2 = &t.next_state;
            let b = t.action.resolutions();
            let raws2: Vec<Vec<f64>> = (0..l_n)
                .map(|l| self.actor_targets[l].forward(&ctx.enc.agent_input(s2, l, b[l])?))
                .collect::<Result<_>>()?;
            let f2 = bs_target_features(&ctx, &self.bs_target, s2, rng)?;
            let q2 = self.critic.target_values(&self.critic_input(s2, &raws2, &f2))?[0];
            let x = self.critic_input(&t.state, &t.irs_protos, &ctx.enc.bs_action_features(&t.action.beamformer));
            cb.push((x, 0, t.reward + ctx.gamma * q2));
        }
        let loss = self.critic.td_update(&cb)?;

        let w = self.width();
        let global = ctx.enc.global_len();
        let scale = -1.0 / batch.len() as f64;
        for l in 0..l_n {
            let mut grad = self.actors[l].net.zero_grad();
            for (j, t) in batch.iter().enumerate() {
                let tape = self.actors[l].net.forward_tape(&ctx.enc.agent_input(&t.state, l, t.prev_resolutions[l])?)?;
                let mut x = cb[j].0.clone();
                let off = global + l * w;
                x[off..off + w].copy_from_slice(tape.output());
                let g = self.critic.input_gradient(&x, 0)?.1;
                let up: Vec<f64> = g[off..off + w].iter().map(|v| scale * v).collect();
                self.actors[l].net.backward(&tape, &up, &mut grad)?;
            }
            self.actors[l].apply(&grad)?;
        }
        let bs_inputs: Vec<Vec<f64>> = batch.iter().map(|t| ctx.enc.bs_input(&t.state)).collect();
        let off = global + l_n * w;
        let critic = &self.critic;
        self.bs.actor_update(&bs_inputs, |j, f| {
            let mut x = cb[j].0.clone();
            x[off..].copy_from_slice(f);
            Ok(critic.input_gradient(&x, 0)?.1[off..].to_vec())
        })?;
        if let Some(eta) = sync_weight(ctx.sync, self.critic.learn_steps) {
            for (t, a) in self.actor_targets.iter_mut().zip(&self.actors) {
                soft_update(t, &a.net, eta);
            }
            soft_update(&mut self.bs_target.actor.net, &self.bs.actor.net, eta);
        }
        Ok(LearnStats {
            high_loss: None,
            low_loss: Some(loss),
            estimator_loss: None,
        })
    }

    fn save(&self, ck: &mut Checkpoint) -> Result<()> {
        for (i, a) in self.actors.iter().enumerate() {
            ck.insert(&format!("irs.actor.{i}"), &a.net.shape, &a.net.params)?;
        }
        ck.insert("critic", &self.critic.net.net.shape, &self.critic.net.net.params)?;
        ck.insert("bs.actor", &self.bs.actor.net.shape, &self.bs.actor.net.params)
    }

    fn load(&mut self, ck: &Checkpoint) -> Result<()> {
        for (i, a) in self.actors.iter_mut().enumerate() {
            load_into(ck, &format!("irs.actor.{i}"), &mut a.net)?;
        }
        self.actor_targets = self.actors.iter().map(|a| a.net.clone()).collect();
        load_into(ck, "critic", &mut self.critic.net.net)?;
        self.critic.target = self.critic.net.net.clone();
        load_into(ck, "bs.actor", &mut self.bs.actor.net)?;
        self.bs_target = self.bs.clone();
        Ok(())
    }

    fn weight_count(&self) -> usize {
        self.actors.iter().map(|a| a.net.shape.num_weights()).sum::<usize>()
            + self.critic.net.net.shape.num_weights()
            + self.bs.actor.net.shape.num_weights()
    }
}

// ============================================================================
// Random policy
// ============================================================================

/// Uniform resolutions, phases and statuses; beamformer entries from
/// uniform `[-1, 1]` raw outputs.
#[derive(Clone, Debug)]
pub struct RandomAgent {
    ctx: Ctx,
}

impl Agent for RandomAgent {
    fn algorithm(&self) -> Algorithm {
        Algorithm::Random
    }

    fn act(&self, _s: &GlobalState, _prev: &[u32], _mode: ActMode, rng: &mut SimRng) -> Result<Decision> {
        let ctx = &self.ctx;
        let irs = (0..ctx.l())
            .map(|_| {
                let b = ctx.resolutions[rng.random_range(0..ctx.resolutions.len())];
                IrsAction {
                    resolution: b,
                    phase_levels: (0..ctx.n()).map(|_| rng.random_range(0..1u32 << b)).collect(),
                    status: (0..ctx.n()).map(|_| rng.random::<bool>()).collect(),
                }
            })
            .collect();
        let raw: Vec<f64> = (0..ctx.enc.bs_action_len()).map(|_| rng.random_range(-1.0..=1.0)).collect();
        Ok(Decision {
            action: HierarchicalAction {
                beamformer: raw_to_beamformer(&raw, ctx.enc.bs_antennas, ctx.enc.num_users, ctx.enc.p_max_mw)?,
                irs,
            },
            irs_protos: Vec::new(),
        })
    }

    fn learn(&mut self, _batch: &[&Transition], _rng: &mut SimRng) -> Result<LearnStats> {
        Ok(LearnStats::default())
    }

    fn save(&self, _ck: &mut Checkpoint) -> Result<()> {
        Ok(())
    }

    fn load(&mut self, _ck: &Checkpoint) -> Result<()> {
        Ok(())
    }

    fn weight_count(&self) -> usize {
        0
    }
}
