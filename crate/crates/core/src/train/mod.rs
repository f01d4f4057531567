//! Training loop, run directories and frozen-policy evaluation.
//!
//! A run directory holds:
//!
//! * `manifest.json`: `{format, version, seed, git_revision, config}`; the
//!   manifest is itself accepted as a config.
//! * `metrics.csv`: one row per epoch, header [`METRICS_HEADER`]. Fully
//!   determined by `(config, seed)`.
//! * `timing.csv`: `epoch,wall_seconds`. Kept apart so metrics stay
//!   byte-reproducible.
//! * `checkpoint.json`: final networks in the nn checkpoint format.
//! * `checkpoint-diagnostic.json`: written instead when a loss turns
//!   non-finite; the run then fails.

pub mod agents;
pub mod config;

use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use agents::{build_agent, parameter_counts, problem_size, ActMode, Agent, Decision, LearnStats, Transition};
pub use config::{Algorithm, LearningConfig, RunConfig};

use crate::env::Environment;
use crate::error::{Error, Result};
use crate::maq::{EpsilonSchedule, ReplayBuffer};
use crate::mdp::make_global_state;
use crate::nn::Checkpoint;
use crate::rng::{stream, streams, SimRng};

pub const METRICS_HEADER: &str = "epoch,mean_reward,mean_rate,satisfaction_rate,power_violations,energy_violations,projections,mean_irs_power_mw,mean_resolution,epsilon,high_loss,low_loss,estimator_loss";

pub const MANIFEST_FORMAT: &str = "irslab-run";

/// Per-epoch summary. Losses are means over the epoch's learn steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Raw (unnormalised) reward per step.
    pub mean_reward: f64,
    /// Sum rate per step, bit/s/Hz.
    pub mean_rate: f64,
    /// Fraction of (user, slot) pairs with `R_k >= R_req`.
    pub satisfaction_rate: f64,
    /// Transmitted beamformers over `P_max` (after projection; must be 0).
    pub power_violations: u64,
    /// Buffer levels outside `[e_min, e_max]` (must be 0).
    pub energy_violations: u64,
    /// Requested beamformers that needed projection.
    pub projections: u64,
    pub mean_irs_power_mw: f64,
    pub mean_resolution: f64,
    pub epsilon: f64,
    pub high_loss: Option<f64>,
    pub low_loss: Option<f64>,
    pub estimator_loss: Option<f64>,
}

#[derive(Default)]
struct Accumulator {
    steps: usize,
    reward: f64,
    rate: f64,
    satisfied: usize,
    pairs: usize,
    power_violations: u64,
    energy_violations: u64,
    projections: u64,
    irs_power: f64,
    resolution: f64,
    resolution_count: usize,
    high: Vec<f64>,
    low: Vec<f64>,
    estimator: Vec<f64>,
}

fn mean_opt(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

impl Accumulator {
    fn record_stats(&mut self, s: LearnStats) {
        self.high.extend(s.high_loss);
        self.low.extend(s.low_loss);
        self.estimator.extend(s.estimator_loss);
    }

    fn finish(self, epoch: usize, epsilon: f64) -> EpochMetrics {
        let n = self.steps.max(1) as f64;
        EpochMetrics {
            epoch,
            mean_reward: self.reward / n,
            mean_rate: self.rate / n,
            satisfaction_rate: self.satisfied as f64 / self.pairs.max(1) as f64,
            power_violations: self.power_violations,
            energy_violations: self.energy_violations,
            projections: self.projections,
            mean_irs_power_mw: self.irs_power / n,
            mean_resolution: self.resolution / self.resolution_count.max(1) as f64,
            epsilon,
            high_loss: mean_opt(&self.high),
            low_loss: mean_opt(&self.low),
            estimator_loss: mean_opt(&self.estimator),
        }
    }
}

/// Divisor applied to rewards before they enter TD targets.
pub fn reward_scale(cfg: &RunConfig) -> f64 {
    if !cfg.learning.normalize_reward {
        return 1.0;
    }
    let snr = cfg.env.p_max_mw() / cfg.channel.noise_power_mw();
    cfg.env.num_users as f64 * (1.0 + snr).log2()
}

/// The deployment shared by training and evaluation of one config.
pub fn environment(cfg: &RunConfig) -> Result<Environment> {
    Environment::sample(cfg.env.clone(), cfg.channel.clone(), &mut stream(cfg.seed, streams::GEOMETRY))
}

fn check_finite(stats: &LearnStats) -> Result<()> {
    for (name, v) in [("high loss", stats.high_loss), ("low loss", stats.low_loss), ("estimator loss", stats.estimator_loss)] {
        if v.is_some_and(|x| !x.is_finite()) {
            return Err(Error::NonFinite(name.into()));
        }
    }
    Ok(())
}

/// Runs `episodes` of `T` steps, optionally learning, reporting each epoch.
fn rollout<F>(
    cfg: &RunConfig,
    env: &Environment,
    agent: &mut dyn Agent,
    episodes: usize,
    learn: bool,
    env_rng: &mut SimRng,
    agent_rng: &mut SimRng,
    mut on_epoch: F,
) -> Result<()>
where
    F: FnMut(EpochMetrics) -> Result<()>,
{
    let l = &cfg.learning;
    let schedule = EpsilonSchedule {
        start: l.epsilon_start,
        end: l.epsilon_end,
        anneal_steps: (cfg.total_steps() as f64 * l.epsilon_anneal_fraction) as u64,
    };
    let scale = reward_scale(cfg);
    let d0 = cfg.env.irs_reference_distance_m;
    let irs = &cfg.env.irs;
    let learns = learn && cfg.algorithm != Algorithm::Random;
    let mut buffer = ReplayBuffer::new(if learns { l.replay_capacity } else { 1 })?;
    let mut step: u64 = 0;
    for epoch in 0..episodes {
        let mut acc = Accumulator::default();
        let mut state = env.reset(env_rng)?;
        let mut gs = make_global_state(&state, &env.geometry, d0)?;
        let mut prev = vec![irs.resolutions[0]; cfg.env.num_irs];
        let mut epsilon = 0.0;
        for _ in 0..cfg.steps_per_epoch {
            let mode = if learn {
                epsilon = schedule.value(step);
                ActMode { epsilon, explore: true }
            } else {
                ActMode::GREEDY
            };
            let decision = agent.act(&gs, &prev, mode, agent_rng)?;
            let out = env.step(&state, &decision.action, env_rng)?;
            let next_gs = make_global_state(&out.next, &env.geometry, d0)?;

            let d = &out.diagnostics;
            acc.steps += 1;
            acc.reward += out.reward.total;
            acc.rate += out.reward.rate;
            acc.satisfied += d.meets_requirement.iter().filter(|&&m| m).count();
            acc.pairs += d.meets_requirement.len();
            acc.power_violations += u64::from(d.power_violation);
            acc.energy_violations += out.next.energy.iter().filter(|&&e| !(irs.e_min_mj..=irs.e_max_mj).contains(&e)).count() as u64;
            acc.projections += u64::from(d.projected);
            acc.irs_power += d.irs_power_mw.iter().sum::<f64>();
            for a in &decision.action.irs {
                acc.resolution += f64::from(a.resolution);
                acc.resolution_count += 1;
            }

            let resolutions = decision.action.resolutions();
            if learns {
                buffer.push(Transition {
                    state: gs,
                    prev_resolutions: prev,
                    action: decision.action,
                    irs_protos: decision.irs_protos,
                    reward: out.reward.total / scale,
                    next_state: next_gs.clone(),
                });
                step += 1;
                if buffer.len() >= l.warmup.max(l.batch_size) && step % l.learn_every as u64 == 0 {
                    let batch = buffer.sample(l.batch_size, agent_rng)?;
                    let stats = agent.learn(&batch, agent_rng)?;
                    check_finite(&stats)?;
                    acc.record_stats(stats);
                }
            } else {
                step += 1;
            }
            state = out.next;
            gs = next_gs;
            prev = resolutions;
        }
        on_epoch(acc.finish(epoch, epsilon))?;
    }
    Ok(())
}

/// Agent, metrics and checkpoint of a finished run.
pub struct TrainedRun {
    pub agent: Box<dyn Agent>,
    pub metrics: Vec<EpochMetrics>,
    pub checkpoint: Checkpoint,
}

impl std::fmt::Debug for TrainedRun {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TrainedRun").field("metrics", &self.metrics.len()).finish_non_exhaustive()
    }
}

fn checkpoint_of(cfg: &RunConfig, agent: &dyn Agent) -> Result<Checkpoint> {
    let mut ck = Checkpoint::new(cfg.algorithm.as_str(), serde_json::to_value(cfg)?);
    agent.save(&mut ck)?;
    Ok(ck)
}

fn train_inner<F>(cfg: &RunConfig, mut on_epoch: F) -> std::result::Result<TrainedRun, (Error, Option<Checkpoint>)>
where
    F: FnMut(&EpochMetrics) -> Result<()>,
{
    let setup = || -> Result<(Environment, Box<dyn Agent>)> {
        cfg.validate()?;
        let env = environment(cfg)?;
        let agent = build_agent(cfg, &mut stream(cfg.seed, streams::AGENT_INIT))?;
        Ok((env, agent))
    };
    let (env, mut agent) = setup().map_err(|e| (e, None))?;
    let mut env_rng = stream(cfg.seed, streams::ENVIRONMENT);
    let mut agent_rng = stream(cfg.seed, streams::AGENT);
    let mut metrics = Vec::with_capacity(cfg.epochs);
    let result = rollout(cfg, &env, agent.as_mut(), cfg.epochs, true, &mut env_rng, &mut agent_rng, |m| {
        on_epoch(&m)?;
        metrics.push(m);
        Ok(())
    });
    if let Err(e) = result {
        let diag = matches!(e, Error::NonFinite(_)).then(|| checkpoint_of(cfg, agent.as_ref()).ok()).flatten();
        return Err((e, diag));
    }
    let checkpoint = checkpoint_of(cfg, agent.as_ref()).map_err(|e| (e, None))?;
    Ok(TrainedRun { agent, metrics, checkpoint })
}

/// Trains in memory.
pub fn train(cfg: &RunConfig) -> Result<TrainedRun> {
    train_inner(cfg, |_| Ok(())).map_err(|(e, _)| e)
}

/// Best-effort revision of the working tree, for the manifest only.
pub fn git_revision() -> String {
    std::process::Command::new("git")
        .args(["rev-parse", "HEAD"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .unwrap_or_else(|| "unknown".into())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub git_revision: String,
    pub config: RunConfig,
}

/// Refuses existing non-empty directories, then creates `out`.
fn fresh_dir(out: &Path) -> Result<()> {
    if out.exists() {
        let empty = out.is_dir() && fs::read_dir(out)?.next().is_none();
        if !empty {
            return Err(Error::RunDir(format!("{} already exists and is not empty", out.display())));
        }
    }
    fs::create_dir_all(out)?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::RunDir(format!("csv: {e}"))
}

/// Trains and writes a run directory at `out`.
pub fn run_training(cfg: &RunConfig, out: &Path) -> Result<TrainedRun> {
    cfg.validate()?;
    fresh_dir(out)?;
    let manifest = Manifest {
        format: MANIFEST_FORMAT.into(),
        version: 1,
        seed: cfg.seed,
        git_revision: git_revision(),
        config: cfg.clone(),
    };
    fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;

    let mut metrics = csv::Writer::from_path(out.join("metrics.csv")).map_err(csv_err)?;
    let mut timing = csv::Writer::from_path(out.join("timing.csv")).map_err(csv_err)?;
    timing.write_record(["epoch", "wall_seconds"]).map_err(csv_err)?;
    let start = Instant::now();
    let result = train_inner(cfg, |m| {
        metrics.serialize(m).map_err(csv_err)?;
        metrics.flush()?;
        timing
            .write_record([m.epoch.to_string(), format!("{:.3}", start.elapsed().as_secs_f64())])
            .map_err(csv_err)?;
        timing.flush()?;
        Ok(())
    });
    match result {
        Ok(run) => {
            run.checkpoint.save(&out.join("checkpoint.json"))?;
            Ok(run)
        }
        Err((e, diag)) => {
            if let Some(ck) = diag {
                ck.save(&out.join("checkpoint-diagnostic.json"))?;
            }
            Err(e)
        }
    }
}

/// Parses a metrics file written by [`run_training`].
pub fn read_metrics(path: &Path) -> Result<Vec<EpochMetrics>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Population standard deviation.
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len().max(1) as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

/// Frozen-policy rollouts with exploration off.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub algorithm: String,
    pub episodes: usize,
    pub seed: u64,
    pub reward: MeanStd,
    pub rate: MeanStd,
    pub satisfaction: MeanStd,
    pub power_violations: u64,
    pub energy_violations: u64,
    /// Epsilon used on every step; always 0.
    pub epsilon: f64,
}

/// Evaluates the networks in `ck` on the deployment of its config. The
/// environment stream comes from `seed`, so the summary is a pure function
/// of `(ck, episodes, seed)`.
pub fn evaluate_policy(ck: &Checkpoint, episodes: usize, seed: u64) -> Result<EvalSummary> {
    if episodes == 0 {
        return Err(Error::Config("episodes must be >= 1".into()));
    }
    let cfg: RunConfig = serde_json::from_value(ck.config.clone()).map_err(|e| Error::Checkpoint(format!("embedded config: {e}")))?;
    if cfg.algorithm.as_str() != ck.algorithm {
        return Err(Error::Checkpoint(format!("algorithm {} does not match its config ({})", ck.algorithm, cfg.algorithm)));
    }
    let env = environment(&cfg)?;
    let mut agent = build_agent(&cfg, &mut stream(cfg.seed, streams::AGENT_INIT))?;
    agent.load(ck)?;
    let mut env_rng = stream(seed, streams::EVALUATION);
    let mut agent_rng = stream(seed, streams::AGENT);
    let mut rows = Vec::with_capacity(episodes);
    rollout(&cfg, &env, agent.as_mut(), episodes, false, &mut env_rng, &mut agent_rng, |m| {
        rows.push(m);
        Ok(())
    })?;
    let col = |f: fn(&EpochMetrics) -> f64| MeanStd::of(&rows.iter().map(f).collect::<Vec<_>>());
    Ok(EvalSummary {
        algorithm: ck.algorithm.clone(),
        episodes,
        seed,
        reward: col(|m| m.mean_reward),
        rate: col(|m| m.mean_rate),
        satisfaction: col(|m| m.satisfaction_rate),
        power_violations: rows.iter().map(|m| m.power_violations).sum(),
        energy_violations: rows.iter().map(|m| m.energy_violations).sum(),
        epsilon: rows.iter().map(|m| m.epsilon).fold(0.0, f64::max),
    })
}

/// Checkpoint of an untrained agent for `cfg`.
pub fn initial_checkpoint(cfg: &RunConfig) -> Result<Checkpoint> {
    let agent = build_agent(cfg, &mut stream(cfg.seed, streams::AGENT_INIT))?;
    checkpoint_of(cfg, agent.as_ref())
}

/// Mean training reward over the last `window` epochs.
pub fn converged_reward(metrics: &[EpochMetrics], window: usize) -> f64 {
    let tail = &metrics[metrics.len().saturating_sub(window)..];
    tail.iter().map(|m| m.mean_reward).sum::<f64>() / tail.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(algorithm: Algorithm) -> RunConfig {
        let mut c = RunConfig {
            algorithm,
            epochs: 2,
            steps_per_epoch: 6,
            ..RunConfig::default()
        };
        c.network.agent_hidden = vec![8];
        c.network.policy_hidden = vec![8];
        c.network.mixer_hidden = 4;
        c.learning.batch_size = 4;
        c.learning.warmup = 4;
        c.learning.replay_capacity = 64;
        c
    }

    #[test]
    fn header_matches_serialized_fields() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        run_training(&tiny(Algorithm::Random), &out).unwrap();
        let text = fs::read_to_string(out.join("metrics.csv")).unwrap();
        assert_eq!(text.lines().next().unwrap(), METRICS_HEADER);
        assert_eq!(text.lines().count(), 3);
        assert_eq!(read_metrics(&out.join("metrics.csv")).unwrap().len(), 2);
    }

    #[test]
    fn every_algorithm_learns_a_few_steps() {
        for a in Algorithm::ALL {
            let run = train(&tiny(a)).unwrap();
            assert_eq!(run.metrics.len(), 2);
            if a != Algorithm::Random {
                assert!(run.metrics[1].low_loss.is_some(), "{a}");
            }
            for m in &run.metrics {
                assert_eq!(m.power_violations, 0);
                assert_eq!(m.energy_violations, 0);
                assert!((0.0..=1.0).contains(&m.satisfaction_rate));
            }
        }
    }

    #[test]
    fn checkpoint_round_trip_preserves_greedy_behaviour() {
        for a in Algorithm::ALL {
            let cfg = tiny(a);
            let run = train(&cfg).unwrap();
            let ck = Checkpoint::from_json(&run.checkpoint.to_json().unwrap()).unwrap();
            let s1 = evaluate_policy(&run.checkpoint, 2, 9).unwrap();
            let s2 = evaluate_policy(&ck, 2, 9).unwrap();
            assert_eq!(s1, s2, "{a}");
            assert_eq!(s1.epsilon, 0.0);
        }
    }

    #[test]
    fn occupied_directory_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("x"), "keep").unwrap();
        let err = run_training(&tiny(Algorithm::Random), dir.path()).unwrap_err();
        assert!(matches!(err, Error::RunDir(_)));
        assert_eq!(fs::read_to_string(dir.path().join("x")).unwrap(), "keep");
    }

    #[test]
    fn zero_episodes_rejected() {
        let ck = initial_checkpoint(&tiny(Algorithm::MaqPg)).unwrap();
        assert!(evaluate_policy(&ck, 0, 1).is_err());
    }
}
