use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::ChannelParams;
use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::maq::TargetSync;
use crate::nn::{NetworkConfig, OptimizerConfig};
use crate::policies::{ProtoGaussianConfig, WolpertingerConfig};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    #[default]
    MaqWp,
    MaqPg,
    Il,
    Maddpg,
    Random,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::MaqWp,
        Algorithm::MaqPg,
        Algorithm::Il,
        Algorithm::Maddpg,
        Algorithm::Random,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::MaqWp => "maq-wp",
            Algorithm::MaqPg => "maq-pg",
            Algorithm::Il => "il",
            Algorithm::Maddpg => "maddpg",
            Algorithm::Random => "random",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Algorithm::ALL.iter().map(|a| a.as_str()).collect();
                Error::Config(format!("unknown algorithm {s:?}; expected one of {}", names.join(", ")))
            })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningConfig {
    pub gamma: f64,
    pub replay_capacity: usize,
    pub batch_size: usize,
    /// Transitions collected before the first learn step.
    pub warmup: usize,
    /// Environment steps per learn step.
    pub learn_every: usize,
    pub high_optimizer: OptimizerConfig,
    pub low_optimizer: OptimizerConfig,
    pub policy_optimizer: OptimizerConfig,
    pub target_sync: TargetSync,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of all steps over which epsilon anneals.
    pub epsilon_anneal_fraction: f64,
    /// Low-level targets enumerate an IRS action space up to this size.
    pub exact_low_max: u64,
    /// Divide TD rewards by `K log2(1 + P_max / noise)`.
    pub normalize_reward: bool,
    /// Train the mapping estimator alongside proto-Gaussian actors.
    pub train_estimator: bool,
}

impl Default for LearningConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            replay_capacity: 100_000,
            batch_size: 128,
            warmup: 1000,
            learn_every: 1,
            high_optimizer: OptimizerConfig::default(),
            low_optimizer: OptimizerConfig::default(),
            policy_optimizer: OptimizerConfig::default(),
            target_sync: TargetSync::default(),
            epsilon_start: 0.2,
            epsilon_end: 0.02,
            epsilon_anneal_fraction: 0.5,
            exact_low_max: 4096,
            normalize_reward: true,
            train_estimator: true,
        }
    }
}

/// Everything that determines a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub seed: u64,
    /// `J`.
    pub epochs: usize,
    /// `T`.
    pub steps_per_epoch: usize,
    pub env: EnvConfig,
    pub channel: ChannelParams,
    pub network: NetworkConfig,
    pub learning: LearningConfig,
    pub wolpertinger: WolpertingerConfig,
    pub proto_gaussian: ProtoGaussianConfig,
    /// Gaussian noise on BS (and MADDPG IRS) actor outputs while exploring.
    pub actor_noise_std: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::MaqWp,
            seed: 0,
            epochs: 20_000,
            steps_per_epoch: 100,
            env: EnvConfig::default(),
            channel: ChannelParams::default(),
            network: NetworkConfig::default(),
            learning: LearningConfig::default(),
            wolpertinger: WolpertingerConfig::default(),
            proto_gaussian: ProtoGaussianConfig::default(),
            actor_noise_std: 0.1,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.steps_per_epoch == 0 {
            return Err(Error::Config("epochs and steps_per_epoch must be >= 1".into()));
        }
        self.env.validate()?;
        self.channel.validate()?;
        self.network.validate()?;
        let l = &self.learning;
        if !(0.0..=1.0).contains(&l.gamma) {
            return Err(Error::Config("learning.gamma must lie in [0, 1]".into()));
        }
        if l.batch_size == 0 || l.replay_capacity < l.batch_size {
            return Err(Error::Config("learning.batch_size must be in 1..=replay_capacity".into()));
        }
        if l.learn_every == 0 {
            return Err(Error::Config("learning.learn_every must be >= 1".into()));
        }
        for o in [&l.high_optimizer, &l.low_optimizer, &l.policy_optimizer] {
            o.validate()?;
        }
        if let TargetSync::Soft { eta } = l.target_sync {
            if !(0.0..=1.0).contains(&eta) {
                return Err(Error::Config("learning.target_sync.soft.eta must lie in [0, 1]".into()));
            }
        }
        if !((0.0..=1.0).contains(&l.epsilon_start) && (0.0..=1.0).contains(&l.epsilon_end)) {
            return Err(Error::Config("learning.epsilon_* must lie in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&l.epsilon_anneal_fraction) {
            return Err(Error::Config("learning.epsilon_anneal_fraction must lie in [0, 1]".into()));
        }
        if self.wolpertinger.k == 0 {
            return Err(Error::Config("wolpertinger.k must be >= 1".into()));
        }
        if !(self.actor_noise_std >= 0.0 && self.wolpertinger.exploration_std >= 0.0) {
            return Err(Error::Config("exploration noise must be >= 0".into()));
        }
        Ok(())
    }

    pub fn total_steps(&self) -> u64 {
        self.epochs as u64 * self.steps_per_epoch as u64
    }

    /// Parses a config, or the `config` member of a run manifest.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let inner = match value.get("config") {
            Some(c) if value.get("format").is_some() => c.clone(),
            _ => value,
        };
        let cfg: Self = serde_json::from_value(inner).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_named() {
        let err = RunConfig::from_json(r#"{"epochs": 3, "bogus_key": 1}"#).unwrap_err();
        assert!(err.to_string().contains("bogus_key"), "{err}");
        let err = RunConfig::from_json(r#"{"env": {"num_irs": 0}}"#).unwrap_err();
        assert!(err.to_string().contains("num_irs"), "{err}");
    }

    #[test]
    fn algorithm_names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.as_str().parse::<Algorithm>().unwrap(), a);
        }
        let err = "bogus".parse::<Algorithm>().unwrap_err().to_string();
        assert!(err.contains("maq-wp") && err.contains("maddpg"));
    }

    #[test]
    fn defaults_round_trip_through_json() {
        let c = RunConfig::default();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(RunConfig::from_json(&text).unwrap(), c);
    }
}
