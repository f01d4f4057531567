use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum OptimizerKind {
    Adam {
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    },
    Sgd,
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub max_grad_norm: Option<f64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::default(),
            learning_rate: 1e-4,
            max_grad_norm: Some(10.0),
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be > 0".into()));
        }
        if let Some(c) = self.max_grad_norm {
            if !(c > 0.0) {
                return Err(Error::Config("max_grad_norm must be > 0".into()));
            }
        }
        if let OptimizerKind::Adam { beta1, beta2, epsilon } = self.kind {
            if !((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && epsilon > 0.0) {
                return Err(Error::Config("Adam needs beta in [0, 1) and epsilon > 0".into()));
            }
        }
        Ok(())
    }
}

/// Optimizer state for one flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Optimizer {
    pub config: OptimizerConfig,
    /// First and second moments, shaped like the parameters.
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    /// beta1^step and beta2^step, kept as running products so bias
    /// correction does not depend on how `pow` is lowered.
    beta_powers: (f64, f64),
}

/// Scales `grads` in place so their L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut [f64], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grads.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, num_params: usize) -> Self {
        Self {
            config,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            step: 0,
            beta_powers: (1.0, 1.0),
        }
    }

    /// Descends along `grads`. Rejects non-finite gradients or results,
    /// leaving `params` untouched in that case.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.m.len() {
            return Err(Error::DimensionMismatch("optimizer buffer sizes".into()));
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("gradient".into()));
        }
        let mut g = grads.to_vec();
        if let Some(c) = self.config.max_grad_norm {
            clip_grad_norm(&mut g, c);
        }
        let lr = self.config.learning_rate;
        let mut powers = self.beta_powers;
        let update: Vec<f64> = match self.config.kind {
            OptimizerKind::Sgd => g.iter().map(|g| lr * g).collect(),
            OptimizerKind::Adam { beta1, beta2, epsilon } => {
                let (p1, p2) = (self.beta_powers.0 * beta1, self.beta_powers.1 * beta2);
                powers = (p1, p2);
                let c1 = 1.0 - p1;
                let c2 = 1.0 - p2;
                let mut m = self.m.clone();
                let mut v = self.v.clone();
                let upd = g
                    .iter()
                    .zip(m.iter_mut().zip(v.iter_mut()))
                    .map(|(g, (m, v))| {
                        *m = beta1 * *m + (1.0 - beta1) * g;
                        *v = beta2 * *v + (1.0 - beta2) * g * g;
                        lr * (*m / c1) / ((*v / c2).sqrt() + epsilon)
                    })
                    .collect();
                self.m = m;
                self.v = v;
                upd
            }
        };
        if params.iter().zip(&update).any(|(p, u)| !(p - u).is_finite()) {
            return Err(Error::NonFinite("parameters after update".into()));
        }
        params.iter_mut().zip(&update).for_each(|(p, u)| *p -= u);
        self.beta_powers = powers;
        self.step += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn adam(lr: f64) -> Optimizer {
        Optimizer::new(
            OptimizerConfig {
                learning_rate: lr,
                max_grad_norm: None,
                ..Default::default()
            },
            2,
        )
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut opt = adam(1e-3);
        let mut p = vec![1.0, -2.0];
        for _ in 0..10 {
            opt.step(&mut p, &[0.0, 0.0]).unwrap();
        }
        assert_eq!(p, vec![1.0, -2.0]);
    }

    #[test]
    fn first_step_is_lr_times_sign() {
        let mut opt = adam(1e-4);
        let mut p = vec![0.0, 0.0];
        opt.step(&mut p, &[3.0, -0.5]).unwrap();
        assert!((p[0] + 1e-4).abs() < 1e-11);
        assert!((p[1] - 1e-4).abs() < 1e-11);
    }

    #[test]
    fn constant_gradient_moves_against_sign() {
        let mut opt = adam(1e-2);
        let mut p = vec![0.0, 0.0];
        for _ in 0..100 {
            opt.step(&mut p, &[1.0, -1.0]).unwrap();
        }
        assert!(p[0] < -0.5 && p[1] > 0.5);
    }

    #[test]
    fn non_finite_is_rejected() {
        let mut opt = adam(1e-3);
        let mut p = vec![0.0, 0.0];
        assert!(opt.step(&mut p, &[f64::NAN, 0.0]).is_err());
        assert_eq!(p, vec![0.0, 0.0]);
        assert_eq!(opt.step, 0);
    }

    #[test]
    fn clipping_bounds_the_norm() {
        let mut g = vec![3.0, 4.0];
        assert_eq!(clip_grad_norm(&mut g, 1.0), 5.0);
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn sgd_step() {
        let mut opt = Optimizer::new(
            OptimizerConfig {
                kind: OptimizerKind::Sgd,
                learning_rate: 0.5,
                max_grad_norm: None,
            },
            1,
        );
        let mut p = vec![1.0];
        opt.step(&mut p, &[2.0]).unwrap();
        assert_eq!(p, vec![0.0]);
    }
}
