//! State and action encodings.
//!
//! Layouts (also in `docs/encoding.md`):
//!
//! * global flat state: `[w_{0,0..K}, E_0, w_{1,0..K}, E_1, ..., P_{0..K}]`,
//!   length `L(K+1) + K`, raw units (mJ, mW);
//! * IRS agent input: `[w_{l,0..K}, E_l / e_max, b / max(B), onehot_L(l)]`;
//! * IRS action features: `[theta_n / 2pi, rho_n]` per element;
//! * action index: element `n` contributes digit `level_n * 2 + rho_n` with
//!   weight `(2^(b+1))^n` (element 0 least significant).

use std::f64::consts::PI;

use crate::channel::{ComplexMatrix, Geometry};
use crate::env::{EnvConfig, EnvState, IrsAction};
use crate::error::{Error, Result};

/// Largest cardinality that [`DiscreteActionSpace::iter`] will enumerate.
pub const MAX_ENUMERABLE: u64 = 1 << 24;

/// `f_k = 1` iff `rate > requirement`; ties are unsatisfied.
pub fn satisfaction_flag(rate: f64, requirement: f64) -> bool {
    rate > requirement
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalIrsState {
    /// `exp(-d_{l,k} / d_{l,0}) f_k`, each in `[0, 1]`.
    pub weighted_flags: Vec<f64>,
    pub energy_mj: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalBsState {
    pub powers_mw: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GlobalState {
    pub irs: Vec<LocalIrsState>,
    pub bs: LocalBsState,
}

pub fn make_irs_state(
    state: &EnvState,
    geometry: &Geometry,
    l: usize,
    reference_distance_m: f64,
) -> Result<LocalIrsState> {
    if l >= geometry.num_irs() || l >= state.energy.len() {
        return Err(Error::DimensionMismatch(format!("IRS {l} out of range")));
    }
    if !(reference_distance_m > 0.0) {
        return Err(Error::Domain("reference distance must be > 0".into()));
    }
    let weighted_flags = state
        .prev_rates
        .iter()
        .zip(&state.rate_requirements)
        .enumerate()
        .map(|(k, (&r, &q))| {
            if satisfaction_flag(r, q) {
                (-geometry.irs_user_distance(l, k) / reference_distance_m).exp()
            } else {
                0.0
            }
        })
        .collect();
    Ok(LocalIrsState {
        weighted_flags,
        energy_mj: state.energy[l],
    })
}

pub fn make_global_state(state: &EnvState, geometry: &Geometry, reference_distance_m: f64) -> Result<GlobalState> {
    let irs = (0..state.energy.len())
        .map(|l| make_irs_state(state, geometry, l, reference_distance_m))
        .collect::<Result<_>>()?;
    Ok(GlobalState {
        irs,
        bs: LocalBsState {
            powers_mw: state.prev_powers.clone(),
        },
    })
}

impl GlobalState {
    pub fn num_irs(&self) -> usize {
        self.irs.len()
    }

    pub fn num_users(&self) -> usize {
        self.bs.powers_mw.len()
    }

    pub fn flat_len(num_irs: usize, num_users: usize) -> usize {
        num_irs * (num_users + 1) + num_users
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.irs
            .iter()
            .flat_map(|s| s.weighted_flags.iter().copied().chain(std::iter::once(s.energy_mj)))
            .chain(self.bs.powers_mw.iter().copied())
            .collect()
    }

    pub fn from_flat(flat: &[f64], num_irs: usize, num_users: usize) -> Result<Self> {
        if flat.len() != Self::flat_len(num_irs, num_users) {
            return Err(Error::DimensionMismatch(format!(
                "flat state has length {}, expected {}",
                flat.len(),
                Self::flat_len(num_irs, num_users)
            )));
        }
        let irs = flat[..num_irs * (num_users + 1)]
            .chunks(num_users + 1)
            .map(|c| LocalIrsState {
                weighted_flags: c[..num_users].to_vec(),
                energy_mj: c[num_users],
            })
            .collect();
        Ok(Self {
            irs,
            bs: LocalBsState {
                powers_mw: flat[num_irs * (num_users + 1)..].to_vec(),
            },
        })
    }
}

// ============================================================================
// Discrete action space
// ============================================================================

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DiscreteActionSpace {
    pub resolution: u32,
    pub num_elements: usize,
}

impl DiscreteActionSpace {
    pub fn new(resolution: u32, num_elements: usize) -> Result<Self> {
        if resolution == 0 || num_elements == 0 {
            return Err(Error::InvalidDimension("resolution and element count must be >= 1".into()));
        }
        Ok(Self {
            resolution,
            num_elements,
        })
    }

    fn radix(&self) -> u64 {
        1u64 << (self.resolution + 1)
    }

    pub fn levels(&self) -> u32 {
        1u32 << self.resolution
    }

    /// `2^{(b+1)N}`, or `None` when it does not fit in a `u64`.
    pub fn cardinality(&self) -> Option<u64> {
        let bits = (self.resolution as u64 + 1).checked_mul(self.num_elements as u64)?;
        (bits < 64).then(|| 1u64 << bits)
    }

    /// `log2 |A|`.
    pub fn log2_cardinality(&self) -> u64 {
        (self.resolution as u64 + 1) * self.num_elements as u64
    }

    pub fn encode(&self, action: &IrsAction) -> Result<u64> {
        if action.resolution != self.resolution || action.num_elements() != self.num_elements {
            return Err(Error::DimensionMismatch("action does not belong to this space".into()));
        }
        if action.status.len() != self.num_elements {
            return Err(Error::DimensionMismatch("status length differs".into()));
        }
        let card = self.cardinality().ok_or_else(|| {
            Error::Domain(format!("action space of 2^{} entries is not indexable", self.log2_cardinality()))
        })?;
        let radix = self.radix();
        let mut index = 0u64;
        for n in (0..self.num_elements).rev() {
            let level = action.phase_levels[n] as u64;
            if level >= self.levels() as u64 {
                return Err(Error::Domain(format!("phase level {level} outside the lattice")));
            }
            index = index * radix + level * 2 + action.status[n] as u64;
        }
        debug_assert!(index < card);
        Ok(index)
    }

    pub fn decode(&self, index: u64) -> Result<IrsAction> {
        let card = self.cardinality().ok_or_else(|| {
            Error::Domain(format!("action space of 2^{} entries is not indexable", self.log2_cardinality()))
        })?;
        if index >= card {
            return Err(Error::OutOfRange {
                index,
                cardinality: card,
            });
        }
        let radix = self.radix();
        let mut rest = index;
        let mut phase_levels = Vec::with_capacity(self.num_elements);
        let mut status = Vec::with_capacity(self.num_elements);
        for _ in 0..self.num_elements {
            let digit = rest % radix;
            rest /= radix;
            phase_levels.push((digit / 2) as u32);
            status.push(digit % 2 == 1);
        }
        Ok(IrsAction {
            resolution: self.resolution,
            phase_levels,
            status,
        })
    }

    /// Lazily enumerates the space in index order.
    pub fn iter(&self) -> Result<impl Iterator<Item = IrsAction> + '_> {
        match self.cardinality() {
            Some(card) if card <= MAX_ENUMERABLE => {
                Ok((0..card).map(move |i| self.decode(i).expect("index below cardinality")))
            }
            _ => Err(Error::Domain(format!(
                "refusing to enumerate 2^{} actions",
                self.log2_cardinality()
            ))),
        }
    }
}

/// `[theta_n / 2pi, rho_n]` per element.
pub fn irs_action_features(action: &IrsAction) -> Vec<f64> {
    action
        .phases()
        .into_iter()
        .zip(&action.status)
        .flat_map(|(t, &on)| [t / (2.0 * PI), on as u8 as f64])
        .collect()
}

// ============================================================================
// Network inputs
// ============================================================================

/// Normalising encoder for agent and mixer inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct StateEncoder {
    pub num_irs: usize,
    pub num_users: usize,
    pub num_elements: usize,
    pub bs_antennas: usize,
    pub e_max_mj: f64,
    pub p_max_mw: f64,
    pub max_resolution: u32,
}

/// Parsed IRS agent input.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentInput {
    pub weighted_flags: Vec<f64>,
    pub energy_fraction: f64,
    pub resolution_fraction: f64,
    pub agent: usize,
}

impl StateEncoder {
    pub fn new(config: &EnvConfig) -> Self {
        Self {
            num_irs: config.num_irs,
            num_users: config.num_users,
            num_elements: config.irs.num_elements,
            bs_antennas: config.bs_antennas,
            e_max_mj: config.irs.e_max_mj,
            p_max_mw: config.p_max_mw(),
            max_resolution: config.irs.max_resolution(),
        }
    }

    /// `(K + 1) + 1 + L`.
    pub fn agent_input_len(&self) -> usize {
        self.num_users + 2 + self.num_irs
    }

    pub fn irs_action_len(&self) -> usize {
        2 * self.num_elements
    }

    pub fn bs_input_len(&self) -> usize {
        self.num_users
    }

    /// Real and imaginary parts of `V` (column-major by stream).
    pub fn bs_action_len(&self) -> usize {
        2 * self.bs_antennas * self.num_users
    }

    pub fn global_len(&self) -> usize {
        GlobalState::flat_len(self.num_irs, self.num_users)
    }

    pub fn resolution_feature(&self, bits: u32) -> f64 {
        bits as f64 / self.max_resolution as f64
    }

    pub fn agent_input(&self, state: &GlobalState, l: usize, resolution: u32) -> Result<Vec<f64>> {
        let s = state
            .irs
            .get(l)
            .ok_or_else(|| Error::DimensionMismatch(format!("IRS {l} out of range")))?;
        if s.weighted_flags.len() != self.num_users {
            return Err(Error::DimensionMismatch("weighted flag count differs from K".into()));
        }
        let mut x = Vec::with_capacity(self.agent_input_len());
        x.extend_from_slice(&s.weighted_flags);
        x.push(s.energy_mj / self.e_max_mj);
        x.push(self.resolution_feature(resolution));
        x.extend((0..self.num_irs).map(|i| (i == l) as u8 as f64));
        Ok(x)
    }

    pub fn parse_agent_input(&self, x: &[f64]) -> Result<AgentInput> {
        if x.len() != self.agent_input_len() {
            return Err(Error::DimensionMismatch("agent input length".into()));
        }
        let k = self.num_users;
        let onehot = &x[k + 2..];
        let agent = onehot
            .iter()
            .position(|&v| v == 1.0)
            .filter(|_| onehot.iter().filter(|&&v| v != 0.0).count() == 1)
            .ok_or_else(|| Error::Domain("agent index is not one-hot".into()))?;
        Ok(AgentInput {
            weighted_flags: x[..k].to_vec(),
            energy_fraction: x[k],
            resolution_fraction: x[k + 1],
            agent,
        })
    }

    /// Powers over `P_max`.
    pub fn bs_input(&self, state: &GlobalState) -> Vec<f64> {
        state.bs.powers_mw.iter().map(|p| p / self.p_max_mw).collect()
    }

    /// `V / sqrt(P_max)` as `[re, im]` pairs, stream by stream.
    pub fn bs_action_features(&self, beamformer: &ComplexMatrix) -> Vec<f64> {
        let scale = self.p_max_mw.sqrt();
        (0..beamformer.cols())
            .flat_map(|k| (0..beamformer.rows()).map(move |m| (m, k)))
            .flat_map(|(m, k)| {
                let z = beamformer[(m, k)] / scale;
                [z.re, z.im]
            })
            .collect()
    }

    /// Global state with energies over `e_max` and powers over `P_max`.
    pub fn global_features(&self, state: &GlobalState) -> Vec<f64> {
        state
            .irs
            .iter()
            .flat_map(|s| {
                s.weighted_flags
                    .iter()
                    .copied()
                    .chain(std::iter::once(s.energy_mj / self.e_max_mj))
            })
            .chain(self.bs_input(state))
            .collect()
    }

    pub fn high_mixer_aux_len(&self) -> usize {
        self.global_len() + self.num_irs * self.irs_action_len()
    }

    pub fn low_mixer_aux_len(&self) -> usize {
        self.global_len() + self.num_irs
    }

    /// Mixer input of the high-level head: `(s, x)`.
    pub fn high_mixer_aux(&self, state: &GlobalState, irs: &[IrsAction]) -> Vec<f64> {
        let mut aux = self.global_features(state);
        for a in irs {
            aux.extend(irs_action_features(a));
        }
        aux
    }

    /// Mixer input of the low-level head: `(s, b)`.
    pub fn low_mixer_aux(&self, state: &GlobalState, resolutions: &[u32]) -> Vec<f64> {
        let mut aux = self.global_features(state);
        aux.extend(resolutions.iter().map(|&b| self.resolution_feature(b)));
        aux
    }
}
