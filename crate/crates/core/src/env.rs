//! Physical environment: SINR and rate evaluation, IRS power draw,
//! energy-buffer dynamics, the penalised reward and the one-slot transition.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::channel::{
    dbm_to_mw, draw_channels, ArrayDims, ChannelParams, ChannelSet, ComplexMatrix,
    DeploymentParams, Geometry,
};
use crate::error::{Error, Result};

/// Slack allowed when checking `tr(V^H V) <= P_max` after projection.
pub const POWER_TOLERANCE: f64 = 1e-9;

// ============================================================================
// Configuration
// ============================================================================

/// Per-IRS hardware and energy-buffer parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IrsConfig {
    pub num_elements: usize,
    /// Selectable phase resolutions in bits, ascending.
    pub resolutions: Vec<u32>,
    /// ON-state power per element for each resolution, mW.
    pub power_per_element_mw: BTreeMap<u32, f64>,
    pub e_min_mj: f64,
    pub e_max_mj: f64,
    pub slot_length_s: f64,
}

impl Default for IrsConfig {
    fn default() -> Self {
        Self {
            num_elements: 4,
            resolutions: vec![3, 4, 5],
            power_per_element_mw: BTreeMap::from([(3, 1.5), (4, 4.5), (5, 6.0)]),
            e_min_mj: 0.0,
            e_max_mj: 100.0,
            slot_length_s: 1.0,
        }
    }
}

impl IrsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_elements == 0 {
            return Err(Error::Config("irs.num_elements must be >= 1".into()));
        }
        if self.resolutions.is_empty() {
            return Err(Error::Config("irs.resolutions must not be empty".into()));
        }
        if self.resolutions.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("irs.resolutions must be strictly ascending".into()));
        }
        if self.resolutions[0] < 1 || *self.resolutions.last().unwrap() > 16 {
            return Err(Error::Config("irs.resolutions must lie in 1..=16 bits".into()));
        }
        for b in &self.resolutions {
            match self.power_per_element_mw.get(b) {
                Some(p) if *p >= 0.0 && p.is_finite() => {}
                _ => {
                    return Err(Error::Config(format!(
                        "irs.power_per_element_mw has no valid entry for {b} bits"
                    )))
                }
            }
        }
        if !(self.e_min_mj < self.e_max_mj) {
            return Err(Error::Config("irs.e_min_mj must be < irs.e_max_mj".into()));
        }
        if !(self.slot_length_s > 0.0) {
            return Err(Error::Config("irs.slot_length_s must be > 0".into()));
        }
        Ok(())
    }

    pub fn max_resolution(&self) -> u32 {
        *self.resolutions.last().expect("validated non-empty")
    }

    pub fn element_power(&self, bits: u32) -> Result<f64> {
        self.power_per_element_mw
            .get(&bits)
            .copied()
            .ok_or_else(|| Error::Domain(format!("no power entry for {bits}-bit resolution")))
    }
}

/// Trade-off coefficients of the penalty terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PenaltyCoefficients {
    pub rate: f64,
    pub power: f64,
    pub energy: f64,
}

impl Default for PenaltyCoefficients {
    fn default() -> Self {
        Self {
            rate: 1.0,
            power: 1.0,
            energy: 1.0,
        }
    }
}

/// How the energy penalty is evaluated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnergyPenaltyMode {
    /// `min(E_l(t) - e_min, 0)` on the stored (already clamped) energy.
    #[default]
    Literal,
    /// `min(E_l(t) - c_l(t) - e_min, 0)`, the shortfall before clamping.
    PreClampShortfall,
}

/// Per-episode user rate requirements, bits/s/Hz.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum RateRequirement {
    Uniform { low: f64, high: f64 },
    Constant { value: f64 },
}

impl Default for RateRequirement {
    fn default() -> Self {
        RateRequirement::Uniform {
            low: 0.5,
            high: 1.5,
        }
    }
}

impl RateRequirement {
    fn draw<R: Rng + ?Sized>(&self, num_users: usize, rng: &mut R) -> Vec<f64> {
        match *self {
            RateRequirement::Uniform { low, high } => (0..num_users)
                .map(|_| low + (high - low) * rng.random::<f64>())
                .collect(),
            RateRequirement::Constant { value } => vec![value; num_users],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub num_irs: usize,
    pub num_users: usize,
    pub bs_antennas: usize,
    pub irs: IrsConfig,
    pub p_max_dbm: f64,
    pub initial_energy_mj: f64,
    /// Mean of the Poisson harvest count per slot.
    pub harvest_mean: f64,
    /// Energy per harvested count, mJ.
    pub harvest_unit_mj: f64,
    pub penalty: PenaltyCoefficients,
    pub energy_penalty: EnergyPenaltyMode,
    pub rate_requirement: RateRequirement,
    /// Keep the episode's first channel draw for every slot.
    pub channel_hold: bool,
    /// `d_{l,0}` in the IRS state discount, metres.
    pub irs_reference_distance_m: f64,
    pub deployment: DeploymentParams,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            num_irs: 2,
            num_users: 2,
            bs_antennas: 2,
            irs: IrsConfig::default(),
            p_max_dbm: 5.0,
            initial_energy_mj: 50.0,
            harvest_mean: 2.2,
            harvest_unit_mj: 1.0,
            penalty: PenaltyCoefficients::default(),
            energy_penalty: EnergyPenaltyMode::Literal,
            rate_requirement: RateRequirement::default(),
            channel_hold: false,
            irs_reference_distance_m: 100.0,
            deployment: DeploymentParams::default(),
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_irs == 0 {
            return Err(Error::Config("env.num_irs must be >= 1".into()));
        }
        if self.num_users == 0 {
            return Err(Error::Config("env.num_users must be >= 1".into()));
        }
        if self.bs_antennas == 0 {
            return Err(Error::Config("env.bs_antennas must be >= 1".into()));
        }
        self.irs.validate()?;
        self.deployment.validate()?;
        if !self.p_max_dbm.is_finite() {
            return Err(Error::Config("env.p_max_dbm must be finite".into()));
        }
        if !(self.irs.e_min_mj..=self.irs.e_max_mj).contains(&self.initial_energy_mj) {
            return Err(Error::Config(
                "env.initial_energy_mj must lie in [e_min_mj, e_max_mj]".into(),
            ));
        }
        if !(self.harvest_mean >= 0.0 && self.harvest_unit_mj >= 0.0) {
            return Err(Error::Config("env.harvest_mean and env.harvest_unit_mj must be >= 0".into()));
        }
        let p = self.penalty;
        if !(p.rate >= 0.0 && p.power >= 0.0 && p.energy >= 0.0) {
            return Err(Error::Config("env.penalty coefficients must be >= 0".into()));
        }
        if let RateRequirement::Uniform { low, high } = self.rate_requirement {
            if !(0.0 <= low && low <= high) {
                return Err(Error::Config("env.rate_requirement needs 0 <= low <= high".into()));
            }
        }
        if !(self.irs_reference_distance_m > 0.0) {
            return Err(Error::Config("env.irs_reference_distance_m must be > 0".into()));
        }
        Ok(())
    }

    pub fn p_max_mw(&self) -> f64 {
        dbm_to_mw(self.p_max_dbm)
    }

    pub fn dims(&self) -> ArrayDims {
        ArrayDims {
            bs_antennas: self.bs_antennas,
            irs_elements: vec![self.irs.num_elements; self.num_irs],
        }
    }
}

// ============================================================================
// Actions and state
// ============================================================================

/// Low-level plus high-level action of one IRS.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct IrsAction {
    pub resolution: u32,
    /// Phase of element `n` is `phase_levels[n] * 2 pi / 2^resolution`.
    pub phase_levels: Vec<u32>,
    /// ON/OFF status per element.
    pub status: Vec<bool>,
}

impl IrsAction {
    pub fn phase_step(resolution: u32) -> f64 {
        2.0 * PI / (1u64 << resolution) as f64
    }

    pub fn phases(&self) -> Vec<f64> {
        let step = Self::phase_step(self.resolution);
        self.phase_levels.iter().map(|&q| q as f64 * step).collect()
    }

    pub fn num_elements(&self) -> usize {
        self.phase_levels.len()
    }

    pub fn num_on(&self) -> usize {
        self.status.iter().filter(|&&s| s).count()
    }

    /// Reflection coefficients `rho_n exp(j theta_n)` with unit amplitude.
    pub fn reflection(&self) -> Vec<Complex64> {
        self.phases()
            .into_iter()
            .zip(&self.status)
            .map(|(t, &on)| {
                if on {
                    Complex64::from_polar(1.0, t)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect()
    }

    pub fn validate(&self, irs: &IrsConfig) -> Result<()> {
        if !irs.resolutions.contains(&self.resolution) {
            return Err(Error::Domain(format!(
                "resolution {} bits not in {:?}",
                self.resolution, irs.resolutions
            )));
        }
        if self.phase_levels.len() != self.status.len() {
            return Err(Error::DimensionMismatch("phase and status lengths differ".into()));
        }
        let levels = 1u64 << self.resolution;
        if self.phase_levels.iter().any(|&q| q as u64 >= levels) {
            return Err(Error::Domain("phase level outside the resolution lattice".into()));
        }
        Ok(())
    }
}

/// BS beamformer `V` (`M x K`) plus one [`IrsAction`] per IRS.
#[derive(Clone, Debug, PartialEq)]
pub struct HierarchicalAction {
    pub beamformer: ComplexMatrix,
    pub irs: Vec<IrsAction>,
}

impl HierarchicalAction {
    pub fn resolutions(&self) -> Vec<u32> {
        self.irs.iter().map(|a| a.resolution).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvState {
    /// Stored energy per IRS, mJ.
    pub energy: Vec<f64>,
    /// Per-user rates of the previous slot, bits/s/Hz.
    pub prev_rates: Vec<f64>,
    /// Per-stream transmit powers of the previous slot, mW.
    pub prev_powers: Vec<f64>,
    pub rate_requirements: Vec<f64>,
    pub channels: ChannelSet,
    pub slot: usize,
}

// ============================================================================
// Physical layer
// ============================================================================

/// `g_k = sum_l (h_{l,k}^RU)^H diag(rho_l e^{j theta_l}) H_l^BR + (h_k^BU)^H`.
pub fn effective_channel(
    channels: &ChannelSet,
    action: &HierarchicalAction,
    user: usize,
) -> Result<ComplexMatrix> {
    if action.irs.len() != channels.num_irs() {
        return Err(Error::DimensionMismatch(format!(
            "{} IRS actions for {} IRSs",
            action.irs.len(),
            channels.num_irs()
        )));
    }
    if user >= channels.num_users() {
        return Err(Error::DimensionMismatch(format!("user {user} out of range")));
    }
    let direct = &channels.bs_user[user];
    let m = direct.rows();
    let mut g: Vec<Complex64> = direct.as_slice().iter().map(|z| z.conj()).collect();
    for (l, irs) in action.irs.iter().enumerate() {
        let h_br = &channels.bs_irs[l];
        let h_ru = &channels.irs_user[l][user];
        let n = h_br.rows();
        if h_br.cols() != m || h_ru.rows() != n || irs.num_elements() != n {
            return Err(Error::DimensionMismatch(format!("IRS {l} dimensions inconsistent")));
        }
        for (row, phi) in irs.reflection().into_iter().enumerate() {
            if phi == Complex64::new(0.0, 0.0) {
                continue;
            }
            let w = h_ru.as_slice()[row].conj() * phi;
            for (gm, h) in g.iter_mut().zip(&h_br.as_slice()[row * m..(row + 1) * m]) {
                *gm += w * h;
            }
        }
    }
    ComplexMatrix::from_vec(1, m, g)
}

/// `gamma_k = |g_k v_k|^2 / (sum_{j != k} |g_k v_j|^2 + noise)`.
pub fn compute_sinr(
    channels: &ChannelSet,
    action: &HierarchicalAction,
    noise_power_mw: f64,
) -> Result<Vec<f64>> {
    if !(noise_power_mw > 0.0) {
        return Err(Error::Domain("noise power must be > 0".into()));
    }
    let k_users = channels.num_users();
    let v = &action.beamformer;
    if v.cols() != k_users || v.rows() != channels.bs_antennas() {
        return Err(Error::DimensionMismatch(format!(
            "beamformer is {:?}, expected {}x{k_users}",
            v.shape(),
            channels.bs_antennas()
        )));
    }
    (0..k_users)
        .map(|k| {
            let gv = effective_channel(channels, action, k)?.matmul(v)?;
            let gains: Vec<f64> = gv.as_slice().iter().map(|z| z.norm_sqr()).collect();
            let interference: f64 = gains
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != k)
                .map(|(_, g)| g)
                .sum();
            Ok(gains[k] / (interference + noise_power_mw))
        })
        .collect()
}

pub fn user_rates(sinr: &[f64]) -> Vec<f64> {
    sinr.iter().map(|g| (1.0 + g).log2()).collect()
}

/// `R = sum_k log2(1 + gamma_k)`.
pub fn system_rate(sinr: &[f64]) -> f64 {
    sinr.iter().map(|g| (1.0 + g).log2()).sum()
}

/// `P_l = sum_n rho_{l,n} mu_l(b_l)`, mW.
pub fn irs_power(action: &HierarchicalAction, irs: &IrsConfig) -> Result<Vec<f64>> {
    action
        .irs
        .iter()
        .map(|a| Ok(a.num_on() as f64 * irs.element_power(a.resolution)?))
        .collect()
}

/// `E' = min(max(E - P dt, e_min) + a, e_max)` per IRS.
pub fn update_energy(energy: &[f64], power_mw: &[f64], harvest_mj: &[f64], irs: &IrsConfig) -> Vec<f64> {
    energy
        .iter()
        .zip(power_mw)
        .zip(harvest_mj)
        .map(|((&e, &p), &a)| {
            let spent = (e - p * irs.slot_length_s).max(irs.e_min_mj);
            (spent + a).min(irs.e_max_mj)
        })
        .collect()
}

/// Independent Poisson(`mean`) counts per IRS, scaled by `unit_mj`.
pub fn draw_harvest<R: Rng + ?Sized>(
    rng: &mut R,
    num_irs: usize,
    mean: f64,
    unit_mj: f64,
) -> Result<Vec<f64>> {
    if !(mean >= 0.0 && mean.is_finite()) {
        return Err(Error::Domain(format!("harvest mean {mean} must be >= 0")));
    }
    if mean == 0.0 {
        return Ok(vec![0.0; num_irs]);
    }
    let poisson = Poisson::new(mean).map_err(|e| Error::Domain(e.to_string()))?;
    Ok((0..num_irs).map(|_| poisson.sample(rng) * unit_mj).collect())
}

/// `||v_k||^2` per column.
pub fn stream_powers(beamformer: &ComplexMatrix) -> Vec<f64> {
    (0..beamformer.cols())
        .map(|k| beamformer.column_norm_sq(k))
        .collect()
}

/// Scales `V` onto the ball `tr(V^H V) <= p_max` when outside it.
/// Returns the (possibly) scaled matrix and whether scaling happened.
pub fn project_power(beamformer: &ComplexMatrix, p_max_mw: f64) -> (ComplexMatrix, bool) {
    let total = beamformer.frobenius_sq();
    if total > p_max_mw {
        (beamformer.scale((p_max_mw / total).sqrt()), true)
    } else {
        (beamformer.clone(), false)
    }
}

/// The four reward parts; `total` is their sum.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardTerms {
    pub rate: f64,
    pub rate_penalty: f64,
    pub power_penalty: f64,
    pub energy_penalty: f64,
    pub total: f64,
}

/// Rate plus the three non-positive penalty parts.
///
/// `energy_margin[l]` is the quantity compared with `e_min` in the energy
/// part: the stored energy in literal mode, the pre-clamp remainder in
/// shortfall mode.
pub fn reward(
    rates: &[f64],
    requirements: &[f64],
    stream_powers_mw: &[f64],
    p_max_mw: f64,
    energy_margin: &[f64],
    e_min_mj: f64,
    coefficients: &PenaltyCoefficients,
) -> RewardTerms {
    let rate: f64 = rates.iter().sum();
    let rate_penalty = coefficients.rate
        * rates
            .iter()
            .zip(requirements)
            .map(|(r, q)| (r - q).min(0.0))
            .sum::<f64>();
    let power_penalty =
        coefficients.power * (p_max_mw - stream_powers_mw.iter().sum::<f64>()).min(0.0);
    let energy_penalty = coefficients.energy
        * energy_margin
            .iter()
            .map(|e| (e - e_min_mj).min(0.0))
            .sum::<f64>();
    RewardTerms {
        rate,
        rate_penalty,
        power_penalty,
        energy_penalty,
        total: rate + rate_penalty + power_penalty + energy_penalty,
    }
}

// ============================================================================
// Transition
// ============================================================================

#[derive(Clone, Debug, PartialEq)]
pub struct StepDiagnostics {
    pub sinr: Vec<f64>,
    pub rates: Vec<f64>,
    /// `R_k > R_k^req` (strict).
    pub satisfied: Vec<bool>,
    /// `R_k >= R_k^req`, used for the satisfaction-rate metric.
    pub meets_requirement: Vec<bool>,
    pub irs_power_mw: Vec<f64>,
    pub harvest_mj: Vec<f64>,
    /// Slots where `E - c` fell below `e_min` before clamping.
    pub energy_shortfall: Vec<bool>,
    /// Requested beamformer exceeded `P_max` and was scaled.
    pub projected: bool,
    /// Transmitted beamformer exceeds `P_max` (must never happen).
    pub power_violation: bool,
    /// Next-state energy outside `[e_min, e_max]` (must never happen).
    pub energy_violation: bool,
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub next: EnvState,
    pub reward: RewardTerms,
    pub diagnostics: StepDiagnostics,
}

/// Static description of one deployment. `reset` and `step` are pure given
/// an explicit random source.
#[derive(Clone, Debug)]
pub struct Environment {
    pub config: EnvConfig,
    pub channel: ChannelParams,
    pub geometry: Geometry,
}

impl Environment {
    pub fn new(config: EnvConfig, channel: ChannelParams, geometry: Geometry) -> Result<Self> {
        config.validate()?;
        channel.validate()?;
        geometry.validate(config.num_irs, config.num_users)?;
        Ok(Self {
            config,
            channel,
            geometry,
        })
    }

    /// Random deployment drawn from `rng`.
    pub fn sample<R: Rng + ?Sized>(config: EnvConfig, channel: ChannelParams, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let geometry = Geometry::sample(config.num_irs, config.num_users, &config.deployment, rng)?;
        Self::new(config, channel, geometry)
    }

    pub fn p_max_mw(&self) -> f64 {
        self.config.p_max_mw()
    }

    pub fn noise_power_mw(&self) -> f64 {
        self.channel.noise_power_mw()
    }

    pub fn draw_channels<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ChannelSet> {
        draw_channels(&self.geometry, &self.config.dims(), &self.channel, rng)
    }

    /// Episode start: initial energy, zero history, fresh requirements and channels.
    pub fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<EnvState> {
        let c = &self.config;
        let rate_requirements = c.rate_requirement.draw(c.num_users, rng);
        let channels = self.draw_channels(rng)?;
        Ok(EnvState {
            energy: vec![c.initial_energy_mj; c.num_irs],
            prev_rates: vec![0.0; c.num_users],
            prev_powers: vec![0.0; c.num_users],
            rate_requirements,
            channels,
            slot: 0,
        })
    }

    pub fn validate_action(&self, action: &HierarchicalAction) -> Result<()> {
        let c = &self.config;
        if action.beamformer.shape() != (c.bs_antennas, c.num_users) {
            return Err(Error::DimensionMismatch(format!(
                "beamformer is {:?}, expected {}x{}",
                action.beamformer.shape(),
                c.bs_antennas,
                c.num_users
            )));
        }
        if action.irs.len() != c.num_irs {
            return Err(Error::DimensionMismatch("wrong number of IRS actions".into()));
        }
        for a in &action.irs {
            a.validate(&c.irs)?;
            if a.num_elements() != c.irs.num_elements {
                return Err(Error::DimensionMismatch("wrong number of IRS elements".into()));
            }
        }
        Ok(())
    }

    /// Executes `action` on the current slot and returns the next state.
    ///
    /// The penalty on transmit power sees the requested beamformer; the
    /// physical layer sees it after projection onto the power ball.
    pub fn step<R: Rng + ?Sized>(
        &self,
        state: &EnvState,
        action: &HierarchicalAction,
        rng: &mut R,
    ) -> Result<StepOutcome> {
        self.validate_action(action)?;
        let c = &self.config;
        let p_max = self.p_max_mw();
        let requested_powers = stream_powers(&action.beamformer);
        let (beamformer, projected) = project_power(&action.beamformer, p_max);
        let transmitted = HierarchicalAction {
            beamformer,
            irs: action.irs.clone(),
        };
        let power_violation =
            transmitted.beamformer.frobenius_sq() > p_max * (1.0 + POWER_TOLERANCE);

        let sinr = compute_sinr(&state.channels, &transmitted, self.noise_power_mw())?;
        let rates = user_rates(&sinr);
        let irs_power_mw = irs_power(action, &c.irs)?;
        let pre_clamp: Vec<f64> = state
            .energy
            .iter()
            .zip(&irs_power_mw)
            .map(|(e, p)| e - p * c.irs.slot_length_s)
            .collect();
        let energy_margin = match c.energy_penalty {
            EnergyPenaltyMode::Literal => state.energy.clone(),
            EnergyPenaltyMode::PreClampShortfall => pre_clamp.clone(),
        };
        let reward = reward(
            &rates,
            &state.rate_requirements,
            &requested_powers,
            p_max,
            &energy_margin,
            c.irs.e_min_mj,
            &c.penalty,
        );

        let harvest_mj = draw_harvest(rng, c.num_irs, c.harvest_mean, c.harvest_unit_mj)?;
        let energy = update_energy(&state.energy, &irs_power_mw, &harvest_mj, &c.irs);
        let energy_violation = energy
            .iter()
            .any(|e| !(c.irs.e_min_mj..=c.irs.e_max_mj).contains(e));
        let channels = if c.channel_hold {
            state.channels.clone()
        } else {
            self.draw_channels(rng)?
        };

        let diagnostics = StepDiagnostics {
            satisfied: rates
                .iter()
                .zip(&state.rate_requirements)
                .map(|(r, q)| r > q)
                .collect(),
            meets_requirement: rates
                .iter()
                .zip(&state.rate_requirements)
                .map(|(r, q)| r >= q)
                .collect(),
            energy_shortfall: pre_clamp.iter().map(|e| *e < c.irs.e_min_mj).collect(),
            sinr,
            rates: rates.clone(),
            irs_power_mw,
            harvest_mj,
            projected,
            power_violation,
            energy_violation,
        };
        let next = EnvState {
            energy,
            prev_rates: rates,
            prev_powers: stream_powers(&transmitted.beamformer),
            rate_requirements: state.rate_requirements.clone(),
            channels,
            slot: state.slot + 1,
        };
        Ok(StepOutcome {
            next,
            reward,
            diagnostics,
        })
    }
}
