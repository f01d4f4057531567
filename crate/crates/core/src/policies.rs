//! Low-level actors: the Wolpertinger IRS policy, the proto-Gaussian IRS
//! policy with its mapping estimator, and the BS beamforming policy.
//!
//! Proto-actions live in feature space `[theta_n / 2pi, rho_n]` per element,
//! the same layout the low-level critics read for discrete actions.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::ComplexMatrix;
use crate::env::{project_power, IrsAction};
use crate::error::{Error, Result};
use crate::mdp::DiscreteActionSpace;
use crate::nn::{Activation, Mlp, MlpShape, OptimizerConfig, Tape, Trainable};
use crate::rng::standard_normal;

const TWO_PI: f64 = 2.0 * PI;

/// Continuous action of one IRS.
#[derive(Clone, Debug, PartialEq)]
pub struct ProtoAction {
    /// Radians, nominally in `[0, 2pi]`.
    pub phases: Vec<f64>,
    /// Nominally in `[0, 1]`.
    pub statuses: Vec<f64>,
}

impl ProtoAction {
    pub fn features(&self) -> Vec<f64> {
        self.phases
            .iter()
            .zip(&self.statuses)
            .flat_map(|(t, r)| [t / TWO_PI, *r])
            .collect()
    }

    pub fn from_features(f: &[f64]) -> Self {
        Self {
            phases: f.iter().step_by(2).map(|v| v * TWO_PI).collect(),
            statuses: f.iter().skip(1).step_by(2).copied().collect(),
        }
    }

    /// Exact lattice point of a discrete action.
    pub fn of(action: &IrsAction) -> Self {
        Self {
            phases: action.phases(),
            statuses: action.status.iter().map(|&s| s as u8 as f64).collect(),
        }
    }
}

// ============================================================================
// Nearest neighbours on the discrete lattice
// ============================================================================

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KnnMode {
    /// Best-first search over the separable distance; exact for any size.
    #[default]
    Exact,
    /// Per-element nearest/second-nearest sampling.
    Sampled,
}

fn phase_gap(a: f64, b: f64, wrap: bool) -> f64 {
    if wrap {
        let d = (a - b).rem_euclid(TWO_PI);
        d.min(TWO_PI - d)
    } else {
        (a - b).abs()
    }
}

/// Per-element squared distances of every digit (`level * 2 + status`),
/// sorted ascending, ties by digit.
fn sorted_digit_costs(proto: &ProtoAction, space: &DiscreteActionSpace, wrap: bool) -> Vec<Vec<(f64, u64)>> {
    let step = TWO_PI / space.levels() as f64;
    (0..space.num_elements)
        .map(|n| {
            let mut costs: Vec<(f64, u64)> = (0..space.levels() as u64)
                .flat_map(|q| {
                    let dp = phase_gap(proto.phases[n], q as f64 * step, wrap);
                    [0u64, 1].map(|s| {
                        let ds = proto.statuses[n] - s as f64;
                        (dp * dp + ds * ds, q * 2 + s)
                    })
                })
                .collect();
            costs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            costs
        })
        .collect()
}

#[derive(PartialEq)]
struct Frontier {
    cost: f64,
    index: u64,
    ranks: Vec<usize>,
    last: usize,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on (cost, index).
        other.cost.total_cmp(&self.cost).then(other.index.cmp(&self.index))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// The `k` lattice points closest to `proto` in Euclidean distance, nearest
/// first. `k` is clamped to `|A|`.
pub fn k_nearest(proto: &ProtoAction, space: &DiscreteActionSpace, k: usize, wrap: bool) -> Result<Vec<IrsAction>> {
    if proto.phases.len() != space.num_elements || proto.statuses.len() != space.num_elements {
        return Err(Error::DimensionMismatch("proto-action length".into()));
    }
    let card = space.cardinality();
    let k = match card {
        Some(c) if (k as u64) > c => c as usize,
        _ => k,
    };
    if k == 0 {
        return Err(Error::Domain("k must be >= 1".into()));
    }
    let costs = sorted_digit_costs(proto, space, wrap);
    let radix = 1u64 << (space.resolution + 1);
    let encode = |ranks: &[usize]| -> u64 {
        ranks
            .iter()
            .enumerate()
            .rev()
            .fold(0u64, |acc, (n, &r)| acc.wrapping_mul(radix).wrapping_add(costs[n][r].1))
    };
    let cost_of = |ranks: &[usize]| ranks.iter().enumerate().map(|(n, &r)| costs[n][r].0).sum::<f64>();

    // Each tuple's unique parent decrements its last non-zero rank, so
    // children only advance coordinates at or after that position.
    let mut heap = BinaryHeap::new();
    let root = vec![0usize; space.num_elements];
    heap.push(Frontier {
        cost: cost_of(&root),
        index: encode(&root),
        ranks: root,
        last: 0,
    });
    let mut out = Vec::with_capacity(k);
    while let Some(f) = heap.pop() {
        for n in f.last..space.num_elements {
            if f.ranks[n] + 1 < costs[n].len() {
                let mut ranks = f.ranks.clone();
                ranks[n] += 1;
                heap.push(Frontier {
                    cost: cost_of(&ranks),
                    index: encode(&ranks),
                    ranks,
                    last: n,
                });
            }
        }
        let digits: Vec<u64> = f.ranks.iter().enumerate().map(|(n, &r)| costs[n][r].1).collect();
        out.push(IrsAction {
            resolution: space.resolution,
            phase_levels: digits.iter().map(|d| (d / 2) as u32).collect(),
            status: digits.iter().map(|d| d % 2 == 1).collect(),
        });
        if out.len() == k {
            break;
        }
    }
    Ok(out)
}

/// Lattice level nearest to `phase`: midpoints go to the lower level,
/// results clamp to `[0, 2^b - 1]` (wrapping to 0 when `wrap`).
pub fn round_phase(phase: f64, resolution: u32, wrap: bool) -> u32 {
    let levels = 1u64 << resolution;
    let x = phase / (TWO_PI / levels as f64);
    let q = (x - 0.5).ceil();
    if wrap {
        (q as i64).rem_euclid(levels as i64) as u32
    } else {
        q.clamp(0.0, (levels - 1) as f64) as u32
    }
}

/// Candidates from independent per-element nearest/second-nearest choices;
/// the first is the all-nearest point.
pub fn sampled_neighbours<R: Rng + ?Sized>(
    proto: &ProtoAction,
    space: &DiscreteActionSpace,
    k: usize,
    wrap: bool,
    rng: &mut R,
) -> Result<Vec<IrsAction>> {
    let step = TWO_PI / space.levels() as f64;
    let top = space.levels() - 1;
    let options: Vec<([u32; 2], f64, [bool; 2], f64)> = (0..space.num_elements)
        .map(|n| {
            let near = round_phase(proto.phases[n], space.resolution, wrap);
            let x = proto.phases[n] / step;
            let other = if x > near as f64 {
                if near == top { if wrap { 0 } else { near.saturating_sub(1) } } else { near + 1 }
            } else if near == 0 {
                if wrap { top } else { 1.min(top) }
            } else {
                near - 1
            };
            let d1 = phase_gap(proto.phases[n], near as f64 * step, wrap);
            let d2 = phase_gap(proto.phases[n], other as f64 * step, wrap);
            let p_phase = if d1 + d2 > 0.0 { d1 / (d1 + d2) } else { 0.5 };
            let on = proto.statuses[n] > 0.5;
            let p_status = (proto.statuses[n] - on as u8 as f64).abs().min(0.5);
            ([near, other], p_phase, [on, !on], p_status)
        })
        .collect();
    let nearest = IrsAction {
        resolution: space.resolution,
        phase_levels: options.iter().map(|o| o.0[0]).collect(),
        status: options.iter().map(|o| o.2[0]).collect(),
    };
    let mut out = vec![nearest];
    let mut attempts = 0;
    while out.len() < k && attempts < 20 * k {
        attempts += 1;
        let cand = IrsAction {
            resolution: space.resolution,
            phase_levels: options.iter().map(|o| o.0[(rng.random::<f64>() < o.1) as usize]).collect(),
            status: options.iter().map(|o| o.2[(rng.random::<f64>() < o.3) as usize]).collect(),
        };
        if !out.contains(&cand) {
            out.push(cand);
        }
    }
    Ok(out)
}

// ============================================================================
// Wolpertinger policy
// ============================================================================

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WolpertingerConfig {
    pub k: usize,
    pub knn: KnnMode,
    pub wrap_phase_distance: bool,
    /// Gaussian noise added to proto features while exploring.
    pub exploration_std: f64,
}

impl Default for WolpertingerConfig {
    fn default() -> Self {
        Self {
            k: 8,
            knn: KnnMode::Exact,
            wrap_phase_distance: false,
            exploration_std: 0.1,
        }
    }
}

/// Output transform of the IRS actor: `theta = pi (1 + tanh o)`,
/// `rho = sigmoid o'`. Returns features and `dfeature / do`.
fn proto_from_raw(raw: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut f = Vec::with_capacity(2 * n);
    let mut d = vec![0.0; 2 * n];
    for e in 0..n {
        let t = raw[e].tanh();
        let s = Activation::Sigmoid.apply(raw[n + e]);
        f.push((1.0 + t) / 2.0);
        f.push(s);
        d[e] = (1.0 - t * t) / 2.0;
        d[n + e] = s * (1.0 - s);
    }
    (f, d)
}

#[derive(Clone, Debug)]
pub struct WolpertingerPolicy {
    pub actor: Trainable<Mlp>,
    pub config: WolpertingerConfig,
    pub num_elements: usize,
}

impl WolpertingerPolicy {
    pub fn new<R: Rng + ?Sized>(
        shape: MlpShape,
        num_elements: usize,
        config: WolpertingerConfig,
        optimizer: OptimizerConfig,
        rng: &mut R,
    ) -> Result<Self> {
        if shape.output_len() != 2 * num_elements {
            return Err(Error::DimensionMismatch("actor must emit 2N values".into()));
        }
        if config.k == 0 {
            return Err(Error::Config("wolpertinger.k must be >= 1".into()));
        }
        Ok(Self {
            actor: Trainable::new(Mlp::new(shape, rng), optimizer),
            config,
            num_elements,
        })
    }

    /// Proto features `[theta/2pi, rho]` per element.
    pub fn proto_features(&self, input: &[f64]) -> Result<Vec<f64>> {
        let raw = self.actor.net.forward(input)?;
        Ok(proto_from_raw(&raw, self.num_elements).0)
    }

    pub fn proto(&self, input: &[f64]) -> Result<ProtoAction> {
        Ok(ProtoAction::from_features(&self.proto_features(input)?))
    }

    pub fn candidates<R: Rng + ?Sized>(&self, proto: &ProtoAction, space: &DiscreteActionSpace, rng: &mut R) -> Result<Vec<IrsAction>> {
        let k = match space.cardinality() {
            Some(c) if self.config.k as u64 > c => {
                log::warn!("k = {} exceeds |A| = {c}; clamping", self.config.k);
                c as usize
            }
            _ => self.config.k,
        };
        match self.config.knn {
            KnnMode::Exact => k_nearest(proto, space, k, self.config.wrap_phase_distance),
            KnnMode::Sampled => sampled_neighbours(proto, space, k, self.config.wrap_phase_distance, rng),
        }
    }

    /// Proto-action, its `k` neighbours, then the neighbour with the largest
    /// `q`; ties keep the earlier (nearer) candidate.
    pub fn select<R, Q>(&self, input: &[f64], resolution: u32, explore: bool, mut q: Q, rng: &mut R) -> Result<IrsAction>
    where
        R: Rng + ?Sized,
        Q: FnMut(&IrsAction) -> Result<f64>,
    {
        let mut f = self.proto_features(input)?;
        if explore && self.config.exploration_std > 0.0 {
            for v in &mut f {
                *v = (*v + self.config.exploration_std * standard_normal(rng)).clamp(0.0, 1.0);
            }
        }
        let proto = ProtoAction::from_features(&f);
        let space = DiscreteActionSpace::new(resolution, self.num_elements)?;
        let cands = self.candidates(&proto, &space, rng)?;
        best_by_q(cands, &mut q)
    }

    /// Gradient of `-mean_j Q(x_j, proto(x_j))` with respect to the actor.
    /// `dq(j, features)` returns `dQ / dfeatures` at the continuous proto-action.
    pub fn actor_gradient<F>(&self, inputs: &[Vec<f64>], mut dq: F) -> Result<Vec<f64>>
    where
        F: FnMut(usize, &[f64]) -> Result<Vec<f64>>,
    {
        if inputs.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let n = self.num_elements;
        let mut grad = self.actor.net.zero_grad();
        let scale = -1.0 / inputs.len() as f64;
        for (j, x) in inputs.iter().enumerate() {
            let tape = self.actor.net.forward_tape(x)?;
            let (f, d) = proto_from_raw(tape.output(), n);
            let g = dq(j, &f)?;
            if g.len() != 2 * n {
                return Err(Error::DimensionMismatch("dQ/dproto length".into()));
            }
            let mut up = vec![0.0; 2 * n];
            for e in 0..n {
                up[e] = scale * g[2 * e] * d[e];
                up[n + e] = scale * g[2 * e + 1] * d[n + e];
            }
            self.actor.net.backward(&tape, &up, &mut grad)?;
        }
        Ok(grad)
    }

    pub fn actor_update<F>(&mut self, inputs: &[Vec<f64>], dq: F) -> Result<()>
    where
        F: FnMut(usize, &[f64]) -> Result<Vec<f64>>,
    {
        let g = self.actor_gradient(inputs, dq)?;
        self.actor.apply(&g)
    }
}

fn best_by_q<Q>(cands: Vec<IrsAction>, q: &mut Q) -> Result<IrsAction>
where
    Q: FnMut(&IrsAction) -> Result<f64>,
{
    let mut best: Option<(f64, IrsAction)> = None;
    for c in cands {
        let v = q(&c)?;
        if best.as_ref().is_none_or(|(bv, _)| v > *bv) {
            best = Some((v, c));
        }
    }
    best.map(|b| b.1).ok_or_else(|| Error::Domain("no candidate actions".into()))
}

// ============================================================================
// BS beamforming policy
// ============================================================================

#[derive(Clone, Debug)]
pub struct BsPolicy {
    pub actor: Trainable<Mlp>,
    pub bs_antennas: usize,
    pub num_users: usize,
    pub p_max_mw: f64,
    /// Gaussian noise on the tanh outputs while exploring.
    pub exploration_std: f64,
}

impl BsPolicy {
    pub fn new<R: Rng + ?Sized>(
        shape: MlpShape,
        bs_antennas: usize,
        num_users: usize,
        p_max_mw: f64,
        exploration_std: f64,
        optimizer: OptimizerConfig,
        rng: &mut R,
    ) -> Result<Self> {
        if shape.output_len() != 2 * bs_antennas * num_users || shape.output != Activation::Tanh {
            return Err(Error::DimensionMismatch("BS actor must emit 2MK tanh values".into()));
        }
        Ok(Self {
            actor: Trainable::new(Mlp::new(shape, rng), optimizer),
            bs_antennas,
            num_users,
            p_max_mw,
            exploration_std,
        })
    }

    fn output_scale(&self) -> f64 {
        (self.p_max_mw / (2 * self.bs_antennas * self.num_users) as f64).sqrt()
    }

    /// Tanh outputs in `[-1, 1]`, optionally perturbed.
    pub fn raw<R: Rng + ?Sized>(&self, input: &[f64], explore: bool, rng: &mut R) -> Result<Vec<f64>> {
        let mut o = self.actor.net.forward(input)?;
        if explore && self.exploration_std > 0.0 {
            for v in &mut o {
                *v = (*v + self.exploration_std * standard_normal(rng)).clamp(-1.0, 1.0);
            }
        }
        Ok(o)
    }

    /// `V[m, k] = s (o[2(kM+m)] + j o[2(kM+m)+1])` with `s = sqrt(P_max / 2MK)`,
    /// projected onto the power ball.
    pub fn beamformer(&self, raw: &[f64]) -> Result<ComplexMatrix> {
        raw_to_beamformer(raw, self.bs_antennas, self.num_users, self.p_max_mw)
    }

    /// Critic features `V / sqrt(P_max)` of a raw output.
    pub fn features(&self, raw: &[f64]) -> Vec<f64> {
        let s = self.output_scale() / self.p_max_mw.sqrt();
        raw.iter().map(|v| v * s).collect()
    }

    /// Gradient of `-mean_j Q(x_j, V(x_j))`; projection is the identity
    /// inside the ball. `dq(j, features)` returns `dQ / dfeatures`.
    pub fn actor_gradient<F>(&self, inputs: &[Vec<f64>], mut dq: F) -> Result<Vec<f64>>
    where
        F: FnMut(usize, &[f64]) -> Result<Vec<f64>>,
    {
        if inputs.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let s = self.output_scale() / self.p_max_mw.sqrt();
        let scale = -1.0 / inputs.len() as f64;
        let mut grad = self.actor.net.zero_grad();
        for (j, x) in inputs.iter().enumerate() {
            let tape: Tape = self.actor.net.forward_tape(x)?;
            let f = self.features(tape.output());
            let g = dq(j, &f)?;
            let up: Vec<f64> = g.iter().map(|v| scale * v * s).collect();
            self.actor.net.backward(&tape, &up, &mut grad)?;
        }
        Ok(grad)
    }

    pub fn actor_update<F>(&mut self, inputs: &[Vec<f64>], dq: F) -> Result<()>
    where
        F: FnMut(usize, &[f64]) -> Result<Vec<f64>>,
    {
        let g = self.actor_gradient(inputs, dq)?;
        self.actor.apply(&g)
    }
}

/// Shared by every BS actor: raw `[-1, 1]` outputs to a feasible `V`.
pub fn raw_to_beamformer(raw: &[f64], bs_antennas: usize, num_users: usize, p_max_mw: f64) -> Result<ComplexMatrix> {
    if raw.len() != 2 * bs_antennas * num_users {
        return Err(Error::DimensionMismatch("raw beamformer length".into()));
    }
    let s = (p_max_mw / (2 * bs_antennas * num_users) as f64).sqrt();
    let mut v = ComplexMatrix::zeros(bs_antennas, num_users);
    for k in 0..num_users {
        for m in 0..bs_antennas {
            let i = 2 * (k * bs_antennas + m);
            v[(m, k)] = Complex64::new(raw[i], raw[i + 1]) * s;
        }
    }
    Ok(project_power(&v, p_max_mw).0)
}

// ============================================================================
// Proto-Gaussian policy
// ============================================================================

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 1.0;
/// ln(2 pi), spelled out so every build profile uses the same bits.
const LN_2PI: f64 = 1.837_877_066_409_345_3;
/// Proto status above this maps to ON.
pub const STATUS_THRESHOLD: f64 = 0.5;

/// Deterministic map from a proto vector `e = [phase_1..N, status_1..N]`
/// to the lattice: `phase = pi (1 + e_n)` rounded (midpoint to the lower
/// level, clamped), status ON iff `e_{N+n} > 0.5`.
pub fn map_proto(e: &[f64], resolution: u32) -> Result<IrsAction> {
    if e.len() % 2 != 0 || e.is_empty() {
        return Err(Error::DimensionMismatch("proto vector must have even length".into()));
    }
    let n = e.len() / 2;
    Ok(IrsAction {
        resolution,
        phase_levels: e[..n].iter().map(|v| round_phase(PI * (1.0 + v), resolution, false)).collect(),
        status: e[n..].iter().map(|&v| v > STATUS_THRESHOLD).collect(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PgSample {
    pub e: Vec<f64>,
    pub log_prob: f64,
    pub action: IrsAction,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtoGaussianConfig {
    /// Subtract the batch-mean `Q` in the score-function estimator.
    pub baseline: bool,
}

impl Default for ProtoGaussianConfig {
    fn default() -> Self {
        Self { baseline: true }
    }
}

/// Diagonal Gaussian over `e` with `tanh` mean and clamped log-std.
#[derive(Clone, Debug)]
pub struct ProtoGaussianPolicy {
    pub actor: Trainable<Mlp>,
    pub num_elements: usize,
    pub config: ProtoGaussianConfig,
}

impl ProtoGaussianPolicy {
    pub fn new<R: Rng + ?Sized>(
        shape: MlpShape,
        num_elements: usize,
        config: ProtoGaussianConfig,
        optimizer: OptimizerConfig,
        rng: &mut R,
    ) -> Result<Self> {
        if shape.output_len() != 4 * num_elements {
            return Err(Error::DimensionMismatch("proto-Gaussian actor must emit 4N values".into()));
        }
        let n = num_elements;
        let mut net = Mlp::new(shape, rng);
        // Status means start on the ON threshold so both statuses are
        // sampled equally often at first.
        let len = net.params.len();
        net.params[len - 3 * n..len - 2 * n].fill(STATUS_THRESHOLD.atanh());
        Ok(Self {
            actor: Trainable::new(net, optimizer),
            num_elements,
            config,
        })
    }

    /// `(mean, log_std)`, each of length `2N`.
    pub fn distribution(&self, input: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let raw = self.actor.net.forward(input)?;
        Ok(split_raw(&raw, 2 * self.num_elements))
    }

    pub fn sample<R: Rng + ?Sized>(&self, input: &[f64], resolution: u32, rng: &mut R) -> Result<PgSample> {
        let (mean, log_std) = self.distribution(input)?;
        let e: Vec<f64> = mean
            .iter()
            .zip(&log_std)
            .map(|(m, l)| m + l.exp() * standard_normal(rng))
            .collect();
        let log_prob = gaussian_log_density(&e, &mean, &log_std);
        let action = map_proto(&e, resolution)?;
        Ok(PgSample { e, log_prob, action })
    }

    /// `phi(mean)`.
    pub fn deterministic(&self, input: &[f64], resolution: u32) -> Result<IrsAction> {
        map_proto(&self.distribution(input)?.0, resolution)
    }

    /// Gradient of `-mean_j (Q_j - c) log mu(e_j | x_j)` with `c` the
    /// supplied baseline (0 when `None`).
    pub fn score_gradient(&self, inputs: &[Vec<f64>], protos: &[Vec<f64>], q: &[f64], baseline: Option<f64>) -> Result<Vec<f64>> {
        if inputs.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if inputs.len() != protos.len() || inputs.len() != q.len() {
            return Err(Error::DimensionMismatch("score-gradient batch lengths".into()));
        }
        let d = 2 * self.num_elements;
        let c = baseline.unwrap_or(0.0);
        let scale = -1.0 / inputs.len() as f64;
        let mut grad = self.actor.net.zero_grad();
        for ((x, e), qj) in inputs.iter().zip(protos).zip(q) {
            let tape = self.actor.net.forward_tape(x)?;
            let raw = tape.output();
            let (mean, log_std) = split_raw(raw, d);
            let w = scale * (qj - c);
            let mut up = vec![0.0; 2 * d];
            for i in 0..d {
                let var = (2.0 * log_std[i]).exp();
                let diff = e[i] - mean[i];
                up[i] = w * diff / var * (1.0 - mean[i] * mean[i]);
                if (LOG_STD_MIN..=LOG_STD_MAX).contains(&raw[d + i]) {
                    up[d + i] = w * (diff * diff / var - 1.0);
                }
            }
            self.actor.net.backward(&tape, &up, &mut grad)?;
        }
        Ok(grad)
    }

    /// Score-function step with the configured baseline.
    pub fn update(&mut self, inputs: &[Vec<f64>], protos: &[Vec<f64>], q: &[f64]) -> Result<()> {
        let baseline = self
            .config
            .baseline
            .then(|| q.iter().sum::<f64>() / q.len().max(1) as f64);
        let g = self.score_gradient(inputs, protos, q, baseline)?;
        self.actor.apply(&g)
    }
}

fn split_raw(raw: &[f64], d: usize) -> (Vec<f64>, Vec<f64>) {
    let mean = raw[..d].iter().map(|v| v.tanh()).collect();
    let log_std = raw[d..].iter().map(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX)).collect();
    (mean, log_std)
}

pub fn gaussian_log_density(e: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    e.iter()
        .zip(mean)
        .zip(log_std)
        .map(|((x, m), l)| {
            let z = (x - m) / l.exp();
            -0.5 * z * z - l - 0.5 * LN_2PI
        })
        .sum()
}

// ============================================================================
// Mapping estimator
// ============================================================================

/// Factored categorical `phi_hat(x | e)`: per element, `2^{b_max}` phase
/// logits (masked to `2^b`) and 2 status logits. Input `[e, b / b_max]`.
#[derive(Clone, Debug)]
pub struct MappingEstimator {
    pub net: Trainable<Mlp>,
    pub num_elements: usize,
    pub max_resolution: u32,
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    logits.iter().map(|v| v - lse).collect()
}

impl MappingEstimator {
    pub fn shape(num_elements: usize, max_resolution: u32, hidden: &[usize], act: Activation) -> Result<MlpShape> {
        let per = (1usize << max_resolution) + 2;
        MlpShape::stack(2 * num_elements + 1, hidden, num_elements * per, act, Activation::Identity)
    }

    pub fn new<R: Rng + ?Sized>(shape: MlpShape, num_elements: usize, max_resolution: u32, optimizer: OptimizerConfig, rng: &mut R) -> Result<Self> {
        let per = (1usize << max_resolution) + 2;
        if shape.input_len() != 2 * num_elements + 1 || shape.output_len() != num_elements * per {
            return Err(Error::DimensionMismatch("estimator shape".into()));
        }
        Ok(Self {
            net: Trainable::new(Mlp::new(shape, rng), optimizer),
            num_elements,
            max_resolution,
        })
    }

    fn per_element(&self) -> usize {
        (1usize << self.max_resolution) + 2
    }

    fn input(&self, e: &[f64], resolution: u32) -> Vec<f64> {
        let mut x = e.to_vec();
        x.push(resolution as f64 / self.max_resolution as f64);
        x
    }

    /// Per-element log-probabilities `(phase, status)`.
    fn log_probs(&self, logits: &[f64], resolution: u32) -> Vec<(Vec<f64>, Vec<f64>)> {
        let per = self.per_element();
        let levels = 1usize << resolution;
        logits
            .chunks_exact(per)
            .map(|c| (log_softmax(&c[..levels]), log_softmax(&c[per - 2..])))
            .collect()
    }

    /// `-log phi_hat(action | e)`.
    pub fn nll(&self, e: &[f64], action: &IrsAction) -> Result<f64> {
        self.check(e, action)?;
        let logits = self.net.net.forward(&self.input(e, action.resolution))?;
        Ok(self
            .log_probs(&logits, action.resolution)
            .iter()
            .enumerate()
            .map(|(n, (lp, ls))| -lp[action.phase_levels[n] as usize] - ls[action.status[n] as usize])
            .sum())
    }

    fn check(&self, e: &[f64], action: &IrsAction) -> Result<()> {
        if e.len() != 2 * self.num_elements || action.num_elements() != self.num_elements {
            return Err(Error::DimensionMismatch("estimator sample".into()));
        }
        if action.resolution == 0 || action.resolution > self.max_resolution {
            return Err(Error::Domain("resolution above the estimator maximum".into()));
        }
        Ok(())
    }

    pub fn predict(&self, e: &[f64], resolution: u32) -> Result<IrsAction> {
        let logits = self.net.net.forward(&self.input(e, resolution))?;
        let lp = self.log_probs(&logits, resolution);
        Ok(IrsAction {
            resolution,
            phase_levels: lp.iter().map(|(p, _)| crate::maq::argmax(p) as u32).collect(),
            status: lp.iter().map(|(_, s)| s[1] > s[0]).collect(),
        })
    }

    /// Mean NLL over the batch and its gradient.
    pub fn loss_and_gradient(&self, batch: &[(Vec<f64>, IrsAction)]) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let per = self.per_element();
        let scale = 1.0 / batch.len() as f64;
        let mut grad = self.net.net.zero_grad();
        let mut loss = 0.0;
        for (e, a) in batch {
            self.check(e, a)?;
            let tape = self.net.net.forward_tape(&self.input(e, a.resolution))?;
            let lp = self.log_probs(tape.output(), a.resolution);
            let mut up = vec![0.0; self.num_elements * per];
            for (n, (p, s)) in lp.iter().enumerate() {
                let q = a.phase_levels[n] as usize;
                let st = a.status[n] as usize;
                loss -= scale * (p[q] + s[st]);
                for (i, v) in p.iter().enumerate() {
                    up[n * per + i] = scale * (v.exp() - (i == q) as u8 as f64);
                }
                for (i, v) in s.iter().enumerate() {
                    up[n * per + per - 2 + i] = scale * (v.exp() - (i == st) as u8 as f64);
                }
            }
            self.net.net.backward(&tape, &up, &mut grad)?;
        }
        Ok((loss, grad))
    }

    pub fn update(&mut self, batch: &[(Vec<f64>, IrsAction)]) -> Result<f64> {
        let (loss, g) = self.loss_and_gradient(batch)?;
        self.net.apply(&g)?;
        Ok(loss)
    }
}
