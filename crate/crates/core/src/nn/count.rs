//! Closed-form weight counts of the hierarchical learner.
//!
//! Each fully connected net contributes `in*n_1 + sum n_{i-1} n_i + n_last*out`
//! (biases excluded). Mixers contribute their hypernetworks:
//! `n_mix * aux * (agents + 3) + n_mix` (W1, b1, w2 linear; b2 two-layer).

use serde::Serialize;

use super::NetworkConfig;
use crate::error::{Error, Result};

/// Which actor family sits under the low-level head.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ActorFamily {
    Wolpertinger,
    ProtoGaussian,
}

/// Problem sizes entering the count.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ProblemSize {
    pub num_irs: usize,
    pub num_users: usize,
    pub num_elements: usize,
    pub bs_antennas: usize,
    pub num_resolutions: usize,
    pub max_resolution: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParameterCount {
    /// Named terms in evaluation order.
    pub terms: Vec<(String, u64)>,
    pub total: u64,
}

/// Weights of `input -> hidden... -> output`.
pub fn dense_weights(input: usize, hidden: &[usize], output: usize) -> Result<u64> {
    let (first, last) = match (hidden.first(), hidden.last()) {
        (Some(f), Some(l)) => (*f, *l),
        _ => return Err(Error::InvalidDimension("at least one hidden layer is required".into())),
    };
    let inner: usize = hidden.windows(2).map(|w| w[0] * w[1]).sum();
    Ok((input * first + inner + last * output) as u64)
}

pub fn mixer_weights(hidden: usize, aux: usize, agents: usize) -> u64 {
    (hidden * aux * (agents + 3) + hidden) as u64
}

/// Weight count of every evaluated network the learner constructs.
pub fn count_parameters(net: &NetworkConfig, p: ProblemSize, family: ActorFamily) -> Result<ParameterCount> {
    if net.mixer_hidden == 0 {
        return Err(Error::InvalidDimension("mixer hidden width must be >= 1".into()));
    }
    let (l, k, n, m) = (p.num_irs, p.num_users, p.num_elements, p.bs_antennas);
    let agent_in = k + 2 + l;
    let global = l * (k + 1) + k;
    let mut terms: Vec<(String, u64)> = vec![
        ("high agents".into(), l as u64 * dense_weights(agent_in, &net.agent_hidden, p.num_resolutions)?),
        ("low irs agents".into(), l as u64 * dense_weights(agent_in + 2 * n, &net.agent_hidden, 1)?),
        ("low bs agent".into(), dense_weights(k + 2 * m * k, &net.agent_hidden, 1)?),
    ];
    match family {
        ActorFamily::Wolpertinger => {
            terms.push(("irs policies".into(), l as u64 * dense_weights(agent_in, &net.policy_hidden, 2 * n)?));
        }
        ActorFamily::ProtoGaussian => {
            terms.push(("irs policies".into(), l as u64 * dense_weights(agent_in, &net.policy_hidden, 4 * n)?));
            let logits = (1usize << p.max_resolution) + 2;
            terms.push((
                "mapping estimators".into(),
                l as u64 * dense_weights(2 * n + 1, &net.policy_hidden, n * logits)?,
            ));
        }
    }
    terms.push(("bs policy".into(), dense_weights(k, &net.policy_hidden, 2 * m * k)?));
    terms.push(("high mixer".into(), mixer_weights(net.mixer_hidden, global + 2 * n * l, l)));
    terms.push(("low mixer".into(), mixer_weights(net.mixer_hidden, global + l, l + 1)));
    let total = terms.iter().map(|(_, c)| c).sum();
    Ok(ParameterCount { terms, total })
}

/// The published expression evaluated as written: high-level agents with
/// input `K+2` and scalar output, low-level agents with input `K+2+2N`,
/// IRS policies with input `K+2` and scalar output, BS policy with input `K`
/// and scalar output, and single-hypernet mixers scaled by `L+1`.
pub fn published_count(net: &NetworkConfig, p: ProblemSize) -> Result<u64> {
    let (l, k, n) = (p.num_irs as u64, p.num_users, p.num_elements);
    let ha = dense_weights(k + 2, &net.agent_hidden, 1)?;
    let la = dense_weights(k + 2 + 2 * n, &net.agent_hidden, 1)?;
    let ip = dense_weights(k + 2, &net.policy_hidden, 1)?;
    let bp = dense_weights(k, &net.policy_hidden, 1)?;
    let (ku, nu) = (k as u64, n as u64);
    let nm = net.mixer_hidden as u64;
    let hmix = nm * (ku * l + ku + 2 * l + 1) * (l + 1);
    let lmix = nm * (ku * l + ku + 2 * l + 2 * nu * l) * (l + 1);
    Ok((ha + la + ip) * l + bp + hmix + lmix)
}
