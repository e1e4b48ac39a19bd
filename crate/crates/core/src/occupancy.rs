//! Primary-network occupancy: independent two-state Markov chains per
//! channel, their joint product chain, and ground-truth stepping for the
//! simulator. State 0 is occupied, state 1 is idle.

use crate::error::{Error, Result};

/// Largest channel count for which the 2^N joint matrix is built.
pub const MAX_JOINT_CHANNELS: usize = 12;

/// Two-state occupancy chain of one PU channel.
///
/// `alpha` is the occupied-to-idle transition probability, `beta` the
/// probability that an idle channel stays idle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelChain {
    pub alpha: f64,
    pub beta: f64,
}

impl ChannelChain {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) || !(0.0..=1.0).contains(&beta) {
            return Err(Error::InvalidParameter(format!(
                "transition probabilities must lie in [0,1] (alpha={alpha}, beta={beta})"
            )));
        }
        Ok(Self { alpha, beta })
    }

    /// P(next = 1 | current), the predicted idle probability.
    #[inline]
    pub fn idle_next(&self, current_idle_prob: f64) -> f64 {
        current_idle_prob * self.beta + (1.0 - current_idle_prob) * self.alpha
    }

    /// Transition probability between concrete states.
    #[inline]
    pub fn prob(&self, from_idle: bool, to_idle: bool) -> f64 {
        let stay_idle = if from_idle { self.beta } else { self.alpha };
        if to_idle {
            stay_idle
        } else {
            1.0 - stay_idle
        }
    }
}

/// Occupancy vector of the primary network, one entry per channel
/// (`true` = idle).
pub type PnState = Vec<bool>;

/// Index of a joint state: bit `i` set means channel `i` idle.
#[inline]
pub fn joint_index(state: &[bool]) -> usize {
    state
        .iter()
        .enumerate()
        .fold(0usize, |acc, (i, &idle)| acc | ((idle as usize) << i))
}

/// Whether channel `ch` is idle in joint state `s`.
#[inline]
pub fn channel_idle(s: usize, ch: usize) -> bool {
    (s >> ch) & 1 == 1
}

/// Row-stochastic 2^N x 2^N transition matrix of the product chain.
/// Entry `[from][to]` is the probability of moving from joint state `from`
/// to joint state `to` in one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTransition {
    pub n: usize,
    p: Vec<f64>,
}

impl JointTransition {
    #[inline]
    pub fn prob(&self, from: usize, to: usize) -> f64 {
        self.p[from * (1 << self.n) + to]
    }

    pub fn states(&self) -> usize {
        1 << self.n
    }
}

/// Build the joint transition matrix of independent per-channel chains.
pub fn joint_transition(chains: &[ChannelChain]) -> Result<JointTransition> {
    let n = chains.len();
    if n == 0 || n > MAX_JOINT_CHANNELS {
        return Err(Error::JointTooLarge { n });
    }
    let states = 1usize << n;
    let mut p = vec![0.0; states * states];
    for from in 0..states {
        for to in 0..states {
            let mut prob = 1.0;
            for (i, chain) in chains.iter().enumerate() {
                prob *= chain.prob(channel_idle(from, i), channel_idle(to, i));
            }
            p[from * states + to] = prob;
        }
    }
    Ok(JointTransition { n, p })
}

/// Advance one channel by one slot given a uniform draw in [0,1).
#[inline]
pub fn step_channel(idle: bool, chain: &ChannelChain, u: f64) -> bool {
    if idle {
        u < chain.beta
    } else {
        u < chain.alpha
    }
}

/// Stationary idle probability alpha / (alpha + 1 - beta).
pub fn stationary_idle_prob(chain: &ChannelChain) -> Result<f64> {
    let denom = chain.alpha + 1.0 - chain.beta;
    if denom <= 0.0 {
        return Err(Error::DegenerateChain);
    }
    Ok(chain.alpha / denom)
}
