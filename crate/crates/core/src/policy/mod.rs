//! Decision layer: observation model, joint and factored belief updates,
//! the energy-constrained spectral-efficiency criterion, myopic channel
//! ranking, the access rule, and the baseline selection criteria.

pub mod optimal;

use crate::error::{Error, Result};
use crate::occupancy::{channel_idle, ChannelChain, JointTransition};
use crate::phy::{self, PowerParams, RateTable};
use rand::seq::SliceRandom;
use rand::Rng;

/// Belief over the 2^N joint occupancy states of the estimated channels.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefJoint {
    pub b: Vec<f64>,
}

impl BeliefJoint {
    /// Product belief from per-channel idle probabilities.
    pub fn from_factored(pi: &[f64]) -> Self {
        let states = 1usize << pi.len();
        let mut b = vec![0.0; states];
        for (s, slot) in b.iter_mut().enumerate() {
            let mut p = 1.0;
            for (i, &pi_i) in pi.iter().enumerate() {
                p *= if channel_idle(s, i) { pi_i } else { 1.0 - pi_i };
            }
            *slot = p;
        }
        Self { b }
    }

    pub fn n_channels(&self) -> usize {
        self.b.len().trailing_zeros() as usize
    }

    /// Marginal idle probability of one channel.
    pub fn marginal_idle(&self, ch: usize) -> f64 {
        self.b
            .iter()
            .enumerate()
            .filter(|(s, _)| channel_idle(*s, ch))
            .map(|(_, &p)| p)
            .sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.b.iter().sum()
    }
}

/// Factored belief: independent per-channel idle probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefFactored {
    pub pi: Vec<f64>,
}

/// Sizes of the estimate / sense / access action sets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionSets {
    /// Channels estimated per slot.
    pub lambda0: usize,
    /// Maximum channels sensed per slot.
    pub lambda1: usize,
    /// Channels accessed per slot (fixed to 1).
    pub lambda2: usize,
}

impl ActionSets {
    pub fn new(lambda0: usize, lambda1: usize, n: usize) -> Result<Self> {
        if lambda0 == 0 || lambda0 > n {
            return Err(Error::InvalidParameter(format!(
                "lambda0 must satisfy 1 <= lambda0 <= n_channels ({lambda0} vs {n})"
            )));
        }
        if lambda1 == 0 || lambda1 > lambda0 {
            return Err(Error::InvalidParameter(format!(
                "lambda1 must satisfy 1 <= lambda1 <= lambda0 ({lambda1} vs {lambda0})"
            )));
        }
        Ok(Self { lambda0, lambda1, lambda2: 1 })
    }
}

/// What the slot's sensing interaction on a channel revealed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SenseResult {
    /// Observed idle (o=1) and the transmission was acknowledged.
    IdleConfirmed,
    /// Observed idle (o=1) but the transmission collided (no ACK).
    Collision,
    /// Observed busy (o=0), no transmission.
    Busy,
    /// Observed idle (o=1) but no transmission was attempted, so no ACK
    /// evidence exists. Arises only for selection criteria that sense
    /// channels with zero spectral efficiency.
    IdleUnused,
}

/// The decision summary of one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotDecision {
    /// Sensed channel, `None` when the SU idles.
    pub a_hat: Option<usize>,
    /// Sensing observation (`true` = observed idle), if any.
    pub observed_idle: Option<bool>,
    /// Access indicator.
    pub access: bool,
    /// Spectral efficiency of the decided transmission, bits/s/Hz.
    pub eta: f64,
}

/// Probability of observing `o` (`true` = idle) on a channel whose true
/// occupancy is `s_idle`.
#[inline]
pub fn observation_prob(observed_idle: bool, s_idle: bool, p_d: f64, p_f: f64) -> f64 {
    match (observed_idle, s_idle) {
        (false, false) => p_d,
        (false, true) => p_f,
        (true, false) => 1.0 - p_d,
        (true, true) => 1.0 - p_f,
    }
}

/// Slot-level energy/time budget against which a transmission is gated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyBudget {
    /// Total estimation energy charged this slot (all estimated channels).
    pub e_est_total: f64,
    /// Sensing energy spent this slot including the candidate channel.
    pub e_sense: f64,
    /// Transmission time remaining for the candidate, in s.
    pub t_tr: f64,
}

/// Energy-constrained spectral efficiency: `2(k-1)` bits/s/Hz for the
/// fading region `k` of `g`, or zero when the region is 1, no transmission
/// time remains, or the slot energy budget fails.
pub fn spectral_efficiency(
    g: f64,
    e: f64,
    budget: &EnergyBudget,
    rt: &RateTable,
    pp: &PowerParams,
) -> f64 {
    let region = phy::gain_region(g, rt);
    if region == 1 || budget.t_tr <= 0.0 {
        return 0.0;
    }
    let m = rt.constellations[region - 1];
    let p_tr = match phy::transmit_power(g, m, pp) {
        Ok(p) => p,
        Err(_) => return 0.0,
    };
    let (e_tr, e_ckt) = phy::transmission_energies(p_tr, budget.t_tr, pp);
    if budget.e_sense + e_ckt + e_tr <= e - budget.e_est_total {
        rt.efficiency(region)
    } else {
        0.0
    }
}

/// Access rule: transmit exactly when the channel was observed idle.
#[inline]
pub fn access_decision(observed_idle: bool) -> bool {
    observed_idle
}

/// Predict step: push the belief through one slot of the joint chain.
pub fn propagate_belief(b: &BeliefJoint, jt: &JointTransition) -> BeliefJoint {
    let states = jt.states();
    debug_assert_eq!(b.b.len(), states);
    let mut pred = vec![0.0; states];
    for (from, &mass) in b.b.iter().enumerate() {
        if mass == 0.0 {
            continue;
        }
        for (to, slot) in pred.iter_mut().enumerate() {
            *slot += mass * jt.prob(from, to);
        }
    }
    BeliefJoint { b: pred }
}

/// Condition an already-propagated belief on the slot's sensing evidence
/// for channel `ch`, renormalizing over both occupancy branches.
pub fn condition_belief(
    pred: &BeliefJoint,
    ch: usize,
    outcome: SenseResult,
    p_d: f64,
    p_f: f64,
) -> Result<BeliefJoint> {
    let mut post = pred.b.clone();
    for (s, mass) in post.iter_mut().enumerate() {
        let idle = channel_idle(s, ch);
        let like = match outcome {
            SenseResult::IdleConfirmed => {
                if idle {
                    1.0
                } else {
                    0.0
                }
            }
            SenseResult::Collision => {
                if idle {
                    0.0
                } else {
                    1.0
                }
            }
            SenseResult::Busy => observation_prob(false, idle, p_d, p_f),
            SenseResult::IdleUnused => observation_prob(true, idle, p_d, p_f),
        };
        *mass *= like;
    }
    let w: f64 = post.iter().sum();
    if w <= 0.0 {
        return Err(Error::InconsistentObservation);
    }
    for mass in &mut post {
        *mass /= w;
    }
    Ok(BeliefJoint { b: post })
}

/// One-slot Bayes update of the joint belief.
///
/// `sensed` is `None` for a slot with no sensing (pure propagation through
/// the transition matrix), otherwise the sensed channel and its outcome.
pub fn update_belief_joint(
    b: &BeliefJoint,
    sensed: Option<(usize, SenseResult)>,
    jt: &JointTransition,
    p_d: f64,
    p_f: f64,
) -> Result<BeliefJoint> {
    let pred = propagate_belief(b, jt);
    match sensed {
        None => Ok(pred),
        Some((ch, outcome)) => condition_belief(&pred, ch, outcome, p_d, p_f),
    }
}

/// One-slot Bayes update of a single channel's idle belief.
///
/// `sensed` is `None` when the channel was not sensed this slot.
pub fn update_belief_myopic(
    pi: f64,
    sensed: Option<SenseResult>,
    chain: &ChannelChain,
    p_d: f64,
    p_f: f64,
) -> Result<f64> {
    let x = chain.idle_next(pi);
    let y = 1.0 - x;
    match sensed {
        None => Ok(x),
        Some(SenseResult::IdleConfirmed) => Ok(1.0),
        Some(SenseResult::Collision) => Ok(0.0),
        Some(SenseResult::Busy) => {
            let w = x * p_f + y * p_d;
            if w <= 0.0 {
                return Err(Error::InconsistentObservation);
            }
            Ok(x * p_f / w)
        }
        Some(SenseResult::IdleUnused) => {
            let w = x * (1.0 - p_f) + y * (1.0 - p_d);
            if w <= 0.0 {
                return Err(Error::InconsistentObservation);
            }
            Ok(x * (1.0 - p_f) / w)
        }
    }
}

/// Expected current-slot reward of sensing a channel: predicted idle
/// probability times its spectral efficiency.
#[inline]
pub fn myopic_expected_reward(pi: f64, chain: &ChannelChain, eta: f64) -> f64 {
    chain.idle_next(pi) * eta
}

fn rank_by_score(scores: &[(usize, f64)], lambda1: usize) -> Vec<usize> {
    let mut order: Vec<(usize, f64)> = scores.to_vec();
    // descending score, ties to the lower channel index
    order.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    order.into_iter().take(lambda1).map(|(i, _)| i).collect()
}

/// Proposed criterion: rank channels with non-zero spectral efficiency by
/// their expected myopic reward, keep at most `lambda1`.
pub fn rank_channels_myopic(
    pi: &[f64],
    etas: &[f64],
    chains: &[ChannelChain],
    lambda1: usize,
) -> Vec<usize> {
    let scores: Vec<(usize, f64)> = etas
        .iter()
        .enumerate()
        .filter(|(_, &eta)| eta > 0.0)
        .map(|(i, &eta)| (i, myopic_expected_reward(pi[i], &chains[i], eta)))
        .collect();
    rank_by_score(&scores, lambda1)
}

/// Belief-bandwidth criterion: rank by predicted idle probability times
/// channel bandwidth, ignoring gains and energy.
pub fn baseline_belief_bandwidth(
    pi: &[f64],
    bandwidths: &[f64],
    chains: &[ChannelChain],
    lambda1: usize,
) -> Vec<usize> {
    let scores: Vec<(usize, f64)> = pi
        .iter()
        .enumerate()
        .map(|(i, &p)| (i, chains[i].idle_next(p) * bandwidths[i]))
        .collect();
    rank_by_score(&scores, lambda1)
}

/// Random criterion: uniform permutation of the estimated channels,
/// truncated to `lambda1`.
pub fn baseline_random<R: Rng>(channels: &[usize], lambda1: usize, rng: &mut R) -> Vec<usize> {
    let mut order = channels.to_vec();
    order.shuffle(rng);
    order.truncate(lambda1);
    order
}

/// Constant-rate transmission value: `log2(fixed_m)` if the energy budget
/// passes with the power required to carry `fixed_m` at the actual gain,
/// else zero. No fading-region adaptation.
pub fn baseline_constant_rate(
    g: f64,
    e: f64,
    fixed_m: u32,
    budget: &EnergyBudget,
    pp: &PowerParams,
) -> f64 {
    if fixed_m <= 1 || budget.t_tr <= 0.0 {
        return 0.0;
    }
    let p_tr = match phy::transmit_power(g, fixed_m, pp) {
        Ok(p) => p,
        Err(_) => return 0.0,
    };
    let (e_tr, e_ckt) = phy::transmission_energies(p_tr, budget.t_tr, pp);
    if budget.e_sense + e_ckt + e_tr <= e - budget.e_est_total {
        (fixed_m as f64).log2()
    } else {
        0.0
    }
}
