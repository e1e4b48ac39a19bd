//! Finite-horizon value recursion for the channel-aware optimal sensing
//! policy.
//!
//! The value of a belief/energy/gain state is the best expected sum of
//! duty-weighted spectral efficiencies over the remaining slots. Future
//! channel gains are integrated region-by-region at each region's
//! representative gain; future-value terms over the independent per-channel
//! regions are taken with an exact max-of-independent-discrete-variables
//! expectation instead of enumerating all K^N gain combinations.
//!
//! A `Planner` owns a memo table keyed on (remaining horizon, belief,
//! energy). It must not be shared between threads; one planner per
//! replication, reused across the slots of an episode.

use std::collections::HashMap;

use crate::engine::energy_transition;
use crate::error::{Error, Result};
use crate::occupancy::{ChannelChain, JointTransition};
use crate::phy::{self, PowerParams, RateTable};
use crate::policy::{propagate_belief, BeliefJoint, SenseResult};

/// Hard ceilings for the exact recursion.
pub const MAX_OPTIMAL_CHANNELS: usize = 4;
pub const MAX_OPTIMAL_HORIZON: usize = 6;

/// Everything the recursion needs that is constant over an episode.
#[derive(Debug, Clone)]
pub struct PlannerContext {
    pub jt: JointTransition,
    pub chains: Vec<ChannelChain>,
    pub p_d: f64,
    pub p_f: f64,
    pub rt: RateTable,
    pub pp: PowerParams,
    /// Estimation energy charged per active slot (all estimated channels).
    pub e_est_total: f64,
    /// Sensing energy of one channel in the future-slot model.
    pub e_sense: f64,
    /// Transmission time in the future-slot model, in s.
    pub t_tr: f64,
    /// Slot duration, in s.
    pub slot_t: f64,
    pub p_h: f64,
    pub e_h: f64,
    pub e_max: f64,
    /// Duty-weighted reward per region in the future-slot model.
    region_reward: Vec<f64>,
    /// Transmission energy (radiated + circuit) per region at the region's
    /// representative gain, in the future-slot model. Infinite for region 1.
    region_tx_energy: Vec<f64>,
    /// Largest possible one-slot consumption. Above `t * max_slot_cost`
    /// every budget gate over the remaining `t` slots passes, so the value
    /// no longer depends on the exact battery level.
    max_slot_cost: f64,
}

impl PlannerContext {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        chains: Vec<ChannelChain>,
        jt: JointTransition,
        p_d: f64,
        p_f: f64,
        rt: RateTable,
        pp: PowerParams,
        e_est_total: f64,
        e_sense: f64,
        t_tr: f64,
        slot_t: f64,
        p_h: f64,
        e_h: f64,
        e_max: f64,
    ) -> Result<Self> {
        if chains.len() > MAX_OPTIMAL_CHANNELS {
            return Err(Error::OptimalInfeasible);
        }
        let duty = (t_tr / slot_t).max(0.0);
        let mut region_reward = Vec::with_capacity(rt.k);
        let mut region_tx_energy = Vec::with_capacity(rt.k);
        for region in 1..=rt.k {
            if region == 1 || t_tr <= 0.0 {
                region_reward.push(0.0);
                region_tx_energy.push(f64::INFINITY);
                continue;
            }
            let g = rt.region_rep_gain[region - 1];
            let m = rt.constellations[region - 1];
            let p_tr = phy::transmit_power(g, m, &pp)?;
            let (e_tr, e_ckt) = phy::transmission_energies(p_tr, t_tr, &pp);
            region_reward.push(rt.efficiency(region) * duty);
            region_tx_energy.push(e_tr + e_ckt);
        }
        let max_tx = region_tx_energy
            .iter()
            .copied()
            .filter(|v| v.is_finite())
            .fold(0.0f64, f64::max);
        let max_slot_cost = e_est_total + e_sense + max_tx;
        Ok(Self {
            jt,
            chains,
            p_d,
            p_f,
            rt,
            pp,
            e_est_total,
            e_sense,
            t_tr,
            slot_t,
            p_h,
            e_h,
            e_max,
            region_reward,
            region_tx_energy,
            max_slot_cost,
        })
    }

    pub fn n_channels(&self) -> usize {
        self.chains.len()
    }
}

/// Current-slot inputs for one candidate channel, evaluated by the caller
/// (actual gain, actual sensing cost under the slot's fading draw).
#[derive(Debug, Clone, Copy)]
pub struct ChannelSlotInput {
    /// Spectral efficiency if sensed and accessed this slot; zero marks the
    /// channel unavailable.
    pub eta: f64,
    /// Fraction of the slot spent transmitting.
    pub duty: f64,
    /// Sensing energy of this channel this slot.
    pub e_sense: f64,
    /// Radiated-plus-circuit transmission energy this slot.
    pub e_tx: f64,
}

const NO_BELIEF: u32 = u32::MAX;

type BeliefKey = [u64; 16];

fn belief_key(b: &BeliefJoint) -> BeliefKey {
    let mut key = [0u64; 16];
    for (i, &v) in b.b.iter().enumerate() {
        key[i] = v.to_bits();
    }
    key
}

/// Memoizing evaluator of the finite-horizon value recursion.
pub struct Planner<'a> {
    ctx: &'a PlannerContext,
    beliefs: Vec<BeliefJoint>,
    belief_ids: HashMap<BeliefKey, u32>,
    memo: HashMap<(u8, u32, u64), f64>,
}

/// Expansion of one belief: its one-slot propagation and the per-channel
/// conditioned branches.
struct Expansion {
    prop: u32,
    marginals: Vec<f64>,
    // per channel: (ack belief, nack belief, observed-busy belief)
    branches: Vec<(u32, u32, u32)>,
}

impl<'a> Planner<'a> {
    pub fn new(ctx: &'a PlannerContext) -> Self {
        Self { ctx, beliefs: Vec::new(), belief_ids: HashMap::new(), memo: HashMap::new() }
    }

    pub fn intern(&mut self, b: &BeliefJoint) -> u32 {
        let key = belief_key(b);
        if let Some(&id) = self.belief_ids.get(&key) {
            return id;
        }
        let id = self.beliefs.len() as u32;
        self.beliefs.push(b.clone());
        self.belief_ids.insert(key, id);
        id
    }

    fn condition(&mut self, prop_id: u32, ch: usize, outcome: SenseResult) -> u32 {
        let prop = self.beliefs[prop_id as usize].clone();
        match crate::policy::condition_belief(&prop, ch, outcome, self.ctx.p_d, self.ctx.p_f) {
            Ok(b) => self.intern(&b),
            Err(_) => NO_BELIEF, // zero-probability branch, never weighted
        }
    }

    fn expand(&mut self, belief_id: u32) -> Expansion {
        let b = self.beliefs[belief_id as usize].clone();
        let prop_belief = propagate_belief(&b, &self.ctx.jt);
        let prop = self.intern(&prop_belief);
        let n = self.ctx.n_channels();
        let marginals: Vec<f64> = (0..n).map(|ch| prop_belief.marginal_idle(ch)).collect();
        let mut branches = Vec::with_capacity(n);
        for ch in 0..n {
            let ack = self.condition(prop, ch, SenseResult::IdleConfirmed);
            let nack = self.condition(prop, ch, SenseResult::Collision);
            let busy = self.condition(prop, ch, SenseResult::Busy);
            branches.push((ack, nack, busy));
        }
        Expansion { prop, marginals, branches }
    }

    /// Expected continuation over the Bernoulli harvest branch.
    fn harvest_expectation(&mut self, t: u8, belief_id: u32, e: f64, e_c: f64) -> f64 {
        let ctx = self.ctx;
        let (p_h, e_h, e_max) = (ctx.p_h, ctx.e_h, ctx.e_max);
        let mut v = 0.0;
        if p_h > 0.0 {
            let e_gain = energy_transition(e, e_c, e_h, e_max).expect("planner budget gate");
            v += p_h * self.value_marginal(t, belief_id, e_gain);
        }
        if p_h < 1.0 {
            let e_none = energy_transition(e, e_c, 0.0, e_max).expect("planner budget gate");
            v += (1.0 - p_h) * self.value_marginal(t, belief_id, e_none);
        }
        v
    }

    /// Feasible-region bitmask at battery `e` (bit r set when region r+1
    /// clears the budget).
    fn feasibility_mask(&self, e: f64) -> u64 {
        let ctx = self.ctx;
        let mut mask = 0u64;
        for region in 2..=ctx.rt.k {
            if ctx.e_sense + ctx.region_tx_energy[region - 1] <= e - ctx.e_est_total {
                mask |= 1 << region;
            }
        }
        mask
    }

    /// Closed-form horizon-1 value: only the immediate duty-weighted reward
    /// remains, so the value depends on the belief and the feasibility mask
    /// alone.
    fn horizon_one(&mut self, belief_id: u32, mask: u64) -> f64 {
        let key = (1u8, belief_id, mask);
        if let Some(&v) = self.memo.get(&key) {
            return v;
        }
        let ctx = self.ctx;
        let (n, k) = (ctx.n_channels(), ctx.rt.k);
        let b = self.beliefs[belief_id as usize].clone();
        let prop = propagate_belief(&b, &ctx.jt);
        let mut action_values = vec![f64::NEG_INFINITY; n * k];
        for ch in 0..n {
            let p_ack = prop.marginal_idle(ch) * (1.0 - ctx.p_f);
            for region in 2..=k {
                if mask & (1 << region) != 0 {
                    action_values[ch * k + region - 1] = p_ack * ctx.region_reward[region - 1];
                }
            }
        }
        let v = expected_max(0.0, &action_values, &ctx.rt.region_probs, n, k);
        self.memo.insert(key, v);
        v
    }

    /// W_t(b, e): expectation of V_t over next-slot gain regions.
    fn value_marginal(&mut self, t: u8, belief_id: u32, e: f64) -> f64 {
        if t == 0 || belief_id == NO_BELIEF {
            return 0.0;
        }
        let ctx = self.ctx;
        let n = ctx.n_channels();
        let k = ctx.rt.k;
        if t == 1 {
            // idle earns nothing at the last slot; without estimation or a
            // feasible region the value is exactly zero
            if e < ctx.e_est_total {
                return 0.0;
            }
            let mask = self.feasibility_mask(e);
            if mask == 0 {
                return 0.0;
            }
            return self.horizon_one(belief_id, mask);
        }
        // above t * max_slot_cost every gate passes and the exact battery
        // level stops mattering; collapse those states onto one key
        let e_key = if e >= t as f64 * ctx.max_slot_cost { u64::MAX } else { e.to_bits() };
        let key = (t, belief_id, e_key);
        if let Some(&v) = self.memo.get(&key) {
            return v;
        }

        let v = if e < ctx.e_est_total {
            // cannot afford estimation: forced idle, zero consumption
            let exp = self.expand(belief_id);
            self.harvest_expectation(t - 1, exp.prop, e, 0.0)
        } else {
            let exp = self.expand(belief_id);
            let idle_val = self.harvest_expectation(t - 1, exp.prop, e, ctx.e_est_total);
            // value of sensing channel `ch` whose gain falls in each region
            let mut action_values = vec![f64::NEG_INFINITY; n * k];
            for ch in 0..n {
                // a channel is sensed only when some region clears the
                // budget, which also guarantees the sense-only charge fits
                let any_feasible = (2..=k)
                    .any(|r| ctx.e_sense + ctx.region_tx_energy[r - 1] <= e - ctx.e_est_total);
                if !any_feasible {
                    continue;
                }
                let m1 = exp.marginals[ch];
                let m0 = 1.0 - m1;
                let p_ack = m1 * (1.0 - ctx.p_f);
                let p_nack = m0 * (1.0 - ctx.p_d);
                let p_busy = m1 * ctx.p_f + m0 * ctx.p_d;
                let (ack, nack, busy) = exp.branches[ch];
                let e_c_busy = ctx.e_est_total + ctx.e_sense;
                let busy_term = if p_busy > 0.0 {
                    p_busy * self.harvest_expectation(t - 1, busy, e, e_c_busy)
                } else {
                    0.0
                };
                for region in 2..=k {
                    let e_tx = ctx.region_tx_energy[region - 1];
                    // eta > 0 gate: budget must clear with this region's power
                    if !(ctx.e_sense + e_tx <= e - ctx.e_est_total) {
                        continue;
                    }
                    let e_c_tx = ctx.e_est_total + ctx.e_sense + e_tx;
                    let mut v_act = p_ack * ctx.region_reward[region - 1] + busy_term;
                    if p_ack > 0.0 {
                        v_act += p_ack * self.harvest_expectation(t - 1, ack, e, e_c_tx);
                    }
                    if p_nack > 0.0 {
                        v_act += p_nack * self.harvest_expectation(t - 1, nack, e, e_c_tx);
                    }
                    action_values[ch * k + region - 1] = v_act;
                }
            }
            expected_max(idle_val, &action_values, &ctx.rt.region_probs, n, k)
        };
        self.memo.insert(key, v);
        v
    }

    /// Value and best action for the current slot given per-channel inputs.
    ///
    /// `t` is the number of slots remaining including this one. Returns the
    /// chosen channel or `None` for idle; ties go to the lower channel
    /// index, and idle loses ties against any channel.
    pub fn plan_slot(
        &mut self,
        b: &BeliefJoint,
        e: f64,
        t: usize,
        inputs: &[ChannelSlotInput],
    ) -> Result<(f64, Option<usize>)> {
        if t == 0 || t > MAX_OPTIMAL_HORIZON {
            return Err(Error::OptimalInfeasible);
        }
        let ctx = self.ctx;
        debug_assert_eq!(inputs.len(), ctx.n_channels());
        let t = t as u8;
        let belief_id = self.intern(b);
        if e < ctx.e_est_total {
            let exp = self.expand(belief_id);
            let v = self.harvest_expectation(t - 1, exp.prop, e, 0.0);
            return Ok((v, None));
        }
        let exp = self.expand(belief_id);
        let idle_val = self.harvest_expectation(t - 1, exp.prop, e, ctx.e_est_total);
        let mut best: Option<(f64, usize)> = None;
        for (ch, input) in inputs.iter().enumerate() {
            if input.eta <= 0.0 {
                continue;
            }
            let m1 = exp.marginals[ch];
            let m0 = 1.0 - m1;
            let p_ack = m1 * (1.0 - ctx.p_f);
            let p_nack = m0 * (1.0 - ctx.p_d);
            let p_busy = m1 * ctx.p_f + m0 * ctx.p_d;
            let (ack, nack, busy) = exp.branches[ch];
            let e_c_tx = ctx.e_est_total + input.e_sense + input.e_tx;
            let e_c_busy = ctx.e_est_total + input.e_sense;
            let mut v_act = p_ack * input.eta * input.duty;
            if p_ack > 0.0 {
                v_act += p_ack * self.harvest_expectation(t - 1, ack, e, e_c_tx);
            }
            if p_nack > 0.0 {
                v_act += p_nack * self.harvest_expectation(t - 1, nack, e, e_c_tx);
            }
            if p_busy > 0.0 {
                v_act += p_busy * self.harvest_expectation(t - 1, busy, e, e_c_busy);
            }
            if best.map_or(true, |(bv, _)| v_act > bv) {
                best = Some((v_act, ch));
            }
        }
        match best {
            Some((v, ch)) if v >= idle_val => Ok((v, Some(ch))),
            _ => Ok((idle_val, None)),
        }
    }
}

/// E[max(idle, V_1, .., V_n)] where V_ch takes `values[ch*k + r]` with the
/// region probabilities `q`, channels independent. Entries of -inf mark
/// unavailable actions.
fn expected_max(idle: f64, values: &[f64], q: &[f64], n: usize, k: usize) -> f64 {
    let mut support: Vec<f64> = Vec::with_capacity(n * k + 1);
    support.push(idle);
    for &v in values {
        if v > idle {
            support.push(v);
        }
    }
    support.sort_by(|a, b| a.partial_cmp(b).unwrap());
    support.dedup();
    let mut ev = 0.0;
    let mut prev_cdf = 0.0;
    for &x in &support {
        let mut cdf = 1.0;
        for ch in 0..n {
            let mut p_le = 0.0;
            for r in 0..k {
                if values[ch * k + r] <= x {
                    p_le += q[r];
                }
            }
            cdf *= p_le;
        }
        ev += x * (cdf - prev_cdf);
        prev_cdf = cdf;
    }
    ev
}

/// Finite-horizon optimal value and sensing action (Bellman recursion over
/// belief, battery energy, and fading regions).
///
/// Current-slot candidates are evaluated at the representative gain of the
/// region given in `g_regions` (1-based, one entry per estimated channel).
/// `t` is the remaining horizon in slots. Values are duty-weighted
/// bits/s/Hz summed over the horizon.
pub fn optimal_value(
    b: &BeliefJoint,
    e: f64,
    g_regions: &[usize],
    t: usize,
    ctx: &PlannerContext,
) -> Result<(f64, Option<usize>)> {
    if t == 0 || t > MAX_OPTIMAL_HORIZON || ctx.n_channels() > MAX_OPTIMAL_CHANNELS {
        return Err(Error::OptimalInfeasible);
    }
    if g_regions.len() != ctx.n_channels() {
        return Err(Error::InvalidParameter(
            "g_regions must carry one region per estimated channel".into(),
        ));
    }
    let duty = (ctx.t_tr / ctx.slot_t).max(0.0);
    let inputs: Vec<ChannelSlotInput> = g_regions
        .iter()
        .map(|&region| {
            let e_tx = ctx.region_tx_energy[region - 1];
            let feasible = region > 1
                && ctx.t_tr > 0.0
                && ctx.e_sense + e_tx <= e - ctx.e_est_total;
            ChannelSlotInput {
                eta: if feasible { ctx.rt.efficiency(region) } else { 0.0 },
                duty,
                e_sense: ctx.e_sense,
                e_tx,
            }
        })
        .collect();
    let mut planner = Planner::new(ctx);
    planner.plan_slot(b, e, t, &inputs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::occupancy::joint_transition;

    fn small_ctx(p_h: f64) -> PlannerContext {
        let chains = vec![
            ChannelChain::new(0.5, 0.7).unwrap(),
            ChannelChain::new(0.3, 0.8).unwrap(),
        ];
        let jt = joint_transition(&chains).unwrap();
        let rt = RateTable::exponential_quantiles(4).unwrap();
        let pp = PowerParams::defaults();
        PlannerContext::new(
            chains,
            jt,
            0.9,
            0.1,
            rt,
            pp,
            2.0 * phy::estimation_energy(&pp),
            1.65e-6,
            7.85e-4,
            1e-3,
            p_h,
            1.8e-4,
            1.8e-3,
        )
        .unwrap()
    }

    #[test]
    fn horizon_one_all_infeasible_idles() {
        let ctx = small_ctx(0.5);
        let b = BeliefJoint::from_factored(&[0.625, 0.6]);
        // both gains in region 1: nothing worth sensing
        let (v, action) = optimal_value(&b, 1e-3, &[1, 1], 1, &ctx).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(action, None);
    }

    #[test]
    fn horizon_one_single_channel_matches_hand_expansion() {
        let chains = vec![ChannelChain::new(0.5, 0.7).unwrap()];
        let jt = joint_transition(&chains).unwrap();
        let rt = RateTable::exponential_quantiles(4).unwrap();
        let pp = PowerParams::defaults();
        let t_tr = 7.85e-4;
        let ctx = PlannerContext::new(
            chains,
            jt,
            0.9,
            0.1,
            rt.clone(),
            pp,
            phy::estimation_energy(&pp),
            1.65e-6,
            t_tr,
            1e-3,
            0.5,
            1.8e-4,
            1.8e-3,
        )
        .unwrap();
        let pi = 0.625f64;
        let b = BeliefJoint::from_factored(&[pi]);
        let (v, action) = optimal_value(&b, 1e-3, &[3], 1, &ctx).unwrap();
        // hand expansion of the horizon-1 value: predicted idle prob times
        // P(o=1 | idle) times the duty-weighted efficiency of region 3
        let x = 0.625 * 0.7 + 0.375 * 0.5;
        let expect = x * 0.9 * 4.0 * (t_tr / 1e-3);
        assert!((v - expect).abs() < 1e-12, "value {v} vs {expect}");
        assert_eq!(action, Some(0));
    }

    #[test]
    fn horizon_guards() {
        let ctx = small_ctx(0.5);
        let b = BeliefJoint::from_factored(&[0.5, 0.5]);
        assert!(optimal_value(&b, 1e-3, &[2, 2], 0, &ctx).is_err());
        assert!(optimal_value(&b, 1e-3, &[2, 2], 7, &ctx).is_err());
    }

    #[test]
    fn value_monotone_in_energy_and_horizon() {
        let ctx = small_ctx(0.4);
        let b = BeliefJoint::from_factored(&[0.625, 0.6]);
        let energies = [5e-5, 2e-4, 6e-4, 1.2e-3, 1.8e-3];
        let mut prev_by_t = vec![0.0; energies.len()];
        for t in 1..=4 {
            let mut prev_e = -1.0;
            for (i, &e) in energies.iter().enumerate() {
                let (v, _) = optimal_value(&b, e, &[3, 2], t, &ctx).unwrap();
                assert!(v >= prev_e - 1e-12, "value must not drop with energy");
                assert!(v >= prev_by_t[i] - 1e-12, "value must not drop with horizon");
                prev_e = v;
                prev_by_t[i] = v;
            }
        }
    }
}
