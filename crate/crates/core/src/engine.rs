//! Slot-synchronous simulator: ground-truth evolution, harvesting, fading
//! draws, the estimate -> sense -> access -> ACK slot procedure, the energy
//! ledger, reward accounting, and Monte Carlo aggregation.
//!
//! Per-slot reward is the duty-weighted spectral efficiency
//! `log2(M_k) * t_tr / T` of an acknowledged transmission: shorter sensing
//! leaves more of the slot for payload, which is the transmission-duration
//! side of the collision/duration trade-off the simulator reproduces.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::occupancy::{
    self, joint_transition, ChannelChain, JointTransition,
};
use crate::phy::{self, PowerParams, RateTable, SensingSpec};
use crate::policy::optimal::{ChannelSlotInput, Planner, PlannerContext};
use crate::policy::{self, BeliefJoint, EnergyBudget, SenseResult};
use crate::rng::{stream_seed, SlotRng};

/// Channel-selection policy run by the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    Optimal,
    Myopic,
    BeliefBandwidth,
    Random,
    ConstantRate,
}

impl PolicyKind {
    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::Optimal => "optimal",
            PolicyKind::Myopic => "myopic",
            PolicyKind::BeliefBandwidth => "belief_bandwidth",
            PolicyKind::Random => "random",
            PolicyKind::ConstantRate => "constant_rate",
        }
    }
}

/// Fading model of the PU-SU sensing channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SensingChannelModel {
    /// |h| = 1 every slot.
    Awgn,
    /// |h| drawn i.i.d. exponential with unit mean each slot per channel.
    Rayleigh,
}

/// Full simulation configuration for one experiment cell.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub n_channels: usize,
    /// Channels estimated each active slot (the first `lambda0` indices).
    pub lambda0: usize,
    /// Maximum channels sensed per slot.
    pub lambda1: usize,
    pub chains: Vec<ChannelChain>,
    pub sensing: SensingSpec,
    pub power: PowerParams,
    pub rate: RateTable,
    /// Slot duration T in s.
    pub slot_t: f64,
    /// Slots per episode (the planning horizon for the optimal policy).
    pub slots: usize,
    /// Mean harvest rate in J/s.
    pub p_eh: f64,
    /// Energy per harvest arrival in J.
    pub e_h: f64,
    pub e_max: f64,
    pub e_init: f64,
    pub sensing_channel: SensingChannelModel,
    pub policy: PolicyKind,
    /// Constellation of the constant-rate baseline.
    pub constant_m: u32,
    /// Per-channel bandwidth weights of the belief-bandwidth baseline.
    pub bandwidths: Vec<f64>,
    pub iterations: usize,
    pub seed: u64,
    /// Keep per-slot outcomes in the episode metrics.
    pub record_trace: bool,
}

impl SimConfig {
    /// Table-default configuration for `n` channels: myopic policy, K = 4
    /// quantile rate table, 1 ms slots at 200 kHz, detector targets
    /// P_D = 0.9 / P_F = 0.1, per-channel chains alpha = 0.5 / beta = 0.7,
    /// 60 mJ/s harvesting split into arrivals of probability 1/2, battery
    /// capped at 10 e_h and starting half full.
    pub fn table_defaults(n_channels: usize) -> Self {
        let mut cfg = Self {
            n_channels,
            lambda0: n_channels,
            lambda1: 1,
            chains: vec![ChannelChain { alpha: 0.5, beta: 0.7 }; n_channels],
            sensing: SensingSpec::new(0.9, 0.1, 1.0, 2e5, 0.11e-6).expect("table defaults"),
            power: PowerParams::defaults(),
            rate: RateTable::exponential_quantiles(4).expect("table defaults"),
            slot_t: 1e-3,
            slots: 1000,
            p_eh: 0.0,
            e_h: 0.0,
            e_max: 0.0,
            e_init: 0.0,
            sensing_channel: SensingChannelModel::Awgn,
            policy: PolicyKind::Myopic,
            constant_m: 4,
            bandwidths: vec![1.0; n_channels],
            iterations: 10_000,
            seed: 0x5EED,
            record_trace: false,
        };
        cfg.set_harvest_rate(60e-3);
        cfg
    }

    /// Point the harvest process at a mean rate (J/s), keeping the arrival
    /// probability at 1/2: the arrival energy becomes `P_EH * T / 0.5`, the
    /// battery capacity tracks 10 e_h, and the initial charge is half of it.
    pub fn set_harvest_rate(&mut self, p_eh: f64) {
        self.p_eh = p_eh;
        self.e_h = p_eh * self.slot_t / 0.5;
        self.e_max = 10.0 * self.e_h;
        self.e_init = self.e_max / 2.0;
    }

    /// Bernoulli harvest probability implied by the mean rate:
    /// `p_h = P_EH * T / e_h`.
    pub fn harvest_prob(&self) -> f64 {
        self.p_eh * self.slot_t / self.e_h
    }

    pub fn validate(&self) -> Result<()> {
        policy::ActionSets::new(self.lambda0, self.lambda1, self.n_channels)?;
        if self.chains.len() != self.n_channels {
            return Err(Error::InvalidParameter(format!(
                "chains: expected {} entries, got {}",
                self.n_channels,
                self.chains.len()
            )));
        }
        if self.bandwidths.len() != self.lambda0 {
            return Err(Error::InvalidParameter(format!(
                "bandwidths: expected {} entries, got {}",
                self.lambda0,
                self.bandwidths.len()
            )));
        }
        self.power.validate()?;
        if !(self.slot_t > 0.0) {
            return Err(Error::InvalidParameter("slot.t_s must be > 0".into()));
        }
        if self.slots == 0 {
            return Err(Error::InvalidParameter("slots must be >= 1".into()));
        }
        if self.lambda0 as f64 * self.power.t_est >= self.slot_t {
            return Err(Error::InvalidParameter(
                "estimation time lambda0 * t_est must leave room in the slot".into(),
            ));
        }
        if !(self.e_h > 0.0) || self.p_eh < 0.0 {
            return Err(Error::InvalidParameter("harvest.e_h must be > 0, p_eh >= 0".into()));
        }
        let p_h = self.harvest_prob();
        if !(0.0..=1.0).contains(&p_h) {
            return Err(Error::InvalidParameter(format!(
                "harvest probability p_eh*T/e_h = {p_h:.4} outside [0,1]; raise harvest.e_h"
            )));
        }
        if !(self.e_max > 0.0) || self.e_init < 0.0 || self.e_init > self.e_max {
            return Err(Error::InvalidParameter(
                "battery: need e_max > 0 and 0 <= e_init <= e_max".into(),
            ));
        }
        for (i, c) in self.chains.iter().enumerate() {
            ChannelChain::new(c.alpha, c.beta)?;
            if occupancy::stationary_idle_prob(c).is_err() {
                return Err(Error::InvalidParameter(format!(
                    "chains[{i}] has no stationary distribution (alpha=0, beta=1)"
                )));
            }
        }
        if self.policy == PolicyKind::ConstantRate && self.constant_m < 2 {
            return Err(Error::InvalidParameter("rate.constant_m must be >= 2".into()));
        }
        if self.policy == PolicyKind::Optimal {
            if self.lambda0 > crate::policy::optimal::MAX_OPTIMAL_CHANNELS {
                return Err(Error::OptimalInfeasible);
            }
            if self.slots > crate::policy::optimal::MAX_OPTIMAL_HORIZON {
                return Err(Error::OptimalInfeasible);
            }
            if self.lambda1 != 1 {
                return Err(Error::InvalidParameter(
                    "optimal policy senses exactly one channel per slot (lambda1 = 1)".into(),
                ));
            }
        }
        if self.iterations == 0 {
            return Err(Error::InvalidParameter("iterations must be >= 1".into()));
        }
        Ok(())
    }
}

/// Bernoulli harvest arrival: `e_h` with probability `p_h`, else nothing.
#[inline]
pub fn harvest_draw<R: Rng>(p_h: f64, e_h: f64, rng: &mut R) -> f64 {
    if rng.gen::<f64>() < p_h {
        e_h
    } else {
        0.0
    }
}

/// Battery update: consumed energy leaves, a harvest arrival is added and
/// clipped at capacity. `e_c > e` indicates a policy bug upstream.
#[inline]
pub fn energy_transition(e: f64, e_c: f64, harvested: f64, e_max: f64) -> Result<f64> {
    // sub-femtojoule slack absorbs the rounding of re-summed gate terms
    if e_c > e + 1e-15 {
        return Err(Error::InvariantViolation(format!(
            "consumed energy {e_c:.3e} J exceeds battery {e:.3e} J"
        )));
    }
    let drained = (e - e_c).max(0.0);
    if harvested > 0.0 {
        Ok((drained + harvested).min(e_max))
    } else {
        Ok(drained)
    }
}

/// How the slot ended, for the energy ledger.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionCase {
    /// Sensed an idle observation and transmitted (ACK or collision).
    Transmitted,
    /// Sensed one or more channels, never transmitted.
    SensedOnly,
    /// Estimated but sensed nothing.
    EstimatedOnly,
    /// Fully idle; could not even afford estimation.
    Idle,
}

/// Slot energy components feeding the four-case consumption table.
#[derive(Debug, Clone, Copy, Default)]
pub struct EnergyComponents {
    pub e_est_total: f64,
    pub e_sense: f64,
    pub e_ckt: f64,
    pub e_tr: f64,
}

/// Consumed energy per the action-outcome case table.
pub fn consumed_energy(case: ActionCase, c: &EnergyComponents) -> f64 {
    match case {
        ActionCase::Transmitted => c.e_est_total + c.e_sense + c.e_ckt + c.e_tr,
        ActionCase::SensedOnly => c.e_est_total + c.e_sense,
        ActionCase::EstimatedOnly => c.e_est_total,
        ActionCase::Idle => 0.0,
    }
}

/// Everything that happened in one slot.
#[derive(Debug, Clone)]
pub struct SlotOutcome {
    pub slot: usize,
    pub case: ActionCase,
    /// (channel, observed idle) in sensing order.
    pub sensed: Vec<(usize, bool)>,
    pub accessed: Option<usize>,
    /// True occupancy of the accessed channel.
    pub accessed_idle: Option<bool>,
    pub ack: bool,
    /// Duty-weighted spectral efficiency earned, bits/s/Hz.
    pub reward: f64,
    pub energy: EnergyComponents,
    pub harvested: f64,
    pub battery_before: f64,
    pub battery_after: f64,
    /// No channel was sensed and a minimum sensing time did not fit.
    pub unsensable: bool,
    /// No transmission happened and an energy gate was the cause.
    pub energy_outage: bool,
}

/// Aggregated counters of an episode (or of many, merged).
#[derive(Debug, Clone, Default)]
pub struct RunMetrics {
    pub slots: u64,
    pub reward_sum: f64,
    /// Slots whose transmission collided with the PU.
    pub collisions: u64,
    /// Slots with a transmission attempt.
    pub accesses: u64,
    /// Slots with no sensing at all.
    pub idle_slots: u64,
    /// Slots with no transmission where an energy gate was the cause.
    pub outage_slots: u64,
    /// No-sense slots where the minimum sensing time did not fit.
    pub unsensable_slots: u64,
    /// Individual sense operations.
    pub senses: u64,
    /// Observation tallies conditioned on the true state.
    pub sensed_busy_truth: u64,
    pub observed_busy_given_busy: u64,
    pub sensed_idle_truth: u64,
    pub observed_busy_given_idle: u64,
    pub harvested_sum: f64,
    pub consumed_sum: f64,
    /// Hard-invariant counters; both stay zero on a healthy run.
    pub reward_without_ack: u64,
    pub battery_bound_violations: u64,
    pub trace: Option<Vec<SlotOutcome>>,
}

impl RunMetrics {
    pub fn mean_efficiency(&self) -> f64 {
        if self.slots == 0 {
            0.0
        } else {
            self.reward_sum / self.slots as f64
        }
    }

    pub fn merge(&mut self, other: &RunMetrics) {
        self.slots += other.slots;
        self.reward_sum += other.reward_sum;
        self.collisions += other.collisions;
        self.accesses += other.accesses;
        self.idle_slots += other.idle_slots;
        self.outage_slots += other.outage_slots;
        self.unsensable_slots += other.unsensable_slots;
        self.senses += other.senses;
        self.sensed_busy_truth += other.sensed_busy_truth;
        self.observed_busy_given_busy += other.observed_busy_given_busy;
        self.sensed_idle_truth += other.sensed_idle_truth;
        self.observed_busy_given_idle += other.observed_busy_given_idle;
        self.harvested_sum += other.harvested_sum;
        self.consumed_sum += other.consumed_sum;
        self.reward_without_ack += other.reward_without_ack;
        self.battery_bound_violations += other.battery_bound_violations;
        if let (Some(mine), Some(theirs)) = (self.trace.as_mut(), other.trace.as_ref()) {
            mine.extend_from_slice(theirs);
        }
    }
}

/// Per-cell precomputation shared by all replications.
struct Prepared<'a> {
    cfg: &'a SimConfig,
    p_h: f64,
    e_est_total: f64,
    t_est_total: f64,
    stationary: Vec<f64>,
    /// Sensing numbers at |h| = 1 (the AWGN fast path).
    awgn_sense: Option<SenseCost>,
    planner_ctx: Option<PlannerContext>,
    jt: Option<JointTransition>,
}

#[derive(Debug, Clone, Copy)]
struct SenseCost {
    t_s: f64,
    e_s: f64,
}

impl<'a> Prepared<'a> {
    fn new(cfg: &'a SimConfig) -> Result<Self> {
        cfg.validate()?;
        let e_est_total = cfg.lambda0 as f64 * phy::estimation_energy(&cfg.power);
        let t_est_total = cfg.lambda0 as f64 * cfg.power.t_est;
        let stationary: Vec<f64> = cfg
            .chains
            .iter()
            .map(occupancy::stationary_idle_prob)
            .collect::<Result<_>>()?;
        let awgn_sense = match phy::min_sensing_samples(&cfg.sensing, 1.0) {
            Ok(l) => Some(SenseCost {
                t_s: phy::min_sensing_time(l, cfg.sensing.f_s),
                e_s: phy::sensing_energy(l, cfg.sensing.e_s_sample),
            }),
            Err(_) => None,
        };
        let (planner_ctx, jt) = if cfg.policy == PolicyKind::Optimal {
            let est_chains: Vec<ChannelChain> = cfg.chains[..cfg.lambda0].to_vec();
            let jt = joint_transition(&est_chains)?;
            let base = awgn_sense.ok_or(Error::UnsensableChannel)?;
            let ctx = PlannerContext::new(
                est_chains,
                jt.clone(),
                cfg.sensing.p_d,
                cfg.sensing.p_f,
                cfg.rate.clone(),
                cfg.power,
                e_est_total,
                base.e_s,
                cfg.slot_t - t_est_total - base.t_s,
                cfg.slot_t,
                cfg.harvest_prob(),
                cfg.e_h,
                cfg.e_max,
            )?;
            (Some(ctx), Some(jt))
        } else {
            (None, None)
        };
        Ok(Self {
            cfg,
            p_h: cfg.harvest_prob(),
            e_est_total,
            t_est_total,
            stationary,
            awgn_sense,
            planner_ctx,
            jt,
        })
    }
}

/// Unit-mean exponential draw by inversion.
#[inline]
fn exp1<R: Rng>(rng: &mut R) -> f64 {
    -(1.0 - rng.gen::<f64>()).ln()
}

struct EpisodeState {
    pn: Vec<bool>,
    battery: f64,
    pi: Vec<f64>,
    joint: Option<BeliefJoint>,
    // per-slot scratch, one entry per estimated channel
    gain: Vec<f64>,
    sense_cost: Vec<Option<SenseCost>>,
    eta: Vec<f64>,
    t_tr: Vec<f64>,
}

fn run_one_episode(prep: &Prepared, seed: u64) -> Result<RunMetrics> {
    let cfg = prep.cfg;
    let mut rng = SlotRng::for_replication(seed, 0);
    let mut planner = prep.planner_ctx.as_ref().map(Planner::new);

    let mut st = EpisodeState {
        pn: Vec::with_capacity(cfg.n_channels),
        battery: cfg.e_init,
        pi: prep.stationary[..cfg.lambda0].to_vec(),
        joint: prep
            .planner_ctx
            .as_ref()
            .map(|_| BeliefJoint::from_factored(&prep.stationary[..cfg.lambda0])),
        gain: vec![0.0; cfg.lambda0],
        sense_cost: vec![None; cfg.lambda0],
        eta: vec![0.0; cfg.lambda0],
        t_tr: vec![0.0; cfg.lambda0],
    };
    for i in 0..cfg.n_channels {
        st.pn.push(rng.env.gen::<f64>() < prep.stationary[i]);
    }

    let mut metrics = RunMetrics::default();
    if cfg.record_trace {
        metrics.trace = Some(Vec::with_capacity(cfg.slots));
    }
    for slot in 0..cfg.slots {
        let outcome = run_slot(prep, &mut st, &mut planner, slot, &mut rng)?;
        tally(&mut metrics, &st.pn, &outcome, cfg);
        if let Some(trace) = metrics.trace.as_mut() {
            trace.push(outcome);
        }
    }
    Ok(metrics)
}

fn tally(metrics: &mut RunMetrics, truth: &[bool], out: &SlotOutcome, cfg: &SimConfig) {
    metrics.slots += 1;
    metrics.reward_sum += out.reward;
    metrics.harvested_sum += out.harvested;
    metrics.consumed_sum += consumed_energy(out.case, &out.energy);
    if out.accessed.is_some() {
        metrics.accesses += 1;
        if !out.ack {
            metrics.collisions += 1;
        }
    }
    if out.sensed.is_empty() {
        metrics.idle_slots += 1;
    }
    if out.unsensable {
        metrics.unsensable_slots += 1;
    }
    if out.energy_outage {
        metrics.outage_slots += 1;
    }
    metrics.senses += out.sensed.len() as u64;
    for &(ch, observed_idle) in &out.sensed {
        if truth[ch] {
            metrics.sensed_idle_truth += 1;
            if !observed_idle {
                metrics.observed_busy_given_idle += 1;
            }
        } else {
            metrics.sensed_busy_truth += 1;
            if !observed_idle {
                metrics.observed_busy_given_busy += 1;
            }
        }
    }
    if out.reward > 0.0 && !out.ack {
        metrics.reward_without_ack += 1;
    }
    if out.battery_after < 0.0 || out.battery_after > cfg.e_max * (1.0 + 1e-12) {
        metrics.battery_bound_violations += 1;
    }
}

/// One slot of the estimate -> sense -> access -> ACK procedure.
fn run_slot(
    prep: &Prepared,
    st: &mut EpisodeState,
    planner: &mut Option<Planner>,
    slot: usize,
    rng: &mut SlotRng,
) -> Result<SlotOutcome> {
    let cfg = prep.cfg;
    let n_est = cfg.lambda0;
    let battery_before = st.battery;

    // (1) primary network evolves
    for i in 0..cfg.n_channels {
        let u = rng.env.gen::<f64>();
        st.pn[i] = occupancy::step_channel(st.pn[i], &cfg.chains[i], u);
    }
    // (2) block-fading draws: SU-pair gain per estimated channel, plus one
    // PU-SU sensing-channel gain per slot under the Rayleigh model
    for g in st.gain.iter_mut() {
        *g = exp1(&mut rng.env);
    }
    match cfg.sensing_channel {
        SensingChannelModel::Awgn => {
            for c in st.sense_cost.iter_mut() {
                *c = prep.awgn_sense;
            }
        }
        SensingChannelModel::Rayleigh => {
            let h = exp1(&mut rng.env);
            let cost = phy::min_sensing_samples(&cfg.sensing, h).ok().map(|l| SenseCost {
                t_s: phy::min_sensing_time(l, cfg.sensing.f_s),
                e_s: phy::sensing_energy(l, cfg.sensing.e_s_sample),
            });
            for c in st.sense_cost.iter_mut() {
                *c = cost;
            }
        }
    }

    // (3) estimation gate
    if battery_before < prep.e_est_total {
        let harvested = harvest_draw(prep.p_h, cfg.e_h, &mut rng.env);
        st.battery = energy_transition(battery_before, 0.0, harvested, cfg.e_max)?;
        update_beliefs(prep, st, &[], None, false, None);
        return Ok(SlotOutcome {
            slot,
            case: ActionCase::Idle,
            sensed: Vec::new(),
            accessed: None,
            accessed_idle: None,
            ack: false,
            reward: 0.0,
            energy: EnergyComponents::default(),
            harvested,
            battery_before,
            battery_after: st.battery,
            unsensable: false,
            energy_outage: true,
        });
    }

    // (4) per-channel minimum sensing cost and first-sense efficiency
    let sense_window = cfg.slot_t - prep.t_est_total;
    let mut any_time_infeasible = false;
    let mut energy_blocked = false;
    for i in 0..n_est {
        match st.sense_cost[i] {
            Some(c) if c.t_s < sense_window => {
                let t_tr = sense_window - c.t_s;
                st.t_tr[i] = t_tr;
                let budget =
                    EnergyBudget { e_est_total: prep.e_est_total, e_sense: c.e_s, t_tr };
                st.eta[i] = match cfg.policy {
                    PolicyKind::ConstantRate => policy::baseline_constant_rate(
                        st.gain[i],
                        battery_before,
                        cfg.constant_m,
                        &budget,
                        &cfg.power,
                    ),
                    _ => policy::spectral_efficiency(
                        st.gain[i],
                        battery_before,
                        &budget,
                        &cfg.rate,
                        &cfg.power,
                    ),
                };
                // a usable fading region left unused only by the budget
                if st.eta[i] == 0.0 && phy::gain_region(st.gain[i], &cfg.rate) > 1 {
                    energy_blocked = true;
                }
            }
            _ => {
                any_time_infeasible = true;
                st.t_tr[i] = 0.0;
                st.eta[i] = 0.0;
            }
        }
    }

    // (5) selection criterion picks the sensing order
    let order: Vec<usize> = match cfg.policy {
        PolicyKind::Myopic | PolicyKind::ConstantRate => {
            policy::rank_channels_myopic(&st.pi, &st.eta, &cfg.chains[..n_est], cfg.lambda1)
        }
        PolicyKind::BeliefBandwidth => policy::baseline_belief_bandwidth(
            &st.pi,
            &cfg.bandwidths,
            &cfg.chains[..n_est],
            cfg.lambda1,
        ),
        PolicyKind::Random => {
            let all: Vec<usize> = (0..n_est).collect();
            policy::baseline_random(&all, cfg.lambda1, &mut rng.act)
        }
        PolicyKind::Optimal => {
            let inputs: Vec<ChannelSlotInput> = (0..n_est)
                .map(|i| {
                    let e_tx = if st.eta[i] > 0.0 {
                        let region = phy::gain_region(st.gain[i], &cfg.rate);
                        let m = cfg.rate.constellations[region - 1];
                        let p_tr = phy::transmit_power(st.gain[i], m, &cfg.power)
                            .expect("eta > 0 implies positive gain");
                        let (e_tr, e_ckt) =
                            phy::transmission_energies(p_tr, st.t_tr[i], &cfg.power);
                        e_tr + e_ckt
                    } else {
                        0.0
                    };
                    ChannelSlotInput {
                        eta: st.eta[i],
                        duty: st.t_tr[i] / cfg.slot_t,
                        e_sense: st.sense_cost[i].map_or(0.0, |c| c.e_s),
                        e_tx,
                    }
                })
                .collect();
            let joint = st.joint.as_ref().expect("optimal policy keeps a joint belief");
            let remaining = cfg.slots - slot;
            let (_, choice) = planner
                .as_mut()
                .expect("optimal policy keeps a planner")
                .plan_slot(joint, battery_before, remaining, &inputs)?;
            choice.into_iter().collect()
        }
    };

    // (6) sequential sensing until an idle observation or exhaustion
    let eta_driven = matches!(
        cfg.policy,
        PolicyKind::Myopic | PolicyKind::ConstantRate | PolicyKind::Optimal
    );
    let mut sensed: Vec<(usize, bool)> = Vec::new();
    let mut cum_t_s = 0.0;
    let mut cum_e_s = 0.0;
    let mut accessed: Option<usize> = None;
    let mut idle_unused: Option<usize> = None;
    let mut eta_access = 0.0;
    let mut t_tr_access = 0.0;
    let mut gain_access = 0.0;
    for &ch in &order {
        let cost = match st.sense_cost[ch] {
            Some(c) => c,
            None => continue,
        };
        if cum_t_s + cost.t_s >= sense_window {
            any_time_infeasible = true;
            continue;
        }
        let t_tr = sense_window - cum_t_s - cost.t_s;
        let budget = EnergyBudget {
            e_est_total: prep.e_est_total,
            e_sense: cum_e_s + cost.e_s,
            t_tr,
        };
        let eta = match cfg.policy {
            PolicyKind::ConstantRate => policy::baseline_constant_rate(
                st.gain[ch],
                battery_before,
                cfg.constant_m,
                &budget,
                &cfg.power,
            ),
            _ => policy::spectral_efficiency(
                st.gain[ch],
                battery_before,
                &budget,
                &cfg.rate,
                &cfg.power,
            ),
        };
        if eta_driven {
            // the criterion senses a channel only when it could be used
            if eta <= 0.0 {
                if phy::gain_region(st.gain[ch], &cfg.rate) > 1 {
                    energy_blocked = true;
                }
                continue;
            }
        } else {
            // belief-bandwidth / random ignore gain and energy when ranking
            // but can only sense what the battery covers
            if prep.e_est_total + cum_e_s + cost.e_s > battery_before {
                energy_blocked = true;
                continue;
            }
        }
        cum_t_s += cost.t_s;
        cum_e_s += cost.e_s;
        let truly_idle = st.pn[ch];
        let observed_idle =
            rng.act.gen::<f64>() < policy::observation_prob(true, truly_idle, cfg.sensing.p_d, cfg.sensing.p_f);
        sensed.push((ch, observed_idle));
        if observed_idle {
            if policy::access_decision(observed_idle) && eta > 0.0 {
                accessed = Some(ch);
                eta_access = eta;
                t_tr_access = t_tr;
                gain_access = st.gain[ch];
            } else {
                idle_unused = Some(ch);
            }
            break;
        }
    }

    // (7) transmission, ACK, reward
    let mut energy = EnergyComponents {
        e_est_total: prep.e_est_total,
        e_sense: cum_e_s,
        ..Default::default()
    };
    let mut ack = false;
    let mut reward = 0.0;
    let mut accessed_idle = None;
    let case = if let Some(ch) = accessed {
        let m = match cfg.policy {
            PolicyKind::ConstantRate => cfg.constant_m,
            _ => cfg.rate.constellations[phy::gain_region(gain_access, &cfg.rate) - 1],
        };
        let p_tr = phy::transmit_power(gain_access, m, &cfg.power)?;
        let (e_tr, e_ckt) = phy::transmission_energies(p_tr, t_tr_access, &cfg.power);
        energy.e_tr = e_tr;
        energy.e_ckt = e_ckt;
        let truly_idle = st.pn[ch];
        accessed_idle = Some(truly_idle);
        ack = truly_idle;
        if ack {
            reward = eta_access * (t_tr_access / cfg.slot_t);
        }
        ActionCase::Transmitted
    } else if !sensed.is_empty() {
        ActionCase::SensedOnly
    } else {
        ActionCase::EstimatedOnly
    };

    // (8) ledger settles, harvest arrives
    let e_c = consumed_energy(case, &energy);
    let harvested = harvest_draw(prep.p_h, cfg.e_h, &mut rng.env);
    st.battery = energy_transition(battery_before, e_c, harvested, cfg.e_max)?;

    update_beliefs(prep, st, &sensed, accessed, ack, idle_unused);

    let no_access = accessed.is_none();
    Ok(SlotOutcome {
        slot,
        case,
        unsensable: no_access && sensed.is_empty() && any_time_infeasible,
        energy_outage: no_access && energy_blocked,
        sensed,
        accessed,
        accessed_idle,
        ack,
        reward,
        energy,
        harvested,
        battery_before,
        battery_after: st.battery,
    })
}

/// Per-channel Bayes updates from the slot's sensing evidence. A zero-
/// probability conditioning falls back to plain propagation of the prior.
fn update_beliefs(
    prep: &Prepared,
    st: &mut EpisodeState,
    sensed: &[(usize, bool)],
    accessed: Option<usize>,
    ack: bool,
    idle_unused: Option<usize>,
) {
    let cfg = prep.cfg;
    let (p_d, p_f) = (cfg.sensing.p_d, cfg.sensing.p_f);
    let result_for = |ch: usize| -> Option<SenseResult> {
        if accessed == Some(ch) {
            Some(if ack { SenseResult::IdleConfirmed } else { SenseResult::Collision })
        } else if idle_unused == Some(ch) {
            Some(SenseResult::IdleUnused)
        } else if sensed.iter().any(|&(c, o)| c == ch && !o) {
            Some(SenseResult::Busy)
        } else {
            None
        }
    };
    if let Some(joint) = st.joint.as_mut() {
        let jt = prep.jt.as_ref().expect("joint transition prepared with the planner");
        let evidence = sensed.first().map(|&(ch, _)| (ch, result_for(ch).expect("sensed")));
        *joint = match policy::update_belief_joint(joint, evidence, jt, p_d, p_f) {
            Ok(b) => b,
            Err(_) => policy::propagate_belief(joint, jt),
        };
    }
    for ch in 0..cfg.lambda0 {
        st.pi[ch] = match policy::update_belief_myopic(
            st.pi[ch],
            result_for(ch),
            &cfg.chains[ch],
            p_d,
            p_f,
        ) {
            Ok(p) => p,
            Err(_) => cfg.chains[ch].idle_next(st.pi[ch]),
        };
    }
}

/// One full episode from a derived seed. Deterministic in (config, seed).
pub fn run_episode(cfg: &SimConfig, seed: u64) -> Result<RunMetrics> {
    let prep = Prepared::new(cfg)?;
    run_one_episode(&prep, seed)
}

/// Aggregated Monte Carlo summary over all replications.
#[derive(Debug, Clone)]
pub struct MonteCarloSummary {
    pub totals: RunMetrics,
    /// Mean per-slot duty-weighted spectral efficiency, bits/s/Hz.
    pub mean_efficiency: f64,
    /// Standard error of the mean over replication means.
    pub std_error: f64,
    pub collision_rate: f64,
    pub outage_rate: f64,
    pub unsensable_rate: f64,
    pub iterations: usize,
    pub seed: u64,
}

/// Run all replications (in parallel when a rayon pool is available) and
/// merge in replication order, so aggregates do not depend on scheduling.
pub fn monte_carlo(cfg: &SimConfig) -> Result<MonteCarloSummary> {
    let prep = Prepared::new(cfg)?;
    let results: Vec<Result<RunMetrics>> = (0..cfg.iterations)
        .into_par_iter()
        .map(|rep| run_one_episode(&prep, stream_seed(cfg.seed, rep as u64)))
        .collect();
    let mut totals = RunMetrics::default();
    if cfg.record_trace {
        totals.trace = Some(Vec::new());
    }
    let mut mean_sum = 0.0;
    let mut mean_sq_sum = 0.0;
    for r in results {
        let m = r?;
        let em = m.mean_efficiency();
        mean_sum += em;
        mean_sq_sum += em * em;
        totals.merge(&m);
    }
    let n = cfg.iterations as f64;
    let mean = mean_sum / n;
    let var = (mean_sq_sum / n - mean * mean).max(0.0);
    let std_error = if cfg.iterations > 1 { (var / (n - 1.0)).sqrt() } else { 0.0 };
    let slots = totals.slots.max(1) as f64;
    Ok(MonteCarloSummary {
        mean_efficiency: totals.reward_sum / slots,
        std_error,
        collision_rate: totals.collisions as f64 / slots,
        outage_rate: totals.outage_slots as f64 / slots,
        unsensable_rate: totals.unsensable_slots as f64 / slots,
        totals,
        iterations: cfg.iterations,
        seed: cfg.seed,
    })
}
