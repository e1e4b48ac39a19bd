//! Independent oracles shared by the integration and acceptance suites.
//! Everything here recomputes expected values from first principles and
//! must not call into the implementation paths it checks.

#![allow(dead_code)]

/// Standard normal density.
fn phi(u: f64) -> f64 {
    (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Gaussian tail Q(x) by composite Simpson quadrature of the density over
/// [x, x+12]; the remaining tail is below 1e-32 for the arguments used.
pub fn q_by_quadrature(x: f64) -> f64 {
    if x < 0.0 {
        return 1.0 - q_by_quadrature(-x);
    }
    let (a, b) = (x, x + 12.0);
    let n = 12_000usize; // even
    let h = (b - a) / n as f64;
    let mut acc = phi(a) + phi(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * phi(a + i as f64 * h);
    }
    acc * h / 3.0
}

/// Q^{-1}(p) by bisection on the quadrature tail integral.
pub fn qinv_by_bisection(p: f64) -> f64 {
    assert!(p > 1e-20 && p < 1.0 - 1e-16);
    let (mut lo, mut hi) = (-10.0f64, 10.0f64);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if q_by_quadrature(mid) > p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Minimum sample count evaluated directly from the closed form with the
/// bisection inverse-Q.
pub fn min_samples_oracle(p_d: f64, p_f: f64, gamma: f64, h: f64) -> u64 {
    let c = (1.0 + gamma * h).powf(-1.0 / 3.0);
    let p = (c * qinv_by_bisection(p_f) - qinv_by_bisection(p_d)) / (1.0 - c);
    (((p + (p * p + 4.0).sqrt()).powi(2) / 36.0).ceil() as u64).max(1)
}

/// Evidence cases of the joint Bayes block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleEvidence {
    None,
    AckIdle(usize),
    Collision(usize),
    ObservedBusy(usize),
}

/// Brute-force joint Bayes update over all 2^n states: explicit
/// predict-then-condition with per-channel transition products. Returns
/// `None` on zero-probability conditioning.
pub fn joint_bayes_oracle(
    b: &[f64],
    chains: &[(f64, f64)], // (alpha, beta)
    evidence: OracleEvidence,
    p_d: f64,
    p_f: f64,
) -> Option<Vec<f64>> {
    let n = chains.len();
    let states = 1usize << n;
    assert_eq!(b.len(), states);
    let mut pred = vec![0.0; states];
    for to in 0..states {
        let mut total = 0.0;
        for (from, &mass) in b.iter().enumerate() {
            let mut p = 1.0;
            for (i, &(alpha, beta)) in chains.iter().enumerate() {
                let from_idle = (from >> i) & 1 == 1;
                let to_idle = (to >> i) & 1 == 1;
                let stay = if from_idle { beta } else { alpha };
                p *= if to_idle { stay } else { 1.0 - stay };
            }
            total += mass * p;
        }
        pred[to] = total;
    }
    let mut post = pred;
    match evidence {
        OracleEvidence::None => {}
        OracleEvidence::AckIdle(ch) => {
            for (s, mass) in post.iter_mut().enumerate() {
                if (s >> ch) & 1 == 0 {
                    *mass = 0.0;
                }
            }
        }
        OracleEvidence::Collision(ch) => {
            for (s, mass) in post.iter_mut().enumerate() {
                if (s >> ch) & 1 == 1 {
                    *mass = 0.0;
                }
            }
        }
        OracleEvidence::ObservedBusy(ch) => {
            for (s, mass) in post.iter_mut().enumerate() {
                let idle = (s >> ch) & 1 == 1;
                *mass *= if idle { p_f } else { p_d };
            }
        }
    }
    let w: f64 = post.iter().sum();
    if w <= 0.0 {
        return None;
    }
    for mass in &mut post {
        *mass /= w;
    }
    Some(post)
}

/// Model constants for the brute-force finite-horizon value oracle.
#[derive(Debug, Clone)]
pub struct OracleModel {
    pub chains: Vec<(f64, f64)>,
    pub p_d: f64,
    pub p_f: f64,
    /// Duty-weighted reward per region.
    pub region_reward: Vec<f64>,
    /// Transmit + circuit energy per region at its representative gain.
    pub region_tx_energy: Vec<f64>,
    pub region_probs: Vec<f64>,
    pub e_est_total: f64,
    pub e_sense: f64,
    pub p_h: f64,
    pub e_h: f64,
    pub e_max: f64,
}

impl OracleModel {
    fn n(&self) -> usize {
        self.chains.len()
    }
    fn k(&self) -> usize {
        self.region_probs.len()
    }

    fn predict(&self, b: &[f64]) -> Vec<f64> {
        let states = 1usize << self.n();
        let mut pred = vec![0.0; states];
        for to in 0..states {
            for (from, &mass) in b.iter().enumerate() {
                let mut p = 1.0;
                for (i, &(alpha, beta)) in self.chains.iter().enumerate() {
                    let stay = if (from >> i) & 1 == 1 { beta } else { alpha };
                    p *= if (to >> i) & 1 == 1 { stay } else { 1.0 - stay };
                }
                pred[to] += mass * p;
            }
        }
        pred
    }

    fn feasible(&self, region: usize, e: f64) -> bool {
        region >= 2 && self.e_sense + self.region_tx_energy[region - 1] <= e - self.e_est_total
    }
}

fn condition(pred: &[f64], ch: usize, keep_idle: Option<bool>, p_d: f64, p_f: f64) -> Vec<f64> {
    let mut post: Vec<f64> = pred
        .iter()
        .enumerate()
        .map(|(s, &mass)| {
            let idle = (s >> ch) & 1 == 1;
            let like = match keep_idle {
                Some(true) => {
                    if idle {
                        1.0
                    } else {
                        0.0
                    }
                }
                Some(false) => {
                    if idle {
                        0.0
                    } else {
                        1.0
                    }
                }
                None => {
                    if idle {
                        p_f
                    } else {
                        p_d
                    }
                }
            };
            mass * like
        })
        .collect();
    let w: f64 = post.iter().sum();
    if w > 0.0 {
        for mass in &mut post {
            *mass /= w;
        }
    }
    post
}

/// Expectation over all K^n next-slot region combinations of the optimal
/// value with one slot less to go.
fn gains_expectation(m: &OracleModel, b: &[f64], e: f64, t: usize) -> f64 {
    if t == 0 {
        return 0.0;
    }
    let (n, k) = (m.n(), m.k());
    let combos = k.pow(n as u32);
    let mut total = 0.0;
    for combo in 0..combos {
        let mut regions = vec![0usize; n];
        let mut weight = 1.0;
        let mut rest = combo;
        for region in regions.iter_mut() {
            *region = rest % k + 1;
            rest /= k;
            weight *= m.region_probs[*region - 1];
        }
        total += weight * optimal_value_oracle(b, e, &regions, t, m);
    }
    total
}

fn continuation(m: &OracleModel, b: &[f64], e: f64, e_c: f64, t: usize) -> f64 {
    let mut v = 0.0;
    if m.p_h > 0.0 {
        v += m.p_h * gains_expectation(m, b, (e - e_c + m.e_h).min(m.e_max).max(0.0), t);
    }
    if m.p_h < 1.0 {
        v += (1.0 - m.p_h) * gains_expectation(m, b, (e - e_c).max(0.0), t);
    }
    v
}

/// Value of the candidate "sense channel `ch` whose current gain sits in
/// `region`" at a node: immediate reward plus the three evidence branches.
fn action_value_oracle(
    m: &OracleModel,
    pred: &[f64],
    ch: usize,
    region: usize,
    e: f64,
    t: usize,
) -> f64 {
    let m1: f64 = pred
        .iter()
        .enumerate()
        .filter(|(s, _)| (s >> ch) & 1 == 1)
        .map(|(_, &p)| p)
        .sum();
    let m0 = 1.0 - m1;
    let p_ack = m1 * (1.0 - m.p_f);
    let p_nack = m0 * (1.0 - m.p_d);
    let p_busy = m1 * m.p_f + m0 * m.p_d;
    let e_c_tx = m.e_est_total + m.e_sense + m.region_tx_energy[region - 1];
    let e_c_busy = m.e_est_total + m.e_sense;
    let mut v = p_ack * m.region_reward[region - 1];
    if p_ack > 0.0 {
        let b1 = condition(pred, ch, Some(true), m.p_d, m.p_f);
        v += p_ack * continuation(m, &b1, e, e_c_tx, t - 1);
    }
    if p_nack > 0.0 {
        let b0 = condition(pred, ch, Some(false), m.p_d, m.p_f);
        v += p_nack * continuation(m, &b0, e, e_c_tx, t - 1);
    }
    if p_busy > 0.0 {
        let bo = condition(pred, ch, None, m.p_d, m.p_f);
        v += p_busy * continuation(m, &bo, e, e_c_busy, t - 1);
    }
    v
}

/// Exhaustive finite-horizon optimal value: a textbook expansion with no
/// memoization and explicit enumeration over states, observations, harvest
/// branches, and next-gain combinations.
pub fn optimal_value_oracle(b: &[f64], e: f64, regions: &[usize], t: usize, m: &OracleModel) -> f64 {
    if t == 0 {
        return 0.0;
    }
    let pred = m.predict(b);
    if e < m.e_est_total {
        return continuation(m, &pred, e, 0.0, t - 1);
    }
    let mut best = continuation(m, &pred, e, m.e_est_total, t - 1); // idle
    for (ch, &region) in regions.iter().enumerate() {
        if !m.feasible(region, e) {
            continue;
        }
        let v = action_value_oracle(m, &pred, ch, region, e, t);
        if v > best {
            best = v;
        }
    }
    best
}

/// Expected total reward of the myopic rule on the same instance, computed
/// by exhaustive expectation with the action pinned at every node.
pub fn myopic_value_oracle(b: &[f64], e: f64, regions: &[usize], t: usize, m: &OracleModel) -> f64 {
    if t == 0 {
        return 0.0;
    }
    let pred = m.predict(b);
    if e < m.e_est_total {
        return myopic_continuation(m, &pred, e, 0.0, t);
    }
    // myopic choice: maximize predicted idle probability times reward
    let mut choice: Option<(usize, usize, f64)> = None;
    for (ch, &region) in regions.iter().enumerate() {
        if !m.feasible(region, e) {
            continue;
        }
        let m1: f64 = pred
            .iter()
            .enumerate()
            .filter(|(s, _)| (s >> ch) & 1 == 1)
            .map(|(_, &p)| p)
            .sum();
        let score = m1 * m.region_reward[region - 1];
        // strict improvement keeps the lowest index on ties, matching the
        // engine's ranking
        if choice.map_or(true, |(_, _, s)| score > s) {
            choice = Some((ch, region, score));
        }
    }
    let (ch, region) = match choice {
        None => return myopic_continuation(m, &pred, e, m.e_est_total, t),
        Some((ch, region, _)) => (ch, region),
    };
    let m1: f64 = pred
        .iter()
        .enumerate()
        .filter(|(s, _)| (s >> ch) & 1 == 1)
        .map(|(_, &p)| p)
        .sum();
    let m0 = 1.0 - m1;
    let p_ack = m1 * (1.0 - m.p_f);
    let p_nack = m0 * (1.0 - m.p_d);
    let p_busy = m1 * m.p_f + m0 * m.p_d;
    let e_c_tx = m.e_est_total + m.e_sense + m.region_tx_energy[region - 1];
    let e_c_busy = m.e_est_total + m.e_sense;
    let mut v = p_ack * m.region_reward[region - 1];
    if p_ack > 0.0 {
        let b1 = condition(&pred, ch, Some(true), m.p_d, m.p_f);
        v += p_ack * myopic_continuation(m, &b1, e, e_c_tx, t);
    }
    if p_nack > 0.0 {
        let b0 = condition(&pred, ch, Some(false), m.p_d, m.p_f);
        v += p_nack * myopic_continuation(m, &b0, e, e_c_tx, t);
    }
    if p_busy > 0.0 {
        let bo = condition(&pred, ch, None, m.p_d, m.p_f);
        v += p_busy * myopic_continuation(m, &bo, e, e_c_busy, t);
    }
    v
}

fn myopic_continuation(m: &OracleModel, b: &[f64], e: f64, e_c: f64, t: usize) -> f64 {
    let step = |e_next: f64| -> f64 {
        if t == 1 {
            return 0.0;
        }
        let (n, k) = (m.n(), m.k());
        let combos = k.pow(n as u32);
        let mut total = 0.0;
        for combo in 0..combos {
            let mut regions = vec![0usize; n];
            let mut weight = 1.0;
            let mut rest = combo;
            for region in regions.iter_mut() {
                *region = rest % k + 1;
                rest /= k;
                weight *= m.region_probs[*region - 1];
            }
            total += weight * myopic_value_oracle(b, e_next, &regions, t - 1, m);
        }
        total
    };
    let mut v = 0.0;
    if m.p_h > 0.0 {
        v += m.p_h * step((e - e_c + m.e_h).min(m.e_max).max(0.0));
    }
    if m.p_h < 1.0 {
        v += (1.0 - m.p_h) * step((e - e_c).max(0.0));
    }
    v
}
