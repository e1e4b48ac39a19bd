//! Physical-layer arithmetic for the energy-harvesting secondary user.
//!
//! Everything here is a pure function of its arguments: energy-detector
//! sample counts, sensing/estimation/transmission energies, transmit power
//! for the adaptive M-QAM constellation set, and the fading-region rate
//! table that maps a channel power gain to a constellation size.

use crate::error::{Error, Result};
use statrs::function::erf;

/// Inverse of the Gaussian tail function Q(x) = P(N(0,1) > x).
///
/// Rational approximation through `erfc_inv` refined by one Newton step on
/// Q itself, so the residual is far below the unit spacing that matters for
/// the sample-count ceiling.
pub fn inverse_q(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "inverse_q requires p in (0,1), got {p}");
    let sqrt2 = std::f64::consts::SQRT_2;
    let mut x = sqrt2 * erf::erfc_inv(2.0 * p);
    // Newton: Q'(x) = -phi(x)
    let q = 0.5 * erf::erfc(x / sqrt2);
    let phi = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    if phi > 0.0 {
        x += (q - p) / phi;
    }
    x
}

/// Energy-detector targets and sampling parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensingSpec {
    /// Target probability of detection.
    pub p_d: f64,
    /// Target probability of false alarm.
    pub p_f: f64,
    /// Received SNR of the PU signal at the SU, linear (0 dB -> 1.0).
    pub gamma: f64,
    /// Sampling frequency in Hz.
    pub f_s: f64,
    /// Energy drawn per sensing sample, in J.
    pub e_s_sample: f64,
}

impl SensingSpec {
    pub fn new(p_d: f64, p_f: f64, gamma: f64, f_s: f64, e_s_sample: f64) -> Result<Self> {
        if !(p_f > 0.0 && p_d > p_f && p_d < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "sensing targets must satisfy 0 < p_f < p_d < 1 (p_d={p_d}, p_f={p_f})"
            )));
        }
        if !(gamma > 0.0) || !(f_s > 0.0) || e_s_sample < 0.0 {
            return Err(Error::InvalidParameter(
                "gamma > 0, f_s > 0, e_s_sample >= 0 required".into(),
            ));
        }
        Ok(Self { p_d, p_f, gamma, f_s, e_s_sample })
    }
}

/// Minimum number of energy-detector samples meeting the (P_D, P_F) targets
/// on a sensing channel with power gain `h`.
///
/// Returns an error when the underlying expression diverges (`gamma * h`
/// not strictly positive), which the caller treats as an unsensable slot.
pub fn min_sensing_samples(spec: &SensingSpec, h: f64) -> Result<u64> {
    if !(h > 0.0) || !(spec.gamma * h > 0.0) {
        return Err(Error::UnsensableChannel);
    }
    let c = (1.0 + spec.gamma * h).powf(-1.0 / 3.0);
    let denom = 1.0 - c;
    if denom <= 0.0 {
        return Err(Error::UnsensableChannel);
    }
    let p = (c * inverse_q(spec.p_f) - inverse_q(spec.p_d)) / denom;
    let l = ((p + (p * p + 4.0).sqrt()).powi(2) / 36.0).ceil();
    if !l.is_finite() || l > 1e18 {
        return Err(Error::UnsensableChannel);
    }
    Ok((l as u64).max(1))
}

/// Minimum sensing time for `l` samples at sampling rate `f_s`.
pub fn min_sensing_time(l: u64, f_s: f64) -> f64 {
    l as f64 / f_s
}

/// Sensing energy for `l` samples.
pub fn sensing_energy(l: u64, e_per_sample: f64) -> f64 {
    l as f64 * e_per_sample
}

/// Constellation-fit and circuit constants for the M-QAM power model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerParams {
    /// Target bit error rate.
    pub p_b: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    /// Noise power spectral density in W/Hz.
    pub n0: f64,
    /// Channel bandwidth in Hz.
    pub b: f64,
    /// Circuit power draw during transmission, in W.
    pub p_ckt: f64,
    /// Power-amplifier overhead factor (drain efficiency 1/(1+kappa)).
    pub kappa: f64,
    /// Channel-estimation power, in W.
    pub p_est: f64,
    /// Pilot duration per estimated channel, in s.
    pub t_est: f64,
}

impl PowerParams {
    /// Table-default constants with the estimation power derived as 20% of
    /// the power needed to carry the region-(K-1) constellation at the mean
    /// channel gain, and 14 pilot symbols of 1/B each.
    pub fn defaults() -> Self {
        let mut pp = Self {
            p_b: 1e-3,
            c1: 2.0,
            c2: 1.5,
            c3: 1.0,
            c4: 1.0,
            n0: 2e-10,
            b: 2e5,
            p_ckt: 0.188,
            kappa: 1.9,
            p_est: 0.0,
            t_est: 0.0,
        };
        pp.t_est = 14.0 / pp.b;
        pp.p_est = 0.2 * transmit_power(1.0, 16, &pp).expect("positive mean gain");
        pp
    }

    pub fn validate(&self) -> Result<()> {
        let pos = [
            ("p_b", self.p_b),
            ("c1", self.c1),
            ("c2", self.c2),
            ("c3", self.c3),
            ("c4", self.c4),
            ("n0", self.n0),
            ("b", self.b),
            ("kappa", self.kappa),
            ("t_est", self.t_est),
        ];
        for (name, v) in pos {
            if !(v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.p_ckt < 0.0 || self.p_est < 0.0 {
            return Err(Error::InvalidParameter("p_ckt, p_est must be >= 0".into()));
        }
        Ok(())
    }
}

/// Transmit power for constellation size `m_k` over a channel with power
/// gain `g`, at the configured bit-error target. Zero for `m_k = 1`.
pub fn transmit_power(g: f64, m_k: u32, pp: &PowerParams) -> Result<f64> {
    if m_k == 1 {
        return Ok(0.0);
    }
    if !(g > 0.0) {
        return Err(Error::ZeroGain);
    }
    let bits = (m_k as f64).log2();
    let p = (-(pp.p_b / pp.c1).ln() / pp.c2)
        * ((pp.c3 * bits).exp2() - pp.c4)
        * pp.n0
        * pp.b
        / g;
    Ok(p)
}

/// Radiated and circuit energies for a transmission of duration `t_tr`.
pub fn transmission_energies(p_tr: f64, t_tr: f64, pp: &PowerParams) -> (f64, f64) {
    if t_tr <= 0.0 {
        return (0.0, 0.0);
    }
    let e_tr = p_tr * t_tr;
    let e_ckt = (pp.p_ckt + pp.kappa * p_tr) * t_tr;
    (e_tr, e_ckt)
}

/// Energy to estimate one channel (pilot power times pilot duration).
pub fn estimation_energy(pp: &PowerParams) -> f64 {
    pp.p_est * pp.t_est
}

/// Fading-region rate table: K regions of channel power gain, each mapped
/// to a square M-QAM constellation M_k = 2^{2(k-1)} (region 1 means no
/// transmission).
#[derive(Debug, Clone, PartialEq)]
pub struct RateTable {
    /// Region count K.
    pub k: usize,
    /// K-1 ascending gain thresholds partitioning [0, inf).
    pub boundaries: Vec<f64>,
    /// Constellation size per region.
    pub constellations: Vec<u32>,
    /// Probability mass of each region under the unit-mean exponential
    /// power-gain law.
    pub region_probs: Vec<f64>,
    /// Conditional mean gain of each region (one-point quadrature node for
    /// future-value expectations).
    pub region_rep_gain: Vec<f64>,
}

impl RateTable {
    /// Equal-probability partition of the exponential(1) power-gain law.
    pub fn exponential_quantiles(k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidParameter(format!("rate table needs K >= 2, got {k}")));
        }
        let boundaries: Vec<f64> =
            (1..k).map(|j| -(1.0 - j as f64 / k as f64).ln()).collect();
        Self::from_boundaries(boundaries)
    }

    /// Build from explicit boundaries, with region probabilities and
    /// representative gains computed for the exponential(1) law.
    pub fn from_boundaries(boundaries: Vec<f64>) -> Result<Self> {
        let k = boundaries.len() + 1;
        for w in boundaries.windows(2) {
            if !(w[0] < w[1]) {
                return Err(Error::InvalidParameter(
                    "rate-table boundaries must be strictly ascending".into(),
                ));
            }
        }
        if let Some(&b0) = boundaries.first() {
            if !(b0 > 0.0) {
                return Err(Error::InvalidParameter(
                    "rate-table boundaries must be positive".into(),
                ));
            }
        }
        let constellations: Vec<u32> = (0..k).map(|i| 1u32 << (2 * i)).collect();
        let mut region_probs = Vec::with_capacity(k);
        let mut region_rep_gain = Vec::with_capacity(k);
        for i in 0..k {
            let lo = if i == 0 { 0.0 } else { boundaries[i - 1] };
            let hi = if i == k - 1 { f64::INFINITY } else { boundaries[i] };
            let p_lo = (-lo).exp();
            if hi.is_infinite() {
                region_probs.push(p_lo);
                region_rep_gain.push(lo + 1.0);
            } else {
                let p_hi = (-hi).exp();
                let mass = p_lo - p_hi;
                region_probs.push(mass);
                // E[g | lo <= g < hi] for g ~ exp(1):
                // integral of x e^{-x} over [lo,hi) = (lo+1)e^{-lo} - (hi+1)e^{-hi}
                region_rep_gain.push(((lo + 1.0) * p_lo - (hi + 1.0) * p_hi) / mass);
            }
        }
        Ok(Self { k, boundaries, constellations, region_probs, region_rep_gain })
    }

    /// Spectral efficiency of region `k` (1-based), in bits/s/Hz.
    pub fn efficiency(&self, region: usize) -> f64 {
        (2 * (region - 1)) as f64
    }
}

/// Region index (1-based) of a power gain. Half-open intervals, a gain equal
/// to a boundary belongs to the upper region.
pub fn gain_region(g: f64, rt: &RateTable) -> usize {
    debug_assert!(g >= 0.0);
    match rt.boundaries.iter().position(|&b| g < b) {
        Some(i) => i + 1,
        None => rt.k,
    }
}
