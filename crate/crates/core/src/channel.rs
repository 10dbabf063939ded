//! Block fading, instantaneous rates and one-bit ACK/NACK feedback.

use rand::Rng;
use rand_distr::Exp1;

use crate::action::SchedulingAction;
use crate::error::{Error, Result};
use crate::rng::SimRng;
use crate::topology::PathGains;

/// Squared fading magnitudes for one coherence block.
///
/// Entry `(k, l)` is `|h_{k,l}|^2`, transmitter `l` to receiver `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct FadingBlock {
    links: usize,
    gains2: Vec<f64>,
}

impl FadingBlock {
    pub fn from_matrix(links: usize, gains2: Vec<f64>) -> Result<Self> {
        if gains2.len() != links * links {
            return Err(Error::param("fading matrix must be K x K"));
        }
        if gains2.iter().any(|g| !(*g >= 0.0 && g.is_finite())) {
            return Err(Error::param("fading power must be finite and non-negative"));
        }
        Ok(Self { links, gains2 })
    }

    /// Deterministic unit fading, the `m -> infinity` limit.
    pub fn unit(links: usize) -> Self {
        Self {
            links,
            gains2: vec![1.0; links * links],
        }
    }

    pub fn links(&self) -> usize {
        self.links
    }

    #[inline]
    pub fn get(&self, k: usize, l: usize) -> f64 {
        self.gains2[k * self.links + l]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.gains2
    }

    pub fn scaled(&self, factor: f64) -> FadingBlock {
        FadingBlock {
            links: self.links,
            gains2: self.gains2.iter().map(|g| g * factor).collect(),
        }
    }
}

/// Draws one block: the diagonal is Gamma(m, m) (Nakagami-m amplitude with
/// unit mean power), every cross entry is Exp(1) (Rayleigh).
pub fn sample_fading(links: usize, m: u32, rng: &mut SimRng) -> Result<FadingBlock> {
    if m < 1 {
        return Err(Error::param("Nakagami shape m must be a positive integer"));
    }
    let mut gains2 = Vec::with_capacity(links * links);
    for k in 0..links {
        for l in 0..links {
            let g = if k == l {
                sample_gamma_unit_mean(m, rng)
            } else {
                rng.sample::<f64, _>(Exp1)
            };
            gains2.push(g);
        }
    }
    Ok(FadingBlock { links, gains2 })
}

/// Gamma(m, rate m) as the mean of m unit exponentials.
#[inline]
pub(crate) fn sample_gamma_unit_mean(m: u32, rng: &mut SimRng) -> f64 {
    if m == 1 {
        return rng.sample(Exp1);
    }
    let sum: f64 = (0..m).map(|_| rng.sample::<f64, _>(Exp1)).sum();
    sum / m as f64
}

/// System SNR and the per-link target rates (bits/s/Hz).
#[derive(Debug, Clone, PartialEq)]
pub struct LinkBudget {
    pub snr: f64,
    pub target_rates: Vec<f64>,
}

impl LinkBudget {
    pub fn new(snr: f64, target_rates: Vec<f64>) -> Result<Self> {
        if !(snr > 0.0 && snr.is_finite()) {
            return Err(Error::param("snr must be positive and finite"));
        }
        if target_rates.is_empty() || target_rates.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(Error::param("target rates must be positive and finite"));
        }
        Ok(Self { snr, target_rates })
    }

    pub fn uniform(snr: f64, links: usize, rate: f64) -> Result<Self> {
        Self::new(snr, vec![rate; links])
    }

    /// `P / sigma^2` with `P` in mW and the noise power in dBm.
    pub fn snr_from_power(tx_power_mw: f64, noise_dbm: f64) -> f64 {
        tx_power_mw / 10f64.powf(noise_dbm / 10.0)
    }

    pub fn links(&self) -> usize {
        self.target_rates.len()
    }

    /// `sum_k r_k`, the range of the sum-throughput.
    pub fn reward_range(&self) -> f64 {
        self.target_rates.iter().sum()
    }
}

/// Achievable rate of link `k` in one block, treating interference as noise.
pub fn instantaneous_rate(
    gains: &PathGains,
    fading: &FadingBlock,
    action: &SchedulingAction,
    snr: f64,
    k: usize,
) -> f64 {
    if !action.is_active(k) {
        return 0.0;
    }
    let row = gains.row(k);
    let mut interference = 1.0 / snr;
    for (l, g) in row.iter().enumerate() {
        if l != k && action.is_active(l) {
            interference += fading.get(k, l) * g;
        }
    }
    let signal = fading.get(k, k) * row[k];
    (signal / interference).ln_1p() * std::f64::consts::LOG2_E
}

pub fn instantaneous_rates(
    gains: &PathGains,
    fading: &FadingBlock,
    action: &SchedulingAction,
    snr: f64,
) -> Vec<f64> {
    (0..gains.links())
        .map(|k| instantaneous_rate(gains, fading, action, snr, k))
        .collect()
}

pub fn instantaneous_sum_se(
    gains: &PathGains,
    fading: &FadingBlock,
    action: &SchedulingAction,
    snr: f64,
) -> f64 {
    (0..gains.links())
        .map(|k| instantaneous_rate(gains, fading, action, snr, k))
        .sum()
}

/// Noise-normalised received power `snr * |h_{k,l}|^2 * g_{k,l}`: SNR on the
/// diagonal, interference-to-noise ratio off it.
pub fn received_power_ratio(
    gains: &PathGains,
    fading: &FadingBlock,
    snr: f64,
    k: usize,
    l: usize,
) -> f64 {
    snr * fading.get(k, l) * gains.get(k, l)
}

/// The ACK (`true`) / NACK (`false`) bit of every receiver.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AckVector {
    pub bits: Vec<bool>,
}

impl AckVector {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }
}

impl std::fmt::Display for AckVector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// ACK iff `R_k > r_k`, then each bit flipped independently with `flip_prob`.
///
/// One uniform is consumed per link whatever `flip_prob` is, so runs that
/// differ only in the flip probability see aligned random streams.
pub fn one_bit_feedback(
    rates: &[f64],
    budget: &LinkBudget,
    flip_prob: f64,
    rng: &mut SimRng,
) -> AckVector {
    let bits = rates
        .iter()
        .zip(&budget.target_rates)
        .map(|(rate, target)| {
            let ack = rate > target;
            let flip = rng.random::<f64>() < flip_prob;
            ack ^ flip
        })
        .collect();
    AckVector { bits }
}

pub fn sum_throughput(acks: &AckVector, budget: &LinkBudget) -> f64 {
    acks.bits
        .iter()
        .zip(&budget.target_rates)
        .filter(|(ack, _)| **ack)
        .map(|(_, r)| r)
        .sum()
}

pub fn validate_flip_prob(flip_prob: f64) -> Result<()> {
    if (0.0..0.5).contains(&flip_prob) {
        Ok(())
    } else {
        Err(Error::param("flip probability must lie in [0, 0.5)"))
    }
}
