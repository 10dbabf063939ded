//! Fading-averaged rates.
//!
//! All closed-form evaluators accept an *activity profile*: the probability
//! that each link transmits, independently of the others and of the fading.
//! A deterministic action is the 0/1 profile; the cluster utility fixes the
//! links of one cluster and gives every other link probability 1/2.
//!
//! Per-link ergodic rate, with `g_kl` the path gain and `p_l` the activity:
//!
//! ```text
//! R_k = p_k log2(e) ∫_0^∞ e^{-z/snr}/z · (1 - (1 + z g_kk / m)^{-m})
//!                         · Π_{l≠k} (1 - p_l + p_l / (1 + z g_kl)) dz
//! ```
//!
//! The integral is evaluated in `u = ln z`, where `dz / z = du` removes the
//! singular weight and the integrand decays exponentially at both ends.

use rand::SeedableRng;
use rayon::prelude::*;

use crate::action::SchedulingAction;
use crate::channel::{
    instantaneous_rates, instantaneous_sum_se, one_bit_feedback, sample_fading, sum_throughput,
    FadingBlock, LinkBudget,
};
use crate::clustering::ClusterPartition;
use crate::error::{Error, Result};
use crate::quadrature::integrate;
pub use crate::quadrature::QuadratureConfig;
use crate::rng::{derive_seed, Purpose, SimRng};
use crate::topology::PathGains;

/// Default cap on K for exhaustive 2^K sweeps.
pub const DEFAULT_EXHAUSTIVE_CAP: usize = 20;

const MC_CHUNK: usize = 1 << 15;

/// Laplace transform of Gamma(m, m) at `x`: `(1 + x/m)^{-m}`.
pub fn laplace_gamma(x: f64, m: u32) -> f64 {
    let m = m as f64;
    (-m * (x / m).ln_1p()).exp()
}

/// `1 - (1 + x/m)^{-m}` without cancellation for small `x`.
#[inline]
fn one_minus_laplace_gamma(x: f64, m: f64) -> f64 {
    -(-m * (x / m).ln_1p()).exp_m1()
}

/// What an optimiser maximises over actions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    /// Ergodic sum spectral efficiency (bits/s/Hz), by quadrature.
    SumSe(QuadratureConfig),
    /// Ergodic sum throughput `E[Σ r_k 1{R_k > r_k}]`, in closed form.
    SumThroughput,
}

/// Statistical CSI of a network: path gains, link budget and Nakagami shape.
#[derive(Debug, Clone, Copy)]
pub struct ErgodicModel<'a> {
    pub gains: &'a PathGains,
    pub budget: &'a LinkBudget,
    pub m: u32,
}

impl<'a> ErgodicModel<'a> {
    pub fn new(gains: &'a PathGains, budget: &'a LinkBudget, m: u32) -> Result<Self> {
        if m < 1 {
            return Err(Error::param("Nakagami shape m must be a positive integer"));
        }
        if budget.links() != gains.links() {
            return Err(Error::param("link budget and gains disagree on K"));
        }
        Ok(Self { gains, budget, m })
    }

    pub fn links(&self) -> usize {
        self.gains.links()
    }

    fn check_profile(&self, activity: &[f64]) -> Result<()> {
        if activity.len() != self.links() {
            return Err(Error::param("activity profile must have length K"));
        }
        if activity.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::param("activity probabilities must lie in [0, 1]"));
        }
        Ok(())
    }

    /// The integrand in the original variable `z`, stable down to `z -> 0`
    /// where it tends to `g_kk * Π(...)`.
    pub fn rate_integrand(&self, k: usize, activity: &[f64], z: f64) -> f64 {
        let row = self.gains.row(k);
        let m = self.m as f64;
        let x = z * row[k];
        // (1 - (1 + x/m)^{-m}) / x
        let ratio = if x < 1e-8 {
            1.0 - (m + 1.0) / (2.0 * m) * x
        } else {
            one_minus_laplace_gamma(x, m) / x
        };
        let mut value = (-z / self.budget.snr).exp() * row[k] * ratio;
        for (l, (&g, &p)) in row.iter().zip(activity).enumerate() {
            if l != k && p > 0.0 {
                value *= 1.0 - p + p / (1.0 + z * g);
            }
        }
        value
    }

    /// Expected rate of link `k`, conditional factor `p_k` included.
    pub fn link_rate(&self, k: usize, activity: &[f64], quad: &QuadratureConfig) -> Result<f64> {
        self.check_profile(activity)?;
        quad.validate()?;
        let weight = activity[k];
        let desired = self.gains.get(k, k);
        if weight == 0.0 || desired == 0.0 {
            return Ok(0.0);
        }
        let m = self.m as f64;
        let inv_snr = 1.0 / self.budget.snr;
        let interferers: Vec<(f64, f64)> = self
            .gains
            .row(k)
            .iter()
            .zip(activity)
            .enumerate()
            .filter(|(l, (_, &p))| *l != k && p > 0.0)
            .map(|(_, (&g, &p))| (g, p))
            .collect();

        // below z_lo the integral is at most g_kk * z_lo
        let z_lo = 1e-3 * quad.abs_tol / desired;
        let z_hi = quad.z_max_factor * self.budget.snr * (1.0 / quad.abs_tol).ln();
        if z_lo >= z_hi {
            return Ok(0.0);
        }
        let (u_lo, u_hi) = (z_lo.ln(), z_hi.ln());
        let integrand = |u: f64| {
            let z = u.exp();
            let mut value = (-z * inv_snr).exp() * one_minus_laplace_gamma(z * desired, m);
            for &(g, p) in &interferers {
                value *= 1.0 - p + p / (1.0 + z * g);
            }
            value
        };
        let pieces = ((u_hi - u_lo) / 2.0).ceil().max(1.0) as usize;
        let estimate = integrate(
            integrand,
            u_lo,
            u_hi,
            quad.abs_tol,
            quad.rel_tol,
            quad.max_intervals.max(pieces + 1),
            pieces,
        )?;
        Ok(weight * std::f64::consts::LOG2_E * estimate.value)
    }

    pub fn sum_se(&self, activity: &[f64], quad: &QuadratureConfig) -> Result<f64> {
        (0..self.links())
            .map(|k| self.link_rate(k, activity, quad))
            .sum()
    }

    /// `P[R_k > r_k | link k active]` under the activity profile.
    ///
    /// With `X ~ Gamma(m, m)`, `s = m (2^r - 1) / g_kk` and `V` the
    /// interference plus noise, `P[X > sV/m] = Σ_{n<m} [u^n] E[e^{-s(1-u)V}]`;
    /// each factor of that Laplace transform has an elementary power series.
    pub fn link_success(&self, k: usize, activity: &[f64]) -> f64 {
        let desired = self.gains.get(k, k);
        if desired == 0.0 {
            return 0.0;
        }
        let terms = self.m as usize;
        let threshold = self.budget.target_rates[k].exp2() - 1.0;
        let s = self.m as f64 * threshold / desired;
        let noise = s / self.budget.snr;

        // coefficients of e^{-noise (1 - u)}
        let mut series = vec![0.0; terms];
        series[0] = (-noise).exp();
        for n in 1..terms {
            series[n] = series[n - 1] * noise / n as f64;
        }
        let mut factor = vec![0.0; terms];
        let mut product = vec![0.0; terms];
        for (l, (&g, &p)) in self.gains.row(k).iter().zip(activity).enumerate() {
            if l == k || p == 0.0 {
                continue;
            }
            let c = s * g;
            let ratio = c / (1.0 + c);
            let mut coeff = p / (1.0 + c);
            for (n, f) in factor.iter_mut().enumerate() {
                *f = coeff;
                if n == 0 {
                    *f += 1.0 - p;
                }
                coeff *= ratio;
            }
            for n in 0..terms {
                product[n] = (0..=n).map(|i| series[i] * factor[n - i]).sum();
            }
            std::mem::swap(&mut series, &mut product);
        }
        series.iter().sum::<f64>().clamp(0.0, 1.0)
    }

    /// Closed-form ergodic sum throughput `Σ_k r_k p_k P[R_k > r_k]`.
    pub fn sum_throughput(&self, activity: &[f64]) -> Result<f64> {
        self.check_profile(activity)?;
        Ok((0..self.links())
            .map(|k| {
                let p = activity[k];
                if p == 0.0 {
                    0.0
                } else {
                    self.budget.target_rates[k] * p * self.link_success(k, activity)
                }
            })
            .sum())
    }

    pub fn utility(&self, objective: &Objective, activity: &[f64]) -> Result<f64> {
        match objective {
            Objective::SumSe(quad) => self.sum_se(activity, quad),
            Objective::SumThroughput => self.sum_throughput(activity),
        }
    }

    /// Activity profile of cluster `c` playing `sub` while every other
    /// link is on with probability 1/2.
    pub fn cluster_activity(
        &self,
        partition: &ClusterPartition,
        c: usize,
        sub: &SchedulingAction,
    ) -> Result<Vec<f64>> {
        let members = partition
            .clusters()
            .get(c)
            .ok_or_else(|| Error::param(format!("cluster {c} does not exist")))?;
        if sub.len() != members.len() {
            return Err(Error::param("cluster action length must equal the cluster size"));
        }
        if partition.links() != self.links() {
            return Err(Error::param("partition and network disagree on K"));
        }
        let mut activity = vec![0.5; self.links()];
        for (&link, &bit) in members.iter().zip(sub.bits()) {
            activity[link] = if bit { 1.0 } else { 0.0 };
        }
        Ok(activity)
    }

    pub fn cluster_utility(
        &self,
        partition: &ClusterPartition,
        c: usize,
        sub: &SchedulingAction,
        objective: &Objective,
    ) -> Result<f64> {
        let activity = self.cluster_activity(partition, c, sub)?;
        self.utility(objective, &activity)
    }

    /// Best of all 2^K actions, ties to the lowest index.
    pub fn exhaustive_optimal(
        &self,
        objective: &Objective,
        cap: usize,
    ) -> Result<(SchedulingAction, f64)> {
        let k = self.links();
        if k > cap.min(crate::action::MAX_INDEXED_LINKS) {
            return Err(Error::Capacity { links: k, cap });
        }
        let (index, value) = (0..1u64 << k)
            .into_par_iter()
            .map(|j| {
                let action = SchedulingAction::from_index(j, k);
                self.utility(objective, &action.as_activity()).map(|v| (j, v))
            })
            .try_reduce_with(|a, b| Ok(better(a, b)))
            .expect("action space is never empty")?;
        Ok((SchedulingAction::from_index(index, k), value))
    }
}

/// Larger value wins; on equal values the lower index wins.
pub(crate) fn better(a: (u64, f64), b: (u64, f64)) -> (u64, f64) {
    if b.1 > a.1 || (b.1 == a.1 && b.0 < a.0) {
        b
    } else {
        a
    }
}

/// Ergodic rate of link `k` under a deterministic action.
pub fn ergodic_rate(
    gains: &PathGains,
    action: &SchedulingAction,
    budget: &LinkBudget,
    m: u32,
    k: usize,
    quad: &QuadratureConfig,
) -> Result<f64> {
    ErgodicModel::new(gains, budget, m)?.link_rate(k, &action.as_activity(), quad)
}

/// Ergodic sum spectral efficiency of a deterministic action.
pub fn ergodic_sum_se(
    gains: &PathGains,
    action: &SchedulingAction,
    budget: &LinkBudget,
    m: u32,
    quad: &QuadratureConfig,
) -> Result<f64> {
    ErgodicModel::new(gains, budget, m)?.sum_se(&action.as_activity(), quad)
}

/// Closed-form ergodic sum throughput of a deterministic action.
pub fn ergodic_sum_throughput(
    gains: &PathGains,
    action: &SchedulingAction,
    budget: &LinkBudget,
    m: u32,
) -> Result<f64> {
    ErgodicModel::new(gains, budget, m)?.sum_throughput(&action.as_activity())
}

/// Cluster utility: ergodic sum SE with cluster `c` playing `sub` and all
/// other links Bernoulli(1/2).
pub fn cluster_utility(
    gains: &PathGains,
    partition: &ClusterPartition,
    c: usize,
    sub: &SchedulingAction,
    budget: &LinkBudget,
    m: u32,
    quad: &QuadratureConfig,
) -> Result<f64> {
    ErgodicModel::new(gains, budget, m)?.cluster_utility(partition, c, sub, &Objective::SumSe(*quad))
}

pub fn exhaustive_optimal(
    gains: &PathGains,
    budget: &LinkBudget,
    m: u32,
    quad: &QuadratureConfig,
) -> Result<(SchedulingAction, f64)> {
    ErgodicModel::new(gains, budget, m)?.exhaustive_optimal(&Objective::SumSe(*quad), DEFAULT_EXHAUSTIVE_CAP)
}

/// Sample mean and its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
}

#[derive(Clone, Copy)]
struct Moments {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn merge(self, other: Moments) -> Moments {
        if self.n == 0 {
            return other;
        }
        if other.n == 0 {
            return self;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        let mean = self.mean + delta * other.n as f64 / n as f64;
        let m2 = self.m2 + other.m2 + delta * delta * (self.n as f64 * other.n as f64) / n as f64;
        Moments { n, mean, m2 }
    }
}

/// Monte Carlo mean of `metric` over `n_samples` blocks drawn by `sampler`.
///
/// Samples are processed in fixed-size chunks, each with its own derived
/// seed, and merged in chunk order, so the result does not depend on how
/// many threads run it.
pub fn monte_carlo_with<S, M>(n_samples: usize, seed: u64, sampler: S, metric: M) -> Result<McEstimate>
where
    S: Fn(&mut SimRng) -> Result<FadingBlock> + Sync,
    M: Fn(&FadingBlock, &mut SimRng) -> f64 + Sync,
{
    if n_samples == 0 {
        return Err(Error::param("Monte Carlo needs at least one sample"));
    }
    let chunks = n_samples.div_ceil(MC_CHUNK);
    let parts: Vec<Moments> = (0..chunks)
        .into_par_iter()
        .map(|c| -> Result<Moments> {
            let mut rng = SimRng::seed_from_u64(derive_seed(seed, Purpose::MonteCarlo, c as u64));
            let len = MC_CHUNK.min(n_samples - c * MC_CHUNK);
            let mut acc = Moments { n: 0, mean: 0.0, m2: 0.0 };
            for _ in 0..len {
                let block = sampler(&mut rng)?;
                let x = metric(&block, &mut rng);
                acc.n += 1;
                let delta = x - acc.mean;
                acc.mean += delta / acc.n as f64;
                acc.m2 += delta * (x - acc.mean);
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let total = parts
        .into_iter()
        .fold(Moments { n: 0, mean: 0.0, m2: 0.0 }, Moments::merge);
    let variance = if total.n > 1 {
        total.m2 / (total.n - 1) as f64
    } else {
        0.0
    };
    Ok(McEstimate {
        mean: total.mean,
        stderr: (variance / total.n as f64).sqrt(),
        samples: total.n,
    })
}

/// Monte Carlo estimate of the ergodic sum SE: mean of the instantaneous
/// sum SE over independent Nakagami/Rayleigh blocks.
pub fn monte_carlo_ergodic_sum_se(
    gains: &PathGains,
    action: &SchedulingAction,
    budget: &LinkBudget,
    m: u32,
    n_samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    let k = gains.links();
    monte_carlo_with(
        n_samples,
        seed,
        |rng| sample_fading(k, m, rng),
        |block, _| instantaneous_sum_se(gains, block, action, budget.snr),
    )
}

/// Monte Carlo estimate of the ergodic sum throughput (no feedback errors).
pub fn monte_carlo_mean_throughput(
    gains: &PathGains,
    action: &SchedulingAction,
    budget: &LinkBudget,
    m: u32,
    n_samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    let k = gains.links();
    monte_carlo_with(
        n_samples,
        seed,
        |rng| sample_fading(k, m, rng),
        |block, rng| {
            let rates = instantaneous_rates(gains, block, action, budget.snr);
            sum_throughput(&one_bit_feedback(&rates, budget, 0.0, rng), budget)
        },
    )
}
