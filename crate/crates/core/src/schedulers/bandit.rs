//! Clustered UCB on one-bit feedback.
//!
//! Each cluster runs its own UCB index over its `2^{K_c}` sub-actions, but
//! every cluster is credited with the same global sum throughput. The
//! exploration bonus is inflated by `2^{K - K_c}`, the number of joint
//! actions of the other clusters that the cluster's empirical mean averages
//! over:
//!
//! ```text
//! B = mu_hat + sqrt(alpha * 2^{K-K_c} * (Σ r_k)^2 * ln t / (2 T))
//! ```
//!
//! With a single cluster this is UCB1 over all `2^K` actions.

use serde::{Deserialize, Serialize};

use crate::action::SchedulingAction;
use crate::clustering::ClusterPartition;
use crate::error::{Error, Result};
use crate::schedulers::{BlockContext, Scheduler, SchedulerKind, Selection};

/// Largest cluster the bandit will allocate arm tables for.
pub const DEFAULT_MAX_ARM_LINKS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UcbConfig {
    /// Exploration scale; 4 matches the concentration radius of the regret analysis.
    pub alpha: f64,
    /// Discount `w` applied to all past statistics per update; 1 disables it.
    pub discount: f64,
}

impl Default for UcbConfig {
    fn default() -> Self {
        Self {
            alpha: 4.0,
            discount: 1.0,
        }
    }
}

impl UcbConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::param("alpha must be positive"));
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return Err(Error::param("discount must lie in (0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BanditState {
    partition: ClusterPartition,
    /// Discount-weighted trial counts, per cluster and sub-action.
    counts: Vec<Vec<f64>>,
    /// Discount-weighted sums of observed sum throughput.
    reward_sums: Vec<Vec<f64>>,
    /// Raw trial counts, never discounted.
    trials: Vec<Vec<u64>>,
    /// Bandit-phase index of the block about to be selected, from 1.
    t: u64,
    config: UcbConfig,
    reward_range: f64,
}

impl BanditState {
    pub fn new(
        partition: ClusterPartition,
        config: UcbConfig,
        reward_range: f64,
        max_arm_links: usize,
    ) -> Result<Self> {
        config.validate()?;
        partition.validate()?;
        if !(reward_range > 0.0 && reward_range.is_finite()) {
            return Err(Error::param("reward range must be positive"));
        }
        let largest = partition.max_size();
        if largest > max_arm_links.min(40) {
            return Err(Error::Capacity {
                links: largest,
                cap: max_arm_links.min(40),
            });
        }
        let arms: Vec<usize> = partition.sizes().iter().map(|&s| 1usize << s).collect();
        Ok(Self {
            counts: arms.iter().map(|&n| vec![0.0; n]).collect(),
            reward_sums: arms.iter().map(|&n| vec![0.0; n]).collect(),
            trials: arms.iter().map(|&n| vec![0; n]).collect(),
            partition,
            t: 1,
            config,
            reward_range,
        })
    }

    pub fn partition(&self) -> &ClusterPartition {
        &self.partition
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn config(&self) -> &UcbConfig {
        &self.config
    }

    pub fn reward_range(&self) -> f64 {
        self.reward_range
    }

    pub fn counts(&self, c: usize) -> &[f64] {
        &self.counts[c]
    }

    pub fn reward_sums(&self, c: usize) -> &[f64] {
        &self.reward_sums[c]
    }

    pub fn trials(&self, c: usize) -> &[u64] {
        &self.trials[c]
    }

    /// `None` for an arm that has never been tried.
    pub fn empirical_mean(&self, c: usize, arm: usize) -> Option<f64> {
        (self.trials[c][arm] > 0).then(|| self.reward_sums[c][arm] / self.counts[c][arm])
    }

    /// Number of blocks still needed before every cluster has tried every arm.
    pub fn initialization_remaining(&self) -> u64 {
        self.trials
            .iter()
            .map(|arms| arms.iter().filter(|&&n| n == 0).count() as u64)
            .max()
            .unwrap_or(0)
    }

    /// UCB index of an already tried arm at the current `t`.
    pub fn index(&self, c: usize, arm: usize) -> f64 {
        let links = self.partition.links();
        let size = self.partition.clusters()[c].len();
        let exploration = ((links - size) as f64).exp2();
        let mean = self.reward_sums[c][arm] / self.counts[c][arm];
        let bonus = (self.config.alpha
            * exploration
            * self.reward_range
            * self.reward_range
            * (self.t as f64).ln()
            / (2.0 * self.counts[c][arm]))
            .sqrt();
        mean + bonus
    }

    /// Test support: overwrite one arm's statistics.
    #[doc(hidden)]
    pub fn set_arm(&mut self, c: usize, arm: usize, count: f64, sum: f64, trials: u64) {
        self.counts[c][arm] = count;
        self.reward_sums[c][arm] = sum;
        self.trials[c][arm] = trials;
    }

    /// Test support: jump the block index.
    #[doc(hidden)]
    pub fn set_t(&mut self, t: u64) {
        self.t = t.max(1);
    }
}

/// Per-cluster choice and the concatenated action.
///
/// A cluster with an untried sub-action plays the lowest untried index;
/// otherwise it plays the largest UCB index, ties to the lowest.
pub fn banditlinq_select(state: &BanditState) -> (Vec<usize>, SchedulingAction) {
    let mut arms = Vec::with_capacity(state.partition.len());
    let mut action = SchedulingAction::all_off(state.partition.links());
    for (c, members) in state.partition.clusters().iter().enumerate() {
        let arm = match state.trials[c].iter().position(|&n| n == 0) {
            Some(untried) => untried,
            None => {
                let mut best = 0;
                let mut best_value = state.index(c, 0);
                for arm in 1..state.trials[c].len() {
                    let value = state.index(c, arm);
                    if value > best_value {
                        best = arm;
                        best_value = value;
                    }
                }
                best
            }
        };
        action.assign(members, &SchedulingAction::from_index(arm as u64, members.len()));
        arms.push(arm);
    }
    (arms, action)
}

/// Credits `observed` to the selected arm of every cluster and advances `t`.
pub fn banditlinq_update(state: &mut BanditState, arms: &[usize], observed: f64) -> Result<()> {
    if arms.len() != state.partition.len() {
        return Err(Error::Contract(format!(
            "expected {} arm indices, got {}",
            state.partition.len(),
            arms.len()
        )));
    }
    if !(0.0..=state.reward_range).contains(&observed) {
        return Err(Error::Contract(format!(
            "observed throughput {observed} outside [0, {}]",
            state.reward_range
        )));
    }
    for (c, &arm) in arms.iter().enumerate() {
        if arm >= state.trials[c].len() {
            return Err(Error::Contract(format!("arm {arm} does not exist in cluster {c}")));
        }
    }
    let w = state.config.discount;
    for (c, &arm) in arms.iter().enumerate() {
        if w < 1.0 {
            state.counts[c].iter_mut().for_each(|n| *n *= w);
            state.reward_sums[c].iter_mut().for_each(|s| *s *= w);
        }
        state.counts[c][arm] += 1.0;
        state.reward_sums[c][arm] += observed;
        state.trials[c][arm] += 1;
    }
    state.t += 1;
    Ok(())
}

/// Clustered UCB scheduler; with one cluster it is flat UCB1.
#[derive(Debug, Clone)]
pub struct BanditLinQ {
    state: BanditState,
    flat: bool,
}

impl BanditLinQ {
    pub fn new(state: BanditState) -> Self {
        Self { state, flat: false }
    }

    /// UCB1 over all `2^K` actions; refuses `K > max_arm_links`.
    pub fn flat(links: usize, config: UcbConfig, reward_range: f64, max_arm_links: usize) -> Result<Self> {
        if links > max_arm_links {
            return Err(Error::Capacity {
                links,
                cap: max_arm_links,
            });
        }
        let state = BanditState::new(ClusterPartition::single(links), config, reward_range, max_arm_links)?;
        Ok(Self { state, flat: true })
    }

    pub fn state(&self) -> &BanditState {
        &self.state
    }
}

impl Scheduler for BanditLinQ {
    fn kind(&self) -> SchedulerKind {
        if self.flat {
            SchedulerKind::FlatUcb1
        } else {
            SchedulerKind::BanditLinQ
        }
    }

    fn partition(&self) -> Option<&ClusterPartition> {
        Some(&self.state.partition)
    }

    fn select(&mut self, _ctx: &BlockContext<'_>) -> Result<Selection> {
        let (arms, action) = banditlinq_select(&self.state);
        Ok(Selection {
            action,
            arms: Some(arms),
        })
    }

    fn observe(&mut self, selection: &Selection, throughput: f64) -> Result<()> {
        let arms = selection
            .arms
            .as_deref()
            .ok_or_else(|| Error::Contract("bandit selection without arm indices".into()))?;
        banditlinq_update(&mut self.state, arms, throughput)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn state(partition: ClusterPartition, alpha: f64, w: f64, range: f64) -> BanditState {
        BanditState::new(partition, UcbConfig { alpha, discount: w }, range, 20).unwrap()
    }

    #[test]
    fn untried_arm_is_chosen_first() {
        let mut s = state(ClusterPartition::single(2), 4.0, 1.0, 10.0);
        s.set_arm(0, 0, 1.0, 10.0, 1);
        s.set_arm(0, 2, 1.0, 10.0, 1);
        let (arms, action) = banditlinq_select(&s);
        assert_eq!(arms, vec![1]);
        assert_eq!(action.to_string(), "10");
    }

    #[test]
    fn fewer_trials_win_at_equal_means() {
        let mut s = state(ClusterPartition::single(1), 4.0, 1.0, 10.0);
        s.set_arm(0, 0, 100.0, 500.0, 100);
        s.set_arm(0, 1, 1.0, 5.0, 1);
        s.set_t(10);
        assert_eq!(banditlinq_select(&s).0, vec![1]);
    }

    #[test]
    fn worked_index_values() {
        let mut s = state(ClusterPartition::single(2), 4.0, 1.0, 10.0);
        s.set_arm(0, 0, 1.0, 0.0, 1);
        s.set_arm(0, 1, 10.0, 50.0, 10);
        s.set_arm(0, 2, 50.0, 300.0, 50);
        s.set_arm(0, 3, 1.0, 0.0, 1);
        s.set_t(100);
        let b1 = s.index(0, 1);
        let b2 = s.index(0, 2);
        let ln = 100f64.ln();
        assert!((b1 - (5.0 + (4.0 * 100.0 * ln / 20.0).sqrt())).abs() < 1e-12);
        assert!((b1 - 14.597).abs() < 1e-3);
        assert!((b2 - 10.292).abs() < 1e-3);
        // arms 0 and 3 have a larger bonus still; compare the two from the example
        s.set_arm(0, 0, 1000.0, 0.0, 1000);
        s.set_arm(0, 3, 1000.0, 0.0, 1000);
        assert_eq!(banditlinq_select(&s).0, vec![1]);
    }

    #[test]
    fn exploration_factor_uses_outside_links() {
        let p = ClusterPartition::new(3, vec![vec![0], vec![1, 2]]).unwrap();
        let mut s = state(p, 1.0, 1.0, 1.0);
        s.set_arm(0, 0, 2.0, 0.0, 2);
        s.set_arm(1, 0, 2.0, 0.0, 2);
        s.set_t(3);
        let ln = 3f64.ln();
        assert!((s.index(0, 0) - (4.0 * ln / 4.0).sqrt()).abs() < 1e-12);
        assert!((s.index(1, 0) - (2.0 * ln / 4.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn running_and_discounted_means() {
        let mut s = state(ClusterPartition::single(1), 4.0, 1.0, 20.0);
        banditlinq_update(&mut s, &[1], 10.0).unwrap();
        assert_eq!(s.empirical_mean(0, 1), Some(10.0));
        assert_eq!(s.counts(0)[1], 1.0);

        let mut s = state(ClusterPartition::single(1), 4.0, 1.0, 20.0);
        s.set_arm(0, 0, 2.0, 10.0, 2);
        banditlinq_update(&mut s, &[0], 4.0).unwrap();
        assert!((s.empirical_mean(0, 0).unwrap() - 14.0 / 3.0).abs() < 1e-15);

        let mut s = state(ClusterPartition::single(1), 4.0, 0.5, 20.0);
        banditlinq_update(&mut s, &[0], 8.0).unwrap();
        banditlinq_update(&mut s, &[0], 4.0).unwrap();
        assert!((s.empirical_mean(0, 0).unwrap() - 8.0 / 1.5).abs() < 1e-12);
        assert_eq!(s.trials(0)[0], 2);
    }

    #[test]
    fn update_rejects_out_of_range() {
        let mut s = state(ClusterPartition::single(1), 4.0, 1.0, 3.0);
        assert!(matches!(banditlinq_update(&mut s, &[0], 3.5), Err(Error::Contract(_))));
        assert!(matches!(banditlinq_update(&mut s, &[0], -0.1), Err(Error::Contract(_))));
        assert!(matches!(banditlinq_update(&mut s, &[2], 1.0), Err(Error::Contract(_))));
        assert!(matches!(banditlinq_update(&mut s, &[0, 0], 1.0), Err(Error::Contract(_))));
        assert_eq!(s.t(), 1);
    }

    #[test]
    fn flat_initialisation_takes_two_to_the_k_blocks() {
        let mut s = state(ClusterPartition::single(3), 4.0, 1.0, 9.0);
        for j in 0..8 {
            let (arms, _) = banditlinq_select(&s);
            assert_eq!(arms, vec![j]);
            banditlinq_update(&mut s, &arms, 0.0).unwrap();
        }
        assert_eq!(s.initialization_remaining(), 0);
        assert!(BanditLinQ::flat(21, UcbConfig::default(), 1.0, 20).is_err());
    }

    #[test]
    fn flat_single_link_prefers_on_arm() {
        let mut s = state(ClusterPartition::single(1), 4.0, 1.0, 3.0);
        banditlinq_update(&mut s, &[0], 0.0).unwrap();
        banditlinq_update(&mut s, &[1], 3.0).unwrap();
        for _ in 0..50 {
            let (arms, _) = banditlinq_select(&s);
            let r = if arms[0] == 1 { 3.0 } else { 0.0 };
            banditlinq_update(&mut s, &arms, r).unwrap();
        }
        assert!(s.trials(0)[1] > s.trials(0)[0]);
    }

    fn arb_partition() -> impl Strategy<Value = ClusterPartition> {
        (1usize..=8, any::<u64>()).prop_map(|(k, seed)| {
            let c = 1 + (seed as usize) % k;
            crate::clustering::random_cluster(k, c, &mut crate::rng::seeded(seed)).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn trials_are_conserved_and_means_stay_in_range(
            p in arb_partition(),
            rewards in prop::collection::vec(0.0f64..=1.0, 1..120),
            alpha in 0.01f64..8.0,
        ) {
            let range = 7.5;
            let mut s = state(p.clone(), alpha, 1.0, range);
            for (step, u) in rewards.iter().enumerate() {
                let (arms, action) = banditlinq_select(&s);
                prop_assert_eq!(action.len(), p.links());
                banditlinq_update(&mut s, &arms, u * range).unwrap();
                for c in 0..p.len() {
                    let total: u64 = s.trials(c).iter().sum();
                    prop_assert_eq!(total, step as u64 + 1);
                    prop_assert_eq!(s.counts(c).iter().sum::<f64>(), (step + 1) as f64);
                    for arm in 0..s.trials(c).len() {
                        if let Some(mu) = s.empirical_mean(c, arm) {
                            prop_assert!((0.0..=range * (1.0 + 1e-12)).contains(&mu));
                        }
                    }
                }
                for c in 0..p.len() {
                    let tried = s.trials(c).iter().filter(|&&n| n > 0).count() as u64;
                    prop_assert!(s.t() > tried);
                }
            }
        }

        #[test]
        fn discounted_means_stay_in_range(
            rewards in prop::collection::vec(0.0f64..=1.0, 1..200),
            w in 0.05f64..1.0,
        ) {
            let mut s = state(ClusterPartition::single(2), 4.0, w, 6.0);
            for u in rewards {
                let (arms, _) = banditlinq_select(&s);
                banditlinq_update(&mut s, &arms, u * 6.0).unwrap();
                for arm in 0..4 {
                    if let Some(mu) = s.empirical_mean(0, arm) {
                        prop_assert!((-1e-12..=6.0 * (1.0 + 1e-12)).contains(&mu));
                    }
                }
            }
        }

        #[test]
        fn selection_is_scale_equivariant(
            stats in prop::collection::vec((1u64..50, 0.0f64..=1.0), 8),
            t in 2u64..10_000,
            scale_exp in -20i32..20,
        ) {
            let scale = 2f64.powi(scale_exp);
            let mut a = state(ClusterPartition::single(3), 4.0, 1.0, 9.0);
            let mut b = state(ClusterPartition::single(3), 4.0, 1.0, 9.0 * scale);
            for (arm, (n, u)) in stats.iter().enumerate() {
                let sum = *n as f64 * u * 9.0;
                a.set_arm(0, arm, *n as f64, sum, *n);
                b.set_arm(0, arm, *n as f64, sum * scale, *n);
            }
            a.set_t(t);
            b.set_t(t);
            prop_assert_eq!(banditlinq_select(&a), banditlinq_select(&b));
        }
    }
}
