//! Model-based optimisers that use statistical CSI: exhaustive search,
//! the clustered quasi-optimum and budget-matched random exploration.

use std::collections::BTreeSet;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;

use crate::action::SchedulingAction;
use crate::clustering::{hierarchical_cluster, pathloss_dissimilarity, ClusterPartition};
use crate::ergodic::{better, ErgodicModel, Objective};
use crate::error::{Error, Result};
use crate::rng::SimRng;
use crate::schedulers::{BlockContext, Scheduler, SchedulerKind, Selection};

/// Result of per-cluster maximisation of the cluster utility.
#[derive(Debug, Clone, PartialEq)]
pub struct QuasiOptimum {
    pub action: SchedulingAction,
    /// Best sub-action index of each cluster.
    pub arms: Vec<usize>,
    /// Cluster utility of each chosen sub-action.
    pub cluster_values: Vec<f64>,
    /// Utility evaluations spent, `Σ_c 2^{K_c}`.
    pub evaluations: u64,
}

/// Maximises every cluster's utility independently (other clusters
/// Bernoulli(1/2), ties to the lowest sub-action index) and concatenates
/// the winners.
pub fn lquasiopt_schedule(
    model: &ErgodicModel<'_>,
    partition: &ClusterPartition,
    objective: &Objective,
) -> Result<QuasiOptimum> {
    if partition.links() != model.links() {
        return Err(Error::param("partition and network disagree on K"));
    }
    if partition.max_size() > crate::ergodic::DEFAULT_EXHAUSTIVE_CAP {
        return Err(Error::Capacity {
            links: partition.max_size(),
            cap: crate::ergodic::DEFAULT_EXHAUSTIVE_CAP,
        });
    }
    let mut action = SchedulingAction::all_off(model.links());
    let mut arms = Vec::with_capacity(partition.len());
    let mut cluster_values = Vec::with_capacity(partition.len());
    let mut evaluations = 0u64;
    for (c, members) in partition.clusters().iter().enumerate() {
        let size = members.len();
        let (arm, value) = (0..1u64 << size)
            .into_par_iter()
            .map(|j| {
                let sub = SchedulingAction::from_index(j, size);
                model.cluster_utility(partition, c, &sub, objective).map(|v| (j, v))
            })
            .try_reduce_with(|a, b| Ok(better(a, b)))
            .expect("sub-action space is never empty")?;
        evaluations += 1 << size;
        action.assign(members, &SchedulingAction::from_index(arm, size));
        arms.push(arm as usize);
        cluster_values.push(value);
    }
    Ok(QuasiOptimum {
        action,
        arms,
        cluster_values,
        evaluations,
    })
}

/// Evaluates `n_trials` distinct uniformly drawn actions and keeps the best
/// (ties to the lowest index).
pub fn random_explore_then_commit(
    model: &ErgodicModel<'_>,
    objective: &Objective,
    n_trials: u64,
    rng: &mut SimRng,
) -> Result<(SchedulingAction, f64)> {
    let k = model.links();
    if k > crate::action::MAX_INDEXED_LINKS {
        return Err(Error::Capacity {
            links: k,
            cap: crate::action::MAX_INDEXED_LINKS,
        });
    }
    let space = 1u128 << k;
    if n_trials == 0 || n_trials as u128 > space {
        return Err(Error::param(format!(
            "cannot explore {n_trials} distinct actions out of 2^{k}"
        )));
    }
    let picks: Vec<u64> = if k <= 24 {
        index::sample(rng, space as usize, n_trials as usize)
            .into_iter()
            .map(|j| j as u64)
            .collect()
    } else {
        let mut seen = BTreeSet::new();
        let mut picks = Vec::with_capacity(n_trials as usize);
        while picks.len() < n_trials as usize {
            let j = if k == 64 { rng.random::<u64>() } else { rng.random_range(0..1u64 << k) };
            if seen.insert(j) {
                picks.push(j);
            }
        }
        picks
    };
    let (index, value) = picks
        .into_par_iter()
        .map(|j| {
            model
                .utility(objective, &SchedulingAction::from_index(j, k).as_activity())
                .map(|v| (j, v))
        })
        .try_reduce_with(|a, b| Ok(better(a, b)))
        .expect("at least one trial")?;
    Ok((SchedulingAction::from_index(index, k), value))
}

/// Plays one action chosen from statistical CSI, re-optimised whenever the
/// geometry changes.
#[derive(Debug, Clone)]
pub struct StaticScheduler {
    kind: SchedulerKind,
    m: u32,
    objective: Objective,
    max_cluster_size: usize,
    exhaustive_cap: usize,
    cached: Option<(usize, SchedulingAction)>,
    partition: Option<ClusterPartition>,
    evaluations: u64,
}

impl StaticScheduler {
    pub fn exhaustive(m: u32, objective: Objective, cap: usize) -> Self {
        Self {
            kind: SchedulerKind::ExhaustiveOptimal,
            m,
            objective,
            max_cluster_size: 0,
            exhaustive_cap: cap,
            cached: None,
            partition: None,
            evaluations: 0,
        }
    }

    /// Clusters by path loss with clusters of at most `max_cluster_size` links.
    pub fn lquasiopt(m: u32, objective: Objective, max_cluster_size: usize) -> Result<Self> {
        if max_cluster_size == 0 {
            return Err(Error::param("max cluster size must be at least 1"));
        }
        Ok(Self {
            kind: SchedulerKind::LQuasiOpt,
            m,
            objective,
            max_cluster_size,
            exhaustive_cap: 0,
            cached: None,
            partition: None,
            evaluations: 0,
        })
    }

    /// Utility evaluations spent on the most recent optimisation.
    pub fn evaluations(&self) -> u64 {
        self.evaluations
    }

    fn optimise(&mut self, ctx: &BlockContext<'_>) -> Result<SchedulingAction> {
        let model = ErgodicModel::new(ctx.gains, ctx.budget, self.m)?;
        match self.kind {
            SchedulerKind::ExhaustiveOptimal => {
                self.evaluations = 1 << ctx.gains.links().min(63);
                Ok(model.exhaustive_optimal(&self.objective, self.exhaustive_cap)?.0)
            }
            _ => {
                let partition =
                    hierarchical_cluster(&pathloss_dissimilarity(ctx.gains), self.max_cluster_size, None)?;
                let best = lquasiopt_schedule(&model, &partition, &self.objective)?;
                self.evaluations = best.evaluations;
                self.partition = Some(partition);
                Ok(best.action)
            }
        }
    }
}

impl Scheduler for StaticScheduler {
    fn kind(&self) -> SchedulerKind {
        self.kind
    }

    fn partition(&self) -> Option<&ClusterPartition> {
        self.partition.as_ref()
    }

    fn select(&mut self, ctx: &BlockContext<'_>) -> Result<Selection> {
        let fresh = match &self.cached {
            Some((epoch, _)) => *epoch != ctx.epoch,
            None => true,
        };
        if fresh {
            let action = self.optimise(ctx)?;
            self.cached = Some((ctx.epoch, action));
        }
        let action = self.cached.as_ref().expect("just filled").1.clone();
        Ok(Selection::plain(action))
    }
}
