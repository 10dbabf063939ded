//! The fading-block experiment loop.
//!
//! For every seed the run draws one topology and shares it, the fading of
//! every block, the feedback flip draws and the mobility timeline between
//! all configured schedulers, so their results form paired samples. Each
//! block's randomness is keyed by `(seed, block)` and never depends on what
//! a scheduler did before.
//!
//! Regret is measured with expected rewards: the closed-form ergodic sum
//! throughput of the action played, against the best action (when K is
//! small enough to search) and, for bandits, against the quasi-optimum of
//! their own partition.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::action::SchedulingAction;
use crate::channel::{
    instantaneous_rates, one_bit_feedback, sample_fading, sum_throughput, AckVector, FadingBlock,
    LinkBudget,
};
use crate::clustering::{
    feedback_dissimilarity, hierarchical_cluster, pathloss_dissimilarity, random_cluster,
    ClusterPartition,
};
use crate::config::{ClusteringMode, ExperimentConfig, SchedulerSpec};
use crate::ergodic::{ErgodicModel, Objective};
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};
use crate::schedulers::{
    lquasiopt_schedule, BanditLinQ, BanditState, BlockContext, DOnOff, ItLinQ, NoScheduling,
    RandomScheduler, Scheduler, SchedulerKind, StaticScheduler,
};
use crate::topology::{generate_topology, NetworkTopology, PathGains};
use crate::trace::{aggregate, average_sum_se, average_throughput, AggregateRow, Phase, RunSummary, TraceRow};

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub scheduler: String,
    pub kind: SchedulerKind,
    pub seed: u64,
    pub rows: Vec<TraceRow>,
    pub summary: RunSummary,
}

/// Everything a seed's schedulers share.
#[derive(Debug, Clone)]
pub struct SeedEnvironment {
    pub seed: u64,
    /// Geometry per mobility epoch; a single entry without mobility.
    pub epochs: Vec<(NetworkTopology, PathGains)>,
    pub budget: LinkBudget,
    pub m: u32,
    /// Best ergodic sum throughput per epoch, when tracked.
    pub optimal_means: Option<Vec<f64>>,
    period: usize,
}

impl SeedEnvironment {
    pub fn new(config: &ExperimentConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let topology = generate_topology(
            &config.network.topology_params(),
            &mut stream(seed, Purpose::Topology, 0),
        )?;
        Self::with_topology(config, seed, topology)
    }

    /// Uses a given initial geometry instead of drawing one.
    pub fn with_topology(config: &ExperimentConfig, seed: u64, topology: NetworkTopology) -> Result<Self> {
        let k = topology.links();
        if k != config.network.links {
            return Err(Error::param("topology size does not match network.links"));
        }
        let budget = config.channel.budget(k)?;
        let mobility = &config.mobility;
        let period = if mobility.enabled {
            mobility.period_blocks as usize
        } else {
            usize::MAX
        };
        let epoch_count = if mobility.enabled {
            (config.run.blocks - 1) / period + 1
        } else {
            1
        };
        let mut epochs = Vec::with_capacity(epoch_count);
        let gains = topology.path_gains();
        epochs.push((topology, gains));
        for e in 1..epoch_count {
            let moved = epochs[e - 1]
                .0
                .apply_mobility(mobility, &mut stream(seed, Purpose::Mobility, e as u64));
            let gains = moved.path_gains();
            epochs.push((moved, gains));
        }
        let optimal_means = if k <= config.run.regret_cap && !mobility.enabled {
            let mut means = Vec::with_capacity(epochs.len());
            for (_, gains) in &epochs {
                let model = ErgodicModel::new(gains, &budget, config.channel.m)?;
                means.push(model.exhaustive_optimal(&Objective::SumThroughput, config.run.regret_cap)?.1);
            }
            Some(means)
        } else {
            None
        };
        Ok(Self {
            seed,
            epochs,
            budget,
            m: config.channel.m,
            optimal_means,
            period,
        })
    }

    pub fn links(&self) -> usize {
        self.budget.links()
    }

    pub fn epoch_of(&self, t: usize) -> usize {
        if self.period == usize::MAX {
            0
        } else {
            (t / self.period).min(self.epochs.len() - 1)
        }
    }

    pub fn fading(&self, t: usize) -> Result<FadingBlock> {
        sample_fading(self.links(), self.m, &mut stream(self.seed, Purpose::Fading, t as u64))
    }

    pub fn feedback(&self, t: usize, rates: &[f64], flip_prob: f64) -> AckVector {
        one_bit_feedback(rates, &self.budget, flip_prob, &mut stream(self.seed, Purpose::Flips, t as u64))
    }
}

/// Stable per-label stream index, so adding a scheduler to a config does
/// not change the random draws of the others.
fn label_key(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Cluster partition a bandit uses, built from the clustering phase where needed.
pub fn bandit_partition(spec: &SchedulerSpec, env: &SeedEnvironment) -> Result<ClusterPartition> {
    let k = env.links();
    let gains = &env.epochs[0].1;
    match spec.clustering {
        ClusteringMode::Single => Ok(ClusterPartition::single(k)),
        ClusteringMode::Random => {
            let c = spec.clusters.unwrap_or_else(|| k.div_ceil(spec.max_cluster_size));
            random_cluster(k, c, &mut stream(env.seed, Purpose::Clustering, c as u64))
        }
        ClusteringMode::Pathloss => hierarchical_cluster(&pathloss_dissimilarity(gains), spec.max_cluster_size, None),
        ClusteringMode::Feedback => {
            let blocks = (0..spec.t_clust).map(|t| env.fading(t)).collect::<Result<Vec<_>>>()?;
            let d = feedback_dissimilarity(gains, &env.budget, spec.eta, &blocks)?;
            hierarchical_cluster(&d, spec.max_cluster_size, None)
        }
    }
}

pub fn build_scheduler(spec: &SchedulerSpec, env: &SeedEnvironment) -> Result<Box<dyn Scheduler>> {
    let k = env.links();
    let range = env.budget.reward_range();
    Ok(match spec.kind {
        SchedulerKind::NoScheduling => Box::new(NoScheduling),
        SchedulerKind::Random => Box::new(RandomScheduler::new(stream(
            env.seed,
            Purpose::Scheduler,
            label_key(&spec.label()),
        ))),
        SchedulerKind::ItLinQ => Box::new(ItLinQ::new(spec.eta)?),
        SchedulerKind::DOnOff => Box::new(DOnOff::new(
            &env.epochs[0].0,
            spec.kappa,
            spec.beta_error,
            &mut stream(env.seed, Purpose::Estimation, 0),
        )?),
        SchedulerKind::ExhaustiveOptimal => Box::new(StaticScheduler::exhaustive(
            env.m,
            spec.objective(),
            crate::ergodic::DEFAULT_EXHAUSTIVE_CAP,
        )),
        SchedulerKind::LQuasiOpt => Box::new(StaticScheduler::lquasiopt(env.m, spec.objective(), spec.max_cluster_size)?),
        SchedulerKind::FlatUcb1 => Box::new(BanditLinQ::flat(k, spec.ucb(), range, spec.max_arm_links)?),
        SchedulerKind::BanditLinQ => {
            let partition = bandit_partition(spec, env)?;
            Box::new(BanditLinQ::new(BanditState::new(partition, spec.ucb(), range, spec.max_arm_links)?))
        }
    })
}

/// `Reg[n] = n mu_ref - Σ_{t<=n} mu_{pi[t]}` for the visited action indices.
pub fn cumulative_regret(visited: &[u64], reference_mean: f64, means: &HashMap<u64, f64>) -> Result<Vec<f64>> {
    let mut total = 0.0;
    visited
        .iter()
        .enumerate()
        .map(|(n, j)| {
            let mu = means
                .get(j)
                .ok_or_else(|| Error::Accounting(format!("no ground-truth mean for action {j}")))?;
            total += mu;
            Ok((n + 1) as f64 * reference_mean - total)
        })
        .collect()
}

/// Ergodic sum throughput of the concatenated per-cluster best actions.
pub fn quasi_optimal_mean(gains: &PathGains, budget: &LinkBudget, m: u32, partition: &ClusterPartition) -> Result<f64> {
    let model = ErgodicModel::new(gains, budget, m)?;
    let q = lquasiopt_schedule(&model, partition, &Objective::SumThroughput)?;
    model.sum_throughput(&q.action.as_activity())
}

/// Runs one scheduler of the config on a prepared environment.
pub fn run_scheduler(config: &ExperimentConfig, index: usize, env: &SeedEnvironment) -> Result<SimulationTrace> {
    let spec = config
        .schedulers
        .get(index)
        .ok_or_else(|| Error::param(format!("scheduler {index} is not configured")))?;
    let k = env.links();
    let blocks = config.run.blocks;
    let own_phase = spec.clustering_blocks();
    let excluded = config.clustering_blocks();
    let flip_prob = spec.flip_prob.unwrap_or(config.channel.flip_prob);
    let mut scheduler = build_scheduler(spec, env)?;

    let quasi_means = match (spec.kind.is_bandit(), scheduler.partition(), config.mobility.enabled) {
        (true, Some(p), false) => Some(
            env.epochs
                .iter()
                .map(|(_, g)| quasi_optimal_mean(g, &env.budget, env.m, p))
                .collect::<Result<Vec<_>>>()?,
        ),
        _ => None,
    };
    let models: Vec<ErgodicModel<'_>> = env
        .epochs
        .iter()
        .map(|(_, g)| ErgodicModel::new(g, &env.budget, env.m))
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(blocks);
    let mut regret_opt = 0.0;
    let mut regret_quasi = 0.0;
    for t in 0..blocks {
        let fading = env.fading(t)?;
        if t < own_phase {
            rows.push(TraceRow {
                t: t + 1,
                phase: Phase::Clustering,
                action: SchedulingAction::all_off(k).to_string(),
                cluster_arms: None,
                sum_se: 0.0,
                sum_throughput: 0.0,
                acks: AckVector { bits: vec![false; k] }.to_string(),
                rates: vec![0.0; k],
                regret_optimal: None,
                regret_quasi: None,
            });
            continue;
        }
        let epoch = env.epoch_of(t);
        let (topology, gains) = &env.epochs[epoch];
        let ctx = BlockContext {
            t,
            epoch,
            topology,
            gains,
            fading: &fading,
            budget: &env.budget,
        };
        let selection = scheduler.select(&ctx)?;
        let rates = instantaneous_rates(gains, &fading, &selection.action, env.budget.snr);
        let sum_se: f64 = rates.iter().sum();
        let acks = env.feedback(t, &rates, flip_prob);
        let throughput = sum_throughput(&acks, &env.budget);
        scheduler.observe(&selection, throughput)?;

        let expected = if env.optimal_means.is_some() || quasi_means.is_some() {
            Some(models[epoch].sum_throughput(&selection.action.as_activity())?)
        } else {
            None
        };
        let row_regret_opt = match (&env.optimal_means, expected) {
            (Some(best), Some(mu)) => {
                regret_opt += best[epoch] - mu;
                Some(regret_opt)
            }
            _ => None,
        };
        let row_regret_quasi = match (&quasi_means, expected) {
            (Some(best), Some(mu)) => {
                regret_quasi += best[epoch] - mu;
                Some(regret_quasi)
            }
            _ => None,
        };
        rows.push(TraceRow {
            t: t + 1,
            phase: Phase::Schedule,
            action: selection.action.to_string(),
            cluster_arms: selection.arms.clone(),
            sum_se,
            sum_throughput: throughput,
            acks: acks.to_string(),
            rates,
            regret_optimal: row_regret_opt,
            regret_quasi: row_regret_quasi,
        });
    }

    let evaluations = match spec.kind {
        SchedulerKind::LQuasiOpt => scheduler.partition().map(ClusterPartition::sub_action_count).map(|n| n as u64),
        SchedulerKind::ExhaustiveOptimal => Some(1u64 << k.min(63)),
        _ => None,
    };
    let summary = RunSummary {
        scheduler: spec.label(),
        kind: spec.kind.name().to_string(),
        seed: env.seed,
        blocks,
        excluded_blocks: excluded,
        r_avg: average_sum_se(&rows, excluded),
        mean_throughput: average_throughput(&rows, excluded),
        regret_optimal: rows.last().and_then(|r| r.regret_optimal),
        regret_quasi: rows.last().and_then(|r| r.regret_quasi),
        partition: scheduler.partition().map(|p| p.to_string()).unwrap_or_default(),
        evaluations,
    };
    Ok(SimulationTrace {
        scheduler: spec.label(),
        kind: spec.kind,
        seed: env.seed,
        rows,
        summary,
    })
}

/// All schedulers of the config on one seed, in config order.
pub fn run_experiment(config: &ExperimentConfig, seed: u64) -> Result<Vec<SimulationTrace>> {
    let env = SeedEnvironment::new(config, seed)?;
    (0..config.schedulers.len())
        .map(|i| run_scheduler(config, i, &env))
        .collect()
}

#[derive(Debug, Clone)]
pub struct Replication {
    /// Seed-major, then config order.
    pub traces: Vec<SimulationTrace>,
    pub aggregates: Vec<AggregateRow>,
}

impl Replication {
    pub fn summaries(&self) -> Vec<RunSummary> {
        self.traces.iter().map(|t| t.summary.clone()).collect()
    }
}

pub fn seeds(config: &ExperimentConfig) -> Vec<u64> {
    (0..config.run.seeds as u64).map(|i| config.run.seed.wrapping_add(i)).collect()
}

/// Runs every scheduler on `run.seeds` consecutive seeds on a pool of
/// `run.workers` threads. Output order and content do not depend on the
/// worker count.
pub fn replicate(config: &ExperimentConfig) -> Result<Replication> {
    config.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if config.run.workers > 0 {
        builder = builder.num_threads(config.run.workers);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::param(format!("cannot start worker pool: {e}")))?;
    pool.install(|| {
        let envs = seeds(config)
            .into_par_iter()
            .map(|seed| SeedEnvironment::new(config, seed))
            .collect::<Result<Vec<_>>>()?;
        let jobs: Vec<(usize, usize)> = (0..envs.len())
            .flat_map(|e| (0..config.schedulers.len()).map(move |s| (e, s)))
            .collect();
        let traces = jobs
            .into_par_iter()
            .map(|(e, s)| run_scheduler(config, s, &envs[e]))
            .collect::<Result<Vec<_>>>()?;
        let summaries: Vec<RunSummary> = traces.iter().map(|t| t.summary.clone()).collect();
        Ok(Replication {
            aggregates: aggregate(&summaries),
            traces,
        })
    })
}
