//! Scheduling policies.
//!
//! Every policy implements [`Scheduler`]: once per fading block the
//! simulator asks for an action, then reports the observed sum throughput.
//! Policies only look at the parts of [`BlockContext`] they are entitled to:
//! the bandits use nothing but their own feedback, the static optimisers the
//! long-term path gains, ITLinQ and D-OnOff the current block's channel.

use serde::{Deserialize, Serialize};

use crate::action::SchedulingAction;
use crate::channel::{FadingBlock, LinkBudget};
use crate::clustering::ClusterPartition;
use crate::error::Result;
use crate::topology::{NetworkTopology, PathGains};

pub mod bandit;
pub mod baselines;
pub mod optimise;

pub use bandit::{banditlinq_select, banditlinq_update, BanditLinQ, BanditState, UcbConfig};
pub use baselines::{
    d_onoff_schedule, itlinq_schedule, no_scheduling, random_schedule, DOnOff, ItLinQ,
    NoScheduling, RandomScheduler,
};
pub use optimise::{
    lquasiopt_schedule, random_explore_then_commit, QuasiOptimum, StaticScheduler,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedulerKind {
    ExhaustiveOptimal,
    #[serde(rename = "lquasiopt")]
    LQuasiOpt,
    #[serde(rename = "banditlinq")]
    BanditLinQ,
    #[serde(rename = "flat_ucb1")]
    FlatUcb1,
    #[serde(rename = "itlinq")]
    ItLinQ,
    #[serde(rename = "d_onoff")]
    DOnOff,
    Random,
    NoScheduling,
}

impl SchedulerKind {
    pub const ALL: [SchedulerKind; 8] = [
        SchedulerKind::ExhaustiveOptimal,
        SchedulerKind::LQuasiOpt,
        SchedulerKind::BanditLinQ,
        SchedulerKind::FlatUcb1,
        SchedulerKind::ItLinQ,
        SchedulerKind::DOnOff,
        SchedulerKind::Random,
        SchedulerKind::NoScheduling,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchedulerKind::ExhaustiveOptimal => "exhaustive_optimal",
            SchedulerKind::LQuasiOpt => "lquasiopt",
            SchedulerKind::BanditLinQ => "banditlinq",
            SchedulerKind::FlatUcb1 => "flat_ucb1",
            SchedulerKind::ItLinQ => "itlinq",
            SchedulerKind::DOnOff => "d_onoff",
            SchedulerKind::Random => "random",
            SchedulerKind::NoScheduling => "no_scheduling",
        }
    }

    /// Learns only from ACK feedback.
    pub fn is_bandit(self) -> bool {
        matches!(self, SchedulerKind::BanditLinQ | SchedulerKind::FlatUcb1)
    }
}

impl std::fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// What the network looks like in the block being scheduled.
#[derive(Debug, Clone, Copy)]
pub struct BlockContext<'a> {
    /// Zero-based block index of the whole run.
    pub t: usize,
    /// Incremented whenever the geometry changes.
    pub epoch: usize,
    pub topology: &'a NetworkTopology,
    pub gains: &'a PathGains,
    pub fading: &'a FadingBlock,
    pub budget: &'a LinkBudget,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub action: SchedulingAction,
    /// Per-cluster sub-action indices, for clustered bandits.
    pub arms: Option<Vec<usize>>,
}

impl Selection {
    pub fn plain(action: SchedulingAction) -> Self {
        Self { action, arms: None }
    }
}

pub trait Scheduler: Send {
    fn kind(&self) -> SchedulerKind;

    fn partition(&self) -> Option<&ClusterPartition> {
        None
    }

    fn select(&mut self, ctx: &BlockContext<'_>) -> Result<Selection>;

    /// Feedback for the block just played: the (possibly corrupted) sum throughput.
    fn observe(&mut self, _selection: &Selection, _throughput: f64) -> Result<()> {
        Ok(())
    }
}
