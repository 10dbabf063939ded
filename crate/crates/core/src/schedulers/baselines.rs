//! Baselines: ITLinQ, D-OnOff, random and no scheduling.

use rand::Rng;

use crate::action::SchedulingAction;
use crate::channel::{received_power_ratio, FadingBlock, LinkBudget};
use crate::error::{Error, Result};
use crate::rng::SimRng;
use crate::schedulers::{BlockContext, Scheduler, SchedulerKind, Selection};
use crate::topology::{NetworkTopology, PathGains};

/// Admits links in index order; link `j` joins iff, against every admitted
/// `i < j`, both `INR_ji` and `INR_ij` are at most `SNR_j^eta`.
pub fn itlinq_schedule(
    gains: &PathGains,
    fading: &FadingBlock,
    budget: &LinkBudget,
    eta: f64,
) -> SchedulingAction {
    let k = gains.links();
    let mut action = SchedulingAction::all_off(k);
    let mut admitted: Vec<usize> = Vec::with_capacity(k);
    for j in 0..k {
        let level = received_power_ratio(gains, fading, budget.snr, j, j).powf(eta);
        let clear = admitted.iter().all(|&i| {
            received_power_ratio(gains, fading, budget.snr, j, i) <= level
                && received_power_ratio(gains, fading, budget.snr, i, j) <= level
        });
        if clear {
            action.set(j, true);
            admitted.push(j);
        }
    }
    action
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Per-link activation threshold on `|h_kk|^2 d_kk^{-beta}`.
pub fn d_onoff_threshold(distance: f64, beta_hat: f64, density: f64, kappa: f64) -> f64 {
    let ratio = sinc(2.0 / beta_hat)
        / (std::f64::consts::PI * density * kappa.powf(2.0 / beta_hat) * distance * distance);
    -(ratio.min(1.0)).ln() / distance.powf(beta_hat)
}

/// Every link whose received power exceeds its threshold transmits.
pub fn d_onoff_schedule(
    topology: &NetworkTopology,
    fading: &FadingBlock,
    beta_hat: &[f64],
    density: f64,
    kappa: f64,
) -> SchedulingAction {
    let k = topology.links();
    SchedulingAction::new(
        (0..k)
            .map(|i| {
                let received = fading.get(i, i) * topology.path_gain(i, i);
                received > d_onoff_threshold(topology.distance(i, i), beta_hat[i], density, kappa)
            })
            .collect(),
    )
}

/// Each link on with probability 1/2, i.e. uniform over all `2^K` actions.
pub fn random_schedule(links: usize, rng: &mut SimRng) -> SchedulingAction {
    SchedulingAction::new((0..links).map(|_| rng.random::<bool>()).collect())
}

pub fn no_scheduling(links: usize) -> SchedulingAction {
    SchedulingAction::all_on(links)
}

#[derive(Debug, Clone)]
pub struct ItLinQ {
    pub eta: f64,
}

impl ItLinQ {
    pub fn new(eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::param("eta must lie in (0, 1]"));
        }
        Ok(Self { eta })
    }
}

impl Scheduler for ItLinQ {
    fn kind(&self) -> SchedulerKind {
        SchedulerKind::ItLinQ
    }

    fn select(&mut self, ctx: &BlockContext<'_>) -> Result<Selection> {
        Ok(Selection::plain(itlinq_schedule(ctx.gains, ctx.fading, ctx.budget, self.eta)))
    }
}

/// D-OnOff with a path-loss exponent estimate off by `±U(0, max_error)`,
/// drawn once at construction.
#[derive(Debug, Clone)]
pub struct DOnOff {
    beta_hat: Vec<f64>,
    density: f64,
    kappa: f64,
}

impl DOnOff {
    pub fn new(topology: &NetworkTopology, kappa: f64, max_error: f64, rng: &mut SimRng) -> Result<Self> {
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::param("kappa must be positive"));
        }
        if max_error.is_nan() || max_error < 0.0 {
            return Err(Error::param("exponent estimation error must be non-negative"));
        }
        let k = topology.links();
        let beta_hat = (0..k)
            .map(|i| {
                let magnitude = rng.random::<f64>() * max_error;
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                topology.beta[i][i] + sign * magnitude
            })
            .collect();
        let density = k as f64 / (topology.area_side * topology.area_side);
        Ok(Self {
            beta_hat,
            density,
            kappa,
        })
    }

    pub fn beta_hat(&self) -> &[f64] {
        &self.beta_hat
    }

    pub fn density(&self) -> f64 {
        self.density
    }
}

impl Scheduler for DOnOff {
    fn kind(&self) -> SchedulerKind {
        SchedulerKind::DOnOff
    }

    fn select(&mut self, ctx: &BlockContext<'_>) -> Result<Selection> {
        Ok(Selection::plain(d_onoff_schedule(
            ctx.topology,
            ctx.fading,
            &self.beta_hat,
            self.density,
            self.kappa,
        )))
    }
}

#[derive(Debug, Clone)]
pub struct RandomScheduler {
    rng: SimRng,
}

impl RandomScheduler {
    pub fn new(rng: SimRng) -> Self {
        Self { rng }
    }
}

impl Scheduler for RandomScheduler {
    fn kind(&self) -> SchedulerKind {
        SchedulerKind::Random
    }

    fn select(&mut self, ctx: &BlockContext<'_>) -> Result<Selection> {
        Ok(Selection::plain(random_schedule(ctx.gains.links(), &mut self.rng)))
    }
}

#[derive(Debug, Clone, Default)]
pub struct NoScheduling;

impl Scheduler for NoScheduling {
    fn kind(&self) -> SchedulerKind {
        SchedulerKind::NoScheduling
    }

    fn select(&mut self, ctx: &BlockContext<'_>) -> Result<Selection> {
        Ok(Selection::plain(no_scheduling(ctx.gains.links())))
    }
}
