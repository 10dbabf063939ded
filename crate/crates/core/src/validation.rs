//! Oracle suites for the ergodic-rate machinery.
//!
//! Each check compares a computed quantity with an independent reference:
//! a Monte Carlo estimate, the exponential-integral form of the single-link
//! rate, a brute-force mixture over companion actions, or the analytic
//! Rayleigh outage probability.

use std::fmt;
use std::io::Write;

use serde::Serialize;

use crate::action::SchedulingAction;
use crate::channel::LinkBudget;
use crate::clustering::ClusterPartition;
use crate::ergodic::{monte_carlo_ergodic_sum_se, monte_carlo_mean_throughput, ErgodicModel, Objective};
use crate::error::{Error, Result};
use crate::quadrature::QuadratureConfig;
use crate::rng::{stream, Purpose};
use crate::special::scaled_exp_integral_e1;
use crate::topology::{generate_topology, Deployment, PathGains, TopologyParams};

pub const VALIDATION_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    Fast,
    Full,
}

impl std::str::FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fast" => Ok(Level::Fast),
            "full" => Ok(Level::Full),
            other => Err(Error::Parse(format!("unknown validation level '{other}' (fast|full)"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ValidationOptions {
    pub level: Level,
    pub seed: u64,
    /// Quadrature settings under test. Loosening them is how the suites
    /// are shown to detect a broken integrator.
    pub quadrature: QuadratureConfig,
}

impl ValidationOptions {
    pub fn new(level: Level) -> Self {
        Self {
            level,
            seed: 20_240_101,
            quadrature: QuadratureConfig::default(),
        }
    }

    /// Deliberately inaccurate integrator settings.
    pub fn tampered(mut self) -> Self {
        self.quadrature = QuadratureConfig {
            rel_tol: 0.5,
            abs_tol: 0.5,
            z_max_factor: 1e-3,
            max_intervals: 1,
        };
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleCheck {
    pub suite: String,
    pub case: String,
    pub computed: f64,
    pub reference: f64,
    /// Standard error of the reference, when it is an estimate.
    pub stderr: Option<f64>,
    pub z_score: Option<f64>,
    pub rel_error: f64,
    pub passed: bool,
}

impl OracleCheck {
    fn exact(suite: &str, case: String, computed: Result<f64>, reference: f64, rel_tol: f64) -> Self {
        let (computed, ok) = match computed {
            Ok(v) => (v, true),
            Err(_) => (f64::NAN, false),
        };
        let rel_error = relative(computed, reference);
        Self {
            suite: suite.into(),
            case,
            computed,
            reference,
            stderr: None,
            z_score: None,
            rel_error,
            passed: ok && rel_error <= rel_tol,
        }
    }

    /// `|z| <= z_max`, and relative error within `rel_tol` wherever the
    /// value exceeds `rel_floor`.
    fn statistical(
        suite: &str,
        case: String,
        computed: Result<f64>,
        reference: f64,
        stderr: f64,
        z_max: f64,
        rel_tol: Option<(f64, f64)>,
    ) -> Self {
        let (computed, ok) = match computed {
            Ok(v) => (v, true),
            Err(_) => (f64::NAN, false),
        };
        let diff = computed - reference;
        let z = if stderr > 0.0 {
            diff / stderr
        } else if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        let rel_error = relative(computed, reference);
        let rel_ok = match rel_tol {
            Some((tol, floor)) if computed.abs() > floor => rel_error <= tol,
            _ => true,
        };
        Self {
            suite: suite.into(),
            case,
            computed,
            reference,
            stderr: Some(stderr),
            z_score: Some(z),
            rel_error,
            passed: ok && z.abs() <= z_max && rel_ok,
        }
    }
}

fn relative(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }
}

#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub checks: Vec<OracleCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> usize {
        self.checks.iter().filter(|c| !c.passed).count()
    }

    pub fn suite<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a OracleCheck> + 'a {
        self.checks.iter().filter(move |c| c.suite == name)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# validation-schema: {VALIDATION_SCHEMA_VERSION}")?;
        let mut w = csv::Writer::from_writer(out);
        for c in &self.checks {
            w.serialize(c)?;
        }
        w.flush()?;
        Ok(())
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<12} {:<34} {:>14} {:>14} {:>8} {:>10}  result",
            "suite", "case", "computed", "reference", "z", "rel_err"
        )?;
        for c in &self.checks {
            let z = c.z_score.map(|z| format!("{z:.2}")).unwrap_or_else(|| "-".into());
            writeln!(
                f,
                "{:<12} {:<34} {:>14.8} {:>14.8} {:>8} {:>10.2e}  {}",
                c.suite,
                c.case,
                c.computed,
                c.reference,
                z,
                c.rel_error,
                if c.passed { "PASS" } else { "FAIL" }
            )?;
        }
        write!(f, "{} checks, {} failed", self.checks.len(), self.failures())
    }
}

/// K-link topologies small enough that interference matters.
pub fn oracle_topologies(links: usize, count: usize, seed: u64) -> Result<Vec<PathGains>> {
    let params = TopologyParams {
        links,
        area_side: 200.0,
        link_distance: 50.0,
        beta_low: 3.5,
        beta_high: 4.5,
        min_separation: 1.0,
        deployment: Deployment::Uniform,
    };
    (0..count)
        .map(|i| Ok(generate_topology(&params, &mut stream(seed, Purpose::Topology, i as u64))?.path_gains()))
        .collect()
}

fn default_snr() -> f64 {
    LinkBudget::snr_from_power(0.08, -143.97)
}

/// Quadrature sum SE against a Monte Carlo estimate, every action of
/// K = 3 topologies.
pub fn ergodic_vs_monte_carlo(
    topologies: usize,
    ms: &[u32],
    samples: usize,
    quad: &QuadratureConfig,
    seed: u64,
) -> Result<Vec<OracleCheck>> {
    let k = 3;
    let budget = LinkBudget::uniform(default_snr(), k, 3.0)?;
    let mut checks = Vec::new();
    for (n, gains) in oracle_topologies(k, topologies, seed)?.iter().enumerate() {
        for &m in ms {
            let model = ErgodicModel::new(gains, &budget, m)?;
            for j in 0..(1u64 << k) {
                let action = SchedulingAction::from_index(j, k);
                let mc = monte_carlo_ergodic_sum_se(gains, &action, &budget, m, samples, seed ^ (n as u64 * 1000 + m as u64 * 10 + j))?;
                checks.push(OracleCheck::statistical(
                    "ergodic_mc",
                    format!("topo={n} m={m} a={action}"),
                    model.sum_se(&action.as_activity(), quad),
                    mc.mean,
                    mc.stderr,
                    3.0,
                    Some((0.01, 0.1)),
                ));
            }
        }
    }
    Ok(checks)
}

/// Single interference-free link: `log2(e) e^{1/rho} E1(1/rho)`.
pub fn single_link_e1(rhos: &[f64], quad: &QuadratureConfig) -> Result<Vec<OracleCheck>> {
    let gains = PathGains::from_matrix(1, vec![1.0])?;
    rhos.iter()
        .map(|&rho| {
            let budget = LinkBudget::uniform(rho, 1, 1.0)?;
            let model = ErgodicModel::new(&gains, &budget, 1)?;
            let reference = std::f64::consts::LOG2_E * scaled_exp_integral_e1(1.0 / rho);
            Ok(OracleCheck::exact(
                "single_e1",
                format!("rho={rho:e}"),
                model.sum_se(&[1.0], quad),
                reference,
                1e-6,
            ))
        })
        .collect()
}

/// Cluster utility of `{0,1} | {2,3}` against the explicit average over
/// the four companion sub-actions of the other cluster.
pub fn cluster_mixture(topologies: usize, quad: &QuadratureConfig, seed: u64) -> Result<Vec<OracleCheck>> {
    let k = 4;
    let budget = LinkBudget::uniform(default_snr(), k, 3.0)?;
    let partition = ClusterPartition::new(k, vec![vec![0, 1], vec![2, 3]])?;
    let objective = Objective::SumSe(*quad);
    let mut checks = Vec::new();
    for (n, gains) in oracle_topologies(k, topologies, seed.wrapping_add(1))?.iter().enumerate() {
        let model = ErgodicModel::new(gains, &budget, 1)?;
        for s in 0..4u64 {
            let sub = SchedulingAction::from_index(s, 2);
            let mut total = 0.0;
            let mut failed = false;
            for companion in 0..4u64 {
                let mut action = SchedulingAction::all_off(k);
                action.assign(&[0, 1], &sub);
                action.assign(&[2, 3], &SchedulingAction::from_index(companion, 2));
                match model.sum_se(&action.as_activity(), quad) {
                    Ok(v) => total += v,
                    Err(_) => failed = true,
                }
            }
            let computed = if failed {
                Err(Error::Contract("mixture term failed".into()))
            } else {
                model.cluster_utility(&partition, 0, &sub, &objective)
            };
            checks.push(OracleCheck::exact(
                "mixture",
                format!("topo={n} sub={sub}"),
                computed,
                total / 4.0,
                1e-8,
            ));
        }
    }
    Ok(checks)
}

/// Single Rayleigh link: `r e^{-(2^r - 1)/rho}` against both the closed
/// form and a Monte Carlo estimate.
pub fn outage(rates: &[f64], rhos: &[f64], samples: usize, seed: u64) -> Result<Vec<OracleCheck>> {
    let gains = PathGains::from_matrix(1, vec![1.0])?;
    let action = SchedulingAction::all_on(1);
    let mut checks = Vec::new();
    for &r in rates {
        for &rho in rhos {
            let budget = LinkBudget::uniform(rho, 1, r)?;
            let analytic = r * (-(r.exp2() - 1.0) / rho).exp();
            let model = ErgodicModel::new(&gains, &budget, 1)?;
            checks.push(OracleCheck::exact(
                "outage_closed",
                format!("r={r} rho={rho:e}"),
                model.sum_throughput(&[1.0]),
                analytic,
                1e-12,
            ));
            let mc = monte_carlo_mean_throughput(&gains, &action, &budget, 1, samples, seed ^ (r.to_bits() ^ rho.to_bits()))?;
            checks.push(OracleCheck::statistical(
                "outage_mc",
                format!("r={r} rho={rho:e}"),
                Ok(mc.mean),
                analytic,
                mc.stderr,
                3.0,
                None,
            ));
        }
    }
    Ok(checks)
}

pub fn run_validation(options: &ValidationOptions) -> Result<ValidationReport> {
    let quad = &options.quadrature;
    let seed = options.seed;
    let mut checks = Vec::new();
    checks.extend(single_link_e1(&[1.0, 10.0, 100.0, 1e6], quad)?);
    match options.level {
        Level::Fast => {
            checks.extend(cluster_mixture(1, quad, seed)?);
            checks.extend(ergodic_vs_monte_carlo(1, &[1], 200_000, quad, seed)?);
            checks.extend(outage(&[1.0, 3.0, 5.0], &[10.0, 1e3], 200_000, seed)?);
        }
        Level::Full => {
            checks.extend(cluster_mixture(5, quad, seed)?);
            checks.extend(ergodic_vs_monte_carlo(5, &[1, 10], 2_000_000, quad, seed)?);
            checks.extend(outage(&[1.0, 3.0, 5.0], &[10.0, 1e3], 1_000_000, seed)?);
        }
    }
    Ok(ValidationReport { checks })
}
