//! Experiment configuration: a TOML file, `--set key=value` overrides and
//! sweep specifications.
//!
//! ```toml
//! [network]
//! links = 20
//! area_side = 1000.0
//!
//! [channel]
//! target_rate = 3.0
//!
//! [run]
//! blocks = 5000
//! seeds = 20
//!
//! [[scheduler]]
//! kind = "banditlinq"
//! clustering = "random"
//! max_cluster_size = 5
//!
//! [[scheduler]]
//! kind = "no_scheduling"
//! ```
//!
//! Every table rejects unknown keys. Override keys are dotted paths
//! (`network.links`); `scheduler.alpha` sets a key on every scheduler and
//! `scheduler.1.alpha` on the second one only.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use toml::Value;

use crate::channel::{validate_flip_prob, LinkBudget};
use crate::ergodic::{Objective, QuadratureConfig};
use crate::error::{Error, Result};
use crate::schedulers::bandit::DEFAULT_MAX_ARM_LINKS;
use crate::schedulers::{SchedulerKind, UcbConfig};
use crate::topology::{Deployment, MobilityConfig, TopologyParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub links: usize,
    pub area_side: f64,
    pub link_distance: f64,
    pub beta_low: f64,
    pub beta_high: f64,
    pub min_separation: f64,
    pub deployment: Deployment,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        let p = TopologyParams::default();
        Self {
            links: p.links,
            area_side: p.area_side,
            link_distance: p.link_distance,
            beta_low: p.beta_low,
            beta_high: p.beta_high,
            min_separation: p.min_separation,
            deployment: p.deployment,
        }
    }
}

impl NetworkConfig {
    pub fn topology_params(&self) -> TopologyParams {
        TopologyParams {
            links: self.links,
            area_side: self.area_side,
            link_distance: self.link_distance,
            beta_low: self.beta_low,
            beta_high: self.beta_high,
            min_separation: self.min_separation,
            deployment: self.deployment.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelConfig {
    /// Nakagami shape of the direct links.
    pub m: u32,
    pub tx_power_mw: f64,
    /// Total noise power; the SNR is `P / sigma^2`.
    pub noise_dbm: f64,
    /// Linear SNR, overriding the power and noise pair when given.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snr: Option<f64>,
    pub target_rate: f64,
    /// Per-link target rates, overriding `target_rate` when given.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_rates: Option<Vec<f64>>,
    pub flip_prob: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            m: 1,
            tx_power_mw: 0.08,
            noise_dbm: -143.97,
            snr: None,
            target_rate: 3.0,
            target_rates: None,
            flip_prob: 0.0,
        }
    }
}

impl ChannelConfig {
    pub fn snr(&self) -> f64 {
        self.snr
            .unwrap_or_else(|| LinkBudget::snr_from_power(self.tx_power_mw, self.noise_dbm))
    }

    pub fn budget(&self, links: usize) -> Result<LinkBudget> {
        match &self.target_rates {
            Some(rates) => LinkBudget::new(self.snr(), rates.clone()),
            None => LinkBudget::uniform(self.snr(), links, self.target_rate),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Fading blocks per run, clustering phase included.
    pub blocks: usize,
    /// Independent topologies per scheduler.
    pub seeds: usize,
    /// Base seed; replication `i` uses `seed + i`.
    pub seed: u64,
    /// Worker threads for replication; 0 uses every core.
    pub workers: usize,
    /// Largest K for which the true optimum is searched for regret accounting.
    pub regret_cap: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            blocks: 5000,
            seeds: 1,
            seed: 1,
            workers: 0,
            regret_cap: 16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ClusteringMode {
    /// Balanced random partition; no clustering phase.
    #[default]
    Random,
    /// One-bit INR/SNR feedback over `t_clust` blocks, then average linkage.
    Feedback,
    /// Average linkage on path-loss dissimilarity (needs long-term CSI).
    Pathloss,
    /// All links in one cluster.
    Single,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    #[default]
    SumSe,
    SumThroughput,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchedulerSpec {
    pub kind: SchedulerKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default = "defaults::alpha")]
    pub alpha: f64,
    #[serde(default = "defaults::discount")]
    pub discount: f64,
    #[serde(default)]
    pub clustering: ClusteringMode,
    #[serde(default = "defaults::max_cluster_size")]
    pub max_cluster_size: usize,
    /// Exact cluster count for random clustering.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clusters: Option<usize>,
    #[serde(default = "defaults::t_clust")]
    pub t_clust: usize,
    /// INR/SNR exponent for feedback clustering and ITLinQ.
    #[serde(default = "defaults::eta")]
    pub eta: f64,
    /// D-OnOff target SIR, linear.
    #[serde(default = "defaults::kappa")]
    pub kappa: f64,
    /// D-OnOff path-loss exponent estimation error bound.
    #[serde(default = "defaults::beta_error")]
    pub beta_error: f64,
    /// Feedback flip probability for this scheduler, overriding the channel's.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flip_prob: Option<f64>,
    #[serde(default)]
    pub objective: ObjectiveKind,
    #[serde(default)]
    pub quadrature: QuadratureConfig,
    #[serde(default = "defaults::arm_links")]
    pub max_arm_links: usize,
}

mod defaults {
    pub fn alpha() -> f64 {
        4.0
    }
    pub fn discount() -> f64 {
        1.0
    }
    pub fn max_cluster_size() -> usize {
        5
    }
    pub fn t_clust() -> usize {
        10
    }
    pub fn eta() -> f64 {
        0.7
    }
    pub fn kappa() -> f64 {
        1.0
    }
    pub fn beta_error() -> f64 {
        0.5
    }
    pub fn arm_links() -> usize {
        super::DEFAULT_MAX_ARM_LINKS
    }
}

impl SchedulerSpec {
    pub fn new(kind: SchedulerKind) -> Self {
        Self {
            kind,
            label: None,
            alpha: defaults::alpha(),
            discount: defaults::discount(),
            clustering: ClusteringMode::default(),
            max_cluster_size: defaults::max_cluster_size(),
            clusters: None,
            t_clust: defaults::t_clust(),
            eta: defaults::eta(),
            kappa: defaults::kappa(),
            beta_error: defaults::beta_error(),
            flip_prob: None,
            objective: ObjectiveKind::default(),
            quadrature: QuadratureConfig::default(),
            max_arm_links: defaults::arm_links(),
        }
    }

    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.kind.name().to_string())
    }

    pub fn ucb(&self) -> UcbConfig {
        UcbConfig {
            alpha: self.alpha,
            discount: self.discount,
        }
    }

    pub fn objective(&self) -> Objective {
        match self.objective {
            ObjectiveKind::SumSe => Objective::SumSe(self.quadrature),
            ObjectiveKind::SumThroughput => Objective::SumThroughput,
        }
    }

    /// Blocks spent in the clustering phase before scheduling starts.
    pub fn clustering_blocks(&self) -> usize {
        if self.kind == SchedulerKind::BanditLinQ && self.clustering == ClusteringMode::Feedback {
            self.t_clust
        } else {
            0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub network: NetworkConfig,
    pub channel: ChannelConfig,
    pub run: RunConfig,
    pub mobility: MobilityConfig,
    #[serde(rename = "scheduler")]
    pub schedulers: Vec<SchedulerSpec>,
}

/// A semantic problem, located by its dotted key path.
struct Problem {
    path: String,
    message: String,
}

fn problem(path: impl Into<String>, message: impl Into<String>) -> Problem {
    Problem {
        path: path.into(),
        message: message.into(),
    }
}

impl ExperimentConfig {
    /// Parses, applies overrides in order and validates.
    pub fn from_toml_str(text: &str, overrides: &[Override]) -> Result<Self> {
        // a first pass straight from the text keeps source spans in errors
        let direct: std::result::Result<ExperimentConfig, toml::de::Error> = toml::from_str(text);
        let config = match direct {
            Err(e) => {
                let line = e.span().map(|s| line_of(text, s.start));
                return Err(Error::config(e.message().trim().to_string(), line));
            }
            Ok(config) if overrides.is_empty() => config,
            Ok(_) => {
                let mut value: Value = toml::from_str(text)
                    .map_err(|e: toml::de::Error| Error::config(e.message().trim().to_string(), None))?;
                for o in overrides {
                    o.apply(&mut value)?;
                }
                ExperimentConfig::deserialize(value).map_err(|e| {
                    Error::config(format!("after overrides: {}", e.message().trim()), None)
                })?
            }
        };
        if let Err(p) = config.check() {
            let line = if overrides.iter().any(|o| p.path.starts_with(&o.path) || o.path.starts_with(&p.path)) {
                None
            } else {
                locate_key(text, &p.path)
            };
            return Err(Error::config(format!("{}: {}", p.path, p.message), line));
        }
        Ok(config)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.check()
            .map_err(|p| Error::config(format!("{}: {}", p.path, p.message), None))
    }

    /// Longest clustering phase of any scheduler; excluded from averages.
    pub fn clustering_blocks(&self) -> usize {
        self.schedulers
            .iter()
            .map(SchedulerSpec::clustering_blocks)
            .max()
            .unwrap_or(0)
    }

    pub fn labels(&self) -> Vec<String> {
        self.schedulers.iter().map(SchedulerSpec::label).collect()
    }

    fn check(&self) -> std::result::Result<(), Problem> {
        let n = &self.network;
        self.network
            .topology_params()
            .validate()
            .map_err(|e| problem(network_path(n, &e), strip(&e)))?;
        let c = &self.channel;
        if c.m < 1 {
            return Err(problem("channel.m", "Nakagami shape must be a positive integer"));
        }
        if !(c.tx_power_mw > 0.0 && c.tx_power_mw.is_finite()) {
            return Err(problem("channel.tx_power_mw", "transmit power must be positive"));
        }
        if !c.noise_dbm.is_finite() {
            return Err(problem("channel.noise_dbm", "noise power must be finite"));
        }
        if let Some(snr) = c.snr {
            if !(snr > 0.0 && snr.is_finite()) {
                return Err(problem("channel.snr", "snr must be positive"));
            }
        }
        if !(c.target_rate > 0.0 && c.target_rate.is_finite()) {
            return Err(problem("channel.target_rate", "target rate must be positive"));
        }
        if let Some(rates) = &c.target_rates {
            if rates.len() != n.links {
                return Err(problem(
                    "channel.target_rates",
                    format!("expected {} rates, got {}", n.links, rates.len()),
                ));
            }
            if rates.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
                return Err(problem("channel.target_rates", "target rates must be positive"));
            }
        }
        validate_flip_prob(c.flip_prob).map_err(|e| problem("channel.flip_prob", strip(&e)))?;
        let r = &self.run;
        if r.seeds == 0 {
            return Err(problem("run.seeds", "need at least one seed"));
        }
        if r.blocks == 0 {
            return Err(problem("run.blocks", "need at least one block"));
        }
        self.mobility.validate().map_err(|e| {
            let key = if e.to_string().contains("period") { "period_blocks" } else { "step_meters" };
            problem(format!("mobility.{key}"), strip(&e))
        })?;
        if self.schedulers.is_empty() {
            return Err(problem("scheduler", "at least one [[scheduler]] table is required"));
        }
        let mut labels = std::collections::BTreeSet::new();
        for (i, s) in self.schedulers.iter().enumerate() {
            let at = |key: &str| format!("scheduler.{i}.{key}");
            if !labels.insert(s.label()) {
                return Err(problem(
                    at("label"),
                    format!("duplicate scheduler label `{}`; give each entry a distinct label", s.label()),
                ));
            }
            s.ucb().validate().map_err(|e| {
                problem(at(if e.to_string().contains("alpha") { "alpha" } else { "discount" }), strip(&e))
            })?;
            if s.max_cluster_size == 0 {
                return Err(problem(at("max_cluster_size"), "must be at least 1"));
            }
            if let Some(cl) = s.clusters {
                if cl == 0 || cl > n.links {
                    return Err(problem(at("clusters"), format!("must lie in 1..={}", n.links)));
                }
            }
            if !(s.eta > 0.0 && s.eta <= 1.0) {
                return Err(problem(at("eta"), "eta must lie in (0, 1]"));
            }
            if !(s.kappa > 0.0 && s.kappa.is_finite()) {
                return Err(problem(at("kappa"), "kappa must be positive"));
            }
            if !(s.beta_error >= 0.0 && s.beta_error.is_finite()) {
                return Err(problem(at("beta_error"), "must be non-negative"));
            }
            if let Some(p) = s.flip_prob {
                validate_flip_prob(p).map_err(|e| problem(at("flip_prob"), strip(&e)))?;
            }
            s.quadrature.validate().map_err(|e| problem(at("quadrature"), strip(&e)))?;
            if s.clustering_blocks() > 0 && s.clustering_blocks() >= r.blocks {
                return Err(problem(
                    at("t_clust"),
                    format!("clustering phase must be shorter than run.blocks = {}", r.blocks),
                ));
            }
            if s.kind == SchedulerKind::BanditLinQ && s.clustering == ClusteringMode::Feedback && s.t_clust == 0 {
                return Err(problem(at("t_clust"), "feedback clustering needs at least one block"));
            }
            let arm_links = match (s.kind, s.clustering) {
                (SchedulerKind::FlatUcb1, _) | (SchedulerKind::BanditLinQ, ClusteringMode::Single) => n.links,
                (SchedulerKind::BanditLinQ, ClusteringMode::Random) => match s.clusters {
                    Some(cl) => n.links.div_ceil(cl),
                    None => s.max_cluster_size.min(n.links),
                },
                (SchedulerKind::BanditLinQ, _) => s.max_cluster_size.min(n.links),
                _ => 0,
            };
            if arm_links > s.max_arm_links {
                return Err(problem(
                    at("max_arm_links"),
                    format!("clusters of {arm_links} links exceed the arm-table cap of {}", s.max_arm_links),
                ));
            }
            if s.kind == SchedulerKind::ExhaustiveOptimal && n.links > crate::ergodic::DEFAULT_EXHAUSTIVE_CAP {
                return Err(problem(
                    "network.links",
                    format!(
                        "exhaustive search is capped at K = {}",
                        crate::ergodic::DEFAULT_EXHAUSTIVE_CAP
                    ),
                ));
            }
        }
        Ok(())
    }
}

fn strip(e: &Error) -> String {
    match e {
        Error::Parameter(m) => m.clone(),
        other => other.to_string(),
    }
}

fn network_path(n: &NetworkConfig, e: &Error) -> String {
    let text = e.to_string();
    let key = if text.contains("number of links") {
        "links"
    } else if text.contains("area side") {
        "area_side"
    } else if text.contains("link distance") {
        "link_distance"
    } else if text.contains("exponent") {
        if n.beta_low > 2.0 { "beta_high" } else { "beta_low" }
    } else if text.contains("separation") {
        "min_separation"
    } else {
        "deployment"
    };
    format!("network.{key}")
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// 1-based line that sets the dotted key `path`, if it is written out.
fn locate_key(text: &str, path: &str) -> Option<usize> {
    let parts: Vec<&str> = path.split('.').collect();
    let (table, index, key) = match parts.as_slice() {
        ["scheduler", i, key, ..] => ("scheduler", i.parse::<usize>().ok(), *key),
        [table, key, ..] => (*table, None, *key),
        [table] => (*table, None, ""),
        _ => return None,
    };
    let mut current = String::new();
    let mut array_index: Option<usize> = None;
    let mut seen_array = 0usize;
    let mut header_line = None;
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix("[[").and_then(|l| l.split("]]").next()) {
            current = name.trim().to_string();
            if current == table {
                array_index = Some(seen_array);
                seen_array += 1;
                if index == array_index && key.is_empty() {
                    return Some(n + 1);
                }
                if index == array_index {
                    header_line = Some(n + 1);
                }
            }
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.split(']').next()) {
            current = name.trim().to_string();
            array_index = None;
            if current == table && index.is_none() {
                header_line = Some(n + 1);
            }
            continue;
        }
        let in_table = current == table && (index.is_none() || index == array_index);
        if in_table && !key.is_empty() {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return Some(n + 1);
                }
            }
        }
    }
    header_line
}

/// `key=value` with a dotted key path and a TOML literal value (bare words
/// are taken as strings).
#[derive(Debug, Clone, PartialEq)]
pub struct Override {
    pub path: String,
    pub value: Value,
}

impl FromStr for Override {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (path, raw) = s
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("override `{s}` is not of the form key=value")))?;
        let path = path.trim();
        if path.is_empty() || path.split('.').any(|p| p.is_empty() || !p.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')) {
            return Err(Error::Parse(format!("override key `{path}` is not a dotted key path")));
        }
        Ok(Self {
            path: path.to_string(),
            value: parse_value(raw.trim())?,
        })
    }
}

impl fmt::Display for Override {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={}", self.path, self.value)
    }
}

fn parse_value(raw: &str) -> Result<Value> {
    if raw.is_empty() {
        return Err(Error::Parse("override value is empty".into()));
    }
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => Ok(t.remove("v").expect("key was just written")),
        Err(_) if raw.chars().all(|c| c.is_ascii_alphanumeric() || "_-".contains(c)) => {
            Ok(Value::String(raw.to_string()))
        }
        Err(e) => Err(Error::Parse(format!("override value `{raw}`: {}", e.message().trim()))),
    }
}

impl Override {
    pub fn new(path: &str, value: Value) -> Self {
        Self {
            path: path.to_string(),
            value,
        }
    }

    pub fn apply(&self, root: &mut Value) -> Result<()> {
        let parts: Vec<&str> = self.path.split('.').collect();
        let bad = |why: &str| Error::config(format!("override `{}`: {why}", self.path), None);
        let table = root.as_table_mut().ok_or_else(|| bad("config root is not a table"))?;
        if parts[0] == "scheduler" {
            let list = table
                .get_mut("scheduler")
                .and_then(Value::as_array_mut)
                .ok_or_else(|| bad("the config has no [[scheduler]] entries"))?;
            let (targets, rest): (Vec<usize>, &[&str]) = match parts.get(1).and_then(|p| p.parse::<usize>().ok()) {
                Some(i) if i < list.len() => (vec![i], &parts[2..]),
                Some(_) => return Err(bad("scheduler index out of range")),
                None => ((0..list.len()).collect(), &parts[1..]),
            };
            if rest.is_empty() {
                return Err(bad("missing scheduler key"));
            }
            for i in targets {
                set_path(&mut list[i], rest, self.value.clone()).map_err(|w| bad(&w))?;
            }
            Ok(())
        } else {
            set_path(root, &parts, self.value.clone()).map_err(|w| bad(&w))
        }
    }
}

fn set_path(node: &mut Value, parts: &[&str], value: Value) -> std::result::Result<(), String> {
    let table = node.as_table_mut().ok_or_else(|| "path goes through a non-table value".to_string())?;
    if parts.len() == 1 {
        table.insert(parts[0].to_string(), value);
        return Ok(());
    }
    let child = table
        .entry(parts[0].to_string())
        .or_insert_with(|| Value::Table(toml::Table::new()));
    set_path(child, &parts[1..], value)
}

/// Keys a sweep may vary.
pub const SWEEPABLE_KEYS: &[&str] = &[
    "network.links",
    "network.area_side",
    "network.link_distance",
    "channel.m",
    "channel.snr",
    "channel.target_rate",
    "channel.flip_prob",
    "run.blocks",
    "mobility.enabled",
    "mobility.step_meters",
    "mobility.period_blocks",
    "scheduler.alpha",
    "scheduler.discount",
    "scheduler.max_cluster_size",
    "scheduler.clusters",
    "scheduler.t_clust",
    "scheduler.eta",
    "scheduler.kappa",
    "scheduler.flip_prob",
];

/// `key=v1,v2,...`: one replicate per value.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub key: String,
    pub values: Vec<Value>,
}

impl FromStr for SweepSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (key, list) = s
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("sweep `{s}` is not of the form key=v1,v2,...")))?;
        let key = key.trim();
        if !SWEEPABLE_KEYS.contains(&key) {
            return Err(Error::config(
                format!("`{key}` cannot be swept; sweepable keys: {}", SWEEPABLE_KEYS.join(", ")),
                None,
            ));
        }
        let values = list
            .split(',')
            .map(|v| parse_value(v.trim()))
            .collect::<Result<Vec<_>>>()?;
        if values.is_empty() {
            return Err(Error::Parse("sweep needs at least one value".into()));
        }
        if values.iter().any(|v| matches!(v, Value::Array(_) | Value::Table(_))) {
            return Err(Error::Parse("sweep values must be scalars".into()));
        }
        Ok(Self {
            key: key.to_string(),
            values,
        })
    }
}

impl SweepSpec {
    pub fn overrides(&self) -> Vec<Override> {
        self.values
            .iter()
            .map(|v| Override::new(&self.key, v.clone()))
            .collect()
    }
}

/// Renders a scalar TOML value the way it is written in CSV output.
pub fn value_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}
