//! Network geometry and long-term path loss.

use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Attempts at drawing a receiver angle before giving up.
const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;
/// Attempts at drawing a mobility direction before leaving a receiver in place.
const MAX_MOBILITY_ATTEMPTS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    fn offset(&self, radius: f64, angle: f64) -> Point {
        Point::new(self.x + radius * angle.cos(), self.y + radius * angle.sin())
    }

    fn inside_square(&self, side: f64) -> bool {
        (0.0..=side).contains(&self.x) && (0.0..=side).contains(&self.y)
    }
}

/// How transmitters are dropped in the deployment square.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum Deployment {
    /// Independent uniform positions over the whole square.
    #[default]
    Uniform,
    /// Transmitters grouped around `groups` uniformly placed centres, each
    /// uniform within a disc of radius `spread` meters.
    Clustered { groups: usize, spread: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopologyParams {
    pub links: usize,
    pub area_side: f64,
    pub link_distance: f64,
    pub beta_low: f64,
    pub beta_high: f64,
    /// Lower bound on every transmitter-to-receiver distance, meters.
    pub min_separation: f64,
    pub deployment: Deployment,
}

impl Default for TopologyParams {
    fn default() -> Self {
        Self {
            links: 20,
            area_side: 1000.0,
            link_distance: 50.0,
            beta_low: 3.5,
            beta_high: 4.5,
            min_separation: 1.0,
            deployment: Deployment::Uniform,
        }
    }
}

impl TopologyParams {
    pub fn validate(&self) -> Result<()> {
        if self.links == 0 {
            return Err(Error::param("number of links must be at least 1"));
        }
        if !(self.area_side > 0.0 && self.area_side.is_finite()) {
            return Err(Error::param("area side must be positive"));
        }
        if !(self.link_distance > 0.0 && self.link_distance < self.area_side) {
            return Err(Error::param(
                "link distance must lie strictly between 0 and the area side",
            ));
        }
        if !(self.beta_low > 2.0 && self.beta_low <= self.beta_high && self.beta_high.is_finite()) {
            return Err(Error::param(
                "path-loss exponents need 2 < beta_low <= beta_high",
            ));
        }
        if !(self.min_separation > 0.0 && self.min_separation <= self.link_distance) {
            return Err(Error::param(
                "minimum separation must be positive and no larger than the link distance",
            ));
        }
        if let Deployment::Clustered { groups, spread } = self.deployment {
            if groups == 0 || !(spread >= 0.0 && spread.is_finite()) {
                return Err(Error::param(
                    "clustered deployment needs at least one group and a non-negative spread",
                ));
            }
        }
        Ok(())
    }
}

/// Positions of the K transmitter/receiver pairs together with the
/// path-loss exponents of every transmitter→receiver pair.
///
/// `beta[k][l]` is the exponent from transmitter `l` to receiver `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkTopology {
    pub area_side: f64,
    pub min_separation: f64,
    pub tx: Vec<Point>,
    pub rx: Vec<Point>,
    pub beta: Vec<Vec<f64>>,
}

impl NetworkTopology {
    /// Builds a topology from explicit positions and exponents, checking every invariant.
    pub fn from_parts(
        area_side: f64,
        min_separation: f64,
        tx: Vec<Point>,
        rx: Vec<Point>,
        beta: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let topo = Self {
            area_side,
            min_separation,
            tx,
            rx,
            beta,
        };
        topo.validate()?;
        Ok(topo)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.tx.len();
        if k == 0 || self.rx.len() != k {
            return Err(Error::param(
                "topology needs K >= 1 transmitters and the same number of receivers",
            ));
        }
        if !(self.area_side > 0.0 && self.area_side.is_finite()) {
            return Err(Error::param("area side must be positive"));
        }
        if !(self.min_separation > 0.0 && self.min_separation.is_finite()) {
            return Err(Error::param("minimum separation must be positive"));
        }
        if self.beta.len() != k || self.beta.iter().any(|row| row.len() != k) {
            return Err(Error::param("beta must be a K x K matrix"));
        }
        if self.beta.iter().flatten().any(|b| !(*b > 2.0 && b.is_finite())) {
            return Err(Error::param("every path-loss exponent must exceed 2"));
        }
        for p in self.tx.iter().chain(&self.rx) {
            if !(p.x.is_finite() && p.y.is_finite()) {
                return Err(Error::param("positions must be finite"));
            }
        }
        for r in 0..k {
            for t in 0..k {
                if self.distance(r, t) <= 0.0 {
                    return Err(Error::param(format!(
                        "receiver {r} coincides with transmitter {t}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn links(&self) -> usize {
        self.tx.len()
    }

    /// Distance from transmitter `l` to receiver `k`, meters.
    pub fn distance(&self, k: usize, l: usize) -> f64 {
        self.rx[k].distance(&self.tx[l])
    }

    /// Linear power gain `d^-beta` from transmitter `l` to receiver `k`.
    pub fn path_gain(&self, k: usize, l: usize) -> f64 {
        self.distance(k, l).powf(-self.beta[k][l])
    }

    pub fn path_gains(&self) -> PathGains {
        let k = self.links();
        let mut values = Vec::with_capacity(k * k);
        for r in 0..k {
            for t in 0..k {
                values.push(self.path_gain(r, t));
            }
        }
        PathGains { links: k, values }
    }

    /// Moves every receiver by exactly `config.step_meters` in a uniformly
    /// random direction. Directions leaving the area or violating the
    /// minimum separation are re-drawn; a receiver with no admissible
    /// direction stays where it is.
    pub fn apply_mobility(&self, config: &MobilityConfig, rng: &mut SimRng) -> NetworkTopology {
        let mut next = self.clone();
        if config.step_meters == 0.0 {
            return next;
        }
        for k in 0..self.links() {
            for _ in 0..MAX_MOBILITY_ATTEMPTS {
                let angle = rng.random::<f64>() * TAU;
                let candidate = self.rx[k].offset(config.step_meters, angle);
                if candidate.inside_square(self.area_side)
                    && self
                        .tx
                        .iter()
                        .all(|t| t.distance(&candidate) >= self.min_separation)
                {
                    next.rx[k] = candidate;
                    break;
                }
            }
        }
        next
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parses and validates a topology file.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let topo: NetworkTopology =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("topology: {e}")))?;
        topo.validate()?;
        Ok(topo)
    }
}

/// Drops a random topology: transmitters according to `params.deployment`,
/// each receiver at exactly `link_distance` from its transmitter, exponents
/// IID uniform on `[beta_low, beta_high]`.
pub fn generate_topology(params: &TopologyParams, rng: &mut SimRng) -> Result<NetworkTopology> {
    params.validate()?;
    let side = params.area_side;
    let k = params.links;

    let tx: Vec<Point> = match params.deployment {
        Deployment::Uniform => (0..k)
            .map(|_| Point::new(rng.random::<f64>() * side, rng.random::<f64>() * side))
            .collect(),
        Deployment::Clustered { groups, spread } => {
            let centres: Vec<Point> = (0..groups)
                .map(|_| Point::new(rng.random::<f64>() * side, rng.random::<f64>() * side))
                .collect();
            (0..k)
                .map(|i| {
                    let centre = centres[i % groups];
                    loop {
                        // uniform in the disc
                        let radius = spread * rng.random::<f64>().sqrt();
                        let p = centre.offset(radius, rng.random::<f64>() * TAU);
                        if p.inside_square(side) {
                            break p;
                        }
                    }
                })
                .collect()
        }
    };

    let mut rx = Vec::with_capacity(k);
    for (i, t) in tx.iter().enumerate() {
        let placed = (0..MAX_PLACEMENT_ATTEMPTS).find_map(|_| {
            let candidate = t.offset(params.link_distance, rng.random::<f64>() * TAU);
            let admissible = candidate.inside_square(side)
                && tx
                    .iter()
                    .all(|other| other.distance(&candidate) >= params.min_separation);
            admissible.then_some(candidate)
        });
        match placed {
            Some(p) => rx.push(p),
            None => {
                return Err(Error::param(format!(
                    "could not place receiver {i} inside the area with the required separation"
                )))
            }
        }
    }

    let beta = sample_exponents(k, params.beta_low, params.beta_high, rng);
    NetworkTopology::from_parts(side, params.min_separation, tx, rx, beta)
}

/// IID uniform exponents for a K x K matrix.
pub fn sample_exponents(k: usize, low: f64, high: f64, rng: &mut SimRng) -> Vec<Vec<f64>> {
    (0..k)
        .map(|_| {
            (0..k)
                .map(|_| {
                    if high > low {
                        rng.random_range(low..=high)
                    } else {
                        low
                    }
                })
                .collect()
        })
        .collect()
}

/// Snapshot of every linear path gain, row `k` = receiver, column `l` = transmitter.
#[derive(Debug, Clone, PartialEq)]
pub struct PathGains {
    links: usize,
    values: Vec<f64>,
}

impl PathGains {
    /// Builds gains directly from a row-major K x K matrix.
    pub fn from_matrix(links: usize, values: Vec<f64>) -> Result<Self> {
        if links == 0 || values.len() != links * links {
            return Err(Error::param("gain matrix must be K x K with K >= 1"));
        }
        if values.iter().any(|g| !(*g >= 0.0 && g.is_finite())) {
            return Err(Error::param("path gains must be finite and non-negative"));
        }
        Ok(Self { links, values })
    }

    pub fn links(&self) -> usize {
        self.links
    }

    #[inline]
    pub fn get(&self, k: usize, l: usize) -> f64 {
        self.values[k * self.links + l]
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k * self.links..(k + 1) * self.links]
    }

    /// Relabels links: link `i` of the result is link `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> PathGains {
        let k = self.links;
        let mut values = Vec::with_capacity(k * k);
        for &r in perm {
            for &t in perm {
                values.push(self.get(r, t));
            }
        }
        PathGains { links: k, values }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MobilityConfig {
    pub enabled: bool,
    pub step_meters: f64,
    pub period_blocks: u64,
}

impl Default for MobilityConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            step_meters: 1.0,
            period_blocks: 10,
        }
    }
}

impl MobilityConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_meters >= 0.0 && self.step_meters.is_finite()) {
            return Err(Error::param("mobility step must be non-negative"));
        }
        if self.period_blocks == 0 {
            return Err(Error::param("mobility period must be at least one block"));
        }
        Ok(())
    }
}
