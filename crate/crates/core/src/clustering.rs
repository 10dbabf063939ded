//! Link clustering: size-capped average-linkage agglomeration over a
//! pairwise dissimilarity, built from path loss or from one-bit INR/SNR
//! feedback, plus balanced random partitions.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::channel::{received_power_ratio, sample_fading, FadingBlock, LinkBudget};
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose, SimRng};
use crate::topology::PathGains;

/// Disjoint, non-empty clusters covering links `0..K`.
///
/// Members are sorted inside each cluster and clusters are ordered by their
/// smallest member, so equal partitions compare equal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterPartition {
    links: usize,
    clusters: Vec<Vec<usize>>,
}

impl ClusterPartition {
    pub fn new(links: usize, clusters: Vec<Vec<usize>>) -> Result<Self> {
        let mut clusters: Vec<Vec<usize>> = clusters
            .into_iter()
            .map(|mut c| {
                c.sort_unstable();
                c
            })
            .collect();
        clusters.sort_by_key(|c| c.first().copied());
        let partition = Self { links, clusters };
        partition.validate()?;
        Ok(partition)
    }

    pub fn single(links: usize) -> Self {
        Self {
            links,
            clusters: vec![(0..links).collect()],
        }
    }

    pub fn singletons(links: usize) -> Self {
        Self {
            links,
            clusters: (0..links).map(|i| vec![i]).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.clusters.is_empty() {
            return Err(Error::param("a partition needs at least one cluster"));
        }
        let mut seen = vec![false; self.links];
        for cluster in &self.clusters {
            if cluster.is_empty() {
                return Err(Error::param("clusters must be non-empty"));
            }
            for &i in cluster {
                if i >= self.links || seen[i] {
                    return Err(Error::param(format!(
                        "link {i} is out of range or assigned twice"
                    )));
                }
                seen[i] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::param("partition does not cover every link"));
        }
        Ok(())
    }

    pub fn links(&self) -> usize {
        self.links
    }

    pub fn clusters(&self) -> &[Vec<usize>] {
        &self.clusters
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.clusters.iter().map(Vec::len).collect()
    }

    pub fn max_size(&self) -> usize {
        self.clusters.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// `Σ_c 2^{K_c}`, the number of per-cluster sub-actions.
    pub fn sub_action_count(&self) -> u128 {
        self.clusters.iter().map(|c| 1u128 << c.len()).sum()
    }
}

impl std::fmt::Display for ClusterPartition {
    /// `0 3|1 2` style: clusters separated by `|`, members by spaces.
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (i, cluster) in self.clusters.iter().enumerate() {
            if i > 0 {
                f.write_str("|")?;
            }
            for (j, link) in cluster.iter().enumerate() {
                if j > 0 {
                    f.write_str(" ")?;
                }
                write!(f, "{link}")?;
            }
        }
        Ok(())
    }
}

/// Symmetric non-negative K x K matrix with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseDissimilarity {
    links: usize,
    values: Vec<f64>,
}

impl PairwiseDissimilarity {
    pub fn from_matrix(links: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != links * links {
            return Err(Error::param("dissimilarity must be K x K"));
        }
        for i in 0..links {
            if values[i * links + i] != 0.0 {
                return Err(Error::param("dissimilarity diagonal must be zero"));
            }
            for j in 0..links {
                let v = values[i * links + j];
                if !(v >= 0.0 && v.is_finite()) || v != values[j * links + i] {
                    return Err(Error::param(
                        "dissimilarity must be finite, non-negative and symmetric",
                    ));
                }
            }
        }
        Ok(Self { links, values })
    }

    pub fn links(&self) -> usize {
        self.links
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.links + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// One-bit pairwise report: 1 iff both cross INRs are below `snr_i^eta`.
pub fn pairwise_onebit(snr_i: f64, inr_ij: f64, inr_ji: f64, eta: f64) -> bool {
    let level = snr_i.powf(eta);
    inr_ij < level && inr_ji < level
}

/// Runs the clustering phase: `t_clust` blocks with every link on its own
/// band, each receiver reporting [`pairwise_onebit`] for every other link.
///
/// The averaged report of receiver `i` about `j` and of `j` about `i` are
/// averaged again into a symmetric dissimilarity.
pub fn collect_clustering_feedback(
    gains: &PathGains,
    budget: &LinkBudget,
    m: u32,
    eta: f64,
    t_clust: usize,
    seed: u64,
) -> Result<PairwiseDissimilarity> {
    let k = gains.links();
    let blocks = (0..t_clust)
        .map(|t| sample_fading(k, m, &mut stream(seed, Purpose::Clustering, t as u64)))
        .collect::<Result<Vec<_>>>()?;
    feedback_dissimilarity(gains, budget, eta, &blocks)
}

/// [`collect_clustering_feedback`] over explicitly given fading blocks.
pub fn feedback_dissimilarity(
    gains: &PathGains,
    budget: &LinkBudget,
    eta: f64,
    blocks: &[FadingBlock],
) -> Result<PairwiseDissimilarity> {
    if blocks.is_empty() {
        return Err(Error::param("feedback clustering needs at least one block"));
    }
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::param("eta must lie in (0, 1]"));
    }
    let k = gains.links();
    let mut counts = vec![0u32; k * k];
    for fading in blocks {
        if fading.links() != k {
            return Err(Error::param("fading block size does not match the network"));
        }
        for i in 0..k {
            let snr_i = received_power_ratio(gains, fading, budget.snr, i, i);
            for j in 0..k {
                if i == j {
                    continue;
                }
                let inr_ij = received_power_ratio(gains, fading, budget.snr, i, j);
                let inr_ji = received_power_ratio(gains, fading, budget.snr, j, i);
                if pairwise_onebit(snr_i, inr_ij, inr_ji, eta) {
                    counts[i * k + j] += 1;
                }
            }
        }
    }
    let n = blocks.len() as f64;
    let mut values = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            if i != j {
                let sum = (counts[i * k + j] + counts[j * k + i]) as f64;
                values[i * k + j] = sum / (2.0 * n);
            }
        }
    }
    PairwiseDissimilarity::from_matrix(k, values)
}

/// `1 / (1 + max(g_ij, g_ji))` from the cross power gains.
pub fn pathloss_dissimilarity(gains: &PathGains) -> PairwiseDissimilarity {
    let k = gains.links();
    let mut values = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            if i != j {
                values[i * k + j] = 1.0 / (1.0 + gains.get(i, j).max(gains.get(j, i)));
            }
        }
    }
    PairwiseDissimilarity::from_matrix(k, values).expect("construction is symmetric")
}

/// Average-linkage agglomerative clustering with a cluster-size cap.
///
/// At every step the admissible pair (merged size within `max_cluster_size`
/// and, if given, linkage at most `max_linkage`) with the smallest average
/// linkage is merged; ties go to the lexicographically smallest pair of
/// cluster slots. Stops when no admissible merge remains.
pub fn hierarchical_cluster(
    dissim: &PairwiseDissimilarity,
    max_cluster_size: usize,
    max_linkage: Option<f64>,
) -> Result<ClusterPartition> {
    if max_cluster_size == 0 {
        return Err(Error::param("max cluster size must be at least 1"));
    }
    let k = dissim.links();
    let mut members: Vec<Option<Vec<usize>>> = (0..k).map(|i| Some(vec![i])).collect();
    // linkage between live slots; Lance-Williams update for average linkage
    let mut linkage: Vec<f64> = dissim.as_slice().to_vec();

    loop {
        let mut best: Option<(usize, usize, f64)> = None;
        for a in 0..k {
            let Some(ma) = &members[a] else { continue };
            for b in (a + 1)..k {
                let Some(mb) = &members[b] else { continue };
                if ma.len() + mb.len() > max_cluster_size {
                    continue;
                }
                let d = linkage[a * k + b];
                if max_linkage.is_some_and(|limit| d > limit) {
                    continue;
                }
                if best.is_none_or(|(_, _, bd)| d < bd) {
                    best = Some((a, b, d));
                }
            }
        }
        let Some((a, b, _)) = best else { break };
        let mb = members[b].take().expect("slot b is live");
        let ma = members[a].as_mut().expect("slot a is live");
        let (na, nb) = (ma.len() as f64, mb.len() as f64);
        ma.extend(mb);
        for c in 0..k {
            if c == a || c == b || members[c].is_none() {
                continue;
            }
            let d = (na * linkage[a * k + c] + nb * linkage[b * k + c]) / (na + nb);
            linkage[a * k + c] = d;
            linkage[c * k + a] = d;
        }
    }
    ClusterPartition::new(k, members.into_iter().flatten().collect())
}

/// Uniformly random balanced partition into `clusters` groups (sizes differ by at most one).
pub fn random_cluster(links: usize, clusters: usize, rng: &mut SimRng) -> Result<ClusterPartition> {
    if clusters == 0 || clusters > links {
        return Err(Error::param(format!(
            "cannot split {links} links into {clusters} clusters"
        )));
    }
    let mut order: Vec<usize> = (0..links).collect();
    order.shuffle(rng);
    let mut groups = vec![Vec::new(); clusters];
    for (i, link) in order.into_iter().enumerate() {
        groups[i % clusters].push(link);
    }
    ClusterPartition::new(links, groups)
}

/// Number of clusters needed so that no cluster exceeds `max_cluster_size`.
pub fn clusters_for_size(links: usize, max_cluster_size: usize) -> usize {
    links.div_ceil(max_cluster_size.max(1))
}
