use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::EpmpdError;
use crate::egpsi::Cluster;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanLevel {
    /// 1 at the leaves.
    pub level: u32,
    pub clusters: Vec<Cluster>,
}

/// The comparison tree: at each level, clusters of consecutive clients
/// whose first half is matched against the second half.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterPlan {
    pub client_count: u32,
    /// Ascending by level; every level from 1 to the depth is present.
    pub levels: Vec<PlanLevel>,
}

impl ClusterPlan {
    pub fn depth(&self) -> u32 {
        self.levels.len() as u32
    }

    pub fn cluster_count(&self) -> usize {
        self.levels.iter().map(|l| l.clusters.len()).sum()
    }

    pub fn level(&self, level: u32) -> Option<&PlanLevel> {
        self.levels.get((level as usize).checked_sub(1)?)
    }

    /// The cluster `client` belongs to at `level`, if any.
    pub fn cluster_of(&self, level: u32, client: u32) -> Option<&Cluster> {
        self.level(level)?
            .clusters
            .iter()
            .find(|c| c.side_of(client).is_some())
    }

    /// Lowest level at which `client` takes part in a cluster.
    pub fn first_level(&self, client: u32) -> Option<u32> {
        self.levels
            .iter()
            .find(|l| l.clusters.iter().any(|c| c.side_of(client).is_some()))
            .map(|l| l.level)
    }

    /// Every (group 0 member, group 1 member) pair the plan compares, with
    /// the level it is compared at.
    pub fn compared_pairs(&self) -> Vec<(u32, u32, u32)> {
        let mut out = Vec::new();
        for l in &self.levels {
            for c in &l.clusters {
                for &a in &c.group0 {
                    for &b in &c.group1 {
                        out.push((a, b, l.level));
                    }
                }
            }
        }
        out
    }
}

fn ceil_log2(m: u32) -> u32 {
    u32::BITS - (m - 1).leading_zeros()
}

/// Splits `1..=client_count` recursively: a run of `c` clients forms one
/// cluster whose first `⌈c/2⌉` clients are group 0, and each half is split
/// again one level further down. Runs of a single client form no cluster.
///
/// For a power of two this is the aligned tree (level `d` holds `m/2^d`
/// clusters of `2^d` clients). For other counts it keeps every cluster a
/// consecutive run of at most `2^d` clients and compares every pair of
/// clients exactly once.
pub fn build_cluster_plan(client_count: u32) -> Result<ClusterPlan, EpmpdError> {
    if client_count < 2 {
        return Err(EpmpdError::TooFewClients(client_count));
    }
    let depth = ceil_log2(client_count);
    let mut levels: Vec<PlanLevel> = (1..=depth)
        .map(|level| PlanLevel {
            level,
            clusters: Vec::new(),
        })
        .collect();
    // (first client, size, level)
    let mut stack = vec![(1u32, client_count, depth)];
    while let Some((first, size, level)) = stack.pop() {
        if size < 2 {
            continue;
        }
        let half = size.div_ceil(2);
        let group0: Vec<u32> = (first..first + half).collect();
        let group1: Vec<u32> = (first + half..first + size).collect();
        levels[level as usize - 1].clusters.push(Cluster::new(group0, group1));
        stack.push((first + half, size - half, level - 1));
        stack.push((first, half, level - 1));
    }
    for l in &mut levels {
        l.clusters.sort_by_key(|c| c.group0[0]);
    }
    let plan = ClusterPlan { client_count, levels };
    debug_assert_eq!(plan.cluster_count(), client_count as usize - 1);
    Ok(plan)
}

/// Pairs compared by the all-pairs baseline, lower index first.
pub fn naive_pairs(client_count: u32) -> impl Iterator<Item = (u32, u32)> {
    (1..=client_count).flat_map(move |i| (i + 1..=client_count).map(move |j| (i, j)))
}

pub fn naive_pair_count(client_count: u32) -> u64 {
    let m = client_count as u64;
    m * m.saturating_sub(1) / 2
}

/// Checks the structural invariants of a plan; returns a description of
/// each violation.
pub fn plan_violations(plan: &ClusterPlan) -> Vec<String> {
    let m = plan.client_count;
    let mut out = Vec::new();
    for l in &plan.levels {
        let cap = 1u64 << l.level;
        let mut seen = BTreeSet::new();
        for c in &l.clusters {
            let members: Vec<u32> = c.members().collect();
            if members.len() < 2 || members.len() as u64 > cap {
                out.push(format!("level {}: cluster of {} clients", l.level, members.len()));
            }
            if members.windows(2).any(|w| w[1] != w[0] + 1) {
                out.push(format!("level {}: cluster {:?} is not a consecutive run", l.level, members));
            }
            if c.group0.len() != members.len().div_ceil(2) {
                out.push(format!("level {}: group 0 of {:?} is not the first half", l.level, members));
            }
            for x in members {
                if x == 0 || x > m || !seen.insert(x) {
                    out.push(format!("level {}: client {x} misplaced", l.level));
                }
            }
        }
    }
    let mut pairs = BTreeSet::new();
    for (a, b, level) in plan.compared_pairs() {
        if !pairs.insert((a.min(b), a.max(b))) {
            out.push(format!("pair ({a}, {b}) compared again at level {level}"));
        }
    }
    if pairs.len() as u64 != naive_pair_count(m) {
        out.push(format!("{} of {} pairs compared", pairs.len(), naive_pair_count(m)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eight_clients() {
        let p = build_cluster_plan(8).unwrap();
        let sizes: Vec<usize> = p.levels.iter().map(|l| l.clusters.len()).collect();
        assert_eq!(sizes, vec![4, 2, 1]);
        assert_eq!(p.cluster_count(), 7);
        assert_eq!(p.levels[1].clusters[1], Cluster::new([5, 6], [7, 8]));
        assert!(plan_violations(&p).is_empty());
    }

    #[test]
    fn two_clients() {
        let p = build_cluster_plan(2).unwrap();
        assert_eq!(p.levels.len(), 1);
        assert_eq!(p.levels[0].clusters, vec![Cluster::new([1], [2])]);
    }

    #[test]
    fn five_clients_cover_each_pair_once() {
        let p = build_cluster_plan(5).unwrap();
        assert_eq!(p.depth(), 3);
        assert_eq!(p.levels[2].clusters, vec![Cluster::new([1, 2, 3], [4, 5])]);
        assert_eq!(p.levels[1].clusters, vec![Cluster::new([1, 2], [3]), Cluster::new([4], [5])]);
        assert_eq!(p.levels[0].clusters, vec![Cluster::new([1], [2])]);
        let mut pairs: Vec<(u32, u32)> = p.compared_pairs().iter().map(|&(a, b, _)| (a, b)).collect();
        pairs.sort();
        assert_eq!(pairs, naive_pairs(5).collect::<Vec<_>>());
        assert_eq!(p.first_level(3), Some(2));
        assert_eq!(p.first_level(1), Some(1));
    }

    #[test]
    fn every_count_up_to_300() {
        for m in 2..=300 {
            let p = build_cluster_plan(m).unwrap();
            assert_eq!(p.cluster_count(), m as usize - 1, "m={m}");
            assert!(plan_violations(&p).is_empty(), "m={m}: {:?}", plan_violations(&p));
            if m.is_power_of_two() {
                for l in &p.levels {
                    assert_eq!(l.clusters.len() as u32, m >> l.level);
                }
            }
        }
    }

    #[test]
    fn baseline_counts() {
        assert_eq!(build_cluster_plan(256).unwrap().cluster_count(), 255);
        assert_eq!(naive_pair_count(256), 32_640);
        assert_eq!(naive_pairs(256).count(), 32_640);
        assert_eq!(naive_pair_count(2), 1);
    }

    #[test]
    fn too_few() {
        assert!(matches!(build_cluster_plan(1), Err(EpmpdError::TooFewClients(1))));
        assert!(matches!(build_cluster_plan(0), Err(EpmpdError::TooFewClients(0))));
    }
}
