//! Multi-party deduplication over a binary tree of group-PSI runs.
//!
//! Clients are arranged by [`build_cluster_plan`]. At each level, every
//! cluster runs one group PSI and its group-0 clients delete what they
//! share with group 1. Because every pair of clients meets exactly once,
//! and always with the lower index in group 0, each duplicated element
//! survives only at the highest-indexed client holding it.

mod party;
mod plan;

use std::collections::BTreeSet;
use std::time::Instant;

use rustc_hash::FxHashSet;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use party::{run_client_party, run_tee_party, ClientPartyOutcome};
pub use plan::{build_cluster_plan, naive_pair_count, naive_pairs, plan_violations, ClusterPlan, PlanLevel};

use crate::crypto::DigestFallback;
use crate::egpsi::{run_level, ClientState, Cluster, EgpsiError, EgpsiOptions, Exchange, IntersectionReport, TeeState, Variant};
use crate::element::{ClientSet, Element};
use crate::runtime::{party_rng, PartyId, PartyKind, Runtime, RuntimeError};

#[derive(Debug, Error)]
pub enum EpmpdError {
    #[error("deduplication needs at least 2 clients, got {0}")]
    TooFewClients(u32),
    #[error("client {client} holds {element} more than once")]
    DuplicateWithinSet { client: u32, element: Element },
    #[error("internal invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Protocol(#[from] EgpsiError),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
}

/// An element a client deleted, and the client it was found to share it
/// with. An element shared with several counterparts at once is listed
/// once per counterpart.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Removal {
    pub element: Element,
    pub counterpart: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DedupOutcome {
    /// Indexed by client index minus one.
    pub final_sets: Vec<ClientSet>,
    pub removals: Vec<Vec<Removal>>,
    /// Group-PSI runs performed.
    pub invocations: u64,
    /// Repeats dropped by local deduplication in lenient mode.
    pub local_removed: Vec<usize>,
    /// Seconds spent building the plan; not part of any party's time.
    pub plan_s: f64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LocalDedupResult {
    pub set: ClientSet,
    pub removed_count: usize,
}

/// Keeps the first occurrence of every element, in order.
pub fn local_dedup(set: &[Element]) -> LocalDedupResult {
    let mut seen: FxHashSet<&Element> = FxHashSet::default();
    let mut out = Vec::with_capacity(set.len());
    for e in set {
        if seen.insert(e) {
            out.push(e.clone());
        }
    }
    LocalDedupResult {
        removed_count: set.len() - out.len(),
        set: out,
    }
}

#[derive(Clone, Copy, Debug)]
pub struct EpmpdOptions {
    pub seed: u64,
    /// Reject sets with repeats instead of deduplicating them locally.
    pub strict: bool,
    pub fallback: DigestFallback,
    pub exchange: Exchange,
    /// Verify before every level that each group's sets are disjoint.
    pub check_invariants: bool,
}

impl Default for EpmpdOptions {
    fn default() -> Self {
        EpmpdOptions {
            seed: 0,
            strict: true,
            fallback: DigestFallback::Enabled,
            exchange: Exchange::OneSided,
            check_invariants: cfg!(debug_assertions),
        }
    }
}

impl EpmpdOptions {
    pub(crate) fn egpsi(&self) -> EgpsiOptions {
        EgpsiOptions {
            seed: self.seed,
            fallback: self.fallback,
            exchange: self.exchange,
        }
    }
}

/// Applies the local-dedup precondition.
fn prepare(sets: &[ClientSet], strict: bool) -> Result<(Vec<ClientSet>, Vec<usize>), EpmpdError> {
    let mut out = Vec::with_capacity(sets.len());
    let mut removed = Vec::with_capacity(sets.len());
    for (i, s) in sets.iter().enumerate() {
        let r = local_dedup(s);
        if strict && r.removed_count > 0 {
            let mut seen = FxHashSet::default();
            let element = s.iter().find(|e| !seen.insert(*e)).unwrap().clone();
            return Err(EpmpdError::DuplicateWithinSet {
                client: i as u32 + 1,
                element,
            });
        }
        removed.push(r.removed_count);
        out.push(r.set);
    }
    Ok((out, removed))
}

fn ensure_registered(rt: &Runtime, clients: u32, variant: Variant) -> Result<(), RuntimeError> {
    if variant.uses_tee() && !rt.is_registered(PartyId::TEE) {
        rt.register_party(PartyKind::Tee, 0)?;
    }
    for c in 1..=clients {
        if !rt.is_registered(PartyId::client(c)) {
            rt.register_party(PartyKind::Client, c)?;
        }
    }
    Ok(())
}

/// Deletes from `set` everything `report` lists and returns the removals.
pub(crate) fn apply_report(set: &mut ClientSet, report: &IntersectionReport) -> Vec<Removal> {
    let mut removals = Vec::new();
    let mut gone: FxHashSet<&Element> = FxHashSet::default();
    for (&l, shared) in report.counterparts.iter().zip(&report.per_counterpart) {
        for e in shared {
            gone.insert(e);
            removals.push(Removal {
                element: e.clone(),
                counterpart: l,
            });
        }
    }
    if !gone.is_empty() {
        set.retain(|e| !gone.contains(e));
    }
    removals
}

fn check_groups_disjoint(level: u32, clusters: &[Cluster], sets: &[ClientSet]) -> Result<(), EpmpdError> {
    for c in clusters {
        for side in [0, 1] {
            let mut seen: FxHashSet<&Element> = FxHashSet::default();
            for &i in c.group(side) {
                for e in &sets[i as usize - 1] {
                    if !seen.insert(e) {
                        return Err(EpmpdError::Invariant(format!(
                            "{e} held twice within group {side} of a level-{level} cluster"
                        )));
                    }
                }
            }
        }
    }
    Ok(())
}

/// Deduplicates `sets` (client `i` holds `sets[i - 1]`) with the tree
/// protocol. Missing parties are registered on `rt`.
pub fn epmpd_run(
    sets: &[ClientSet],
    variant: Variant,
    rt: &Runtime,
    opts: &EpmpdOptions,
) -> Result<DedupOutcome, EpmpdError> {
    let m = u32::try_from(sets.len()).map_err(|_| EpmpdError::TooFewClients(u32::MAX))?;
    let t = Instant::now();
    let plan = build_cluster_plan(m)?;
    let plan_s = t.elapsed().as_secs_f64();
    let (mut current, local_removed) = prepare(sets, opts.strict)?;
    ensure_registered(rt, m, variant)?;

    let egpsi = opts.egpsi();
    let mut clients: Vec<ClientState> = (1..=m)
        .map(|c| ClientState::new(party_rng(opts.seed, PartyId::client(c))))
        .collect();
    let mut tee = TeeState::new(party_rng(opts.seed, PartyId::TEE));
    let mut removals = vec![Vec::new(); m as usize];

    for level in &plan.levels {
        if opts.check_invariants && level.level >= 2 {
            check_groups_disjoint(level.level, &level.clusters, &current)?;
        }
        let first_timers: BTreeSet<u32> = (1..=m).filter(|&c| plan.first_level(c) == Some(level.level)).collect();
        let reports = run_level(
            rt,
            variant,
            &egpsi,
            level.level,
            &level.clusters,
            &current,
            &mut clients,
            &mut tee,
            &|c| first_timers.contains(&c),
        )?;
        for cluster in &level.clusters {
            for &i in &cluster.group0 {
                let report = reports.get(&i).ok_or_else(|| {
                    EpmpdError::Invariant(format!("no report from group-0 client {i} at level {}", level.level))
                })?;
                let idx = i as usize - 1;
                removals[idx].extend(apply_report(&mut current[idx], report));
            }
        }
    }

    Ok(DedupOutcome {
        final_sets: current,
        removals,
        invocations: plan.cluster_count() as u64,
        local_removed,
        plan_s,
    })
}

/// Baseline: one two-party Type I run for every pair of clients, the lower
/// index deleting what it shares with the higher.
pub fn naive_pairwise_run(sets: &[ClientSet], rt: &Runtime, opts: &EpmpdOptions) -> Result<DedupOutcome, EpmpdError> {
    let m = u32::try_from(sets.len()).map_err(|_| EpmpdError::TooFewClients(u32::MAX))?;
    if m < 2 {
        return Err(EpmpdError::TooFewClients(m));
    }
    let (mut current, local_removed) = prepare(sets, opts.strict)?;
    ensure_registered(rt, m, Variant::I)?;
    let egpsi = opts.egpsi();
    let mut clients: Vec<ClientState> = (1..=m)
        .map(|c| ClientState::new(party_rng(opts.seed, PartyId::client(c))))
        .collect();
    let mut tee = TeeState::new(party_rng(opts.seed, PartyId::TEE));
    let mut removals = vec![Vec::new(); m as usize];
    let mut invocations = 0u64;
    for (i, j) in naive_pairs(m) {
        let cluster = Cluster::new([i], [j]);
        let reports = run_level(
            rt,
            Variant::I,
            &egpsi,
            1,
            std::slice::from_ref(&cluster),
            &current,
            &mut clients,
            &mut tee,
            &|_| false,
        )?;
        invocations += 1;
        let idx = i as usize - 1;
        removals[idx].extend(apply_report(&mut current[idx], &reports[&i]));
    }
    Ok(DedupOutcome {
        final_sets: current,
        removals,
        invocations,
        local_removed,
        plan_s: 0.0,
    })
}
