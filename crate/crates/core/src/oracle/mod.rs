//! Non-private reference computations and transcript auditors.

mod audit;
pub mod planted;
mod transcript;

use std::collections::{HashMap, HashSet};

use crate::element::{ClientSet, Element};
use crate::epmpd::{DedupOutcome, Removal};

pub use audit::{audit_leakage_type1, audit_leakage_type2, audit_tree_type1, TypeOneAudit, TypeTwoAudit};
pub use transcript::{Transcript, TranscriptRecord};

/// Plain deduplication: every element stays only with the highest-indexed
/// client holding it. Each other holder records the keeper as counterpart.
pub fn oracle_dedup(sets: &[ClientSet]) -> DedupOutcome {
    let mut keeper: HashMap<&Element, usize> = HashMap::new();
    for (i, set) in sets.iter().enumerate() {
        for e in set {
            keeper.insert(e, i);
        }
    }
    let mut final_sets = Vec::with_capacity(sets.len());
    let mut removals = Vec::with_capacity(sets.len());
    for (i, set) in sets.iter().enumerate() {
        let mut kept = Vec::new();
        let mut removed = Vec::new();
        for e in set {
            let k = keeper[e];
            if k == i {
                kept.push(e.clone());
            } else {
                removed.push(Removal {
                    element: e.clone(),
                    counterpart: k as u32 + 1,
                });
            }
        }
        final_sets.push(kept);
        removals.push(removed);
    }
    DedupOutcome {
        final_sets,
        removals,
        invocations: 0,
        local_removed: vec![0; sets.len()],
        plan_s: 0.0,
    }
}

/// Checks a deduplication result against its inputs: each final set is a
/// subset of its input, final sets are pairwise disjoint, the union is
/// unchanged, and each removal names an element the client dropped and a
/// counterpart that held it. Returns one line per violation.
pub fn check_dedup_invariants(inputs: &[ClientSet], outcome: &DedupOutcome) -> Vec<String> {
    let mut out = Vec::new();
    if outcome.final_sets.len() != inputs.len() {
        out.push(format!("{} final sets for {} clients", outcome.final_sets.len(), inputs.len()));
        return out;
    }
    let input_sets: Vec<HashSet<&Element>> = inputs.iter().map(|s| s.iter().collect()).collect();
    let mut owner: HashMap<&Element, usize> = HashMap::new();
    for (i, set) in outcome.final_sets.iter().enumerate() {
        for e in set {
            if !input_sets[i].contains(e) {
                out.push(format!("client {} ends with {e}, which it never held", i + 1));
            }
            if let Some(j) = owner.insert(e, i) {
                if j != i {
                    out.push(format!("{e} survives at clients {} and {}", j + 1, i + 1));
                }
            }
        }
    }
    let lost = input_sets.iter().flatten().filter(|e| !owner.contains_key(*e)).count();
    if lost > 0 {
        out.push(format!("{lost} elements of the input union are gone"));
    }
    if outcome.removals.len() == inputs.len() {
        for (i, removed) in outcome.removals.iter().enumerate() {
            let finals: HashSet<&Element> = outcome.final_sets[i].iter().collect();
            let dropped: HashSet<&Element> = input_sets[i].difference(&finals).copied().collect();
            let mut recorded = HashSet::new();
            for r in removed {
                if !recorded.insert(&r.element) {
                    out.push(format!("client {} records {} twice", i + 1, r.element));
                }
                let holds = (r.counterpart as usize)
                    .checked_sub(1)
                    .and_then(|c| input_sets.get(c))
                    .is_some_and(|s| s.contains(&r.element));
                if r.counterpart as usize == i + 1 || !holds {
                    out.push(format!(
                        "client {} names client {} for {}, which does not hold it",
                        i + 1,
                        r.counterpart,
                        r.element
                    ));
                }
            }
            if recorded != dropped {
                out.push(format!(
                    "client {}: {} removals recorded, {} elements dropped",
                    i + 1,
                    recorded.len(),
                    dropped.len()
                ));
            }
        }
    } else {
        out.push(format!("{} removal lists for {} clients", outcome.removals.len(), inputs.len()));
    }
    out
}
