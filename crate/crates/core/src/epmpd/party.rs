//! Single-party drivers for runs where each party lives in its own process.
//! They walk the same plan as [`super::epmpd_run`] and execute the same
//! per-cluster steps, so a distributed run reproduces an in-process run with
//! the same seed.

use serde::{Deserialize, Serialize};

use super::{apply_report, prepare, ClusterPlan, EpmpdError, EpmpdOptions, Removal};
use crate::egpsi::{client_step, tee_step, ClientState, TeeState, Variant};
use crate::element::ClientSet;
use crate::netio::MsgType;
use crate::runtime::{party_rng, PartyId, Phase, Runtime, Step};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientPartyOutcome {
    pub client: u32,
    pub final_set: ClientSet,
    pub removals: Vec<Removal>,
    pub local_removed: usize,
}

/// Runs client `me` through the whole plan. When the variant involves the
/// third party, an empty DONE tells it this client has finished.
pub fn run_client_party(
    rt: &Runtime,
    me: u32,
    set: &ClientSet,
    variant: Variant,
    plan: &ClusterPlan,
    opts: &EpmpdOptions,
) -> Result<ClientPartyOutcome, EpmpdError> {
    let (mut prepared, local_removed) = prepare(std::slice::from_ref(set), opts.strict).map_err(|e| match e {
        EpmpdError::DuplicateWithinSet { element, .. } => EpmpdError::DuplicateWithinSet { client: me, element },
        other => other,
    })?;
    let mut current = prepared.pop().unwrap_or_default();
    let egpsi = opts.egpsi();
    let mut state = ClientState::new(party_rng(opts.seed, PartyId::client(me)));
    let first = plan.first_level(me);
    let mut removals = Vec::new();
    for level in &plan.levels {
        let Some(cluster) = plan.cluster_of(level.level, me) else { continue };
        let request = first == Some(level.level);
        let report = client_step(rt, variant, &egpsi, level.level, cluster, me, &current, &mut state, request)?;
        if cluster.side_of(me) == Some(0) {
            let report = report.ok_or_else(|| EpmpdError::Invariant(format!("group-0 client {me} got no report")))?;
            removals.extend(apply_report(&mut current, &report));
        }
    }
    if variant.uses_tee() {
        let phase = Phase::new(plan.depth(), Step::Extract);
        rt.send(PartyId::client(me), PartyId::TEE, MsgType::Done, Vec::new(), phase)?;
    }
    Ok(ClientPartyOutcome {
        client: me,
        final_set: current,
        removals,
        local_removed: local_removed[0],
    })
}

/// Serves every cluster of the plan in order, then waits for each client's
/// DONE.
pub fn run_tee_party(rt: &Runtime, plan: &ClusterPlan, variant: Variant, opts: &EpmpdOptions) -> Result<(), EpmpdError> {
    if !variant.uses_tee() {
        return Ok(());
    }
    let mut tee = TeeState::new(party_rng(opts.seed, PartyId::TEE));
    for level in &plan.levels {
        let requests = |c: u32| plan.first_level(c) == Some(level.level);
        for cluster in &level.clusters {
            tee_step(rt, variant, level.level, cluster, &mut tee, &requests)?;
        }
    }
    for c in 1..=plan.client_count {
        rt.recv(PartyId::TEE, PartyId::client(c), MsgType::Done)?;
    }
    Ok(())
}
