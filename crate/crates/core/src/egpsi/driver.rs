use std::collections::BTreeMap;

use rand_chacha::ChaCha20Rng;

use super::{type1, type2, type3, Cluster, EgpsiError, EgpsiOptions, IntersectionReport, PrfCache, Variant};
use crate::crypto::OprfKey;
use crate::element::ClientSet;
use crate::runtime::{PartyId, Phase, Runtime, Step};

/// State a client carries from one group-PSI run to the next.
pub(crate) struct ClientState {
    pub rng: ChaCha20Rng,
    pub prf_cache: PrfCache,
}

impl ClientState {
    pub fn new(rng: ChaCha20Rng) -> Self {
        ClientState {
            rng,
            prf_cache: PrfCache::default(),
        }
    }
}

pub(crate) struct TeeState {
    pub rng: ChaCha20Rng,
    pub oprf_key: Option<OprfKey>,
}

impl TeeState {
    pub fn new(rng: ChaCha20Rng) -> Self {
        TeeState { rng, oprf_key: None }
    }

    pub fn oprf_key(&mut self, rt: &Runtime, level: u32) -> Result<OprfKey, EgpsiError> {
        if let Some(k) = self.oprf_key {
            return Ok(k);
        }
        let rng = &mut self.rng;
        let k = rt.measure(PartyId::TEE, Phase::new(level, Step::Setup), || OprfKey::random(rng))?;
        self.oprf_key = Some(k);
        Ok(k)
    }
}

/// Runs one client's side of one group-PSI instance. Returns `None` when
/// the variant gives this client no output.
#[allow(clippy::too_many_arguments)]
pub(crate) fn client_step(
    rt: &Runtime,
    variant: Variant,
    opts: &EgpsiOptions,
    level: u32,
    cluster: &Cluster,
    me: u32,
    set: &ClientSet,
    state: &mut ClientState,
    request_oprf: bool,
) -> Result<Option<IntersectionReport>, EgpsiError> {
    let side = cluster
        .side_of(me)
        .ok_or_else(|| EgpsiError::ProtocolAbort(format!("client {me} is not in this cluster")))?;
    match variant {
        Variant::I => type1::client(rt, opts, level, cluster, side, me, set, &mut state.rng).map(Some),
        Variant::II => type2::client(rt, opts, level, cluster, side, me, set, state, request_oprf),
        Variant::III => type3::client(rt, opts, level, cluster, side, me, set),
    }
}

pub(crate) fn tee_step(
    rt: &Runtime,
    variant: Variant,
    level: u32,
    cluster: &Cluster,
    state: &mut TeeState,
    requests: &dyn Fn(u32) -> bool,
) -> Result<(), EgpsiError> {
    match variant {
        Variant::I => type1::tee(rt, level, cluster),
        Variant::II => type2::tee(rt, level, cluster, state, requests),
        Variant::III => Ok(()),
    }
}

fn first_cause(errors: Vec<EgpsiError>) -> Option<EgpsiError> {
    let mut errors = errors.into_iter();
    let first = errors.next()?;
    if !first.is_abort_echo() {
        return Some(first);
    }
    Some(errors.find(|e| !e.is_abort_echo()).unwrap_or(first))
}

/// Runs every cluster of one tree level, one thread per participating
/// client plus one for the third party, which serves the clusters in order.
/// `sets` and `clients` are indexed by client index minus one. On the first
/// failure the runtime is aborted so that every party unblocks.
#[allow(clippy::too_many_arguments)]
pub(crate) fn run_level(
    rt: &Runtime,
    variant: Variant,
    opts: &EgpsiOptions,
    level: u32,
    clusters: &[Cluster],
    sets: &[ClientSet],
    clients: &mut [ClientState],
    tee: &mut TeeState,
    requests: &(dyn Fn(u32) -> bool + Sync),
) -> Result<BTreeMap<u32, IntersectionReport>, EgpsiError> {
    let mut home: BTreeMap<u32, &Cluster> = BTreeMap::new();
    for cl in clusters {
        for c in cl.members() {
            home.insert(c, cl);
        }
    }
    fn guard<T>(rt: &Runtime, r: Result<T, EgpsiError>) -> Result<T, EgpsiError> {
        if r.is_err() {
            rt.abort();
        }
        r
    }
    std::thread::scope(|s| {
        let mut handles = Vec::new();
        for (i, state) in clients.iter_mut().enumerate() {
            let me = i as u32 + 1;
            let Some(&cluster) = home.get(&me) else { continue };
            let set = &sets[i];
            let request = requests(me);
            handles.push(s.spawn(move || {
                guard(rt, client_step(rt, variant, opts, level, cluster, me, set, state, request)).map(|r| (me, r))
            }));
        }
        let tee_handle = variant.uses_tee().then(|| {
            s.spawn(move || {
                guard(
                    rt,
                    clusters
                        .iter()
                        .try_for_each(|cl| tee_step(rt, variant, level, cl, tee, requests)),
                )
            })
        });

        let mut reports = BTreeMap::new();
        let mut errors = Vec::new();
        for h in handles {
            match h.join().expect("client thread panicked") {
                Ok((me, Some(r))) => {
                    reports.insert(me, r);
                }
                Ok((_, None)) => {}
                Err(e) => errors.push(e),
            }
        }
        if let Some(h) = tee_handle {
            if let Err(e) = h.join().expect("third-party thread panicked") {
                errors.push(e);
            }
        }
        match first_cause(errors) {
            Some(e) => Err(e),
            None => Ok(reports),
        }
    })
}
