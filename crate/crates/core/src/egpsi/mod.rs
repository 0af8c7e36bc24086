//! Group PSI: every client of group 0 learns its intersection with every
//! client of group 1 (and, depending on the variant, vice versa).
//!
//! * Type I: clients encrypt under pairwise PRP keys and the third party
//!   reports which ciphertexts occur more than once.
//! * Type II: clients obtain PRF values through an OPRF held by the third
//!   party and compare them among themselves.
//! * Type III: clients encrypt under keys derived from the element itself,
//!   so equal elements give equal ciphertexts; no third party is involved.
//!
//! Each party runs as its own thread and talks only through the
//! [`Runtime`]; the functions here play the coordinator.

pub mod codec;
mod driver;
mod type1;
mod type2;
mod type3;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::{CryptoRng, RngCore};
use rustc_hash::{FxHashMap, FxHashSet};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{BlockContent, CryptoError, DigestFallback, ElementDigest, OprfKey, PrfOutput, Prp, PrpBlock, PrpKey};
use crate::element::{ClientSet, Element};
use crate::runtime::{party_rng, PartyId, Runtime, RuntimeError};

pub(crate) use driver::{client_step, run_level, tee_step, ClientState, TeeState};

#[derive(Debug, Error)]
pub enum EgpsiError {
    #[error("protocol aborted: {0}")]
    ProtocolAbort(String),
    #[error("reported ciphertext {0:?} is not one of this client's")]
    UnknownCiphertext(PrpBlock),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
}

impl EgpsiError {
    pub(crate) fn is_abort_echo(&self) -> bool {
        matches!(self, EgpsiError::Runtime(RuntimeError::Aborted))
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
pub enum Variant {
    I,
    II,
    III,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::I, Variant::II, Variant::III];

    pub fn uses_tee(&self) -> bool {
        !matches!(self, Variant::III)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::I => "I",
            Variant::II => "II",
            Variant::III => "III",
        })
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "i" | "1" | "type1" => Ok(Variant::I),
            "ii" | "2" | "type2" => Ok(Variant::II),
            "iii" | "3" | "type3" => Ok(Variant::III),
            _ => Err(format!("unknown variant {s:?} (expected I, II or III)")),
        }
    }
}

/// Which groups send their PRF values to the other in Type II.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default, Serialize, Deserialize)]
pub enum Exchange {
    /// Group 1 sends to group 0 only; group 1 learns nothing.
    OneSided,
    #[default]
    TwoSided,
}

#[derive(Clone, Copy, Debug)]
pub struct EgpsiOptions {
    pub seed: u64,
    pub fallback: DigestFallback,
    pub exchange: Exchange,
}

impl Default for EgpsiOptions {
    fn default() -> Self {
        EgpsiOptions {
            seed: 0,
            fallback: DigestFallback::Enabled,
            exchange: Exchange::TwoSided,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupAssignment {
    pub group_id: u8,
    pub members: Vec<u32>,
}

impl GroupAssignment {
    pub fn new(group_id: u8, members: impl Into<Vec<u32>>) -> Self {
        GroupAssignment {
            group_id,
            members: members.into(),
        }
    }
}

/// The two groups of one group-PSI run, as client indices.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Cluster {
    pub group0: Vec<u32>,
    pub group1: Vec<u32>,
}

impl Cluster {
    pub fn new(group0: impl Into<Vec<u32>>, group1: impl Into<Vec<u32>>) -> Self {
        Cluster {
            group0: group0.into(),
            group1: group1.into(),
        }
    }

    pub fn from_groups(groups: &[GroupAssignment; 2]) -> Result<Self, EgpsiError> {
        let [a, b] = groups;
        let (g0, g1) = match (a.group_id, b.group_id) {
            (0, 1) => (a, b),
            (1, 0) => (b, a),
            _ => return Err(EgpsiError::ProtocolAbort("groups must be numbered 0 and 1".into())),
        };
        let c = Cluster::new(g0.members.clone(), g1.members.clone());
        let distinct: BTreeSet<u32> = c.members().collect();
        if distinct.len() != c.len() {
            return Err(EgpsiError::ProtocolAbort("a client appears twice in the groups".into()));
        }
        if c.group0.is_empty() || c.group1.is_empty() {
            return Err(EgpsiError::ProtocolAbort("both groups need at least one client".into()));
        }
        Ok(c)
    }

    pub fn groups(&self) -> [GroupAssignment; 2] {
        [
            GroupAssignment::new(0, self.group0.clone()),
            GroupAssignment::new(1, self.group1.clone()),
        ]
    }

    /// Group 0 first, then group 1.
    pub fn members(&self) -> impl Iterator<Item = u32> + '_ {
        self.group0.iter().chain(&self.group1).copied()
    }

    pub fn len(&self) -> usize {
        self.group0.len() + self.group1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn side_of(&self, client: u32) -> Option<u8> {
        if self.group0.contains(&client) {
            Some(0)
        } else if self.group1.contains(&client) {
            Some(1)
        } else {
            None
        }
    }

    pub fn group(&self, side: u8) -> &[u32] {
        if side == 0 {
            &self.group0
        } else {
            &self.group1
        }
    }
}

/// What one client learns: for each client of the other group, in group
/// order, the elements the two sets share, ascending.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntersectionReport {
    pub owner: u32,
    pub counterparts: Vec<u32>,
    pub per_counterpart: Vec<Vec<Element>>,
}

impl IntersectionReport {
    pub fn empty(owner: u32, counterparts: &[u32]) -> Self {
        IntersectionReport {
            owner,
            counterparts: counterparts.to_vec(),
            per_counterpart: vec![Vec::new(); counterparts.len()],
        }
    }

    pub fn with(&self, counterpart: u32) -> Option<&[Element]> {
        let pos = self.counterparts.iter().position(|&c| c == counterpart)?;
        Some(&self.per_counterpart[pos])
    }

    /// Elements shared with at least one counterpart, ascending.
    pub fn union(&self) -> BTreeSet<Element> {
        self.per_counterpart.iter().flatten().cloned().collect()
    }
}

/// Ciphertexts the third party found more than once, restricted to those a
/// client itself submitted.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DupReport {
    pub ciphertexts: Vec<PrpBlock>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KeyTriple {
    pub ciphertext: PrpBlock,
    pub key: PrpKey,
    pub counterpart_index: u32,
}

/// Lookup from a client's own ciphertexts to the key and counterpart that
/// produced them, plus the digests it substituted for long elements.
#[derive(Clone, Debug, Default)]
pub struct TripleTable {
    entries: FxHashMap<PrpBlock, (PrpKey, u32)>,
    digests: FxHashMap<ElementDigest, Element>,
}

impl TripleTable {
    pub fn with_capacity(n: usize) -> Self {
        TripleTable {
            entries: FxHashMap::with_capacity_and_hasher(n, Default::default()),
            digests: FxHashMap::default(),
        }
    }

    pub fn from_triples(triples: impl IntoIterator<Item = KeyTriple>) -> Self {
        let mut t = TripleTable::default();
        for tr in triples {
            t.insert(tr);
        }
        t
    }

    pub fn insert(&mut self, triple: KeyTriple) {
        self.entries
            .insert(triple.ciphertext, (triple.key, triple.counterpart_index));
    }

    pub fn remember_digest(&mut self, digest: ElementDigest, element: Element) {
        self.digests.insert(digest, element);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Multiplicity over the union of all submissions; each client gets back
/// the blocks of its own submission that occur at least twice overall, in
/// ascending order.
pub fn tee_find_duplicates(submissions: &[Vec<PrpBlock>]) -> Vec<DupReport> {
    let total = submissions.iter().map(Vec::len).sum();
    let mut all: Vec<(u128, u32)> = Vec::with_capacity(total);
    for (i, s) in submissions.iter().enumerate() {
        all.extend(s.iter().map(|b| (b.as_u128(), i as u32)));
    }
    all.sort_unstable();
    let mut reports: Vec<DupReport> = submissions.iter().map(|_| DupReport { ciphertexts: Vec::new() }).collect();
    for run in all.chunk_by(|a, b| a.0 == b.0) {
        if run.len() < 2 {
            continue;
        }
        let block = PrpBlock(run[0].0.to_le_bytes());
        let mut last = None;
        for &(_, i) in run {
            if last != Some(i) {
                reports[i as usize].ciphertexts.push(block);
                last = Some(i);
            }
        }
    }
    reports
}

/// Decrypts every reported ciphertext with the key recorded for it and
/// files the element under that key's counterpart.
pub fn extract_plaintext(
    owner: u32,
    counterparts: &[u32],
    report: &DupReport,
    triples: &TripleTable,
) -> Result<IntersectionReport, EgpsiError> {
    let slot: FxHashMap<u32, usize> = counterparts.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let mut out = IntersectionReport::empty(owner, counterparts);
    for c in &report.ciphertexts {
        let (key, counterpart) = triples.entries.get(c).ok_or(EgpsiError::UnknownCiphertext(*c))?;
        let pos = *slot
            .get(counterpart)
            .ok_or_else(|| EgpsiError::ProtocolAbort(format!("triple names unknown counterpart {counterpart}")))?;
        let element = match Prp::new(key).decrypt(c)? {
            BlockContent::Element(e) => e,
            BlockContent::Digest(d) => triples
                .digests
                .get(&d)
                .cloned()
                .ok_or_else(|| EgpsiError::ProtocolAbort("decrypted digest of an unknown element".into()))?,
        };
        out.per_counterpart[pos].push(element);
    }
    for list in &mut out.per_counterpart {
        list.sort_unstable();
    }
    Ok(out)
}

pub type PrfCache = FxHashMap<Element, PrfOutput>;

/// PRF values clients already obtained, reusable by later runs against the
/// same third-party key. The cache carries that key so the simulated third
/// party of a later run evaluates under it.
#[derive(Clone, Debug)]
pub struct EncryptedSetCache {
    tee_key: OprfKey,
    per_client: BTreeMap<u32, PrfCache>,
}

impl EncryptedSetCache {
    pub fn new<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        EncryptedSetCache {
            tee_key: OprfKey::random(rng),
            per_client: BTreeMap::new(),
        }
    }

    pub fn client(&self, client: u32) -> Option<&PrfCache> {
        self.per_client.get(&client)
    }

    /// True when every element of `set` is cached for `client`.
    pub fn covers(&self, client: u32, set: &[Element]) -> bool {
        match self.per_client.get(&client) {
            Some(c) => set.iter().all(|e| c.contains_key(e)),
            None => set.is_empty(),
        }
    }
}

type Reports = BTreeMap<u32, IntersectionReport>;

fn validate(cluster: &Cluster, sets: &[ClientSet], rt: &Runtime, variant: Variant) -> Result<(), EgpsiError> {
    for c in cluster.members() {
        if c == 0 || c as usize > sets.len() {
            return Err(EgpsiError::ProtocolAbort(format!("no input set for client {c}")));
        }
        if !rt.is_registered(PartyId::client(c)) {
            return Err(EgpsiError::ProtocolAbort(format!("client {c} is not registered")));
        }
    }
    if variant.uses_tee() && !rt.is_registered(PartyId::TEE) {
        return Err(EgpsiError::ProtocolAbort("third party is not registered".into()));
    }
    for side in [0, 1] {
        let mut seen: FxHashSet<&Element> = FxHashSet::default();
        for &c in cluster.group(side) {
            let set = &sets[c as usize - 1];
            let mut own: FxHashSet<&Element> = FxHashSet::default();
            for e in set {
                if !own.insert(e) {
                    return Err(EgpsiError::ProtocolAbort(format!("client {c} holds {e} twice")));
                }
                if !seen.insert(e) {
                    return Err(EgpsiError::ProtocolAbort(format!(
                        "{e} appears in two clients of group {side}"
                    )));
                }
            }
        }
    }
    Ok(())
}

fn run_standalone(
    variant: Variant,
    groups: &[GroupAssignment; 2],
    sets: &[ClientSet],
    rt: &Runtime,
    opts: &EgpsiOptions,
    cache: Option<&mut EncryptedSetCache>,
) -> Result<Reports, EgpsiError> {
    let cluster = Cluster::from_groups(groups)?;
    validate(&cluster, sets, rt, variant)?;
    let mut clients: Vec<ClientState> = (1..=sets.len() as u32)
        .map(|c| ClientState::new(party_rng(opts.seed, PartyId::client(c))))
        .collect();
    let mut tee = TeeState::new(party_rng(opts.seed, PartyId::TEE));
    let mut requesters = BTreeSet::new();
    for c in cluster.members() {
        let warm = cache.as_ref().is_some_and(|k| k.covers(c, &sets[c as usize - 1]));
        if !warm {
            requesters.insert(c);
        }
    }
    let mut cache = cache;
    if let Some(k) = cache.as_deref_mut() {
        tee.oprf_key = Some(k.tee_key);
        for (c, entries) in std::mem::take(&mut k.per_client) {
            if let Some(state) = clients.get_mut(c as usize - 1) {
                state.prf_cache = entries;
            }
        }
    }
    let result = run_level(
        rt,
        variant,
        opts,
        0,
        std::slice::from_ref(&cluster),
        sets,
        &mut clients,
        &mut tee,
        &|c| requesters.contains(&c),
    );
    if let Some(k) = cache {
        for (i, state) in clients.into_iter().enumerate() {
            if !state.prf_cache.is_empty() {
                k.per_client.insert(i as u32 + 1, state.prf_cache);
            }
        }
    }
    result
}

/// PRP-based group PSI with third-party duplicate detection.
pub fn egpsi1_run(
    groups: &[GroupAssignment; 2],
    sets: &[ClientSet],
    rt: &Runtime,
    opts: &EgpsiOptions,
) -> Result<Reports, EgpsiError> {
    run_standalone(Variant::I, groups, sets, rt, opts, None)
}

/// OPRF-based group PSI. With a cache, clients whose whole set is cached
/// skip the OPRF entirely. In one-sided mode only group 0 gets reports.
pub fn egpsi2_run(
    groups: &[GroupAssignment; 2],
    sets: &[ClientSet],
    rt: &Runtime,
    opts: &EgpsiOptions,
    cache: Option<&mut EncryptedSetCache>,
) -> Result<Reports, EgpsiError> {
    run_standalone(Variant::II, groups, sets, rt, opts, cache)
}

/// Convergent-encryption group PSI. Reports exist for group 0 only.
pub fn egpsi3_run(
    groups: &[GroupAssignment; 2],
    sets: &[ClientSet],
    rt: &Runtime,
    opts: &EgpsiOptions,
) -> Result<Reports, EgpsiError> {
    run_standalone(Variant::III, groups, sets, rt, opts, None)
}
