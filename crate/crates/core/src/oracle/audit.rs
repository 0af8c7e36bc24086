//! Checks of what the third party sees in a transcript against what it is
//! allowed to learn. Payloads are decoded here from the wire layout (a u32
//! count, then fixed-size items) without going through the protocol code.

use std::collections::{BTreeMap, HashMap, HashSet};

use curve25519_dalek::ristretto::CompressedRistretto;
use serde::Serialize;

use super::{Transcript, TranscriptRecord};
use crate::egpsi::{Cluster, GroupAssignment};
use crate::epmpd::ClusterPlan;
use crate::element::{ClientSet, Element};
use crate::netio::MsgType;
use crate::runtime::PartyId;

const BLOCK: usize = 16;
const POINT: usize = 32;
const KEY: usize = 16;
const BLOCK_PAYLOAD_MAX: usize = 14;
const PAD: u8 = 0xA5;

pub(super) fn read_items<const N: usize>(payload: &[u8]) -> Result<Vec<[u8; N]>, String> {
    if payload.len() < 4 {
        return Err(format!("{} byte payload has no count", payload.len()));
    }
    let count = u32::from_le_bytes(payload[..4].try_into().unwrap()) as usize;
    let body = &payload[4..];
    if count.checked_mul(N) != Some(body.len()) {
        return Err(format!("count {count} does not match {} body bytes", body.len()));
    }
    Ok(body.chunks_exact(N).map(|c| c.try_into().unwrap()).collect())
}

pub(super) fn write_items<const N: usize>(items: &[[u8; N]]) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + items.len() * N);
    out.extend_from_slice(&(items.len() as u32).to_le_bytes());
    for it in items {
        out.extend_from_slice(it);
    }
    out
}

/// The block an element is placed in before encryption, for elements short
/// enough to be carried directly.
pub(super) fn canonical_block(e: &Element) -> Option<[u8; BLOCK]> {
    let b = e.as_bytes();
    if b.len() > BLOCK_PAYLOAD_MAX {
        return None;
    }
    let mut out = [PAD; BLOCK];
    out[..b.len()].copy_from_slice(b);
    out[b.len()] = b.len() as u8;
    Some(out)
}

/// Looks for plaintext element encodings in third-party payloads: the full
/// block form at any offset, the tagged payload at block boundaries, and the
/// raw bytes of elements of 8 bytes or more at any offset. Exact substring
/// search, so a ciphertext can in principle match by chance.
struct PlaintextScanner {
    blocks: HashSet<[u8; BLOCK]>,
    tagged: HashMap<usize, HashSet<Vec<u8>>>,
    raw: HashMap<usize, HashSet<Vec<u8>>>,
}

impl PlaintextScanner {
    fn new<'a>(elements: impl IntoIterator<Item = &'a Element>) -> Self {
        let mut s = PlaintextScanner {
            blocks: HashSet::new(),
            tagged: HashMap::new(),
            raw: HashMap::new(),
        };
        for e in elements {
            if let Some(b) = canonical_block(e) {
                s.blocks.insert(b);
                let sig = b[..=e.len()].to_vec();
                s.tagged.entry(sig.len()).or_default().insert(sig);
            }
            if e.len() >= 8 {
                s.raw.entry(e.len()).or_default().insert(e.as_bytes().to_vec());
            }
        }
        s
    }

    fn hits(&self, payload: &[u8]) -> usize {
        let mut n = payload
            .windows(BLOCK)
            .filter(|w| self.blocks.contains(<&[u8; BLOCK]>::try_from(*w).unwrap()))
            .count();
        if payload.len() >= 4 {
            for block in payload[4..].chunks(BLOCK) {
                if <&[u8; BLOCK]>::try_from(block).is_ok_and(|b| self.blocks.contains(b)) {
                    continue;
                }
                n += self
                    .tagged
                    .iter()
                    .filter(|(len, sigs)| block.len() >= **len && sigs.contains(&block[..**len]))
                    .count();
            }
        }
        for (len, sigs) in &self.raw {
            n += payload.windows(*len).filter(|w| sigs.contains(*w)).count();
        }
        n
    }
}

fn find_all(haystack: &[u8], needles: &HashSet<[u8; KEY]>) -> usize {
    haystack
        .windows(KEY)
        .filter(|w| needles.contains(<&[u8; KEY]>::try_from(*w).unwrap()))
        .count()
}

fn is_control(r: &TranscriptRecord) -> bool {
    r.msg_type == MsgType::Done && r.payload.is_empty()
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct TypeOneAudit {
    /// `|ENC_i ∩ ENC_l|` for each group 0 member `i` and group 1 member `l`,
    /// from the submissions the third party received.
    pub recomputed: BTreeMap<(u32, u32), usize>,
    /// `|S_i ∩ S_l|` from the plaintext sets.
    pub expected: BTreeMap<(u32, u32), usize>,
    pub violations: Vec<String>,
}

impl TypeOneAudit {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Audits the third party's view of one PRP-based group-PSI run. `sets` is
/// indexed by client index minus one and must be the sets the clients
/// submitted. The third party may learn the size of every pairwise
/// intersection and of every submission, and nothing else.
pub fn audit_leakage_type1(transcript: &Transcript, groups: &[GroupAssignment; 2], sets: &[ClientSet]) -> TypeOneAudit {
    let mut audit = TypeOneAudit::default();
    let v = &mut audit.violations;
    let members: Vec<u32> = groups.iter().flat_map(|g| g.members.iter().copied()).collect();
    if members.iter().any(|&c| c == 0 || c as usize > sets.len()) {
        v.push("group members outside the given sets".into());
        return audit;
    }
    let set_of = |c: u32| &sets[c as usize - 1];

    let keys: HashSet<[u8; KEY]> = transcript
        .records()
        .iter()
        .filter(|r| r.msg_type == MsgType::KeyTransfer)
        .filter_map(|r| <[u8; KEY]>::try_from(r.payload.as_slice()).ok())
        .collect();
    let scanner = PlaintextScanner::new(members.iter().flat_map(|&c| set_of(c)));

    let mut submissions: BTreeMap<u32, HashSet<[u8; BLOCK]>> = BTreeMap::new();
    for r in transcript.received_by(PartyId::TEE) {
        let leaked = scanner.hits(&r.payload);
        if leaked > 0 {
            v.push(format!("{leaked} plaintext encodings in {} from {}", r.msg_type.name(), r.from));
        }
        let key_bytes = find_all(&r.payload, &keys);
        if key_bytes > 0 {
            v.push(format!("{key_bytes} pairwise keys in {} from {}", r.msg_type.name(), r.from));
        }
        if is_control(r) {
            continue;
        }
        if r.msg_type != MsgType::EncSet || !r.from.is_client() || !members.contains(&r.from.index) {
            v.push(format!("unexpected {} from {} reached the third party", r.msg_type.name(), r.from));
            continue;
        }
        match read_items::<BLOCK>(&r.payload) {
            Ok(blocks) => {
                let n = blocks.len();
                let distinct: HashSet<[u8; BLOCK]> = blocks.into_iter().collect();
                if distinct.len() != n {
                    v.push(format!("submission of {} repeats ciphertexts", r.from));
                }
                if submissions.insert(r.from.index, distinct).is_some() {
                    v.push(format!("{} submitted twice", r.from));
                }
            }
            Err(e) => v.push(format!("submission of {}: {e}", r.from)),
        }
    }
    for (side, g) in groups.iter().enumerate() {
        let others = groups[1 - side].members.len();
        for &c in &g.members {
            match submissions.get(&c) {
                None => v.push(format!("client {c} submitted nothing")),
                Some(s) if s.len() != set_of(c).len() * others => v.push(format!(
                    "client {c} submitted {} ciphertexts for {} elements and {others} counterparts",
                    s.len(),
                    set_of(c).len()
                )),
                Some(_) => {}
            }
        }
    }
    for &i in &groups[0].members {
        let si: HashSet<&Element> = set_of(i).iter().collect();
        for &l in &groups[1].members {
            let truth = set_of(l).iter().filter(|e| si.contains(e)).count();
            audit.expected.insert((i, l), truth);
            if let (Some(a), Some(b)) = (submissions.get(&i), submissions.get(&l)) {
                let seen = a.intersection(b).count();
                audit.recomputed.insert((i, l), seen);
                if seen != truth {
                    v.push(format!("pair ({i}, {l}): third party sees {seen} common ciphertexts, sets share {truth}"));
                }
            }
        }
    }
    audit
}

/// Audits every cluster of a tree run with the PRP-based variant. The sets
/// each cluster works on are rebuilt by replaying the tree on plaintexts:
/// after each cluster, its group 0 members drop what group 1 holds.
pub fn audit_tree_type1(transcript: &Transcript, plan: &ClusterPlan, sets: &[ClientSet]) -> Vec<(u32, Cluster, TypeOneAudit)> {
    let mut current: Vec<ClientSet> = sets.to_vec();
    let mut out = Vec::new();
    for level in &plan.levels {
        for cluster in &level.clusters {
            let members: HashSet<u32> = cluster.members().collect();
            let touches = |p: PartyId| p.is_client() && members.contains(&p.index);
            let view = transcript.filtered(|r| r.phase.level == level.level && (touches(r.from) || touches(r.to)));
            let groups = [
                GroupAssignment::new(0, cluster.group0.clone()),
                GroupAssignment::new(1, cluster.group1.clone()),
            ];
            out.push((level.level, cluster.clone(), audit_leakage_type1(&view, &groups, &current)));
            let held: HashSet<Element> = cluster
                .group1
                .iter()
                .flat_map(|&l| current[l as usize - 1].iter().cloned())
                .collect();
            for &i in &cluster.group0 {
                current[i as usize - 1].retain(|e| !held.contains(e));
            }
        }
    }
    out
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct TypeTwoAudit {
    /// Blinded points received from each client, over all its requests.
    pub points_per_client: BTreeMap<u32, usize>,
    /// Messages other than empty DONE frames, by tree level.
    pub tee_messages_per_level: BTreeMap<u32, usize>,
    pub violations: Vec<String>,
}

impl TypeTwoAudit {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn tee_messages_above(&self, level: u32) -> usize {
        self.tee_messages_per_level.range(level + 1..).map(|(_, n)| n).sum()
    }
}

fn valid_point(bytes: &[u8; POINT]) -> bool {
    CompressedRistretto(*bytes).decompress().is_some()
}

/// Audits the third party's view of OPRF-based runs: each client sends one
/// request holding one valid group element per set element and nothing
/// else, except clients listed in `cached`, which send nothing. `sets` is
/// indexed by client index minus one.
pub fn audit_leakage_type2(transcript: &Transcript, sets: &[ClientSet], cached: &[u32]) -> TypeTwoAudit {
    let mut audit = TypeTwoAudit::default();
    let v = &mut audit.violations;
    let mut requests: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    let mut responses: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for r in transcript.records() {
        let (dir, counterpart) = if r.to.is_tee() {
            ("from", r.from)
        } else if r.from.is_tee() {
            ("to", r.to)
        } else {
            continue;
        };
        if is_control(r) && r.to.is_tee() {
            continue;
        }
        if r.to.is_tee() {
            *audit.tee_messages_per_level.entry(r.phase.level).or_insert(0) += 1;
        }
        let expected = if r.to.is_tee() { MsgType::OprfReq } else { MsgType::OprfResp };
        if r.msg_type != expected || !counterpart.is_client() {
            v.push(format!("unexpected {} {dir} {counterpart}", r.msg_type.name()));
            continue;
        }
        match read_items::<POINT>(&r.payload) {
            Ok(points) => {
                let bad = points.iter().filter(|p| !valid_point(p)).count();
                if bad > 0 {
                    v.push(format!("{bad} invalid group elements in {} {dir} {counterpart}", r.msg_type.name()));
                }
                let book = if r.to.is_tee() { &mut requests } else { &mut responses };
                book.entry(counterpart.index).or_default().push(points.len());
            }
            Err(e) => v.push(format!("{} {dir} {counterpart}: {e}", r.msg_type.name())),
        }
    }
    for c in requests.keys().chain(responses.keys()) {
        if *c == 0 || *c as usize > sets.len() {
            v.push(format!("messages for unknown client {c}"));
        }
    }
    for (i, set) in sets.iter().enumerate() {
        let c = i as u32 + 1;
        let req = requests.get(&c).cloned().unwrap_or_default();
        let resp = responses.get(&c).cloned().unwrap_or_default();
        audit.points_per_client.insert(c, req.iter().sum());
        if cached.contains(&c) {
            if !req.is_empty() {
                v.push(format!("client {c} has a warm cache but sent {} requests", req.len()));
            }
        } else if req.len() != 1 {
            v.push(format!("client {c} sent {} requests, expected one", req.len()));
        } else if req[0] != set.len() {
            v.push(format!("client {c} sent {} points for {} elements", req[0], set.len()));
        }
        if resp != req {
            v.push(format!("client {c}: request sizes {req:?}, response sizes {resp:?}"));
        }
    }
    audit
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::element::set_from_u32s;

    #[test]
    fn item_codec() {
        let items = [[1u8; 16], [2u8; 16]];
        let bytes = write_items(&items);
        assert_eq!(bytes.len(), 36);
        assert_eq!(read_items::<16>(&bytes).unwrap(), items.to_vec());
        assert!(read_items::<16>(&bytes[..35]).is_err());
        assert!(read_items::<16>(&[0, 0]).is_err());
    }

    #[test]
    fn scanner_finds_planted_encodings() {
        let set = set_from_u32s(&[0xdead_beef, 7]);
        let s = PlaintextScanner::new(&set);
        let mut payload = write_items(&[[0x11u8; 16], [0x22u8; 16]]);
        assert_eq!(s.hits(&payload), 0);
        let plain = canonical_block(&set[0]).unwrap();
        payload[4 + 16..].copy_from_slice(&plain);
        assert!(s.hits(&payload) >= 1);
        // tagged payload at a block boundary with the padding dropped
        let mut payload = write_items(&[[0x11u8; 16]]);
        payload[4..9].copy_from_slice(&plain[..5]);
        assert_eq!(s.hits(&payload), 1);
    }

    #[test]
    fn long_elements_are_scanned_raw() {
        let long = Element::from_bytes(b"a rather long element value".to_vec());
        let s = PlaintextScanner::new([&long]);
        let mut payload = vec![0u8; 64];
        payload[20..20 + long.len()].copy_from_slice(long.as_bytes());
        assert_eq!(s.hits(&payload), 1);
    }
}
