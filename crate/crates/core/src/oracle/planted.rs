//! Tampered copies of honest transcripts, each breaking one thing an audit
//! must catch.

use std::collections::HashMap;

use super::audit::{canonical_block, read_items, write_items};
use super::{Transcript, TranscriptRecord};
use crate::element::ClientSet;
use crate::netio::MsgType;
use crate::runtime::PartyId;

fn enc_set_positions(t: &Transcript) -> Vec<usize> {
    t.records()
        .iter()
        .enumerate()
        .filter(|(_, r)| r.to.is_tee() && r.msg_type == MsgType::EncSet)
        .map(|(i, _)| i)
        .collect()
}

fn rewrite_blocks(records: &mut [TranscriptRecord], at: usize, f: impl FnOnce(&mut Vec<[u8; 16]>)) -> Option<()> {
    let mut blocks = read_items::<16>(&records[at].payload).ok()?;
    f(&mut blocks);
    records[at].payload = write_items(&blocks);
    Some(())
}

/// Puts the plaintext block of one of the sender's elements in place of
/// its first ciphertext.
pub fn plaintext_leak(t: &Transcript, sets: &[ClientSet]) -> Option<Transcript> {
    let at = *enc_set_positions(t).first()?;
    let mut records = t.clone().into_records();
    let sender = records[at].from.index as usize;
    let plain = canonical_block(sets.get(sender.checked_sub(1)?)?.first()?)?;
    rewrite_blocks(&mut records, at, |b| {
        if let Some(first) = b.first_mut() {
            *first = plain;
        }
    })?;
    Some(records.into_iter().collect())
}

/// Embeds a pairwise key inside a submission to the third party.
pub fn key_to_tee(t: &Transcript) -> Option<Transcript> {
    let key: [u8; 16] = t
        .records()
        .iter()
        .find(|r| r.msg_type == MsgType::KeyTransfer)?
        .payload
        .as_slice()
        .try_into()
        .ok()?;
    let at = *enc_set_positions(t).first()?;
    let mut records = t.clone().into_records();
    rewrite_blocks(&mut records, at, |b| b.push(key))?;
    Some(records.into_iter().collect())
}

/// Alters one ciphertext that two submissions have in common, so the
/// cardinality the third party can recompute no longer matches the sets.
pub fn cardinality_mismatch(t: &Transcript) -> Option<Transcript> {
    let positions = enc_set_positions(t);
    let mut first_seen: HashMap<[u8; 16], usize> = HashMap::new();
    let mut target = None;
    'outer: for &at in &positions {
        for b in read_items::<16>(&t.records()[at].payload).ok()? {
            match first_seen.get(&b) {
                Some(&prev) if prev != at => {
                    target = Some((prev, b));
                    break 'outer;
                }
                Some(_) => {}
                None => {
                    first_seen.insert(b, at);
                }
            }
        }
    }
    let (at, block) = target?;
    let mut records = t.clone().into_records();
    rewrite_blocks(&mut records, at, |bs| {
        for b in bs.iter_mut().filter(|b| **b == block) {
            b[0] ^= 0xff;
        }
    })?;
    Some(records.into_iter().collect())
}

fn first_request(t: &Transcript) -> Option<usize> {
    t.records()
        .iter()
        .position(|r| r.to.is_tee() && r.msg_type == MsgType::OprfReq)
}

/// Sends a second copy of the first OPRF request.
pub fn extra_message(t: &Transcript) -> Option<Transcript> {
    let at = first_request(t)?;
    let mut records = t.clone().into_records();
    let dup = records[at].clone();
    records.insert(at + 1, dup);
    Some(records.into_iter().collect())
}

/// Drops the last point of the first OPRF request.
pub fn count_mismatch(t: &Transcript) -> Option<Transcript> {
    let at = first_request(t)?;
    let mut records = t.clone().into_records();
    let mut points = read_items::<32>(&records[at].payload).ok()?;
    points.pop()?;
    records[at].payload = write_items(&points);
    Some(records.into_iter().collect())
}

/// Replaces the first point of the first OPRF request with bytes that do
/// not decode to a group element.
pub fn invalid_point(t: &Transcript) -> Option<Transcript> {
    let at = first_request(t)?;
    let mut records = t.clone().into_records();
    let mut points = read_items::<32>(&records[at].payload).ok()?;
    *points.first_mut()? = [0xff; 32];
    records[at].payload = write_items(&points);
    Some(records.into_iter().collect())
}

/// A message the third party should never see: a client's set in the clear.
pub fn stray_plaintext_message(t: &Transcript, sets: &[ClientSet]) -> Option<Transcript> {
    let set = sets.first()?;
    let mut records = t.clone().into_records();
    let phase = records.first()?.phase;
    let payload = write_items(&set.iter().filter_map(canonical_block).collect::<Vec<_>>());
    records.push(TranscriptRecord {
        from: PartyId::client(1),
        to: PartyId::TEE,
        msg_type: MsgType::PrfSet,
        payload,
        phase,
    });
    Some(records.into_iter().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::egpsi::{egpsi1_run, egpsi2_run, EgpsiOptions, GroupAssignment, Variant};
    use crate::element::set_from_u32s;
    use crate::epmpd::{epmpd_run, EpmpdOptions};
    use crate::oracle::{audit_leakage_type1, audit_leakage_type2, audit_tree_type1};
    use crate::runtime::Runtime;

    fn groups() -> [GroupAssignment; 2] {
        [GroupAssignment::new(0, [1, 2]), GroupAssignment::new(1, [3, 4])]
    }

    fn sets() -> Vec<ClientSet> {
        vec![
            set_from_u32s(&[1, 2, 3, 4]),
            set_from_u32s(&[10, 11, 12]),
            set_from_u32s(&[2, 3, 10, 99]),
            set_from_u32s(&[4, 12, 50]),
        ]
    }

    fn capture(run: impl FnOnce(&Runtime)) -> Transcript {
        let rt = Runtime::builder().capture_transcript(true).build();
        rt.register_clients_and_tee(8).unwrap();
        run(&rt);
        rt.transcript()
    }

    fn type1_transcript() -> Transcript {
        capture(|rt| {
            egpsi1_run(&groups(), &sets(), rt, &EgpsiOptions::default()).unwrap();
        })
    }

    #[test]
    fn honest_type1_is_clean() {
        let a = audit_leakage_type1(&type1_transcript(), &groups(), &sets());
        assert!(a.is_clean(), "{:?}", a.violations);
        assert_eq!(a.recomputed[&(1, 3)], 2);
        assert_eq!(a.recomputed[&(1, 4)], 1);
        assert_eq!(a.recomputed[&(2, 3)], 1);
        assert_eq!(a.recomputed[&(2, 4)], 1);
        assert_eq!(a.recomputed, a.expected);
    }

    #[test]
    fn disjoint_type1_sees_zero() {
        let disjoint: Vec<ClientSet> = (0..4u32).map(|i| set_from_u32s(&[i * 10, i * 10 + 1])).collect();
        let t = capture(|rt| {
            egpsi1_run(&groups(), &disjoint, rt, &EgpsiOptions::default()).unwrap();
        });
        let a = audit_leakage_type1(&t, &groups(), &disjoint);
        assert!(a.is_clean(), "{:?}", a.violations);
        assert!(a.recomputed.values().all(|&n| n == 0));
    }

    #[test]
    fn type1_fixtures_are_flagged() {
        let t = type1_transcript();
        let leak = audit_leakage_type1(&plaintext_leak(&t, &sets()).unwrap(), &groups(), &sets());
        assert!(leak.violations.iter().any(|v| v.contains("plaintext")), "{:?}", leak.violations);
        let key = audit_leakage_type1(&key_to_tee(&t).unwrap(), &groups(), &sets());
        assert!(key.violations.iter().any(|v| v.contains("keys")), "{:?}", key.violations);
        let card = audit_leakage_type1(&cardinality_mismatch(&t).unwrap(), &groups(), &sets());
        assert!(card.violations.iter().any(|v| v.contains("common ciphertexts")), "{:?}", card.violations);
        let stray = audit_leakage_type1(&stray_plaintext_message(&t, &sets()).unwrap(), &groups(), &sets());
        assert!(stray.violations.iter().any(|v| v.contains("unexpected")));
    }

    fn type2_transcript() -> Transcript {
        capture(|rt| {
            egpsi2_run(&groups(), &sets(), rt, &EgpsiOptions::default(), None).unwrap();
        })
    }

    #[test]
    fn honest_type2_is_clean() {
        let a = audit_leakage_type2(&type2_transcript(), &sets(), &[]);
        assert!(a.is_clean(), "{:?}", a.violations);
        for (i, s) in sets().iter().enumerate() {
            assert_eq!(a.points_per_client[&(i as u32 + 1)], s.len());
        }
    }

    #[test]
    fn type2_fixtures_are_flagged() {
        let t = type2_transcript();
        for (name, bad) in [
            ("extra", extra_message(&t).unwrap()),
            ("count", count_mismatch(&t).unwrap()),
            ("invalid", invalid_point(&t).unwrap()),
            ("stray", stray_plaintext_message(&t, &sets()).unwrap()),
        ] {
            assert!(!audit_leakage_type2(&bad, &sets(), &[]).is_clean(), "{name}");
        }
        assert!(audit_leakage_type2(&invalid_point(&t).unwrap(), &sets(), &[])
            .violations
            .iter()
            .any(|v| v.contains("invalid")));
    }

    #[test]
    fn whole_tree_type1_is_clean() {
        let sets: Vec<ClientSet> = (0..5u32).map(|i| set_from_u32s(&[i, i + 1, i + 2, 40 + i % 2])).collect();
        let t = capture(|rt| {
            epmpd_run(&sets, Variant::I, rt, &EpmpdOptions::default()).unwrap();
        });
        let plan = crate::epmpd::build_cluster_plan(5).unwrap();
        let audits = audit_tree_type1(&t, &plan, &sets);
        assert_eq!(audits.len(), 4);
        for (level, cluster, a) in &audits {
            assert!(a.is_clean(), "level {level} {cluster:?}: {:?}", a.violations);
        }
        // level 1 compares {1} with {2}: they share 1 and 2
        assert_eq!(audits[0].2.recomputed[&(1, 2)], 2);
    }

    #[test]
    fn warm_cache_leaves_upper_levels_silent() {
        let sets: Vec<ClientSet> = (0..8u32).map(|i| set_from_u32s(&[i, i + 1, 100 + i])).collect();
        let t = capture(|rt| {
            epmpd_run(&sets, Variant::II, rt, &EpmpdOptions::default()).unwrap();
        });
        let a = audit_leakage_type2(&t, &sets, &[]);
        assert!(a.is_clean(), "{:?}", a.violations);
        assert_eq!(a.tee_messages_above(1), 0);
        assert_eq!(a.tee_messages_per_level[&1], 8);
    }
}
