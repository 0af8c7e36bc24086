use rand_chacha::ChaCha20Rng;

use super::codec::{decode_blocks, decode_key, encode_blocks, encode_key};
use super::{extract_plaintext, tee_find_duplicates, Cluster, DupReport, EgpsiError, EgpsiOptions, IntersectionReport, KeyTriple, TripleTable};
use crate::crypto::{element_digest, encode_block, DigestFallback, Prp, PrpKey, BLOCK_LEN, PAYLOAD_CAPACITY};
use crate::element::Element;
use crate::netio::MsgType;
use crate::runtime::{Counter, PartyId, Phase, Runtime, Step};

fn encrypt_set(
    set: &[Element],
    counterparts: &[u32],
    keys: &[PrpKey],
    fallback: DigestFallback,
) -> Result<(TripleTable, Vec<u8>), EgpsiError> {
    let mut encoded: Vec<[u8; BLOCK_LEN]> = Vec::with_capacity(set.len());
    let mut table = TripleTable::with_capacity(set.len() * counterparts.len());
    for e in set {
        encoded.push(encode_block(e, fallback)?);
        if e.len() > PAYLOAD_CAPACITY {
            table.remember_digest(element_digest(e), e.clone());
        }
    }
    let mut submission = Vec::with_capacity(set.len() * counterparts.len());
    for (&l, key) in counterparts.iter().zip(keys) {
        for c in Prp::new(key).encrypt_encoded_batch(&encoded) {
            table.insert(KeyTriple {
                ciphertext: c,
                key: *key,
                counterpart_index: l,
            });
            submission.push(c);
        }
    }
    // sorted, so the position of a ciphertext says nothing about its origin
    submission.sort_unstable();
    Ok((table, encode_blocks(&submission)))
}

#[allow(clippy::too_many_arguments)]
pub(super) fn client(
    rt: &Runtime,
    opts: &EgpsiOptions,
    level: u32,
    cluster: &Cluster,
    side: u8,
    me: u32,
    set: &[Element],
    rng: &mut ChaCha20Rng,
) -> Result<IntersectionReport, EgpsiError> {
    let pid = PartyId::client(me);
    let counterparts = cluster.group(1 - side);

    let setup = Phase::new(level, Step::Setup);
    let keys: Vec<PrpKey> = if side == 0 {
        let keys: Vec<PrpKey> = rt.measure(pid, setup, || counterparts.iter().map(|_| PrpKey::random(rng)).collect())?;
        for (&l, k) in counterparts.iter().zip(&keys) {
            rt.send(pid, PartyId::client(l), MsgType::KeyTransfer, encode_key(k), setup)?;
        }
        keys
    } else {
        counterparts
            .iter()
            .map(|&i| decode_key(&rt.recv(pid, PartyId::client(i), MsgType::KeyTransfer)?))
            .collect::<Result<_, _>>()?
    };

    let encrypt = Phase::new(level, Step::Encrypt);
    let (table, submission) = rt.measure(pid, encrypt, || encrypt_set(set, counterparts, &keys, opts.fallback))??;
    rt.count(pid, Counter::PrpCalls, (set.len() * counterparts.len()) as u64);
    rt.send(pid, PartyId::TEE, MsgType::EncSet, submission, encrypt)?;

    let reply = rt.recv(pid, PartyId::TEE, MsgType::DupReport)?;
    let extract = Phase::new(level, Step::Extract);
    let (report, decrypted) = rt.measure(pid, extract, || {
        let report = DupReport {
            ciphertexts: decode_blocks(&reply)?,
        };
        let n = report.ciphertexts.len();
        extract_plaintext(me, counterparts, &report, &table)
            .map(|r| (r, n))
            .map_err(|e| match e {
                EgpsiError::UnknownCiphertext(c) => {
                    EgpsiError::ProtocolAbort(format!("third party reported foreign ciphertext {c:?}"))
                }
                other => other,
            })
    })??;
    rt.count(pid, Counter::PrpInverseCalls, decrypted as u64);
    Ok(report)
}

pub(super) fn tee(rt: &Runtime, level: u32, cluster: &Cluster) -> Result<(), EgpsiError> {
    let tee = PartyId::TEE;
    let members: Vec<u32> = cluster.members().collect();
    let payloads = members
        .iter()
        .map(|&c| rt.recv(tee, PartyId::client(c), MsgType::EncSet))
        .collect::<Result<Vec<_>, _>>()?;
    let phase = Phase::new(level, Step::TeeDedup);
    let replies = rt.measure(tee, phase, || {
        let subs = payloads
            .iter()
            .map(|p| decode_blocks(p))
            .collect::<Result<Vec<_>, _>>()?;
        Ok::<_, EgpsiError>(
            tee_find_duplicates(&subs)
                .iter()
                .map(|r| encode_blocks(&r.ciphertexts))
                .collect::<Vec<_>>(),
        )
    })??;
    for (&c, reply) in members.iter().zip(replies) {
        rt.send(tee, PartyId::client(c), MsgType::DupReport, reply, phase)?;
    }
    Ok(())
}
