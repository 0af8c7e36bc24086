use rustc_hash::FxHashMap;

use super::codec::{decode_blocks, encode_blocks};
use super::{Cluster, EgpsiError, EgpsiOptions, IntersectionReport};
use crate::crypto::{hash_derived_key, Prp, PrpBlock};
use crate::element::Element;
use crate::netio::MsgType;
use crate::runtime::{Counter, PartyId, Phase, Runtime, Step};

#[allow(clippy::too_many_arguments)]
pub(super) fn client(
    rt: &Runtime,
    opts: &EgpsiOptions,
    level: u32,
    cluster: &Cluster,
    side: u8,
    me: u32,
    set: &[Element],
) -> Result<Option<IntersectionReport>, EgpsiError> {
    let pid = PartyId::client(me);
    let counterparts = cluster.group(1 - side);
    let encrypt = Phase::new(level, Step::Encrypt);
    let blocks = rt.measure(pid, encrypt, || {
        set.iter()
            .map(|e| Prp::new(&hash_derived_key(e)).encrypt(e, opts.fallback))
            .collect::<Result<Vec<PrpBlock>, _>>()
    })??;
    rt.count(pid, Counter::HashCalls, set.len() as u64);
    rt.count(pid, Counter::PrpCalls, set.len() as u64);

    if side == 1 {
        let exchange = Phase::new(level, Step::Exchange);
        let payload = rt.measure(pid, encrypt, || {
            let mut sorted = blocks;
            sorted.sort_unstable();
            encode_blocks(&sorted)
        })?;
        for &i in counterparts {
            rt.send(pid, PartyId::client(i), MsgType::SetBroadcast, payload.clone(), exchange)?;
        }
        return Ok(None);
    }

    let extract = Phase::new(level, Step::Extract);
    let own: FxHashMap<PrpBlock, usize> = rt.measure(pid, extract, || {
        blocks.iter().enumerate().map(|(i, b)| (*b, i)).collect()
    })?;
    let mut report = IntersectionReport::empty(me, counterparts);
    for (slot, &l) in counterparts.iter().enumerate() {
        let theirs = rt.recv(pid, PartyId::client(l), MsgType::SetBroadcast)?;
        report.per_counterpart[slot] = rt.measure(pid, extract, || {
            let mut shared: Vec<Element> = decode_blocks(&theirs)?
                .iter()
                .filter_map(|b| own.get(b).map(|&i| set[i].clone()))
                .collect();
            shared.sort_unstable();
            Ok::<_, EgpsiError>(shared)
        })??;
    }
    Ok(Some(report))
}
