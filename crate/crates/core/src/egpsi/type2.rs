use rustc_hash::FxHashSet;

use super::codec::{decode_points, decode_prf_outputs, encode_points, encode_prf_outputs};
use super::{ClientState, Cluster, EgpsiError, EgpsiOptions, Exchange, IntersectionReport, TeeState};
use crate::crypto::{oprf_blind_batch, oprf_eval_batch, oprf_unblind_batch, PrfOutput};
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
    state: &mut ClientState,
    request_oprf: bool,
) -> Result<Option<IntersectionReport>, EgpsiError> {
    let pid = PartyId::client(me);
    let counterparts = cluster.group(1 - side);
    let encrypt = Phase::new(level, Step::Encrypt);

    if request_oprf {
        let ClientState { rng, prf_cache } = state;
        let (missing, request, blinds) = rt.measure(pid, encrypt, || {
            let missing: Vec<Element> = set.iter().filter(|e| !prf_cache.contains_key(*e)).cloned().collect();
            let (points, blinds) = oprf_blind_batch(&missing, rng);
            (missing, encode_points(&points), blinds)
        })?;
        rt.count(pid, Counter::OprfRounds, missing.len() as u64);
        rt.send(pid, PartyId::TEE, MsgType::OprfReq, request, encrypt)?;
        let reply = rt.recv(pid, PartyId::TEE, MsgType::OprfResp)?;
        rt.measure(pid, encrypt, || {
            let evaluated = decode_points(&reply)?;
            let outputs = oprf_unblind_batch(&evaluated, &blinds)?;
            prf_cache.extend(missing.into_iter().zip(outputs));
            Ok::<_, EgpsiError>(())
        })??;
    }

    let cache = &state.prf_cache;
    let (mine, payload) = rt.measure(pid, encrypt, || {
        let mine = set
            .iter()
            .map(|e| {
                cache
                    .get(e)
                    .copied()
                    .ok_or_else(|| EgpsiError::ProtocolAbort(format!("client {me} has no PRF value for {e}")))
            })
            .collect::<Result<Vec<PrfOutput>, _>>()?;
        let payload = encode_prf_outputs(&mine);
        Ok::<_, EgpsiError>((mine, payload))
    })??;

    let two_sided = opts.exchange == Exchange::TwoSided;
    let exchange = Phase::new(level, Step::Exchange);
    if side == 1 || two_sided {
        for &l in counterparts {
            rt.send(pid, PartyId::client(l), MsgType::PrfSet, payload.clone(), exchange)?;
        }
    }
    if side == 1 && !two_sided {
        return Ok(None);
    }

    let extract = Phase::new(level, Step::Extract);
    let mut report = IntersectionReport::empty(me, counterparts);
    for (slot, &l) in counterparts.iter().enumerate() {
        let theirs = rt.recv(pid, PartyId::client(l), MsgType::PrfSet)?;
        report.per_counterpart[slot] = rt.measure(pid, extract, || {
            let theirs: FxHashSet<PrfOutput> = decode_prf_outputs(&theirs)?.into_iter().collect();
            // the i-th PRF value belongs to the i-th element
            let mut shared: Vec<Element> = mine
                .iter()
                .enumerate()
                .filter(|(_, f)| theirs.contains(*f))
                .map(|(i, _)| set[i].clone())
                .collect();
            shared.sort_unstable();
            Ok::<_, EgpsiError>(shared)
        })??;
    }
    Ok(Some(report))
}

pub(super) fn tee(
    rt: &Runtime,
    level: u32,
    cluster: &Cluster,
    state: &mut TeeState,
    requests: &dyn Fn(u32) -> bool,
) -> Result<(), EgpsiError> {
    let tee = PartyId::TEE;
    let phase = Phase::new(level, Step::Encrypt);
    let mut key = None;
    for c in cluster.members().filter(|&c| requests(c)) {
        let key = match key {
            Some(k) => k,
            None => *key.insert(state.oprf_key(rt, level)?),
        };
        let from = PartyId::client(c);
        let request = rt.recv(tee, from, MsgType::OprfReq)?;
        let reply = rt.measure(tee, phase, || {
            let points = decode_points(&request)?;
            Ok::<_, EgpsiError>(encode_points(&oprf_eval_batch(&key, &points)?))
        })??;
        rt.send(tee, from, MsgType::OprfResp, reply, phase)?;
    }
    Ok(())
}
