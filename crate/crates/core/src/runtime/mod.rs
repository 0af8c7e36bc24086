//! Multi-party execution environment.
//!
//! A [`Runtime`] owns the party registry, routes payloads through a
//! [`Transport`], and keeps the books: compute time per party and phase,
//! bytes per send, and primitive-call counters. Parties are expected to run
//! their local computation inside [`Runtime::measure`] and to send and
//! receive outside of it. Measured regions are serialized process-wide so
//! that per-party timings stay free of contention, which mirrors running
//! all parties one after another on the same machine.
//!
//! [`Runtime::finalize`] turns the books into a [`TimingReport`] whose
//! wall-clock estimate assumes the clients of one phase ran side by side:
//! each phase contributes its slowest client, the third party, and the
//! longest sender's transfer time.

mod bus;
mod party;
mod profile;

use std::cell::Cell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bus::{InProcBus, Mailbox, Transport};
pub use party::{party_rng, PartyId, PartyKind};
pub use profile::{comm_time, NetProfile, ProfileLabel};

use crate::netio::{MsgType, HEADER_LEN};
use crate::oracle::{Transcript, TranscriptRecord};

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error("party {0} is already registered")]
    DuplicateParty(PartyId),
    #[error("party {0} is not registered")]
    UnknownParty(PartyId),
    #[error("client indices start at 1")]
    InvalidIndex,
    #[error("measure() called inside another measured region")]
    NestedMeasure,
    #[error("run is incomplete: {pending} undelivered messages, {active} active measurements")]
    IncompleteRun { pending: usize, active: usize },
    #[error("{me} expected {expected:?} from {from}, got {got:?}")]
    UnexpectedMessage {
        me: PartyId,
        from: PartyId,
        expected: MsgType,
        got: MsgType,
    },
    #[error("{me} timed out waiting for {from}")]
    Timeout { me: PartyId, from: PartyId },
    #[error("run aborted")]
    Aborted,
    #[error(transparent)]
    Net(#[from] crate::netio::NetError),
}

/// Protocol step names, shared by all variants.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Step {
    Setup,
    Encrypt,
    TeeDedup,
    Exchange,
    Extract,
}

impl Step {
    pub const ALL: [Step; 5] = [Step::Setup, Step::Encrypt, Step::TeeDedup, Step::Exchange, Step::Extract];

    pub fn name(&self) -> &'static str {
        match self {
            Step::Setup => "setup",
            Step::Encrypt => "encrypt",
            Step::TeeDedup => "tee-dedup",
            Step::Exchange => "exchange",
            Step::Extract => "extract",
        }
    }

    pub(crate) fn code(&self) -> u8 {
        Step::ALL.iter().position(|s| s == self).unwrap() as u8
    }

    pub(crate) fn from_code(code: u8) -> Option<Step> {
        Step::ALL.get(code as usize).copied()
    }
}

/// Accounting bucket. Level 0 is used by stand-alone group PSI runs; tree
/// runs use the tree level.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
pub struct Phase {
    pub level: u32,
    pub step: Step,
}

impl Phase {
    pub fn new(level: u32, step: Step) -> Self {
        Phase { level, step }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.level == 0 {
            f.write_str(self.step.name())
        } else {
            write!(f, "L{}/{}", self.level, self.step.name())
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Counter {
    PrpCalls,
    PrpInverseCalls,
    OprfRounds,
    HashCalls,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Default, Serialize, Deserialize)]
pub struct Counters {
    pub prp_calls: u64,
    pub prp_inverse_calls: u64,
    pub oprf_rounds: u64,
    pub hash_calls: u64,
}

impl Counters {
    fn add(&mut self, counter: Counter, n: u64) {
        match counter {
            Counter::PrpCalls => self.prp_calls += n,
            Counter::PrpInverseCalls => self.prp_inverse_calls += n,
            Counter::OprfRounds => self.oprf_rounds += n,
            Counter::HashCalls => self.hash_calls += n,
        }
    }

    fn merge(&mut self, other: &Counters) {
        self.prp_calls += other.prp_calls;
        self.prp_inverse_calls += other.prp_inverse_calls;
        self.oprf_rounds += other.oprf_rounds;
        self.hash_calls += other.hash_calls;
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct CounterReport {
    pub per_party: BTreeMap<PartyId, Counters>,
}

impl CounterReport {
    pub fn get(&self, party: PartyId) -> Counters {
        self.per_party.get(&party).copied().unwrap_or_default()
    }

    pub fn clients_total(&self) -> Counters {
        let mut total = Counters::default();
        for (p, c) in &self.per_party {
            if p.is_client() {
                total.merge(c);
            }
        }
        total
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PhaseTiming {
    pub phase: Phase,
    pub label: String,
    pub client_max_s: f64,
    pub tee_s: f64,
    pub comm_s: f64,
    pub bytes: u64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct TimingReport {
    pub per_party_compute: BTreeMap<PartyId, f64>,
    pub per_party_bytes_sent: BTreeMap<PartyId, u64>,
    pub wall_clock_estimate: f64,
    pub phases: Vec<PhaseTiming>,
}

impl TimingReport {
    fn clients(&self) -> impl Iterator<Item = f64> + '_ {
        self.per_party_compute
            .iter()
            .filter(|(p, _)| p.is_client())
            .map(|(_, s)| *s)
    }

    pub fn client_avg_s(&self) -> f64 {
        let n = self.clients().count();
        if n == 0 {
            0.0
        } else {
            self.clients().sum::<f64>() / n as f64
        }
    }

    pub fn client_max_s(&self) -> f64 {
        self.clients().fold(0.0, f64::max)
    }

    pub fn tee_s(&self) -> f64 {
        self.per_party_compute.get(&PartyId::TEE).copied().unwrap_or(0.0)
    }

    pub fn bytes_clients(&self) -> u64 {
        self.per_party_bytes_sent
            .iter()
            .filter(|(p, _)| p.is_client())
            .map(|(_, b)| b)
            .sum()
    }

    pub fn bytes_tee(&self) -> u64 {
        self.per_party_bytes_sent.get(&PartyId::TEE).copied().unwrap_or(0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Receipt {
    pub seq: u64,
    pub bytes: u64,
    pub measured_s: Option<f64>,
}

#[derive(Clone, Debug)]
struct SendRecord {
    from: PartyId,
    phase: Phase,
    bytes: u64,
    measured_s: Option<f64>,
}

#[derive(Default)]
struct Books {
    parties: BTreeSet<PartyId>,
    compute: BTreeMap<(PartyId, Phase), f64>,
    sends: Vec<SendRecord>,
    counters: BTreeMap<PartyId, Counters>,
}

static COMPUTE_SLOT: Mutex<()> = Mutex::new(());

thread_local! {
    static IN_MEASURE: Cell<bool> = const { Cell::new(false) };
}

struct Inner {
    transport: Arc<dyn Transport>,
    books: Mutex<Books>,
    transcript: Option<Mutex<Transcript>>,
    active_measures: AtomicUsize,
    recv_timeout: Duration,
}

/// Shared handle; clones refer to the same run.
#[derive(Clone)]
pub struct Runtime {
    inner: Arc<Inner>,
}

pub const DEFAULT_RECV_TIMEOUT: Duration = Duration::from_secs(600);

impl Runtime {
    /// In-process runtime without transcript capture.
    pub fn in_process() -> Self {
        RuntimeBuilder::new().build()
    }

    pub fn builder() -> RuntimeBuilder {
        RuntimeBuilder::new()
    }

    pub fn register_party(&self, kind: PartyKind, index: u32) -> Result<PartyId, RuntimeError> {
        let id = match kind {
            PartyKind::Tee => PartyId::TEE,
            PartyKind::Client if index == 0 => return Err(RuntimeError::InvalidIndex),
            PartyKind::Client => PartyId::client(index),
        };
        {
            let mut books = self.inner.books.lock().unwrap();
            if !books.parties.insert(id) {
                return Err(RuntimeError::DuplicateParty(id));
            }
        }
        self.inner.transport.attach(id)?;
        Ok(id)
    }

    /// Registers the third party and clients `1..=count`.
    pub fn register_clients_and_tee(&self, count: u32) -> Result<Vec<PartyId>, RuntimeError> {
        self.register_party(PartyKind::Tee, 0)?;
        (1..=count).map(|i| self.register_party(PartyKind::Client, i)).collect()
    }

    pub fn is_registered(&self, party: PartyId) -> bool {
        self.inner.books.lock().unwrap().parties.contains(&party)
    }

    pub fn send(
        &self,
        from: PartyId,
        to: PartyId,
        msg_type: MsgType,
        payload: Vec<u8>,
        phase: Phase,
    ) -> Result<Receipt, RuntimeError> {
        for p in [from, to] {
            if !self.is_registered(p) {
                return Err(RuntimeError::UnknownParty(p));
            }
        }
        let bytes = (HEADER_LEN + payload.len()) as u64;
        if let Some(t) = &self.inner.transcript {
            t.lock().unwrap().push(TranscriptRecord {
                from,
                to,
                msg_type,
                payload: payload.clone(),
                phase,
            });
        }
        let measured_s = self.inner.transport.deliver(from, to, msg_type, payload)?;
        let mut books = self.inner.books.lock().unwrap();
        let seq = books.sends.len() as u64;
        books.sends.push(SendRecord {
            from,
            phase,
            bytes,
            measured_s,
        });
        Ok(Receipt { seq, bytes, measured_s })
    }

    /// Blocks until the next message from `from` arrives.
    pub fn recv(&self, me: PartyId, from: PartyId, expected: MsgType) -> Result<Vec<u8>, RuntimeError> {
        let (got, payload) = self.inner.transport.receive(me, from, self.inner.recv_timeout)?;
        if got != expected {
            return Err(RuntimeError::UnexpectedMessage {
                me,
                from,
                expected,
                got,
            });
        }
        Ok(payload)
    }

    /// Runs `work`, charging its elapsed time to `(party, phase)`.
    pub fn measure<T>(&self, party: PartyId, phase: Phase, work: impl FnOnce() -> T) -> Result<T, RuntimeError> {
        if IN_MEASURE.with(|m| m.replace(true)) {
            return Err(RuntimeError::NestedMeasure);
        }
        struct Reset;
        impl Drop for Reset {
            fn drop(&mut self) {
                IN_MEASURE.with(|m| m.set(false));
            }
        }
        let _reset = Reset;
        self.inner.active_measures.fetch_add(1, Ordering::SeqCst);
        let slot = COMPUTE_SLOT.lock().unwrap_or_else(|e| e.into_inner());
        let start = Instant::now();
        let out = work();
        let elapsed = start.elapsed();
        drop(slot);
        self.charge_compute(party, phase, elapsed);
        self.inner.active_measures.fetch_sub(1, Ordering::SeqCst);
        Ok(out)
    }

    /// Attributes compute time directly, for replayed or externally timed work.
    pub fn charge_compute(&self, party: PartyId, phase: Phase, elapsed: Duration) {
        let mut books = self.inner.books.lock().unwrap();
        *books.compute.entry((party, phase)).or_insert(0.0) += elapsed.as_secs_f64();
    }

    pub fn count(&self, party: PartyId, counter: Counter, n: u64) {
        let mut books = self.inner.books.lock().unwrap();
        books.counters.entry(party).or_default().add(counter, n);
    }

    pub fn counters(&self) -> CounterReport {
        CounterReport {
            per_party: self.inner.books.lock().unwrap().counters.clone(),
        }
    }

    /// Copy of the captured transcript; empty when capture is off.
    pub fn transcript(&self) -> Transcript {
        match &self.inner.transcript {
            Some(t) => t.lock().unwrap().clone(),
            None => Transcript::default(),
        }
    }

    pub fn abort(&self) {
        self.inner.transport.abort();
    }

    pub fn finalize(&self, profile: &NetProfile) -> Result<(TimingReport, CounterReport), RuntimeError> {
        let pending = self.inner.transport.pending();
        let active = self.inner.active_measures.load(Ordering::SeqCst);
        if pending > 0 || active > 0 {
            return Err(RuntimeError::IncompleteRun { pending, active });
        }
        Ok((self.timing(profile), self.counters()))
    }

    /// Timing summary of everything recorded so far, without the
    /// completeness check.
    pub fn timing(&self, profile: &NetProfile) -> TimingReport {
        let books = self.inner.books.lock().unwrap();
        let mut report = TimingReport::default();
        let mut phases: BTreeSet<Phase> = BTreeSet::new();

        for p in &books.parties {
            report.per_party_compute.insert(*p, 0.0);
            report.per_party_bytes_sent.insert(*p, 0);
        }
        for ((party, phase), secs) in &books.compute {
            *report.per_party_compute.entry(*party).or_insert(0.0) += secs;
            phases.insert(*phase);
        }
        // per phase: sender -> (seconds, bytes)
        let mut comm: BTreeMap<Phase, BTreeMap<PartyId, (f64, u64)>> = BTreeMap::new();
        for s in &books.sends {
            *report.per_party_bytes_sent.entry(s.from).or_insert(0) += s.bytes;
            let t = s.measured_s.unwrap_or_else(|| comm_time(s.bytes, profile));
            let e = comm.entry(s.phase).or_default().entry(s.from).or_insert((0.0, 0));
            e.0 += t;
            e.1 += s.bytes;
            phases.insert(s.phase);
        }

        for phase in phases {
            let mut client_max_s: f64 = 0.0;
            let mut tee_s = 0.0;
            for ((party, ph), secs) in &books.compute {
                if *ph != phase {
                    continue;
                }
                if party.is_tee() {
                    tee_s += secs;
                } else {
                    client_max_s = client_max_s.max(*secs);
                }
            }
            let senders = comm.get(&phase);
            let comm_s = senders
                .map(|m| m.values().map(|(t, _)| *t).fold(0.0, f64::max))
                .unwrap_or(0.0);
            let bytes = senders.map(|m| m.values().map(|(_, b)| *b).sum()).unwrap_or(0);
            report.wall_clock_estimate += client_max_s + tee_s + comm_s;
            report.phases.push(PhaseTiming {
                phase,
                label: phase.to_string(),
                client_max_s,
                tee_s,
                comm_s,
                bytes,
            });
        }
        report
    }
}

pub struct RuntimeBuilder {
    transport: Option<Arc<dyn Transport>>,
    capture_transcript: bool,
    recv_timeout: Duration,
}

impl RuntimeBuilder {
    fn new() -> Self {
        RuntimeBuilder {
            transport: None,
            capture_transcript: false,
            recv_timeout: DEFAULT_RECV_TIMEOUT,
        }
    }

    pub fn transport(mut self, transport: Arc<dyn Transport>) -> Self {
        self.transport = Some(transport);
        self
    }

    pub fn capture_transcript(mut self, on: bool) -> Self {
        self.capture_transcript = on;
        self
    }

    pub fn recv_timeout(mut self, timeout: Duration) -> Self {
        self.recv_timeout = timeout;
        self
    }

    pub fn build(self) -> Runtime {
        Runtime {
            inner: Arc::new(Inner {
                transport: self.transport.unwrap_or_else(|| Arc::new(InProcBus::new())),
                books: Mutex::new(Books::default()),
                transcript: self.capture_transcript.then(|| Mutex::new(Transcript::default())),
                active_measures: AtomicUsize::new(0),
                recv_timeout: self.recv_timeout,
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const P: Phase = Phase {
        level: 0,
        step: Step::Encrypt,
    };

    #[test]
    fn registration() {
        let rt = Runtime::in_process();
        let c1 = rt.register_party(PartyKind::Client, 1).unwrap();
        assert_eq!(c1, PartyId::client(1));
        assert!(matches!(
            rt.register_party(PartyKind::Client, 1),
            Err(RuntimeError::DuplicateParty(_))
        ));
        rt.register_party(PartyKind::Tee, 0).unwrap();
        assert!(matches!(
            rt.register_party(PartyKind::Tee, 7),
            Err(RuntimeError::DuplicateParty(_))
        ));
        assert!(matches!(
            rt.register_party(PartyKind::Client, 0),
            Err(RuntimeError::InvalidIndex)
        ));
    }

    #[test]
    fn send_roundtrip_and_fifo() {
        let rt = Runtime::in_process();
        let ids = rt.register_clients_and_tee(2).unwrap();
        let (a, b) = (ids[0], ids[1]);
        rt.send(a, b, MsgType::EncSet, vec![1, 2, 3], P).unwrap();
        assert_eq!(rt.recv(b, a, MsgType::EncSet).unwrap(), vec![1, 2, 3]);
        for i in 0..1000u32 {
            rt.send(a, b, MsgType::PrfSet, i.to_le_bytes().to_vec(), P).unwrap();
        }
        for i in 0..1000u32 {
            assert_eq!(rt.recv(b, a, MsgType::PrfSet).unwrap(), i.to_le_bytes().to_vec());
        }
    }

    #[test]
    fn unknown_destination() {
        let rt = Runtime::in_process();
        let ids = rt.register_clients_and_tee(1).unwrap();
        let err = rt.send(ids[0], PartyId::client(9), MsgType::Done, vec![], P).unwrap_err();
        assert!(matches!(err, RuntimeError::UnknownParty(p) if p == PartyId::client(9)));
    }

    #[test]
    fn unexpected_type() {
        let rt = Runtime::in_process();
        let ids = rt.register_clients_and_tee(2).unwrap();
        rt.send(ids[0], ids[1], MsgType::Done, vec![], P).unwrap();
        assert!(matches!(
            rt.recv(ids[1], ids[0], MsgType::EncSet),
            Err(RuntimeError::UnexpectedMessage { .. })
        ));
    }

    #[test]
    fn measure_sums_and_rejects_nesting() {
        let rt = Runtime::in_process();
        let c = rt.register_party(PartyKind::Client, 1).unwrap();
        let a = rt.measure(c, P, || std::thread::sleep(Duration::from_millis(20))).unwrap();
        let _ = a;
        rt.measure(c, P, || std::thread::sleep(Duration::from_millis(20))).unwrap();
        let t = rt.timing(&NetProfile::ideal());
        let total = t.per_party_compute[&c];
        assert!(total >= 0.04 && total < 0.5, "{total}");

        let rt0 = Runtime::in_process();
        let c0 = rt0.register_party(PartyKind::Client, 1).unwrap();
        rt0.measure(c0, P, || ()).unwrap();
        assert!(rt0.timing(&NetProfile::ideal()).per_party_compute[&c0] < 0.001);

        let nested = rt.measure(c, P, || rt.measure(c, P, || ()));
        assert!(matches!(nested, Ok(Err(RuntimeError::NestedMeasure))));
        // the flag is cleared afterwards
        assert!(rt.measure(c, P, || ()).is_ok());
    }

    #[test]
    fn finalize_wall_clock_model() {
        let rt = Runtime::in_process();
        rt.register_clients_and_tee(2).unwrap();
        rt.charge_compute(PartyId::client(1), P, Duration::from_secs(2));
        rt.charge_compute(PartyId::client(2), P, Duration::from_secs(3));
        rt.charge_compute(PartyId::TEE, P, Duration::from_secs(1));
        let (t, _) = rt.finalize(&NetProfile::ideal()).unwrap();
        assert!((t.wall_clock_estimate - 4.0).abs() < 1e-9);
        assert_eq!(t.phases.len(), 1);
        assert_eq!(t.phases[0].label, "encrypt");
    }

    #[test]
    fn empty_run() {
        let rt = Runtime::in_process();
        let (t, c) = rt.finalize(&NetProfile::wan()).unwrap();
        assert_eq!(t.wall_clock_estimate, 0.0);
        assert!(t.phases.is_empty());
        assert!(c.per_party.is_empty());
    }

    #[test]
    fn incomplete_run() {
        let rt = Runtime::in_process();
        let ids = rt.register_clients_and_tee(2).unwrap();
        rt.send(ids[0], ids[1], MsgType::Done, vec![], P).unwrap();
        assert!(matches!(
            rt.finalize(&NetProfile::ideal()),
            Err(RuntimeError::IncompleteRun { pending: 1, .. })
        ));
    }

    #[test]
    fn profiles_are_monotone_and_accounting_balances() {
        let rt = Runtime::in_process();
        let ids = rt.register_clients_and_tee(3).unwrap();
        for (i, &from) in ids.iter().enumerate() {
            for &to in &ids {
                if from != to {
                    let phase = Phase::new(1 + (i as u32 % 2), Step::Exchange);
                    rt.send(from, to, MsgType::PrfSet, vec![0; 100 * (i + 1)], phase).unwrap();
                    rt.recv(to, from, MsgType::PrfSet).unwrap();
                }
            }
        }
        let ideal = rt.finalize(&NetProfile::ideal()).unwrap().0;
        let lan = rt.finalize(&NetProfile::lan()).unwrap().0;
        let wan = rt.finalize(&NetProfile::wan()).unwrap().0;
        assert!(ideal.wall_clock_estimate <= lan.wall_clock_estimate);
        assert!(lan.wall_clock_estimate <= wan.wall_clock_estimate);
        let phase_bytes: u64 = wan.phases.iter().map(|p| p.bytes).sum();
        let party_bytes: u64 = wan.per_party_bytes_sent.values().sum();
        assert_eq!(phase_bytes, party_bytes);
    }

    #[test]
    fn abort_wakes_receivers() {
        let rt = Runtime::in_process();
        let ids = rt.register_clients_and_tee(2).unwrap();
        let rt2 = rt.clone();
        let h = std::thread::spawn(move || rt2.recv(ids[1], ids[0], MsgType::Done));
        std::thread::sleep(Duration::from_millis(20));
        rt.abort();
        assert!(matches!(h.join().unwrap(), Err(RuntimeError::Aborted)));
    }

    #[test]
    fn counters_accumulate() {
        let rt = Runtime::in_process();
        let c = rt.register_party(PartyKind::Client, 1).unwrap();
        rt.count(c, Counter::PrpCalls, 5);
        rt.count(c, Counter::PrpCalls, 7);
        rt.count(c, Counter::OprfRounds, 2);
        let r = rt.counters();
        assert_eq!(r.get(c).prp_calls, 12);
        assert_eq!(r.clients_total().oprf_rounds, 2);
    }
}
