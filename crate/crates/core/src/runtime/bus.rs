use std::collections::{HashMap, VecDeque};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use super::{PartyId, RuntimeError};
use crate::netio::MsgType;

/// Moves payloads between parties. Implementations must preserve
/// per-(sender, receiver) FIFO order.
pub trait Transport: Send + Sync {
    /// Called once per registered party.
    fn attach(&self, _party: PartyId) -> Result<(), RuntimeError> {
        Ok(())
    }

    /// Hands a payload to the link. Returns the measured transfer time when
    /// the transport shapes traffic physically.
    fn deliver(
        &self,
        from: PartyId,
        to: PartyId,
        msg_type: MsgType,
        payload: Vec<u8>,
    ) -> Result<Option<f64>, RuntimeError>;

    fn receive(
        &self,
        me: PartyId,
        from: PartyId,
        timeout: Duration,
    ) -> Result<(MsgType, Vec<u8>), RuntimeError>;

    /// Messages delivered but not yet received.
    fn pending(&self) -> usize;

    /// Wakes every blocked receiver with [`RuntimeError::Aborted`].
    fn abort(&self);
}

#[derive(Default)]
struct MailboxState {
    queues: HashMap<(PartyId, PartyId), VecDeque<(MsgType, Vec<u8>)>>,
    pending: usize,
    aborted: bool,
}

/// Inboxes keyed by directed party pair; the receive side of every
/// transport.
#[derive(Default)]
pub struct Mailbox {
    state: Mutex<MailboxState>,
    ready: Condvar,
}

impl Mailbox {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&self, from: PartyId, to: PartyId, msg_type: MsgType, payload: Vec<u8>) {
        let mut st = self.state.lock().unwrap();
        st.queues.entry((from, to)).or_default().push_back((msg_type, payload));
        st.pending += 1;
        drop(st);
        self.ready.notify_all();
    }

    pub fn pop(
        &self,
        me: PartyId,
        from: PartyId,
        timeout: Duration,
    ) -> Result<(MsgType, Vec<u8>), RuntimeError> {
        let deadline = Instant::now() + timeout;
        let mut st = self.state.lock().unwrap();
        loop {
            if st.aborted {
                return Err(RuntimeError::Aborted);
            }
            if let Some(msg) = st.queues.get_mut(&(from, me)).and_then(|q| q.pop_front()) {
                st.pending -= 1;
                return Ok(msg);
            }
            let now = Instant::now();
            if now >= deadline {
                return Err(RuntimeError::Timeout { me, from });
            }
            st = self.ready.wait_timeout(st, deadline - now).unwrap().0;
        }
    }

    pub fn pending(&self) -> usize {
        self.state.lock().unwrap().pending
    }

    pub fn abort(&self) {
        self.state.lock().unwrap().aborted = true;
        self.ready.notify_all();
    }
}

/// Zero-copy in-process delivery; transfer time is left to the analytic model.
#[derive(Default)]
pub struct InProcBus {
    mailbox: Mailbox,
}

impl InProcBus {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Transport for InProcBus {
    fn deliver(
        &self,
        from: PartyId,
        to: PartyId,
        msg_type: MsgType,
        payload: Vec<u8>,
    ) -> Result<Option<f64>, RuntimeError> {
        self.mailbox.push(from, to, msg_type, payload);
        Ok(None)
    }

    fn receive(
        &self,
        me: PartyId,
        from: PartyId,
        timeout: Duration,
    ) -> Result<(MsgType, Vec<u8>), RuntimeError> {
        self.mailbox.pop(me, from, timeout)
    }

    fn pending(&self) -> usize {
        self.mailbox.pending()
    }

    fn abort(&self) {
        self.mailbox.abort()
    }
}
