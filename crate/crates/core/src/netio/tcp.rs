//! Socket transport. Every party runs an [`Endpoint`] that accepts one
//! connection per sending peer; senders dial lazily, introduce themselves
//! with a HELLO frame, and then stream shaped frames. Received frames land
//! in the local [`Mailbox`], so protocol code is unaware of the transport.

use std::collections::{BTreeMap, HashMap};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::frame::{encode_frame, read_frame, MsgType, DEFAULT_PAYLOAD_CAP, VERSION};
use super::shaping::{shaped_send, ShapingConfig};
use super::NetError;
use crate::runtime::{Mailbox, PartyId, RuntimeError, Transport};

const HELLO_LEN: usize = 11;
pub const DEFAULT_CONNECT_TIMEOUT: Duration = Duration::from_secs(30);

fn hello_payload(version: u8, sender: PartyId, receiver: PartyId) -> Vec<u8> {
    let mut p = Vec::with_capacity(HELLO_LEN);
    p.push(version);
    p.extend_from_slice(&sender.to_wire());
    p.extend_from_slice(&receiver.to_wire());
    p
}

fn parse_hello(payload: &[u8]) -> Result<(u8, PartyId, PartyId), NetError> {
    if payload.len() != HELLO_LEN {
        return Err(NetError::HandshakeFailure(format!("HELLO payload of {} bytes", payload.len())));
    }
    let sender = PartyId::from_wire(&payload[1..6]);
    let receiver = PartyId::from_wire(&payload[6..11]);
    match (sender, receiver) {
        (Some(s), Some(r)) => Ok((payload[0], s, r)),
        _ => Err(NetError::HandshakeFailure("HELLO carries a malformed party id".into())),
    }
}

/// A listening party. Dropping it stops accepting new connections.
#[derive(Debug)]
pub struct Endpoint {
    role: PartyId,
    addr: SocketAddr,
    shutdown: Arc<AtomicBool>,
    errors: Arc<Mutex<Vec<NetError>>>,
    accept_thread: Option<JoinHandle<()>>,
}

impl Endpoint {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn role(&self) -> PartyId {
        self.role
    }

    /// Connection-level failures observed so far (rejected handshakes,
    /// undecodable frames).
    pub fn errors(&self) -> Vec<NetError> {
        self.errors.lock().unwrap().clone()
    }
}

impl Drop for Endpoint {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        if let Some(h) = self.accept_thread.take() {
            let _ = h.join();
        }
    }
}

/// Binds `listen` and bridges every accepted connection into `bridge` as
/// messages addressed to `role`.
pub fn serve_party(
    listen: impl ToSocketAddrs,
    role: PartyId,
    bridge: Arc<Mailbox>,
) -> Result<Endpoint, NetError> {
    let listener = TcpListener::bind(listen).map_err(|e| NetError::BindFailure(e.to_string()))?;
    let addr = listener.local_addr().map_err(|e| NetError::BindFailure(e.to_string()))?;
    listener
        .set_nonblocking(true)
        .map_err(|e| NetError::BindFailure(e.to_string()))?;
    let shutdown = Arc::new(AtomicBool::new(false));
    let errors = Arc::new(Mutex::new(Vec::new()));
    let accept_thread = {
        let shutdown = shutdown.clone();
        let errors = errors.clone();
        thread::Builder::new()
            .name(format!("accept-{role}"))
            .spawn(move || {
                while !shutdown.load(Ordering::SeqCst) {
                    match listener.accept() {
                        Ok((stream, _)) => {
                            let bridge = bridge.clone();
                            let errors = errors.clone();
                            thread::spawn(move || {
                                if let Err(e) = pump_connection(stream, role, &bridge) {
                                    errors.lock().unwrap().push(e);
                                }
                            });
                        }
                        Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                            thread::sleep(Duration::from_millis(2));
                        }
                        Err(e) => errors.lock().unwrap().push(NetError::Io(e.to_string())),
                    }
                }
            })
            .map_err(|e| NetError::Io(e.to_string()))?
    };
    Ok(Endpoint {
        role,
        addr,
        shutdown,
        errors,
        accept_thread: Some(accept_thread),
    })
}

fn pump_connection(mut stream: TcpStream, role: PartyId, bridge: &Mailbox) -> Result<(), NetError> {
    stream.set_nonblocking(false).map_err(|e| NetError::Io(e.to_string()))?;
    let _ = stream.set_nodelay(true);
    let hello = read_frame(&mut stream, DEFAULT_PAYLOAD_CAP).map_err(|e| match e {
        NetError::ConnectionLost => NetError::ConnectionLost,
        other => NetError::HandshakeFailure(other.to_string()),
    })?;
    if hello.msg_type != MsgType::Hello {
        return Err(NetError::HandshakeFailure(format!("first frame was {}", hello.msg_type.name())));
    }
    let (version, sender, receiver) = parse_hello(&hello.payload)?;
    if version != VERSION {
        return Err(NetError::HandshakeFailure(format!("peer speaks version {version}")));
    }
    if receiver != role {
        return Err(NetError::HandshakeFailure(format!("peer wanted {receiver}, this is {role}")));
    }
    let ack = encode_frame(MsgType::Hello, &hello_payload(VERSION, role, sender))?;
    std::io::Write::write_all(&mut stream, &ack).map_err(|_| NetError::ConnectionLost)?;
    loop {
        match read_frame(&mut stream, DEFAULT_PAYLOAD_CAP) {
            Ok(frame) => bridge.push(sender, role, frame.msg_type, frame.payload),
            Err(NetError::ConnectionLost) => return Ok(()),
            Err(e) => return Err(e),
        }
    }
}

/// Connects `sender` to `receiver`'s endpoint at `addr`, retrying until
/// `timeout` while the peer is not yet listening.
pub fn dial(sender: PartyId, receiver: PartyId, addr: SocketAddr, timeout: Duration) -> Result<TcpStream, NetError> {
    let deadline = Instant::now() + timeout;
    let mut stream = loop {
        match TcpStream::connect_timeout(&addr, Duration::from_secs(2)) {
            Ok(s) => break s,
            Err(e) if Instant::now() < deadline => {
                let _ = e;
                thread::sleep(Duration::from_millis(20));
            }
            Err(e) => return Err(NetError::Io(format!("connect to {receiver} at {addr}: {e}"))),
        }
    };
    let _ = stream.set_nodelay(true);
    let hello = encode_frame(MsgType::Hello, &hello_payload(VERSION, sender, receiver))?;
    std::io::Write::write_all(&mut stream, &hello)
        .map_err(|e| NetError::HandshakeFailure(format!("sending HELLO: {e}")))?;
    let ack = read_frame(&mut stream, DEFAULT_PAYLOAD_CAP)
        .map_err(|e| NetError::HandshakeFailure(format!("{receiver} rejected HELLO: {e}")))?;
    if ack.msg_type != MsgType::Hello {
        return Err(NetError::HandshakeFailure(format!("reply was {}", ack.msg_type.name())));
    }
    let (version, from, to) = parse_hello(&ack.payload)?;
    if version != VERSION || from != receiver || to != sender {
        return Err(NetError::HandshakeFailure(format!(
            "reply HELLO v{version} {from}->{to}, expected v{VERSION} {receiver}->{sender}"
        )));
    }
    Ok(stream)
}

/// Party addresses for a multi-process run.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Directory {
    pub tee: SocketAddr,
    pub clients: Vec<SocketAddr>,
}

impl Directory {
    pub fn addr_of(&self, party: PartyId) -> Option<SocketAddr> {
        if party.is_tee() {
            Some(self.tee)
        } else {
            self.clients.get((party.index as usize).checked_sub(1)?).copied()
        }
    }

    fn entries(&self) -> BTreeMap<PartyId, SocketAddr> {
        let mut m = BTreeMap::new();
        m.insert(PartyId::TEE, self.tee);
        for (i, a) in self.clients.iter().enumerate() {
            m.insert(PartyId::client(i as u32 + 1), *a);
        }
        m
    }
}

enum Mode {
    /// Every registered party gets a listener on 127.0.0.1 in this process.
    Loopback,
    /// Only `me` listens locally; everyone else is reached through the
    /// directory.
    Distributed { me: PartyId },
}

pub struct TcpTransport {
    mode: Mode,
    mailbox: Arc<Mailbox>,
    shaping: ShapingConfig,
    directory: Mutex<BTreeMap<PartyId, SocketAddr>>,
    endpoints: Mutex<BTreeMap<PartyId, Endpoint>>,
    conns: Mutex<HashMap<(PartyId, PartyId), Arc<Mutex<TcpStream>>>>,
    connect_timeout: Duration,
}

impl TcpTransport {
    pub fn loopback(shaping: ShapingConfig) -> Self {
        Self::with_mode(Mode::Loopback, shaping, BTreeMap::new())
    }

    pub fn distributed(me: PartyId, directory: &Directory, shaping: ShapingConfig) -> Self {
        Self::with_mode(Mode::Distributed { me }, shaping, directory.entries())
    }

    fn with_mode(mode: Mode, shaping: ShapingConfig, directory: BTreeMap<PartyId, SocketAddr>) -> Self {
        TcpTransport {
            mode,
            mailbox: Arc::new(Mailbox::new()),
            shaping,
            directory: Mutex::new(directory),
            endpoints: Mutex::new(BTreeMap::new()),
            conns: Mutex::new(HashMap::new()),
            connect_timeout: DEFAULT_CONNECT_TIMEOUT,
        }
    }

    pub fn with_connect_timeout(mut self, timeout: Duration) -> Self {
        self.connect_timeout = timeout;
        self
    }

    pub fn local_addr(&self, party: PartyId) -> Option<SocketAddr> {
        self.endpoints.lock().unwrap().get(&party).map(|e| e.local_addr())
    }

    /// Errors seen by local endpoints.
    pub fn endpoint_errors(&self) -> Vec<(PartyId, NetError)> {
        let eps = self.endpoints.lock().unwrap();
        eps.iter()
            .flat_map(|(p, e)| e.errors().into_iter().map(move |err| (*p, err)))
            .collect()
    }

    fn connection(&self, from: PartyId, to: PartyId) -> Result<Arc<Mutex<TcpStream>>, NetError> {
        if let Some(c) = self.conns.lock().unwrap().get(&(from, to)) {
            return Ok(c.clone());
        }
        let addr = self
            .directory
            .lock()
            .unwrap()
            .get(&to)
            .copied()
            .ok_or(NetError::NoRoute(to))?;
        let stream = Arc::new(Mutex::new(dial(from, to, addr, self.connect_timeout)?));
        let mut conns = self.conns.lock().unwrap();
        Ok(conns.entry((from, to)).or_insert(stream).clone())
    }
}

impl Transport for TcpTransport {
    fn attach(&self, party: PartyId) -> Result<(), RuntimeError> {
        let listen = match self.mode {
            Mode::Loopback => SocketAddr::from(([127, 0, 0, 1], 0)),
            Mode::Distributed { me } if me == party => self
                .directory
                .lock()
                .unwrap()
                .get(&party)
                .copied()
                .ok_or(NetError::NoRoute(party))?,
            Mode::Distributed { .. } => return Ok(()),
        };
        let ep = serve_party(listen, party, self.mailbox.clone())?;
        self.directory.lock().unwrap().insert(party, ep.local_addr());
        self.endpoints.lock().unwrap().insert(party, ep);
        Ok(())
    }

    fn deliver(
        &self,
        from: PartyId,
        to: PartyId,
        msg_type: MsgType,
        payload: Vec<u8>,
    ) -> Result<Option<f64>, RuntimeError> {
        let frame = encode_frame(msg_type, &payload)?;
        let conn = self.connection(from, to)?;
        let mut stream = conn.lock().unwrap();
        let elapsed = shaped_send(&mut *stream, &frame, &self.shaping)?;
        Ok(Some(elapsed))
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
        self.mailbox.abort();
        for c in self.conns.lock().unwrap().values() {
            if let Ok(s) = c.try_lock() {
                let _ = s.shutdown(std::net::Shutdown::Both);
            }
        }
    }
}
