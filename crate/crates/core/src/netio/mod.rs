//! Wire format and socket transport.

mod frame;
mod shaping;
mod tcp;

use thiserror::Error;

use crate::runtime::PartyId;

pub use frame::{
    decode_frame, decode_frame_prefix, decode_frame_with_cap, decode_header, encode_frame, encode_frame_with_cap,
    encode_header, read_frame, Frame, MsgType, DEFAULT_PAYLOAD_CAP, HEADER_LEN, MAGIC, VERSION,
};
pub use shaping::{shaped_send, ShapingConfig, DEFAULT_QUANTUM};
pub use tcp::{dial, serve_party, Directory, Endpoint, TcpTransport, DEFAULT_CONNECT_TIMEOUT};

#[derive(Clone, Debug, Error, PartialEq)]
pub enum NetError {
    #[error("bad frame magic")]
    BadMagic,
    #[error("unsupported protocol version {0:#04x}")]
    BadVersion(u8),
    #[error("unknown message type {0}")]
    UnknownMsgType(u8),
    #[error("truncated frame: needed {needed} bytes, got {got}")]
    Truncated { needed: usize, got: usize },
    #[error("payload of {len} bytes exceeds cap of {cap}")]
    OversizePayload { len: u64, cap: u64 },
    #[error("{0} bytes after the end of the frame")]
    TrailingBytes(usize),
    #[error("connection lost")]
    ConnectionLost,
    #[error("cannot bind listener: {0}")]
    BindFailure(String),
    #[error("handshake failed: {0}")]
    HandshakeFailure(String),
    #[error("no address known for {0}")]
    NoRoute(PartyId),
    #[error("invalid shaping parameters: {0}")]
    InvalidShaping(String),
    #[error("i/o error: {0}")]
    Io(String),
}
