use std::io::{self, Read};

use super::NetError;

/// ASCII "EPMD".
pub const MAGIC: [u8; 4] = [0x45, 0x50, 0x4D, 0x44];
pub const VERSION: u8 = 0x01;
/// magic (4) + version (1) + type (1) + payload length (8).
pub const HEADER_LEN: usize = 14;
pub const DEFAULT_PAYLOAD_CAP: u64 = (1 << 32) - 1;

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
#[repr(u8)]
pub enum MsgType {
    Hello = 1,
    KeyTransfer = 2,
    EncSet = 3,
    DupReport = 4,
    OprfReq = 5,
    OprfResp = 6,
    PrfSet = 7,
    SetBroadcast = 8,
    Done = 9,
}

impl MsgType {
    pub const ALL: [MsgType; 9] = [
        MsgType::Hello,
        MsgType::KeyTransfer,
        MsgType::EncSet,
        MsgType::DupReport,
        MsgType::OprfReq,
        MsgType::OprfResp,
        MsgType::PrfSet,
        MsgType::SetBroadcast,
        MsgType::Done,
    ];

    pub fn from_u8(v: u8) -> Option<MsgType> {
        MsgType::ALL.get((v as usize).wrapping_sub(1)).copied()
    }

    pub fn name(&self) -> &'static str {
        match self {
            MsgType::Hello => "HELLO",
            MsgType::KeyTransfer => "KEY_TRANSFER",
            MsgType::EncSet => "ENC_SET",
            MsgType::DupReport => "DUP_REPORT",
            MsgType::OprfReq => "OPRF_REQ",
            MsgType::OprfResp => "OPRF_RESP",
            MsgType::PrfSet => "PRF_SET",
            MsgType::SetBroadcast => "SET_BROADCAST",
            MsgType::Done => "DONE",
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Frame {
    pub msg_type: MsgType,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(msg_type: MsgType, payload: Vec<u8>) -> Self {
        Frame { msg_type, payload }
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.payload.len()
    }
}

pub fn encode_header(msg_type: MsgType, payload_len: u64) -> [u8; HEADER_LEN] {
    let mut h = [0u8; HEADER_LEN];
    h[..4].copy_from_slice(&MAGIC);
    h[4] = VERSION;
    h[5] = msg_type as u8;
    h[6..].copy_from_slice(&payload_len.to_le_bytes());
    h
}

pub fn encode_frame(msg_type: MsgType, payload: &[u8]) -> Result<Vec<u8>, NetError> {
    encode_frame_with_cap(msg_type, payload, DEFAULT_PAYLOAD_CAP)
}

pub fn encode_frame_with_cap(msg_type: MsgType, payload: &[u8], cap: u64) -> Result<Vec<u8>, NetError> {
    let len = payload.len() as u64;
    if len > cap {
        return Err(NetError::OversizePayload { len, cap });
    }
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(&encode_header(msg_type, len));
    out.extend_from_slice(payload);
    Ok(out)
}

/// Validates a header and returns the message type and payload length.
pub fn decode_header(header: &[u8], cap: u64) -> Result<(MsgType, u64), NetError> {
    if header.len() < HEADER_LEN {
        return Err(NetError::Truncated {
            needed: HEADER_LEN,
            got: header.len(),
        });
    }
    if header[..4] != MAGIC {
        return Err(NetError::BadMagic);
    }
    if header[4] != VERSION {
        return Err(NetError::BadVersion(header[4]));
    }
    let msg_type = MsgType::from_u8(header[5]).ok_or(NetError::UnknownMsgType(header[5]))?;
    let len = u64::from_le_bytes(header[6..HEADER_LEN].try_into().unwrap());
    if len > cap {
        return Err(NetError::OversizePayload { len, cap });
    }
    Ok((msg_type, len))
}

/// Decodes exactly one frame occupying all of `bytes`.
pub fn decode_frame(bytes: &[u8]) -> Result<Frame, NetError> {
    decode_frame_with_cap(bytes, DEFAULT_PAYLOAD_CAP)
}

pub fn decode_frame_with_cap(bytes: &[u8], cap: u64) -> Result<Frame, NetError> {
    let (frame, used) = decode_frame_prefix(bytes, cap)?;
    if used != bytes.len() {
        return Err(NetError::TrailingBytes(bytes.len() - used));
    }
    Ok(frame)
}

/// Decodes the frame at the start of `bytes`, returning it and the number
/// of bytes it occupied.
pub fn decode_frame_prefix(bytes: &[u8], cap: u64) -> Result<(Frame, usize), NetError> {
    let (msg_type, len) = decode_header(bytes, cap)?;
    let total = HEADER_LEN as u64 + len;
    if (bytes.len() as u64) < total {
        return Err(NetError::Truncated {
            needed: total as usize,
            got: bytes.len(),
        });
    }
    let payload = bytes[HEADER_LEN..total as usize].to_vec();
    Ok((Frame { msg_type, payload }, total as usize))
}

/// Reads one frame from a stream. A clean end of stream before the first
/// header byte is reported as [`NetError::ConnectionLost`].
pub fn read_frame<R: Read>(reader: &mut R, cap: u64) -> Result<Frame, NetError> {
    let mut header = [0u8; HEADER_LEN];
    read_exact_or_lost(reader, &mut header)?;
    let (msg_type, len) = decode_header(&header, cap)?;
    let mut payload = vec![0u8; len as usize];
    read_exact_or_lost(reader, &mut payload)?;
    Ok(Frame { msg_type, payload })
}

fn read_exact_or_lost<R: Read>(reader: &mut R, buf: &mut [u8]) -> Result<(), NetError> {
    reader.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof
        | io::ErrorKind::ConnectionReset
        | io::ErrorKind::ConnectionAborted
        | io::ErrorKind::BrokenPipe => NetError::ConnectionLost,
        _ => NetError::Io(e.to_string()),
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn empty_payload() {
        let bytes = encode_frame(MsgType::Done, &[]).unwrap();
        assert_eq!(bytes.len(), HEADER_LEN);
        assert_eq!(decode_frame(&bytes).unwrap(), Frame::new(MsgType::Done, vec![]));
    }

    #[test]
    fn header_layout() {
        let bytes = encode_frame(MsgType::EncSet, &[0xAA; 3]).unwrap();
        assert_eq!(
            bytes,
            [0x45, 0x50, 0x4D, 0x44, 0x01, 0x03, 3, 0, 0, 0, 0, 0, 0, 0, 0xAA, 0xAA, 0xAA]
        );
    }

    #[test]
    fn errors() {
        let mut bytes = encode_frame(MsgType::Hello, b"hi").unwrap();
        bytes[0] ^= 1;
        assert_eq!(decode_frame(&bytes), Err(NetError::BadMagic));

        let mut bytes = encode_frame(MsgType::Hello, b"hi").unwrap();
        bytes[4] = 2;
        assert_eq!(decode_frame(&bytes), Err(NetError::BadVersion(2)));

        let mut bytes = encode_frame(MsgType::Hello, b"hi").unwrap();
        bytes[5] = 0;
        assert_eq!(decode_frame(&bytes), Err(NetError::UnknownMsgType(0)));

        let bytes = encode_frame(MsgType::Hello, b"hi").unwrap();
        assert!(matches!(decode_frame(&bytes[..15]), Err(NetError::Truncated { .. })));
        assert!(matches!(decode_frame(&bytes[..5]), Err(NetError::Truncated { .. })));

        let mut long = bytes.clone();
        long.push(0);
        assert_eq!(decode_frame(&long), Err(NetError::TrailingBytes(1)));

        assert!(matches!(
            encode_frame_with_cap(MsgType::EncSet, &[0; 10], 9),
            Err(NetError::OversizePayload { len: 10, cap: 9 })
        ));
        assert!(matches!(
            decode_frame_with_cap(&encode_frame(MsgType::EncSet, &[0; 10]).unwrap(), 9),
            Err(NetError::OversizePayload { .. })
        ));
    }

    #[test]
    fn cap_sized_payload() {
        let cap = 1 << 16;
        let payload = vec![7u8; cap as usize];
        let bytes = encode_frame_with_cap(MsgType::PrfSet, &payload, cap).unwrap();
        assert_eq!(decode_frame_with_cap(&bytes, cap).unwrap().payload, payload);
    }

    #[test]
    fn read_from_stream() {
        let mut stream = Vec::new();
        stream.extend(encode_frame(MsgType::KeyTransfer, &[1; 16]).unwrap());
        stream.extend(encode_frame(MsgType::Done, &[]).unwrap());
        let mut r = stream.as_slice();
        assert_eq!(read_frame(&mut r, DEFAULT_PAYLOAD_CAP).unwrap().msg_type, MsgType::KeyTransfer);
        assert_eq!(read_frame(&mut r, DEFAULT_PAYLOAD_CAP).unwrap().msg_type, MsgType::Done);
        assert_eq!(read_frame(&mut r, DEFAULT_PAYLOAD_CAP), Err(NetError::ConnectionLost));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn roundtrip(ty in 1u8..=9, payload in proptest::collection::vec(any::<u8>(), 0..512)) {
            let ty = MsgType::from_u8(ty).unwrap();
            let bytes = encode_frame(ty, &payload).unwrap();
            prop_assert_eq!(decode_frame(&bytes).unwrap(), Frame::new(ty, payload));
        }

        #[test]
        fn decode_is_total(mut bytes in proptest::collection::vec(any::<u8>(), 0..64), framed in any::<bool>()) {
            if framed && bytes.len() >= 5 {
                bytes[..4].copy_from_slice(&MAGIC);
                bytes[4] = VERSION;
            }
            let _ = decode_frame(&bytes);
        }
    }
}
