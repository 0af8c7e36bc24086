use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{self, Read, Write};

use crate::netio::MsgType;
use crate::runtime::{PartyId, Phase, Step};

const DUMP_MAGIC: &[u8; 4] = b"EPTR";
const DUMP_VERSION: u8 = 1;
/// from (5) + to (5) + msg type (1) + level (4) + step (1)
const RECORD_HEAD: usize = 16;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TranscriptRecord {
    pub from: PartyId,
    pub to: PartyId,
    pub msg_type: MsgType,
    pub payload: Vec<u8>,
    pub phase: Phase,
}

/// Every message of a run, in send order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Transcript {
    records: Vec<TranscriptRecord>,
}

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, record: TranscriptRecord) {
        self.records.push(record);
    }

    pub fn records(&self) -> &[TranscriptRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn filtered(&self, keep: impl Fn(&TranscriptRecord) -> bool) -> Transcript {
        self.records.iter().filter(|r| keep(r)).cloned().collect()
    }

    pub fn into_records(self) -> Vec<TranscriptRecord> {
        self.records
    }

    /// Messages addressed to `party`: that party's view.
    pub fn received_by(&self, party: PartyId) -> impl Iterator<Item = &TranscriptRecord> {
        self.records.iter().filter(move |r| r.to == party)
    }

    /// Binary dump: a magic and version, then each record as a u32 length
    /// followed by the record head and payload.
    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(DUMP_MAGIC)?;
        w.write_all(&[DUMP_VERSION])?;
        for r in &self.records {
            let len = u32::try_from(RECORD_HEAD + r.payload.len())
                .map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "record too large"))?;
            w.write_all(&len.to_le_bytes())?;
            w.write_all(&r.from.to_wire())?;
            w.write_all(&r.to.to_wire())?;
            w.write_all(&[r.msg_type as u8])?;
            w.write_all(&r.phase.level.to_le_bytes())?;
            w.write_all(&[r.phase.step.code()])?;
            w.write_all(&r.payload)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> io::Result<Transcript> {
        let bad = |what: &str| io::Error::new(io::ErrorKind::InvalidData, what.to_string());
        let mut head = [0u8; 5];
        r.read_exact(&mut head)?;
        if &head[..4] != DUMP_MAGIC || head[4] != DUMP_VERSION {
            return Err(bad("not a transcript dump"));
        }
        let mut out = Transcript::new();
        loop {
            let mut len = [0u8; 4];
            match r.read_exact(&mut len) {
                Ok(()) => {}
                Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(out),
                Err(e) => return Err(e),
            }
            let len = u32::from_le_bytes(len) as usize;
            if len < RECORD_HEAD {
                return Err(bad("short record"));
            }
            let mut buf = vec![0u8; len];
            r.read_exact(&mut buf)?;
            let from = PartyId::from_wire(&buf[0..5]).ok_or_else(|| bad("bad sender"))?;
            let to = PartyId::from_wire(&buf[5..10]).ok_or_else(|| bad("bad receiver"))?;
            let msg_type = MsgType::from_u8(buf[10]).ok_or_else(|| bad("bad message type"))?;
            let level = u32::from_le_bytes(buf[11..15].try_into().unwrap());
            let step = Step::from_code(buf[15]).ok_or_else(|| bad("bad step"))?;
            out.push(TranscriptRecord {
                from,
                to,
                msg_type,
                payload: buf[RECORD_HEAD..].to_vec(),
                phase: Phase::new(level, step),
            });
        }
    }

    /// One line per (sender, receiver, type): message count and payload bytes.
    pub fn summary(&self) -> String {
        let mut agg: BTreeMap<(PartyId, PartyId, MsgType), (usize, usize)> = BTreeMap::new();
        for r in &self.records {
            let e = agg.entry((r.from, r.to, r.msg_type)).or_default();
            e.0 += 1;
            e.1 += r.payload.len();
        }
        let mut s = format!("{} messages\n", self.records.len());
        for ((from, to, ty), (count, bytes)) in agg {
            let _ = writeln!(s, "{from:>5} -> {to:<5} {:<13} x{count:<5} {bytes} B", ty.name());
        }
        s
    }
}

impl FromIterator<TranscriptRecord> for Transcript {
    fn from_iter<I: IntoIterator<Item = TranscriptRecord>>(iter: I) -> Self {
        Transcript {
            records: iter.into_iter().collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Transcript {
        let mut t = Transcript::new();
        t.push(TranscriptRecord {
            from: PartyId::client(1),
            to: PartyId::TEE,
            msg_type: MsgType::EncSet,
            payload: vec![1, 2, 3],
            phase: Phase::new(2, Step::Encrypt),
        });
        t.push(TranscriptRecord {
            from: PartyId::TEE,
            to: PartyId::client(1),
            msg_type: MsgType::DupReport,
            payload: vec![],
            phase: Phase::new(0, Step::TeeDedup),
        });
        t
    }

    #[test]
    fn dump_roundtrip() {
        let t = sample();
        let mut buf = Vec::new();
        t.write_to(&mut buf).unwrap();
        assert_eq!(Transcript::read_from(buf.as_slice()).unwrap(), t);
    }

    #[test]
    fn rejects_garbage() {
        assert!(Transcript::read_from(&b"nope!"[..]).is_err());
        let mut buf = Vec::new();
        sample().write_to(&mut buf).unwrap();
        buf.truncate(buf.len() - 1);
        assert!(Transcript::read_from(buf.as_slice()).is_err());
    }

    #[test]
    fn summary_lines() {
        let s = sample().summary();
        assert!(s.starts_with("2 messages"));
        assert!(s.contains("ENC_SET"));
        assert_eq!(sample().received_by(PartyId::TEE).count(), 1);
    }
}
