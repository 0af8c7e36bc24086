use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
pub enum PartyKind {
    Client,
    Tee,
}

/// Identifier of a protocol participant. Clients are numbered from 1; the
/// single third party always has index 0.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PartyId {
    pub kind: PartyKind,
    pub index: u32,
}

impl PartyId {
    pub const TEE: PartyId = PartyId {
        kind: PartyKind::Tee,
        index: 0,
    };

    pub fn client(index: u32) -> Self {
        PartyId {
            kind: PartyKind::Client,
            index,
        }
    }

    pub fn is_client(&self) -> bool {
        self.kind == PartyKind::Client
    }

    pub fn is_tee(&self) -> bool {
        self.kind == PartyKind::Tee
    }

    pub(crate) fn to_wire(self) -> [u8; 5] {
        let mut out = [0u8; 5];
        out[0] = match self.kind {
            PartyKind::Client => 0,
            PartyKind::Tee => 1,
        };
        out[1..].copy_from_slice(&self.index.to_le_bytes());
        out
    }

    pub(crate) fn from_wire(bytes: &[u8]) -> Option<Self> {
        if bytes.len() != 5 {
            return None;
        }
        let index = u32::from_le_bytes(bytes[1..5].try_into().ok()?);
        match bytes[0] {
            0 => Some(PartyId::client(index)),
            1 if index == 0 => Some(PartyId::TEE),
            _ => None,
        }
    }
}

impl fmt::Display for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            PartyKind::Client => write!(f, "C{}", self.index),
            PartyKind::Tee => f.write_str("TEE"),
        }
    }
}

impl fmt::Debug for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for PartyId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("tee") {
            return Ok(PartyId::TEE);
        }
        s.strip_prefix('C')
            .and_then(|rest| rest.parse().ok())
            .map(PartyId::client)
            .ok_or_else(|| format!("not a party id: {s:?}"))
    }
}

impl Serialize for PartyId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PartyId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Randomness source of one party in a seeded run. Every party gets an
/// independent stream, so a run replays exactly regardless of scheduling.
pub fn party_rng(seed: u64, party: PartyId) -> ChaCha20Rng {
    let mut h = Sha256::new();
    h.update(b"epmpd/party-rng/v1");
    h.update(seed.to_le_bytes());
    h.update(party.to_wire());
    ChaCha20Rng::from_seed(h.finalize().into())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_parse() {
        for p in [PartyId::TEE, PartyId::client(1), PartyId::client(250)] {
            assert_eq!(p.to_string().parse::<PartyId>().unwrap(), p);
            assert_eq!(PartyId::from_wire(&p.to_wire()), Some(p));
        }
        assert!("X4".parse::<PartyId>().is_err());
        assert_eq!(PartyId::from_wire(&[1, 2, 0, 0, 0]), None);
    }

    #[test]
    fn party_streams_differ() {
        use rand::RngCore;
        let a = party_rng(7, PartyId::client(1)).next_u64();
        assert_eq!(a, party_rng(7, PartyId::client(1)).next_u64());
        assert_ne!(a, party_rng(7, PartyId::client(2)).next_u64());
        assert_ne!(a, party_rng(8, PartyId::client(1)).next_u64());
    }
}
