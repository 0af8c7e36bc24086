//! Deduplicatable records.

use std::fmt;

use serde::{Deserialize, Serialize};

/// A single record held by a client, identified by its canonical byte
/// encoding. Benchmark workloads use 32-bit integers, encoded as four
/// little-endian bytes.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Element(Vec<u8>);

/// A client's records. Within a protocol run the list is expected to be
/// duplicate-free; [`crate::epmpd::local_dedup`] establishes that.
pub type ClientSet = Vec<Element>;

impl Element {
    pub fn from_u32(value: u32) -> Self {
        Element(value.to_le_bytes().to_vec())
    }

    pub fn from_bytes(bytes: impl Into<Vec<u8>>) -> Self {
        Element(bytes.into())
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// The integer value, when the encoding is exactly four bytes.
    pub fn as_u32(&self) -> Option<u32> {
        let bytes: [u8; 4] = self.0.as_slice().try_into().ok()?;
        Some(u32::from_le_bytes(bytes))
    }
}

impl From<u32> for Element {
    fn from(value: u32) -> Self {
        Element::from_u32(value)
    }
}

impl From<&str> for Element {
    fn from(value: &str) -> Self {
        Element(value.as_bytes().to_vec())
    }
}

impl fmt::Debug for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.as_u32() {
            Some(v) => write!(f, "{v}"),
            None => {
                f.write_str("0x")?;
                for b in &self.0 {
                    write!(f, "{b:02x}")?;
                }
                Ok(())
            }
        }
    }
}

/// Converts integer values into a client set.
pub fn set_from_u32s(values: &[u32]) -> ClientSet {
    values.iter().copied().map(Element::from_u32).collect()
}
