use sha2::{Digest, Sha256};

use super::prp::PrpKey;
use crate::element::Element;

pub const DIGEST_LEN: usize = 14;

const CONVERGENT_KEY_DOMAIN: &[u8] = b"epmpd/convergent-key/v1";
const DIGEST_DOMAIN: &[u8] = b"epmpd/element-digest/v1";

/// Truncated digest standing in for elements too long to fit a block.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct ElementDigest(pub [u8; DIGEST_LEN]);

/// Key `Hash(e)` used by the convergent (third-party-free) variant: two
/// clients holding the same element derive the same key.
pub fn hash_derived_key(element: &Element) -> PrpKey {
    let mut h = Sha256::new();
    h.update(CONVERGENT_KEY_DOMAIN);
    h.update(element.as_bytes());
    let out = h.finalize();
    let mut key = [0u8; 16];
    key.copy_from_slice(&out[..16]);
    PrpKey::from_bytes(key)
}

pub fn element_digest(element: &Element) -> ElementDigest {
    let mut h = Sha256::new();
    h.update(DIGEST_DOMAIN);
    h.update(element.as_bytes());
    let out = h.finalize();
    let mut d = [0u8; DIGEST_LEN];
    d.copy_from_slice(&out[..DIGEST_LEN]);
    ElementDigest(d)
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use super::*;
    use crate::crypto::prp_encrypt;

    #[test]
    fn deterministic() {
        let e = Element::from_u32(99);
        assert_eq!(hash_derived_key(&e), hash_derived_key(&e));
    }

    #[test]
    fn convergent_ciphertexts() {
        // Two holders of the same element produce the same block with no
        // shared secret.
        let alice = Element::from_u32(31337);
        let bob = Element::from_u32(31337);
        let a = prp_encrypt(&hash_derived_key(&alice), &alice).unwrap();
        let b = prp_encrypt(&hash_derived_key(&bob), &bob).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn no_key_collisions_over_a_million_integers() {
        let mut seen = HashSet::with_capacity(1 << 20);
        for v in 0..1_000_000u32 {
            assert!(seen.insert(hash_derived_key(&Element::from_u32(v)).to_bytes()));
        }
    }
}
