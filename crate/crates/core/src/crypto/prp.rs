use aes::cipher::generic_array::GenericArray;
use aes::cipher::{BlockDecrypt, BlockEncrypt, KeyInit};
use aes::Aes128;
use rand::{CryptoRng, RngCore};

use super::hash::{element_digest, ElementDigest, DIGEST_LEN};
use super::CryptoError;
use crate::element::Element;

pub const BLOCK_LEN: usize = 16;
/// Largest element encoding that fits a block verbatim.
pub const PAYLOAD_CAPACITY: usize = 14;

const PAD: u8 = 0xA5;
const DIGEST_TAG: u8 = 0x80 | DIGEST_LEN as u8;

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct PrpKey([u8; 16]);

impl PrpKey {
    pub fn random<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut k = [0u8; 16];
        rng.fill_bytes(&mut k);
        PrpKey(k)
    }

    pub fn from_bytes(bytes: [u8; 16]) -> Self {
        PrpKey(bytes)
    }

    pub fn to_bytes(&self) -> [u8; 16] {
        self.0
    }
}

impl std::fmt::Debug for PrpKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("PrpKey(..)")
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct PrpBlock(pub [u8; BLOCK_LEN]);

impl PrpBlock {
    pub fn as_u128(&self) -> u128 {
        u128::from_le_bytes(self.0)
    }
}

/// Whether elements longer than [`PAYLOAD_CAPACITY`] are replaced by their
/// truncated digest before encryption.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default)]
pub enum DigestFallback {
    #[default]
    Disabled,
    Enabled,
}

/// What a valid decrypted block carries. Digests are resolved by the holder
/// through its own digest-to-element map.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum BlockContent {
    Element(Element),
    Digest(ElementDigest),
}

/// Canonical plaintext block: payload, one length-tag byte, then padding.
pub fn encode_block(
    element: &Element,
    fallback: DigestFallback,
) -> Result<[u8; BLOCK_LEN], CryptoError> {
    let mut block = [PAD; BLOCK_LEN];
    let bytes = element.as_bytes();
    if bytes.len() <= PAYLOAD_CAPACITY {
        block[..bytes.len()].copy_from_slice(bytes);
        block[bytes.len()] = bytes.len() as u8;
        return Ok(block);
    }
    match fallback {
        DigestFallback::Disabled => Err(CryptoError::OversizeElement { len: bytes.len() }),
        DigestFallback::Enabled => {
            let digest = element_digest(element);
            block[..DIGEST_LEN].copy_from_slice(&digest.0);
            block[DIGEST_LEN] = DIGEST_TAG;
            Ok(block)
        }
    }
}

pub fn decode_block(block: &[u8; BLOCK_LEN]) -> Result<BlockContent, CryptoError> {
    let trailing = block.iter().rev().take_while(|&&b| b == PAD).count();
    if trailing == BLOCK_LEN {
        return Err(CryptoError::MalformedPadding);
    }
    let tag_pos = BLOCK_LEN - 1 - trailing;
    let tag = block[tag_pos];
    if tag as usize == tag_pos && tag_pos <= PAYLOAD_CAPACITY {
        Ok(BlockContent::Element(Element::from_bytes(&block[..tag_pos])))
    } else if tag == DIGEST_TAG && tag_pos == DIGEST_LEN {
        let mut d = [0u8; DIGEST_LEN];
        d.copy_from_slice(&block[..DIGEST_LEN]);
        Ok(BlockContent::Digest(ElementDigest(d)))
    } else {
        Err(CryptoError::MalformedPadding)
    }
}

/// A keyed AES-128 permutation applied to single encoded blocks. Keeping the
/// expanded key around amortizes the key schedule over a whole set.
#[derive(Clone)]
pub struct Prp {
    cipher: Aes128,
}

impl Prp {
    pub fn new(key: &PrpKey) -> Self {
        Prp {
            cipher: Aes128::new(GenericArray::from_slice(&key.0)),
        }
    }

    pub fn encrypt(&self, element: &Element, fallback: DigestFallback) -> Result<PrpBlock, CryptoError> {
        Ok(self.encrypt_encoded(&encode_block(element, fallback)?))
    }

    pub fn encrypt_encoded(&self, plain: &[u8; BLOCK_LEN]) -> PrpBlock {
        let mut b = GenericArray::clone_from_slice(plain);
        self.cipher.encrypt_block(&mut b);
        PrpBlock(b.into())
    }

    /// Encrypts a batch of encoded blocks, letting the cipher pipeline them.
    pub fn encrypt_encoded_batch(&self, plain: &[[u8; BLOCK_LEN]]) -> Vec<PrpBlock> {
        let mut blocks: Vec<_> = plain.iter().map(|p| GenericArray::clone_from_slice(p)).collect();
        self.cipher.encrypt_blocks(&mut blocks);
        blocks.into_iter().map(|b| PrpBlock(b.into())).collect()
    }

    pub fn decrypt(&self, block: &PrpBlock) -> Result<BlockContent, CryptoError> {
        let mut b = GenericArray::clone_from_slice(&block.0);
        self.cipher.decrypt_block(&mut b);
        decode_block(&b.into())
    }
}

/// Encrypts an element that fits a block verbatim.
pub fn prp_encrypt(key: &PrpKey, element: &Element) -> Result<PrpBlock, CryptoError> {
    prp_encrypt_with(key, element, DigestFallback::Disabled)
}

pub fn prp_encrypt_with(
    key: &PrpKey,
    element: &Element,
    fallback: DigestFallback,
) -> Result<PrpBlock, CryptoError> {
    Prp::new(key).encrypt(element, fallback)
}

pub fn prp_decrypt(key: &PrpKey, block: &PrpBlock) -> Result<BlockContent, CryptoError> {
    Prp::new(key).decrypt(block)
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    use super::*;

    fn rng() -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(7)
    }

    #[test]
    fn deterministic() {
        let key = PrpKey::random(&mut rng());
        let e = Element::from_u32(123);
        assert_eq!(prp_encrypt(&key, &e).unwrap(), prp_encrypt(&key, &e).unwrap());
    }

    #[test]
    fn roundtrip_and_zero() {
        let mut rng = rng();
        let key = PrpKey::random(&mut rng);
        for v in [0u32, 1, u32::MAX, rng.gen()] {
            let e = Element::from_u32(v);
            let c = prp_encrypt(&key, &e).unwrap();
            assert_eq!(prp_decrypt(&key, &c).unwrap(), BlockContent::Element(e));
        }
    }

    #[test]
    fn distinct_elements_distinct_blocks() {
        let key = PrpKey::random(&mut rng());
        let a = prp_encrypt(&key, &Element::from_u32(1)).unwrap();
        let b = prp_encrypt(&key, &Element::from_u32(2)).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn every_payload_length_roundtrips() {
        let key = PrpKey::random(&mut rng());
        for len in 0..=PAYLOAD_CAPACITY {
            // Payload bytes equal to the pad byte must not confuse the tag scan.
            let e = Element::from_bytes(vec![PAD; len]);
            let c = prp_encrypt(&key, &e).unwrap();
            assert_eq!(prp_decrypt(&key, &c).unwrap(), BlockContent::Element(e));
        }
    }

    #[test]
    fn oversize_elements() {
        let key = PrpKey::random(&mut rng());
        let long = Element::from("a record that is far longer than fourteen bytes");
        assert_eq!(
            prp_encrypt(&key, &long),
            Err(CryptoError::OversizeElement { len: long.len() })
        );
        let c = prp_encrypt_with(&key, &long, DigestFallback::Enabled).unwrap();
        assert_eq!(
            prp_decrypt(&key, &c).unwrap(),
            BlockContent::Digest(element_digest(&long))
        );
    }

    #[test]
    fn wrong_key_fails_padding_check() {
        let mut rng = rng();
        let trials = 10_000;
        let mut failures = 0;
        for _ in 0..trials {
            let good = PrpKey::random(&mut rng);
            let bad = PrpKey::random(&mut rng);
            let c = prp_encrypt(&good, &Element::from_u32(rng.gen())).unwrap();
            if prp_decrypt(&bad, &c) == Err(CryptoError::MalformedPadding) {
                failures += 1;
            }
        }
        assert!(failures * 1000 >= trials * 999, "{failures}/{trials}");
    }

    #[test]
    fn decode_rejects_all_padding() {
        assert_eq!(decode_block(&[PAD; 16]), Err(CryptoError::MalformedPadding));
        let mut b = [PAD; 16];
        b[3] = 9; // tag value does not match its position
        assert_eq!(decode_block(&b), Err(CryptoError::MalformedPadding));
    }

    #[test]
    fn batch_matches_single() {
        let key = PrpKey::random(&mut rng());
        let prp = Prp::new(&key);
        let plain: Vec<_> = (0..37u32)
            .map(|v| encode_block(&Element::from_u32(v), DigestFallback::Disabled).unwrap())
            .collect();
        let batch = prp.encrypt_encoded_batch(&plain);
        for (p, c) in plain.iter().zip(&batch) {
            assert_eq!(prp.encrypt_encoded(p), *c);
        }
    }
}
