//! Cryptographic building blocks: a deterministic block permutation over
//! encoded elements, hash-derived (convergent) keys, and a blinded-exponent
//! OPRF over the ristretto255 group.

mod hash;
mod oprf;
mod prp;

pub use hash::{element_digest, hash_derived_key, ElementDigest, DIGEST_LEN};
pub use oprf::{
    oprf_blind, oprf_blind_batch, oprf_eval, oprf_eval_batch, oprf_local, oprf_unblind,
    oprf_unblind_batch, BlindScalar, BlindedPoint, OprfKey, PrfOutput, POINT_LEN,
};
pub use prp::{
    decode_block, encode_block, prp_decrypt, prp_encrypt, prp_encrypt_with, BlockContent,
    DigestFallback, Prp, PrpBlock, PrpKey, BLOCK_LEN, PAYLOAD_CAPACITY,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CryptoError {
    #[error("element encoding of {len} bytes exceeds the {PAYLOAD_CAPACITY}-byte block payload")]
    OversizeElement { len: usize },
    #[error("decrypted block is not a canonical element encoding")]
    MalformedPadding,
    #[error("bytes do not decode to a group element")]
    InvalidPoint,
    #[error("OPRF key must be a nonzero canonical scalar")]
    InvalidKey,
    #[error("batch length mismatch: {points} points, {blinds} blinds")]
    BatchMismatch { points: usize, blinds: usize },
}
