//! Two-message OPRF: the client sends `H(x)^r`, the key holder returns
//! `H(x)^{rk}`, and the client strips `r` to obtain `Hash(H(x)^k)`.

use curve25519_dalek::ristretto::{CompressedRistretto, RistrettoPoint};
use curve25519_dalek::scalar::Scalar;
use curve25519_dalek::traits::Identity;
use rand::{CryptoRng, RngCore};
use sha2::{Digest, Sha256, Sha512};

use super::CryptoError;
use crate::element::Element;

pub const POINT_LEN: usize = 32;

const HASH_TO_GROUP_DOMAIN: &[u8] = b"epmpd/oprf-h2g/v1";
const FINALIZE_DOMAIN: &[u8] = b"epmpd/oprf-out/v1";

#[derive(Clone, Copy, PartialEq, Eq)]
pub struct OprfKey(Scalar);

impl OprfKey {
    pub fn random<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        loop {
            let s = Scalar::random(rng);
            if s != Scalar::ZERO {
                return OprfKey(s);
            }
        }
    }

    /// Accepts a canonical little-endian scalar encoding other than zero.
    pub fn from_bytes(bytes: [u8; 32]) -> Result<Self, CryptoError> {
        let s: Option<Scalar> = Scalar::from_canonical_bytes(bytes).into();
        match s {
            Some(s) if s != Scalar::ZERO => Ok(OprfKey(s)),
            _ => Err(CryptoError::InvalidKey),
        }
    }

    pub fn to_bytes(&self) -> [u8; 32] {
        self.0.to_bytes()
    }
}

impl std::fmt::Debug for OprfKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("OprfKey(..)")
    }
}

/// Compressed ristretto255 point as carried on the wire.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct BlindedPoint(pub [u8; POINT_LEN]);

impl BlindedPoint {
    pub fn identity() -> Self {
        BlindedPoint(RistrettoPoint::identity().compress().to_bytes())
    }

    fn from_point(p: &RistrettoPoint) -> Self {
        BlindedPoint(p.compress().to_bytes())
    }

    pub fn decode(&self) -> Result<RistrettoPoint, CryptoError> {
        CompressedRistretto(self.0)
            .decompress()
            .ok_or(CryptoError::InvalidPoint)
    }

    pub fn is_valid(&self) -> bool {
        self.decode().is_ok()
    }
}

/// The client's blinding exponent, kept until the evaluation returns.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct BlindScalar(Scalar);

impl std::fmt::Debug for BlindScalar {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("BlindScalar(..)")
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct PrfOutput(pub [u8; 32]);

fn hash_to_group(element: &Element) -> RistrettoPoint {
    let mut h = Sha512::new();
    h.update(HASH_TO_GROUP_DOMAIN);
    h.update(element.as_bytes());
    RistrettoPoint::from_hash(h)
}

fn finalize(point: &RistrettoPoint) -> PrfOutput {
    let mut h = Sha256::new();
    h.update(FINALIZE_DOMAIN);
    h.update(point.compress().as_bytes());
    PrfOutput(h.finalize().into())
}

fn random_nonzero<R: RngCore + CryptoRng>(rng: &mut R) -> Scalar {
    loop {
        let s = Scalar::random(rng);
        if s != Scalar::ZERO {
            return s;
        }
    }
}

pub fn oprf_blind<R: RngCore + CryptoRng>(element: &Element, rng: &mut R) -> (BlindedPoint, BlindScalar) {
    let r = random_nonzero(rng);
    (BlindedPoint::from_point(&(hash_to_group(element) * r)), BlindScalar(r))
}

pub fn oprf_blind_batch<R: RngCore + CryptoRng>(
    elements: &[Element],
    rng: &mut R,
) -> (Vec<BlindedPoint>, Vec<BlindScalar>) {
    elements.iter().map(|e| oprf_blind(e, rng)).unzip()
}

pub fn oprf_eval(key: &OprfKey, point: &BlindedPoint) -> Result<BlindedPoint, CryptoError> {
    Ok(BlindedPoint::from_point(&(point.decode()? * key.0)))
}

pub fn oprf_eval_batch(key: &OprfKey, points: &[BlindedPoint]) -> Result<Vec<BlindedPoint>, CryptoError> {
    points.iter().map(|p| oprf_eval(key, p)).collect()
}

pub fn oprf_unblind(evaluated: &BlindedPoint, blind: &BlindScalar) -> Result<PrfOutput, CryptoError> {
    let p = evaluated.decode()?;
    Ok(finalize(&(p * blind.0.invert())))
}

/// Unblinds a whole batch, sharing one field inversion across all blinds.
pub fn oprf_unblind_batch(
    evaluated: &[BlindedPoint],
    blinds: &[BlindScalar],
) -> Result<Vec<PrfOutput>, CryptoError> {
    if evaluated.len() != blinds.len() {
        return Err(CryptoError::BatchMismatch {
            points: evaluated.len(),
            blinds: blinds.len(),
        });
    }
    let mut inverses: Vec<Scalar> = blinds.iter().map(|b| b.0).collect();
    if !inverses.is_empty() {
        Scalar::batch_invert(&mut inverses);
    }
    evaluated
        .iter()
        .zip(&inverses)
        .map(|(p, inv)| Ok(finalize(&(p.decode()? * inv))))
        .collect()
}

/// Direct evaluation with the key in hand; the reference the blinded
/// pipeline must agree with.
pub fn oprf_local(key: &OprfKey, element: &Element) -> PrfOutput {
    finalize(&(hash_to_group(element) * key.0))
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    use super::*;

    fn rng() -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(11)
    }

    fn one() -> OprfKey {
        let mut b = [0u8; 32];
        b[0] = 1;
        OprfKey::from_bytes(b).unwrap()
    }

    #[test]
    fn fresh_blinds_differ() {
        let mut rng = rng();
        let e = Element::from_u32(5);
        let (a, _) = oprf_blind(&e, &mut rng);
        let (b, _) = oprf_blind(&e, &mut rng);
        assert_ne!(a, b);
        assert!(a.is_valid() && b.is_valid());
    }

    #[test]
    fn pipeline_matches_local() {
        let mut rng = rng();
        let key = OprfKey::random(&mut rng);
        let e = Element::from_u32(77);
        let (p, r) = oprf_blind(&e, &mut rng);
        let out = oprf_unblind(&oprf_eval(&key, &p).unwrap(), &r).unwrap();
        assert_eq!(out, oprf_local(&key, &e));
    }

    #[test]
    fn identity_exponent_and_identity_point() {
        let mut rng = rng();
        let (p, _) = oprf_blind(&Element::from_u32(1), &mut rng);
        assert_eq!(oprf_eval(&one(), &p).unwrap(), p);
        let key = OprfKey::random(&mut rng);
        assert_eq!(oprf_eval(&key, &BlindedPoint::identity()).unwrap(), BlindedPoint::identity());
    }

    #[test]
    fn exponents_commute() {
        let mut rng = rng();
        let k1 = OprfKey::random(&mut rng);
        let k2 = OprfKey::random(&mut rng);
        let (p, _) = oprf_blind(&Element::from_u32(9), &mut rng);
        let a = oprf_eval(&k2, &oprf_eval(&k1, &p).unwrap()).unwrap();
        let b = oprf_eval(&k1, &oprf_eval(&k2, &p).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_invalid_points_and_keys() {
        let bad = BlindedPoint([0xff; 32]);
        let key = OprfKey::random(&mut rng());
        assert_eq!(oprf_eval(&key, &bad), Err(CryptoError::InvalidPoint));
        assert_eq!(OprfKey::from_bytes([0u8; 32]), Err(CryptoError::InvalidKey));
        assert_eq!(OprfKey::from_bytes([0xff; 32]), Err(CryptoError::InvalidKey));
    }

    #[test]
    fn distinct_keys_distinct_outputs() {
        let mut rng = rng();
        let e = Element::from_u32(2024);
        let mut seen = HashSet::new();
        for _ in 0..1000 {
            let k1 = OprfKey::random(&mut rng);
            let k2 = OprfKey::random(&mut rng);
            let a = oprf_local(&k1, &e);
            let b = oprf_local(&k2, &e);
            assert_ne!(a, b);
            assert!(seen.insert(a));
        }
    }

    #[test]
    fn blindings_of_one_element_are_distinct() {
        let mut rng = rng();
        let e = Element::from_u32(3);
        let points: HashSet<_> = (0..1000).map(|_| oprf_blind(&e, &mut rng).0).collect();
        assert_eq!(points.len(), 1000);
    }

    #[test]
    fn batch_unblind_matches_single() {
        let mut rng = rng();
        let key = OprfKey::random(&mut rng);
        let elements: Vec<_> = (0..20u32).map(Element::from_u32).collect();
        let (points, blinds) = oprf_blind_batch(&elements, &mut rng);
        let evaluated = oprf_eval_batch(&key, &points).unwrap();
        let outs = oprf_unblind_batch(&evaluated, &blinds).unwrap();
        for (e, out) in elements.iter().zip(&outs) {
            assert_eq!(*out, oprf_local(&key, e));
        }
        assert!(oprf_unblind_batch(&evaluated[..3], &blinds).is_err());
        assert!(oprf_unblind_batch(&[], &[]).unwrap().is_empty());
    }
}
