//! Message payloads: arrays are a u32 little-endian count followed by
//! fixed-width items; a key is its 16 raw bytes.

use super::EgpsiError;
use crate::crypto::{BlindedPoint, PrfOutput, PrpBlock, PrpKey, BLOCK_LEN, POINT_LEN};

fn encode_array<const N: usize>(items: impl ExactSizeIterator<Item = [u8; N]>) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + N * items.len());
    out.extend_from_slice(&(items.len() as u32).to_le_bytes());
    for item in items {
        out.extend_from_slice(&item);
    }
    out
}

fn decode_array<const N: usize>(what: &str, payload: &[u8]) -> Result<Vec<[u8; N]>, EgpsiError> {
    let malformed = |detail: String| EgpsiError::ProtocolAbort(format!("malformed {what}: {detail}"));
    let count: [u8; 4] = payload
        .get(..4)
        .ok_or_else(|| malformed(format!("{} bytes", payload.len())))?
        .try_into()
        .unwrap();
    let count = u32::from_le_bytes(count) as usize;
    let body = &payload[4..];
    if count.checked_mul(N) != Some(body.len()) {
        return Err(malformed(format!("count {count} with {} body bytes", body.len())));
    }
    Ok(body.chunks_exact(N).map(|c| c.try_into().unwrap()).collect())
}

pub fn encode_blocks(blocks: &[PrpBlock]) -> Vec<u8> {
    encode_array::<BLOCK_LEN>(blocks.iter().map(|b| b.0))
}

pub fn decode_blocks(payload: &[u8]) -> Result<Vec<PrpBlock>, EgpsiError> {
    Ok(decode_array::<BLOCK_LEN>("block array", payload)?
        .into_iter()
        .map(PrpBlock)
        .collect())
}

pub fn encode_points(points: &[BlindedPoint]) -> Vec<u8> {
    encode_array::<POINT_LEN>(points.iter().map(|p| p.0))
}

/// Does not check that the points are group elements; the arithmetic
/// that consumes them does.
pub fn decode_points(payload: &[u8]) -> Result<Vec<BlindedPoint>, EgpsiError> {
    Ok(decode_array::<POINT_LEN>("point array", payload)?
        .into_iter()
        .map(BlindedPoint)
        .collect())
}

pub fn encode_prf_outputs(outputs: &[PrfOutput]) -> Vec<u8> {
    encode_array::<32>(outputs.iter().map(|o| o.0))
}

pub fn decode_prf_outputs(payload: &[u8]) -> Result<Vec<PrfOutput>, EgpsiError> {
    Ok(decode_array::<32>("PRF output array", payload)?
        .into_iter()
        .map(PrfOutput)
        .collect())
}

pub fn encode_key(key: &PrpKey) -> Vec<u8> {
    key.to_bytes().to_vec()
}

pub fn decode_key(payload: &[u8]) -> Result<PrpKey, EgpsiError> {
    let bytes: [u8; 16] = payload
        .try_into()
        .map_err(|_| EgpsiError::ProtocolAbort(format!("key payload of {} bytes", payload.len())))?;
    Ok(PrpKey::from_bytes(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrips() {
        let blocks = vec![PrpBlock([1; 16]), PrpBlock([2; 16])];
        let enc = encode_blocks(&blocks);
        assert_eq!(enc.len(), 4 + 32);
        assert_eq!(&enc[..4], &[2, 0, 0, 0]);
        assert_eq!(decode_blocks(&enc).unwrap(), blocks);

        let outs = vec![PrfOutput([9; 32])];
        assert_eq!(decode_prf_outputs(&encode_prf_outputs(&outs)).unwrap(), outs);

        let key = PrpKey::from_bytes([7; 16]);
        assert_eq!(decode_key(&encode_key(&key)).unwrap(), key);
        assert!(decode_blocks(&encode_blocks(&[])).unwrap().is_empty());
    }

    #[test]
    fn rejects_bad_lengths() {
        let mut enc = encode_blocks(&[PrpBlock([1; 16])]);
        enc.pop();
        assert!(matches!(decode_blocks(&enc), Err(EgpsiError::ProtocolAbort(_))));
        assert!(decode_points(&[1, 0]).is_err());
        assert!(decode_points(&[2, 0, 0, 0]).is_err());
        assert!(decode_key(&[0; 15]).is_err());
        // a count whose byte size overflows
        assert!(decode_blocks(&[0xff, 0xff, 0xff, 0xff]).is_err());
    }
}
