//! FMAP: little-endian binary container for a single `(B, C, H, W)` f32 tensor.
//!
//! Layout, no padding and no checksum:
//!
//! | offset | size    | field                          |
//! |--------|---------|--------------------------------|
//! | 0      | 4       | magic `46 4D 41 50` ("FMAP")   |
//! | 4      | 4       | u32 version = 1                |
//! | 8      | 4       | u32 dtype = 1 (f32)            |
//! | 12     | 32      | u64 × 4 dims (B, C, H, W)      |
//! | 44     | 4·BCHW  | f32 payload, row-major         |

use std::path::Path;

use super::{Dims, FeatureMap};
use crate::error::{Error, Result};

pub const FMAP_MAGIC: [u8; 4] = *b"FMAP";
pub const FMAP_VERSION: u32 = 1;
const DTYPE_F32: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 4 * 8;

pub fn encode_fmap(x: &FeatureMap) -> Vec<u8> {
    let dims = x.dims();
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * dims.len());
    out.extend_from_slice(&FMAP_MAGIC);
    out.extend_from_slice(&FMAP_VERSION.to_le_bytes());
    out.extend_from_slice(&DTYPE_F32.to_le_bytes());
    for d in dims.as_array() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in x.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

fn u64_at(bytes: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap())
}

pub fn decode_fmap(bytes: &[u8]) -> Result<FeatureMap> {
    if bytes.len() < 4 || bytes[..4] != FMAP_MAGIC {
        return Err(Error::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated {
            expected: HEADER_LEN,
            actual: bytes.len(),
        });
    }
    let version = u32_at(bytes, 4);
    if version != FMAP_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let dtype = u32_at(bytes, 8);
    if dtype != DTYPE_F32 {
        return Err(Error::UnsupportedDtype(dtype));
    }
    let raw: [u64; 4] = std::array::from_fn(|i| u64_at(bytes, 12 + 8 * i));
    let payload_len = raw
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(usize::try_from(d).ok()?))
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or(Error::DimOverflow(raw))?;
    if bytes.len() < payload_len {
        return Err(Error::Truncated {
            expected: payload_len,
            actual: bytes.len(),
        });
    }
    if bytes.len() > payload_len {
        return Err(Error::TrailingBytes(bytes.len() - payload_len));
    }
    let dims = Dims::new(
        raw[0] as usize,
        raw[1] as usize,
        raw[2] as usize,
        raw[3] as usize,
    );
    let data = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    FeatureMap::new(dims, data)
}

pub fn read_fmap(path: impl AsRef<Path>) -> Result<FeatureMap> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_fmap(&bytes)
}

pub fn write_fmap(path: impl AsRef<Path>, x: &FeatureMap) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_fmap(x)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> FeatureMap {
        FeatureMap::new(Dims::new(1, 1, 2, 2), vec![1.0, 2.0, 3.0, 4.0]).unwrap()
    }

    #[test]
    fn layout_of_a_two_by_two_map() {
        let bytes = encode_fmap(&small());
        assert_eq!(bytes.len(), 60);
        assert_eq!(&bytes[..12], b"FMAP\x01\x00\x00\x00\x01\x00\x00\x00");
        assert_eq!(&bytes[12..20], &1u64.to_le_bytes());
        assert_eq!(&bytes[36..44], &2u64.to_le_bytes());
        assert_eq!(&bytes[44..48], &[0x00, 0x00, 0x80, 0x3F]);
        assert_eq!(&bytes[56..60], &4.0f32.to_le_bytes());
    }

    #[test]
    fn empty_input_is_bad_magic() {
        assert!(matches!(decode_fmap(&[]), Err(Error::BadMagic)));
        assert!(matches!(decode_fmap(b"FMAQ"), Err(Error::BadMagic)));
    }

    #[test]
    fn header_errors_are_distinct() {
        let good = encode_fmap(&small());

        let mut v2 = good.clone();
        v2[4] = 2;
        assert!(matches!(
            decode_fmap(&v2),
            Err(Error::UnsupportedVersion(2))
        ));

        let mut f16 = good.clone();
        f16[8] = 2;
        assert!(matches!(decode_fmap(&f16), Err(Error::UnsupportedDtype(2))));

        assert!(matches!(
            decode_fmap(&good[..59]),
            Err(Error::Truncated {
                expected: 60,
                actual: 59
            })
        ));
        assert!(matches!(
            decode_fmap(&good[..20]),
            Err(Error::Truncated { .. })
        ));

        let mut long = good.clone();
        long.push(0);
        assert!(matches!(decode_fmap(&long), Err(Error::TrailingBytes(1))));

        let mut huge = good.clone();
        huge[12..20].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(matches!(decode_fmap(&huge), Err(Error::DimOverflow(_))));

        let mut zero = good;
        zero[12..20].copy_from_slice(&0u64.to_le_bytes());
        zero.truncate(HEADER_LEN);
        assert!(matches!(decode_fmap(&zero), Err(Error::InvalidDims(_))));
    }

    #[test]
    fn non_finite_payload_is_rejected() {
        let mut bytes = encode_fmap(&small());
        bytes[48..52].copy_from_slice(&f32::NAN.to_le_bytes());
        match decode_fmap(&bytes) {
            Err(Error::NonFinite { index, .. }) => assert_eq!(index, [0, 0, 0, 1]),
            other => panic!("unexpected {other:?}"),
        }
    }
}
