//! EMBX: `"EMBX"`, version byte `1`, `n: u32 LE`, `d: u32 LE`, four reserved
//! zero bytes, then `n*d` little-endian `f32` values in row-major order.

use std::fs;
use std::path::Path;

use super::EmbeddingMatrix;
use crate::error::{Error, Result};

const MAGIC: [u8; 4] = *b"EMBX";
const VERSION: u8 = 1;
pub const EMBX_HEADER_LEN: usize = 17;

pub fn encode_embx(m: &EmbeddingMatrix) -> Result<Vec<u8>> {
    if m.rows() == 0 {
        return Err(Error::shape("EMBX requires at least one row"));
    }
    let n = u32::try_from(m.rows()).map_err(|_| Error::shape("row count exceeds u32"))?;
    let d = u32::try_from(m.dims()).map_err(|_| Error::shape("dims exceed u32"))?;
    let mut out = Vec::with_capacity(EMBX_HEADER_LEN + 4 * m.data().len());
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&n.to_le_bytes());
    out.extend_from_slice(&d.to_le_bytes());
    out.extend_from_slice(&[0u8; 4]);
    for (k, &v) in m.data().iter().enumerate() {
        let f = v as f32;
        if !f.is_finite() {
            // finite f64 beyond f32 range
            return Err(Error::NonFinite {
                row: k / m.dims(),
                col: k % m.dims(),
            });
        }
        out.extend_from_slice(&f.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_embx(bytes: &[u8]) -> Result<EmbeddingMatrix> {
    if bytes.len() < EMBX_HEADER_LEN {
        if bytes.len() >= 4 && bytes[..4] != MAGIC {
            return Err(bad_magic(bytes));
        }
        return Err(Error::Truncated {
            expected: EMBX_HEADER_LEN,
            found: bytes.len(),
        });
    }
    if bytes[..4] != MAGIC {
        return Err(bad_magic(bytes));
    }
    if bytes[4] != VERSION {
        return Err(Error::VersionMismatch {
            expected: VERSION,
            found: bytes[4],
        });
    }
    let n = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(bytes[9..13].try_into().unwrap()) as usize;
    if bytes[13..17] != [0u8; 4] {
        return Err(Error::Format("EMBX reserved bytes must be zero".into()));
    }
    if n == 0 || d == 0 {
        return Err(Error::Format(format!("EMBX shape {n}x{d} is empty")));
    }
    let expected = EMBX_HEADER_LEN + 4 * n * d;
    if bytes.len() < expected {
        return Err(Error::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(Error::Format(format!(
            "{} trailing bytes after EMBX payload",
            bytes.len() - expected
        )));
    }
    let data: Vec<f64> = bytes[EMBX_HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    EmbeddingMatrix::new(n, d, data)
}

fn bad_magic(bytes: &[u8]) -> Error {
    let mut found = [0u8; 4];
    found.copy_from_slice(&bytes[..4]);
    Error::BadMagic {
        expected: MAGIC,
        found,
    }
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_embx(&bytes)
}

pub fn write_embeddings(matrix: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_embx(matrix)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn header(n: u32, d: u32) -> Vec<u8> {
        let mut h = b"EMBX\x01".to_vec();
        h.extend_from_slice(&n.to_le_bytes());
        h.extend_from_slice(&d.to_le_bytes());
        h.extend_from_slice(&[0; 4]);
        h
    }

    #[test]
    fn decodes_direct_encoding() {
        let mut bytes = header(2, 3);
        for v in [1f32, 2., 3., 4., 5., 6.] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let m = decode_embx(&bytes).unwrap();
        assert_eq!((m.rows(), m.dims()), (2, 3));
        assert_eq!(m.row(0), &[1., 2., 3.]);
        assert_eq!(m.row(1), &[4., 5., 6.]);
    }

    #[test]
    fn smallest_file_is_21_bytes() {
        let m = EmbeddingMatrix::zeros(1, 1);
        let bytes = encode_embx(&m).unwrap();
        assert_eq!(bytes.len(), 21);
        assert_eq!(&bytes[..17], &header(1, 1)[..]);
        assert_eq!(&bytes[17..], &0f32.to_le_bytes());
    }

    #[test]
    fn identity_payload_is_row_major() {
        let m = EmbeddingMatrix::new(2, 2, vec![1., 0., 0., 1.]).unwrap();
        let bytes = encode_embx(&m).unwrap();
        let payload: Vec<f32> = bytes[17..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        assert_eq!(payload, vec![1., 0., 0., 1.]);
    }

    #[test]
    fn distinct_errors() {
        let mut bytes = header(2, 3);
        for v in [1f32, 2., 3., 4., 5.] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        assert!(matches!(
            decode_embx(&bytes),
            Err(Error::Truncated {
                expected: 41,
                found: 37
            })
        ));

        let mut bad = header(1, 1);
        bad[0] = b'X';
        bad.extend_from_slice(&[0; 4]);
        assert!(matches!(decode_embx(&bad), Err(Error::BadMagic { .. })));

        let mut v2 = header(1, 1);
        v2[4] = 2;
        v2.extend_from_slice(&[0; 4]);
        assert!(matches!(
            decode_embx(&v2),
            Err(Error::VersionMismatch {
                expected: 1,
                found: 2
            })
        ));

        let mut nan = header(1, 2);
        nan.extend_from_slice(&1f32.to_le_bytes());
        nan.extend_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(
            decode_embx(&nan),
            Err(Error::NonFinite { row: 0, col: 1 })
        ));
    }

    #[test]
    fn nan_never_reaches_disk() {
        // The constructor refuses NaN, so a NaN matrix cannot even be built.
        assert!(EmbeddingMatrix::new(1, 1, vec![f64::NAN]).is_err());
        let dir = tempfile::tempdir().unwrap();
        let big = EmbeddingMatrix::new(1, 1, vec![1e300]).unwrap();
        let path = dir.path().join("big.embx");
        assert!(write_embeddings(&big, &path).is_err());
        assert!(!path.exists());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.embx");
        let m = EmbeddingMatrix::new(2, 2, vec![0.1, -2.5, 3.25, 1e-3])
            .unwrap()
            .to_f32_precision();
        write_embeddings(&m, &path).unwrap();
        assert_eq!(read_embeddings(&path).unwrap(), m);
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            (n, d, vals) in (1usize..6, 1usize..6).prop_flat_map(|(n, d)| {
                (Just(n), Just(d), prop::collection::vec(-1e6f32..1e6f32, n * d))
            })
        ) {
            let m = EmbeddingMatrix::new(n, d, vals.iter().map(|&v| v as f64).collect()).unwrap();
            let bytes = encode_embx(&m).unwrap();
            let back = decode_embx(&bytes).unwrap();
            prop_assert_eq!(&back, &m);
            prop_assert_eq!(encode_embx(&back).unwrap(), bytes);
        }
    }
}
