//! `UMCLUST1` format: 8-byte ASCII magic, little-endian `u64` row and column
//! counts, then row-major little-endian `f32` values.

use std::io::Write;
use std::path::Path;

use super::{read_file, Dataset};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const BINARY_MAGIC: &[u8; 8] = b"UMCLUST1";
const HEADER_LEN: usize = 24;

pub fn load_binary_matrix(path: &Path) -> Result<Dataset> {
    parse_binary_matrix(&read_file(path)?)
}

pub(crate) fn parse_binary_matrix(bytes: &[u8]) -> Result<Dataset> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    if &bytes[..8] != BINARY_MAGIC {
        return Err(Error::WrongMagic {
            expected: String::from_utf8_lossy(BINARY_MAGIC).into_owned(),
            found: String::from_utf8_lossy(&bytes[..8]).into_owned(),
        });
    }
    let m = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let d = u64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes"));
    if m == 0 || d == 0 {
        return Err(Error::EmptyInput);
    }
    let expected = usize::try_from(m)
        .ok()
        .and_then(|m| usize::try_from(d).ok().and_then(|d| m.checked_mul(d)))
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or_else(|| Error::Format(format!("header dimensions {m} x {d} overflow")))?;
    if bytes.len() < expected {
        return Err(Error::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(Error::Format(format!(
            "{} trailing bytes after payload",
            bytes.len() - expected
        )));
    }
    let data = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
        .collect();
    Dataset::new(Matrix::new(m as usize, d as usize, data)?, None)
}

/// Serializes a matrix, narrowing values to `f32`.
pub fn write_binary_matrix<W: Write>(mut out: W, matrix: &Matrix) -> std::io::Result<()> {
    out.write_all(BINARY_MAGIC)?;
    out.write_all(&(matrix.rows() as u64).to_le_bytes())?;
    out.write_all(&(matrix.cols() as u64).to_le_bytes())?;
    for &v in matrix.as_slice() {
        out.write_all(&(v as f32).to_le_bytes())?;
    }
    Ok(())
}

pub fn save_binary_matrix(path: &Path, matrix: &Matrix) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    write_binary_matrix(&mut out, matrix)
        .and_then(|()| out.flush())
        .map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn encode(m: u64, d: u64, values: &[f32]) -> Vec<u8> {
        let mut buf = BINARY_MAGIC.to_vec();
        buf.extend(m.to_le_bytes());
        buf.extend(d.to_le_bytes());
        for v in values {
            buf.extend(v.to_le_bytes());
        }
        buf
    }

    #[test]
    fn golden_single_row() {
        let bytes = encode(1, 3, &[1.0, 2.0, 3.0]);
        assert_eq!(
            &bytes[..24],
            b"UMCLUST1\x01\0\0\0\0\0\0\0\x03\0\0\0\0\0\0\0"
        );
        assert_eq!(&bytes[24..28], &[0x00, 0x00, 0x80, 0x3f]);
        let ds = parse_binary_matrix(&bytes).unwrap();
        assert_eq!(ds.sample_count(), 1);
        assert_eq!(ds.features().as_slice(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn bad_magic() {
        let mut bytes = encode(1, 1, &[0.5]);
        bytes[7] = b'2';
        assert!(matches!(
            parse_binary_matrix(&bytes),
            Err(Error::WrongMagic { .. })
        ));
    }

    #[test]
    fn empty_and_truncated() {
        assert!(matches!(
            parse_binary_matrix(&encode(0, 3, &[])),
            Err(Error::EmptyInput)
        ));
        let bytes = encode(2, 2, &[1.0, 2.0, 3.0]);
        assert!(matches!(
            parse_binary_matrix(&bytes),
            Err(Error::Truncated { expected: 40, found: 36 })
        ));
    }

    proptest! {
        #[test]
        fn byte_exact_round_trip(
            rows in 1usize..6,
            cols in 1usize..6,
            seed in proptest::collection::vec(-1e6f32..1e6, 36),
        ) {
            let values = &seed[..rows * cols];
            let original = encode(rows as u64, cols as u64, values);
            let ds = parse_binary_matrix(&original).unwrap();
            let mut written = Vec::new();
            write_binary_matrix(&mut written, ds.features()).unwrap();
            prop_assert_eq!(written, original);
        }
    }
}
