//! KMX1 binary kernel files and headerless CSV import.
//!
//! Layout: the four magic bytes `KMX1`, two little-endian `u64` dimensions
//! (rows, cols), then `rows * cols` little-endian IEEE-754 `f64` values in
//! row-major order. Nothing may follow the payload.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::GramMatrix;
use crate::error::{Error, Result};

pub const KMX_MAGIC: &[u8; 4] = b"KMX1";
const HEADER_LEN: usize = 4 + 8 + 8;

pub fn encode_kmx(m: &Array2<f64>) -> Vec<u8> {
    let (rows, cols) = m.dim();
    let mut out = Vec::with_capacity(HEADER_LEN + rows * cols * 8);
    out.extend_from_slice(KMX_MAGIC);
    out.extend_from_slice(&(rows as u64).to_le_bytes());
    out.extend_from_slice(&(cols as u64).to_le_bytes());
    for v in m.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Decodes a KMX1 payload; `path` is only used in error messages.
pub fn decode_kmx(bytes: &[u8], path: &Path) -> Result<Array2<f64>> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::bad_format(path, "file shorter than the KMX1 header"));
    }
    if &bytes[..4] != KMX_MAGIC {
        return Err(Error::bad_format(path, "magic bytes are not KMX1"));
    }
    let rows = u64::from_le_bytes(bytes[4..12].try_into().unwrap());
    let cols = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
    let payload_len = rows
        .checked_mul(cols)
        .and_then(|c| c.checked_mul(8))
        .and_then(|b| usize::try_from(b).ok())
        .ok_or_else(|| Error::bad_format(path, format!("dimensions {rows}x{cols} overflow")))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() < payload_len {
        return Err(Error::bad_format(
            path,
            format!(
                "truncated payload: {rows}x{cols} needs {payload_len} bytes, found {}",
                payload.len()
            ),
        ));
    }
    if payload.len() > payload_len {
        return Err(Error::bad_format(
            path,
            format!(
                "{} trailing bytes after payload",
                payload.len() - payload_len
            ),
        ));
    }
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if let Some(k) = values.iter().position(|v| v.is_nan()) {
        return Err(Error::bad_format(
            path,
            format!(
                "NaN entry at ({}, {})",
                k / cols as usize,
                k % cols as usize
            ),
        ));
    }
    Array2::from_shape_vec((rows as usize, cols as usize), values)
        .map_err(|e| Error::bad_format(path, e.to_string()))
}

pub fn read_kmx(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_kmx(&bytes, path)
}

pub fn write_kmx(path: impl AsRef<Path>, m: &Array2<f64>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_kmx(m)).map_err(|e| Error::io(path, e))
}

/// Loads a Gram matrix from a KMX1 file, or from headerless CSV when the
/// extension is `.csv`.
pub fn load_gram(path: impl AsRef<Path>) -> Result<GramMatrix> {
    let path = path.as_ref();
    let m = if path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
    {
        read_csv_matrix(path)?
    } else {
        read_kmx(path)?
    };
    GramMatrix::new(m)
}

pub fn store_gram(k: &GramMatrix, path: impl AsRef<Path>) -> Result<()> {
    write_kmx(path, k.values())
}

/// Headerless, comma-separated numeric matrix. Blank lines are skipped.
pub fn read_csv_matrix(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv_matrix(&text, path)
}

pub(crate) fn parse_csv_matrix(text: &str, path: &Path) -> Result<Array2<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| {
                let f = f.trim();
                f.parse::<f64>().map_err(|_| {
                    Error::bad_format(path, format!("line {}: '{f}' is not a number", line_no + 1))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::bad_format(
                    path,
                    format!(
                        "line {} has {} fields, expected {}",
                        line_no + 1,
                        row.len(),
                        first.len()
                    ),
                ));
            }
        }
        if row.iter().any(|v| v.is_nan()) {
            return Err(Error::bad_format(
                path,
                format!("line {}: NaN entry", line_no + 1),
            ));
        }
        rows.push(row);
    }
    let cols = rows.first().map_or(0, Vec::len);
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((rows.len(), cols), flat)
        .map_err(|e| Error::bad_format(path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn one_by_one_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("k.kmx");
        let k = GramMatrix::new(array![[2.5]]).unwrap();
        store_gram(&k, &p).unwrap();
        assert_eq!(load_gram(&p).unwrap(), k);
        let bytes = fs::read(&p).unwrap();
        assert_eq!(bytes.len(), 28);
        assert_eq!(&bytes[..4], b"KMX1");
        assert_eq!(&bytes[4..12], &1u64.to_le_bytes());
    }

    #[test]
    fn store_of_load_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.kmx");
        let q = dir.path().join("b.kmx");
        let k = GramMatrix::new(array![[1.0, 0.1 + 0.2], [0.1 + 0.2, 1e-300]]).unwrap();
        store_gram(&k, &p).unwrap();
        store_gram(&load_gram(&p).unwrap(), &q).unwrap();
        assert_eq!(fs::read(&p).unwrap(), fs::read(&q).unwrap());
    }

    #[test]
    fn format_errors_are_reported() {
        let p = Path::new("mem");
        let good = encode_kmx(&array![[1.0, 2.0], [2.0, 1.0]]);

        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(matches!(
            decode_kmx(&bad_magic, p),
            Err(Error::BadFormat { .. })
        ));

        assert!(matches!(
            decode_kmx(&good[..good.len() - 3], p),
            Err(Error::BadFormat { .. })
        ));
        assert!(matches!(
            decode_kmx(&good[..10], p),
            Err(Error::BadFormat { .. })
        ));

        let mut overflow = good.clone();
        overflow[4..12].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(matches!(
            decode_kmx(&overflow, p),
            Err(Error::BadFormat { .. })
        ));

        let nan = encode_kmx(&array![[f64::NAN]]);
        assert!(matches!(decode_kmx(&nan, p), Err(Error::BadFormat { .. })));

        let mut trailing = good.clone();
        trailing.push(0);
        assert!(matches!(
            decode_kmx(&trailing, p),
            Err(Error::BadFormat { .. })
        ));
    }

    #[test]
    fn csv_import() {
        let m = parse_csv_matrix("1, 0.5\n0.5,2\n\n", Path::new("x.csv")).unwrap();
        assert_eq!(m, array![[1.0, 0.5], [0.5, 2.0]]);
        assert!(parse_csv_matrix("1,2\n3\n", Path::new("x.csv")).is_err());
        assert!(parse_csv_matrix("1,a\n", Path::new("x.csv")).is_err());
    }

    proptest! {
        #[test]
        fn kmx_round_trip_is_bit_exact(
            rows in 0usize..5,
            cols in 0usize..5,
            bits in prop::collection::vec(any::<u64>(), 25),
        ) {
            let m = Array2::from_shape_fn((rows, cols), |(i, j)| {
                let v = f64::from_bits(bits[i * 5 + j]);
                if v.is_nan() { 0.0 } else { v }
            });
            let back = decode_kmx(&encode_kmx(&m), Path::new("mem")).unwrap();
            prop_assert_eq!(back.dim(), m.dim());
            for (a, b) in back.iter().zip(m.iter()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
