//! Precomputed frame-level embeddings.
//!
//! Binary layout (little endian): `b"SQE1"`, `T: u32`, `D: u32`, then `T * D`
//! `f32` values in row-major order.
//!
//! Text layout: one frame per line, `sample_id dim t v_1 ... v_dim`, fields
//! separated by whitespace; `t` counts frames from 0 and must be contiguous
//! per sample. Blank lines and lines starting with `#` are ignored.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::EmbeddingMatrix;
use crate::error::{Error, Result};

pub const EMBEDDING_MAGIC: &[u8; 4] = b"SQE1";

/// Frame rate recorded for precomputed features, which carry none.
pub const PRECOMPUTED_FRAME_RATE_HZ: f64 = 50.0;

pub fn encode_embedding(m: &EmbeddingMatrix) -> Vec<u8> {
    let (t, d) = m.data.dim();
    let mut out = Vec::with_capacity(12 + 4 * t * d);
    out.extend_from_slice(EMBEDDING_MAGIC);
    out.extend_from_slice(&(t as u32).to_le_bytes());
    out.extend_from_slice(&(d as u32).to_le_bytes());
    for v in m.data.iter() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

pub fn decode_embedding(bytes: &[u8]) -> Result<EmbeddingMatrix> {
    if bytes.len() < 12 || &bytes[..4] != EMBEDDING_MAGIC {
        return Err(Error::Format("missing SQE1 magic".into()));
    }
    let t = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let expected = t
        .checked_mul(d)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Format("embedding header overflows".into()))?;
    if bytes.len() - 12 != expected {
        return Err(Error::Format(format!(
            "payload is {} bytes, header implies {expected}",
            bytes.len() - 12
        )));
    }
    let values: Vec<f64> = bytes[12..]
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
        .collect();
    let data = Array2::from_shape_vec((t, d), values).map_err(|e| Error::Format(e.to_string()))?;
    EmbeddingMatrix::new(data, PRECOMPUTED_FRAME_RATE_HZ)
}

pub fn save_embedding(m: &EmbeddingMatrix, path: &Path) -> Result<()> {
    fs::write(path, encode_embedding(m)).map_err(|e| Error::io(path, e))
}

/// Loads a binary embedding file, optionally checking its dimensionality.
pub fn load_precomputed(path: &Path, expected_dim: Option<usize>) -> Result<EmbeddingMatrix> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let m = decode_embedding(&bytes).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })?;
    if let Some(d) = expected_dim {
        if m.dim() != d {
            return Err(Error::Validation(format!(
                "{}: embedding dim {} differs from corpus dim {d}",
                path.display(),
                m.dim()
            )));
        }
    }
    Ok(m)
}

pub fn embeddings_to_text(items: &[(String, EmbeddingMatrix)]) -> String {
    let mut out = String::new();
    for (id, m) in items {
        for (t, row) in m.data.rows().into_iter().enumerate() {
            let _ = write!(out, "{id} {} {t}", m.dim());
            for v in row {
                let _ = write!(out, " {v}");
            }
            out.push('\n');
        }
    }
    out
}

pub fn parse_embedding_text(text: &str) -> Result<BTreeMap<String, EmbeddingMatrix>> {
    let perr = |line: usize, msg: String| Error::Parse {
        path: "<embedding text>".into(),
        line,
        msg,
    };
    let mut rows: BTreeMap<String, (usize, Vec<f64>, usize)> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace();
        let id = it.next().unwrap().to_string();
        let dim: usize = it
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| perr(i + 1, "bad dim field".into()))?;
        let t: usize = it
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| perr(i + 1, "bad frame index".into()))?;
        let vals: Vec<f64> = it
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| perr(i + 1, "bad value".into()))?;
        if vals.len() != dim {
            return Err(perr(i + 1, format!("expected {dim} values, found {}", vals.len())));
        }
        let entry = rows.entry(id).or_insert((dim, Vec::new(), 0));
        if entry.0 != dim {
            return Err(perr(i + 1, "dim changes within a sample".into()));
        }
        if entry.2 != t {
            return Err(perr(i + 1, format!("expected frame {}, found {t}", entry.2)));
        }
        entry.1.extend(vals);
        entry.2 += 1;
    }
    rows.into_iter()
        .map(|(id, (dim, vals, t))| {
            let data = Array2::from_shape_vec((t, dim), vals).map_err(|e| Error::Format(e.to_string()))?;
            Ok((id, EmbeddingMatrix::new(data, PRECOMPUTED_FRAME_RATE_HZ)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn sample() -> EmbeddingMatrix {
        EmbeddingMatrix::new(array![[0.5, -1.25, 3.0], [2.0, 0.0, -0.75]], 50.0).unwrap()
    }

    #[test]
    fn binary_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.sqe");
        save_embedding(&sample(), &p).unwrap();
        assert_eq!(load_precomputed(&p, Some(3)).unwrap().data, sample().data);
        assert!(matches!(load_precomputed(&p, Some(4)), Err(Error::Validation(_))));
    }

    #[test]
    fn binary_rejects_corruption() {
        let mut b = encode_embedding(&sample());
        b.pop();
        assert!(matches!(decode_embedding(&b), Err(Error::Format(_))));
        let mut b = encode_embedding(&sample());
        b[0] = b'X';
        assert!(matches!(decode_embedding(&b), Err(Error::Format(_))));
        let mut b = encode_embedding(&sample());
        b[4..8].copy_from_slice(&0u32.to_le_bytes());
        b.truncate(12);
        // T = 0 is not a valid matrix
        assert!(decode_embedding(&b).is_err());
    }

    #[test]
    fn text_round_trip_and_errors() {
        let items = vec![("a".to_string(), sample()), ("b".to_string(), sample())];
        let text = embeddings_to_text(&items);
        let parsed = parse_embedding_text(&text).unwrap();
        assert_eq!(parsed["a"].data, sample().data);
        assert_eq!(parsed.len(), 2);
        assert!(parse_embedding_text("a 2 0 1.0\n").is_err());
        assert!(parse_embedding_text("a 1 1 1.0\n").is_err());
    }
}
