//! Immutable (embedding, score, dataset) store with exhaustive search.
//!
//! File layout (little endian): `b"SQD1"`, `count: u32`, `D: u32`,
//! `distance_kind: u8` (0 euclidean, 1 cosine), `n_ids: u32`, then `n_ids`
//! dataset ids (`u32` byte length + UTF-8), then `count` records of
//! `D x f32` embedding, `f32` score, `u32` dataset-id index.

use std::cmp::Ordering;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::corpus::Sample;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::frontend::{EmbeddingMatrix, Frontend};

pub const DATASTORE_MAGIC: &[u8; 4] = b"SQD1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DistanceKind {
    #[default]
    Euclidean,
    /// `1 - cos(a, b)`; a zero vector is treated as orthogonal to everything.
    Cosine,
}

impl DistanceKind {
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            DistanceKind::Euclidean => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
            DistanceKind::Cosine => {
                let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
                for (x, y) in a.iter().zip(b) {
                    ab += x * y;
                    aa += x * x;
                    bb += y * y;
                }
                if aa == 0.0 || bb == 0.0 {
                    return 1.0;
                }
                (1.0 - ab / (aa.sqrt() * bb.sqrt())).max(0.0)
            }
        }
    }
}

impl FromStr for DistanceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "euclidean" => Ok(DistanceKind::Euclidean),
            "cosine" => Ok(DistanceKind::Cosine),
            other => Err(Error::Argument(format!("unknown distance `{other}`"))),
        }
    }
}

impl fmt::Display for DistanceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DistanceKind::Euclidean => "euclidean",
            DistanceKind::Cosine => "cosine",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor {
    pub distance: f64,
    pub score: f64,
    /// Index into the datastore's dataset id table.
    pub dataset: usize,
    pub record: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Datastore {
    dim: usize,
    kind: DistanceKind,
    /// Row-major `len x dim`.
    embeddings: Vec<f64>,
    scores: Vec<f64>,
    datasets: Vec<usize>,
    dataset_names: Vec<String>,
}

impl Datastore {
    pub fn from_records(records: Vec<(Vec<f64>, f64, String)>, kind: DistanceKind) -> Result<Self> {
        let Some(first) = records.first() else {
            return Err(Error::State("datastore needs at least one record".into()));
        };
        let dim = first.0.len();
        if dim == 0 {
            return Err(Error::Shape("datastore embeddings must be non-empty".into()));
        }
        let mut ds = Datastore {
            dim,
            kind,
            embeddings: Vec::with_capacity(records.len() * dim),
            scores: Vec::with_capacity(records.len()),
            datasets: Vec::with_capacity(records.len()),
            dataset_names: Vec::new(),
        };
        for (emb, score, dataset) in records {
            if emb.len() != dim {
                return Err(Error::Shape(format!("record dim {} differs from {dim}", emb.len())));
            }
            if emb.iter().any(|v| !v.is_finite()) || !score.is_finite() {
                return Err(Error::Validation("non-finite datastore record".into()));
            }
            let idx = match ds.dataset_names.iter().position(|d| *d == dataset) {
                Some(i) => i,
                None => {
                    ds.dataset_names.push(dataset);
                    ds.dataset_names.len() - 1
                }
            };
            ds.embeddings.extend_from_slice(&emb);
            ds.scores.push(score);
            ds.datasets.push(idx);
        }
        Ok(ds)
    }

    /// One record per sample: time-pooled features, mos and dataset id.
    pub fn from_features(samples: &[Sample], mats: &[EmbeddingMatrix], kind: DistanceKind) -> Result<Self> {
        if samples.len() != mats.len() {
            return Err(Error::Shape("one feature matrix per sample required".into()));
        }
        if samples.is_empty() {
            return Err(Error::Argument("cannot build a datastore from an empty corpus".into()));
        }
        let records = samples
            .iter()
            .zip(mats)
            .map(|(s, m)| (m.pool_time().to_vec(), s.mos, s.dataset_id.clone()))
            .collect();
        Datastore::from_records(records, kind)
    }

    pub fn build(frontend: &Frontend, samples: &[Sample], kind: DistanceKind, exec: Exec) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Argument("cannot build a datastore from an empty corpus".into()));
        }
        let mats = frontend.features_batch(samples, exec)?;
        Datastore::from_features(samples, &mats, kind)
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn distance_kind(&self) -> DistanceKind {
        self.kind
    }

    pub fn embedding(&self, i: usize) -> &[f64] {
        &self.embeddings[i * self.dim..(i + 1) * self.dim]
    }

    pub fn score(&self, i: usize) -> f64 {
        self.scores[i]
    }

    pub fn dataset_of(&self, i: usize) -> &str {
        &self.dataset_names[self.datasets[i]]
    }

    pub fn dataset_name(&self, idx: usize) -> &str {
        &self.dataset_names[idx]
    }

    pub fn dataset_names(&self) -> &[String] {
        &self.dataset_names
    }

    /// The `k` closest records, ascending by distance.
    ///
    /// Ties are broken by score and then dataset id, so the result does not
    /// depend on record order.
    pub fn nearest(&self, query: &[f64], k: usize) -> Result<Vec<Neighbor>> {
        if self.is_empty() {
            return Err(Error::State("datastore is empty".into()));
        }
        if query.len() != self.dim {
            return Err(Error::Shape(format!("query dim {} differs from datastore dim {}", query.len(), self.dim)));
        }
        let k = k.min(self.len());
        let mut all: Vec<Neighbor> = (0..self.len())
            .map(|i| Neighbor {
                distance: self.kind.distance(query, self.embedding(i)),
                score: self.scores[i],
                dataset: self.datasets[i],
                record: i,
            })
            .collect();
        let cmp = |a: &Neighbor, b: &Neighbor| -> Ordering {
            a.distance
                .total_cmp(&b.distance)
                .then(a.score.total_cmp(&b.score))
                .then_with(|| self.dataset_names[a.dataset].cmp(&self.dataset_names[b.dataset]))
        };
        if k < all.len() {
            all.select_nth_unstable_by(k - 1, cmp);
            all.truncate(k);
        }
        all.sort_by(cmp);
        Ok(all)
    }
}

pub fn encode_datastore(ds: &Datastore) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(DATASTORE_MAGIC);
    out.extend_from_slice(&(ds.len() as u32).to_le_bytes());
    out.extend_from_slice(&(ds.dim as u32).to_le_bytes());
    out.push(match ds.kind {
        DistanceKind::Euclidean => 0,
        DistanceKind::Cosine => 1,
    });
    out.extend_from_slice(&(ds.dataset_names.len() as u32).to_le_bytes());
    for name in &ds.dataset_names {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
    }
    for i in 0..ds.len() {
        for v in ds.embedding(i) {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        out.extend_from_slice(&(ds.scores[i] as f32).to_le_bytes());
        out.extend_from_slice(&(ds.datasets[i] as u32).to_le_bytes());
    }
    out
}

pub fn decode_datastore(bytes: &[u8]) -> Result<Datastore> {
    let bad = |m: &str| Error::Format(format!("datastore: {m}"));
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        let end = pos.checked_add(n).filter(|&e| e <= bytes.len()).ok_or_else(|| bad("truncated"))?;
        let s = &bytes[pos..end];
        pos = end;
        Ok(s)
    };
    if take(4)? != DATASTORE_MAGIC {
        return Err(bad("bad magic"));
    }
    let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().unwrap()) as usize;
    let count = u32_at(take(4)?);
    let dim = u32_at(take(4)?);
    let kind = match take(1)?[0] {
        0 => DistanceKind::Euclidean,
        1 => DistanceKind::Cosine,
        k => return Err(bad(&format!("unknown distance kind {k}"))),
    };
    let n_ids = u32_at(take(4)?);
    let mut names = Vec::with_capacity(n_ids.min(1 << 16));
    for _ in 0..n_ids {
        let len = u32_at(take(4)?);
        let s = std::str::from_utf8(take(len)?).map_err(|_| bad("dataset id is not UTF-8"))?;
        names.push(s.to_string());
    }
    let mut records = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let emb: Vec<f64> = take(4 * dim)?
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
            .collect();
        let score = f64::from(f32::from_le_bytes(take(4)?.try_into().unwrap()));
        let idx = u32_at(take(4)?);
        let name = names.get(idx).ok_or_else(|| bad("dataset index out of range"))?;
        records.push((emb, score, name.clone()));
    }
    if pos != bytes.len() {
        return Err(bad("trailing bytes"));
    }
    Datastore::from_records(records, kind)
}

pub fn save_datastore(ds: &Datastore, path: &Path) -> Result<()> {
    fs::write(path, encode_datastore(ds)).map_err(|e| Error::io(path, e))
}

pub fn load_datastore(path: &Path) -> Result<Datastore> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_datastore(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Datastore {
        Datastore::from_records(
            vec![
                (vec![0.5, 1.0], 3.5, "A".into()),
                (vec![-2.0, 0.25], 1.5, "B".into()),
                (vec![1.0, 1.0], 4.0, "A".into()),
            ],
            DistanceKind::Cosine,
        )
        .unwrap()
    }

    #[test]
    fn file_round_trip() {
        let ds = small();
        let back = decode_datastore(&encode_datastore(&ds)).unwrap();
        // values above are exactly representable in f32
        assert_eq!(back, ds);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ds.bin");
        save_datastore(&ds, &p).unwrap();
        assert_eq!(load_datastore(&p).unwrap(), ds);
    }

    #[test]
    fn corrupt_files() {
        let mut b = encode_datastore(&small());
        b[0] = 0;
        assert!(decode_datastore(&b).is_err());
        let mut b = encode_datastore(&small());
        b.pop();
        assert!(decode_datastore(&b).is_err());
        let mut b = encode_datastore(&small());
        b.push(0);
        assert!(decode_datastore(&b).is_err());
    }

    #[test]
    fn distances() {
        let e = DistanceKind::Euclidean;
        assert_eq!(e.distance(&[0.0, 0.0], &[3.0, 4.0]), 5.0);
        let c = DistanceKind::Cosine;
        assert!(c.distance(&[1.0, 0.0], &[2.0, 0.0]).abs() < 1e-15);
        assert!((c.distance(&[1.0, 0.0], &[0.0, 1.0]) - 1.0).abs() < 1e-15);
        assert_eq!(c.distance(&[0.0, 0.0], &[1.0, 0.0]), 1.0);
    }

    #[test]
    fn nearest_sorted_and_bounded() {
        let ds = small();
        let n = ds.nearest(&[1.0, 1.0], 10).unwrap();
        assert_eq!(n.len(), 3);
        assert!(n.windows(2).all(|w| w[0].distance <= w[1].distance));
        assert_eq!(n[0].record, 2);
        assert!(ds.nearest(&[1.0], 1).is_err());
    }

    #[test]
    fn from_features_uses_mos() {
        use crate::corpus::toy_corpus;
        use ndarray::array;
        let c = toy_corpus("A", 4);
        let mats: Vec<EmbeddingMatrix> = (0..4)
            .map(|i| EmbeddingMatrix::new(array![[i as f64, 0.0], [i as f64, 2.0]], 1.0).unwrap())
            .collect();
        let ds = Datastore::from_features(c.train(), &mats, DistanceKind::Euclidean).unwrap();
        assert_eq!(ds.len(), 4);
        for (i, s) in c.train().iter().enumerate() {
            assert_eq!(ds.score(i), s.mos);
            assert_eq!(ds.embedding(i), &[i as f64, 1.0]);
            assert_eq!(ds.dataset_of(i), "A");
        }
        assert_eq!(Datastore::from_features(c.train(), &mats, DistanceKind::Euclidean).unwrap(), ds);
        assert!(Datastore::from_features(&[], &[], DistanceKind::Euclidean).is_err());
    }
}
