//! Data behind embedding-projection and prediction-distribution plots.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::seq::index;

use crate::corpus::{CorpusManifest, Split};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::frontend::Frontend;
use crate::metrics::{evaluate, system_aggregate, EvalPair, MetricReport};
use crate::seed::{stream_rng, stream_seed, STREAM_EXPORT};

pub const DEFAULT_PER_SET: usize = 100;

/// Principal-component projection onto two axes.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca2 {
    pub mean: Vec<f64>,
    /// Unit-norm principal axes, largest variance first.
    pub axes: [Vec<f64>; 2],
    pub explained_variance: [f64; 2],
    pub projected: Vec<[f64; 2]>,
}

impl Pca2 {
    /// Maps projected coordinates back to the input space.
    pub fn reconstruct(&self, p: [f64; 2]) -> Vec<f64> {
        self.mean
            .iter()
            .enumerate()
            .map(|(j, m)| m + p[0] * self.axes[0][j] + p[1] * self.axes[1][j])
            .collect()
    }
}

/// PCA of `rows` (N points of equal dimension) via SVD of the centered data.
/// Axis signs are fixed so that each axis' largest-magnitude entry is positive.
pub fn pca_2d(rows: &[Vec<f64>]) -> Result<Pca2> {
    let n = rows.len();
    if n < 2 {
        return Err(Error::Argument(format!("PCA needs at least 2 points, got {n}")));
    }
    let d = rows[0].len();
    if d == 0 || rows.iter().any(|r| r.len() != d) {
        return Err(Error::Shape("PCA rows must share a positive dimension".into()));
    }
    let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let centered = DMatrix::from_fn(n, d, |i, j| rows[i][j] - mean[j]);
    let svd = centered.svd(false, true);
    let v_t = svd.v_t.as_ref().expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));

    let axis = |k: usize| -> (Vec<f64>, f64) {
        match order.get(k) {
            Some(&i) => {
                let mut v: Vec<f64> = v_t.row(i).iter().copied().collect();
                let pivot = v.iter().copied().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
                if pivot < 0.0 {
                    v.iter_mut().for_each(|x| *x = -*x);
                }
                let s = svd.singular_values[i];
                (v, s * s / (n - 1) as f64)
            }
            // fewer than two dimensions: the second axis carries nothing
            None => (vec![0.0; d], 0.0),
        }
    };
    let (a0, v0) = axis(0);
    let (a1, v1) = axis(1);
    let projected = rows
        .iter()
        .map(|r| {
            let c: Vec<f64> = r.iter().zip(&mean).map(|(x, m)| x - m).collect();
            let dot = |a: &[f64]| c.iter().zip(a).map(|(x, y)| x * y).sum::<f64>();
            [dot(&a0), dot(&a1)]
        })
        .collect();
    Ok(Pca2 {
        mean,
        axes: [a0, a1],
        explained_variance: [v0, v1],
        projected,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExportRow {
    pub set: String,
    pub split: Split,
    pub sample_id: String,
    pub mos: f64,
    /// Time-averaged frontend embedding.
    pub embedding: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingExport {
    pub rows: Vec<ExportRow>,
    pub pca: Pca2,
    /// One line per (set, split) whose size fell short of the request.
    pub notes: Vec<String>,
}

/// Sorted indices of `n` of `len` items chosen uniformly, or all of them
/// when `n >= len`. Depends only on (seed, label).
pub fn choose_indices(len: usize, n: usize, seed: u64, label: &str) -> Vec<usize> {
    if n >= len {
        return (0..len).collect();
    }
    let mut rng = stream_rng(seed ^ stream_seed(0, label), STREAM_EXPORT);
    let mut idx = index::sample(&mut rng, len, n).into_vec();
    idx.sort_unstable();
    idx
}

/// Samples up to `n_per_set` utterances from each listed split of each
/// corpus, embeds them with the frontend, averages over time and projects
/// the result to 2-D.
pub fn export_embeddings(
    frontend: &Frontend,
    sets: &[CorpusManifest],
    splits: &[Split],
    n_per_set: usize,
    seed: u64,
    exec: Exec,
) -> Result<EmbeddingExport> {
    if n_per_set == 0 {
        return Err(Error::Argument("n_per_set must be positive".into()));
    }
    let mut chosen = Vec::new();
    let mut notes = Vec::new();
    for corpus in sets {
        for &split in splits {
            let samples = corpus.split(split);
            if samples.len() < n_per_set {
                notes.push(format!(
                    "{} {split}: {} samples available, {n_per_set} requested; took all",
                    corpus.name,
                    samples.len()
                ));
            }
            for i in choose_indices(samples.len(), n_per_set, seed, &format!("{}/{split}", corpus.name)) {
                chosen.push((corpus.name.clone(), split, samples[i].clone()));
            }
        }
    }
    let samples: Vec<_> = chosen.iter().map(|c| c.2.clone()).collect();
    let mats = frontend.features_batch(&samples, exec)?;
    let rows: Vec<ExportRow> = chosen
        .into_iter()
        .zip(mats)
        .map(|((set, split, s), m)| ExportRow {
            set,
            split,
            sample_id: s.sample_id,
            mos: s.mos,
            embedding: m.pool_time().to_vec(),
        })
        .collect();
    let emb: Vec<Vec<f64>> = rows.iter().map(|r| r.embedding.clone()).collect();
    let pca = pca_2d(&emb)?;
    Ok(EmbeddingExport { rows, pca, notes })
}

impl EmbeddingExport {
    /// `set,split,sample_id,mos,pc1,pc2,e0,...`; notes become `#` lines.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for n in &self.notes {
            let _ = writeln!(out, "# {n}");
        }
        let dim = self.rows.first().map_or(0, |r| r.embedding.len());
        out.push_str("set,split,sample_id,mos,pc1,pc2");
        for j in 0..dim {
            let _ = write!(out, ",e{j}");
        }
        out.push('\n');
        for (r, p) in self.rows.iter().zip(&self.pca.projected) {
            let _ = write!(out, "{},{},{},{},{},{}", r.set, r.split, r.sample_id, r.mos, p[0], p[1]);
            for v in &r.embedding {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

/// Per-utterance and per-system (truth, prediction) pairs for one test set.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionData {
    pub utterances: Vec<EvalPair>,
    pub systems: Vec<EvalPair>,
    pub report: MetricReport,
}

pub fn distribution_data(pairs: &[EvalPair]) -> Result<DistributionData> {
    Ok(DistributionData {
        utterances: pairs.to_vec(),
        systems: system_aggregate(pairs)?,
        report: evaluate(pairs)?,
    })
}

impl DistributionData {
    pub fn utterance_csv(&self) -> String {
        let mut out = String::from("sample_id,system_id,true_mos,pred_mos\n");
        for p in &self.utterances {
            let _ = writeln!(out, "{},{},{},{}", p.sample_id, p.system_id.as_deref().unwrap_or(""), p.truth, p.pred);
        }
        out
    }

    pub fn system_csv(&self) -> String {
        let mut out = String::from("system_id,true_mos,pred_mos\n");
        for p in &self.systems {
            let _ = writeln!(out, "{},{},{}", p.system_id.as_deref().unwrap_or(""), p.truth, p.pred);
        }
        out
    }
}
