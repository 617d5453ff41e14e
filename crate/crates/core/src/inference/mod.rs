//! Parametric and retrieval-based score inference.

mod datastore;

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::frontend::EmbeddingMatrix;
use crate::model::Model;

pub use datastore::{
    decode_datastore, encode_datastore, load_datastore, save_datastore, Datastore, DistanceKind,
    Neighbor, DATASTORE_MAGIC,
};

#[derive(Debug, Clone, PartialEq)]
pub struct KnnConfig {
    pub k: usize,
    pub temperature: f64,
    /// Weight neighbors by `exp(+d / T)` as literally printed, which favours
    /// the farthest of the k neighbors. Off by default.
    pub paper_literal: bool,
}

impl Default for KnnConfig {
    fn default() -> Self {
        KnnConfig {
            k: 8,
            temperature: 1.0,
            paper_literal: false,
        }
    }
}

impl KnnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Argument("knn k must be at least 1".into()));
        }
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(Error::Argument(format!("knn temperature {} must be > 0", self.temperature)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnnResult {
    pub neighbors: Vec<Neighbor>,
    pub weights: Vec<f64>,
    pub score: f64,
}

/// Softmax over `-d / T` (or `+d / T` when `paper_literal`), shifted by the
/// largest logit for stability.
pub fn softmax_weights(distances: &[f64], temperature: f64, paper_literal: bool) -> Vec<f64> {
    let sign = if paper_literal { 1.0 } else { -1.0 };
    let logits: Vec<f64> = distances.iter().map(|d| sign * d / temperature).collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.iter().map(|e| e / z).collect()
}

/// Retrieves the k nearest records and combines their scores.
pub fn knn_query(ds: &Datastore, query: &[f64], cfg: &KnnConfig) -> Result<KnnResult> {
    cfg.validate()?;
    if cfg.k > ds.len() {
        return Err(Error::Argument(format!(
            "k = {} exceeds datastore size {}",
            cfg.k,
            ds.len()
        )));
    }
    let neighbors = ds.nearest(query, cfg.k)?;
    let d: Vec<f64> = neighbors.iter().map(|n| n.distance).collect();
    let weights = softmax_weights(&d, cfg.temperature, cfg.paper_literal);
    let score = weights.iter().zip(&neighbors).map(|(w, n)| w * n.score).sum();
    Ok(KnnResult {
        neighbors,
        weights,
        score,
    })
}

pub fn knn_predict(ds: &Datastore, query: &[f64], cfg: &KnnConfig) -> Result<f64> {
    knn_query(ds, query, cfg).map(|r| r.score)
}

/// The model's own clipped output.
pub fn parametric_predict(model: &Model, mat: &EmbeddingMatrix, dataset_id: Option<&str>) -> Result<f64> {
    Ok(model.forward(mat, dataset_id)?.clipped)
}

/// Picks the dataset embedding of the query's nearest stored neighbor and
/// runs the AlignNet with it. Returns the clipped score and that dataset id.
pub fn domain_embedding_retrieval_predict(
    model: &Model,
    ds: &Datastore,
    mat: &EmbeddingMatrix,
) -> Result<(f64, String)> {
    if !matches!(model, Model::AlignNet(_)) {
        return Err(Error::Argument("domain embedding retrieval needs an alignnet model".into()));
    }
    let query = mat.pool_time();
    let nearest = ds.nearest(query.as_slice().unwrap(), 1)?;
    let dataset = ds.dataset_name(nearest[0].dataset).to_string();
    let score = model.forward(mat, Some(&dataset))?.clipped;
    Ok((score, dataset))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InferenceMode {
    Parametric,
    Knn,
    DomainRetrieval,
}

impl FromStr for InferenceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "parametric" => Ok(InferenceMode::Parametric),
            "knn" => Ok(InferenceMode::Knn),
            "domain-retrieval" => Ok(InferenceMode::DomainRetrieval),
            other => Err(Error::Argument(format!(
                "unknown inference mode `{other}` (parametric, knn, domain-retrieval)"
            ))),
        }
    }
}

impl fmt::Display for InferenceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InferenceMode::Parametric => "parametric",
            InferenceMode::Knn => "knn",
            InferenceMode::DomainRetrieval => "domain-retrieval",
        })
    }
}

/// Scores a batch of feature matrices. `dataset_ids` is only consulted for
/// parametric AlignNet inference, where the true dataset is known.
pub fn predict_batch(
    mode: InferenceMode,
    model: &Model,
    ds: Option<&Datastore>,
    knn: &KnnConfig,
    mats: &[EmbeddingMatrix],
    dataset_ids: &[Option<String>],
    exec: Exec,
) -> Result<Vec<f64>> {
    if dataset_ids.len() != mats.len() {
        return Err(Error::Shape("one dataset id slot per matrix required".into()));
    }
    let need_ds = || ds.ok_or_else(|| Error::State(format!("{mode} inference needs a datastore")));
    let idx: Vec<usize> = (0..mats.len()).collect();
    match mode {
        InferenceMode::Parametric => exec.try_map(&idx, |&i| {
            parametric_predict(model, &mats[i], dataset_ids[i].as_deref())
        }),
        InferenceMode::Knn => {
            let ds = need_ds()?;
            exec.try_map(mats, |m| knn_predict(ds, m.pool_time().as_slice().unwrap(), knn))
        }
        InferenceMode::DomainRetrieval => {
            let ds = need_ds()?;
            exec.try_map(mats, |m| domain_embedding_retrieval_predict(model, ds, m).map(|r| r.0))
        }
    }
}
