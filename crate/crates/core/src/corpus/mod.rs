//! Rated-utterance corpora: manifests, splits, pooling and synthetic fixtures.

mod manifest;
mod synth;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rand::seq::{index, SliceRandom};

use crate::error::{Error, Result};
use crate::seed::{stream_rng, STREAM_SPLIT, STREAM_SUBSAMPLE};

pub use manifest::{load_manifest, parse_manifest, write_manifest, MANIFEST_HEADER};
pub use synth::{
    generate_synthetic_corpus, load_sidecar, MosMap, SidecarRow, SynthCorpus, SynthSpec,
    SIDECAR_HEADER,
};

pub const MOS_MIN: f64 = 1.0;
pub const MOS_MAX: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DomainTag {
    Synthetic,
    NonSynthetic,
}

impl FromStr for DomainTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "synthetic" => Ok(DomainTag::Synthetic),
            "non-synthetic" | "nonsynthetic" | "non_synthetic" => Ok(DomainTag::NonSynthetic),
            other => Err(Error::Validation(format!("unknown domain tag `{other}`"))),
        }
    }
}

impl fmt::Display for DomainTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DomainTag::Synthetic => "synthetic",
            DomainTag::NonSynthetic => "non-synthetic",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(Error::Validation(format!(
                "split `{other}` is not one of train, dev, test"
            ))),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ListenerScore {
    pub listener_id: String,
    pub score: u8,
}

/// One rated utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub sample_id: String,
    pub audio_ref: Option<PathBuf>,
    pub embedding_ref: Option<PathBuf>,
    pub dataset_id: String,
    pub system_id: Option<String>,
    pub mos: f64,
    /// Stored for completeness; models only ever see `mos`.
    pub listener_scores: Option<Vec<ListenerScore>>,
}

impl Sample {
    pub fn validate(&self) -> Result<()> {
        if self.audio_ref.is_some() == self.embedding_ref.is_some() {
            return Err(Error::Validation(format!(
                "sample `{}` must reference exactly one of audio or embedding",
                self.sample_id
            )));
        }
        if !self.mos.is_finite() || !(MOS_MIN..=MOS_MAX).contains(&self.mos) {
            return Err(Error::Validation(format!(
                "sample `{}` has mos {} outside [1, 5]",
                self.sample_id, self.mos
            )));
        }
        if let Some(ls) = &self.listener_scores {
            if ls.is_empty() {
                return Err(Error::Validation(format!(
                    "sample `{}` has an empty listener list",
                    self.sample_id
                )));
            }
            if let Some(bad) = ls.iter().find(|l| !(1..=5).contains(&l.score)) {
                return Err(Error::Validation(format!(
                    "sample `{}`: listener `{}` score {} outside [1, 5]",
                    self.sample_id, bad.listener_id, bad.score
                )));
            }
            let mean = ls.iter().map(|l| f64::from(l.score)).sum::<f64>() / ls.len() as f64;
            if (mean - self.mos).abs() > 1e-6 {
                return Err(Error::Validation(format!(
                    "sample `{}`: mos {} differs from listener mean {mean}",
                    self.sample_id, self.mos
                )));
            }
        }
        Ok(())
    }
}

/// A named dataset with its splits.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusManifest {
    pub name: String,
    pub domain_tag: DomainTag,
    pub language: String,
    pub native_rate_hz: u32,
    pub splits: BTreeMap<Split, Vec<Sample>>,
}

impl CorpusManifest {
    pub fn new(name: impl Into<String>, domain_tag: DomainTag) -> Self {
        CorpusManifest {
            name: name.into(),
            domain_tag,
            language: "unknown".to_string(),
            native_rate_hz: 16_000,
            splits: BTreeMap::new(),
        }
    }

    pub fn split(&self, split: Split) -> &[Sample] {
        self.splits.get(&split).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn train(&self) -> &[Sample] {
        self.split(Split::Train)
    }

    pub fn dev(&self) -> &[Sample] {
        self.split(Split::Dev)
    }

    pub fn test(&self) -> &[Sample] {
        self.split(Split::Test)
    }

    pub fn len(&self) -> usize {
        self.splits.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn split_sizes(&self) -> BTreeMap<Split, usize> {
        self.splits.iter().map(|(s, v)| (*s, v.len())).collect()
    }

    pub fn samples(&self) -> impl Iterator<Item = (Split, &Sample)> {
        self.splits
            .iter()
            .flat_map(|(s, v)| v.iter().map(move |x| (*s, x)))
    }

    /// Checks sample-level invariants and corpus-wide id uniqueness.
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for (_, s) in self.samples() {
            s.validate()?;
            if s.dataset_id != self.name {
                return Err(Error::Validation(format!(
                    "sample `{}` belongs to dataset `{}` but corpus is `{}`",
                    s.sample_id, s.dataset_id, self.name
                )));
            }
            if !seen.insert(s.sample_id.as_str()) {
                return Err(Error::Validation(format!(
                    "duplicate sample id `{}` in corpus `{}`",
                    s.sample_id, self.name
                )));
            }
        }
        Ok(())
    }

    fn with_splits(&self, splits: BTreeMap<Split, Vec<Sample>>) -> Self {
        CorpusManifest {
            name: self.name.clone(),
            domain_tag: self.domain_tag,
            language: self.language.clone(),
            native_rate_hz: self.native_rate_hz,
            splits,
        }
    }
}

/// Number of train samples kept by a `ratio` split of `n` samples.
pub fn train_count(n: usize, ratio: f64) -> usize {
    // the epsilon absorbs representation error such as 0.9 * 10 = 8.999...
    ((n as f64 * ratio) + 1e-9).floor() as usize
}

/// Randomly partitions a train-only corpus into train and dev.
///
/// Train receives `floor(n * ratio)` samples. Both parts keep manifest order.
pub fn split_random(corpus: &CorpusManifest, ratio: f64, seed: u64) -> Result<CorpusManifest> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Argument(format!("split ratio {ratio} not in (0, 1)")));
    }
    if corpus.splits.keys().any(|s| *s != Split::Train) {
        return Err(Error::Argument(format!(
            "corpus `{}` already has non-train splits",
            corpus.name
        )));
    }
    let samples = corpus.train();
    let n = samples.len();
    let k = train_count(n, ratio);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(seed, STREAM_SPLIT));
    let mut train_idx = order[..k].to_vec();
    let mut dev_idx = order[k..].to_vec();
    train_idx.sort_unstable();
    dev_idx.sort_unstable();

    let mut splits = BTreeMap::new();
    splits.insert(
        Split::Train,
        train_idx.iter().map(|&i| samples[i].clone()).collect(),
    );
    splits.insert(
        Split::Dev,
        dev_idx.iter().map(|&i| samples[i].clone()).collect(),
    );
    Ok(corpus.with_splits(splits))
}

/// Uniformly subsamples `n` train samples without replacement; other splits
/// are kept as they are.
pub fn subsample(corpus: &CorpusManifest, n: usize, seed: u64) -> Result<CorpusManifest> {
    let train = corpus.train();
    if n > train.len() {
        return Err(Error::Argument(format!(
            "cannot subsample {n} from {} train samples",
            train.len()
        )));
    }
    let mut picked = index::sample(&mut stream_rng(seed, STREAM_SUBSAMPLE), train.len(), n).into_vec();
    picked.sort_unstable();
    let mut splits = corpus.splits.clone();
    splits.insert(
        Split::Train,
        picked.iter().map(|&i| train[i].clone()).collect(),
    );
    Ok(corpus.with_splits(splits))
}

/// Several corpora trained on as one.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledCorpus {
    pub members: Vec<CorpusManifest>,
}

impl PooledCorpus {
    pub fn member(&self, name: &str) -> Option<&CorpusManifest> {
        self.members.iter().find(|m| m.name == name)
    }

    pub fn dataset_names(&self) -> Vec<String> {
        self.members.iter().map(|m| m.name.clone()).collect()
    }

    pub fn pooled_split(&self, split: Split) -> Vec<Sample> {
        self.members
            .iter()
            .flat_map(|m| m.split(split).iter().cloned())
            .collect()
    }

    pub fn train(&self) -> Vec<Sample> {
        self.pooled_split(Split::Train)
    }

    pub fn dev(&self) -> Vec<Sample> {
        self.pooled_split(Split::Dev)
    }
}

/// Pools corpora; train and dev splits are concatenated in member order.
pub fn pool(corpora: &[CorpusManifest]) -> Result<PooledCorpus> {
    if corpora.is_empty() {
        return Err(Error::Argument("pool needs at least one corpus".into()));
    }
    let mut names = BTreeSet::new();
    for c in corpora {
        if !names.insert(c.name.as_str()) {
            return Err(Error::Argument(format!("duplicate corpus name `{}`", c.name)));
        }
    }
    let members = corpora
        .iter()
        .map(|c| {
            let mut c = c.clone();
            for v in c.splits.values_mut() {
                for s in v.iter_mut() {
                    s.dataset_id = c.name.clone();
                }
            }
            c
        })
        .collect();
    Ok(PooledCorpus { members })
}

#[cfg(test)]
pub(crate) fn toy_corpus(name: &str, n_train: usize) -> CorpusManifest {
    let mut c = CorpusManifest::new(name, DomainTag::NonSynthetic);
    let train = (0..n_train)
        .map(|i| Sample {
            sample_id: format!("{name}_{i}"),
            audio_ref: Some(PathBuf::from(format!("{i}.wav"))),
            embedding_ref: None,
            dataset_id: name.to_string(),
            system_id: Some(format!("sys{}", i % 3)),
            mos: 1.0 + (i % 5) as f64,
            listener_scores: None,
        })
        .collect();
    c.splits.insert(Split::Train, train);
    c
}
