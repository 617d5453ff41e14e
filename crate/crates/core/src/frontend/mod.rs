//! Feature extraction: audio to frame-level embedding matrices.

mod audio;
mod dsp;
mod embedding_io;

use std::path::Path;

use ndarray::{Array1, Array2, Axis};

use crate::corpus::Sample;
use crate::error::{Error, Result};
use crate::exec::Exec;

pub use audio::{load_audio, resample_to_16k, write_wav, Waveform, TARGET_RATE_HZ};
pub use dsp::{extract_dsp, hz_to_mel, mel_centers_hz, mel_to_hz, DspExtractor, LOG_FLOOR};
pub use embedding_io::{
    decode_embedding, embeddings_to_text, encode_embedding, load_precomputed,
    parse_embedding_text, save_embedding, EMBEDDING_MAGIC, PRECOMPUTED_FRAME_RATE_HZ,
};

/// A `T x D` matrix of frame features.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    pub data: Array2<f64>,
    pub frame_rate_hz: f64,
}

impl EmbeddingMatrix {
    pub fn new(data: Array2<f64>, frame_rate_hz: f64) -> Result<Self> {
        let (t, d) = data.dim();
        if t == 0 || d == 0 {
            return Err(Error::Shape(format!("embedding matrix must be non-empty, got {t}x{d}")));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("embedding matrix has non-finite entries".into()));
        }
        Ok(EmbeddingMatrix {
            data,
            frame_rate_hz,
        })
    }

    pub fn frames(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    /// Column means over time.
    pub fn pool_time(&self) -> Array1<f64> {
        pool_time(self)
    }
}

pub fn pool_time(m: &EmbeddingMatrix) -> Array1<f64> {
    m.data
        .mean_axis(Axis(0))
        .expect("embedding matrices have at least one frame")
}

/// Tiles every item end to end up to the longest length in the batch.
///
/// Returns the padded items and their original lengths.
pub fn pad_repetitive<T: Clone>(batch: &[Vec<T>]) -> (Vec<Vec<T>>, Vec<usize>) {
    let max = batch.iter().map(Vec::len).max().unwrap_or(0);
    let lengths = batch.iter().map(Vec::len).collect();
    let padded = batch
        .iter()
        .map(|item| {
            if item.is_empty() {
                return Vec::new();
            }
            item.iter().cycle().take(max).cloned().collect()
        })
        .collect();
    (padded, lengths)
}

/// Frame-level repetitive padding of feature matrices.
pub fn pad_frames_repetitive(batch: &[EmbeddingMatrix]) -> (Vec<EmbeddingMatrix>, Vec<usize>) {
    let max = batch.iter().map(EmbeddingMatrix::frames).max().unwrap_or(0);
    let lengths = batch.iter().map(EmbeddingMatrix::frames).collect();
    let padded = batch
        .iter()
        .map(|m| {
            let t = m.frames();
            let idx: Vec<usize> = (0..max).map(|i| i % t).collect();
            EmbeddingMatrix {
                data: m.data.select(Axis(0), &idx),
                frame_rate_hz: m.frame_rate_hz,
            }
        })
        .collect();
    (padded, lengths)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DspParams {
    pub n_mels: usize,
    pub window_ms: f64,
    pub hop_ms: f64,
}

impl Default for DspParams {
    fn default() -> Self {
        DspParams {
            n_mels: 40,
            window_ms: 25.0,
            hop_ms: 10.0,
        }
    }
}

impl DspParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_mels == 0 || !(self.window_ms > 0.0) || !(self.hop_ms > 0.0) {
            return Err(Error::Argument(format!("dsp parameters must be positive: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrontendKind {
    Dsp,
    Precomputed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrontendConfig {
    pub kind: FrontendKind,
    pub dsp: DspParams,
    /// Expected dimensionality of precomputed features; `None` takes the
    /// first loaded file as reference.
    pub precomputed_dim: Option<usize>,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        FrontendConfig {
            kind: FrontendKind::Dsp,
            dsp: DspParams::default(),
            precomputed_dim: None,
        }
    }
}

/// Maps samples to feature matrices according to a [`FrontendConfig`].
#[derive(Debug, Clone)]
pub struct Frontend {
    config: FrontendConfig,
    dsp: DspExtractor,
}

impl Frontend {
    pub fn new(config: FrontendConfig) -> Result<Self> {
        let dsp = DspExtractor::new(config.dsp.clone())?;
        Ok(Frontend { config, dsp })
    }

    pub fn config(&self) -> &FrontendConfig {
        &self.config
    }

    /// Feature dimensionality, when known before loading anything.
    pub fn dim(&self) -> Option<usize> {
        match self.config.kind {
            FrontendKind::Dsp => Some(self.dsp.dim()),
            FrontendKind::Precomputed => self.config.precomputed_dim,
        }
    }

    pub fn waveform_features(&self, wave: &Waveform) -> Result<EmbeddingMatrix> {
        self.dsp.extract(&resample_to_16k(wave))
    }

    pub fn features(&self, sample: &Sample) -> Result<EmbeddingMatrix> {
        match (self.config.kind, &sample.audio_ref, &sample.embedding_ref) {
            (FrontendKind::Dsp, Some(audio), _) => self.waveform_features(&load_audio(audio)?),
            (FrontendKind::Precomputed, _, Some(emb)) => {
                load_precomputed(emb, self.config.precomputed_dim)
            }
            (kind, _, _) => Err(Error::Validation(format!(
                "sample `{}` has no input for the {kind:?} frontend",
                sample.sample_id
            ))),
        }
    }

    /// Featurizes a batch of samples; all matrices share one dimensionality.
    pub fn features_batch(&self, samples: &[Sample], exec: Exec) -> Result<Vec<EmbeddingMatrix>> {
        let mats = exec.try_map(samples, |s| self.features(s))?;
        if let Some(first) = mats.first() {
            let d = self.dim().unwrap_or(first.dim());
            if let Some((s, m)) = samples.iter().zip(&mats).find(|(_, m)| m.dim() != d) {
                return Err(Error::Validation(format!(
                    "sample `{}` has dim {} but the corpus uses {d}",
                    s.sample_id,
                    m.dim()
                )));
            }
        }
        Ok(mats)
    }
}

/// Convenience wrapper for tests and tools working on a single file.
pub fn features_from_path(frontend: &Frontend, path: &Path) -> Result<EmbeddingMatrix> {
    frontend.waveform_features(&load_audio(path)?)
}
