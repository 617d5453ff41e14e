//! Synthetic tone-in-noise corpora with known SNR ground truth.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::manifest::write_manifest;
use super::{CorpusManifest, DomainTag, Sample, Split, MOS_MAX, MOS_MIN};
use crate::error::{Error, Result};
use crate::frontend::write_wav;
use crate::seed::{stream_rng, STREAM_SYNTH};

pub const SIDECAR_HEADER: &str = "sample_id,dataset,system_id,snr_db,delta,epsilon";

/// Strictly increasing SNR to MOS map, `mos = intercept + slope * snr_db`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MosMap {
    pub intercept: f64,
    pub slope: f64,
}

impl MosMap {
    /// Linear map sending the lowest grid SNR to `lo` and the highest to `hi`.
    pub fn spanning(grid: &[f64], lo: f64, hi: f64) -> Self {
        let min = grid.iter().copied().fold(f64::INFINITY, f64::min);
        let max = grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let slope = if max > min { (hi - lo) / (max - min) } else { 0.0 };
        MosMap {
            intercept: lo - slope * min,
            slope,
        }
    }

    pub fn apply(&self, snr_db: f64) -> f64 {
        self.intercept + self.slope * snr_db
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub name: String,
    pub domain_tag: DomainTag,
    pub n_train: usize,
    pub n_dev: usize,
    pub n_test: usize,
    pub rate_hz: u32,
    pub min_duration_s: f64,
    pub max_duration_s: f64,
    /// Tone frequency range in Hz, drawn uniformly per utterance.
    pub tone_hz: (f64, f64),
    pub tone_amplitude: f64,
    pub snr_grid_db: Vec<f64>,
    pub mos_map: MosMap,
    /// Additive per-corpus score offset.
    pub delta: f64,
    /// Standard deviation of the per-utterance rating noise.
    pub sigma: f64,
}

impl SynthSpec {
    pub fn new(name: impl Into<String>) -> Self {
        let grid = vec![-2.0, 0.0, 2.0, 5.0];
        SynthSpec {
            name: name.into(),
            domain_tag: DomainTag::NonSynthetic,
            n_train: 200,
            n_dev: 50,
            n_test: 50,
            rate_hz: 16_000,
            min_duration_s: 1.0,
            max_duration_s: 3.0,
            tone_hz: (200.0, 800.0),
            tone_amplitude: 0.3,
            mos_map: MosMap::spanning(&grid, 1.5, 4.5),
            snr_grid_db: grid,
            delta: 0.0,
            sigma: 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Argument(format!("synthetic spec `{}`: {m}", self.name)));
        if self.snr_grid_db.is_empty() {
            return bad("empty SNR grid");
        }
        if !(self.mos_map.slope > 0.0) {
            return bad("SNR to MOS map must be strictly increasing");
        }
        if !(self.min_duration_s > 0.0 && self.max_duration_s >= self.min_duration_s) {
            return bad("invalid duration range");
        }
        if !(self.tone_hz.0 > 0.0 && self.tone_hz.1 >= self.tone_hz.0)
            || self.tone_hz.1 >= f64::from(self.rate_hz) / 2.0
        {
            return bad("tone range must lie in (0, nyquist)");
        }
        if !(self.tone_amplitude > 0.0 && self.tone_amplitude < 1.0) {
            return bad("tone amplitude must be in (0, 1)");
        }
        if !(self.sigma >= 0.0) || !self.delta.is_finite() {
            return bad("sigma must be >= 0 and delta finite");
        }
        Ok(())
    }
}

/// Ground truth for one generated utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct SidecarRow {
    pub sample_id: String,
    pub dataset: String,
    pub system_id: String,
    pub snr_db: f64,
    pub delta: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub manifest: CorpusManifest,
    pub sidecar: Vec<SidecarRow>,
    pub manifest_path: PathBuf,
    pub sidecar_path: PathBuf,
}

fn system_name(snr: f64) -> String {
    format!("snr{snr}")
}

/// Generates a corpus of sine-plus-white-noise utterances under `out_dir`.
///
/// Writes `<name>.csv` (manifest), `<name>.sidecar.csv` and one 16-bit PCM
/// WAV per utterance under `<name>_wav/`. Each SNR grid point is one system.
pub fn generate_synthetic_corpus(spec: &SynthSpec, out_dir: &Path, seed: u64) -> Result<SynthCorpus> {
    spec.validate()?;
    let wav_dir = out_dir.join(format!("{}_wav", spec.name));
    fs::create_dir_all(&wav_dir).map_err(|e| Error::io(&wav_dir, e))?;

    let mut rng = stream_rng(seed ^ crate::seed::stream_seed(0, &spec.name), STREAM_SYNTH);
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let rate = f64::from(spec.rate_hz);

    let mut corpus = CorpusManifest::new(spec.name.clone(), spec.domain_tag);
    corpus.native_rate_hz = spec.rate_hz;
    corpus.language = "synthetic-tone".into();
    let mut splits: BTreeMap<Split, Vec<Sample>> = BTreeMap::new();
    let mut sidecar = Vec::new();

    let plan = [
        (Split::Train, spec.n_train),
        (Split::Dev, spec.n_dev),
        (Split::Test, spec.n_test),
    ];
    for (split, count) in plan {
        for i in 0..count {
            let sample_id = format!("{}_{split}_{i:05}", spec.name);
            let duration = rng.random_range(spec.min_duration_s..=spec.max_duration_s);
            let freq = rng.random_range(spec.tone_hz.0..=spec.tone_hz.1);
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            let snr = spec.snr_grid_db[rng.random_range(0..spec.snr_grid_db.len())];
            let epsilon = if spec.sigma > 0.0 {
                spec.sigma * noise.sample(&mut rng)
            } else {
                0.0
            };

            let n = (duration * rate).round().max(1.0) as usize;
            let signal_rms = spec.tone_amplitude / std::f64::consts::SQRT_2;
            let noise_std = signal_rms / 10f64.powf(snr / 20.0);
            let wave: Vec<f64> = (0..n)
                .map(|t| {
                    let tone = spec.tone_amplitude
                        * (std::f64::consts::TAU * freq * t as f64 / rate + phase).sin();
                    tone + noise_std * noise.sample(&mut rng)
                })
                .collect();
            let wav_path = wav_dir.join(format!("{sample_id}.wav"));
            write_wav(&wav_path, &wave, spec.rate_hz)?;

            let raw = spec.mos_map.apply(snr) + epsilon + spec.delta;
            let system_id = system_name(snr);
            splits.entry(split).or_default().push(Sample {
                sample_id: sample_id.clone(),
                audio_ref: Some(wav_path),
                embedding_ref: None,
                dataset_id: spec.name.clone(),
                system_id: Some(system_id.clone()),
                mos: raw.clamp(MOS_MIN, MOS_MAX),
                listener_scores: None,
            });
            sidecar.push(SidecarRow {
                sample_id,
                dataset: spec.name.clone(),
                system_id,
                snr_db: snr,
                delta: spec.delta,
                epsilon,
            });
        }
    }
    corpus.splits = splits;

    let manifest_path = out_dir.join(format!("{}.csv", spec.name));
    write_manifest(&corpus, &manifest_path)?;
    let sidecar_path = out_dir.join(format!("{}.sidecar.csv", spec.name));
    let mut text = String::from(SIDECAR_HEADER);
    text.push('\n');
    for r in &sidecar {
        let _ = writeln!(
            text,
            "{},{},{},{},{},{}",
            r.sample_id, r.dataset, r.system_id, r.snr_db, r.delta, r.epsilon
        );
    }
    fs::write(&sidecar_path, text).map_err(|e| Error::io(&sidecar_path, e))?;

    Ok(SynthCorpus {
        manifest: corpus,
        sidecar,
        manifest_path,
        sidecar_path,
    })
}

pub fn load_sidecar(path: &Path) -> Result<Vec<SidecarRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let perr = |line: usize, msg: &str| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.to_string(),
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == SIDECAR_HEADER => {}
        _ => return Err(perr(1, "missing sidecar header")),
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let c: Vec<&str> = l.split(',').collect();
            if c.len() != 6 {
                return Err(perr(i + 1, "expected 6 columns"));
            }
            let num = |s: &str| s.trim().parse::<f64>().map_err(|_| perr(i + 1, "bad number"));
            Ok(SidecarRow {
                sample_id: c[0].to_string(),
                dataset: c[1].to_string(),
                system_id: c[2].to_string(),
                snr_db: num(c[3])?,
                delta: num(c[4])?,
                epsilon: num(c[5])?,
            })
        })
        .collect()
}
