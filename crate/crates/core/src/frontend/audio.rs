use std::path::Path;

use crate::error::{Error, Result};

pub const TARGET_RATE_HZ: u32 = 16_000;

/// Mono audio normalized to [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub rate_hz: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, rate_hz: u32) -> Self {
        Waveform { samples, rate_hz }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.rate_hz)
    }
}

/// Reads an 8- or 16-bit mono PCM WAV file.
pub fn load_audio(path: &Path) -> Result<Waveform> {
    let wav_err = |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        hound::Error::Unsupported => {
            Error::UnsupportedFormat(format!("{}: not a PCM WAV file", path.display()))
        }
        other => wav_err(other),
    })?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::UnsupportedFormat(format!(
            "{}: {} channels, only mono is supported",
            path.display(),
            spec.channels
        )));
    }
    if spec.sample_format != hound::SampleFormat::Int {
        return Err(Error::UnsupportedFormat(format!(
            "{}: floating point samples, only integer PCM is supported",
            path.display()
        )));
    }
    let samples: Vec<f64> = match spec.bits_per_sample {
        8 => reader
            .samples::<i8>()
            .map(|s| s.map(|v| f64::from(v) / 128.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(wav_err)?,
        16 => reader
            .samples::<i16>()
            .map(|s| s.map(|v| f64::from(v) / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(wav_err)?,
        bits => {
            return Err(Error::UnsupportedFormat(format!(
                "{}: {bits}-bit samples, only 8 and 16 bit are supported",
                path.display()
            )))
        }
    };
    Ok(Waveform::new(samples, spec.sample_rate))
}

/// Writes 16-bit mono PCM; values are clipped to the representable range.
pub fn write_wav(path: &Path, samples: &[f64], rate_hz: u32) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: rate_hz,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let wav_err = |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(|e| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => wav_err(other),
    })?;
    for &s in samples {
        let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        w.write_sample(q).map_err(wav_err)?;
    }
    w.finalize().map_err(wav_err)
}

/// Linear-interpolation resampling to 16 kHz.
///
/// Output sample `i` sits at input position `i * rate / 16000`; the output
/// length is `round(len * 16000 / rate)`. Audio already at 16 kHz is
/// returned unchanged. No anti-aliasing filter is applied.
pub fn resample_to_16k(wave: &Waveform) -> Waveform {
    if wave.rate_hz == TARGET_RATE_HZ || wave.samples.is_empty() {
        return Waveform::new(wave.samples.clone(), TARGET_RATE_HZ);
    }
    let x = &wave.samples;
    let ratio = f64::from(wave.rate_hz) / f64::from(TARGET_RATE_HZ);
    let out_len = (x.len() as f64 / ratio).round() as usize;
    let last = x.len() - 1;
    let out = (0..out_len)
        .map(|i| {
            let pos = i as f64 * ratio;
            let j = (pos.floor() as usize).min(last);
            let frac = pos - j as f64;
            let next = x[(j + 1).min(last)];
            x[j] + frac * (next - x[j])
        })
        .collect();
    Waveform::new(out, TARGET_RATE_HZ)
}
