//! Log-mel filterbank frontend.
//!
//! Frames are Hann-windowed, zero-padded to the next power of two and turned
//! into power spectra. Triangular filters evenly spaced on the HTK mel scale
//! between 0 Hz and Nyquist give `n_mels` energies, floored at [`LOG_FLOOR`]
//! before the natural log. Each frame vector is the log-mel energies followed
//! by their first-order temporal deltas, so `D = 2 * n_mels`.

use std::sync::Arc;

use ndarray::Array2;
use rustfft::{num_complex::Complex, Fft, FftPlanner};

use super::audio::{Waveform, TARGET_RATE_HZ};
use super::{DspParams, EmbeddingMatrix};
use crate::error::{Error, Result};

pub const LOG_FLOOR: f64 = 1e-10;

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Centre frequencies (Hz) of the mel filters.
pub fn mel_centers_hz(n_mels: usize, rate_hz: f64) -> Vec<f64> {
    let top = hz_to_mel(rate_hz / 2.0);
    (1..=n_mels)
        .map(|m| mel_to_hz(top * m as f64 / (n_mels + 1) as f64))
        .collect()
}

fn filterbank(n_mels: usize, n_fft: usize, rate_hz: f64) -> Array2<f64> {
    let n_bins = n_fft / 2 + 1;
    let top = hz_to_mel(rate_hz / 2.0);
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|m| mel_to_hz(top * m as f64 / (n_mels + 1) as f64))
        .collect();
    let mut fb = Array2::zeros((n_mels, n_bins));
    for m in 0..n_mels {
        let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        for k in 0..n_bins {
            let f = k as f64 * rate_hz / n_fft as f64;
            let w = if f > lo && f <= mid {
                (f - lo) / (mid - lo)
            } else if f > mid && f < hi {
                (hi - f) / (hi - mid)
            } else {
                0.0
            };
            fb[[m, k]] = w;
        }
    }
    fb
}

/// Reflects index `i` back into `0..len`.
fn reflect(i: usize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len - 1);
    let r = i % period;
    if r < len {
        r
    } else {
        period - r
    }
}

/// Reusable extractor holding the FFT plan, window and filterbank.
#[derive(Clone)]
pub struct DspExtractor {
    params: DspParams,
    win: usize,
    hop: usize,
    n_fft: usize,
    window: Vec<f64>,
    fb: Array2<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for DspExtractor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DspExtractor")
            .field("params", &self.params)
            .field("win", &self.win)
            .field("hop", &self.hop)
            .field("n_fft", &self.n_fft)
            .finish()
    }
}

impl DspExtractor {
    pub fn new(params: DspParams) -> Result<Self> {
        params.validate()?;
        let rate = f64::from(TARGET_RATE_HZ);
        let win = ((params.window_ms * rate / 1000.0).round() as usize).max(1);
        let hop = ((params.hop_ms * rate / 1000.0).round() as usize).max(1);
        let n_fft = win.next_power_of_two();
        let window = (0..win)
            .map(|i| 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / win as f64).cos())
            .collect();
        let fb = filterbank(params.n_mels, n_fft, rate);
        let fft = FftPlanner::new().plan_fft_forward(n_fft);
        Ok(DspExtractor {
            params,
            win,
            hop,
            n_fft,
            window,
            fb,
            fft,
        })
    }

    pub fn dim(&self) -> usize {
        2 * self.params.n_mels
    }

    pub fn frame_rate_hz(&self) -> f64 {
        f64::from(TARGET_RATE_HZ) / self.hop as f64
    }

    /// Frame vector produced by digital silence.
    pub fn log_floor_vector(&self) -> Vec<f64> {
        let mut v = vec![LOG_FLOOR.ln(); self.params.n_mels];
        v.extend(std::iter::repeat_n(0.0, self.params.n_mels));
        v
    }

    pub fn extract(&self, wave: &Waveform) -> Result<EmbeddingMatrix> {
        if wave.rate_hz != TARGET_RATE_HZ {
            return Err(Error::Argument(format!(
                "dsp frontend expects {TARGET_RATE_HZ} Hz audio, got {}",
                wave.rate_hz
            )));
        }
        if wave.is_empty() {
            return Err(Error::Argument("empty waveform".into()));
        }
        let x: Vec<f64> = if wave.len() < self.win {
            (0..self.win).map(|i| wave.samples[reflect(i, wave.len())]).collect()
        } else {
            wave.samples.clone()
        };
        let n_frames = 1 + (x.len() - self.win) / self.hop;
        let n_mels = self.params.n_mels;
        let n_bins = self.n_fft / 2 + 1;

        let mut logmel = Array2::<f64>::zeros((n_frames, n_mels));
        let mut buf = vec![Complex::new(0.0, 0.0); self.n_fft];
        let mut power = vec![0.0; n_bins];
        for t in 0..n_frames {
            let start = t * self.hop;
            for (i, b) in buf.iter_mut().enumerate() {
                *b = if i < self.win {
                    Complex::new(x[start + i] * self.window[i], 0.0)
                } else {
                    Complex::new(0.0, 0.0)
                };
            }
            self.fft.process(&mut buf);
            for (k, p) in power.iter_mut().enumerate() {
                *p = buf[k].norm_sqr() / self.win as f64;
            }
            for m in 0..n_mels {
                let e: f64 = self.fb.row(m).iter().zip(&power).map(|(w, p)| w * p).sum();
                logmel[[t, m]] = e.max(LOG_FLOOR).ln();
            }
        }

        let mut frames = Array2::<f64>::zeros((n_frames, 2 * n_mels));
        for t in 0..n_frames {
            let prev = t.saturating_sub(1);
            let next = (t + 1).min(n_frames - 1);
            for m in 0..n_mels {
                frames[[t, m]] = logmel[[t, m]];
                frames[[t, n_mels + m]] = 0.5 * (logmel[[next, m]] - logmel[[prev, m]]);
            }
        }
        EmbeddingMatrix::new(frames, self.frame_rate_hz())
    }
}

/// One-shot extraction; prefer [`DspExtractor`] when processing many files.
pub fn extract_dsp(wave: &Waveform, params: &DspParams) -> Result<EmbeddingMatrix> {
    DspExtractor::new(params.clone())?.extract(wave)
}
