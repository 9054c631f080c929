use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{FrontendConfig, Waveform};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

pub fn hz_to_mel(hz: f64) -> f64 {
    1127.0 * (1.0 + hz / 700.0).ln()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * ((mel / 1127.0).exp() - 1.0)
}

/// Triangular filters equally spaced on the mel scale between 0 Hz and Nyquist.
///
/// Filter `k` rises linearly (in mel) from the centre of filter `k - 1` to its
/// own centre, where its weight is 1, and falls back to 0 at the centre of
/// filter `k + 1`.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    /// Per filter: first FFT bin with non-zero weight, then the weights.
    filters: Vec<(usize, Vec<f64>)>,
    edges_mel: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(num_filters: usize, fft_len: usize, sample_rate: u32) -> Self {
        let nyquist = f64::from(sample_rate) / 2.0;
        let mel_hi = hz_to_mel(nyquist);
        let step = mel_hi / (num_filters + 1) as f64;
        let edges_mel: Vec<f64> = (0..num_filters + 2).map(|i| i as f64 * step).collect();
        let num_bins = fft_len / 2 + 1;
        let bin_hz = f64::from(sample_rate) / fft_len as f64;

        let filters = (0..num_filters)
            .map(|k| {
                let (left, center, right) = (edges_mel[k], edges_mel[k + 1], edges_mel[k + 2]);
                let mut first = None;
                let mut weights = Vec::new();
                for bin in 0..num_bins {
                    let mel = hz_to_mel(bin as f64 * bin_hz);
                    let w = if mel > left && mel <= center {
                        (mel - left) / (center - left)
                    } else if mel > center && mel < right {
                        (right - mel) / (right - center)
                    } else {
                        0.0
                    };
                    if w > 0.0 {
                        first.get_or_insert(bin);
                        weights.push(w);
                    } else if first.is_some() {
                        break;
                    }
                }
                (first.unwrap_or(0), weights)
            })
            .collect();
        Self { filters, edges_mel }
    }

    pub fn len(&self) -> usize {
        self.filters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filters.is_empty()
    }

    /// Centre frequency of filter `k` in Hz.
    pub fn center_hz(&self, k: usize) -> f64 {
        mel_to_hz(self.edges_mel[k + 1])
    }

    /// Weighted sums of `power` (one value per FFT bin up to Nyquist).
    pub fn apply(&self, power: &[f64]) -> Vec<f64> {
        self.filters
            .iter()
            .map(|(first, weights)| {
                weights
                    .iter()
                    .zip(&power[*first..])
                    .map(|(w, p)| w * p)
                    .sum()
            })
            .collect()
    }
}

/// Orthonormal DCT-II of `input`, keeping the first `num_out` coefficients.
pub fn dct2(input: &[f64], num_out: usize) -> Vec<f64> {
    let m = input.len() as f64;
    (0..num_out)
        .map(|k| {
            let scale = if k == 0 {
                (1.0 / m).sqrt()
            } else {
                (2.0 / m).sqrt()
            };
            let sum: f64 = input
                .iter()
                .enumerate()
                .map(|(i, x)| x * (PI * k as f64 * (2.0 * i as f64 + 1.0) / (2.0 * m)).cos())
                .sum();
            scale * sum
        })
        .collect()
}

/// Frame-by-frame MFCC computation for one sample rate.
pub struct MfccExtractor {
    cfg: FrontendConfig,
    sample_rate: u32,
    frame_len: usize,
    shift: usize,
    fft_len: usize,
    window: Vec<f64>,
    filterbank: MelFilterbank,
    fft: Arc<dyn Fft<f64>>,
}

impl MfccExtractor {
    pub fn new(cfg: &FrontendConfig, sample_rate: u32) -> Result<Self> {
        cfg.validate()?;
        let frame_len = cfg.frame_samples(sample_rate);
        let shift = cfg.shift_samples(sample_rate);
        if frame_len < 2 || shift == 0 {
            return Err(Error::Config(format!(
                "frame of {frame_len} samples / shift of {shift} samples at {sample_rate} Hz"
            )));
        }
        let fft_len = cfg.fft_len(sample_rate);
        if fft_len < frame_len {
            return Err(Error::Config(format!(
                "fft_size {fft_len} is shorter than the {frame_len}-sample frame"
            )));
        }
        let window = (0..frame_len)
            .map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / (frame_len - 1) as f64).cos())
            .collect();
        let filterbank = MelFilterbank::new(cfg.num_mel_filters, fft_len, sample_rate);
        let fft = FftPlanner::new().plan_fft_forward(fft_len);
        Ok(Self {
            cfg: cfg.clone(),
            sample_rate,
            frame_len,
            shift,
            fft_len,
            window,
            filterbank,
            fft,
        })
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.filterbank
    }

    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    pub fn shift(&self) -> usize {
        self.shift
    }

    /// Power spectrum (bins `0..=fft_len/2`) of one pre-emphasized, windowed frame.
    pub fn power_spectrum(&self, frame: &[f64]) -> Vec<f64> {
        assert_eq!(frame.len(), self.frame_len);
        let a = self.cfg.pre_emphasis;
        let mut buf = vec![Complex::new(0.0, 0.0); self.fft_len];
        for n in 0..self.frame_len {
            let prev = if n == 0 { frame[0] } else { frame[n - 1] };
            buf[n].re = (frame[n] - a * prev) * self.window[n];
        }
        self.fft.process(&mut buf);
        buf[..self.fft_len / 2 + 1]
            .iter()
            .map(|c| c.norm_sqr())
            .collect()
    }

    /// Mel filterbank energies of one frame (before the log).
    pub fn filterbank_energies(&self, frame: &[f64]) -> Vec<f64> {
        self.filterbank.apply(&self.power_spectrum(frame))
    }

    /// Cepstrum of one frame: log-clamped filterbank energies through the DCT.
    pub fn cepstrum(&self, frame: &[f64]) -> Vec<f64> {
        let logs: Vec<f64> = self
            .filterbank_energies(frame)
            .into_iter()
            .map(|e| e.max(self.cfg.log_floor).ln())
            .collect();
        dct2(&logs, self.cfg.num_ceps)
    }

    pub fn compute(&self, wave: &Waveform) -> Result<FeatureMatrix> {
        if wave.sample_rate() != self.sample_rate {
            return Err(Error::InvalidInput(format!(
                "extractor built for {} Hz, waveform is {} Hz",
                self.sample_rate,
                wave.sample_rate()
            )));
        }
        let samples = wave.samples();
        let frames = self.cfg.num_frames(samples.len(), self.sample_rate).ok_or(
            Error::WaveformTooShort {
                samples: samples.len(),
                frame: self.frame_len,
            },
        )?;
        let mut data = Vec::with_capacity(frames * self.cfg.num_ceps);
        for t in 0..frames {
            let start = t * self.shift;
            data.extend(self.cepstrum(&samples[start..start + self.frame_len]));
        }
        FeatureMatrix::from_flat(
            data,
            self.cfg.num_ceps,
            self.cfg.frame_shift_ms,
            self.cfg.fingerprint(self.sample_rate),
        )
    }
}

/// Appends regression deltas and delta-deltas to 13-dimensional cepstra.
///
/// `delta_t = sum_{n=1..W} n (c_{t+n} - c_{t-n}) / (2 sum n^2)`, with frame
/// indices clamped to `[0, T-1]`. Delta-deltas apply the same operator to the
/// deltas.
pub fn append_deltas(feat: &FeatureMatrix, window: usize) -> Result<FeatureMatrix> {
    if feat.dim() != 13 {
        return Err(Error::DimensionMismatch {
            expected: 13,
            actual: feat.dim(),
        });
    }
    if window == 0 {
        return Err(Error::Config("delta window must be at least 1".into()));
    }
    let base: Vec<&[f64]> = feat.frames().iter().collect();
    let delta = regression(&base, window);
    let delta_refs: Vec<&[f64]> = delta.iter().map(Vec::as_slice).collect();
    let accel = regression(&delta_refs, window);

    let mut data = Vec::with_capacity(base.len() * 39);
    for t in 0..base.len() {
        data.extend_from_slice(base[t]);
        data.extend_from_slice(&delta[t]);
        data.extend_from_slice(&accel[t]);
    }
    FeatureMatrix::from_flat(data, 39, feat.frame_shift_ms(), feat.fingerprint())
}

fn regression(frames: &[&[f64]], window: usize) -> Vec<Vec<f64>> {
    let last = frames.len() - 1;
    let norm = 2.0 * (1..=window).map(|n| (n * n) as f64).sum::<f64>();
    (0..frames.len())
        .map(|t| {
            let dim = frames[t].len();
            let mut out = vec![0.0; dim];
            for n in 1..=window {
                let ahead = frames[(t + n).min(last)];
                let behind = frames[t.saturating_sub(n)];
                for d in 0..dim {
                    out[d] += n as f64 * (ahead[d] - behind[d]);
                }
            }
            out.iter_mut().for_each(|v| *v /= norm);
            out
        })
        .collect()
}
