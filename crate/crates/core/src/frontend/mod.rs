//! Audio front end: WAV loading and MFCC + delta feature extraction.

mod mfcc;

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

pub use mfcc::{append_deltas, dct2, hz_to_mel, mel_to_hz, MelFilterbank, MfccExtractor};

/// Mono audio with amplitudes in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidInput("sample rate must be positive".into()));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidInput(
                "waveform contains non-finite samples".into(),
            ));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }
}

/// Reads a 16-bit PCM mono WAV file, scaling samples by `1/32768`.
pub fn load_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile {
            path: path.to_path_buf(),
        });
    }
    let reader = hound::WavReader::open(path).map_err(|e| wav_error(path, e))?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int {
        return Err(Error::UnsupportedEncoding(
            "floating-point samples (need 16-bit PCM)".into(),
        ));
    }
    if spec.bits_per_sample != 16 {
        return Err(Error::UnsupportedEncoding(format!(
            "{}-bit samples (need 16-bit PCM)",
            spec.bits_per_sample
        )));
    }
    if spec.channels != 1 {
        return Err(Error::UnsupportedEncoding(format!(
            "{} channels (need mono)",
            spec.channels
        )));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| f64::from(v) / 32768.0))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| wav_error(path, e))?;
    Waveform::new(samples, spec.sample_rate)
}

/// Writes a 16-bit PCM mono WAV file; amplitudes are clipped to the PCM range.
pub fn save_wav(path: impl AsRef<Path>, wave: &Waveform) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: wave.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| wav_error(path, e))?;
    for &s in &wave.samples {
        let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(v).map_err(|e| wav_error(path, e))?;
    }
    writer.finalize().map_err(|e| wav_error(path, e))
}

fn wav_error(path: &Path, err: hound::Error) -> Error {
    match err {
        hound::Error::IoError(e) => Error::io(path, e),
        hound::Error::Unsupported => Error::UnsupportedEncoding("non-PCM WAV format".into()),
        other => Error::InvalidWav(format!("{}: {other}", path.display())),
    }
}

/// MFCC front-end settings.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontendConfig {
    pub frame_length_ms: f64,
    pub frame_shift_ms: f64,
    pub pre_emphasis: f64,
    pub num_mel_filters: usize,
    pub num_ceps: usize,
    /// FFT length; `None` picks the next power of two at or above the frame length.
    pub fft_size: Option<usize>,
    pub delta_window: usize,
    /// Smallest filterbank energy passed to `ln`.
    pub log_floor: f64,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        Self {
            frame_length_ms: 25.0,
            frame_shift_ms: 10.0,
            pre_emphasis: 0.97,
            num_mel_filters: 26,
            num_ceps: 13,
            fft_size: None,
            delta_window: 2,
            log_floor: f64::MIN_POSITIVE,
        }
    }
}

impl FrontendConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.frame_length_ms > 0.0 && self.frame_shift_ms > 0.0) {
            return bad("frame length and shift must be positive".into());
        }
        if self.frame_shift_ms > self.frame_length_ms {
            return bad(format!(
                "frame shift {} ms exceeds frame length {} ms",
                self.frame_shift_ms, self.frame_length_ms
            ));
        }
        if self.num_ceps != 13 {
            return bad(format!("num_ceps must be 13, got {}", self.num_ceps));
        }
        if self.num_ceps > self.num_mel_filters {
            return bad(format!(
                "num_ceps {} exceeds num_mel_filters {}",
                self.num_ceps, self.num_mel_filters
            ));
        }
        if !(0.0..1.0).contains(&self.pre_emphasis) {
            return bad(format!("pre-emphasis {} outside [0, 1)", self.pre_emphasis));
        }
        if self.log_floor.is_nan() || self.log_floor <= 0.0 {
            return bad("log_floor must be positive".into());
        }
        if self.delta_window == 0 {
            return bad("delta window must be at least 1".into());
        }
        if let Some(n) = self.fft_size {
            if !n.is_power_of_two() {
                return bad(format!("fft_size {n} is not a power of two"));
            }
        }
        Ok(())
    }

    pub fn frame_samples(&self, sample_rate: u32) -> usize {
        (self.frame_length_ms * f64::from(sample_rate) / 1000.0).round() as usize
    }

    pub fn shift_samples(&self, sample_rate: u32) -> usize {
        (self.frame_shift_ms * f64::from(sample_rate) / 1000.0).round() as usize
    }

    pub fn fft_len(&self, sample_rate: u32) -> usize {
        self.fft_size
            .unwrap_or_else(|| self.frame_samples(sample_rate).next_power_of_two())
    }

    /// Number of frames for `len` samples: `1 + floor((len - frame) / shift)`.
    pub fn num_frames(&self, len: usize, sample_rate: u32) -> Option<usize> {
        let frame = self.frame_samples(sample_rate);
        let shift = self.shift_samples(sample_rate);
        (len >= frame && frame > 0 && shift > 0).then(|| 1 + (len - frame) / shift)
    }

    /// Stable identifier of everything that shapes the feature stream.
    pub fn fingerprint(&self, sample_rate: u32) -> String {
        let canon = format!(
            "mfcc;sr={sample_rate};len={:?};shift={:?};pre={:?};mel={};ceps={};fft={};delta={};floor={:?}",
            self.frame_length_ms,
            self.frame_shift_ms,
            self.pre_emphasis,
            self.num_mel_filters,
            self.num_ceps,
            self.fft_len(sample_rate),
            self.delta_window,
            self.log_floor,
        );
        format!("mfcc-{}", short_hash(canon.as_bytes()))
    }
}

pub(crate) fn short_hash(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Plain 13-dimensional MFCCs.
pub fn compute_mfcc(wave: &Waveform, cfg: &FrontendConfig) -> Result<FeatureMatrix> {
    MfccExtractor::new(cfg, wave.sample_rate())?.compute(wave)
}

/// MFCCs with deltas and delta-deltas appended (39 dimensions).
pub fn compute_features(wave: &Waveform, cfg: &FrontendConfig) -> Result<FeatureMatrix> {
    let base = compute_mfcc(wave, cfg)?;
    append_deltas(&base, cfg.delta_window)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_count_formula() {
        let cfg = FrontendConfig::default();
        // 25 ms / 10 ms at 16 kHz = 400 / 160 samples.
        assert_eq!(cfg.num_frames(399, 16000), None);
        assert_eq!(cfg.num_frames(400, 16000), Some(1));
        assert_eq!(cfg.num_frames(559, 16000), Some(1));
        assert_eq!(cfg.num_frames(560, 16000), Some(2));
        assert_eq!(cfg.num_frames(16000, 16000), Some(98));
    }

    #[test]
    fn shift_longer_than_frame_is_rejected() {
        let cfg = FrontendConfig {
            frame_shift_ms: 30.0,
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn fingerprint_tracks_config() {
        let a = FrontendConfig::default();
        let b = FrontendConfig {
            num_mel_filters: 24,
            ..Default::default()
        };
        assert_eq!(a.fingerprint(16000), a.fingerprint(16000));
        assert_ne!(a.fingerprint(16000), b.fingerprint(16000));
        assert_ne!(a.fingerprint(16000), a.fingerprint(8000));
    }

    #[test]
    fn waveform_rejects_bad_input() {
        assert!(Waveform::new(vec![0.0; 4], 0).is_err());
        assert!(Waveform::new(vec![0.0, f64::INFINITY], 16000).is_err());
    }
}
