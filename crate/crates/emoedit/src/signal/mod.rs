//! Audio I/O, framing, acoustic feature extraction, pitch tracking, and a
//! crude feature-to-audio preview synthesizer.
//!
//! The canonical audio format everywhere downstream is mono 16 kHz PCM.
//! Acoustic features are `T x (n_cepstra + 2)` matrices at a 10 ms hop:
//! cepstral coefficients first, then log-F0 (0 when unvoiced), then a
//! binary voicing flag.

mod features;
mod invert;
mod resample;
mod wav;
mod yin;

use std::io::Read;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

pub use features::extract_features;
pub(crate) use features::log_mel_spectrogram;
pub use invert::invert_features;
pub use resample::{resample, resample_by};
pub use wav::{load_wav, save_wav};
pub use yin::estimate_f0_yin;

/// Canonical sample rate: everything is resampled to this on load.
pub const SAMPLE_RATE: u32 = 16_000;

/// Mono audio with samples in `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        Waveform {
            samples,
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 {
            return Err(Error::InvalidInput("sample_rate must be > 0".into()));
        }
        if self.samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidInput("waveform contains non-finite samples".into()));
        }
        Ok(())
    }
}

/// Analysis framing parameters.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FrameConfig {
    /// Frame shift in seconds.
    pub hop: f64,
    /// Analysis window length in seconds.
    pub window: f64,
    /// Number of mel bands.
    pub n_mels: usize,
    /// Number of cepstral coefficients kept (must be <= n_mels).
    pub n_cepstra: usize,
}

impl Default for FrameConfig {
    fn default() -> Self {
        FrameConfig {
            hop: 0.010,
            window: 0.025,
            n_mels: 40,
            n_cepstra: 30,
        }
    }
}

impl FrameConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.hop > 0.0 && self.hop <= self.window) {
            return Err(Error::Config("frame config requires 0 < hop <= window".into()));
        }
        if self.n_cepstra > self.n_mels {
            return Err(Error::Config("n_cepstra must be <= n_mels".into()));
        }
        Ok(())
    }

    pub fn hop_samples(&self, sample_rate: u32) -> usize {
        (self.hop * sample_rate as f64).round() as usize
    }

    pub fn window_samples(&self, sample_rate: u32) -> usize {
        (self.window * sample_rate as f64).round() as usize
    }

    /// Number of frames produced for a signal of `n` samples:
    /// `floor((n - window) / hop) + 1`.
    pub fn frame_count(&self, n: usize, sample_rate: u32) -> Option<usize> {
        let w = self.window_samples(sample_rate);
        let h = self.hop_samples(sample_rate);
        if n < w {
            None
        } else {
            Some((n - w) / h + 1)
        }
    }

    /// Feature dimensionality: cepstra plus log-F0 and voicing columns.
    pub fn feat_dim(&self) -> usize {
        self.n_cepstra + 2
    }
}

/// A `T x D` acoustic feature matrix. With the default [`FrameConfig`],
/// `D = 32`: columns `0..30` are cepstra, column 30 is log-F0 (natural log,
/// 0 for unvoiced frames) and column 31 is the binary voicing flag.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub frames: Array2<f64>,
}

impl FeatureSequence {
    pub fn new(frames: Array2<f64>) -> Self {
        FeatureSequence { frames }
    }

    /// Number of frames.
    pub fn len(&self) -> usize {
        self.frames.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.nrows() == 0
    }

    /// Feature dimensionality.
    pub fn dim(&self) -> usize {
        self.frames.ncols()
    }

    /// Column index of log-F0 (second to last).
    pub fn log_f0_col(&self) -> usize {
        self.dim() - 2
    }

    /// Column index of the voicing flag (last).
    pub fn voicing_col(&self) -> usize {
        self.dim() - 1
    }

    /// Number of cepstral columns.
    pub fn n_cepstra(&self) -> usize {
        self.dim() - 2
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames.nrows() == 0 {
            return Err(Error::InvalidInput("feature sequence must have T >= 1".into()));
        }
        if self.frames.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("feature sequence contains non-finite values".into()));
        }
        let vcol = self.voicing_col();
        for row in self.frames.rows() {
            let v = row[vcol];
            if v != 0.0 && v != 1.0 {
                return Err(Error::InvalidInput("voicing column must be binary".into()));
            }
        }
        Ok(())
    }

    /// Validate plus an exact dimensionality requirement.
    pub fn validate_dims(&self, dim: usize) -> Result<()> {
        self.validate()?;
        if self.dim() != dim {
            return Err(Error::InvalidInput(format!(
                "feature sequence has {} channels, expected {dim}",
                self.dim()
            )));
        }
        Ok(())
    }

    /// Rows `start..start+len` as a new sequence.
    pub fn slice_rows(&self, start: usize, len: usize) -> FeatureSequence {
        FeatureSequence::new(self.frames.slice(ndarray::s![start..start + len, ..]).to_owned())
    }

    /// Save as a little-endian f32 matrix with an 8-byte header (T, D as u32).
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf: Vec<u8> = Vec::with_capacity(8 + self.frames.len() * 4);
        buf.extend_from_slice(&(self.frames.nrows() as u32).to_le_bytes());
        buf.extend_from_slice(&(self.frames.ncols() as u32).to_le_bytes());
        for v in self.frames.iter() {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        crate::util::atomic_write(path, &buf)
    }

    /// Load a feature file written by [`FeatureSequence::save`].
    pub fn load(path: &Path) -> Result<FeatureSequence> {
        let mut file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut header = [0u8; 8];
        file.read_exact(&mut header).map_err(|e| Error::io(path, e))?;
        let t = u32::from_le_bytes(header[0..4].try_into().unwrap()) as usize;
        let d = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
        let mut data = Vec::new();
        file.read_to_end(&mut data).map_err(|e| Error::io(path, e))?;
        if data.len() != t * d * 4 {
            return Err(Error::InvalidInput(format!(
                "feature file {} has {} payload bytes, expected {} for {}x{}",
                path.display(),
                data.len(),
                t * d * 4,
                t,
                d
            )));
        }
        let mut frames = Array2::<f64>::zeros((t, d));
        for (i, chunk) in data.chunks_exact(4).enumerate() {
            frames[[i / d, i % d]] = f32::from_le_bytes(chunk.try_into().unwrap()) as f64;
        }
        Ok(FeatureSequence::new(frames))
    }
}

/// Per-frame fundamental frequency track. `f0_hz` is 0 wherever `voiced`
/// is false.
#[derive(Debug, Clone, PartialEq)]
pub struct F0Track {
    pub f0_hz: Vec<f64>,
    pub voiced: Vec<bool>,
}

impl F0Track {
    pub fn len(&self) -> usize {
        self.f0_hz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f0_hz.is_empty()
    }

    /// Median F0 over voiced frames, if any.
    pub fn median_voiced(&self) -> Option<f64> {
        let mut voiced: Vec<f64> = self
            .f0_hz
            .iter()
            .zip(&self.voiced)
            .filter(|(_, &v)| v)
            .map(|(&f, _)| f)
            .collect();
        if voiced.is_empty() {
            return None;
        }
        voiced.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Some(voiced[voiced.len() / 2])
    }

    /// Fraction of frames marked voiced.
    pub fn voiced_fraction(&self) -> f64 {
        if self.f0_hz.is_empty() {
            return 0.0;
        }
        self.voiced.iter().filter(|&&v| v).count() as f64 / self.voiced.len() as f64
    }
}
