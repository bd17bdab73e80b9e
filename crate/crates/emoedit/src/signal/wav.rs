//! WAV reading and writing. Input files may be any integer-PCM WAV; they
//! are collapsed to the first channel and resampled to 16 kHz on load.
//! Output is always 16-bit mono 16 kHz.

use std::path::Path;

use crate::error::{Error, Result};

use super::{resample, Waveform, SAMPLE_RATE};

/// Load a WAV file as mono 16 kHz float samples in `[-1, 1]`.
///
/// Multi-channel files keep only the first channel. Float-encoded WAVs are
/// rejected: the corpora this crate targets are integer PCM, and silently
/// accepting other encodings has hidden quantization bugs before.
pub fn load_wav(path: &Path) -> Result<Waveform> {
    let mut reader = hound::WavReader::open(path)
        .map_err(|e| Error::Wav(format!("{}: {e}", path.display())))?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int {
        return Err(Error::Wav(format!(
            "{}: unsupported encoding (only integer PCM is accepted)",
            path.display()
        )));
    }
    if spec.channels == 0 {
        return Err(Error::Wav(format!("{}: zero channels", path.display())));
    }
    let channels = spec.channels as usize;
    let scale = (1i64 << (spec.bits_per_sample - 1)) as f64;
    let mut samples = Vec::with_capacity(reader.len() as usize / channels);
    for (i, s) in reader.samples::<i32>().enumerate() {
        let s = s.map_err(|e| Error::Wav(format!("{}: {e}", path.display())))?;
        if i % channels == 0 {
            samples.push(s as f64 / scale);
        }
    }
    if samples.is_empty() {
        return Err(Error::Wav(format!("{}: zero-length audio", path.display())));
    }
    let samples = if spec.sample_rate == SAMPLE_RATE {
        samples
    } else {
        resample(&samples, spec.sample_rate, SAMPLE_RATE)
    };
    Ok(Waveform::new(samples, SAMPLE_RATE))
}

/// Write a waveform as 16-bit mono PCM. The waveform must already be at
/// 16 kHz; samples are clamped to `[-1, 1]` before quantization.
pub fn save_wav(w: &Waveform, path: &Path) -> Result<()> {
    if w.sample_rate != SAMPLE_RATE {
        return Err(Error::Wav(format!(
            "save_wav expects {SAMPLE_RATE} Hz input, got {}",
            w.sample_rate
        )));
    }
    if w.is_empty() {
        return Err(Error::Wav("refusing to write zero-length audio".into()));
    }
    w.validate()?;
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: SAMPLE_RATE,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec)
        .map_err(|e| Error::Wav(format!("{}: {e}", path.display())))?;
    for &s in &w.samples {
        let q = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        writer
            .write_sample(q)
            .map_err(|e| Error::Wav(format!("{}: {e}", path.display())))?;
    }
    writer
        .finalize()
        .map_err(|e| Error::Wav(format!("{}: {e}", path.display())))?;
    Ok(())
}
