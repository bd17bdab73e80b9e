//! Acoustic feature extraction: Hann-windowed STFT, mel filterbank,
//! log-energy DCT cepstra, plus aligned log-F0 and voicing columns.

use ndarray::Array2;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

use super::{estimate_f0_yin, FeatureSequence, FrameConfig, Waveform};

/// Floor applied to mel energies before the log.
const LOG_FLOOR: f64 = 1e-10;

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular mel filterbank, `(n_mels, n_fft/2 + 1)`, spanning 0 Hz to
/// Nyquist with unit peak per band.
pub(crate) fn mel_filterbank(n_mels: usize, n_fft: usize, sample_rate: f64) -> Array2<f64> {
    let n_bins = n_fft / 2 + 1;
    let mel_lo = hz_to_mel(0.0);
    let mel_hi = hz_to_mel(sample_rate / 2.0);
    // n_mels + 2 edge points, equally spaced on the mel scale
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (n_mels + 1) as f64))
        .collect();
    let mut fb = Array2::<f64>::zeros((n_mels, n_bins));
    for m in 0..n_mels {
        let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        for bin in 0..n_bins {
            let f = bin as f64 * sample_rate / n_fft as f64;
            let w = if f >= lo && f <= center && center > lo {
                (f - lo) / (center - lo)
            } else if f > center && f <= hi && hi > center {
                (hi - f) / (hi - center)
            } else {
                0.0
            };
            fb[[m, bin]] = w;
        }
    }
    fb
}

/// Orthonormal DCT-II matrix of shape `(n_out, n_in)`; its transpose is the
/// matching inverse (DCT-III) when `n_out == n_in`.
pub(crate) fn dct_matrix(n_out: usize, n_in: usize) -> Array2<f64> {
    let mut m = Array2::<f64>::zeros((n_out, n_in));
    for k in 0..n_out {
        let scale = if k == 0 {
            (1.0 / n_in as f64).sqrt()
        } else {
            (2.0 / n_in as f64).sqrt()
        };
        for n in 0..n_in {
            m[[k, n]] = scale
                * (std::f64::consts::PI * (n as f64 + 0.5) * k as f64 / n_in as f64).cos();
        }
    }
    m
}

pub(crate) fn hann_window(len: usize) -> Vec<f64> {
    (0..len)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / len as f64).cos())
        .collect()
}

pub(crate) fn fft_size_for(window: usize) -> usize {
    window.next_power_of_two()
}

/// Log-mel energies for every frame, `(T, n_mels)`. Shared by cepstral
/// extraction here and by the mel front end of the emotion classifier.
pub(crate) fn log_mel_spectrogram(
    w: &Waveform,
    cfg: &FrameConfig,
) -> Result<Array2<f64>> {
    w.validate()?;
    cfg.validate()?;
    let hop = cfg.hop_samples(w.sample_rate);
    let win = cfg.window_samples(w.sample_rate);
    let n = w.samples.len();
    let n_frames = cfg.frame_count(n, w.sample_rate).ok_or_else(|| {
        Error::InvalidInput(format!(
            "audio too short for analysis: {n} samples < one {win}-sample window"
        ))
    })?;
    let n_fft = fft_size_for(win);
    let n_bins = n_fft / 2 + 1;

    let window = hann_window(win);
    let fb = mel_filterbank(cfg.n_mels, n_fft, w.sample_rate as f64);
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n_fft);
    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];

    let mut out = Array2::<f64>::zeros((n_frames, cfg.n_mels));
    let mut power = vec![0.0f64; n_bins];
    for t in 0..n_frames {
        let start = t * hop;
        for i in 0..n_fft {
            let s = if i < win { w.samples[start + i] * window[i] } else { 0.0 };
            buf[i] = Complex::new(s, 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for (bin, p) in power.iter_mut().enumerate() {
            *p = buf[bin].norm_sqr();
        }
        for m in 0..cfg.n_mels {
            let mut e = 0.0;
            for bin in 0..n_bins {
                e += fb[[m, bin]] * power[bin];
            }
            out[[t, m]] = e.max(LOG_FLOOR).ln();
        }
    }
    Ok(out)
}

/// Extract the full feature matrix: `n_cepstra` DCT cepstra of the log-mel
/// spectrum, then log-F0 (0 when unvoiced), then the voicing flag.
pub fn extract_features(w: &Waveform, cfg: &FrameConfig) -> Result<FeatureSequence> {
    let log_mel = log_mel_spectrogram(w, cfg)?;
    let n_frames = log_mel.nrows();
    let dct = dct_matrix(cfg.n_cepstra, cfg.n_mels);
    let cepstra = log_mel.dot(&dct.t());

    let track = estimate_f0_yin(w, cfg);
    debug_assert_eq!(track.len(), n_frames);

    let dim = cfg.feat_dim();
    let mut frames = Array2::<f64>::zeros((n_frames, dim));
    for t in 0..n_frames {
        for c in 0..cfg.n_cepstra {
            frames[[t, c]] = cepstra[[t, c]];
        }
        if track.voiced[t] {
            frames[[t, cfg.n_cepstra]] = track.f0_hz[t].ln();
            frames[[t, cfg.n_cepstra + 1]] = 1.0;
        }
    }
    let seq = FeatureSequence::new(frames);
    seq.validate()?;
    Ok(seq)
}
