//! Feature-to-audio preview synthesis.
//!
//! Deliberately crude source-filter reconstruction: a pulse train (voiced)
//! or white noise (unvoiced) excitation is filtered per frame through the
//! spectral envelope recovered from the cepstra, then overlap-added. Good
//! enough to audition edits and to measure F0; not a neural vocoder.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

use super::features::{dct_matrix, fft_size_for, hann_window, mel_filterbank};
use super::{FeatureSequence, FrameConfig, Waveform};

/// Fixed seed for the noise excitation: inversion is a pure function.
const NOISE_SEED: u64 = 0xE0D17;

/// Render a feature matrix to audio. Output length is exactly
/// `T * hop_samples` at 16 kHz (or whatever rate the config maps to).
pub fn invert_features(seq: &FeatureSequence, cfg: &FrameConfig) -> Result<Waveform> {
    invert_at_rate(seq, cfg, super::SAMPLE_RATE)
}

fn invert_at_rate(seq: &FeatureSequence, cfg: &FrameConfig, sample_rate: u32) -> Result<Waveform> {
    seq.validate()?;
    cfg.validate()?;
    if seq.dim() != cfg.feat_dim() {
        return Err(Error::InvalidInput(format!(
            "feature dim {} does not match config dim {}",
            seq.dim(),
            cfg.feat_dim()
        )));
    }
    let t_frames = seq.len();
    let hop = cfg.hop_samples(sample_rate);
    let win = cfg.window_samples(sample_rate);
    let n_fft = fft_size_for(win);
    let n_bins = n_fft / 2 + 1;
    let out_len = t_frames * hop;
    let sr = sample_rate as f64;

    // Spectral envelope per frame: zero-pad cepstra back to n_mels, invert
    // the DCT (orthonormal, so the transpose is the inverse), exponentiate,
    // then spread mel energies across their linear-frequency bins.
    let dct_full = dct_matrix(cfg.n_mels, cfg.n_mels);
    let fb = mel_filterbank(cfg.n_mels, n_fft, sr);
    let mut fb_colsum = vec![0.0f64; n_bins];
    for bin in 0..n_bins {
        for m in 0..cfg.n_mels {
            fb_colsum[bin] += fb[[m, bin]];
        }
    }
    let mut envelopes = vec![vec![0.0f64; n_bins]; t_frames];
    let mut padded = vec![0.0f64; cfg.n_mels];
    for t in 0..t_frames {
        for (m, p) in padded.iter_mut().enumerate() {
            *p = if m < cfg.n_cepstra { seq.frames[[t, m]] } else { 0.0 };
        }
        for bin in 0..n_bins {
            let mut power = 0.0;
            for m in 0..cfg.n_mels {
                if fb[[m, bin]] == 0.0 {
                    continue;
                }
                // log-mel value for band m via inverse DCT
                let mut log_e = 0.0;
                for (k, &c) in padded.iter().enumerate() {
                    log_e += dct_full[[k, m]] * c;
                }
                power += fb[[m, bin]] * log_e.clamp(-60.0, 60.0).exp();
            }
            if fb_colsum[bin] > 0.0 {
                power /= fb_colsum[bin];
            }
            envelopes[t][bin] = power.sqrt();
        }
    }

    // Excitation: where voiced, a band-limited pulse train built as a sum
    // of harmonics on an accumulated phase (a one-sample impulse train
    // would quantize the period to integer lags and wreck pitch tracking
    // at fractional periods); where unvoiced, white noise.
    let fcol = seq.log_f0_col();
    let vcol = seq.voicing_col();
    let mut rng = ChaCha8Rng::seed_from_u64(NOISE_SEED);
    let mut excitation = vec![0.0f64; out_len + n_fft];
    let mut phase = 0.0f64;
    for (n, e) in excitation.iter_mut().enumerate() {
        let t = (n / hop).min(t_frames - 1);
        if seq.frames[[t, vcol]] == 1.0 {
            let f0 = seq.frames[[t, fcol]].exp().clamp(1.0, sr / 4.0);
            phase += f0 / sr;
            if phase >= 1.0 {
                phase -= 1.0;
            }
            let n_harm = ((0.25 * sr) / f0).floor().max(1.0) as usize;
            let mut s = 0.0;
            for k in 1..=n_harm {
                s += (2.0 * std::f64::consts::PI * k as f64 * phase).cos();
            }
            *e = s / n_harm as f64 + 0.01 * rng.gen_range(-1.0..1.0);
        } else {
            phase = 0.0;
            *e = 0.3 * rng.gen_range(-1.0..1.0);
        }
    }

    // Per-frame filtering in the frequency domain, overlap-added.
    let window = hann_window(n_fft);
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n_fft);
    let ifft = planner.plan_fft_inverse(n_fft);
    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
    let mut scratch =
        vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len().max(ifft.get_inplace_scratch_len())];
    let mut out = vec![0.0f64; out_len + n_fft];
    let mut norm = vec![0.0f64; out_len + n_fft];
    for t in 0..t_frames {
        let start = t * hop;
        for i in 0..n_fft {
            buf[i] = Complex::new(excitation[start + i] * window[i], 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for k in 0..n_fft {
            let bin = if k <= n_fft / 2 { k } else { n_fft - k };
            buf[k] *= envelopes[t][bin];
        }
        ifft.process_with_scratch(&mut buf, &mut scratch);
        for i in 0..n_fft {
            out[start + i] += buf[i].re / n_fft as f64;
            norm[start + i] += window[i];
        }
    }
    // Clamp the window-sum normalizer: at the first and last few samples
    // only a window tail covers the position, and dividing by a near-zero
    // sum there turns numeric dust into a spike that dominates peak
    // normalization.
    for i in 0..out.len() {
        out[i] /= norm[i].max(0.5);
    }
    out.truncate(out_len);

    let peak = out.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    if peak > 0.0 {
        let g = 0.7 / peak;
        for s in &mut out {
            *s *= g;
        }
    }
    let w = Waveform::new(out, sample_rate);
    w.validate()?;
    Ok(w)
}
