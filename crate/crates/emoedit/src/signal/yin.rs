//! YIN fundamental-frequency estimation.
//!
//! Classic difference-function YIN with the cumulative mean normalization,
//! absolute threshold, and parabolic refinement steps. One estimate is
//! produced per feature frame, from an analysis segment centered on that
//! frame, so F0 tracks align row-for-row with feature matrices.

use super::{F0Track, FrameConfig, Waveform};

/// Search band. Speech F0 rarely leaves this range, and the lower bound
/// keeps the lag search short.
pub const F0_MIN_HZ: f64 = 60.0;
pub const F0_MAX_HZ: f64 = 500.0;

/// Cumulative-mean-normalized difference threshold for voicing. Noise and
/// silence sit well above 0.5; clean periodic speech dips under 0.1. The
/// value here leaves headroom for synthetic excitation whose period falls
/// between integer lags.
const CMNDF_THRESHOLD: f64 = 0.2;

/// Analysis segment length in samples (50 ms at 16 kHz, about three
/// periods of the lowest trackable pitch).
const SEGMENT_LEN: usize = 800;

/// Frames quieter than this RMS are unvoiced regardless of periodicity.
const SILENCE_RMS: f64 = 1e-4;

/// Track F0 across a waveform, one estimate per feature frame.
///
/// Frames where no periodicity dips below the threshold, or that fall
/// under the silence gate, are marked unvoiced with `f0_hz = 0`.
pub fn estimate_f0_yin(w: &Waveform, cfg: &FrameConfig) -> F0Track {
    let sr = w.sample_rate as f64;
    let hop = cfg.hop_samples(w.sample_rate);
    let win = cfg.window_samples(w.sample_rate);
    let n = w.samples.len();
    let n_frames = cfg.frame_count(n, w.sample_rate).unwrap_or(0);

    let tau_min = (sr / F0_MAX_HZ).floor() as usize;
    let tau_max = (sr / F0_MIN_HZ).ceil() as usize;

    let mut f0_hz = Vec::with_capacity(n_frames);
    let mut voiced = Vec::with_capacity(n_frames);
    for t in 0..n_frames {
        let center = t * hop + win / 2;
        let seg_len = SEGMENT_LEN.min(n);
        let start = center
            .saturating_sub(seg_len / 2)
            .min(n - seg_len);
        let seg = &w.samples[start..start + seg_len];
        match yin_segment(seg, sr, tau_min, tau_max) {
            Some(f0) => {
                f0_hz.push(f0.clamp(F0_MIN_HZ, F0_MAX_HZ));
                voiced.push(true);
            }
            None => {
                f0_hz.push(0.0);
                voiced.push(false);
            }
        }
    }
    F0Track { f0_hz, voiced }
}

/// One YIN estimate over a segment. `None` means unvoiced.
fn yin_segment(seg: &[f64], sr: f64, tau_min: usize, tau_max: usize) -> Option<f64> {
    let tau_max = tau_max.min(seg.len() / 2);
    if tau_max <= tau_min + 2 {
        return None;
    }
    // integration window: what remains after the largest lag
    let w = seg.len() - tau_max;

    let rms = (seg[..w].iter().map(|s| s * s).sum::<f64>() / w as f64).sqrt();
    if rms < SILENCE_RMS {
        return None;
    }

    // difference function d(tau)
    let mut d = vec![0.0f64; tau_max + 1];
    for tau in 1..=tau_max {
        let mut acc = 0.0;
        for i in 0..w {
            let diff = seg[i] - seg[i + tau];
            acc += diff * diff;
        }
        d[tau] = acc;
    }

    // cumulative mean normalized difference d'(tau)
    let mut cmndf = vec![1.0f64; tau_max + 1];
    let mut running = 0.0;
    for tau in 1..=tau_max {
        running += d[tau];
        cmndf[tau] = if running > 0.0 {
            d[tau] * tau as f64 / running
        } else {
            1.0
        };
    }

    // absolute threshold: first dip below it, then walk down to its bottom
    let mut tau = tau_min;
    let found = loop {
        if tau >= tau_max {
            break None;
        }
        if cmndf[tau] < CMNDF_THRESHOLD {
            while tau + 1 < tau_max && cmndf[tau + 1] < cmndf[tau] {
                tau += 1;
            }
            break Some(tau);
        }
        tau += 1;
    };
    let tau = found?;

    // parabolic interpolation around the minimum for sub-sample lag
    let refined = if tau > 0 && tau + 1 <= tau_max {
        let (y0, y1, y2) = (cmndf[tau - 1], cmndf[tau], cmndf[tau + 1]);
        let denom = y0 - 2.0 * y1 + y2;
        if denom.abs() > 1e-12 {
            let delta = 0.5 * (y0 - y2) / denom;
            tau as f64 + delta.clamp(-1.0, 1.0)
        } else {
            tau as f64
        }
    } else {
        tau as f64
    };
    Some(sr / refined)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::SAMPLE_RATE;

    fn tone(freq: f64, secs: f64, amp: f64) -> Waveform {
        let n = (secs * SAMPLE_RATE as f64) as usize;
        let samples = (0..n)
            .map(|i| amp * (2.0 * std::f64::consts::PI * freq * i as f64 / SAMPLE_RATE as f64).sin())
            .collect();
        Waveform::new(samples, SAMPLE_RATE)
    }

    /// Sawtooth-ish pulse train, closer to glottal excitation than a sine.
    fn pulse_train(freq: f64, secs: f64) -> Waveform {
        let n = (secs * SAMPLE_RATE as f64) as usize;
        let period = SAMPLE_RATE as f64 / freq;
        let samples = (0..n)
            .map(|i| {
                let ph = (i as f64 / period).fract();
                0.4 * (1.0 - 2.0 * ph) + 0.1 * (2.0 * std::f64::consts::PI * ph).sin()
            })
            .collect();
        Waveform::new(samples, SAMPLE_RATE)
    }

    #[test]
    fn tracks_pure_tones_within_2hz() {
        let cfg = FrameConfig::default();
        for &freq in &[80.0, 120.0, 197.34, 242.27, 350.0, 480.0] {
            let w = tone(freq, 0.6, 0.4);
            let track = estimate_f0_yin(&w, &cfg);
            assert!(track.voiced_fraction() > 0.9, "{freq} Hz mostly voiced");
            let med = track.median_voiced().unwrap();
            assert!(
                (med - freq).abs() <= 2.0,
                "tone {freq} Hz tracked as {med} Hz"
            );
        }
    }

    #[test]
    fn tracks_pulse_train() {
        let cfg = FrameConfig::default();
        let w = pulse_train(150.0, 0.5);
        let track = estimate_f0_yin(&w, &cfg);
        let med = track.median_voiced().unwrap();
        assert!((med - 150.0).abs() <= 2.0, "got {med} Hz");
    }

    #[test]
    fn silence_is_unvoiced() {
        let cfg = FrameConfig::default();
        let w = Waveform::new(vec![0.0; 8000], SAMPLE_RATE);
        let track = estimate_f0_yin(&w, &cfg);
        assert_eq!(track.len(), cfg.frame_count(8000, SAMPLE_RATE).unwrap());
        assert!(track.voiced.iter().all(|&v| !v));
        assert!(track.f0_hz.iter().all(|&f| f == 0.0));
    }

    #[test]
    fn white_noise_is_mostly_unvoiced() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let samples: Vec<f64> = (0..8000).map(|_| rng.gen_range(-0.3..0.3)).collect();
        let w = Waveform::new(samples, SAMPLE_RATE);
        let track = estimate_f0_yin(&w, &FrameConfig::default());
        assert!(
            track.voiced_fraction() < 0.2,
            "noise voiced fraction {}",
            track.voiced_fraction()
        );
    }

    #[test]
    fn track_length_matches_feature_frames() {
        let cfg = FrameConfig::default();
        for n in [400, 1000, 16_000, 12_345] {
            let w = tone(200.0, n as f64 / SAMPLE_RATE as f64, 0.3);
            let track = estimate_f0_yin(&w, &cfg);
            assert_eq!(
                track.len(),
                cfg.frame_count(n, SAMPLE_RATE).unwrap(),
                "n = {n}"
            );
        }
    }

    #[test]
    fn deterministic_across_calls() {
        let cfg = FrameConfig::default();
        let w = pulse_train(180.0, 0.4);
        let a = estimate_f0_yin(&w, &cfg);
        let b = estimate_f0_yin(&w, &cfg);
        assert_eq!(a, b);
    }
}
