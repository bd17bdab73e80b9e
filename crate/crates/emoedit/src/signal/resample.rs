//! Windowed-sinc resampling.
//!
//! One interpolation kernel serves two callers: sample-rate conversion on
//! WAV load, and the resampling half of pitch shifting. For downsampling
//! the sinc cutoff drops to the output Nyquist and the kernel widens
//! accordingly, which is what keeps 48 kHz corpora alias-free at 16 kHz.

/// Half-width of the interpolation kernel in output-rate zero crossings.
const KERNEL_HALF_WIDTH: usize = 32;

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Resample between integer rates. Output length is exactly
/// `floor(len * to / from)`.
pub fn resample(samples: &[f64], from: u32, to: u32) -> Vec<f64> {
    assert!(from > 0 && to > 0, "sample rates must be positive");
    if from == to {
        return samples.to_vec();
    }
    let out_len = (samples.len() as u64 * to as u64 / from as u64) as usize;
    resample_to_len(samples, out_len, to as f64 / from as f64)
}

/// Resample by an arbitrary ratio (output rate / input rate). Output length
/// is `round(len * ratio)`.
pub fn resample_by(samples: &[f64], ratio: f64) -> Vec<f64> {
    assert!(ratio.is_finite() && ratio > 0.0, "ratio must be positive");
    let out_len = (samples.len() as f64 * ratio).round() as usize;
    resample_to_len(samples, out_len, ratio)
}

fn resample_to_len(samples: &[f64], out_len: usize, ratio: f64) -> Vec<f64> {
    if samples.is_empty() || out_len == 0 {
        return Vec::new();
    }
    // Cutoff relative to the input Nyquist: 1.0 when upsampling, `ratio`
    // when downsampling. The kernel must stretch by 1/cutoff to keep the
    // same number of sinc lobes under the window.
    let cutoff = ratio.min(1.0) * 0.975;
    let half_width = (KERNEL_HALF_WIDTH as f64 / cutoff).ceil() as isize;
    let n = samples.len() as isize;
    let mut out = Vec::with_capacity(out_len);
    for i in 0..out_len {
        let center = i as f64 / ratio;
        let lo = (center.floor() as isize - half_width).max(0);
        let hi = (center.floor() as isize + half_width + 1).min(n);
        let mut acc = 0.0;
        let mut wsum = 0.0;
        for j in lo..hi {
            let u = j as f64 - center;
            // Hann window over the kernel support
            let wpos = u / (half_width as f64 + 1.0);
            let win = 0.5 + 0.5 * (std::f64::consts::PI * wpos).cos();
            let w = sinc(cutoff * u) * win;
            acc += w * samples[j as usize];
            wsum += w;
        }
        // Normalizing by the kernel sum keeps DC gain at one even where
        // the window is truncated at the signal edges.
        out.push(if wsum.abs() > 1e-12 { acc / wsum } else { 0.0 });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(n: usize, freq: f64, sr: f64) -> Vec<f64> {
        (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / sr).sin())
            .collect()
    }

    /// Dominant frequency of a signal by scanning a dense grid of probe
    /// sinusoids. Slow but independent of any FFT code under test.
    fn dominant_freq(samples: &[f64], sr: f64) -> f64 {
        let n = samples.len() as f64;
        let mut best = (0.0, -1.0);
        let mut f = 20.0;
        while f < sr / 2.0 {
            let (mut c, mut s) = (0.0, 0.0);
            for (i, &x) in samples.iter().enumerate() {
                let ph = 2.0 * std::f64::consts::PI * f * i as f64 / sr;
                c += x * ph.cos();
                s += x * ph.sin();
            }
            let mag = (c * c + s * s) / n;
            if mag > best.1 {
                best = (f, mag);
            }
            f += 1.0;
        }
        best.0
    }

    #[test]
    fn output_length_law() {
        assert_eq!(resample(&vec![0.0; 48_000], 48_000, 16_000).len(), 16_000);
        assert_eq!(resample(&vec![0.0; 22_050], 22_050, 16_000).len(), 16_000);
        assert_eq!(resample(&vec![0.0; 1001], 16_000, 16_000).len(), 1001);
        assert_eq!(resample(&vec![0.0; 8_000], 8_000, 16_000).len(), 16_000);
        assert_eq!(resample_by(&vec![0.0; 1000], 0.5).len(), 500);
        assert_eq!(resample_by(&vec![0.0; 999], 2.0).len(), 1998);
    }

    #[test]
    fn downsample_preserves_tone_frequency() {
        let x = sine(48_000, 440.0, 48_000.0);
        let y = resample(&x, 48_000, 16_000);
        // measure on an interior slice to dodge edge effects
        let f = dominant_freq(&y[2000..6000], 16_000.0);
        assert!((f - 440.0).abs() <= 2.0, "got {f} Hz");
    }

    #[test]
    fn upsample_preserves_tone_frequency() {
        let x = sine(8_000, 300.0, 8_000.0);
        let y = resample(&x, 8_000, 16_000);
        let f = dominant_freq(&y[2000..6000], 16_000.0);
        assert!((f - 300.0).abs() <= 2.0, "got {f} Hz");
    }

    #[test]
    fn ratio_resample_scales_pitch() {
        // Playing back at the original rate after resampling by 1/r scales
        // pitch by r. r = 2^(2/12) here.
        let r = 2f64.powf(2.0 / 12.0);
        let x = sine(16_000, 200.0, 16_000.0);
        let y = resample_by(&x, 1.0 / r);
        let f = dominant_freq(&y[2000..8000], 16_000.0);
        assert!((f - 200.0 * r).abs() <= 2.0, "got {f} Hz, want {}", 200.0 * r);
    }

    #[test]
    fn dc_gain_is_unity() {
        let x = vec![0.75; 4000];
        let y = resample(&x, 48_000, 16_000);
        for &v in &y[10..y.len() - 10] {
            assert!((v - 0.75).abs() < 1e-6, "got {v}");
        }
    }

    #[test]
    fn identity_rate_is_passthrough() {
        let x = sine(500, 100.0, 16_000.0);
        assert_eq!(resample(&x, 16_000, 16_000), x);
    }
}
