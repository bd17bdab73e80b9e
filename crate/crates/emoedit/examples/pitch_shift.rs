//! Demonstrates the F0 data-augmentation transform: resample-then-stretch
//! pitch shifting that moves F0 by 2^(s/12) per s semitones while keeping
//! duration. Used to widen a corpus's pitch coverage before training.
//!
//!     cargo run --example pitch_shift

use emoedit::augment::{pitch_shift, ShiftSpec};
use emoedit::signal::{estimate_f0_yin, FrameConfig, Waveform, SAMPLE_RATE};

fn main() {
    let cfg = FrameConfig::default();
    let freq = 220.0;
    let n = (0.6 * SAMPLE_RATE as f64) as usize;
    let samples: Vec<f64> = (0..n)
        .map(|i| 0.4 * (2.0 * std::f64::consts::PI * freq * i as f64 / SAMPLE_RATE as f64).sin())
        .collect();
    let source = Waveform::new(samples, SAMPLE_RATE);
    let f_src = estimate_f0_yin(&source, &cfg).median_voiced().unwrap();
    println!("source: {:.2} Hz, {} samples", f_src, source.samples.len());

    println!("{:>6} {:>10} {:>10} {:>10} {:>8}", "shift", "target", "measured", "ratio", "samples");
    for s in [-4.0, -2.0, 2.0, 4.0] {
        let spec = ShiftSpec::new(s);
        let shifted = pitch_shift(&source, &spec).unwrap();
        let f_out = estimate_f0_yin(&shifted, &cfg).median_voiced().unwrap();
        let target = f_src * 2.0f64.powf(s / 12.0);
        println!(
            "{s:>+5.0}st {target:>9.2} {f_out:>9.2} {:>9.4}x {:>8}",
            f_out / f_src,
            shifted.samples.len()
        );
        assert!((f_out / target - 1.0).abs() < 0.01, "ratio law violated");
    }
    println!("\nall shifts within 1% of the semitone law, duration preserved");
}
