//! Extracts the acoustic feature matrix from a synthetic vowel-like tone
//! and prints what each column range holds. The same features feed the
//! acoustic model, the editor, and every evaluation metric.
//!
//!     cargo run --example features

use emoedit::signal::{extract_features, invert_features, FrameConfig, Waveform, SAMPLE_RATE};

fn main() {
    let cfg = FrameConfig::default();

    // A 150 Hz tone with a couple of harmonics, loosely vowel shaped.
    let secs = 0.7;
    let n = (secs * SAMPLE_RATE as f64) as usize;
    let samples: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / SAMPLE_RATE as f64;
            let p = 2.0 * std::f64::consts::PI * 150.0 * t;
            0.35 * p.sin() + 0.15 * (2.0 * p).sin() + 0.05 * (3.0 * p).sin()
        })
        .collect();
    let w = Waveform::new(samples, SAMPLE_RATE);

    let feats = extract_features(&w, &cfg).unwrap();
    println!(
        "{} samples at {} Hz -> {} frames x {} channels",
        n,
        SAMPLE_RATE,
        feats.len(),
        feats.dim()
    );
    println!(
        "hop {:.0} ms, window {:.0} ms, {} mel bands, {} cepstra",
        cfg.hop * 1000.0,
        cfg.window * 1000.0,
        cfg.n_mels,
        cfg.n_cepstra
    );
    println!(
        "columns 0..{}: cepstra, column {}: log-F0, column {}: voicing",
        feats.n_cepstra(),
        feats.log_f0_col(),
        feats.voicing_col()
    );

    let mid = feats.len() / 2;
    let row = feats.frames.row(mid);
    let f0 = row[feats.log_f0_col()].exp();
    println!(
        "frame {}: c0 {:.3}, c1 {:.3}, F0 {:.1} Hz, voiced {}",
        mid,
        row[0],
        row[1],
        f0,
        row[feats.voicing_col()] == 1.0
    );

    let voiced = feats
        .frames
        .column(feats.voicing_col())
        .iter()
        .filter(|&&v| v == 1.0)
        .count();
    println!("{voiced} of {} frames voiced", feats.len());

    // Features are invertible back to audio for quick listening checks.
    let rendered = invert_features(&feats, &cfg).unwrap();
    println!(
        "re-rendered {} samples ({:.2} s) from the feature matrix",
        rendered.samples.len(),
        rendered.samples.len() as f64 / SAMPLE_RATE as f64
    );
}
