//! Runs the autocorrelation-difference pitch tracker over tones and a
//! vibrato sweep, printing per-frame F0 and the voicing decision.
//!
//!     cargo run --example pitch_tracking

use emoedit::signal::{estimate_f0_yin, FrameConfig, Waveform, SAMPLE_RATE};

fn tone(freq: f64, secs: f64) -> Waveform {
    let n = (secs * SAMPLE_RATE as f64) as usize;
    let samples = (0..n)
        .map(|i| 0.4 * (2.0 * std::f64::consts::PI * freq * i as f64 / SAMPLE_RATE as f64).sin())
        .collect();
    Waveform::new(samples, SAMPLE_RATE)
}

fn main() {
    let cfg = FrameConfig::default();

    for freq in [110.0, 220.0, 440.0] {
        let track = estimate_f0_yin(&tone(freq, 0.5), &cfg);
        println!(
            "{freq:>5.0} Hz tone: median {:.2} Hz, {:.0}% voiced over {} frames",
            track.median_voiced().unwrap(),
            track.voiced_fraction() * 100.0,
            track.len()
        );
    }

    // Vibrato: 200 Hz carrier, +-12 Hz at 5 Hz. The tracker should follow.
    let secs = 0.8;
    let n = (secs * SAMPLE_RATE as f64) as usize;
    let mut phase = 0.0;
    let samples: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / SAMPLE_RATE as f64;
            let f = 200.0 + 12.0 * (2.0 * std::f64::consts::PI * 5.0 * t).sin();
            phase += 2.0 * std::f64::consts::PI * f / SAMPLE_RATE as f64;
            0.4 * phase.sin()
        })
        .collect();
    let track = estimate_f0_yin(&Waveform::new(samples, SAMPLE_RATE), &cfg);
    println!("\nvibrato sweep, every 8th frame:");
    for (i, (f0, voiced)) in track.f0_hz.iter().zip(&track.voiced).enumerate() {
        if i % 8 == 0 {
            let bar_len = ((f0 - 180.0).max(0.0) / 2.0) as usize;
            println!(
                "frame {i:>3}: {:>6.1} Hz {} {}",
                f0,
                if *voiced { " " } else { "u" },
                "#".repeat(bar_len.min(40))
            );
        }
    }

    // Silence must come out unvoiced.
    let silence = Waveform::new(vec![0.0; 8000], SAMPLE_RATE);
    let track = estimate_f0_yin(&silence, &cfg);
    println!(
        "\nsilence: {:.0}% voiced, median {:?}",
        track.voiced_fraction() * 100.0,
        track.median_voiced()
    );
}
