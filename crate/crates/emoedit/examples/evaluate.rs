//! The objective evaluation stack on small synthetic data: mel-cepstral
//! distortion with DTW alignment, per-group F0 statistics over generated
//! regions, and the emotion classifier with its confusion matrix.
//!
//!     cargo run --example evaluate

use emoedit::corpus::{ingest_emotional_corpus, EmotionLabel, Gender, Tokenizer};
use emoedit::editor::{EditResult, Region, RegionSource};
use emoedit::evalkit::ser::{confusion_matrix, mel_input, train_ser, SerConfig};
use emoedit::evalkit::{f0_stats, mcd_dtw, McdReport};
use emoedit::signal::{extract_features, load_wav, FrameConfig};
use emoedit::synth::{generate_corpus, SynthSpec};

fn main() {
    env_logger::init();
    let dir = tempfile::tempdir().unwrap();
    let spec = SynthSpec {
        emotional_speakers: 2,
        clips_per_emotion: 2,
        neutral_speakers: 1,
        clips_per_neutral_speaker: 1,
        ..SynthSpec::default()
    };
    generate_corpus(&spec, &dir.path().join("emotional"), &dir.path().join("neutral")).unwrap();
    let tokenizer = Tokenizer::default();
    let manifest = ingest_emotional_corpus(&dir.path().join("emotional"), &tokenizer).unwrap();
    let frame = FrameConfig::default();

    // MCD: each clip against another clip of the same emotion by the other
    // speaker. DTW handles the unequal lengths.
    let mut report = McdReport::default();
    for &emotion in EmotionLabel::ALL.iter() {
        let group = manifest.by_emotion(emotion);
        let a = extract_features(&load_wav(&group[0].wav_path).unwrap(), &frame).unwrap();
        let b = extract_features(&load_wav(&group.last().unwrap().wav_path).unwrap(), &frame)
            .unwrap();
        report.push(&group[0].utt_id, emotion, mcd_dtw(&a, &b).unwrap());
    }
    println!("cross-speaker MCD by emotion:");
    for (emotion, mean) in report.mean_by_emotion() {
        println!("  {:<9} {:.3} dB", emotion.name(), mean);
    }
    println!("  overall   {:.3} dB", report.overall_mean().unwrap());

    // F0 statistics, treating each whole clip as one generated region.
    let mut edited = Vec::new();
    for r in &manifest.records {
        let feats = extract_features(&load_wav(&r.wav_path).unwrap(), &frame).unwrap();
        let t = feats.len();
        let result = EditResult {
            features: feats,
            regions: vec![Region {
                source: RegionSource::Generated,
                start: 0,
                end: t,
                emotion: Some(r.emotion),
            }],
        };
        edited.push((result, r.gender, r.emotion));
    }
    let table = f0_stats(&edited);
    println!("\nF0 of generated regions by gender and emotion:");
    for row in &table.rows {
        if let (Some(mean), Some(std)) = (row.mean_hz, row.std_hz) {
            println!(
                "  {:?}/{:<9} {:6.1} Hz mean, {:5.1} Hz std, {} voiced frames",
                row.gender,
                row.emotion.name(),
                mean,
                std,
                row.voiced_frames
            );
        }
    }
    assert!(table.cell(Gender::Female, EmotionLabel::Happy).is_some());

    // Emotion classifier: overfit the folder, then read its confusion rows.
    let config = SerConfig::toy();
    let mut items = Vec::new();
    for r in &manifest.records {
        let w = load_wav(&r.wav_path).unwrap();
        items.push((mel_input(&w, config.n_mels).unwrap(), r.emotion));
    }
    println!("\ntraining the emotion classifier on {} clips...", items.len());
    let (model, train_report) = train_ser(&items, &config).unwrap();
    println!(
        "training accuracy {:.2} after {} epochs",
        train_report.final_accuracy, train_report.epochs_run
    );
    let matrix = confusion_matrix(&model, &items).unwrap();
    println!("confusion matrix (rows: truth, columns: prediction):");
    print!("{:>10}", "");
    for e in EmotionLabel::ALL {
        print!("{:>9}", e.name());
    }
    println!();
    for (i, e) in EmotionLabel::ALL.iter().enumerate() {
        print!("{:>10}", e.name());
        for j in 0..EmotionLabel::ALL.len() {
            print!("{:>9.2}", matrix[(i, j)]);
        }
        println!();
    }
}
