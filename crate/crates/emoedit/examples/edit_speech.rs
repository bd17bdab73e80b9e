//! The three editing operations end to end: delete a word (no model
//! involved), insert a word with a chosen emotion, and replace a word,
//! printing the region map each time. Frames outside the edited region
//! are carried over bit for bit; only masked regions are generated.
//!
//!     cargo run --example edit_speech

use emoedit::corpus::{ingest_emotional_corpus, EmotionLabel, Tokenizer};
use emoedit::editor::{apply_script, DurationTable, EditOp, EditResult, EditScript};
use emoedit::model::{ModelConfig, ModelParams};
use emoedit::signal::{FeatureSequence, FrameConfig};
use emoedit::synth::{generate_corpus, SynthSpec};
use emoedit::training::{load_items, train, TrainConfig};

fn show(label: &str, result: &EditResult) {
    println!("{label}: {} frames", result.features.len());
    for r in &result.regions {
        match r.emotion {
            Some(e) => println!("  {:>4}..{:<4} {:?} ({:?})", r.start, r.end, r.source, e),
            None => println!("  {:>4}..{:<4} {:?}", r.start, r.end, r.source),
        }
    }
}

fn main() {
    env_logger::init();
    let dir = tempfile::tempdir().unwrap();
    let spec = SynthSpec {
        emotional_speakers: 1,
        clips_per_emotion: 1,
        neutral_speakers: 1,
        clips_per_neutral_speaker: 1,
        min_words: 3,
        max_words: 3,
        ..SynthSpec::default()
    };
    generate_corpus(&spec, &dir.path().join("emotional"), &dir.path().join("neutral")).unwrap();
    let tokenizer = Tokenizer::default();
    let manifest = ingest_emotional_corpus(&dir.path().join("emotional"), &tokenizer).unwrap();
    let frame = FrameConfig::default();
    let items = load_items(&manifest, None, &frame).unwrap();

    // A quick fit so generated regions resemble the corpus; edit quality
    // scales with training, the mechanics do not.
    let mut model = ModelParams::new(ModelConfig::toy(), 8).unwrap();
    let cfg = TrainConfig {
        steps: 40,
        batch_size: 4,
        checkpoint_every: 40,
        seed: 8,
        ..TrainConfig::default()
    };
    println!("fitting the model for a moment...");
    train(&mut model, &items, &cfg, &dir.path().join("run"), 0).unwrap();

    let record = &manifest.records[0];
    let item = items.iter().find(|i| i.utt_id == record.utt_id).unwrap();
    let source = FeatureSequence::new(item.feats.clone());
    let table = DurationTable::from_manifest(&manifest, &tokenizer).unwrap();
    println!(
        "\nsource utterance {}: \"{}\" ({:?}, {} frames)",
        record.utt_id,
        record.text,
        record.emotion,
        source.len()
    );

    // Delete the middle word. No model, pure splice.
    let script = EditScript {
        ops: vec![EditOp::Delete {
            span_words: Some([1, 2]),
            span_frames: None,
        }],
    };
    let deleted = apply_script(record, &source, &script, None, &tokenizer, &table).unwrap();
    show("\ndelete word 1", &deleted);

    // Insert a word before word 1, as sad speech.
    let script = EditScript {
        ops: vec![EditOp::Insert {
            position_word: Some(1),
            position_frame: None,
            text: "amber".into(),
            emotion: EmotionLabel::Sad,
        }],
    };
    let inserted = apply_script(record, &source, &script, Some(&model), &tokenizer, &table).unwrap();
    show("\ninsert \"amber\" before word 1 (sad)", &inserted);

    // Replace the last word, angry this time.
    let script = EditScript {
        ops: vec![EditOp::Replace {
            span_words: Some([2, 3]),
            span_frames: None,
            text: "harbor".into(),
            emotion: EmotionLabel::Angry,
        }],
    };
    let replaced = apply_script(record, &source, &script, Some(&model), &tokenizer, &table).unwrap();
    show("\nreplace word 2 with \"harbor\" (angry)", &replaced);

    // The splice contract: original regions are untouched frames.
    let first = inserted.regions.iter().find(|r| r.emotion.is_none()).unwrap();
    let mut exact = true;
    for t in first.start..first.end {
        for d in 0..source.dim() {
            exact &= inserted.features.frames[[t, d]] == source.frames[[t, d]];
        }
    }
    println!("\nfirst original region identical to source: {exact}");
}
