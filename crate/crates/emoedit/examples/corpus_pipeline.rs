//! Walks the full data path: generate the synthetic demo corpus, ingest it
//! into manifests, split by speaker, pitch-augment the train split, and
//! merge in a neutral corpus. This is what the `prepare` subcommand does,
//! shown here against the library API.
//!
//!     cargo run --example corpus_pipeline

use emoedit::augment::{augment_emotional, merge_neutral, ShiftSpec};
use emoedit::corpus::{
    ingest_emotional_corpus, ingest_neutral_corpus, make_splits, EmotionLabel, Tokenizer,
};
use emoedit::synth::{generate_corpus, SynthSpec};

fn main() {
    env_logger::init();
    let dir = tempfile::tempdir().unwrap();
    let emotional_root = dir.path().join("emotional");
    let neutral_root = dir.path().join("neutral");

    let spec = SynthSpec {
        emotional_speakers: 2,
        clips_per_emotion: 2,
        neutral_speakers: 1,
        clips_per_neutral_speaker: 4,
        ..SynthSpec::default()
    };
    let summary = generate_corpus(&spec, &emotional_root, &neutral_root).unwrap();
    println!(
        "generated {} emotional and {} neutral clips",
        summary.emotional_clips, summary.neutral_clips
    );

    let tokenizer = Tokenizer::default();
    let emotional = ingest_emotional_corpus(&emotional_root, &tokenizer).unwrap();
    let neutral = ingest_neutral_corpus(&neutral_root, &tokenizer).unwrap();
    println!(
        "ingested {} emotional utterances, {} neutral",
        emotional.len(),
        neutral.len()
    );
    let r = &emotional.records[0];
    println!(
        "first record: {} [{}] {:?} \"{}\" ({} tokens, {} aligned words)",
        r.utt_id,
        r.speaker_id,
        r.emotion,
        r.text,
        r.tokens.len(),
        r.word_spans.as_ref().map_or(0, Vec::len)
    );

    let (train, val, test) = make_splits(&emotional, &[], 0.2, 7).unwrap();
    println!(
        "splits: {} train / {} val / {} test",
        train.len(),
        val.len(),
        test.len()
    );

    let shifts = [ShiftSpec::new(-2.0), ShiftSpec::new(2.0)];
    let augmented = augment_emotional(&train, &shifts, &dir.path().join("augmented")).unwrap();
    println!(
        "pitch augmentation: {} -> {} records",
        train.len(),
        augmented.len()
    );

    let merged = merge_neutral(&augmented, &neutral).unwrap();
    let n_neutral = merged.by_emotion(EmotionLabel::Neutral).len();
    println!(
        "after neutral merge: {} records, {} labeled neutral",
        merged.len(),
        n_neutral
    );

    let path = dir.path().join("train.jsonl");
    merged.save(&path).unwrap();
    println!("manifest saved to {}", path.display());
}
