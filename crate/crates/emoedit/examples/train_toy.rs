//! Trains the small model configuration on a handful of synthetic
//! utterances and prints the loss trajectory. Short enough to run while
//! reading the code; the point is the mechanics, not the model quality.
//!
//!     cargo run --example train_toy

use emoedit::corpus::{ingest_emotional_corpus, Manifest, Tokenizer};
use emoedit::model::{ModelConfig, ModelParams};
use emoedit::signal::FrameConfig;
use emoedit::synth::{generate_corpus, SynthSpec};
use emoedit::training::{load_items, train, TrainConfig};

fn main() {
    env_logger::init();
    let dir = tempfile::tempdir().unwrap();
    let spec = SynthSpec {
        emotional_speakers: 1,
        clips_per_emotion: 1,
        neutral_speakers: 1,
        clips_per_neutral_speaker: 1,
        min_words: 2,
        max_words: 2,
        ..SynthSpec::default()
    };
    generate_corpus(&spec, &dir.path().join("emotional"), &dir.path().join("neutral")).unwrap();

    let tokenizer = Tokenizer::default();
    let manifest: Manifest =
        ingest_emotional_corpus(&dir.path().join("emotional"), &tokenizer).unwrap();
    let frame = FrameConfig::default();
    let items = load_items(&manifest, None, &frame).unwrap();
    println!("{} utterances, one per emotion", items.len());
    for item in &items {
        println!(
            "  {} ({:?}): {} frames, {} tokens",
            item.utt_id,
            item.emotion,
            item.feats.nrows(),
            item.tokens.len()
        );
    }

    let mut model = ModelParams::new(ModelConfig::toy(), 3).unwrap();
    let cfg = TrainConfig {
        steps: 60,
        batch_size: 4,
        checkpoint_every: 60,
        seed: 3,
        ..TrainConfig::default()
    };
    let out = dir.path().join("run");
    let start = std::time::Instant::now();
    let summary = train(&mut model, &items, &cfg, &out, 0).unwrap();
    println!(
        "\n{} steps in {:.1?} ({:.2} s/step)",
        summary.steps_run,
        start.elapsed(),
        start.elapsed().as_secs_f64() / summary.steps_run as f64
    );

    println!("\n{:>5} {:>9} {:>9} {:>7}", "step", "L_rec", "L_adv", "D_acc");
    for m in summary.history.iter().step_by(10) {
        println!(
            "{:>5} {:>9.4} {:>9.4} {:>7.3}",
            m.step, m.l_rec, m.l_adv, m.d_acc
        );
    }
    let first = &summary.history[0];
    let last = &summary.final_metrics;
    println!(
        "\nreconstruction loss {:.4} -> {:.4}; checkpoint at {}",
        first.l_rec,
        last.l_rec,
        summary.checkpoint.display()
    );
    assert!(last.l_rec < first.l_rec, "loss should fall while overfitting");
}
