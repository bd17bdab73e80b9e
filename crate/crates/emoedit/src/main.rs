use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use emoedit::commands::{self, RunConfig};
use emoedit::model::ModelConfig;
use emoedit::evalkit::ser::SerConfig;
use emoedit::Error;

#[derive(Parser)]
#[command(
    name = "emoedit",
    about = "Emotion-selectable text-based speech editing",
    version
)]
struct Cli {
    /// JSON run configuration (all fields optional).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Directory for corpora, manifests, caches, and outputs.
    /// Overrides EMOEDIT_DATA_ROOT and the config file.
    #[arg(long, global = true)]
    data_root: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic demo corpus.
    SynthCorpus(SynthCorpusArgs),
    /// Ingest corpora, split, augment, and write manifests.
    Prepare(PrepareArgs),
    /// Pitch-augment an existing manifest.
    Augment(AugmentArgs),
    /// Train the mask-predict acoustic model.
    Train(TrainArgs),
    /// Apply an edit script to one utterance.
    Edit(EditArgs),
    /// Mel-cepstral distortion between edited and reference features.
    EvalMcd(EvalMcdArgs),
    /// F0 statistics of generated regions by gender and emotion.
    EvalF0(EvalF0Args),
    /// Train the emotion classifier.
    TrainSer(TrainSerArgs),
    /// Run the emotion classifier over labeled clips.
    EvalSer(EvalSerArgs),
}

#[derive(Args)]
struct SynthCorpusArgs {
    /// Output directory for emotional speakers (default: <data_root>/corpus/emotional).
    #[arg(long)]
    emotional_root: Option<PathBuf>,
    /// Output directory for neutral speakers (default: <data_root>/corpus/neutral).
    #[arg(long)]
    neutral_root: Option<PathBuf>,
    #[arg(long)]
    emotional_speakers: Option<usize>,
    #[arg(long)]
    clips_per_emotion: Option<usize>,
    #[arg(long)]
    neutral_speakers: Option<usize>,
    #[arg(long)]
    clips_per_neutral_speaker: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct PrepareArgs {
    /// Emotional corpus root (default: <data_root>/corpus/emotional).
    #[arg(long)]
    emotional_root: Option<PathBuf>,
    /// Neutral corpus root; when given, its clips are merged into the train
    /// split as extra neutral data.
    #[arg(long)]
    neutral_root: Option<PathBuf>,
    /// Comma-separated semitone shifts for train-split pitch augmentation,
    /// e.g. "-4,-2,2,4". Omit to skip augmentation.
    #[arg(long, allow_hyphen_values = true)]
    augment_shifts: Option<String>,
    /// Speaker id reserved for the test split (repeatable).
    #[arg(long = "held-out-speaker")]
    held_out_speakers: Vec<String>,
    /// Fraction of remaining utterances sent to the validation split.
    #[arg(long, default_value_t = 0.1)]
    val_fraction: f64,
    /// Split seed (defaults to the training seed).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct AugmentArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Comma-separated semitone shifts, e.g. "-4,-2,2,4".
    #[arg(long, allow_hyphen_values = true)]
    shifts: String,
    /// Output manifest path (default: <manifest>.augmented.jsonl).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Run directory for checkpoints and metrics (default: <data_root>/run).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    lambda_adv: Option<f64>,
    #[arg(long)]
    mask_ratio: Option<f64>,
    #[arg(long)]
    checkpoint_every: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Use the small model configuration (fast, for demos and tests).
    #[arg(long)]
    toy: bool,
    /// Continue from <out>/checkpoint.ckpt if it exists.
    #[arg(long)]
    resume: bool,
}

#[derive(Args)]
struct EditArgs {
    /// Acoustic model checkpoint. Required unless the script is delete-only.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    manifest: PathBuf,
    /// Utterance id within the manifest.
    #[arg(long)]
    utt: String,
    /// Edit script (JSON list of ops).
    #[arg(long)]
    script: PathBuf,
    /// Output directory (default: <data_root>/edits).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Re-run every generating op once per emotion, writing five outputs.
    #[arg(long)]
    all_emotions: bool,
    /// Also render each result to a wav next to its features.
    #[arg(long)]
    preview: bool,
}

#[derive(Args)]
struct EvalMcdArgs {
    /// CSV list: utt_id,emotion,edited_features,reference_features.
    #[arg(long)]
    list: PathBuf,
    #[arg(long)]
    out_csv: Option<PathBuf>,
    #[arg(long)]
    out_json: Option<PathBuf>,
}

#[derive(Args)]
struct EvalF0Args {
    /// CSV list: utt_id,gender,emotion,features,region_map.
    #[arg(long)]
    list: PathBuf,
    #[arg(long)]
    out_csv: Option<PathBuf>,
    /// Write a per-emotion F0 curve figure of the generated regions.
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(Args)]
struct TrainSerArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Checkpoint path (default: <data_root>/run/ser.ckpt).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Use the small classifier configuration.
    #[arg(long)]
    toy: bool,
}

#[derive(Args)]
struct EvalSerArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Labeled wav manifest to classify.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// CSV list of labeled feature files: utt_id,emotion,features.
    /// Features are rendered to audio before classification.
    #[arg(long)]
    list: Option<PathBuf>,
    #[arg(long)]
    out_json: Option<PathBuf>,
    /// Write the confusion matrix as a heatmap image.
    #[arg(long)]
    plot: Option<PathBuf>,
}

fn run(cli: Cli) -> emoedit::Result<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref(), cli.data_root)?;
    match cli.command {
        Command::SynthCorpus(a) => {
            if let Some(v) = a.emotional_speakers {
                cfg.synth.emotional_speakers = v;
            }
            if let Some(v) = a.clips_per_emotion {
                cfg.synth.clips_per_emotion = v;
            }
            if let Some(v) = a.neutral_speakers {
                cfg.synth.neutral_speakers = v;
            }
            if let Some(v) = a.clips_per_neutral_speaker {
                cfg.synth.clips_per_neutral_speaker = v;
            }
            if let Some(v) = a.seed {
                cfg.synth.seed = v;
            }
            commands::cmd_synth_corpus(&cfg, a.emotional_root, a.neutral_root)
        }
        Command::Prepare(a) => {
            if let Some(v) = a.seed {
                cfg.train.seed = v;
            }
            commands::cmd_prepare(
                &cfg,
                a.emotional_root,
                a.neutral_root,
                a.augment_shifts.as_deref(),
                &a.held_out_speakers,
                a.val_fraction,
            )
        }
        Command::Augment(a) => commands::cmd_augment(&cfg, &a.manifest, &a.shifts, a.out),
        Command::Train(a) => {
            if a.toy {
                cfg.model = ModelConfig::toy();
            }
            if let Some(v) = a.steps {
                cfg.train.steps = v;
            }
            if let Some(v) = a.batch_size {
                cfg.train.batch_size = v;
            }
            if let Some(v) = a.lr {
                cfg.train.lr = v;
            }
            if let Some(v) = a.lambda_adv {
                cfg.train.lambda_adv = v;
            }
            if let Some(v) = a.mask_ratio {
                cfg.train.mask_ratio = v;
            }
            if let Some(v) = a.checkpoint_every {
                cfg.train.checkpoint_every = v;
            }
            if let Some(v) = a.seed {
                cfg.train.seed = v;
            }
            commands::cmd_train(&cfg, &a.manifest, a.out, a.resume)
        }
        Command::Edit(a) => commands::cmd_edit(
            &cfg,
            a.checkpoint,
            &a.manifest,
            &a.utt,
            &a.script,
            a.out,
            a.all_emotions,
            a.preview,
        ),
        Command::EvalMcd(a) => commands::cmd_eval_mcd(&cfg, &a.list, a.out_csv, a.out_json),
        Command::EvalF0(a) => commands::cmd_eval_f0(&cfg, &a.list, a.out_csv, a.plot),
        Command::TrainSer(a) => {
            if a.toy {
                cfg.ser = SerConfig::toy();
            }
            if let Some(v) = a.epochs {
                cfg.ser.epochs = v;
            }
            if let Some(v) = a.seed {
                cfg.ser.seed = v;
            }
            commands::cmd_train_ser(&cfg, &a.manifest, a.out)
        }
        Command::EvalSer(a) => {
            commands::cmd_eval_ser(&cfg, &a.checkpoint, a.manifest, a.list, a.out_json, a.plot)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Script(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
