//! Implementations behind the `emoedit` binary's subcommands.
//!
//! Each `cmd_*` function is a thin orchestration layer: it resolves paths
//! against the shared [`RunConfig`], calls into the library, and writes its
//! outputs under the data root. Nothing here holds state between calls, so
//! the functions are also usable from integration tests that want the CLI
//! behavior without spawning a process.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::augment::{augment_emotional, merge_neutral, ShiftSpec};
use crate::corpus::{
    ingest_emotional_corpus, ingest_neutral_corpus, make_splits, EmotionLabel, Gender, Manifest,
    Provenance, Split, Tokenizer, UtteranceRecord,
};
use crate::editor::{apply_script, DurationTable, EditOp, EditResult, EditScript};
use crate::error::{Error, Result};
use crate::evalkit::plot::{save_f0_curves, save_heatmap};
use crate::evalkit::ser::{confusion_matrix, mel_input, train_ser, SerConfig, SerModel};
use crate::evalkit::{f0_curve, f0_stats, mcd_dtw, F0StatsTable, McdReport};
use crate::model::{ModelConfig, ModelParams};
use crate::signal::{extract_features, invert_features, load_wav, save_wav, FeatureSequence, FrameConfig};
use crate::synth::{generate_corpus, SynthSpec};
use crate::training::{load_items, train, TrainConfig};

/// Environment variable that overrides the configured data root.
pub const DATA_ROOT_ENV: &str = "EMOEDIT_DATA_ROOT";

/// Everything a run needs in one place. Loaded from a JSON file when
/// `--config` is given; every field has a default so an empty object (or no
/// file at all) is a valid configuration.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Directory that holds corpora, manifests, feature caches, and run
    /// outputs. Relative paths inside subcommands resolve against this.
    pub data_root: PathBuf,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub frame: FrameConfig,
    pub ser: SerConfig,
    pub synth: SynthSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data_root: PathBuf::from("data"),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            frame: FrameConfig::default(),
            ser: SerConfig::default(),
            synth: SynthSpec::default(),
        }
    }
}

impl RunConfig {
    /// Read a config file if one was given, then resolve the data root with
    /// precedence: `--data-root` flag, then `EMOEDIT_DATA_ROOT`, then the
    /// file, then the built-in default.
    pub fn load(config_path: Option<&Path>, data_root_flag: Option<PathBuf>) -> Result<RunConfig> {
        let mut cfg = match config_path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
                serde_json::from_str::<RunConfig>(&text)
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => RunConfig::default(),
        };
        if let Ok(env_root) = std::env::var(DATA_ROOT_ENV) {
            if !env_root.is_empty() {
                cfg.data_root = PathBuf::from(env_root);
            }
        }
        if let Some(root) = data_root_flag {
            cfg.data_root = root;
        }
        Ok(cfg)
    }

    pub fn emotional_corpus_dir(&self) -> PathBuf {
        self.data_root.join("corpus").join("emotional")
    }

    pub fn neutral_corpus_dir(&self) -> PathBuf {
        self.data_root.join("corpus").join("neutral")
    }

    pub fn augmented_dir(&self) -> PathBuf {
        self.data_root.join("corpus").join("augmented")
    }

    pub fn manifests_dir(&self) -> PathBuf {
        self.data_root.join("manifests")
    }

    pub fn features_dir(&self) -> PathBuf {
        self.data_root.join("features")
    }

    pub fn default_run_dir(&self) -> PathBuf {
        self.data_root.join("run")
    }

    pub fn default_edits_dir(&self) -> PathBuf {
        self.data_root.join("edits")
    }
}

/// Parse a comma-separated semitone list like `-4,-2,2,4`.
pub fn parse_shift_list(text: &str) -> Result<Vec<ShiftSpec>> {
    let mut shifts = Vec::new();
    for part in text.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let s: f64 = part
            .parse()
            .map_err(|_| Error::Config(format!("bad semitone value {part:?} in shift list")))?;
        let spec = ShiftSpec::new(s);
        spec.validate_for_augmentation()
            .map_err(|e| Error::Config(format!("shift {part}: {e}")))?;
        shifts.push(spec);
    }
    if shifts.is_empty() {
        return Err(Error::Config("shift list is empty".into()));
    }
    Ok(shifts)
}

fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Generate the synthetic demo corpus under the data root (or explicit roots).
pub fn cmd_synth_corpus(
    cfg: &RunConfig,
    emotional_root: Option<PathBuf>,
    neutral_root: Option<PathBuf>,
) -> Result<()> {
    let emotional = emotional_root.unwrap_or_else(|| cfg.emotional_corpus_dir());
    let neutral = neutral_root.unwrap_or_else(|| cfg.neutral_corpus_dir());
    let summary = generate_corpus(&cfg.synth, &emotional, &neutral)?;
    println!(
        "wrote {} emotional clips to {} and {} neutral clips to {}",
        summary.emotional_clips,
        emotional.display(),
        summary.neutral_clips,
        neutral.display()
    );
    Ok(())
}

/// Ingest raw corpora, split by speaker/fraction, augment the training split,
/// and write train/val/test manifests. Splitting happens before augmentation
/// so no shifted copy of a validation utterance can leak into training.
pub fn cmd_prepare(
    cfg: &RunConfig,
    emotional_root: Option<PathBuf>,
    neutral_root: Option<PathBuf>,
    shifts: Option<&str>,
    held_out_speakers: &[String],
    val_fraction: f64,
) -> Result<()> {
    let tokenizer = Tokenizer::default();
    let emotional_root = emotional_root.unwrap_or_else(|| cfg.emotional_corpus_dir());
    let emotional = ingest_emotional_corpus(&emotional_root, &tokenizer)?;
    println!(
        "ingested {} emotional utterances from {}",
        emotional.len(),
        emotional_root.display()
    );

    let (mut train_m, val_m, test_m) =
        make_splits(&emotional, held_out_speakers, val_fraction, cfg.train.seed)?;
    println!(
        "split: {} train / {} val / {} test",
        train_m.len(),
        val_m.len(),
        test_m.len()
    );

    if let Some(list) = shifts {
        let shifts = parse_shift_list(list)?;
        train_m = augment_emotional(&train_m, &shifts, &cfg.augmented_dir())?;
        println!(
            "pitch augmentation x{}: train set now {} utterances",
            shifts.len(),
            train_m.len()
        );
    }

    if let Some(neutral_root) = neutral_root {
        let neutral = ingest_neutral_corpus(&neutral_root, &tokenizer)?;
        let before = train_m.len();
        train_m = merge_neutral(&train_m, &neutral)?;
        println!(
            "merged {} neutral utterances into the train set ({} -> {})",
            neutral.len(),
            before,
            train_m.len()
        );
    }

    let dir = cfg.manifests_dir();
    ensure_dir(&dir)?;
    train_m.save(&dir.join("train.jsonl"))?;
    val_m.save(&dir.join("val.jsonl"))?;
    test_m.save(&dir.join("test.jsonl"))?;
    println!("manifests written to {}", dir.display());
    Ok(())
}

/// Standalone pitch augmentation of an existing manifest.
pub fn cmd_augment(
    cfg: &RunConfig,
    manifest_path: &Path,
    shifts: &str,
    out_manifest: Option<PathBuf>,
) -> Result<()> {
    let shifts = parse_shift_list(shifts)?;
    let m = Manifest::load(manifest_path, Split::Train, Provenance::Original)?;
    let augmented = augment_emotional(&m, &shifts, &cfg.augmented_dir())?;
    let out = out_manifest.unwrap_or_else(|| {
        let mut p = manifest_path.to_path_buf();
        p.set_extension("augmented.jsonl");
        p
    });
    augmented.save(&out)?;
    println!(
        "augmented manifest with {} records written to {}",
        augmented.len(),
        out.display()
    );
    Ok(())
}

fn cached_feature_path(dir: &Path, utt_id: &str) -> PathBuf {
    dir.join(format!("{utt_id}.feat"))
}

/// Extract (or load cached) features for a single record.
fn record_features(cfg: &RunConfig, record: &UtteranceRecord) -> Result<FeatureSequence> {
    let cache = cached_feature_path(&cfg.features_dir(), &record.utt_id);
    if cache.is_file() {
        return FeatureSequence::load(&cache);
    }
    let w = load_wav(&record.wav_path)?;
    extract_features(&w, &cfg.frame)
}

/// Train the acoustic model on a prepared manifest.
pub fn cmd_train(
    cfg: &RunConfig,
    manifest_path: &Path,
    out_dir: Option<PathBuf>,
    resume: bool,
) -> Result<()> {
    let manifest = Manifest::load(manifest_path, Split::Train, Provenance::Original)?;
    let feat_dir = cfg.features_dir();
    ensure_dir(&feat_dir)?;

    let items = load_items(&manifest, Some(&feat_dir), &cfg.frame)?;
    // Fill the cache so later commands (and reruns) skip extraction.
    for item in &items {
        let cache = cached_feature_path(&feat_dir, &item.utt_id);
        if !cache.is_file() {
            FeatureSequence::new(item.feats.clone()).save(&cache)?;
        }
    }
    println!(
        "loaded {} training utterances ({} feature files cached in {})",
        items.len(),
        items.len(),
        feat_dir.display()
    );

    let out_dir = out_dir.unwrap_or_else(|| cfg.default_run_dir());
    ensure_dir(&out_dir)?;
    let checkpoint = out_dir.join("checkpoint.ckpt");

    let (mut model, start_step) = if resume && checkpoint.is_file() {
        let (model, step) = ModelParams::load(&checkpoint)?;
        println!("resuming from {} at step {step}", checkpoint.display());
        (model, step)
    } else {
        (ModelParams::new(cfg.model.clone(), cfg.train.seed)?, 0)
    };

    let summary = train(&mut model, &items, &cfg.train, &out_dir, start_step)?;

    let tokenizer = Tokenizer::default();
    match DurationTable::from_manifest(&manifest, &tokenizer) {
        Ok(table) => table.save(&out_dir.join("duration.json"))?,
        Err(e) => log::warn!("no duration table written: {e}"),
    }

    let m = &summary.final_metrics;
    println!(
        "trained {} steps: l_rec {:.4}, l_adv {:.4}, d_acc {:.3}",
        summary.steps_run, m.l_rec, m.l_adv, m.d_acc
    );
    println!("checkpoint: {}", summary.checkpoint.display());
    println!("metrics: {}", summary.metrics_csv.display());
    Ok(())
}

/// Rewrite every model-backed op in a script to use `emotion`.
fn script_with_emotion(script: &EditScript, emotion: EmotionLabel) -> EditScript {
    let ops = script
        .ops
        .iter()
        .map(|op| match op.clone() {
            EditOp::Insert {
                position_word,
                position_frame,
                text,
                ..
            } => EditOp::Insert {
                position_word,
                position_frame,
                text,
                emotion,
            },
            EditOp::Replace {
                span_words,
                span_frames,
                text,
                ..
            } => EditOp::Replace {
                span_words,
                span_frames,
                text,
                emotion,
            },
            delete @ EditOp::Delete { .. } => delete,
        })
        .collect();
    EditScript { ops }
}

fn write_edit_outputs(
    cfg: &RunConfig,
    out_dir: &Path,
    stem: &str,
    result: &EditResult,
    preview: bool,
) -> Result<()> {
    result.features.save(&out_dir.join(format!("{stem}.feat")))?;
    result.save_region_map(&out_dir.join(format!("{stem}.regions.json")))?;
    if preview {
        let w = invert_features(&result.features, &cfg.frame)?;
        save_wav(&w, &out_dir.join(format!("{stem}.wav")))?;
    }
    Ok(())
}

/// Apply an edit script to one utterance, optionally once per emotion.
#[allow(clippy::too_many_arguments)]
pub fn cmd_edit(
    cfg: &RunConfig,
    checkpoint: Option<PathBuf>,
    manifest_path: &Path,
    utt_id: &str,
    script_path: &Path,
    out_dir: Option<PathBuf>,
    all_emotions: bool,
    preview: bool,
) -> Result<()> {
    let manifest = Manifest::load(manifest_path, Split::Test, Provenance::Original)?;
    let record = manifest
        .records
        .iter()
        .find(|r| r.utt_id == utt_id)
        .ok_or_else(|| Error::InvalidInput(format!("utt_id {utt_id} not in manifest")))?;
    let script = EditScript::load(script_path)?;
    let feats = record_features(cfg, record)?;
    let tokenizer = Tokenizer::default();

    // Deletes are pure splices; only generation needs weights.
    let (model, table) = if script.model_free() {
        (None, DurationTable::uniform(1.0))
    } else {
        let path = checkpoint.ok_or_else(|| {
            Error::Config("script generates speech, pass --checkpoint".into())
        })?;
        let (model, _) = ModelParams::load(&path)?;
        // A training run saves duration.json next to the checkpoint; prefer
        // those learned durations over a rebuild from this manifest.
        let sibling = path.with_file_name("duration.json");
        let table = if sibling.is_file() {
            DurationTable::load(&sibling)?
        } else {
            DurationTable::from_manifest(&manifest, &tokenizer)?
        };
        (Some(model), table)
    };

    let out_dir = out_dir.unwrap_or_else(|| cfg.default_edits_dir());
    ensure_dir(&out_dir)?;

    if all_emotions {
        for &emotion in EmotionLabel::ALL.iter() {
            let variant = script_with_emotion(&script, emotion);
            let result = apply_script(record, &feats, &variant, model.as_ref(), &tokenizer, &table)?;
            let stem = format!("{utt_id}.{}", emotion.name());
            write_edit_outputs(cfg, &out_dir, &stem, &result, preview)?;
            println!(
                "{}: {} frames, {} generated regions",
                stem,
                result.features.len(),
                result.generated_regions().count()
            );
        }
    } else {
        let result = apply_script(record, &feats, &script, model.as_ref(), &tokenizer, &table)?;
        write_edit_outputs(cfg, &out_dir, utt_id, &result, preview)?;
        println!(
            "{}: {} frames, {} generated regions",
            utt_id,
            result.features.len(),
            result.generated_regions().count()
        );
    }
    println!("edit outputs in {}", out_dir.display());
    Ok(())
}

/// One row of an MCD evaluation list file.
struct McdListRow {
    utt_id: String,
    emotion: EmotionLabel,
    edited: PathBuf,
    reference: PathBuf,
}

fn parse_emotion(name: &str) -> Result<EmotionLabel> {
    EmotionLabel::ALL
        .iter()
        .copied()
        .find(|e| e.name().eq_ignore_ascii_case(name))
        .ok_or_else(|| Error::Config(format!("unknown emotion {name:?}")))
}

fn parse_gender(name: &str) -> Result<Gender> {
    match name.to_ascii_lowercase().as_str() {
        "female" | "f" => Ok(Gender::Female),
        "male" | "m" => Ok(Gender::Male),
        other => Err(Error::Config(format!("unknown gender {other:?}"))),
    }
}

/// Read a CSV-ish list file, skipping blank lines and `#` comments. Each
/// line must have exactly `n_fields` comma-separated fields.
fn read_list_file(path: &Path, n_fields: usize) -> Result<Vec<Vec<String>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<String> = line.split(',').map(|f| f.trim().to_string()).collect();
        if fields.len() != n_fields {
            return Err(Error::Config(format!(
                "{} line {}: expected {} fields, got {}",
                path.display(),
                i + 1,
                n_fields,
                fields.len()
            )));
        }
        rows.push(fields);
    }
    if rows.is_empty() {
        return Err(Error::Config(format!("{} has no data rows", path.display())));
    }
    Ok(rows)
}

/// Mel-cepstral distortion over a list of (edited, reference) feature pairs.
pub fn cmd_eval_mcd(
    cfg: &RunConfig,
    list_path: &Path,
    out_csv: Option<PathBuf>,
    out_json: Option<PathBuf>,
) -> Result<()> {
    let rows: Vec<McdListRow> = read_list_file(list_path, 4)?
        .into_iter()
        .map(|f| {
            Ok(McdListRow {
                utt_id: f[0].clone(),
                emotion: parse_emotion(&f[1])?,
                edited: PathBuf::from(&f[2]),
                reference: PathBuf::from(&f[3]),
            })
        })
        .collect::<Result<_>>()?;

    let mut report = McdReport::default();
    for row in &rows {
        let edited = FeatureSequence::load(&row.edited)?;
        let reference = FeatureSequence::load(&row.reference)?;
        let mcd = mcd_dtw(&edited, &reference)?;
        report.push(&row.utt_id, row.emotion, mcd);
    }

    let out_csv = out_csv.unwrap_or_else(|| cfg.data_root.join("eval").join("mcd.csv"));
    if let Some(parent) = out_csv.parent() {
        ensure_dir(parent)?;
    }
    report.save_csv(&out_csv)?;
    if let Some(json) = out_json {
        if let Some(parent) = json.parent() {
            ensure_dir(parent)?;
        }
        report.save_summary_json(&json)?;
    }

    for (emotion, mean) in report.mean_by_emotion() {
        println!("{:<9} {:.4} dB", emotion.name(), mean);
    }
    let overall = report.overall_mean().expect("list is non-empty");
    println!("overall   {overall:.4} dB over {} utterances", rows.len());
    println!("rows written to {}", out_csv.display());
    Ok(())
}

/// F0 statistics of generated regions, grouped by gender and emotion.
pub fn cmd_eval_f0(
    cfg: &RunConfig,
    list_path: &Path,
    out_csv: Option<PathBuf>,
    plot_path: Option<PathBuf>,
) -> Result<()> {
    let rows = read_list_file(list_path, 5)?;
    let mut edited: Vec<(EditResult, Gender, EmotionLabel)> = Vec::new();
    for f in &rows {
        let gender = parse_gender(&f[1])?;
        let emotion = parse_emotion(&f[2])?;
        let features = FeatureSequence::load(Path::new(&f[3]))?;
        let text = std::fs::read_to_string(&f[4]).map_err(|e| Error::io(&f[4], e))?;
        let regions = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", f[4])))?;
        let result = EditResult { features, regions };
        result.validate()?;
        edited.push((result, gender, emotion));
    }

    let table: F0StatsTable = f0_stats(&edited);
    let out_csv = out_csv.unwrap_or_else(|| cfg.data_root.join("eval").join("f0_stats.csv"));
    if let Some(parent) = out_csv.parent() {
        ensure_dir(parent)?;
    }
    table.save_csv(&out_csv)?;

    for row in &table.rows {
        match (row.mean_hz, row.std_hz) {
            (Some(mean), Some(std)) => println!(
                "{:?}/{:<9} mean {:7.2} Hz  std {:6.2} Hz  ({} voiced frames)",
                row.gender,
                row.emotion.name(),
                mean,
                std,
                row.voiced_frames
            ),
            _ => println!(
                "{:?}/{:<9} no voiced generated frames",
                row.gender,
                row.emotion.name()
            ),
        }
    }
    println!("table written to {}", out_csv.display());

    if let Some(plot) = plot_path {
        // One curve per emotion: the first listed edit result that carries a
        // generated region for it, F0 sampled over those frames only.
        let mut curves: Vec<(EmotionLabel, Vec<Option<f64>>)> = Vec::new();
        for &emotion in EmotionLabel::ALL.iter() {
            let mut curve: Vec<Option<f64>> = Vec::new();
            'outer: for (result, _, _) in &edited {
                for region in result.generated_regions() {
                    if region.emotion == Some(emotion) {
                        let slice = result
                            .features
                            .slice_rows(region.start, region.end - region.start);
                        curve = f0_curve(&slice);
                        break 'outer;
                    }
                }
            }
            if !curve.is_empty() {
                curves.push((emotion, curve));
            }
        }
        if curves.is_empty() {
            return Err(Error::InvalidInput(
                "no generated regions found, nothing to plot".into(),
            ));
        }
        if let Some(parent) = plot.parent() {
            ensure_dir(parent)?;
        }
        save_f0_curves(&curves, &plot)?;
        println!("curves written to {}", plot.display());
    }
    Ok(())
}

fn ser_items_from_manifest(
    cfg: &RunConfig,
    manifest: &Manifest,
) -> Result<Vec<(Array2<f64>, EmotionLabel)>> {
    let mut items = Vec::with_capacity(manifest.len());
    for r in &manifest.records {
        let w = load_wav(&r.wav_path)?;
        items.push((mel_input(&w, cfg.ser.n_mels)?, r.emotion));
    }
    Ok(items)
}

/// Train the emotion classifier used by the objective evaluation.
pub fn cmd_train_ser(cfg: &RunConfig, manifest_path: &Path, out: Option<PathBuf>) -> Result<()> {
    let manifest = Manifest::load(manifest_path, Split::Train, Provenance::Original)?;
    let items = ser_items_from_manifest(cfg, &manifest)?;
    println!("training emotion classifier on {} clips", items.len());
    let (model, report) = train_ser(&items, &cfg.ser)?;
    let out = out.unwrap_or_else(|| cfg.default_run_dir().join("ser.ckpt"));
    if let Some(parent) = out.parent() {
        ensure_dir(parent)?;
    }
    model.save(&out, report.epochs_run as u64)?;
    println!(
        "classifier trained for {} epochs, train accuracy {:.3}",
        report.epochs_run, report.final_accuracy
    );
    println!("checkpoint: {}", out.display());
    Ok(())
}

/// Evaluate the emotion classifier. Input is either a labeled wav manifest
/// or a feature list (utt_id,emotion,features); features are rendered back
/// to audio first so the classifier always sees the same input domain it was
/// trained on.
pub fn cmd_eval_ser(
    cfg: &RunConfig,
    checkpoint: &Path,
    manifest_path: Option<PathBuf>,
    list_path: Option<PathBuf>,
    out_json: Option<PathBuf>,
    plot_path: Option<PathBuf>,
) -> Result<()> {
    if !checkpoint.is_file() {
        return Err(Error::Config(format!(
            "classifier checkpoint {} not found (run train-ser first)",
            checkpoint.display()
        )));
    }
    let (model, _) = SerModel::load(checkpoint)?;

    let items: Vec<(Array2<f64>, EmotionLabel)> = match (manifest_path, list_path) {
        (Some(m), None) => {
            let manifest = Manifest::load(&m, Split::Test, Provenance::Original)?;
            ser_items_from_manifest(cfg, &manifest)?
        }
        (None, Some(list)) => {
            let rows = read_list_file(&list, 3)?;
            let mut items = Vec::with_capacity(rows.len());
            for f in &rows {
                let emotion = parse_emotion(&f[1])?;
                let seq = FeatureSequence::load(Path::new(&f[2]))?;
                let w = invert_features(&seq, &cfg.frame)?;
                items.push((mel_input(&w, cfg.ser.n_mels)?, emotion));
            }
            items
        }
        _ => {
            return Err(Error::Config(
                "pass exactly one of --manifest or --list".into(),
            ))
        }
    };

    let matrix = confusion_matrix(&model, &items)?;
    let mut correct = 0usize;
    for (input, label) in &items {
        if model.predict(input)? == *label {
            correct += 1;
        }
    }
    let accuracy = correct as f64 / items.len() as f64;

    let out_json = out_json.unwrap_or_else(|| cfg.data_root.join("eval").join("ser.json"));
    if let Some(parent) = out_json.parent() {
        ensure_dir(parent)?;
    }
    let mut per_class = HashMap::new();
    for (i, e) in EmotionLabel::ALL.iter().enumerate() {
        per_class.insert(e.name().to_string(), matrix[(i, i)]);
    }
    let payload = serde_json::json!({
        "accuracy": accuracy,
        "n_clips": items.len(),
        "recall_by_emotion": per_class,
        "confusion_rows": matrix.rows().into_iter().map(|r| r.to_vec()).collect::<Vec<_>>(),
    });
    crate::util::atomic_write(
        &out_json,
        serde_json::to_string_pretty(&payload).expect("json").as_bytes(),
    )?;

    println!("accuracy {:.3} over {} clips", accuracy, items.len());
    println!("report written to {}", out_json.display());
    if let Some(plot) = plot_path {
        if let Some(parent) = plot.parent() {
            ensure_dir(parent)?;
        }
        save_heatmap(&matrix, &plot)?;
        println!("confusion heatmap written to {}", plot.display());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shift_list_round_trip() {
        let shifts = parse_shift_list("-4, -2, 2,4").unwrap();
        let semis: Vec<f64> = shifts.iter().map(|s| s.semitones).collect();
        assert_eq!(semis, vec![-4.0, -2.0, 2.0, 4.0]);
    }

    #[test]
    fn shift_list_rejects_garbage() {
        assert!(matches!(parse_shift_list("abc"), Err(Error::Config(_))));
        assert!(matches!(parse_shift_list(""), Err(Error::Config(_))));
        assert!(matches!(parse_shift_list("0"), Err(Error::Config(_))));
    }

    #[test]
    fn data_root_precedence() {
        let dir = tempfile::tempdir().unwrap();
        let cfg_path = dir.path().join("cfg.json");
        std::fs::write(&cfg_path, r#"{"data_root": "from_file"}"#).unwrap();

        let cfg = RunConfig::load(Some(&cfg_path), None).unwrap();
        assert_eq!(cfg.data_root, PathBuf::from("from_file"));

        let cfg = RunConfig::load(Some(&cfg_path), Some(PathBuf::from("from_flag"))).unwrap();
        assert_eq!(cfg.data_root, PathBuf::from("from_flag"));

        let cfg = RunConfig::load(None, None).unwrap();
        assert_eq!(cfg.data_root, PathBuf::from("data"));
    }

    #[test]
    fn config_rejects_unknown_fields() {
        let dir = tempfile::tempdir().unwrap();
        let cfg_path = dir.path().join("cfg.json");
        std::fs::write(&cfg_path, r#"{"data_roots": "typo"}"#).unwrap();
        assert!(matches!(
            RunConfig::load(Some(&cfg_path), None),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn list_file_parsing() {
        let dir = tempfile::tempdir().unwrap();
        let list = dir.path().join("list.csv");
        std::fs::write(&list, "# comment\na, b\n\nc,d\n").unwrap();
        let rows = read_list_file(&list, 2).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0], vec!["a".to_string(), "b".to_string()]);
        assert!(read_list_file(&list, 3).is_err());
    }

    #[test]
    fn emotion_and_gender_names_parse() {
        assert_eq!(parse_emotion("Happy").unwrap(), EmotionLabel::Happy);
        assert!(parse_emotion("bored").is_err());
        assert_eq!(parse_gender("f").unwrap(), Gender::Female);
        assert_eq!(parse_gender("male").unwrap(), Gender::Male);
        assert!(parse_gender("x").is_err());
    }
}
