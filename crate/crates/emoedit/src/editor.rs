//! Inference-time editing: delete, insert, and replace operations on a
//! feature sequence, each with a selectable emotion for the regenerated
//! region, plus the empirical duration table that sizes inserted regions.
//!
//! Edits never touch frames outside the edited region; the output carries
//! a region map tagging every frame as original or generated so the
//! splice contract can be checked bit for bit.

use crate::corpus::{words, EmotionLabel, Manifest, Tokenizer, UtteranceRecord, WordSpan};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::signal::FeatureSequence;
use crate::training::MaskSpec;
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::Path;

/// A frame range or a word-index range, half open.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Span {
    Words(usize, usize),
    Frames(usize, usize),
}

/// An insertion point: before word `k`, or at an exact frame that must
/// fall on a word boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Position {
    Word(usize),
    Frame(usize),
}

/// One edit operation as read from a script file.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum EditOp {
    Delete {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        span_words: Option<[usize; 2]>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        span_frames: Option<[usize; 2]>,
    },
    Insert {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        position_word: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        position_frame: Option<usize>,
        text: String,
        emotion: EmotionLabel,
    },
    Replace {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        span_words: Option<[usize; 2]>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        span_frames: Option<[usize; 2]>,
        text: String,
        emotion: EmotionLabel,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct EditScript {
    pub ops: Vec<EditOp>,
}

impl EditScript {
    pub fn load(path: &Path) -> Result<EditScript> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| {
            Error::Script(format!(
                "{}: line {}, column {}: {e}",
                path.display(),
                e.line(),
                e.column()
            ))
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("script serializes");
        crate::util::atomic_write(path, text.as_bytes())
    }

    /// True when no op needs the acoustic model (delete-only scripts).
    pub fn model_free(&self) -> bool {
        self.ops.iter().all(|op| matches!(op, EditOp::Delete { .. }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionSource {
    Original,
    Generated,
}

/// One contiguous run of output frames with its provenance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub source: RegionSource,
    pub start: usize,
    pub end: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emotion: Option<EmotionLabel>,
}

#[derive(Debug, Clone)]
pub struct EditResult {
    pub features: FeatureSequence,
    pub regions: Vec<Region>,
}

impl EditResult {
    /// Check that the regions tile the output exactly once.
    pub fn validate(&self) -> Result<()> {
        let mut cursor = 0usize;
        for r in &self.regions {
            if r.start != cursor || r.end <= r.start {
                return Err(Error::InvalidInput(format!(
                    "region map broken at frame {cursor}: region {}..{}",
                    r.start, r.end
                )));
            }
            cursor = r.end;
        }
        if cursor != self.features.len() {
            return Err(Error::InvalidInput(format!(
                "region map covers {cursor} of {} frames",
                self.features.len()
            )));
        }
        Ok(())
    }

    pub fn save_region_map(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.regions).expect("regions serialize");
        crate::util::atomic_write(path, text.as_bytes())
    }

    /// Frame ranges produced by the model, with the emotion each used.
    pub fn generated_regions(&self) -> impl Iterator<Item = &Region> {
        self.regions
            .iter()
            .filter(|r| r.source == RegionSource::Generated)
    }
}

/// Mean frames per token, learned from manifest word alignments, with a
/// global fallback for unseen tokens.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DurationTable {
    per_token: HashMap<u32, f64>,
    global: f64,
}

impl DurationTable {
    pub fn from_manifest(manifest: &Manifest, tokenizer: &Tokenizer) -> Result<DurationTable> {
        let mut sums: HashMap<u32, (f64, usize)> = HashMap::new();
        let mut total_frames = 0.0;
        let mut total_tokens = 0usize;
        for rec in &manifest.records {
            let Some(spans) = &rec.word_spans else { continue };
            for WordSpan(word, start, end) in spans {
                if end <= start {
                    continue;
                }
                let toks = tokenizer.tokenize_word(word)?;
                if toks.is_empty() {
                    continue;
                }
                let frames = (end - start) as f64;
                let share = frames / toks.len() as f64;
                for t in &toks {
                    let e = sums.entry(*t).or_insert((0.0, 0));
                    e.0 += share;
                    e.1 += 1;
                }
                total_frames += frames;
                total_tokens += toks.len();
            }
        }
        if total_tokens == 0 {
            return Err(Error::Corpus(
                "no word alignments in manifest, cannot build duration table".into(),
            ));
        }
        let per_token = sums
            .into_iter()
            .map(|(t, (sum, n))| (t, sum / n as f64))
            .collect();
        Ok(DurationTable {
            per_token,
            global: total_frames / total_tokens as f64,
        })
    }

    /// A fixed-rate table, mostly for tests and model-free smoke runs.
    pub fn uniform(frames_per_token: f64) -> DurationTable {
        DurationTable {
            per_token: HashMap::new(),
            global: frames_per_token,
        }
    }

    pub fn frames_per_token(&self, token: u32) -> f64 {
        *self.per_token.get(&token).unwrap_or(&self.global)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).expect("table serializes");
        crate::util::atomic_write(path, text.as_bytes())
    }

    pub fn load(path: &Path) -> Result<DurationTable> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// Predicted frame count for a token sequence: the rounded sum of
/// per-token mean durations, at least one frame.
pub fn estimate_duration(tokens: &[u32], table: &DurationTable) -> Result<usize> {
    if tokens.is_empty() {
        return Err(Error::InvalidInput(
            "cannot estimate a duration for zero tokens".into(),
        ));
    }
    let frames: f64 = tokens.iter().map(|t| table.frames_per_token(*t)).sum();
    Ok((frames.round() as usize).max(1))
}

/// Remove a frame range. No model involved; the remaining frames are
/// concatenated unchanged.
pub fn apply_delete(feats: &FeatureSequence, span: (usize, usize)) -> Result<EditResult> {
    let (a, b) = span;
    let t = feats.len();
    if a > b || b > t {
        return Err(Error::InvalidInput(format!(
            "delete span {a}..{b} out of range for {t} frames"
        )));
    }
    let kept = t - (b - a);
    let mut frames = Array2::zeros((kept, feats.dim()));
    for (out, src) in (0..a).chain(b..t).enumerate() {
        frames.row_mut(out).assign(&feats.frames.row(src));
    }
    let mut regions = Vec::new();
    if a > 0 {
        regions.push(Region {
            source: RegionSource::Original,
            start: 0,
            end: a,
            emotion: None,
        });
    }
    if kept > a {
        regions.push(Region {
            source: RegionSource::Original,
            start: a,
            end: kept,
            emotion: None,
        });
    }
    let result = EditResult {
        features: FeatureSequence { frames },
        regions,
    };
    if kept > 0 {
        result.validate()?;
    }
    Ok(result)
}

fn record_words(record: &UtteranceRecord) -> Vec<String> {
    words(&record.text)
}

fn record_spans<'a>(record: &'a UtteranceRecord) -> Result<&'a [WordSpan]> {
    record
        .word_spans
        .as_deref()
        .filter(|s| !s.is_empty())
        .ok_or_else(|| {
            Error::InvalidInput(format!(
                "{}: word-level edits need word alignments",
                record.utt_id
            ))
        })
}

/// Map a word range to its frame range.
fn word_range_frames(spans: &[WordSpan], lo: usize, hi: usize) -> Result<(usize, usize)> {
    if lo >= hi || hi > spans.len() {
        return Err(Error::InvalidInput(format!(
            "word span {lo}..{hi} out of range for {} words",
            spans.len()
        )));
    }
    Ok((spans[lo].1, spans[hi - 1].2))
}

/// Map a frame range back to the word range it covers exactly.
fn frames_to_word_range(spans: &[WordSpan], a: usize, b: usize) -> Result<(usize, usize)> {
    let lo = spans
        .iter()
        .position(|s| s.1 == a)
        .ok_or_else(|| Error::InvalidInput(format!("frame {a} is not a word start")))?;
    let hi = spans
        .iter()
        .position(|s| s.2 == b)
        .map(|i| i + 1)
        .ok_or_else(|| Error::InvalidInput(format!("frame {b} is not a word end")))?;
    if lo >= hi {
        return Err(Error::InvalidInput(format!(
            "frame span {a}..{b} does not cover whole words"
        )));
    }
    Ok((lo, hi))
}

/// Map an insertion frame to the word boundary it sits on.
fn frame_to_boundary(spans: &[WordSpan], t: usize, frame: usize) -> Result<usize> {
    if frame == 0 {
        return Ok(0);
    }
    if frame == t {
        return Ok(spans.len());
    }
    spans
        .iter()
        .position(|s| s.1 == frame)
        .ok_or_else(|| Error::InvalidInput(format!("frame {frame} is inside a word")))
}

/// A fully resolved model-backed edit: replace words `[word_lo, word_hi)`
/// and frames `[a, b)` with `text` (insert when the ranges are empty).
struct Fill {
    word_lo: usize,
    word_hi: usize,
    a: usize,
    b: usize,
    text: String,
    emotion: EmotionLabel,
}

enum Resolved {
    Delete { a: usize, b: usize, word_lo: Option<usize>, word_hi: Option<usize> },
    Fill(Fill),
}

impl Resolved {
    fn frame_range(&self) -> (usize, usize) {
        match self {
            Resolved::Delete { a, b, .. } => (*a, *b),
            Resolved::Fill(f) => (f.a, f.b),
        }
    }
}

fn resolve_op(op: &EditOp, record: &UtteranceRecord, t: usize) -> Result<Resolved> {
    match op {
        EditOp::Delete {
            span_words,
            span_frames,
        } => match (span_words, span_frames) {
            (Some([lo, hi]), None) => {
                let spans = record_spans(record)?;
                let (a, b) = word_range_frames(spans, *lo, *hi)?;
                Ok(Resolved::Delete {
                    a,
                    b,
                    word_lo: Some(*lo),
                    word_hi: Some(*hi),
                })
            }
            (None, Some([a, b])) => {
                if a > b || *b > t {
                    return Err(Error::InvalidInput(format!(
                        "delete span {a}..{b} out of range for {t} frames"
                    )));
                }
                Ok(Resolved::Delete {
                    a: *a,
                    b: *b,
                    word_lo: None,
                    word_hi: None,
                })
            }
            _ => Err(Error::Script(
                "delete needs exactly one of span_words or span_frames".into(),
            )),
        },
        EditOp::Insert {
            position_word,
            position_frame,
            text,
            emotion,
        } => {
            let spans = record_spans(record)?;
            let boundary = match (position_word, position_frame) {
                (Some(k), None) => {
                    if *k > spans.len() {
                        return Err(Error::InvalidInput(format!(
                            "insert position {k} beyond {} words",
                            spans.len()
                        )));
                    }
                    *k
                }
                (None, Some(f)) => frame_to_boundary(spans, t, *f)?,
                _ => {
                    return Err(Error::Script(
                        "insert needs exactly one of position_word or position_frame".into(),
                    ))
                }
            };
            let at = if boundary == spans.len() {
                t
            } else {
                spans[boundary].1
            };
            Ok(Resolved::Fill(Fill {
                word_lo: boundary,
                word_hi: boundary,
                a: at,
                b: at,
                text: text.clone(),
                emotion: *emotion,
            }))
        }
        EditOp::Replace {
            span_words,
            span_frames,
            text,
            emotion,
        } => {
            if crate::corpus::normalize_text(text).is_empty() {
                return Err(Error::Script(
                    "replace with empty text; use delete instead".into(),
                ));
            }
            let spans = record_spans(record)?;
            let (word_lo, word_hi, a, b) = match (span_words, span_frames) {
                (Some([lo, hi]), None) => {
                    let (a, b) = word_range_frames(spans, *lo, *hi)?;
                    (*lo, *hi, a, b)
                }
                (None, Some([a, b])) => {
                    let (lo, hi) = frames_to_word_range(spans, *a, *b)?;
                    (lo, hi, *a, *b)
                }
                _ => {
                    return Err(Error::Script(
                        "replace needs exactly one of span_words or span_frames".into(),
                    ))
                }
            };
            Ok(Resolved::Fill(Fill {
                word_lo,
                word_hi,
                a,
                b,
                text: text.clone(),
                emotion: *emotion,
            }))
        }
    }
}

/// Splice the interval `[a, b)` of the current region list, replacing it
/// with `gen_len` frames from `source`, and shift everything after.
fn splice_regions(
    regions: &mut Vec<Region>,
    a: usize,
    b: usize,
    gen_len: usize,
    emotion: Option<EmotionLabel>,
) {
    let mut out: Vec<Region> = Vec::with_capacity(regions.len() + 2);
    let delta = gen_len as isize - (b - a) as isize;
    for r in regions.iter() {
        if r.end <= a {
            out.push(*r);
        } else if r.start >= b {
            out.push(Region {
                start: (r.start as isize + delta) as usize,
                end: (r.end as isize + delta) as usize,
                ..*r
            });
        } else {
            // overlaps the edited interval; ops are disjoint, so this is
            // an original region to split
            if r.start < a {
                out.push(Region { end: a, ..*r });
            }
            if r.end > b {
                out.push(Region {
                    start: (b as isize + delta) as usize,
                    end: (r.end as isize + delta) as usize,
                    ..*r
                });
            }
        }
    }
    if gen_len > 0 {
        let region = Region {
            source: RegionSource::Generated,
            start: a,
            end: a + gen_len,
            emotion,
        };
        let at = out.partition_point(|r| r.start < region.start || (r.start == region.start && r.end <= region.start));
        out.insert(at, region);
    }
    out.retain(|r| r.end > r.start);
    out.sort_by_key(|r| r.start);
    *regions = out;
}

fn splice_frames(feats: &Array2<f64>, a: usize, b: usize, filler: usize) -> Array2<f64> {
    let (t, d) = feats.dim();
    let mut out = Array2::zeros((t - (b - a) + filler, d));
    for row in 0..a {
        out.row_mut(row).assign(&feats.row(row));
    }
    for row in b..t {
        out.row_mut(row - (b - a) + filler).assign(&feats.row(row));
    }
    out
}

/// Apply a whole script. Ops are resolved against the original record,
/// checked for overlap, and applied back to front so earlier coordinates
/// stay valid.
pub fn apply_script(
    record: &UtteranceRecord,
    feats: &FeatureSequence,
    script: &EditScript,
    params: Option<&ModelParams>,
    tokenizer: &Tokenizer,
    table: &DurationTable,
) -> Result<EditResult> {
    feats.validate()?;
    if script.ops.is_empty() {
        return Err(Error::Script("edit script has no ops".into()));
    }
    let t = feats.len();
    let mut resolved: Vec<Resolved> = script
        .ops
        .iter()
        .map(|op| resolve_op(op, record, t))
        .collect::<Result<_>>()?;

    // overlap check on original-coordinate frame ranges; two inserts at
    // the same boundary are ambiguous and rejected
    let mut ranges: Vec<(usize, usize)> = resolved.iter().map(|r| r.frame_range()).collect();
    ranges.sort();
    for pair in ranges.windows(2) {
        let (a0, b0) = pair[0];
        let (a1, _) = pair[1];
        if b0 > a1 || (a0 == a1 && b0 == a1) {
            return Err(Error::Script(format!(
                "ops overlap after resolution near frame {a1}"
            )));
        }
    }

    resolved.sort_by_key(|r| std::cmp::Reverse(r.frame_range().0));
    let mut cur_words = record_words(record);
    let mut cur = feats.frames.clone();
    let mut regions = vec![Region {
        source: RegionSource::Original,
        start: 0,
        end: t,
        emotion: None,
    }];

    for op in &resolved {
        match op {
            Resolved::Delete { a, b, word_lo, word_hi } => {
                cur = splice_frames(&cur, *a, *b, 0);
                if let (Some(lo), Some(hi)) = (word_lo, word_hi) {
                    cur_words.drain(*lo..*hi);
                }
                splice_regions(&mut regions, *a, *b, 0, None);
            }
            Resolved::Fill(fill) => {
                let new_words = words(&fill.text);
                let mut gen_len = 0usize;
                if !new_words.is_empty() {
                    let region_tokens = tokenizer.tokenize(&fill.text)?;
                    gen_len = if fill.word_hi > fill.word_lo {
                        let old_text = cur_words[fill.word_lo..fill.word_hi].join(" ");
                        let old_tokens = tokenizer.tokenize(&old_text)?;
                        if old_tokens.len() == region_tokens.len() {
                            fill.b - fill.a
                        } else {
                            estimate_duration(&region_tokens, table)?
                        }
                    } else {
                        estimate_duration(&region_tokens, table)?
                    };
                }
                cur_words.splice(fill.word_lo..fill.word_hi, new_words.iter().cloned());
                if gen_len > 0 {
                    let params = params.ok_or_else(|| {
                        Error::InvalidInput("this edit needs a trained model".into())
                    })?;
                    let full_text = cur_words.join(" ");
                    let tokens = tokenizer.tokenize(&full_text)?;
                    let canvas = FeatureSequence {
                        frames: splice_frames(&cur, fill.a, fill.b, gen_len),
                    };
                    let mask = MaskSpec {
                        start: fill.a,
                        length: gen_len,
                    };
                    let pred =
                        params.predict_masked_tokens(&tokens, &canvas, &mask, fill.emotion)?;
                    let mut frames = canvas.frames;
                    for (i, row) in pred.frames.rows().into_iter().enumerate() {
                        frames.row_mut(fill.a + i).assign(&row);
                    }
                    cur = frames;
                    splice_regions(&mut regions, fill.a, fill.b, gen_len, Some(fill.emotion));
                } else if fill.b > fill.a {
                    cur = splice_frames(&cur, fill.a, fill.b, 0);
                    splice_regions(&mut regions, fill.a, fill.b, 0, None);
                }
            }
        }
    }

    let result = EditResult {
        features: FeatureSequence { frames: cur },
        regions,
    };
    result.validate()?;
    Ok(result)
}

/// Replace a span of speech with new text under the chosen emotion.
pub fn apply_replace(
    record: &UtteranceRecord,
    feats: &FeatureSequence,
    span: Span,
    new_text: &str,
    emotion: EmotionLabel,
    params: &ModelParams,
    tokenizer: &Tokenizer,
    table: &DurationTable,
) -> Result<EditResult> {
    let op = match span {
        Span::Words(lo, hi) => EditOp::Replace {
            span_words: Some([lo, hi]),
            span_frames: None,
            text: new_text.to_string(),
            emotion,
        },
        Span::Frames(a, b) => EditOp::Replace {
            span_words: None,
            span_frames: Some([a, b]),
            text: new_text.to_string(),
            emotion,
        },
    };
    apply_script(
        record,
        feats,
        &EditScript { ops: vec![op] },
        Some(params),
        tokenizer,
        table,
    )
}

/// Insert new speech at a word boundary under the chosen emotion.
/// Inserting empty text is the identity edit.
pub fn apply_insert(
    record: &UtteranceRecord,
    feats: &FeatureSequence,
    position: Position,
    text: &str,
    emotion: EmotionLabel,
    params: &ModelParams,
    tokenizer: &Tokenizer,
    table: &DurationTable,
) -> Result<EditResult> {
    if crate::corpus::normalize_text(text).is_empty() {
        feats.validate()?;
        return Ok(EditResult {
            features: feats.clone(),
            regions: vec![Region {
                source: RegionSource::Original,
                start: 0,
                end: feats.len(),
                emotion: None,
            }],
        });
    }
    let op = match position {
        Position::Word(k) => EditOp::Insert {
            position_word: Some(k),
            position_frame: None,
            text: text.to_string(),
            emotion,
        },
        Position::Frame(f) => EditOp::Insert {
            position_word: None,
            position_frame: Some(f),
            text: text.to_string(),
            emotion,
        },
    };
    apply_script(
        record,
        feats,
        &EditScript { ops: vec![op] },
        Some(params),
        tokenizer,
        table,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Gender;
    use crate::model::{ModelConfig, FEAT_DIM};
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn test_feats(t: usize, seed: u64) -> FeatureSequence {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut frames = Array2::zeros((t, FEAT_DIM));
        for tt in 0..t {
            for c in 0..30 {
                frames[[tt, c]] = rng.gen_range(-1.0..1.0);
            }
            let voiced = rng.gen_bool(0.7);
            frames[[tt, 31]] = if voiced { 1.0 } else { 0.0 };
            frames[[tt, 30]] = if voiced { rng.gen_range(4.5..5.5) } else { 0.0 };
        }
        FeatureSequence { frames }
    }

    fn test_record(text: &str, t: usize) -> UtteranceRecord {
        let tok = Tokenizer::default();
        let ws = words(text);
        let per = t / ws.len();
        let spans: Vec<WordSpan> = ws
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let end = if i + 1 == ws.len() { t } else { (i + 1) * per };
                WordSpan(w.clone(), i * per, end)
            })
            .collect();
        UtteranceRecord {
            utt_id: "test".into(),
            speaker_id: "spk0".into(),
            gender: Gender::Female,
            emotion: EmotionLabel::Neutral,
            text: crate::corpus::normalize_text(text),
            tokens: tok.tokenize(text).unwrap(),
            wav_path: "unused.wav".into(),
            word_spans: Some(spans),
        }
    }

    fn tiny_model() -> ModelParams {
        ModelParams::new(ModelConfig::tiny(), 99).unwrap()
    }

    #[test]
    fn delete_length_law_and_identity() {
        let feats = test_feats(100, 1);
        let out = apply_delete(&feats, (40, 60)).unwrap();
        assert_eq!(out.features.len(), 80);
        for t in 0..40 {
            assert_eq!(out.features.frames.row(t), feats.frames.row(t));
        }
        for t in 40..80 {
            assert_eq!(out.features.frames.row(t), feats.frames.row(t + 20));
        }

        let same = apply_delete(&feats, (25, 25)).unwrap();
        assert_eq!(same.features.frames, feats.frames);
        assert_eq!(same.regions.len(), 2);

        assert!(apply_delete(&feats, (90, 110)).is_err());
        assert!(apply_delete(&feats, (60, 40)).is_err());
    }

    #[test]
    fn replace_keeps_untouched_frames_bit_identical() {
        let record = test_record("the quick brown fox", 48);
        let feats = test_feats(48, 2);
        let model = tiny_model();
        let tok = Tokenizer::default();
        let table = DurationTable::uniform(3.0);
        // same word count and same token count keeps the span length
        let out = apply_replace(
            &record,
            &feats,
            Span::Words(1, 2),
            "quiet",
            EmotionLabel::Sad,
            &model,
            &tok,
            &table,
        )
        .unwrap();
        assert_eq!(out.features.len(), 48);
        let spans = record.word_spans.as_ref().unwrap();
        let (a, b) = (spans[1].1, spans[1].2);
        for t in 0..48 {
            if t < a || t >= b {
                assert_eq!(
                    out.features.frames.row(t),
                    feats.frames.row(t),
                    "frame {t} should be untouched"
                );
            }
        }
        let gen: Vec<&Region> = out.generated_regions().collect();
        assert_eq!(gen.len(), 1);
        assert_eq!((gen[0].start, gen[0].end), (a, b));
        assert_eq!(gen[0].emotion, Some(EmotionLabel::Sad));
    }

    #[test]
    fn replace_resizes_by_duration_when_tokens_change() {
        let record = test_record("one two three", 36);
        let feats = test_feats(36, 3);
        let model = tiny_model();
        let tok = Tokenizer::default();
        let table = DurationTable::uniform(4.0);
        // "two" (3 letters) -> longer phrase; token counts differ
        let out = apply_replace(
            &record,
            &feats,
            Span::Words(1, 2),
            "twenty two",
            EmotionLabel::Happy,
            &model,
            &tok,
            &table,
        )
        .unwrap();
        let region_tokens = tok.tokenize("twenty two").unwrap();
        let expect = estimate_duration(&region_tokens, &table).unwrap();
        let gen: Vec<&Region> = out.generated_regions().collect();
        assert_eq!(gen[0].end - gen[0].start, expect);
        assert_eq!(out.features.len(), 36 - 12 + expect);
        out.validate().unwrap();
    }

    #[test]
    fn insert_length_law_and_emotion_variants_differ() {
        let record = test_record("alpha beta", 24);
        let feats = test_feats(24, 4);
        let model = tiny_model();
        let tok = Tokenizer::default();
        let table = DurationTable::uniform(2.0);
        let text = "colorful light";
        let n_tokens = tok.tokenize(text).unwrap().len();
        let expect = ((n_tokens as f64 * 2.0).round() as usize).max(1);

        let mut outputs = Vec::new();
        for e in EmotionLabel::ALL {
            let out = apply_insert(
                &record,
                &feats,
                Position::Word(1),
                text,
                e,
                &model,
                &tok,
                &table,
            )
            .unwrap();
            assert_eq!(out.features.len(), 24 + expect);
            // outside the generated region everything matches the source
            let gen: Vec<&Region> = out.generated_regions().collect();
            assert_eq!(gen.len(), 1);
            let (ga, gb) = (gen[0].start, gen[0].end);
            assert_eq!(gb - ga, expect);
            for t in 0..ga {
                assert_eq!(out.features.frames.row(t), feats.frames.row(t));
            }
            for t in gb..out.features.len() {
                assert_eq!(
                    out.features.frames.row(t),
                    feats.frames.row(t - expect)
                );
            }
            outputs.push(out.features.frames.slice(ndarray::s![ga..gb, ..]).to_owned());
        }
        // pairwise mean absolute difference strictly positive
        for i in 0..outputs.len() {
            for j in i + 1..outputs.len() {
                let mad = (&outputs[i] - &outputs[j]).mapv(f64::abs).mean().unwrap();
                assert!(mad > 0.0, "emotions {i} and {j} produced identical audio");
            }
        }
    }

    #[test]
    fn insert_empty_text_is_identity() {
        let record = test_record("alpha beta", 24);
        let feats = test_feats(24, 5);
        let model = tiny_model();
        let tok = Tokenizer::default();
        let table = DurationTable::uniform(2.0);
        let out = apply_insert(
            &record,
            &feats,
            Position::Word(1),
            "   ",
            EmotionLabel::Angry,
            &model,
            &tok,
            &table,
        )
        .unwrap();
        assert_eq!(out.features.frames, feats.frames);
        assert!(out.generated_regions().next().is_none());
    }

    #[test]
    fn insert_inside_word_is_rejected() {
        let record = test_record("alpha beta", 24);
        let feats = test_feats(24, 6);
        let model = tiny_model();
        let tok = Tokenizer::default();
        let table = DurationTable::uniform(2.0);
        let spans = record.word_spans.as_ref().unwrap();
        let inside = spans[0].1 + 3;
        let err = apply_insert(
            &record,
            &feats,
            Position::Frame(inside),
            "gamma",
            EmotionLabel::Neutral,
            &model,
            &tok,
            &table,
        );
        assert!(err.is_err());
        // boundaries are fine: word starts and the sequence end
        for f in [0, spans[1].1, 24] {
            apply_insert(
                &record,
                &feats,
                Position::Frame(f),
                "gamma",
                EmotionLabel::Neutral,
                &model,
                &tok,
                &table,
            )
            .unwrap();
        }
    }

    #[test]
    fn duration_table_means_and_fallback() {
        let table = DurationTable {
            per_token: [(10u32, 8.0), (11u32, 8.0)].into_iter().collect(),
            global: 5.0,
        };
        // ten tokens at eight frames each
        let tokens = vec![10u32, 11, 10, 11, 10, 11, 10, 11, 10, 11];
        assert_eq!(estimate_duration(&tokens, &table).unwrap(), 80);
        // unseen token falls back to the global mean
        assert_eq!(estimate_duration(&[99u32], &table).unwrap(), 5);
        assert!(estimate_duration(&[], &table).is_err());
        // tiny means still clamp to one frame
        let table = DurationTable::uniform(0.01);
        assert_eq!(estimate_duration(&[7u32], &table).unwrap(), 1);
    }

    #[test]
    fn duration_table_from_manifest_word_spans() {
        let tok = Tokenizer::default();
        let mut rec = test_record("aa bb", 20);
        // 'aa' covers 10 frames over 2 tokens, 'bb' covers 10 over 2
        rec.word_spans = Some(vec![
            WordSpan("aa".into(), 0, 10),
            WordSpan("bb".into(), 10, 20),
        ]);
        let manifest = Manifest::new(
            vec![rec],
            crate::corpus::Split::Train,
            crate::corpus::Provenance::Original,
        );
        let table = DurationTable::from_manifest(&manifest, &tok).unwrap();
        let a_id = tok.tokenize_word("a").unwrap()[0];
        assert!((table.frames_per_token(a_id) - 5.0).abs() < 1e-12);
        assert!((table.global - 5.0).abs() < 1e-12);
    }

    #[test]
    fn script_round_trip_and_schema_errors() {
        let script = EditScript {
            ops: vec![
                EditOp::Replace {
                    span_words: Some([1, 2]),
                    span_frames: None,
                    text: "louder".into(),
                    emotion: EmotionLabel::Angry,
                },
                EditOp::Delete {
                    span_words: None,
                    span_frames: Some([0, 4]),
                },
            ],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("script.json");
        script.save(&path).unwrap();
        let loaded = EditScript::load(&path).unwrap();
        assert_eq!(loaded, script);
        assert!(!loaded.model_free());

        let json = std::fs::read_to_string(&path).unwrap();
        assert!(json.contains("\"type\": \"replace\""));
        assert!(json.contains("\"emotion\": \"angry\""));

        std::fs::write(&path, "{\"ops\": [{\"type\": \"launch\"}]}").unwrap();
        assert!(EditScript::load(&path).is_err());
        std::fs::write(&path, "{\"ops\": ").unwrap();
        let err = EditScript::load(&path).unwrap_err();
        assert!(format!("{err}").contains("line"), "{err}");
    }

    #[test]
    fn multi_op_script_applies_back_to_front() {
        let record = test_record("one two three four", 40);
        let feats = test_feats(40, 7);
        let model = tiny_model();
        let tok = Tokenizer::default();
        let table = DurationTable::uniform(2.0);
        let script = EditScript {
            ops: vec![
                EditOp::Delete {
                    span_words: Some([0, 1]),
                    span_frames: None,
                },
                EditOp::Replace {
                    span_words: Some([2, 3]),
                    span_frames: None,
                    text: "seven".into(),
                    emotion: EmotionLabel::Surprise,
                },
            ],
        };
        let out = apply_script(&record, &feats, &script, Some(&model), &tok, &table).unwrap();
        out.validate().unwrap();
        // word 'one' (frames 0..10) dropped; 'three' (20..30) regenerated
        let gen: Vec<&Region> = out.generated_regions().collect();
        assert_eq!(gen.len(), 1);
        assert_eq!((gen[0].start, gen[0].end), (10, 20));
        // 'two' and 'four' intact
        for t in 0..10 {
            assert_eq!(out.features.frames.row(t), feats.frames.row(t + 10));
        }
        for t in 20..out.features.len() {
            assert_eq!(out.features.frames.row(t), feats.frames.row(t + 10));
        }
    }

    #[test]
    fn overlapping_ops_are_rejected() {
        let record = test_record("one two three four", 40);
        let feats = test_feats(40, 8);
        let tok = Tokenizer::default();
        let table = DurationTable::uniform(2.0);
        let script = EditScript {
            ops: vec![
                EditOp::Delete {
                    span_words: Some([0, 2]),
                    span_frames: None,
                },
                EditOp::Delete {
                    span_words: Some([1, 3]),
                    span_frames: None,
                },
            ],
        };
        let err = apply_script(&record, &feats, &script, None, &tok, &table).unwrap_err();
        assert!(format!("{err}").contains("overlap"), "{err}");
    }

    #[test]
    fn delete_only_script_needs_no_model() {
        let record = test_record("one two three four", 40);
        let feats = test_feats(40, 9);
        let tok = Tokenizer::default();
        let table = DurationTable::uniform(2.0);
        let script = EditScript {
            ops: vec![EditOp::Delete {
                span_words: Some([1, 2]),
                span_frames: None,
            }],
        };
        assert!(script.model_free());
        let out = apply_script(&record, &feats, &script, None, &tok, &table).unwrap();
        assert_eq!(out.features.len(), 30);
    }
}
