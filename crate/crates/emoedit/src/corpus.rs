//! Corpus ingestion, tokenization, and train/val/test splitting.
//!
//! Two corpus layouts are understood: an emotional corpus organized as
//! `root/<speaker>/<Emotion>/<utt>.wav` with one transcript file per
//! speaker, and a neutral corpus organized as `root/<speaker>/<utt>.wav`
//! whose records are all labeled neutral regardless of content. Manifests
//! are JSON Lines, one utterance per line.

use std::collections::BTreeMap;
use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The closed emotion label set, in canonical id order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmotionLabel {
    Neutral,
    Happy,
    Sad,
    Angry,
    Surprise,
}

pub const EMOTION_COUNT: usize = 5;

impl EmotionLabel {
    pub const ALL: [EmotionLabel; EMOTION_COUNT] = [
        EmotionLabel::Neutral,
        EmotionLabel::Happy,
        EmotionLabel::Sad,
        EmotionLabel::Angry,
        EmotionLabel::Surprise,
    ];

    pub fn id(self) -> usize {
        match self {
            EmotionLabel::Neutral => 0,
            EmotionLabel::Happy => 1,
            EmotionLabel::Sad => 2,
            EmotionLabel::Angry => 3,
            EmotionLabel::Surprise => 4,
        }
    }

    pub fn from_id(id: usize) -> Result<EmotionLabel> {
        Self::ALL
            .get(id)
            .copied()
            .ok_or_else(|| Error::InvalidInput(format!("emotion id {id} out of range 0..5")))
    }

    pub fn one_hot(self) -> [f64; EMOTION_COUNT] {
        let mut v = [0.0; EMOTION_COUNT];
        v[self.id()] = 1.0;
        v
    }

    pub fn name(self) -> &'static str {
        match self {
            EmotionLabel::Neutral => "neutral",
            EmotionLabel::Happy => "happy",
            EmotionLabel::Sad => "sad",
            EmotionLabel::Angry => "angry",
            EmotionLabel::Surprise => "surprise",
        }
    }

    /// Case-insensitive name lookup; anything outside the five labels is
    /// rejected.
    pub fn parse(name: &str) -> Result<EmotionLabel> {
        match name.to_ascii_lowercase().as_str() {
            "neutral" => Ok(EmotionLabel::Neutral),
            "happy" => Ok(EmotionLabel::Happy),
            "sad" => Ok(EmotionLabel::Sad),
            "angry" => Ok(EmotionLabel::Angry),
            "surprise" => Ok(EmotionLabel::Surprise),
            other => Err(Error::Corpus(format!("unknown emotion \"{other}\""))),
        }
    }
}

impl fmt::Display for EmotionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Female,
    Male,
    Unknown,
}

/// Word-level alignment: `(word, start_frame, end_frame)`, end exclusive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordSpan(pub String, pub usize, pub usize);

impl WordSpan {
    pub fn word(&self) -> &str {
        &self.0
    }
    pub fn start_frame(&self) -> usize {
        self.1
    }
    pub fn end_frame(&self) -> usize {
        self.2
    }
}

/// One utterance with transcript, token ids, and optional word alignments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceRecord {
    pub utt_id: String,
    pub speaker_id: String,
    pub gender: Gender,
    pub emotion: EmotionLabel,
    pub text: String,
    pub tokens: Vec<u32>,
    pub wav_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub word_spans: Option<Vec<WordSpan>>,
}

impl UtteranceRecord {
    pub fn validate(&self) -> Result<()> {
        if self.tokens.is_empty() {
            return Err(Error::Corpus(format!("{}: empty token sequence", self.utt_id)));
        }
        if let Some(spans) = &self.word_spans {
            let mut prev_end = 0usize;
            for s in spans {
                if s.start_frame() >= s.end_frame() {
                    return Err(Error::Corpus(format!(
                        "{}: word span \"{}\" is empty or reversed",
                        self.utt_id,
                        s.word()
                    )));
                }
                if s.start_frame() < prev_end {
                    return Err(Error::Corpus(format!(
                        "{}: word spans overlap at \"{}\"",
                        self.utt_id,
                        s.word()
                    )));
                }
                prev_end = s.end_frame();
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Original,
    F0Augmented,
    NeutralMerged,
}

/// An ordered set of utterance records with unique ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub records: Vec<UtteranceRecord>,
    pub split: Split,
    pub provenance: Provenance,
}

impl Manifest {
    pub fn new(records: Vec<UtteranceRecord>, split: Split, provenance: Provenance) -> Self {
        Manifest {
            records,
            split,
            provenance,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for r in &self.records {
            r.validate()?;
            if !seen.insert(r.utt_id.as_str()) {
                return Err(Error::Corpus(format!("duplicate utt_id {}", r.utt_id)));
            }
        }
        Ok(())
    }

    pub fn speakers(&self) -> Vec<String> {
        let set: HashSet<&str> = self.records.iter().map(|r| r.speaker_id.as_str()).collect();
        let mut v: Vec<String> = set.into_iter().map(String::from).collect();
        v.sort();
        v
    }

    pub fn by_emotion(&self, emotion: EmotionLabel) -> Vec<&UtteranceRecord> {
        self.records.iter().filter(|r| r.emotion == emotion).collect()
    }

    /// Write as JSON Lines: one record per line, UTF-8. Split and
    /// provenance are carried by context (file naming), not by the lines.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        for r in &self.records {
            let line = serde_json::to_string(r)
                .map_err(|e| Error::Corpus(format!("serialize {}: {e}", r.utt_id)))?;
            buf.extend_from_slice(line.as_bytes());
            buf.push(b'\n');
        }
        crate::util::atomic_write(path, &buf)
    }

    pub fn load(path: &Path, split: Split, provenance: Provenance) -> Result<Manifest> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let reader = BufReader::new(file);
        let mut records = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let r: UtteranceRecord = serde_json::from_str(&line).map_err(|e| {
                Error::Corpus(format!("{}:{}: bad manifest line: {e}", path.display(), i + 1))
            })?;
            records.push(r);
        }
        let m = Manifest::new(records, split, provenance);
        m.validate()?;
        Ok(m)
    }
}

/// Lowercase, keep letters, digits, apostrophes and spaces, collapse runs
/// of whitespace. The result is what tokenization and word indexing see.
pub fn normalize_text(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut last_space = true;
    for ch in text.chars() {
        let ch = ch.to_ascii_lowercase();
        if ch.is_ascii_lowercase() || ch.is_ascii_digit() || ch == '\'' {
            out.push(ch);
            last_space = false;
        } else if ch.is_whitespace() && !last_space {
            out.push(' ');
            last_space = true;
        }
    }
    while out.ends_with(' ') {
        out.pop();
    }
    out
}

/// Words of the normalized text, in order.
pub fn words(text: &str) -> Vec<String> {
    normalize_text(text)
        .split(' ')
        .filter(|w| !w.is_empty())
        .map(String::from)
        .collect()
}

/// Reserved token ids shared by both tokenizer modes.
pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const SPACE_ID: u32 = 2;

const GRAPHEME_BASE: u32 = 3;

/// Text-to-token mapping. Grapheme mode covers `[a-z0-9']` plus a word
/// separator and needs no external resources; lexicon mode maps whole
/// words to phone id sequences from a user-supplied table.
#[derive(Debug, Clone)]
pub enum Tokenizer {
    Grapheme,
    Lexicon {
        /// word -> phone ids (ids start after the reserved range)
        entries: IndexMap<String, Vec<u32>>,
        /// phone symbol table, index = id - 3
        symbols: Vec<String>,
    },
}

impl Default for Tokenizer {
    fn default() -> Self {
        Tokenizer::Grapheme
    }
}

impl Tokenizer {
    /// Number of distinct token ids (embedding table size).
    pub fn vocab_size(&self) -> usize {
        match self {
            // pad + unk + space + 26 letters + 10 digits + apostrophe
            Tokenizer::Grapheme => GRAPHEME_BASE as usize + 26 + 10 + 1,
            Tokenizer::Lexicon { symbols, .. } => GRAPHEME_BASE as usize + symbols.len(),
        }
    }

    /// Map normalized text to token ids. Words are joined by [`SPACE_ID`];
    /// symbols outside the table become [`UNK_ID`]. Empty or
    /// whitespace-only text is an error.
    pub fn tokenize(&self, text: &str) -> Result<Vec<u32>> {
        let norm = normalize_text(text);
        if norm.is_empty() {
            return Err(Error::InvalidInput(
                "cannot tokenize empty or whitespace-only text".into(),
            ));
        }
        let mut out = Vec::new();
        for (i, word) in norm.split(' ').enumerate() {
            if i > 0 {
                out.push(SPACE_ID);
            }
            match self {
                Tokenizer::Grapheme => {
                    for ch in word.chars() {
                        out.push(grapheme_id(ch));
                    }
                }
                Tokenizer::Lexicon { entries, .. } => match entries.get(word) {
                    Some(ids) => out.extend_from_slice(ids),
                    None => out.push(UNK_ID),
                },
            }
        }
        Ok(out)
    }

    /// Token ids for one word (no separators). Used when splicing new words
    /// into an existing utterance.
    pub fn tokenize_word(&self, word: &str) -> Result<Vec<u32>> {
        self.tokenize(word)
    }

    /// Load a lexicon file: one `word<TAB>phone phone ...` entry per line,
    /// `#` comments allowed. Phone ids are assigned in first-seen order.
    pub fn from_lexicon_file(path: &Path) -> Result<Tokenizer> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut entries = IndexMap::new();
        let mut symbols: Vec<String> = Vec::new();
        let mut symbol_ids: IndexMap<String, u32> = IndexMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (word, phones) = line.split_once('\t').ok_or_else(|| {
                Error::Corpus(format!(
                    "{}:{}: lexicon line needs word<TAB>phones",
                    path.display(),
                    i + 1
                ))
            })?;
            let word = normalize_text(word);
            let mut ids = Vec::new();
            for ph in phones.split_whitespace() {
                let next = GRAPHEME_BASE + symbol_ids.len() as u32;
                let id = *symbol_ids.entry(ph.to_string()).or_insert_with(|| {
                    symbols.push(ph.to_string());
                    next
                });
                ids.push(id);
            }
            if ids.is_empty() {
                return Err(Error::Corpus(format!(
                    "{}:{}: lexicon entry \"{word}\" has no phones",
                    path.display(),
                    i + 1
                )));
            }
            entries.insert(word, ids);
        }
        Ok(Tokenizer::Lexicon { entries, symbols })
    }
}

fn grapheme_id(ch: char) -> u32 {
    match ch {
        'a'..='z' => GRAPHEME_BASE + (ch as u32 - 'a' as u32),
        '0'..='9' => GRAPHEME_BASE + 26 + (ch as u32 - '0' as u32),
        '\'' => GRAPHEME_BASE + 36,
        _ => UNK_ID,
    }
}

/// Transcript file: `utt_id<TAB>text` per line; later fields, if any, are
/// ignored so ESD-style `utt<TAB>text<TAB>emotion` files work unchanged.
fn read_transcripts(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let utt = fields.next().unwrap_or_default().trim();
        let txt = fields.next().unwrap_or_default().trim();
        if utt.is_empty() || txt.is_empty() {
            return Err(Error::Corpus(format!(
                "{}:{}: transcript line needs utt_id<TAB>text",
                path.display(),
                i + 1
            )));
        }
        map.insert(utt.to_string(), txt.to_string());
    }
    Ok(map)
}

/// Optional `speakers.tsv` at the corpus root: `speaker_id<TAB>gender`.
fn read_speaker_genders(root: &Path) -> Result<BTreeMap<String, Gender>> {
    let path = root.join("speakers.tsv");
    let mut map = BTreeMap::new();
    if !path.exists() {
        return Ok(map);
    }
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some((spk, g)) = line.split_once('\t') {
            let gender = match g.trim().to_ascii_lowercase().as_str() {
                "f" | "female" => Gender::Female,
                "m" | "male" => Gender::Male,
                _ => Gender::Unknown,
            };
            map.insert(spk.trim().to_string(), gender);
        }
    }
    Ok(map)
}

/// Optional `<utt>.align` sidecar: `word start_frame end_frame` per line.
fn read_word_spans(path: &Path) -> Result<Option<Vec<WordSpan>>> {
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut spans = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(Error::Corpus(format!(
                "{}:{}: alignment line needs word start_frame end_frame",
                path.display(),
                i + 1
            )));
        }
        let start: usize = parts[1].parse().map_err(|_| {
            Error::Corpus(format!("{}:{}: bad start frame", path.display(), i + 1))
        })?;
        let end: usize = parts[2].parse().map_err(|_| {
            Error::Corpus(format!("{}:{}: bad end frame", path.display(), i + 1))
        })?;
        spans.push(WordSpan(parts[0].to_string(), start, end));
    }
    Ok(Some(spans))
}

fn wav_stems(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if path.extension().and_then(|s| s.to_str()) == Some("wav") {
            let stem = path
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| Error::Corpus(format!("{}: non-UTF8 file name", path.display())))?
                .to_string();
            out.push((stem, path));
        }
    }
    out.sort();
    Ok(out)
}

fn subdirs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if path.is_dir() {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn dir_name(path: &Path) -> Result<String> {
    Ok(path
        .file_name()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::Corpus(format!("{}: non-UTF8 directory name", path.display())))?
        .to_string())
}

/// Ingest an emotional corpus laid out as
/// `root/<speaker>/<Emotion>/<utt>.wav`, with one `<speaker>.txt`
/// transcript file inside each speaker directory. Emotion directory names
/// must parse (case-insensitively) as one of the five labels.
pub fn ingest_emotional_corpus(root: &Path, tokenizer: &Tokenizer) -> Result<Manifest> {
    let genders = read_speaker_genders(root)?;
    let mut records = Vec::new();
    for speaker_dir in subdirs(root)? {
        let speaker = dir_name(&speaker_dir)?;
        let transcript_path = speaker_dir.join(format!("{speaker}.txt"));
        if !transcript_path.exists() {
            return Err(Error::Corpus(format!(
                "speaker {speaker}: missing transcript file {}",
                transcript_path.display()
            )));
        }
        let transcripts = read_transcripts(&transcript_path)?;
        let gender = genders.get(&speaker).copied().unwrap_or(Gender::Unknown);
        for emotion_dir in subdirs(&speaker_dir)? {
            let emo_name = dir_name(&emotion_dir)?;
            let emotion = EmotionLabel::parse(&emo_name).map_err(|_| {
                Error::Corpus(format!(
                    "speaker {speaker}: unknown emotion directory \"{emo_name}\""
                ))
            })?;
            for (stem, wav_path) in wav_stems(&emotion_dir)? {
                let text = transcripts.get(&stem).ok_or_else(|| {
                    Error::Corpus(format!("no transcript for {stem} ({})", wav_path.display()))
                })?;
                let word_spans = read_word_spans(&wav_path.with_extension("align"))?;
                records.push(UtteranceRecord {
                    utt_id: stem,
                    speaker_id: speaker.clone(),
                    gender,
                    emotion,
                    text: text.clone(),
                    tokens: tokenizer.tokenize(text)?,
                    wav_path,
                    word_spans,
                });
            }
        }
    }
    records.sort_by(|a, b| a.utt_id.cmp(&b.utt_id));
    let m = Manifest::new(records, Split::Train, Provenance::Original);
    m.validate()?;
    Ok(m)
}

/// Ingest a neutral corpus laid out as `root/<speaker>/<utt>.wav` with a
/// `<speaker>.txt` transcript per speaker. Every record is labeled
/// neutral. An empty root yields an empty manifest with a warning.
pub fn ingest_neutral_corpus(root: &Path, tokenizer: &Tokenizer) -> Result<Manifest> {
    let genders = read_speaker_genders(root)?;
    let mut records = Vec::new();
    let speaker_dirs = subdirs(root)?;
    if speaker_dirs.is_empty() {
        log::warn!("neutral corpus root {} has no speaker directories", root.display());
    }
    for speaker_dir in speaker_dirs {
        let speaker = dir_name(&speaker_dir)?;
        let transcript_path = speaker_dir.join(format!("{speaker}.txt"));
        if !transcript_path.exists() {
            return Err(Error::Corpus(format!(
                "speaker {speaker}: missing transcript file {}",
                transcript_path.display()
            )));
        }
        let transcripts = read_transcripts(&transcript_path)?;
        let gender = genders.get(&speaker).copied().unwrap_or(Gender::Unknown);
        for (stem, wav_path) in wav_stems(&speaker_dir)? {
            let text = transcripts.get(&stem).ok_or_else(|| {
                Error::Corpus(format!("no transcript for {stem} ({})", wav_path.display()))
            })?;
            let word_spans = read_word_spans(&wav_path.with_extension("align"))?;
            records.push(UtteranceRecord {
                utt_id: stem,
                speaker_id: speaker.clone(),
                gender,
                emotion: EmotionLabel::Neutral,
                text: text.clone(),
                tokens: tokenizer.tokenize(text)?,
                wav_path,
                word_spans,
            });
        }
    }
    records.sort_by(|a, b| a.utt_id.cmp(&b.utt_id));
    let m = Manifest::new(records, Split::Train, Provenance::Original);
    m.validate()?;
    Ok(m)
}

/// Partition a manifest: all records of `held_out_speakers` become the
/// test set; the remainder is shuffled with `seed` and split
/// `val_fraction` / `1 - val_fraction` into val and train.
pub fn make_splits(
    m: &Manifest,
    held_out_speakers: &[String],
    val_fraction: f64,
    seed: u64,
) -> Result<(Manifest, Manifest, Manifest)> {
    if !(0.0..=1.0).contains(&val_fraction) {
        return Err(Error::InvalidInput(format!(
            "val_fraction {val_fraction} outside [0, 1]"
        )));
    }
    let present: HashSet<&str> = m.records.iter().map(|r| r.speaker_id.as_str()).collect();
    for spk in held_out_speakers {
        if !present.contains(spk.as_str()) {
            return Err(Error::Corpus(format!(
                "held-out speaker {spk} not present in manifest"
            )));
        }
    }
    let held: HashSet<&str> = held_out_speakers.iter().map(String::as_str).collect();
    let mut test_records = Vec::new();
    let mut rest = Vec::new();
    for r in &m.records {
        if held.contains(r.speaker_id.as_str()) {
            test_records.push(r.clone());
        } else {
            rest.push(r.clone());
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rest.shuffle(&mut rng);
    let n_val = (rest.len() as f64 * val_fraction).round() as usize;
    let mut val_records: Vec<UtteranceRecord> = rest.drain(..n_val).collect();
    let mut train_records = rest;
    train_records.sort_by(|a, b| a.utt_id.cmp(&b.utt_id));
    val_records.sort_by(|a, b| a.utt_id.cmp(&b.utt_id));
    Ok((
        Manifest::new(train_records, Split::Train, m.provenance),
        Manifest::new(val_records, Split::Val, m.provenance),
        Manifest::new(test_records, Split::Test, m.provenance),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{save_wav, Waveform, SAMPLE_RATE};

    fn tiny_wav(path: &Path) {
        let samples: Vec<f64> = (0..800)
            .map(|i| 0.2 * (2.0 * std::f64::consts::PI * 200.0 * i as f64 / 16000.0).sin())
            .collect();
        save_wav(&Waveform::new(samples, SAMPLE_RATE), path).unwrap();
    }

    fn build_emotional(root: &Path, speakers: &[&str], emotions: &[&str], clips: usize) {
        for spk in speakers {
            let spk_dir = root.join(spk);
            std::fs::create_dir_all(&spk_dir).unwrap();
            let mut transcript = String::new();
            for emo in emotions {
                let emo_dir = spk_dir.join(emo);
                std::fs::create_dir_all(&emo_dir).unwrap();
                for c in 0..clips {
                    let utt = format!("{spk}_{emo}_{c:03}");
                    tiny_wav(&emo_dir.join(format!("{utt}.wav")));
                    transcript.push_str(&format!("{utt}\tthe quick brown fox\n"));
                }
            }
            std::fs::write(spk_dir.join(format!("{spk}.txt")), transcript).unwrap();
        }
    }

    #[test]
    fn emotion_label_ids_and_one_hot() {
        for (i, e) in EmotionLabel::ALL.iter().enumerate() {
            assert_eq!(e.id(), i);
            let oh = e.one_hot();
            assert_eq!(oh.iter().sum::<f64>(), 1.0);
            assert_eq!(oh[i], 1.0);
            assert_eq!(EmotionLabel::from_id(i).unwrap(), *e);
        }
        assert_eq!(EmotionLabel::parse("HAPPY").unwrap(), EmotionLabel::Happy);
        assert_eq!(EmotionLabel::parse("Surprise").unwrap(), EmotionLabel::Surprise);
        assert!(EmotionLabel::parse("fear").is_err());
        assert!(EmotionLabel::from_id(5).is_err());
    }

    #[test]
    fn grapheme_tokenizer_basics() {
        let tok = Tokenizer::default();
        // same symbol maps to the same id
        let aa = tok.tokenize("aa").unwrap();
        assert_eq!(aa.len(), 2);
        assert_eq!(aa[0], aa[1]);
        // one id per grapheme of a single word
        assert_eq!(tok.tokenize("hello").unwrap().len(), 5);
        // words joined by the space id
        let two = tok.tokenize("ab cd").unwrap();
        assert_eq!(two.len(), 5);
        assert_eq!(two[2], SPACE_ID);
        // normalization folds case and punctuation
        assert_eq!(
            tok.tokenize("Hello, WORLD!").unwrap(),
            tok.tokenize("hello world").unwrap()
        );
        assert!(tok.tokenize("").is_err());
        assert!(tok.tokenize("   ").is_err());
        assert!(tok.tokenize("?!.").is_err());
        // ids stay below the declared vocab size and off the pad id
        let ids = tok.tokenize("it's 42 o'clock").unwrap();
        assert!(ids.iter().all(|&i| (i as usize) < tok.vocab_size() && i != PAD_ID));
    }

    #[test]
    fn lexicon_tokenizer_maps_words_to_phones() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lex.txt");
        std::fs::write(&path, "hello\thh ah l ow\nworld\tw er l d\n").unwrap();
        let tok = Tokenizer::from_lexicon_file(&path).unwrap();
        // distinct phones: hh ah l ow w er d ("l" is shared)
        assert_eq!(tok.vocab_size(), 3 + 7);
        let ids = tok.tokenize("hello world").unwrap();
        assert_eq!(ids.len(), 4 + 1 + 4);
        assert_eq!(ids[4], SPACE_ID);
        // unknown word becomes UNK, not an error
        assert_eq!(tok.tokenize("zebra").unwrap(), vec![UNK_ID]);
    }

    #[test]
    fn normalize_and_words() {
        assert_eq!(normalize_text("  The, QUICK!  fox.  "), "the quick fox");
        assert_eq!(words("One two, three!"), vec!["one", "two", "three"]);
        assert_eq!(words("don't stop"), vec!["don't", "stop"]);
    }

    #[test]
    fn ingest_emotional_counts_and_labels() {
        let dir = tempfile::tempdir().unwrap();
        build_emotional(
            dir.path(),
            &["s1", "s2"],
            &["Neutral", "Happy", "Sad", "Angry", "Surprise"],
            3,
        );
        std::fs::write(dir.path().join("speakers.tsv"), "s1\tfemale\ns2\tmale\n").unwrap();
        let tok = Tokenizer::default();
        let m = ingest_emotional_corpus(dir.path(), &tok).unwrap();
        assert_eq!(m.len(), 2 * 5 * 3);
        for e in EmotionLabel::ALL {
            assert_eq!(m.by_emotion(e).len(), 6);
        }
        let s1: Vec<_> = m.records.iter().filter(|r| r.speaker_id == "s1").collect();
        assert!(s1.iter().all(|r| r.gender == Gender::Female));
        assert!(m.records.iter().all(|r| !r.tokens.is_empty()));
        assert!(m.records.iter().all(|r| r.wav_path.exists()));
        // deterministic ordering
        let again = ingest_emotional_corpus(dir.path(), &tok).unwrap();
        assert_eq!(m, again);
    }

    #[test]
    fn ingest_rejects_unknown_emotion_dir() {
        let dir = tempfile::tempdir().unwrap();
        build_emotional(dir.path(), &["s1"], &["Neutral", "Fear"], 1);
        let err = ingest_emotional_corpus(dir.path(), &Tokenizer::default())
            .unwrap_err()
            .to_string();
        assert!(err.contains("unknown emotion"), "got: {err}");
    }

    #[test]
    fn ingest_rejects_missing_transcript() {
        let dir = tempfile::tempdir().unwrap();
        let emo_dir = dir.path().join("s1/Happy");
        std::fs::create_dir_all(&emo_dir).unwrap();
        tiny_wav(&emo_dir.join("s1_happy_000.wav"));
        let err = ingest_emotional_corpus(dir.path(), &Tokenizer::default())
            .unwrap_err()
            .to_string();
        assert!(err.contains("missing transcript"), "got: {err}");
    }

    #[test]
    fn ingest_neutral_forces_neutral_label() {
        let dir = tempfile::tempdir().unwrap();
        for spk in ["p1", "p2", "p3"] {
            let spk_dir = dir.path().join(spk);
            std::fs::create_dir_all(&spk_dir).unwrap();
            let mut transcript = String::new();
            for c in 0..10 {
                let utt = format!("{spk}_{c:03}");
                tiny_wav(&spk_dir.join(format!("{utt}.wav")));
                transcript.push_str(&format!("{utt}\tsome words here\n"));
            }
            std::fs::write(spk_dir.join(format!("{spk}.txt")), transcript).unwrap();
        }
        let m = ingest_neutral_corpus(dir.path(), &Tokenizer::default()).unwrap();
        assert_eq!(m.len(), 30);
        assert!(m.records.iter().all(|r| r.emotion == EmotionLabel::Neutral));
    }

    #[test]
    fn ingest_neutral_empty_root_is_empty_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let m = ingest_neutral_corpus(dir.path(), &Tokenizer::default()).unwrap();
        assert!(m.is_empty());
    }

    #[test]
    fn word_spans_parse_and_validate() {
        let dir = tempfile::tempdir().unwrap();
        build_emotional(dir.path(), &["s1"], &["Happy"], 1);
        let wav = dir.path().join("s1/Happy/s1_Happy_000.wav");
        std::fs::write(wav.with_extension("align"), "the 0 10\nquick 10 25\nbrown 25 40\nfox 40 60\n")
            .unwrap();
        let m = ingest_emotional_corpus(dir.path(), &Tokenizer::default()).unwrap();
        let spans = m.records[0].word_spans.as_ref().unwrap();
        assert_eq!(spans.len(), 4);
        assert_eq!(spans[1].word(), "quick");
        assert_eq!(spans[1].start_frame(), 10);
        assert_eq!(spans[1].end_frame(), 25);

        // overlapping spans are rejected at validation
        std::fs::write(wav.with_extension("align"), "the 0 10\nquick 5 25\n").unwrap();
        assert!(ingest_emotional_corpus(dir.path(), &Tokenizer::default()).is_err());
    }

    fn synthetic_manifest(n_speakers: usize, per_speaker: usize) -> Manifest {
        let mut records = Vec::new();
        for s in 0..n_speakers {
            for c in 0..per_speaker {
                records.push(UtteranceRecord {
                    utt_id: format!("spk{s}_utt{c:03}"),
                    speaker_id: format!("spk{s}"),
                    gender: Gender::Unknown,
                    emotion: EmotionLabel::ALL[c % 5],
                    text: "a b".into(),
                    tokens: vec![3, 2, 4],
                    wav_path: PathBuf::from(format!("spk{s}_utt{c:03}.wav")),
                    word_spans: None,
                });
            }
        }
        Manifest::new(records, Split::Train, Provenance::Original)
    }

    #[test]
    fn splits_partition_exactly() {
        let m = synthetic_manifest(10, 10);
        let held = vec!["spk7".to_string()];
        let (train, val, test) = make_splits(&m, &held, 0.1, 42).unwrap();
        assert_eq!(test.len(), 10);
        assert_eq!(val.len(), 9);
        assert_eq!(train.len(), 81);
        assert!(test.records.iter().all(|r| r.speaker_id == "spk7"));
        // exact partition by utt_id
        let mut all: Vec<&str> = train
            .records
            .iter()
            .chain(&val.records)
            .chain(&test.records)
            .map(|r| r.utt_id.as_str())
            .collect();
        all.sort();
        let mut orig: Vec<&str> = m.records.iter().map(|r| r.utt_id.as_str()).collect();
        orig.sort();
        assert_eq!(all, orig);
    }

    #[test]
    fn splits_are_seed_deterministic() {
        let m = synthetic_manifest(6, 8);
        let held = vec!["spk0".to_string()];
        let a = make_splits(&m, &held, 0.2, 7).unwrap();
        let b = make_splits(&m, &held, 0.2, 7).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        assert_eq!(a.2, b.2);
        let c = make_splits(&m, &held, 0.2, 8).unwrap();
        assert_ne!(a.1.records, c.1.records, "different seed should shuffle differently");
    }

    #[test]
    fn splits_edge_cases() {
        let m = synthetic_manifest(4, 5);
        let (_, val, _) = make_splits(&m, &["spk1".to_string()], 0.0, 1).unwrap();
        assert!(val.is_empty());
        assert!(make_splits(&m, &["ghost".to_string()], 0.1, 1).is_err());
    }

    #[test]
    fn manifest_jsonl_round_trip_and_field_names() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = synthetic_manifest(2, 3);
        m.records[0].word_spans = Some(vec![WordSpan("a".into(), 0, 5), WordSpan("b".into(), 5, 9)]);
        let path = dir.path().join("m.jsonl");
        m.save(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let first = text.lines().next().unwrap();
        for field in ["utt_id", "speaker_id", "gender", "emotion", "text", "tokens", "wav_path", "word_spans"] {
            assert!(first.contains(&format!("\"{field}\"")), "missing field {field} in {first}");
        }
        // emotion serialized as its lowercase name
        assert!(text.contains("\"neutral\"") || text.contains("\"happy\""));
        let loaded = Manifest::load(&path, Split::Train, Provenance::Original).unwrap();
        assert_eq!(loaded.records, m.records);
    }

    #[test]
    fn manifest_rejects_duplicate_ids() {
        let mut m = synthetic_manifest(1, 2);
        m.records[1].utt_id = m.records[0].utt_id.clone();
        assert!(m.validate().is_err());
    }
}
