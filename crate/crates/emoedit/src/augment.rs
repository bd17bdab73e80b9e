//! Data augmentation: F0 perturbation of emotional speech and merging of
//! a neutral corpus into the training pool.
//!
//! Pitch shifting is resample-then-restretch: resampling by `2^(-s/12)`
//! moves F0 (and formants) by `2^(s/12)` while changing duration, and a
//! waveform-similarity overlap-add stretch restores the original length.

use std::path::Path;

use crate::corpus::{EmotionLabel, Manifest, Provenance};
use crate::error::{Error, Result};
use crate::signal::{load_wav, resample_by, save_wav, Waveform};

/// A pitch perturbation in semitones.
///
/// Augmentation copies must be nonzero and within ±6 semitones; the raw
/// [`pitch_shift`] operation tolerates a wider range for experiments (an
/// octave test is the classic sanity check).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ShiftSpec {
    pub semitones: f64,
}

impl ShiftSpec {
    pub fn new(semitones: f64) -> ShiftSpec {
        ShiftSpec { semitones }
    }

    /// The constraint applied to augmentation shift lists.
    pub fn validate_for_augmentation(&self) -> Result<()> {
        if !self.semitones.is_finite() {
            return Err(Error::InvalidInput("shift must be finite".into()));
        }
        if self.semitones == 0.0 {
            return Err(Error::InvalidInput(
                "zero shift would duplicate records; augmentation shifts must be nonzero".into(),
            ));
        }
        if self.semitones.abs() > 6.0 {
            return Err(Error::InvalidInput(format!(
                "augmentation shift {} outside [-6, +6] semitones",
                self.semitones
            )));
        }
        Ok(())
    }

    /// Suffix appended to augmented utt_ids, e.g. `#shift+2` or `#shift-3.5`.
    pub fn suffix(&self) -> String {
        format!("#shift{:+}", self.semitones)
    }
}

/// Shift pitch by `s.semitones` while preserving duration to within one
/// analysis hop. Formants shift along with F0.
pub fn pitch_shift(w: &Waveform, s: &ShiftSpec) -> Result<Waveform> {
    w.validate()?;
    if !s.semitones.is_finite() || s.semitones.abs() > 12.0 {
        return Err(Error::InvalidInput(format!(
            "pitch shift {} semitones is outside the supported ±12 range",
            s.semitones
        )));
    }
    if s.semitones == 0.0 {
        return Ok(w.clone());
    }
    let resampled = resample_by(&w.samples, 2f64.powf(-s.semitones / 12.0));
    let stretched = time_stretch_to(&resampled, w.len());
    Ok(Waveform::new(stretched, w.sample_rate))
}

/// Window length for the overlap-add stretch (25 ms at 16 kHz).
const WSOLA_WINDOW: usize = 400;
/// Search tolerance around the nominal analysis position.
const WSOLA_TOLERANCE: isize = 120;

/// Stretch `x` to exactly `target_len` samples without changing pitch.
/// Each synthesis frame copies the input segment (near its nominal
/// position) that best continues the previously copied one, so harmonic
/// waveforms stay phase-coherent across frame joins.
pub(crate) fn time_stretch_to(x: &[f64], target_len: usize) -> Vec<f64> {
    if target_len == 0 {
        return Vec::new();
    }
    if x.is_empty() {
        return vec![0.0; target_len];
    }
    let w = WSOLA_WINDOW.min(x.len());
    if x.len() <= w + 2 * WSOLA_TOLERANCE as usize || target_len <= w {
        // too short for a meaningful similarity search
        return stretch_linear(x, target_len);
    }
    let hs = w / 2;
    let ha = hs as f64 * x.len() as f64 / target_len as f64;
    let window: Vec<f64> = (0..w)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / w as f64).cos())
        .collect();
    let max_pos = (x.len() - w) as isize;

    let mut out = vec![0.0f64; target_len + w];
    let mut wsum = vec![0.0f64; target_len + w];
    let mut prev_pos: isize = 0;
    let mut k = 0usize;
    loop {
        let out_pos = k * hs;
        if out_pos >= target_len {
            break;
        }
        let nominal = ((k as f64 * ha).round() as isize).clamp(0, max_pos);
        let pos = if k == 0 {
            0
        } else {
            // the segment that would continue the previous copy seamlessly
            let natural = (prev_pos + hs as isize).clamp(0, max_pos);
            let reference = &x[natural as usize..natural as usize + w];
            let lo = (nominal - WSOLA_TOLERANCE).clamp(0, max_pos);
            let hi = (nominal + WSOLA_TOLERANCE).clamp(0, max_pos);
            let mut best = (lo, f64::NEG_INFINITY);
            for cand in lo..=hi {
                let seg = &x[cand as usize..cand as usize + w];
                let mut dot = 0.0;
                let mut energy = 0.0;
                for i in 0..w {
                    dot += seg[i] * reference[i];
                    energy += seg[i] * seg[i];
                }
                let score = dot / energy.sqrt().max(1e-12);
                if score > best.1 {
                    best = (cand, score);
                }
            }
            best.0
        };
        for i in 0..w {
            out[out_pos + i] += x[pos as usize + i] * window[i];
            wsum[out_pos + i] += window[i];
        }
        prev_pos = pos;
        k += 1;
    }
    for i in 0..target_len {
        out[i] /= wsum[i].max(0.5);
    }
    out.truncate(target_len);
    out
}

/// Plain linear-interpolation stretch for inputs too short for WSOLA.
fn stretch_linear(x: &[f64], target_len: usize) -> Vec<f64> {
    let scale = (x.len() - 1).max(1) as f64 / (target_len - 1).max(1) as f64;
    (0..target_len)
        .map(|i| {
            let t = i as f64 * scale;
            let j = (t.floor() as usize).min(x.len() - 1);
            let frac = t - j as f64;
            let next = x[(j + 1).min(x.len() - 1)];
            x[j] * (1.0 - frac) + next * frac
        })
        .collect()
}

/// Write pitch-shifted copies of every record for every shift in `shifts`,
/// returning the original records plus all copies (`|m| * (1 + n)` total).
/// Copies keep the source emotion, text, tokens, and alignments; their
/// utt_ids gain a `#shift{±s}` suffix and their WAVs land in `out_dir`.
pub fn augment_emotional(m: &Manifest, shifts: &[ShiftSpec], out_dir: &Path) -> Result<Manifest> {
    if shifts.is_empty() {
        return Err(Error::InvalidInput(
            "augmentation requires at least one shift".into(),
        ));
    }
    for s in shifts {
        s.validate_for_augmentation()?;
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut records = m.records.clone();
    for r in &m.records {
        let source = load_wav(&r.wav_path)?;
        for s in shifts {
            let shifted = pitch_shift(&source, s)?;
            let utt_id = format!("{}{}", r.utt_id, s.suffix());
            let wav_path = out_dir.join(format!("{utt_id}.wav"));
            save_wav(&shifted, &wav_path)?;
            let mut copy = r.clone();
            copy.utt_id = utt_id;
            copy.wav_path = wav_path;
            records.push(copy);
        }
    }
    records.sort_by(|a, b| a.utt_id.cmp(&b.utt_id));
    let out = Manifest::new(records, m.split, Provenance::F0Augmented);
    out.validate()?;
    Ok(out)
}

/// Concatenate a neutral corpus onto an emotional manifest. Colliding
/// utt_ids on the neutral side are prefixed to keep ids unique. The
/// neutral / non-neutral balance is logged, since the merge is expected
/// to skew the emotion distribution.
pub fn merge_neutral(emotional: &Manifest, neutral: &Manifest) -> Result<Manifest> {
    let existing: std::collections::HashSet<&str> =
        emotional.records.iter().map(|r| r.utt_id.as_str()).collect();
    let mut records = emotional.records.clone();
    for r in &neutral.records {
        let mut copy = r.clone();
        copy.emotion = EmotionLabel::Neutral;
        if existing.contains(copy.utt_id.as_str()) {
            copy.utt_id = format!("neutral#{}", copy.utt_id);
        }
        records.push(copy);
    }
    records.sort_by(|a, b| a.utt_id.cmp(&b.utt_id));
    let out = Manifest::new(records, emotional.split, Provenance::NeutralMerged);
    out.validate()?;
    let n_neutral = out.by_emotion(EmotionLabel::Neutral).len();
    let n_other = out.len() - n_neutral;
    log::info!(
        "merged manifest: {n_neutral} neutral vs {n_other} non-neutral records (ratio {:.2})",
        n_neutral as f64 / n_other.max(1) as f64
    );
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ingest_emotional_corpus, ingest_neutral_corpus, Tokenizer};
    use crate::signal::{estimate_f0_yin, FrameConfig, SAMPLE_RATE};
    use crate::synth::{generate_corpus, SynthSpec};

    fn tone(freq: f64, secs: f64) -> Waveform {
        let n = (secs * SAMPLE_RATE as f64) as usize;
        let samples = (0..n)
            .map(|i| 0.4 * (2.0 * std::f64::consts::PI * freq * i as f64 / SAMPLE_RATE as f64).sin())
            .collect();
        Waveform::new(samples, SAMPLE_RATE)
    }

    fn median_f0(w: &Waveform) -> f64 {
        estimate_f0_yin(w, &FrameConfig::default())
            .median_voiced()
            .expect("voiced")
    }

    #[test]
    fn shift_law_holds_within_one_percent() {
        let cfg = FrameConfig::default();
        let hop = cfg.hop_samples(SAMPLE_RATE);
        let src = tone(220.0, 0.5);
        let f_src = median_f0(&src);
        for &s in &[-4.0, -2.0, 2.0, 4.0] {
            let out = pitch_shift(&src, &ShiftSpec::new(s)).unwrap();
            assert!(
                (out.len() as isize - src.len() as isize).unsigned_abs() <= hop,
                "duration drifted by {} samples at {s} st",
                out.len() as isize - src.len() as isize
            );
            let want = f_src * 2f64.powf(s / 12.0);
            let got = median_f0(&out);
            assert!(
                (got - want).abs() / want < 0.01,
                "shift {s}: want {want:.2} Hz, got {got:.2} Hz"
            );
        }
    }

    #[test]
    fn octave_shift_doubles_f0() {
        let src = tone(220.0, 0.5);
        let up = pitch_shift(&src, &ShiftSpec::new(12.0)).unwrap();
        let got = median_f0(&up);
        assert!((got - 440.0).abs() <= 4.0, "got {got} Hz");
    }

    #[test]
    fn zero_shift_is_identity() {
        let src = tone(220.0, 0.4);
        let out = pitch_shift(&src, &ShiftSpec::new(0.0)).unwrap();
        assert_eq!(out.samples, src.samples);
    }

    #[test]
    fn shift_spec_validation() {
        assert!(ShiftSpec::new(2.0).validate_for_augmentation().is_ok());
        assert!(ShiftSpec::new(0.0).validate_for_augmentation().is_err());
        assert!(ShiftSpec::new(7.0).validate_for_augmentation().is_err());
        assert!(ShiftSpec::new(f64::NAN).validate_for_augmentation().is_err());
        assert!(pitch_shift(&tone(100.0, 0.1), &ShiftSpec::new(13.0)).is_err());
        assert_eq!(ShiftSpec::new(2.0).suffix(), "#shift+2");
        assert_eq!(ShiftSpec::new(-3.5).suffix(), "#shift-3.5");
    }

    fn tiny_corpus() -> (tempfile::TempDir, Manifest, Manifest) {
        let dir = tempfile::tempdir().unwrap();
        let spec = SynthSpec {
            emotional_speakers: 1,
            clips_per_emotion: 1,
            neutral_speakers: 1,
            clips_per_neutral_speaker: 3,
            min_words: 2,
            max_words: 2,
            seed: 13,
        };
        let emo_root = dir.path().join("emotional");
        let neu_root = dir.path().join("neutral");
        generate_corpus(&spec, &emo_root, &neu_root).unwrap();
        let tok = Tokenizer::default();
        let em = ingest_emotional_corpus(&emo_root, &tok).unwrap();
        let nm = ingest_neutral_corpus(&neu_root, &tok).unwrap();
        (dir, em, nm)
    }

    #[test]
    fn augment_multiplies_records_and_keeps_labels() {
        let (dir, em, _) = tiny_corpus();
        let out_dir = dir.path().join("augmented");
        let shifts = [ShiftSpec::new(-2.0), ShiftSpec::new(2.0)];
        let aug = augment_emotional(&em, &shifts, &out_dir).unwrap();
        assert_eq!(aug.len(), em.len() * 3);
        assert_eq!(aug.provenance, Provenance::F0Augmented);
        for r in &em.records {
            for s in &shifts {
                let id = format!("{}{}", r.utt_id, s.suffix());
                let copy = aug
                    .records
                    .iter()
                    .find(|c| c.utt_id == id)
                    .unwrap_or_else(|| panic!("missing {id}"));
                assert_eq!(copy.emotion, r.emotion);
                assert_eq!(copy.text, r.text);
                assert_eq!(copy.tokens, r.tokens);
                assert!(copy.wav_path.exists());
            }
        }
    }

    #[test]
    fn augment_rejects_empty_and_zero_shifts() {
        let (dir, em, _) = tiny_corpus();
        let out_dir = dir.path().join("augmented");
        assert!(augment_emotional(&em, &[], &out_dir).is_err());
        assert!(augment_emotional(&em, &[ShiftSpec::new(0.0)], &out_dir).is_err());
        assert!(augment_emotional(&em, &[ShiftSpec::new(2.0), ShiftSpec::new(0.0)], &out_dir).is_err());
    }

    #[test]
    fn augmented_audio_actually_shifts_f0() {
        let (dir, em, _) = tiny_corpus();
        let out_dir = dir.path().join("augmented");
        let aug = augment_emotional(&em, &[ShiftSpec::new(3.0)], &out_dir).unwrap();
        // compare one source/copy pair
        let src = em.records.iter().find(|r| r.utt_id.contains("neutral")).unwrap();
        let copy_id = format!("{}#shift+3", src.utt_id);
        let copy = aug.records.iter().find(|r| r.utt_id == copy_id).unwrap();
        let f_src = median_f0(&load_wav(&src.wav_path).unwrap());
        let f_copy = median_f0(&load_wav(&copy.wav_path).unwrap());
        let want = f_src * 2f64.powf(3.0 / 12.0);
        assert!(
            (f_copy - want).abs() / want < 0.02,
            "source {f_src:.1} Hz, copy {f_copy:.1} Hz, want {want:.1} Hz"
        );
    }

    #[test]
    fn merge_concatenates_and_prefixes_collisions() {
        let (_dir, em, nm) = tiny_corpus();
        let merged = merge_neutral(&em, &nm).unwrap();
        assert_eq!(merged.len(), em.len() + nm.len());
        assert_eq!(merged.provenance, Provenance::NeutralMerged);
        assert_eq!(
            merged.by_emotion(EmotionLabel::Neutral).len(),
            em.by_emotion(EmotionLabel::Neutral).len() + nm.len()
        );

        // force a collision: neutral manifest containing an emotional id
        let mut colliding = nm.clone();
        colliding.records[0].utt_id = em.records[0].utt_id.clone();
        let merged = merge_neutral(&em, &colliding).unwrap();
        assert_eq!(merged.len(), em.len() + nm.len());
        assert!(merged
            .records
            .iter()
            .any(|r| r.utt_id.starts_with("neutral#")));
    }

    #[test]
    fn merge_empty_neutral_is_identity_on_records() {
        let (_dir, em, _) = tiny_corpus();
        let empty = Manifest::new(Vec::new(), em.split, em.provenance);
        let merged = merge_neutral(&em, &empty).unwrap();
        assert_eq!(merged.records, em.records);
    }
}
