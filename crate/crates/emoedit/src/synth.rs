//! Bundled synthetic-corpus generator.
//!
//! Emotional and neutral speech corpora cannot be redistributed, so the
//! repository ships a generator that fabricates small corpora with the
//! same directory layout the ingestion code expects. Clips are additive
//! harmonic synthesis through word-specific formant peaks; each "emotion"
//! gets a deterministic F0 base, contour, spectral tilt, energy level, and
//! speaking rate, so downstream models have real structure to learn.
//! Texts are parallel across emotions for a given speaker and clip index,
//! mirroring how parallel emotional corpora are organized.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::EmotionLabel;
use crate::error::Result;
use crate::signal::{save_wav, FrameConfig, Waveform, SAMPLE_RATE};

/// Sizes and seed for a generated corpus.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub emotional_speakers: usize,
    pub clips_per_emotion: usize,
    pub neutral_speakers: usize,
    pub clips_per_neutral_speaker: usize,
    pub min_words: usize,
    pub max_words: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            emotional_speakers: 2,
            clips_per_emotion: 6,
            neutral_speakers: 2,
            clips_per_neutral_speaker: 8,
            min_words: 2,
            max_words: 4,
            seed: 17,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthSummary {
    pub emotional_clips: usize,
    pub neutral_clips: usize,
}

const WORD_BANK: [&str; 16] = [
    "river", "stone", "bright", "morning", "gentle", "wind", "garden", "amber",
    "quiet", "harbor", "meadow", "silver", "lantern", "willow", "ember", "cloud",
];

/// Per-emotion synthesis signature.
struct EmotionVoice {
    f0_base: f64,
    /// F0 contour multiplier at utterance positions 0 and 1.
    contour: (f64, f64),
    /// harmonic amplitude rolloff exponent; smaller = brighter
    rolloff: f64,
    /// overall gain
    gain: f64,
    /// speaking-rate multiplier; larger = faster (shorter words)
    rate: f64,
    /// vibrato depth as a fraction of F0
    vibrato: f64,
}

fn voice_for(emotion: EmotionLabel) -> EmotionVoice {
    match emotion {
        EmotionLabel::Neutral => EmotionVoice {
            f0_base: 140.0,
            contour: (1.02, 0.96),
            rolloff: 1.0,
            gain: 1.0,
            rate: 1.0,
            vibrato: 0.005,
        },
        EmotionLabel::Happy => EmotionVoice {
            f0_base: 200.0,
            contour: (1.0, 1.06),
            rolloff: 0.8,
            gain: 1.15,
            rate: 1.12,
            vibrato: 0.02,
        },
        EmotionLabel::Sad => EmotionVoice {
            f0_base: 110.0,
            contour: (1.04, 0.88),
            rolloff: 1.35,
            gain: 0.75,
            rate: 0.85,
            vibrato: 0.004,
        },
        EmotionLabel::Angry => EmotionVoice {
            f0_base: 170.0,
            contour: (1.05, 0.98),
            rolloff: 0.55,
            gain: 1.3,
            rate: 1.05,
            vibrato: 0.012,
        },
        EmotionLabel::Surprise => EmotionVoice {
            f0_base: 230.0,
            contour: (0.92, 1.18),
            rolloff: 0.9,
            gain: 1.1,
            rate: 1.0,
            vibrato: 0.015,
        },
    }
}

/// Stable word hash used to assign formants; independent of clip seed so a
/// word sounds the same everywhere it appears.
fn word_hash(word: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in word.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Two formant peaks per word, hashed from its spelling.
fn word_formants(word: &str) -> (f64, f64) {
    let h = word_hash(word);
    let f1 = 320.0 + (h % 480) as f64;
    let f2 = (f1 + 450.0) + ((h >> 16) % 1200) as f64;
    (f1, f2)
}

/// Lorentzian formant gain at frequency `f`.
fn formant_gain(f: f64, f1: f64, f2: f64, formant_scale: f64) -> f64 {
    let peak = |center: f64, bw: f64, amp: f64| {
        let d = (f - center * formant_scale) / bw;
        amp / (1.0 + d * d)
    };
    0.05 + peak(f1, 90.0, 1.0) + peak(f2, 140.0, 0.6) + peak(2800.0, 280.0, 0.18)
}

struct SpeakerVoice {
    /// multiplies every emotion's F0 base
    f0_factor: f64,
    /// shifts formants up or down a few percent
    formant_scale: f64,
    female: bool,
}

fn speaker_voice(index: usize) -> SpeakerVoice {
    let female = index % 2 == 0;
    SpeakerVoice {
        f0_factor: if female { 1.22 } else { 0.82 } * (1.0 + 0.03 * ((index / 2) % 3) as f64),
        formant_scale: if female { 1.08 } else { 0.95 } + 0.02 * ((index / 2) % 2) as f64,
        female,
    }
}

/// A rendered clip plus everything needed for transcripts and alignments.
pub struct SynthClip {
    pub waveform: Waveform,
    pub text: String,
    /// `(word, start_frame, end_frame)` at the default 10 ms hop
    pub word_spans: Vec<(String, usize, usize)>,
}

/// Render one clip. Deterministic in all arguments: the same (seed,
/// speaker, clip, emotion) produces identical samples. The word sequence
/// depends only on (seed, speaker_index, clip_index), so the five
/// emotional renditions of a clip index share their text.
pub fn synth_clip(
    seed: u64,
    speaker_index: usize,
    clip_index: usize,
    emotion: EmotionLabel,
    min_words: usize,
    max_words: usize,
) -> SynthClip {
    let text_seed = seed
        .wrapping_mul(0x9E3779B97F4A7C15)
        .wrapping_add((speaker_index as u64) << 20)
        .wrapping_add(clip_index as u64);
    let mut text_rng = ChaCha8Rng::seed_from_u64(text_seed);
    let n_words = text_rng.gen_range(min_words..=max_words.max(min_words));
    let words: Vec<&str> = (0..n_words)
        .map(|_| WORD_BANK[text_rng.gen_range(0..WORD_BANK.len())])
        .collect();

    let voice = voice_for(emotion);
    let speaker = speaker_voice(speaker_index);
    let sr = SAMPLE_RATE as f64;
    let hop = FrameConfig::default().hop_samples(SAMPLE_RATE);

    // Clip-level noise must differ per emotion so renditions are not
    // near-copies, but stays deterministic.
    let mut noise_rng = ChaCha8Rng::seed_from_u64(text_seed ^ (emotion.id() as u64 + 1) << 48);

    let gap = (0.06 * sr) as usize;
    let lead = (0.05 * sr) as usize;
    struct Segment {
        word: String,
        start: usize,
        len: usize,
        f1: f64,
        f2: f64,
    }
    let mut segments = Vec::new();
    let mut cursor = lead;
    for w in &words {
        let base_dur = 0.16 + 0.035 * (w.len().min(7) as f64);
        let len = ((base_dur / voice.rate) * sr) as usize;
        let (f1, f2) = word_formants(w);
        segments.push(Segment {
            word: w.to_string(),
            start: cursor,
            len,
            f1,
            f2,
        });
        cursor += len + gap;
    }
    let total = cursor - gap + (0.08 * sr) as usize;

    let mut samples = vec![0.0f64; total];
    let f0_mean = voice.f0_base * speaker.f0_factor;
    let mut phase = 0.0f64;
    for seg in &segments {
        let attack = (0.02 * sr) as usize;
        let release = (0.03 * sr) as usize;
        for i in 0..seg.len {
            let n = seg.start + i;
            let u = n as f64 / total as f64;
            let contour = voice.contour.0 + (voice.contour.1 - voice.contour.0) * u;
            let vib = 1.0 + voice.vibrato * (2.0 * std::f64::consts::PI * 5.3 * n as f64 / sr).sin();
            let f0 = f0_mean * contour * vib;
            phase += f0 / sr;
            let env_a = if i < attack {
                0.5 - 0.5 * (std::f64::consts::PI * i as f64 / attack as f64).cos()
            } else {
                1.0
            };
            let env_r = if i + release > seg.len {
                let j = seg.len - i;
                0.5 - 0.5 * (std::f64::consts::PI * j as f64 / release as f64).cos()
            } else {
                1.0
            };
            let mut s = 0.0;
            let mut k = 1usize;
            loop {
                let fk = k as f64 * f0;
                if fk > 4200.0 {
                    break;
                }
                let amp = formant_gain(fk, seg.f1, seg.f2, speaker.formant_scale)
                    / (k as f64).powf(voice.rolloff);
                s += amp * (2.0 * std::f64::consts::PI * k as f64 * phase).sin();
                k += 1;
            }
            samples[n] = voice.gain * env_a * env_r * s + 0.001 * noise_rng.gen_range(-1.0..1.0);
        }
    }
    // low breath noise everywhere so silence is not digital zero
    for s in samples.iter_mut() {
        *s += 0.0015 * noise_rng.gen_range(-1.0..1.0);
    }
    let peak = samples.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let norm = 0.45 * voice.gain.min(1.4) / peak.max(1e-9);
    for s in samples.iter_mut() {
        *s *= norm;
    }

    let word_spans = segments
        .iter()
        .map(|seg| {
            let start_frame = seg.start / hop;
            let end_frame = (seg.start + seg.len) / hop + 1;
            (seg.word.clone(), start_frame, end_frame)
        })
        .collect();
    SynthClip {
        waveform: Waveform::new(samples, SAMPLE_RATE),
        text: words.join(" "),
        word_spans,
    }
}

fn write_clip(clip: &SynthClip, wav_path: &Path) -> Result<()> {
    save_wav(&clip.waveform, wav_path)?;
    let mut align = String::new();
    for (word, start, end) in &clip.word_spans {
        align.push_str(&format!("{word} {start} {end}\n"));
    }
    crate::util::atomic_write(&wav_path.with_extension("align"), align.as_bytes())
}

/// Generate an emotional corpus (`root/<speaker>/<Emotion>/<utt>.wav`) and
/// a neutral corpus (`root/<speaker>/<utt>.wav`), with transcripts,
/// alignment sidecars, and `speakers.tsv` gender tables.
pub fn generate_corpus(
    spec: &SynthSpec,
    emotional_root: &Path,
    neutral_root: &Path,
) -> Result<SynthSummary> {
    let mut emotional_clips = 0;
    let mut genders = String::new();
    for s in 0..spec.emotional_speakers {
        let speaker = format!("se{s:02}");
        let spk_dir = emotional_root.join(&speaker);
        let mut transcript = String::new();
        for emotion in EmotionLabel::ALL {
            let emo_dir = spk_dir.join(capitalized(emotion.name()));
            std::fs::create_dir_all(&emo_dir)
                .map_err(|e| crate::error::Error::io(&emo_dir, e))?;
            for c in 0..spec.clips_per_emotion {
                let clip = synth_clip(spec.seed, s, c, emotion, spec.min_words, spec.max_words);
                let utt = format!("{speaker}_{}_{c:03}", emotion.name());
                write_clip(&clip, &emo_dir.join(format!("{utt}.wav")))?;
                transcript.push_str(&format!("{utt}\t{}\n", clip.text));
                emotional_clips += 1;
            }
        }
        crate::util::atomic_write(&spk_dir.join(format!("{speaker}.txt")), transcript.as_bytes())?;
        let g = if speaker_voice(s).female { "female" } else { "male" };
        genders.push_str(&format!("{speaker}\t{g}\n"));
    }
    crate::util::atomic_write(&emotional_root.join("speakers.tsv"), genders.as_bytes())?;

    let mut neutral_clips = 0;
    let mut genders = String::new();
    for s in 0..spec.neutral_speakers {
        // offset the speaker index so neutral voices differ from emotional ones
        let voice_index = s + spec.emotional_speakers;
        let speaker = format!("sn{s:02}");
        let spk_dir = neutral_root.join(&speaker);
        std::fs::create_dir_all(&spk_dir).map_err(|e| crate::error::Error::io(&spk_dir, e))?;
        let mut transcript = String::new();
        for c in 0..spec.clips_per_neutral_speaker {
            let clip = synth_clip(
                spec.seed.wrapping_add(0xF00D),
                voice_index,
                c,
                EmotionLabel::Neutral,
                spec.min_words,
                spec.max_words,
            );
            let utt = format!("{speaker}_{c:03}");
            write_clip(&clip, &spk_dir.join(format!("{utt}.wav")))?;
            transcript.push_str(&format!("{utt}\t{}\n", clip.text));
            neutral_clips += 1;
        }
        crate::util::atomic_write(&spk_dir.join(format!("{speaker}.txt")), transcript.as_bytes())?;
        let g = if speaker_voice(voice_index).female { "female" } else { "male" };
        genders.push_str(&format!("{speaker}\t{g}\n"));
    }
    crate::util::atomic_write(&neutral_root.join("speakers.tsv"), genders.as_bytes())?;

    Ok(SynthSummary {
        emotional_clips,
        neutral_clips,
    })
}

fn capitalized(name: &str) -> String {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().collect::<String>() + chars.as_str(),
        None => String::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ingest_emotional_corpus, ingest_neutral_corpus, Tokenizer};
    use crate::signal::{estimate_f0_yin, extract_features};

    fn small_spec() -> SynthSpec {
        SynthSpec {
            emotional_speakers: 1,
            clips_per_emotion: 2,
            neutral_speakers: 1,
            clips_per_neutral_speaker: 3,
            min_words: 2,
            max_words: 3,
            seed: 5,
        }
    }

    #[test]
    fn generated_corpus_ingests_cleanly() {
        let dir = tempfile::tempdir().unwrap();
        let emo_root = dir.path().join("emotional");
        let neu_root = dir.path().join("neutral");
        let summary = generate_corpus(&small_spec(), &emo_root, &neu_root).unwrap();
        assert_eq!(summary.emotional_clips, 10);
        assert_eq!(summary.neutral_clips, 3);

        let tok = Tokenizer::default();
        let em = ingest_emotional_corpus(&emo_root, &tok).unwrap();
        assert_eq!(em.len(), 10);
        for e in EmotionLabel::ALL {
            assert_eq!(em.by_emotion(e).len(), 2);
        }
        let nm = ingest_neutral_corpus(&neu_root, &tok).unwrap();
        assert_eq!(nm.len(), 3);
        assert!(nm.records.iter().all(|r| r.emotion == EmotionLabel::Neutral));
        // alignments came through and match the transcript word count
        for r in em.records.iter().chain(&nm.records) {
            let spans = r.word_spans.as_ref().expect("spans present");
            assert_eq!(spans.len(), crate::corpus::words(&r.text).len(), "{}", r.utt_id);
        }
    }

    #[test]
    fn texts_are_parallel_across_emotions() {
        let a = synth_clip(9, 0, 3, EmotionLabel::Neutral, 2, 4);
        let b = synth_clip(9, 0, 3, EmotionLabel::Angry, 2, 4);
        assert_eq!(a.text, b.text);
        assert_ne!(a.waveform.samples, b.waveform.samples);
        // different clip index changes the text eventually
        let texts: Vec<String> = (0..8)
            .map(|c| synth_clip(9, 0, c, EmotionLabel::Neutral, 2, 4).text)
            .collect();
        assert!(texts.iter().any(|t| *t != texts[0]));
    }

    #[test]
    fn generation_is_deterministic() {
        let a = synth_clip(11, 1, 0, EmotionLabel::Happy, 2, 3);
        let b = synth_clip(11, 1, 0, EmotionLabel::Happy, 2, 3);
        assert_eq!(a.waveform.samples, b.waveform.samples);
        assert_eq!(a.word_spans, b.word_spans);
    }

    #[test]
    fn emotion_f0_signatures_are_ordered() {
        // same speaker and text; median F0 should follow the per-emotion
        // bases: sad < neutral < angry < happy < surprise
        let cfg = FrameConfig::default();
        let mut medians = Vec::new();
        for emotion in EmotionLabel::ALL {
            let clip = synth_clip(3, 0, 1, emotion, 3, 3);
            let track = estimate_f0_yin(&clip.waveform, &cfg);
            let med = track.median_voiced().expect("voiced clip");
            medians.push((emotion, med));
        }
        let get = |e: EmotionLabel| medians.iter().find(|(m, _)| *m == e).unwrap().1;
        assert!(get(EmotionLabel::Sad) < get(EmotionLabel::Neutral));
        assert!(get(EmotionLabel::Neutral) < get(EmotionLabel::Angry));
        assert!(get(EmotionLabel::Angry) < get(EmotionLabel::Happy));
        assert!(get(EmotionLabel::Happy) < get(EmotionLabel::Surprise));
    }

    #[test]
    fn word_spans_fit_inside_feature_length() {
        let cfg = FrameConfig::default();
        for emotion in EmotionLabel::ALL {
            let clip = synth_clip(21, 0, 0, emotion, 2, 4);
            let feats = extract_features(&clip.waveform, &cfg).unwrap();
            let spans = &clip.word_spans;
            for w in spans.windows(2) {
                assert!(w[0].2 <= w[1].1, "spans must not overlap");
            }
            assert!(spans.last().unwrap().2 <= feats.len(), "{emotion}");
        }
    }

    #[test]
    fn clip_durations_are_reasonable() {
        for emotion in EmotionLabel::ALL {
            let clip = synth_clip(2, 0, 0, emotion, 2, 4);
            let d = clip.waveform.duration_secs();
            assert!((0.3..3.0).contains(&d), "{emotion}: {d} s");
        }
    }
}
