//! The editing network: text encoder, emotion embedding table, neutral
//! content generator, two-pass mask-predict decoder, and the frame-level
//! discriminator. This module holds forward passes only; losses and the
//! optimization loop live in the training module.
//!
//! Features enter the network standardized per channel by corpus
//! statistics that are stored alongside the weights as non-trainable
//! tensors; every public entry point takes and returns features in the
//! raw (unstandardized) space.

use crate::corpus::{EmotionLabel, UtteranceRecord, EMOTION_COUNT};
use crate::error::{Error, Result};
use crate::nn::layers::{
    conv1d, linear, positional_encoding, transformer_block, zero_rows_beyond,
};
use crate::nn::{Graph, Init, ParamSet, Var};
use crate::signal::FeatureSequence;
use crate::training::MaskSpec;
use crate::util;
use ndarray::{s, Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const FEAT_DIM: usize = 32;
const CHECKPOINT_VERSION: u32 = 1;

/// Architecture hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub hidden: usize,
    pub text_conv_layers: usize,
    pub text_blocks: usize,
    /// Total decoder blocks, split evenly between the coarse and fine pass.
    pub decoder_blocks: usize,
    pub attention_heads: usize,
    pub feat_dim: usize,
    pub n_emotions: usize,
    pub token_embed_dim: usize,
    /// Size of the token id table the text embedding covers.
    pub vocab_size: usize,
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: 256,
            text_conv_layers: 3,
            text_blocks: 3,
            decoder_blocks: 6,
            attention_heads: 4,
            feat_dim: FEAT_DIM,
            n_emotions: EMOTION_COUNT,
            token_embed_dim: 256,
            vocab_size: 40,
            dropout: 0.1,
        }
    }
}

impl ModelConfig {
    /// Smallest config that still exercises every code path; used by the
    /// finite-difference gradient check.
    pub fn tiny() -> ModelConfig {
        ModelConfig {
            hidden: 8,
            text_conv_layers: 1,
            text_blocks: 1,
            decoder_blocks: 2,
            attention_heads: 2,
            token_embed_dim: 8,
            dropout: 0.0,
            ..ModelConfig::default()
        }
    }

    /// Desk-scale config for the toy experiments.
    pub fn toy() -> ModelConfig {
        ModelConfig {
            hidden: 64,
            text_conv_layers: 2,
            text_blocks: 1,
            decoder_blocks: 2,
            attention_heads: 4,
            token_embed_dim: 64,
            dropout: 0.0,
            ..ModelConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.feat_dim != FEAT_DIM {
            return Err(Error::Config(format!(
                "feat_dim must be {FEAT_DIM}, got {}",
                self.feat_dim
            )));
        }
        if self.n_emotions != EMOTION_COUNT {
            return Err(Error::Config(format!(
                "n_emotions must be {EMOTION_COUNT}, got {}",
                self.n_emotions
            )));
        }
        if self.hidden == 0 || self.hidden % self.attention_heads != 0 {
            return Err(Error::Config(format!(
                "hidden {} must be a positive multiple of attention_heads {}",
                self.hidden, self.attention_heads
            )));
        }
        if self.decoder_blocks < 2 || self.decoder_blocks % 2 != 0 {
            return Err(Error::Config(format!(
                "decoder_blocks {} must be even (the two passes split them)",
                self.decoder_blocks
            )));
        }
        if self.text_blocks == 0 || self.text_conv_layers == 0 {
            return Err(Error::Config(
                "text_blocks and text_conv_layers must be at least 1".into(),
            ));
        }
        if self.vocab_size < 4 || self.token_embed_dim == 0 {
            return Err(Error::Config("vocab_size or token_embed_dim too small".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0,1)", self.dropout)));
        }
        Ok(())
    }
}

/// All tensors of the network plus the config that shaped them. The set
/// also carries the per-channel feature statistics under `norm.mean` and
/// `norm.std`; those are constants, never trained.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub set: ParamSet,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    version: u32,
    seed: u64,
    config: ModelConfig,
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut name = path.as_os_str().to_os_string();
    name.push(".json");
    std::path::PathBuf::from(name)
}

impl ModelParams {
    /// Initialize every tensor deterministically from the seed by running
    /// one throwaway forward pass over dummy inputs.
    pub fn new(config: ModelConfig, seed: u64) -> Result<ModelParams> {
        config.validate()?;
        let mut set = ParamSet::new();
        set.insert("norm.mean", Array2::zeros((1, config.feat_dim)));
        set.insert("norm.std", Array2::ones((1, config.feat_dim)));
        let mut model = ModelParams { config, set, seed };
        model.warmup();
        Ok(model)
    }

    fn warmup(&mut self) {
        let cfg = self.config.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut g = Graph::new(&mut self.set, self.seed);
        let tokens = [3usize, 4, 2, 5];
        let h_x = text_encoder(&mut g, &cfg, &tokens, false, &mut rng);
        let h_emo = emotion_table_row(&mut g, &cfg, EmotionLabel::Neutral);
        let feats = Array2::zeros((6, cfg.feat_dim));
        let h_c = ncg(&mut g, &cfg, &feats, 6);
        let _probs = discriminator(&mut g, &cfg, h_c, 6);
        let _out = decoder(&mut g, &cfg, h_x, h_emo, h_c, 6, false, &mut rng);
    }

    /// Install corpus feature statistics. Standard deviations are floored
    /// to keep standardization finite on constant channels.
    pub fn set_normalization(&mut self, mean: &Array1<f64>, std: &Array1<f64>) -> Result<()> {
        if mean.len() != self.config.feat_dim || std.len() != self.config.feat_dim {
            return Err(Error::InvalidInput(format!(
                "normalization vectors must have {} entries",
                self.config.feat_dim
            )));
        }
        let mean = mean.clone().insert_axis(ndarray::Axis(0));
        let std = std.mapv(|v| v.max(1e-6)).insert_axis(ndarray::Axis(0));
        self.set.insert("norm.mean", mean);
        self.set.insert("norm.std", std);
        Ok(())
    }

    pub fn standardize(&self, feats: &Array2<f64>) -> Array2<f64> {
        let mean = self.set.get("norm.mean").unwrap();
        let std = self.set.get("norm.std").unwrap();
        (feats - &mean.row(0)) / &std.row(0)
    }

    pub fn unstandardize(&self, feats: &Array2<f64>) -> Array2<f64> {
        let mean = self.set.get("norm.mean").unwrap();
        let std = self.set.get("norm.std").unwrap();
        feats * &std.row(0) + &mean.row(0)
    }

    pub fn save(&self, path: &Path, step: u64) -> Result<()> {
        let sidecar = Sidecar {
            version: CHECKPOINT_VERSION,
            seed: self.seed,
            config: self.config.clone(),
        };
        util::write_json(&sidecar_path(path), &sidecar)?;
        self.set.save(path, step)
    }

    /// Load a checkpoint pair (tensor container + config sidecar) and
    /// validate every architectural tensor against the config's shapes.
    pub fn load(path: &Path) -> Result<(ModelParams, u64)> {
        let sidecar: Sidecar = util::read_json(&sidecar_path(path))?;
        if sidecar.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "{}: unsupported checkpoint version {}",
                path.display(),
                sidecar.version
            )));
        }
        let (set, step) = ParamSet::load(path)?;
        let fresh = ModelParams::new(sidecar.config.clone(), sidecar.seed)?;
        for (name, tensor) in fresh.set.iter() {
            match set.get(name) {
                None => {
                    return Err(Error::Checkpoint(format!(
                        "{}: tensor {name} missing",
                        path.display()
                    )))
                }
                Some(loaded) if loaded.dim() != tensor.dim() => {
                    return Err(Error::Checkpoint(format!(
                        "{}: tensor {name} has shape {:?}, config requires {:?}",
                        path.display(),
                        loaded.dim(),
                        tensor.dim()
                    )))
                }
                Some(_) => {}
            }
        }
        for (name, _) in set.iter() {
            if !fresh.set.contains(name) && !name.starts_with("opt.") {
                return Err(Error::Checkpoint(format!(
                    "{}: unexpected tensor {name}",
                    path.display()
                )));
            }
        }
        Ok((
            ModelParams {
                config: sidecar.config,
                set,
                seed: sidecar.seed,
            },
            step,
        ))
    }

    fn check_tokens(&self, tokens: &[u32]) -> Result<Vec<usize>> {
        if tokens.is_empty() {
            return Err(Error::InvalidInput("empty token sequence".into()));
        }
        tokens
            .iter()
            .map(|&t| {
                let t = t as usize;
                if t >= self.config.vocab_size {
                    Err(Error::InvalidInput(format!(
                        "token id {t} outside table of {}",
                        self.config.vocab_size
                    )))
                } else {
                    Ok(t)
                }
            })
            .collect()
    }

    /// Hidden text representation, one row per token.
    pub fn text_encode(&self, tokens: &[u32]) -> Result<Array2<f64>> {
        let ids = self.check_tokens(tokens)?;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut g = Graph::read_only(&self.set, self.seed);
        let h = text_encoder(&mut g, &self.config, &ids, false, &mut rng);
        Ok(g.tape.value(h).clone())
    }

    /// The learnable embedding row for an emotion.
    pub fn emotion_embed(&self, e: EmotionLabel) -> Array1<f64> {
        self.set.get("emo.embed").unwrap().row(e.id()).to_owned()
    }

    /// Emotion-independent content representation of (masked) features.
    pub fn ncg_forward(&self, masked: &FeatureSequence) -> Result<Array2<f64>> {
        masked.validate_dims(self.config.feat_dim)?;
        let mut g = Graph::read_only(&self.set, self.seed);
        let t = masked.frames.nrows();
        let h = ncg(&mut g, &self.config, &masked.frames, t);
        Ok(g.tape.value(h).clone())
    }

    /// Per-frame probability that content came from neutral speech.
    pub fn discriminate(&self, h_c: &Array2<f64>) -> Result<Vec<f64>> {
        if h_c.ncols() != self.config.hidden {
            return Err(Error::InvalidInput(format!(
                "content sequence has {} channels, model hidden is {}",
                h_c.ncols(),
                self.config.hidden
            )));
        }
        let mut g = Graph::read_only(&self.set, self.seed);
        let h = g.tape.leaf(h_c.clone());
        let p = discriminator(&mut g, &self.config, h, h_c.nrows());
        Ok(g.tape.value(p).column(0).to_vec())
    }

    /// Full-length feature prediction in raw space. Only the masked region
    /// is meaningful downstream; the mask argument is validated against the
    /// content length.
    pub fn decode(
        &self,
        h_x: &Array2<f64>,
        h_emo: &Array1<f64>,
        h_c: &Array2<f64>,
        mask: &MaskSpec,
    ) -> Result<FeatureSequence> {
        let t = h_c.nrows();
        mask.validate(t)?;
        let mut g = Graph::read_only(&self.set, self.seed);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let hx = g.tape.leaf(h_x.clone());
        let he = g.tape.leaf(h_emo.clone().insert_axis(ndarray::Axis(0)));
        let hc = g.tape.leaf(h_c.clone());
        let out = decoder(&mut g, &self.config, hx, he, hc, t, false, &mut rng);
        let raw = self.unstandardize(g.tape.value(out));
        Ok(feature_sequence_from_prediction(raw))
    }

    /// End-to-end prediction of the masked region: returns exactly
    /// `mask.length` frames in raw feature space, ready for splicing.
    pub fn predict_masked(
        &self,
        record: &UtteranceRecord,
        feats: &FeatureSequence,
        mask: &MaskSpec,
        e: EmotionLabel,
    ) -> Result<FeatureSequence> {
        self.predict_masked_tokens(&record.tokens, feats, mask, e)
    }

    /// Same as [`predict_masked`](Self::predict_masked) but with an
    /// explicit token sequence (the editor predicts against edited text
    /// that no stored record describes).
    pub fn predict_masked_tokens(
        &self,
        tokens: &[u32],
        feats: &FeatureSequence,
        mask: &MaskSpec,
        e: EmotionLabel,
    ) -> Result<FeatureSequence> {
        feats.validate_dims(self.config.feat_dim)?;
        let t = feats.frames.nrows();
        mask.validate(t)?;
        let ids = self.check_tokens(tokens)?;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut g = Graph::read_only(&self.set, self.seed);
        let h_x = text_encoder(&mut g, &self.config, &ids, false, &mut rng);
        let h_emo = emotion_table_row(&mut g, &self.config, e);
        let masked = mask_filled(&feats.frames, mask);
        let h_c = ncg(&mut g, &self.config, &masked, t);
        let out = decoder(&mut g, &self.config, h_x, h_emo, h_c, t, false, &mut rng);
        let full = g.tape.value(out);
        let region = full.slice(s![mask.start..mask.start + mask.length, ..]);
        let raw = self.unstandardize(&region.to_owned());
        Ok(feature_sequence_from_prediction(raw))
    }
}

/// Zero-fill the masked frames of a raw feature matrix.
pub fn mask_filled(feats: &Array2<f64>, mask: &MaskSpec) -> Array2<f64> {
    let mut out = feats.clone();
    out.slice_mut(s![mask.start..mask.start + mask.length, ..])
        .fill(0.0);
    out
}

/// The decoder emits unconstrained reals; snap the voicing flag back to a
/// binary decision and zero the pitch channel of unvoiced frames so the
/// result is a well-formed feature sequence.
fn feature_sequence_from_prediction(mut raw: Array2<f64>) -> FeatureSequence {
    let dim = raw.ncols();
    for mut row in raw.rows_mut() {
        let voiced = row[dim - 1] >= 0.5;
        row[dim - 1] = if voiced { 1.0 } else { 0.0 };
        if !voiced {
            row[dim - 2] = 0.0;
        }
    }
    FeatureSequence { frames: raw }
}

/// Graph builders. These run inside a caller-provided graph so the
/// training step can assemble the whole generator objective on one tape.
///
/// Text encoder: token embedding, a convolution stack, position codes,
/// then self-attention blocks. Output is one row per token.
pub fn text_encoder(
    g: &mut Graph,
    cfg: &ModelConfig,
    tokens: &[usize],
    train: bool,
    rng: &mut ChaCha8Rng,
) -> Var {
    assert!(!tokens.is_empty());
    let table = g.param(
        "text.embed",
        (cfg.vocab_size, cfg.token_embed_dim),
        Init::Uniform(0.1),
    );
    let mut h = g.tape.gather(table, tokens);
    for i in 0..cfg.text_conv_layers {
        let c_in = if i == 0 { cfg.token_embed_dim } else { cfg.hidden };
        h = conv1d(g, &format!("text.conv{i}"), h, c_in, cfg.hidden, 5);
        h = g.tape.relu(h);
    }
    let pe = g.tape.leaf(positional_encoding(tokens.len(), cfg.hidden));
    h = g.tape.add(h, pe);
    for i in 0..cfg.text_blocks {
        h = transformer_block(
            g,
            &format!("text.block{i}"),
            h,
            None,
            cfg.hidden,
            cfg.attention_heads,
            tokens.len(),
            cfg.dropout,
            train,
            rng,
        );
    }
    h
}

/// One row of the 5-way emotion embedding table, shaped (1, hidden).
pub fn emotion_table_row(g: &mut Graph, cfg: &ModelConfig, e: EmotionLabel) -> Var {
    let table = g.param(
        "emo.embed",
        (cfg.n_emotions, cfg.hidden),
        Init::Uniform(0.5),
    );
    g.tape.gather(table, &[e.id()])
}

/// Neutral content generator: standardize, three convolutions (kernel 5)
/// each followed by relu and instance normalization, then a linear
/// projection. Instance norm after the nonlinearity strips per-channel
/// statistics from the activations; rows at and beyond `valid` stay zero
/// so padding never leaks into the receptive field of the next layer.
pub fn ncg(g: &mut Graph, cfg: &ModelConfig, masked_raw: &Array2<f64>, valid: usize) -> Var {
    assert_eq!(masked_raw.ncols(), cfg.feat_dim);
    let x = g.tape.leaf(masked_raw.clone());
    let mean = g.constant("norm.mean");
    let std = g.constant("norm.std");
    let centered = {
        let neg = g.tape.scale(mean, -1.0);
        g.tape.add_row(x, neg)
    };
    let inv_std = g.tape.value(std).mapv(|v| 1.0 / v);
    let inv = g.tape.leaf(inv_std);
    let mut h = g.tape.mul_row(centered, inv);
    h = zero_rows_beyond(g, h, valid);
    for i in 0..3 {
        let c_in = if i == 0 { cfg.feat_dim } else { cfg.hidden };
        h = conv1d(g, &format!("ncg.conv{i}"), h, c_in, cfg.hidden, 5);
        h = g.tape.relu(h);
        h = g.tape.instance_norm_cols(h, valid);
    }
    let out = linear(g, "ncg.out", h, cfg.hidden, cfg.hidden);
    zero_rows_beyond(g, out, valid)
}

/// Frame-level discriminator: three convolutions (kernel 3) narrowing to
/// one channel, sigmoid per frame. Output is (T, 1).
pub fn discriminator(g: &mut Graph, cfg: &ModelConfig, h_c: Var, valid: usize) -> Var {
    let mut h = h_c;
    for i in 0..2 {
        h = conv1d(g, &format!("disc.conv{i}"), h, cfg.hidden, cfg.hidden, 3);
        h = g.tape.relu(h);
        h = zero_rows_beyond(g, h, valid);
    }
    let logits = conv1d(g, "disc.conv2", h, cfg.hidden, 1, 3);
    g.tape.sigmoid(logits)
}

/// Two-pass decoder. Pass 1 starts from the content sequence and
/// cross-attends to the text memory with the emotion embedding appended as
/// one extra memory row, emitting coarse features. Pass 2 re-embeds the
/// coarse features, adds them to the pass-1 states as a residual, and
/// cross-attends to the content sequence to emit the fine features.
/// Output is (T, feat_dim) in standardized space.
#[allow(clippy::too_many_arguments)]
pub fn decoder(
    g: &mut Graph,
    cfg: &ModelConfig,
    h_x: Var,
    h_emo: Var,
    h_c: Var,
    valid: usize,
    train: bool,
    rng: &mut ChaCha8Rng,
) -> Var {
    let t_len = g.tape.value(h_c).nrows();
    let mem1 = g.tape.concat_rows(h_x, h_emo);
    let mem1_len = g.tape.value(mem1).nrows();
    let pe = g.tape.leaf(positional_encoding(t_len, cfg.hidden));
    let mut h = g.tape.add(h_c, pe);
    let half = cfg.decoder_blocks / 2;
    for i in 0..half {
        h = transformer_block(
            g,
            &format!("dec.p1.block{i}"),
            h,
            Some((mem1, mem1_len)),
            cfg.hidden,
            cfg.attention_heads,
            valid,
            cfg.dropout,
            train,
            rng,
        );
    }
    let coarse = linear(g, "dec.coarse", h, cfg.hidden, cfg.feat_dim);
    let reembed = linear(g, "dec.refine", coarse, cfg.feat_dim, cfg.hidden);
    let mut h2 = g.tape.add(h, reembed);
    for i in 0..half {
        h2 = transformer_block(
            g,
            &format!("dec.p2.block{i}"),
            h2,
            Some((h_c, valid)),
            cfg.hidden,
            cfg.attention_heads,
            valid,
            cfg.dropout,
            train,
            rng,
        );
    }
    linear(g, "dec.out", h2, cfg.hidden, cfg.feat_dim)
}

/// Convenience composition used by training and the gradient check: build
/// the standardized full-length prediction for one utterance. Returns the
/// prediction and the content sequence (for the discriminator).
#[allow(clippy::too_many_arguments)]
pub fn generator_forward(
    g: &mut Graph,
    cfg: &ModelConfig,
    tokens: &[usize],
    feats_raw: &Array2<f64>,
    mask: &MaskSpec,
    e: EmotionLabel,
    train: bool,
    rng: &mut ChaCha8Rng,
) -> (Var, Var) {
    let t = feats_raw.nrows();
    let h_x = text_encoder(g, cfg, tokens, train, rng);
    let h_emo = emotion_table_row(g, cfg, e);
    let masked = mask_filled(feats_raw, mask);
    let h_c = ncg(g, cfg, &masked, t);
    let pred = decoder(g, cfg, h_x, h_emo, h_c, t, train, rng);
    (pred, h_c)
}
