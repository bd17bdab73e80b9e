//! Speech emotion recognition: an LSTM over log-mel frames, the last
//! hidden state through a ReLU fully connected layer, then a softmax over
//! the five labels. Dropout (keep 0.5) is applied to the LSTM output
//! during training only.

use crate::corpus::{EmotionLabel, EMOTION_COUNT};
use crate::error::{Error, Result};
use crate::nn::layers::{dropout, linear, lstm};
use crate::nn::{Adam, Graph, ParamSet, Var};
use crate::signal::{FrameConfig, Waveform};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SerConfig {
    pub n_mels: usize,
    pub hidden: usize,
    pub fc: usize,
    /// Keep probability of the dropout on the LSTM output.
    pub dropout_keep: f64,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SerConfig {
    fn default() -> Self {
        SerConfig {
            n_mels: 40,
            hidden: 256,
            fc: 256,
            dropout_keep: 0.5,
            lr: 1e-3,
            epochs: 200,
            seed: 0,
        }
    }
}

impl SerConfig {
    /// A small variant for overfit checks and tests.
    pub fn toy() -> SerConfig {
        SerConfig {
            hidden: 64,
            fc: 64,
            ..SerConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_mels == 0 || self.hidden == 0 || self.fc == 0 || self.epochs == 0 {
            return Err(Error::Config("all classifier sizes must be positive".into()));
        }
        if !(self.dropout_keep > 0.0 && self.dropout_keep <= 1.0) {
            return Err(Error::Config(format!(
                "dropout keep probability {} outside (0,1]",
                self.dropout_keep
            )));
        }
        if self.lr <= 0.0 {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}

const CKPT_MAGIC_SIDECAR: u32 = 1;

#[derive(Debug, Clone)]
pub struct SerModel {
    pub set: ParamSet,
    pub config: SerConfig,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct SerSidecar {
    version: u32,
    seed: u64,
    config: SerConfig,
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Probabilities over the five labels for one clip, shape `(1, 5)`.
fn ser_forward(
    g: &mut Graph,
    cfg: &SerConfig,
    mel: &Array2<f64>,
    train: bool,
    rng: &mut ChaCha8Rng,
) -> Var {
    assert_eq!(mel.ncols(), cfg.n_mels, "mel input width mismatch");
    let x = g.tape.leaf(mel.clone());
    let states = lstm(g, "ser.lstm", x, cfg.n_mels, cfg.hidden);
    let last = g.tape.slice_rows(states, mel.nrows() - 1, mel.nrows());
    let last = dropout(g, last, 1.0 - cfg.dropout_keep, train, rng);
    let hidden = linear(g, "ser.fc1", last, cfg.hidden, cfg.fc);
    let hidden = g.tape.relu(hidden);
    let logits = linear(g, "ser.out", hidden, cfg.fc, EMOTION_COUNT);
    g.tape.softmax_rows(logits, EMOTION_COUNT)
}

impl SerModel {
    pub fn new(config: SerConfig, seed: u64) -> Result<SerModel> {
        config.validate()?;
        let mut set = ParamSet::new();
        {
            let mut g = Graph::new(&mut set, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dummy = Array2::zeros((2, config.n_mels));
            ser_forward(&mut g, &config, &dummy, false, &mut rng);
        }
        Ok(SerModel { set, config, seed })
    }

    /// Class probabilities for one log-mel clip.
    pub fn classify(&self, mel: &Array2<f64>) -> Result<[f64; EMOTION_COUNT]> {
        if mel.nrows() == 0 || mel.ncols() != self.config.n_mels {
            return Err(Error::InvalidInput(format!(
                "classifier expects (T, {}) mel input, got {:?}",
                self.config.n_mels,
                mel.dim()
            )));
        }
        let mut g = Graph::read_only(&self.set, self.seed);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let probs = ser_forward(&mut g, &self.config, mel, false, &mut rng);
        let row = g.tape.value(probs);
        let mut out = [0.0; EMOTION_COUNT];
        for (i, v) in row.row(0).iter().enumerate() {
            out[i] = *v;
        }
        Ok(out)
    }

    pub fn predict(&self, mel: &Array2<f64>) -> Result<EmotionLabel> {
        let probs = self.classify(mel)?;
        let best = probs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        EmotionLabel::from_id(best)
    }

    pub fn save(&self, path: &Path, step: u64) -> Result<()> {
        self.set.save(path, step)?;
        let sidecar = SerSidecar {
            version: CKPT_MAGIC_SIDECAR,
            seed: self.seed,
            config: self.config.clone(),
        };
        let text = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
        crate::util::atomic_write(&sidecar_path(path), text.as_bytes())
    }

    pub fn load(path: &Path) -> Result<(SerModel, u64)> {
        let sc_path = sidecar_path(path);
        let text = std::fs::read_to_string(&sc_path).map_err(|e| Error::io(&sc_path, e))?;
        let sidecar: SerSidecar = serde_json::from_str(&text)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", sc_path.display())))?;
        if sidecar.version != CKPT_MAGIC_SIDECAR {
            return Err(Error::Checkpoint(format!(
                "unsupported classifier checkpoint version {}",
                sidecar.version
            )));
        }
        let (set, step) = ParamSet::load(path)?;
        let fresh = SerModel::new(sidecar.config.clone(), sidecar.seed)?;
        for (name, tensor) in fresh.set.iter() {
            match set.get(name) {
                Some(loaded) if loaded.dim() == tensor.dim() => {}
                Some(loaded) => {
                    return Err(Error::Checkpoint(format!(
                        "classifier tensor {name}: expected {:?}, found {:?}",
                        tensor.dim(),
                        loaded.dim()
                    )))
                }
                None => {
                    return Err(Error::Checkpoint(format!(
                        "classifier checkpoint is missing tensor {name}"
                    )))
                }
            }
        }
        Ok((
            SerModel {
                set,
                config: sidecar.config,
                seed: sidecar.seed,
            },
            step,
        ))
    }
}

#[derive(Debug, Clone)]
pub struct SerTrainReport {
    pub epochs_run: usize,
    pub final_accuracy: f64,
    pub accuracy_history: Vec<f64>,
}

/// Train on (log-mel clip, label) pairs with per-clip Adam updates and
/// cross-entropy loss. Stops early once training accuracy hits 100%.
pub fn train_ser(
    items: &[(Array2<f64>, EmotionLabel)],
    config: &SerConfig,
) -> Result<(SerModel, SerTrainReport)> {
    config.validate()?;
    if items.is_empty() {
        return Err(Error::InvalidInput("no classifier training clips".into()));
    }
    let mut classes: Vec<EmotionLabel> = items.iter().map(|(_, e)| *e).collect();
    classes.sort();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "classifier training needs at least 2 emotion classes, found {}",
            classes.len()
        )));
    }
    for (mel, _) in items {
        if mel.nrows() == 0 || mel.ncols() != config.n_mels {
            return Err(Error::InvalidInput(format!(
                "training clip of shape {:?}, expected (T, {})",
                mel.dim(),
                config.n_mels
            )));
        }
    }

    let mut model = SerModel::new(config.clone(), config.seed)?;
    let adam = Adam::new(config.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5E12);
    let mut order: Vec<usize> = (0..items.len()).collect();
    let mut history = Vec::new();
    let mut epochs_run = 0;

    for epoch in 0..config.epochs {
        for i in (1..order.len()).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        for &idx in &order {
            let (mel, label) = &items[idx];
            let mut g = Graph::read_only(&model.set, model.seed);
            let probs = ser_forward(&mut g, config, mel, true, &mut rng);
            let logp = g.tape.ln_clamped(probs);
            let mut pick = Array2::zeros((1, EMOTION_COUNT));
            pick[[0, label.id() as usize]] = -1.0;
            let picked = g.tape.mul_const(logp, pick);
            let loss = g.tape.sum_all(picked);
            if !g.tape.scalar(loss).is_finite() {
                return Err(Error::NonFinite(format!(
                    "classifier loss diverged at epoch {epoch}"
                )));
            }
            let grads = g.backward(loss);
            adam.step(&mut model.set, &grads);
        }
        let correct = items
            .iter()
            .filter(|(mel, label)| model.predict(mel).unwrap() == *label)
            .count();
        let acc = correct as f64 / items.len() as f64;
        history.push(acc);
        epochs_run = epoch + 1;
        if epoch % 10 == 0 {
            log::info!("classifier epoch {epoch}: train accuracy {acc:.3}");
        }
        if acc >= 1.0 {
            break;
        }
    }

    let final_accuracy = *history.last().unwrap();
    Ok((
        model,
        SerTrainReport {
            epochs_run,
            final_accuracy,
            accuracy_history: history,
        },
    ))
}

/// Row-normalized confusion matrix: row = intended emotion, column =
/// predicted, diagonal = recall. Rows with no examples stay zero.
pub fn confusion_matrix(
    model: &SerModel,
    items: &[(Array2<f64>, EmotionLabel)],
) -> Result<Array2<f64>> {
    if items.is_empty() {
        return Err(Error::InvalidInput(
            "confusion matrix needs at least one clip".into(),
        ));
    }
    let mut counts = Array2::<f64>::zeros((EMOTION_COUNT, EMOTION_COUNT));
    for (mel, intended) in items {
        let predicted = model.predict(mel)?;
        counts[[intended.id() as usize, predicted.id() as usize]] += 1.0;
    }
    for mut row in counts.rows_mut() {
        let total: f64 = row.sum();
        if total > 0.0 {
            row.mapv_inplace(|v| v / total);
        }
    }
    Ok(counts)
}

/// Log-mel front end for the classifier: 25 ms window, 10 ms hop.
pub fn mel_input(w: &Waveform, n_mels: usize) -> Result<Array2<f64>> {
    let cfg = FrameConfig {
        n_mels,
        ..FrameConfig::default()
    };
    crate::signal::log_mel_spectrogram(w, &cfg)
}
