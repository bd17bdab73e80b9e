//! Mask sampling, the three training objectives, the alternating
//! generator/discriminator loop, the finite-difference gradient check, and
//! the content/emotion decoupling experiment.
//!
//! The loop trains per-sample graphs and accumulates gradients across the
//! batch instead of padding sequences to a common length; samples of a
//! batch run on worker threads and their gradients are summed in sample
//! order, so metrics are bit-stable for a fixed seed regardless of
//! scheduling.

use crate::corpus::{EmotionLabel, Manifest};
use crate::error::{Error, Result};
use crate::model::{self, discriminator, generator_forward, ncg, ModelConfig, ModelParams};
use crate::nn::{Adam, Graph, Var};
use crate::signal::{extract_features, FeatureSequence, FrameConfig};
use indexmap::IndexMap;
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;
use std::time::Instant;

/// One contiguous masked region of an utterance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskSpec {
    pub start: usize,
    pub length: usize,
}

impl MaskSpec {
    pub fn validate(&self, t: usize) -> Result<()> {
        if self.length == 0 {
            return Err(Error::InvalidInput("mask length must be at least 1".into()));
        }
        if self.start + self.length > t {
            return Err(Error::InvalidInput(format!(
                "mask {}..{} outside sequence of {t} frames",
                self.start,
                self.start + self.length
            )));
        }
        Ok(())
    }

    pub fn end(&self) -> usize {
        self.start + self.length
    }

    pub fn contains(&self, frame: usize) -> bool {
        frame >= self.start && frame < self.end()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Weight of the adversarial term in the generator objective.
    pub lambda_adv: f64,
    /// Fraction of each utterance masked per step.
    pub mask_ratio: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub seed: u64,
    pub d_steps_per_g_step: usize,
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda_adv: 0.5,
            mask_ratio: 0.12,
            lr: 1e-3,
            batch_size: 16,
            steps: 1000,
            seed: 0,
            d_steps_per_g_step: 1,
            checkpoint_every: 500,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mask_ratio > 0.0 && self.mask_ratio < 1.0) {
            return Err(Error::Config(format!(
                "mask_ratio {} outside (0,1)",
                self.mask_ratio
            )));
        }
        if self.lambda_adv < 0.0 || !self.lambda_adv.is_finite() {
            return Err(Error::Config("lambda_adv must be finite and >= 0".into()));
        }
        if self.lr <= 0.0 || self.batch_size == 0 || self.steps == 0 {
            return Err(Error::Config(
                "lr, batch_size, and steps must be positive".into(),
            ));
        }
        if self.d_steps_per_g_step == 0 || self.checkpoint_every == 0 {
            return Err(Error::Config(
                "d_steps_per_g_step and checkpoint_every must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Draw a single contiguous mask covering `ratio` of the utterance.
pub fn sample_mask(t: usize, ratio: f64, rng: &mut ChaCha8Rng) -> Result<MaskSpec> {
    if t < 2 {
        return Err(Error::InvalidInput(format!(
            "cannot mask a sequence of {t} frames"
        )));
    }
    let length = ((ratio * t as f64).round() as usize).clamp(1, t);
    let start = rng.gen_range(0..=t - length);
    Ok(MaskSpec { start, length })
}

/// The adversarial objective over frame-level discriminator outputs: mean
/// log-probability of neutral frames plus mean log one-minus-probability
/// of non-neutral frames. Probabilities are clamped at 1e-7 inside the
/// logs. An empty side contributes nothing (logged as a warning).
pub fn adversarial_loss(d_neutral: &[Vec<f64>], d_nonneutral: &[Vec<f64>]) -> f64 {
    const EPS: f64 = 1e-7;
    let mut total = 0.0;
    let n_neutral: usize = d_neutral.iter().map(Vec::len).sum();
    let n_other: usize = d_nonneutral.iter().map(Vec::len).sum();
    if n_neutral == 0 {
        log::warn!("adversarial loss: no neutral frames in batch, term dropped");
    } else {
        let s: f64 = d_neutral
            .iter()
            .flatten()
            .map(|p| p.max(EPS).ln())
            .sum::<f64>();
        total += s / n_neutral as f64;
    }
    if n_other == 0 {
        log::warn!("adversarial loss: no non-neutral frames in batch, term dropped");
    } else {
        let s: f64 = d_nonneutral
            .iter()
            .flatten()
            .map(|p| (1.0 - p).max(EPS).ln())
            .sum::<f64>();
        total += s / n_other as f64;
    }
    total
}

/// Mean squared error over the masked frames, all channels.
pub fn reconstruction_loss(
    pred: &FeatureSequence,
    target: &FeatureSequence,
    mask: &MaskSpec,
) -> Result<f64> {
    if pred.frames.dim() != target.frames.dim() {
        return Err(Error::InvalidInput(format!(
            "prediction {:?} and target {:?} shapes differ",
            pred.frames.dim(),
            target.frames.dim()
        )));
    }
    mask.validate(target.frames.nrows())?;
    let d = target.frames.ncols();
    let mut acc = 0.0;
    for t in mask.start..mask.end() {
        for c in 0..d {
            let diff = pred.frames[[t, c]] - target.frames[[t, c]];
            acc += diff * diff;
        }
    }
    Ok(acc / (mask.length * d) as f64)
}

/// Compose the two optimization targets: the generator minimizes
/// `lambda * L_adv + L_rec`, the discriminator minimizes `-L_adv`.
pub fn objectives(l_adv: f64, l_rec: f64, cfg: &TrainConfig) -> (f64, f64) {
    (cfg.lambda_adv * l_adv + l_rec, -l_adv)
}

/// One utterance prepared for training: token ids, emotion, raw features.
#[derive(Debug, Clone)]
pub struct TrainItem {
    pub utt_id: String,
    pub tokens: Vec<usize>,
    pub emotion: EmotionLabel,
    pub feats: Array2<f64>,
}

impl TrainItem {
    pub fn from_feature_sequence(
        utt_id: &str,
        tokens: &[u32],
        emotion: EmotionLabel,
        feats: &FeatureSequence,
    ) -> TrainItem {
        TrainItem {
            utt_id: utt_id.to_string(),
            tokens: tokens.iter().map(|&t| t as usize).collect(),
            emotion,
            feats: feats.frames.clone(),
        }
    }
}

/// Materialize training items for a manifest. Features are read from
/// `<feat_dir>/<utt_id>.feat` when present, otherwise extracted from the
/// record's waveform.
pub fn load_items(
    manifest: &Manifest,
    feat_dir: Option<&Path>,
    frame: &FrameConfig,
) -> Result<Vec<TrainItem>> {
    let mut items = Vec::with_capacity(manifest.records.len());
    for rec in &manifest.records {
        let feats = match feat_dir {
            Some(dir) => {
                let path = dir.join(format!("{}.feat", rec.utt_id));
                if path.exists() {
                    FeatureSequence::load(&path)?
                } else {
                    extract_from_wav(&rec.wav_path, frame)?
                }
            }
            None => extract_from_wav(&rec.wav_path, frame)?,
        };
        items.push(TrainItem::from_feature_sequence(
            &rec.utt_id,
            &rec.tokens,
            rec.emotion,
            &feats,
        ));
    }
    Ok(items)
}

fn extract_from_wav(path: &Path, frame: &FrameConfig) -> Result<FeatureSequence> {
    let wav = crate::signal::load_wav(path)?;
    extract_features(&wav, frame)
}

/// Per-channel mean and standard deviation over every frame of the items.
pub fn compute_normalization(items: &[TrainItem]) -> Result<(Array1<f64>, Array1<f64>)> {
    let dim = items
        .first()
        .ok_or_else(|| Error::InvalidInput("no training items".into()))?
        .feats
        .ncols();
    let mut mean = Array1::<f64>::zeros(dim);
    let mut count = 0usize;
    for item in items {
        mean += &item.feats.sum_axis(ndarray::Axis(0));
        count += item.feats.nrows();
    }
    mean /= count as f64;
    let mut var = Array1::<f64>::zeros(dim);
    for item in items {
        for row in item.feats.rows() {
            for c in 0..dim {
                let d = row[c] - mean[c];
                var[c] += d * d;
            }
        }
    }
    var /= count as f64;
    Ok((mean, var.mapv(f64::sqrt)))
}

/// Per-step scalar metrics, one CSV row each.
#[derive(Debug, Clone, Copy)]
pub struct StepMetrics {
    pub step: u64,
    pub l_rec: f64,
    pub l_adv: f64,
    pub d_acc: f64,
    pub wall_ms: f64,
}

/// Build the in-graph masked reconstruction term for one sample: mean
/// squared error between the prediction and the standardized target over
/// masked frames.
pub fn masked_mse_graph(g: &mut Graph, pred: Var, target_std: &Array2<f64>, mask: &MaskSpec) -> Var {
    let (t, d) = target_std.dim();
    assert_eq!(g.tape.value(pred).dim(), (t, d));
    let tgt = g.tape.leaf(target_std.clone());
    let diff = g.tape.sub(pred, tgt);
    let sq = g.tape.mul(diff, diff);
    let sel = Array2::from_shape_fn((t, d), |(r, _)| if mask.contains(r) { 1.0 } else { 0.0 });
    let masked = g.tape.mul_const(sq, sel);
    let sum = g.tape.sum_all(masked);
    g.tape.scale(sum, 1.0 / (mask.length * d) as f64)
}

/// One side's contribution to the adversarial objective for one sample:
/// the sum (not mean) of frame log-terms over observed frames, to be
/// scaled by the caller with 1/(total frames on that side). Masked frames
/// are excluded: the discriminator judges only observed content.
pub fn adversarial_term_graph(g: &mut Graph, d_out: Var, mask: Option<&MaskSpec>, neutral: bool) -> Var {
    let t = g.tape.value(d_out).nrows();
    let term = if neutral {
        g.tape.ln_clamped(d_out)
    } else {
        let flipped = g.tape.affine_const(d_out, -1.0, 1.0);
        g.tape.ln_clamped(flipped)
    };
    let sel = Array2::from_shape_fn((t, 1), |(r, _)| {
        let observed = mask.map_or(true, |m| !m.contains(r));
        if observed {
            1.0
        } else {
            0.0
        }
    });
    let masked = g.tape.mul_const(term, sel);
    g.tape.sum_all(masked)
}

fn observed_frames(t: usize, mask: Option<&MaskSpec>) -> usize {
    match mask {
        Some(m) => t - m.length,
        None => t,
    }
}

/// Sum `delta` into `into`, by key.
fn accumulate_grads(into: &mut IndexMap<String, Array2<f64>>, delta: IndexMap<String, Array2<f64>>) {
    for (name, grad) in delta {
        match into.get_mut(&name) {
            Some(acc) => *acc += &grad,
            None => {
                into.insert(name, grad);
            }
        }
    }
}

fn retain_prefix(grads: &mut IndexMap<String, Array2<f64>>, keep_disc: bool) {
    grads.retain(|name, _| name.starts_with("disc.") == keep_disc);
}

/// Frame-weighted accuracy of the discriminator on its observed frames.
fn frame_accuracy(probs: &[f64], neutral: bool) -> (usize, usize) {
    let correct = probs
        .iter()
        .filter(|p| if neutral { **p > 0.5 } else { **p < 0.5 })
        .count();
    (correct, probs.len())
}

struct SampleTask<'a> {
    item: &'a TrainItem,
    mask: MaskSpec,
    rng_seed: u64,
}

struct SampleResult {
    grads: IndexMap<String, Array2<f64>>,
    adv_sum: f64,
    rec: f64,
    d_correct: usize,
    d_total: usize,
}

/// One optimization step: `d_steps_per_g_step` discriminator updates, then
/// one generator update, on the given batch. Gradients accumulate across
/// per-sample graphs. Masks are passed in so the discriminator phase and
/// the generator phase see the same regions.
fn run_phase(
    model: &ModelParams,
    tasks: &[SampleTask],
    neutral_frames: usize,
    other_frames: usize,
    cfg: &TrainConfig,
    update_disc: bool,
) -> Result<(IndexMap<String, Array2<f64>>, f64, f64, f64)> {
    let mcfg = model.config.clone();
    let batch = tasks.len();
    let run_one = |task: &SampleTask| -> SampleResult {
        let mut rng = ChaCha8Rng::seed_from_u64(task.rng_seed);
        let mut g = Graph::read_only(&model.set, model.seed);
        let neutral = task.item.emotion == EmotionLabel::Neutral;
        let side_count = if neutral { neutral_frames } else { other_frames };
        let (pred, h_c) = generator_forward(
            &mut g,
            &mcfg,
            &task.item.tokens,
            &task.item.feats,
            &task.mask,
            task.item.emotion,
            !update_disc,
            &mut rng,
        );
        let d_out = discriminator(&mut g, &mcfg, h_c, task.item.feats.nrows());
        let adv_sum_var = adversarial_term_graph(&mut g, d_out, Some(&task.mask), neutral);
        let adv_weighted = if side_count > 0 {
            g.tape.scale(adv_sum_var, 1.0 / side_count as f64)
        } else {
            g.tape.scale(adv_sum_var, 0.0)
        };
        let target = model.standardize(&task.item.feats);
        let rec = masked_mse_graph(&mut g, pred, &target, &task.mask);
        // discriminator phase: minimize -L_adv; generator phase: minimize
        // lambda * L_adv + L_rec / batch
        let loss = if update_disc {
            g.tape.scale(adv_weighted, -1.0)
        } else {
            let adv = g.tape.scale(adv_weighted, cfg.lambda_adv);
            let rec_b = g.tape.scale(rec, 1.0 / batch as f64);
            g.tape.add(adv, rec_b)
        };
        let grads = g.backward(loss);
        let probs: Vec<f64> = {
            let dv = g.tape.value(d_out);
            (0..dv.nrows())
                .filter(|f| !task.mask.contains(*f))
                .map(|f| dv[[f, 0]])
                .collect()
        };
        let (d_correct, d_total) = frame_accuracy(&probs, neutral);
        SampleResult {
            grads,
            adv_sum: g.tape.scalar(adv_weighted),
            rec: g.tape.scalar(rec),
            d_correct,
            d_total,
        }
    };

    let results: Vec<SampleResult> = if batch > 1 {
        std::thread::scope(|scope| {
            let handles: Vec<_> = tasks
                .iter()
                .map(|task| scope.spawn(move || run_one(task)))
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        })
    } else {
        tasks.iter().map(run_one).collect()
    };

    let mut grads = IndexMap::new();
    let mut l_adv = 0.0;
    let mut rec_mean = 0.0;
    let mut correct = 0usize;
    let mut total = 0usize;
    for r in results {
        let mut g = r.grads;
        retain_prefix(&mut g, update_disc);
        accumulate_grads(&mut grads, g);
        l_adv += r.adv_sum;
        rec_mean += r.rec / batch as f64;
        correct += r.d_correct;
        total += r.d_total;
    }
    if !l_adv.is_finite() || !rec_mean.is_finite() {
        return Err(Error::NonFinite(format!(
            "training loss diverged: L_adv {l_adv}, L_rec {rec_mean}"
        )));
    }
    let acc = if total > 0 {
        correct as f64 / total as f64
    } else {
        0.0
    };
    Ok((grads, l_adv, rec_mean, acc))
}

/// One full training step on a batch of items. Returns the metrics of the
/// generator phase.
pub fn train_step(
    model: &mut ModelParams,
    batch: &[&TrainItem],
    cfg: &TrainConfig,
    step: u64,
    adam: &Adam,
) -> Result<StepMetrics> {
    if batch.is_empty() {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    let start = Instant::now();
    let mut mask_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (0x5EED ^ step).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mut tasks = Vec::with_capacity(batch.len());
    for (i, item) in batch.iter().enumerate() {
        let t = item.feats.nrows();
        let mask = sample_mask(t, cfg.mask_ratio, &mut mask_rng)?;
        tasks.push(SampleTask {
            item,
            mask,
            rng_seed: cfg.seed ^ step.wrapping_mul(1_000_003) ^ (i as u64) << 32,
        });
    }
    let neutral_frames: usize = tasks
        .iter()
        .filter(|t| t.item.emotion == EmotionLabel::Neutral)
        .map(|t| observed_frames(t.item.feats.nrows(), Some(&t.mask)))
        .sum();
    let other_frames: usize = tasks
        .iter()
        .filter(|t| t.item.emotion != EmotionLabel::Neutral)
        .map(|t| observed_frames(t.item.feats.nrows(), Some(&t.mask)))
        .sum();

    for _ in 0..cfg.d_steps_per_g_step {
        let (d_grads, _, _, _) = run_phase(model, &tasks, neutral_frames, other_frames, cfg, true)?;
        adam.step(&mut model.set, &d_grads);
    }
    let (g_grads, l_adv, l_rec, d_acc) =
        run_phase(model, &tasks, neutral_frames, other_frames, cfg, false)?;
    adam.step(&mut model.set, &g_grads);

    Ok(StepMetrics {
        step,
        l_rec,
        l_adv,
        d_acc,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

#[derive(Debug)]
pub struct TrainSummary {
    pub steps_run: u64,
    pub final_metrics: StepMetrics,
    pub history: Vec<StepMetrics>,
    pub checkpoint: std::path::PathBuf,
    pub metrics_csv: std::path::PathBuf,
}

/// The full loop: standardization setup, seed-determined batch order,
/// per-step metrics CSV, periodic checkpoints. `start_step` > 0 resumes an
/// earlier run (the caller loads the checkpointed model) and appends to
/// the metrics file.
pub fn train(
    model: &mut ModelParams,
    items: &[TrainItem],
    cfg: &TrainConfig,
    out_dir: &Path,
    start_step: u64,
) -> Result<TrainSummary> {
    cfg.validate()?;
    if items.is_empty() {
        return Err(Error::InvalidInput("no training items".into()));
    }
    for item in items {
        if item.feats.nrows() < 2 {
            return Err(Error::InvalidInput(format!(
                "{}: too short to mask",
                item.utt_id
            )));
        }
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    if start_step == 0 {
        let (mean, std) = compute_normalization(items)?;
        model.set_normalization(&mean, &std)?;
    }
    let metrics_path = out_dir.join("metrics.csv");
    let mut metrics_file = if start_step == 0 {
        let mut f = std::fs::File::create(&metrics_path).map_err(|e| Error::io(&metrics_path, e))?;
        writeln!(f, "step,l_rec,l_adv,d_acc,wall_ms").map_err(|e| Error::io(&metrics_path, e))?;
        f
    } else {
        std::fs::OpenOptions::new()
            .append(true)
            .open(&metrics_path)
            .map_err(|e| Error::io(&metrics_path, e))?
    };
    let checkpoint_path = out_dir.join("checkpoint.ckpt");
    let adam = Adam::new(cfg.lr);

    let mut order: Vec<usize> = (0..items.len()).collect();
    let mut epoch_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut cursor = items.len(); // force a shuffle on the first step
    let mut history = Vec::with_capacity(cfg.steps);
    let mut last = None;
    for step in start_step..cfg.steps as u64 {
        let mut batch = Vec::with_capacity(cfg.batch_size);
        while batch.len() < cfg.batch_size {
            if cursor >= order.len() {
                // new epoch: reshuffle in a seed-determined order
                for i in (1..order.len()).rev() {
                    let j = epoch_rng.gen_range(0..=i);
                    order.swap(i, j);
                }
                cursor = 0;
            }
            batch.push(&items[order[cursor]]);
            cursor += 1;
        }
        let m = train_step(model, &batch, cfg, step, &adam)?;
        writeln!(
            metrics_file,
            "{},{:.6},{:.6},{:.4},{:.1}",
            m.step, m.l_rec, m.l_adv, m.d_acc, m.wall_ms
        )
        .map_err(|e| Error::io(&metrics_path, e))?;
        if (step + 1) % cfg.checkpoint_every as u64 == 0 {
            model.save(&checkpoint_path, step + 1)?;
        }
        if step % 50 == 0 {
            log::info!(
                "step {step}: L_rec {:.4}, L_adv {:.4}, D acc {:.2}",
                m.l_rec,
                m.l_adv,
                m.d_acc
            );
        }
        history.push(m);
        last = Some(m);
    }
    model.save(&checkpoint_path, cfg.steps as u64)?;
    metrics_file.flush().map_err(|e| Error::io(&metrics_path, e))?;
    Ok(TrainSummary {
        steps_run: cfg.steps as u64 - start_step,
        final_metrics: last.ok_or_else(|| Error::InvalidInput("no steps run".into()))?,
        history,
        checkpoint: checkpoint_path,
        metrics_csv: metrics_path,
    })
}

/// Compare analytic generator gradients against central finite differences
/// on `n_params` randomly chosen scalar parameters. Returns the maximum
/// relative error. Meant for a tiny config in double precision.
pub fn grad_check(
    model: &mut ModelParams,
    item: &TrainItem,
    epsilon: f64,
    n_params: usize,
    seed: u64,
) -> Result<f64> {
    let cfg = TrainConfig {
        lambda_adv: 0.5,
        batch_size: 1,
        ..TrainConfig::default()
    };
    let t = item.feats.nrows();
    let mask = MaskSpec {
        start: t / 4,
        length: (t / 4).max(1),
    };
    let neutral = item.emotion == EmotionLabel::Neutral;
    let side = observed_frames(t, Some(&mask));

    let eval = |model: &ModelParams| -> (f64, IndexMap<String, Array2<f64>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut g = Graph::read_only(&model.set, model.seed);
        let (pred, h_c) = generator_forward(
            &mut g,
            &model.config.clone(),
            &item.tokens,
            &item.feats,
            &mask,
            item.emotion,
            false,
            &mut rng,
        );
        let d_out = discriminator(&mut g, &model.config.clone(), h_c, t);
        let adv_sum = adversarial_term_graph(&mut g, d_out, Some(&mask), neutral);
        let adv = g.tape.scale(adv_sum, cfg.lambda_adv / side as f64);
        let target = model.standardize(&item.feats);
        let rec = masked_mse_graph(&mut g, pred, &target, &mask);
        let loss = g.tape.add(adv, rec);
        let val = g.tape.scalar(loss);
        let grads = g.backward(loss);
        (val, grads)
    };

    let (_, mut grads) = eval(model);
    retain_prefix(&mut grads, false);
    // enumerate every scalar of every generator parameter, then sample
    let mut coords: Vec<(String, usize, usize)> = Vec::new();
    for (name, g) in &grads {
        for i in 0..g.nrows() {
            for j in 0..g.ncols() {
                coords.push((name.clone(), i, j));
            }
        }
    }
    if coords.len() < n_params {
        return Err(Error::InvalidInput(format!(
            "model exposes only {} generator parameters",
            coords.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_rel: f64 = 0.0;
    for _ in 0..n_params {
        let (name, i, j) = coords[rng.gen_range(0..coords.len())].clone();
        let analytic = grads[&name][[i, j]];
        model.set.get_mut(&name).unwrap()[[i, j]] += epsilon;
        let (plus, _) = eval(model);
        model.set.get_mut(&name).unwrap()[[i, j]] -= 2.0 * epsilon;
        let (minus, _) = eval(model);
        model.set.get_mut(&name).unwrap()[[i, j]] += epsilon;
        let fd = (plus - minus) / (2.0 * epsilon);
        // The denominator floor keeps cancellation noise on near-zero
        // gradients (unused embedding rows and the like) from reading as
        // relative error.
        let rel = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-6);
        if rel > max_rel {
            max_rel = rel;
        }
    }
    Ok(max_rel)
}

/// Settings for the content/emotion decoupling experiment on synthetic
/// data where "emotion" is an additive offset on the first channels.
#[derive(Debug, Clone)]
pub struct DecouplingConfig {
    pub hidden: usize,
    pub t: usize,
    pub n_pairs: usize,
    pub offset: f64,
    pub offset_channels: usize,
    pub phase1_steps: usize,
    pub phase2_steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for DecouplingConfig {
    fn default() -> Self {
        DecouplingConfig {
            hidden: 32,
            t: 40,
            n_pairs: 16,
            offset: 1.5,
            offset_channels: 8,
            phase1_steps: 2000,
            phase2_steps: 1500,
            batch: 8,
            lr: 1e-3,
            seed: 11,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct DecouplingReport {
    /// Discriminator accuracy with the content generator frozen at random
    /// initialization.
    pub frozen_accuracy: f64,
    /// Discriminator accuracy after adversarial training of the content
    /// generator.
    pub adversarial_accuracy: f64,
    /// Mean |D(content(x)) - D(content(x + offset))| over paired inputs
    /// after adversarial training.
    pub paired_gap: f64,
}

fn decoupling_data(cfg: &DecouplingConfig) -> Vec<(Array2<f64>, bool)> {
    // smooth multi-sine sequences; the "emotional" copy of each pair gets a
    // constant offset on the leading channels
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut data = Vec::with_capacity(cfg.n_pairs * 2);
    for _ in 0..cfg.n_pairs {
        let mut base = Array2::<f64>::zeros((cfg.t, model::FEAT_DIM));
        for c in 0..model::FEAT_DIM {
            let a1: f64 = rng.gen_range(0.3..1.0);
            let f1: f64 = rng.gen_range(0.02..0.2);
            let p1: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let a2: f64 = rng.gen_range(0.1..0.5);
            let f2: f64 = rng.gen_range(0.2..0.5);
            let p2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            for t in 0..cfg.t {
                let x = t as f64;
                base[[t, c]] = a1 * (std::f64::consts::TAU * f1 * x + p1).sin()
                    + a2 * (std::f64::consts::TAU * f2 * x + p2).sin();
            }
        }
        let mut shifted = base.clone();
        for c in 0..cfg.offset_channels {
            for t in 0..cfg.t {
                shifted[[t, c]] += cfg.offset;
            }
        }
        data.push((base, true));
        data.push((shifted, false));
    }
    data
}

fn decoupling_eval(
    model: &ModelParams,
    data: &[(Array2<f64>, bool)],
) -> (f64, Vec<Vec<f64>>) {
    let mut correct = 0usize;
    let mut total = 0usize;
    let mut all_probs = Vec::with_capacity(data.len());
    for (feats, neutral) in data {
        let mut g = Graph::read_only(&model.set, model.seed);
        let h_c = ncg(&mut g, &model.config, feats, feats.nrows());
        let p = discriminator(&mut g, &model.config, h_c, feats.nrows());
        let probs: Vec<f64> = g.tape.value(p).column(0).to_vec();
        let (c, n) = frame_accuracy(&probs, *neutral);
        correct += c;
        total += n;
        all_probs.push(probs);
    }
    (correct as f64 / total as f64, all_probs)
}

/// Train the discriminator against a frozen content generator, then train
/// both adversarially, reporting the discriminator's accuracy at both
/// stages. With the generator frozen the additive offset is detectable;
/// adversarial training strips it from the content representation.
pub fn decoupling_experiment(cfg: &DecouplingConfig) -> Result<DecouplingReport> {
    let mcfg = ModelConfig {
        hidden: cfg.hidden,
        text_conv_layers: 1,
        text_blocks: 1,
        decoder_blocks: 2,
        attention_heads: 4,
        token_embed_dim: cfg.hidden,
        dropout: 0.0,
        ..ModelConfig::default()
    };
    let mut model = ModelParams::new(mcfg, cfg.seed)?;
    let data = decoupling_data(cfg);
    let adam = Adam::new(cfg.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xDEC0);

    let phase = |model: &mut ModelParams,
                     steps: usize,
                     train_ncg: bool,
                     rng: &mut ChaCha8Rng|
     -> Result<()> {
        for _ in 0..steps {
            let mut batch: Vec<&(Array2<f64>, bool)> = Vec::with_capacity(cfg.batch);
            for _ in 0..cfg.batch {
                batch.push(&data[rng.gen_range(0..data.len())]);
            }
            // frames per side in this batch, for the frame-level means
            let bn: usize = batch.iter().filter(|d| d.1).map(|d| d.0.nrows()).sum();
            let bo: usize = batch.iter().map(|d| d.0.nrows()).sum::<usize>() - bn;
            let mut run_update = |disc_phase: bool| -> Result<()> {
                let mut grads = IndexMap::new();
                for (feats, neutral) in &batch {
                    let side = if *neutral { bn } else { bo };
                    if side == 0 {
                        continue;
                    }
                    let mut g = Graph::read_only(&model.set, model.seed);
                    let h_c = ncg(&mut g, &model.config, feats, feats.nrows());
                    let p = discriminator(&mut g, &model.config, h_c, feats.nrows());
                    let term = adversarial_term_graph(&mut g, p, None, *neutral);
                    let weighted = g.tape.scale(term, 1.0 / side as f64);
                    // discriminator maximizes the objective, the content
                    // generator minimizes it
                    let loss = if disc_phase {
                        g.tape.scale(weighted, -1.0)
                    } else {
                        weighted
                    };
                    let mut sample = g.backward(loss);
                    sample.retain(|name, _| {
                        if disc_phase {
                            name.starts_with("disc.")
                        } else {
                            name.starts_with("ncg.")
                        }
                    });
                    accumulate_grads(&mut grads, sample);
                }
                adam.step(&mut model.set, &grads);
                Ok(())
            };
            run_update(true)?;
            if train_ncg {
                run_update(false)?;
            }
        }
        Ok(())
    };

    phase(&mut model, cfg.phase1_steps, false, &mut rng)?;
    let (frozen_accuracy, _) = decoupling_eval(&model, &data);
    phase(&mut model, cfg.phase2_steps, true, &mut rng)?;
    let (adversarial_accuracy, probs) = decoupling_eval(&model, &data);

    // data holds pairs adjacently: (base, shifted)
    let mut gap = 0.0;
    let mut count = 0usize;
    for pair in probs.chunks(2) {
        if let [a, b] = pair {
            for (pa, pb) in a.iter().zip(b.iter()) {
                gap += (pa - pb).abs();
                count += 1;
            }
        }
    }
    Ok(DecouplingReport {
        frozen_accuracy,
        adversarial_accuracy,
        paired_gap: gap / count as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FEAT_DIM;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_item(t: usize, emotion: EmotionLabel, seed: u64) -> TrainItem {
        let mut r = rng(seed);
        let feats = Array2::from_shape_fn((t, FEAT_DIM), |_| r.gen_range(-1.0..1.0));
        let n_tokens = r.gen_range(2..8);
        TrainItem {
            utt_id: format!("utt{seed}"),
            tokens: (0..n_tokens).map(|_| r.gen_range(3..40)).collect(),
            emotion,
            feats,
        }
    }

    #[test]
    fn mask_length_law_and_clamp() {
        let mut r = rng(1);
        for _ in 0..200 {
            let m = sample_mask(1000, 0.12, &mut r).unwrap();
            assert_eq!(m.length, 120);
            assert!(m.start <= 880);
        }
        let m = sample_mask(8, 0.12, &mut r).unwrap();
        assert_eq!(m.length, 1);
        assert!(sample_mask(1, 0.12, &mut r).is_err());
    }

    #[test]
    fn mask_sampling_is_seeded_and_start_spreads() {
        let a = sample_mask(500, 0.12, &mut rng(7)).unwrap();
        let b = sample_mask(500, 0.12, &mut rng(7)).unwrap();
        assert_eq!(a, b);
        let mut r = rng(2);
        let starts: Vec<usize> = (0..2000)
            .map(|_| sample_mask(1000, 0.12, &mut r).unwrap().start)
            .collect();
        // coarse uniformity check over [0, 880]: each quarter gets a share
        let quarter = |lo: usize, hi: usize| starts.iter().filter(|s| **s >= lo && **s < hi).count();
        for (lo, hi) in [(0, 220), (220, 440), (440, 660), (660, 881)] {
            let n = quarter(lo, hi);
            assert!(
                (n as f64 - 500.0).abs() < 150.0,
                "starts in [{lo},{hi}): {n} of 2000"
            );
        }
    }

    #[test]
    fn adversarial_loss_reference_points() {
        let half = vec![vec![0.5; 10], vec![0.5; 5]];
        let l = adversarial_loss(&half, &half);
        assert!((l - (0.5f64.ln() + 0.5f64.ln())).abs() < 1e-12);
        assert!((l + 1.38629).abs() < 1e-5);

        // a perfect discriminator approaches zero from below
        let sure_neutral = vec![vec![1.0 - 1e-9; 8]];
        let sure_other = vec![vec![1e-9; 8]];
        let l = adversarial_loss(&sure_neutral, &sure_other);
        assert!(l < 0.0 && l > -1e-5, "{l}");

        // a fully fooled one is clamped, not infinite
        let l = adversarial_loss(&sure_other, &sure_neutral);
        assert!(l.is_finite());
        assert!((l - 2.0 * 1e-7f64.ln()).abs() < 1e-6);

        // empty sides fall back to the defined term
        let l = adversarial_loss(&[], &sure_other);
        assert!((l - (1.0f64 - 1e-9).max(1e-7).ln() * 1.0).abs() < 1e-9);
        assert_eq!(adversarial_loss(&[], &[]), 0.0);
    }

    #[test]
    fn reconstruction_loss_mask_contract() {
        let target = FeatureSequence {
            frames: Array2::from_shape_fn((20, FEAT_DIM), |(t, c)| (t * 31 + c) as f64 * 0.01),
        };
        let mask = MaskSpec { start: 5, length: 4 };
        let l = reconstruction_loss(&target, &target, &mask).unwrap();
        assert_eq!(l, 0.0);

        let off = FeatureSequence {
            frames: &target.frames + 1.0,
        };
        let l = reconstruction_loss(&off, &target, &mask).unwrap();
        assert!((l - 1.0).abs() < 1e-12);

        // perturbing outside the mask changes nothing, bit for bit
        let mut outside = off.frames.clone();
        outside[[0, 0]] += 100.0;
        outside[[15, 3]] -= 55.0;
        let l2 = reconstruction_loss(
            &FeatureSequence { frames: outside },
            &target,
            &mask,
        )
        .unwrap();
        assert_eq!(l, l2);

        let bad = MaskSpec { start: 18, length: 4 };
        assert!(reconstruction_loss(&off, &target, &bad).is_err());
    }

    #[test]
    fn objective_composition_laws() {
        let mut r = rng(3);
        for _ in 0..100 {
            let l_adv = r.gen_range(-5.0..0.0);
            let l_rec = r.gen_range(0.0..10.0);
            let cfg = TrainConfig {
                lambda_adv: r.gen_range(0.0..2.0),
                ..TrainConfig::default()
            };
            let (g, d) = objectives(l_adv, l_rec, &cfg);
            assert!((g - cfg.lambda_adv * l_adv - l_rec).abs() < 1e-12);
            assert_eq!(d, -l_adv);
        }
        let cfg = TrainConfig {
            lambda_adv: 0.0,
            ..TrainConfig::default()
        };
        let (g, _) = objectives(-1.3, 2.5, &cfg);
        assert_eq!(g, 2.5);
    }

    #[test]
    fn graph_losses_agree_with_scalar_functions() {
        // identity normalization so graph space and raw space coincide
        let mut model = ModelParams::new(ModelConfig::tiny(), 21).unwrap();
        let item = random_item(16, EmotionLabel::Happy, 40);
        let mask = MaskSpec { start: 3, length: 5 };

        let mut g = Graph::read_only(&model.set, model.seed);
        let pred_leaf = {
            let mut r = rng(41);
            Array2::from_shape_fn((16, FEAT_DIM), |_| r.gen_range(-1.0..1.0))
        };
        let pred = g.tape.leaf(pred_leaf.clone());
        let rec = masked_mse_graph(&mut g, pred, &item.feats, &mask);
        let expect = reconstruction_loss(
            &FeatureSequence { frames: pred_leaf },
            &FeatureSequence {
                frames: item.feats.clone(),
            },
            &mask,
        )
        .unwrap();
        assert!((g.tape.scalar(rec) - expect).abs() < 1e-12);

        // adversarial: one neutral and one non-neutral output, no masks
        let probs_n = vec![0.7, 0.6, 0.9];
        let probs_o = vec![0.2, 0.4];
        let dn = g
            .tape
            .leaf(Array2::from_shape_vec((3, 1), probs_n.clone()).unwrap());
        let do_ = g
            .tape
            .leaf(Array2::from_shape_vec((2, 1), probs_o.clone()).unwrap());
        let tn = adversarial_term_graph(&mut g, dn, None, true);
        let to = adversarial_term_graph(&mut g, do_, None, false);
        let tn = g.tape.scale(tn, 1.0 / 3.0);
        let to = g.tape.scale(to, 1.0 / 2.0);
        let total = g.tape.add(tn, to);
        let expect = adversarial_loss(&[probs_n], &[probs_o]);
        assert!((g.tape.scalar(total) - expect).abs() < 1e-12);
        let _ = &mut model;
    }

    #[test]
    fn adversarial_term_excludes_masked_frames() {
        let mut params = crate::nn::ParamSet::new();
        let mut g = Graph::new(&mut params, 0);
        let probs = Array2::from_shape_vec((4, 1), vec![0.9, 0.1, 0.1, 0.8]).unwrap();
        let p = g.tape.leaf(probs);
        let mask = MaskSpec { start: 1, length: 2 };
        let term = adversarial_term_graph(&mut g, p, Some(&mask), true);
        let expect = 0.9f64.ln() + 0.8f64.ln();
        assert!((g.tape.scalar(term) - expect).abs() < 1e-12);
    }

    #[test]
    fn train_step_is_deterministic_and_updates_both_sides() {
        let items: Vec<TrainItem> = vec![
            random_item(14, EmotionLabel::Neutral, 50),
            random_item(18, EmotionLabel::Angry, 51),
            random_item(12, EmotionLabel::Neutral, 52),
            random_item(16, EmotionLabel::Happy, 53),
        ];
        let cfg = TrainConfig {
            batch_size: 4,
            steps: 3,
            seed: 5,
            ..TrainConfig::default()
        };
        let run = || -> (Vec<(f64, f64, f64)>, ModelParams) {
            let mut model = ModelParams::new(ModelConfig::tiny(), 22).unwrap();
            let (mean, std) = compute_normalization(&items).unwrap();
            model.set_normalization(&mean, &std).unwrap();
            let adam = Adam::new(cfg.lr);
            let batch: Vec<&TrainItem> = items.iter().collect();
            let mut out = Vec::new();
            for step in 0..3 {
                let m = train_step(&mut model, &batch, &cfg, step, &adam).unwrap();
                out.push((m.l_rec, m.l_adv, m.d_acc));
            }
            (out, model)
        };
        let (a, model_a) = run();
        let (b, _) = run();
        assert_eq!(a, b, "same seed must give bit-identical metrics");

        // both parameter groups moved
        let fresh = ModelParams::new(ModelConfig::tiny(), 22).unwrap();
        let moved = |prefix: &str| {
            fresh.set.iter().any(|(name, tensor)| {
                name.starts_with(prefix) && model_a.set.get(name).unwrap() != tensor
            })
        };
        assert!(moved("disc."), "discriminator never updated");
        assert!(moved("dec."), "decoder never updated");
        assert!(moved("ncg."), "content generator never updated");
    }

    #[test]
    fn lambda_zero_still_trains_discriminator() {
        let items: Vec<TrainItem> = vec![
            random_item(14, EmotionLabel::Neutral, 60),
            random_item(14, EmotionLabel::Sad, 61),
        ];
        let cfg = TrainConfig {
            lambda_adv: 0.0,
            batch_size: 2,
            seed: 6,
            ..TrainConfig::default()
        };
        let mut model = ModelParams::new(ModelConfig::tiny(), 23).unwrap();
        let adam = Adam::new(cfg.lr);
        let batch: Vec<&TrainItem> = items.iter().collect();
        let fresh = model.clone();
        for step in 0..2 {
            train_step(&mut model, &batch, &cfg, step, &adam).unwrap();
        }
        let disc_moved = fresh.set.iter().any(|(name, tensor)| {
            name.starts_with("disc.") && model.set.get(name).unwrap() != tensor
        });
        assert!(disc_moved);
    }

    #[test]
    fn train_writes_metrics_and_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let items: Vec<TrainItem> = (0..4)
            .map(|i| {
                random_item(
                    12 + i,
                    if i % 2 == 0 {
                        EmotionLabel::Neutral
                    } else {
                        EmotionLabel::Surprise
                    },
                    70 + i as u64,
                )
            })
            .collect();
        let cfg = TrainConfig {
            batch_size: 2,
            steps: 6,
            checkpoint_every: 3,
            seed: 8,
            ..TrainConfig::default()
        };
        let mut model = ModelParams::new(ModelConfig::tiny(), 24).unwrap();
        let summary = train(&mut model, &items, &cfg, dir.path(), 0).unwrap();
        assert_eq!(summary.steps_run, 6);
        assert_eq!(summary.history.len(), 6);
        let csv = std::fs::read_to_string(&summary.metrics_csv).unwrap();
        assert!(csv.starts_with("step,l_rec,l_adv,d_acc,wall_ms"));
        assert_eq!(csv.lines().count(), 7);
        let (_, step) = ModelParams::load(&summary.checkpoint).unwrap();
        assert_eq!(step, 6);
    }

    #[test]
    fn gradient_check_on_tiny_model() {
        let mut model = ModelParams::new(ModelConfig::tiny(), 25).unwrap();
        let item = random_item(12, EmotionLabel::Happy, 80);
        let (mean, std) = compute_normalization(std::slice::from_ref(&item)).unwrap();
        model.set_normalization(&mean, &std).unwrap();
        let err = grad_check(&mut model, &item, 1e-5, 60, 3).unwrap();
        assert!(err <= 1e-3, "max relative gradient error {err}");
    }

    #[test]
    fn gradient_error_grows_with_coarse_epsilon() {
        let mut model = ModelParams::new(ModelConfig::tiny(), 26).unwrap();
        let item = random_item(10, EmotionLabel::Neutral, 81);
        let fine = grad_check(&mut model, &item, 1e-5, 25, 4).unwrap();
        let coarse = grad_check(&mut model, &item, 1e-1, 25, 4).unwrap();
        assert!(fine <= 1e-3);
        assert!(
            coarse > fine,
            "coarse step {coarse} should truncate worse than fine {fine}"
        );
    }

    #[test]
    fn decoupling_machinery_runs() {
        // a miniature run to exercise both phases end to end; the real
        // thresholds are checked by the acceptance experiment
        let cfg = DecouplingConfig {
            hidden: 16,
            t: 12,
            n_pairs: 4,
            phase1_steps: 4,
            phase2_steps: 4,
            batch: 4,
            ..DecouplingConfig::default()
        };
        let report = decoupling_experiment(&cfg).unwrap();
        assert!(report.frozen_accuracy.is_finite());
        assert!(report.adversarial_accuracy.is_finite());
        assert!(report.paired_gap.is_finite());
        assert!(report.paired_gap >= 0.0 && report.paired_gap <= 1.0);
    }

    #[test]
    fn non_finite_inputs_are_reported() {
        let mut item = random_item(12, EmotionLabel::Neutral, 90);
        item.feats[[0, 0]] = f64::INFINITY;
        let cfg = TrainConfig {
            batch_size: 1,
            seed: 9,
            ..TrainConfig::default()
        };
        let mut model = ModelParams::new(ModelConfig::tiny(), 27).unwrap();
        let adam = Adam::new(cfg.lr);
        let batch = [&item];
        let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
            train_step(&mut model, &batch, &cfg, 0, &adam)
        }));
        // either a structured error or the tape's finiteness guard
        match result {
            Ok(Ok(_)) => panic!("non-finite input must not train silently"),
            Ok(Err(_)) | Err(_) => {}
        }
    }
}
