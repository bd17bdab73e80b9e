//! Objective evaluation: mel-cepstral distortion over a DTW alignment,
//! F0 statistics of edited regions by gender and emotion, and an LSTM
//! emotion classifier with confusion matrices.

pub mod plot;
pub mod ser;

use crate::corpus::{EmotionLabel, Gender};
use crate::editor::EditResult;
use crate::error::{Error, Result};
use crate::signal::FeatureSequence;
use indexmap::IndexMap;
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub use ser::{confusion_matrix, train_ser, SerConfig, SerModel};

/// Distortion scale: 10/ln(10), fixed by the dB convention.
pub const MCD_SCALE: f64 = 10.0 / std::f64::consts::LN_10;

/// How many cepstra enter the distortion: coefficients 1..=28, dropping
/// the energy term c0 and the final coefficient.
pub const MCD_DIM: usize = 28;

/// Mel-cepstral distortion between two cepstral vectors in dB:
/// `(10/ln10) * sqrt(2 * sum((a_i - b_i)^2))`.
pub fn mcd(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::InvalidInput(format!(
            "cepstral vectors of length {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let sum: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(MCD_SCALE * (2.0 * sum).sqrt())
}

/// The per-frame sub-vectors the distortion is computed on.
pub fn mcd_vectors(seq: &FeatureSequence) -> Result<Array2<f64>> {
    if seq.n_cepstra() < MCD_DIM + 1 {
        return Err(Error::InvalidInput(format!(
            "{} cepstra cannot supply the {MCD_DIM} distortion coefficients",
            seq.n_cepstra()
        )));
    }
    Ok(seq.frames.slice(ndarray::s![.., 1..MCD_DIM + 1]).to_owned())
}

fn euclidean(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Monotone alignment of two vector sequences minimizing cumulative
/// Euclidean cost with steps (1,0), (0,1), (1,1). Returns the path as
/// index pairs from (0,0) to (n-1,m-1). Ties prefer the diagonal, then
/// advancing the first sequence.
pub fn dtw_path(a: &Array2<f64>, b: &Array2<f64>) -> Result<Vec<(usize, usize)>> {
    let (n, m) = (a.nrows(), b.nrows());
    if n == 0 || m == 0 {
        return Err(Error::InvalidInput("cannot align an empty sequence".into()));
    }
    let mut cost = Array2::<f64>::zeros((n, m));
    // predecessor: 0 diagonal, 1 up (i-1), 2 left (j-1)
    let mut pred = Array2::<u8>::zeros((n, m));
    for i in 0..n {
        for j in 0..m {
            let local = euclidean(a.row(i), b.row(j));
            let (best, p) = match (i, j) {
                (0, 0) => (0.0, 0),
                (0, _) => (cost[[0, j - 1]], 2),
                (_, 0) => (cost[[i - 1, 0]], 1),
                _ => {
                    let diag = cost[[i - 1, j - 1]];
                    let up = cost[[i - 1, j]];
                    let left = cost[[i, j - 1]];
                    if diag <= up && diag <= left {
                        (diag, 0)
                    } else if up <= left {
                        (up, 1)
                    } else {
                        (left, 2)
                    }
                }
            };
            cost[[i, j]] = best + local;
            pred[[i, j]] = p;
        }
    }
    let mut path = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (n - 1, m - 1);
    loop {
        path.push((i, j));
        if i == 0 && j == 0 {
            break;
        }
        match pred[[i, j]] {
            0 => {
                i -= 1;
                j -= 1;
            }
            1 => i -= 1,
            _ => j -= 1,
        }
    }
    path.reverse();
    Ok(path)
}

/// Mean frame-pair distortion along the optimal DTW path between two
/// feature sequences.
pub fn mcd_dtw(a: &FeatureSequence, b: &FeatureSequence) -> Result<f64> {
    let va = mcd_vectors(a)?;
    let vb = mcd_vectors(b)?;
    let path = dtw_path(&va, &vb)?;
    let mut sum = 0.0;
    for (i, j) in &path {
        sum += mcd(va.row(*i).as_slice().unwrap(), vb.row(*j).as_slice().unwrap())?;
    }
    Ok(sum / path.len() as f64)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McdRow {
    pub utt_id: String,
    pub emotion: EmotionLabel,
    pub mcd_db: f64,
}

/// Per-utterance distortion rows plus aggregation helpers.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct McdReport {
    pub rows: Vec<McdRow>,
}

impl McdReport {
    pub fn push(&mut self, utt_id: &str, emotion: EmotionLabel, mcd_db: f64) {
        self.rows.push(McdRow {
            utt_id: utt_id.to_string(),
            emotion,
            mcd_db,
        });
    }

    pub fn overall_mean(&self) -> Option<f64> {
        if self.rows.is_empty() {
            return None;
        }
        Some(self.rows.iter().map(|r| r.mcd_db).sum::<f64>() / self.rows.len() as f64)
    }

    pub fn mean_by_emotion(&self) -> IndexMap<EmotionLabel, f64> {
        let mut sums: IndexMap<EmotionLabel, (f64, usize)> = IndexMap::new();
        for row in &self.rows {
            let e = sums.entry(row.emotion).or_insert((0.0, 0));
            e.0 += row.mcd_db;
            e.1 += 1;
        }
        sums.into_iter()
            .map(|(k, (s, n))| (k, s / n as f64))
            .collect()
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut text = String::from("utt_id,emotion,mcd_db\n");
        for r in &self.rows {
            text.push_str(&format!("{},{},{:.6}\n", r.utt_id, r.emotion.name(), r.mcd_db));
        }
        crate::util::atomic_write(path, text.as_bytes())
    }

    pub fn save_summary_json(&self, path: &Path) -> Result<()> {
        let by_emotion: IndexMap<String, f64> = self
            .mean_by_emotion()
            .into_iter()
            .map(|(e, v)| (e.name().to_string(), v))
            .collect();
        let summary = serde_json::json!({
            "utterances": self.rows.len(),
            "mean_mcd_db": self.overall_mean(),
            "mean_by_emotion": by_emotion,
        });
        crate::util::atomic_write(path, serde_json::to_string_pretty(&summary).unwrap().as_bytes())
    }
}

/// F0 statistics of one (gender, emotion) cell; `None` when the cell has
/// no voiced frames.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct F0Row {
    pub gender: Gender,
    pub emotion: EmotionLabel,
    pub voiced_frames: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std_hz: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct F0StatsTable {
    pub rows: Vec<F0Row>,
}

impl F0StatsTable {
    pub fn cell(&self, gender: Gender, emotion: EmotionLabel) -> Option<&F0Row> {
        self.rows
            .iter()
            .find(|r| r.gender == gender && r.emotion == emotion)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut text = String::from("gender,emotion,voiced_frames,mean_hz,std_hz\n");
        for r in &self.rows {
            let fmt = |v: Option<f64>| v.map(|x| format!("{x:.2}")).unwrap_or_default();
            text.push_str(&format!(
                "{:?},{},{},{},{}\n",
                r.gender,
                r.emotion.name(),
                r.voiced_frames,
                fmt(r.mean_hz),
                fmt(r.std_hz)
            ));
        }
        crate::util::atomic_write(path, text.as_bytes())
    }
}

/// Pool voiced-frame F0 over the generated regions of each edit, per
/// (gender, emotion). Cells without voiced frames stay empty rather than
/// reporting NaN.
pub fn f0_stats(edited: &[(EditResult, Gender, EmotionLabel)]) -> F0StatsTable {
    let mut pools: IndexMap<(Gender, EmotionLabel), Vec<f64>> = IndexMap::new();
    for (result, gender, emotion) in edited {
        let pool = pools.entry((*gender, *emotion)).or_default();
        let seq = &result.features;
        let (fcol, vcol) = (seq.log_f0_col(), seq.voicing_col());
        for region in result.generated_regions() {
            for t in region.start..region.end {
                if seq.frames[[t, vcol]] >= 0.5 {
                    pool.push(seq.frames[[t, fcol]].exp());
                }
            }
        }
    }
    let mut rows: Vec<F0Row> = pools
        .into_iter()
        .map(|((gender, emotion), pool)| {
            let n = pool.len();
            let (mean_hz, std_hz) = if n == 0 {
                (None, None)
            } else {
                let mean = pool.iter().sum::<f64>() / n as f64;
                let var = pool.iter().map(|f| (f - mean) * (f - mean)).sum::<f64>() / n as f64;
                (Some(mean), Some(var.sqrt()))
            };
            F0Row {
                gender,
                emotion,
                voiced_frames: n,
                mean_hz,
                std_hz,
            }
        })
        .collect();
    rows.sort_by_key(|r| (r.gender as u8, r.emotion.id()));
    F0StatsTable { rows }
}

/// Per-frame F0 in Hz over a whole sequence, `None` on unvoiced frames.
/// Feeds the F0-curve plots.
pub fn f0_curve(seq: &FeatureSequence) -> Vec<Option<f64>> {
    let (fcol, vcol) = (seq.log_f0_col(), seq.voicing_col());
    (0..seq.len())
        .map(|t| {
            if seq.frames[[t, vcol]] >= 0.5 {
                Some(seq.frames[[t, fcol]].exp())
            } else {
                None
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::editor::{Region, RegionSource};
    use crate::model::FEAT_DIM;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn mcd_reference_values() {
        let a = vec![0.0; 28];
        assert_eq!(mcd(&a, &a).unwrap(), 0.0);

        let b = vec![0.1; 28];
        let want = MCD_SCALE * (2.0 * 28.0 * 0.01_f64).sqrt();
        assert!((mcd(&a, &b).unwrap() - want).abs() < 1e-12);
        assert!((mcd(&a, &b).unwrap() - 3.2500).abs() < 1e-4);

        let mut c = vec![0.0; 28];
        c[7] = 1.0;
        assert!((mcd(&a, &c).unwrap() - MCD_SCALE * 2f64.sqrt()).abs() < 1e-12);
        assert!((mcd(&a, &c).unwrap() - 6.1418).abs() < 1e-4);

        assert!(mcd(&a, &vec![0.0; 27]).is_err());
        assert!(mcd(&[], &[]).is_err());
    }

    #[test]
    fn mcd_is_a_scaled_metric() {
        let mut r = rng(1);
        for _ in 0..200 {
            let a: Vec<f64> = (0..28).map(|_| r.gen_range(-2.0..2.0)).collect();
            let b: Vec<f64> = (0..28).map(|_| r.gen_range(-2.0..2.0)).collect();
            let c: Vec<f64> = (0..28).map(|_| r.gen_range(-2.0..2.0)).collect();
            let ab = mcd(&a, &b).unwrap();
            let ba = mcd(&b, &a).unwrap();
            assert_eq!(ab, ba);
            assert!(ab >= 0.0);
            let ac = mcd(&a, &c).unwrap();
            let cb = mcd(&c, &b).unwrap();
            assert!(ab <= ac + cb + 1e-9, "triangle violated: {ab} > {ac} + {cb}");
        }
    }

    fn random_seq(t: usize, r: &mut ChaCha8Rng) -> FeatureSequence {
        let mut frames = Array2::zeros((t, FEAT_DIM));
        for tt in 0..t {
            for c in 0..30 {
                frames[[tt, c]] = r.gen_range(-1.0..1.0);
            }
            frames[[tt, 31]] = 1.0;
            frames[[tt, 30]] = 5.0;
        }
        FeatureSequence { frames }
    }

    #[test]
    fn dtw_identity_is_zero_on_the_diagonal() {
        let mut r = rng(2);
        let a = random_seq(9, &mut r);
        assert_eq!(mcd_dtw(&a, &a).unwrap(), 0.0);
        let va = mcd_vectors(&a).unwrap();
        let path = dtw_path(&va, &va).unwrap();
        let diagonal: Vec<(usize, usize)> = (0..9).map(|i| (i, i)).collect();
        assert_eq!(path, diagonal);
    }

    #[test]
    fn dtw_absorbs_frame_duplication() {
        let mut r = rng(3);
        let a = random_seq(6, &mut r);
        let mut doubled = Array2::zeros((12, FEAT_DIM));
        for t in 0..6 {
            doubled.row_mut(2 * t).assign(&a.frames.row(t));
            doubled.row_mut(2 * t + 1).assign(&a.frames.row(t));
        }
        let b = FeatureSequence { frames: doubled };
        assert_eq!(mcd_dtw(&a, &b).unwrap(), 0.0);
    }

    /// Exhaustive monotone-path search, the oracle for the DP implementation.
    fn brute_force_mcd_dtw(a: &FeatureSequence, b: &FeatureSequence) -> f64 {
        let va = mcd_vectors(a).unwrap();
        let vb = mcd_vectors(b).unwrap();
        let (n, m) = (va.nrows(), vb.nrows());
        let mut best_cost = f64::INFINITY;
        let mut best_path: Vec<(usize, usize)> = Vec::new();
        let mut path = vec![(0usize, 0usize)];
        fn walk(
            va: &Array2<f64>,
            vb: &Array2<f64>,
            n: usize,
            m: usize,
            i: usize,
            j: usize,
            acc: f64,
            path: &mut Vec<(usize, usize)>,
            best_cost: &mut f64,
            best_path: &mut Vec<(usize, usize)>,
        ) {
            let acc = acc + euclidean(va.row(i), vb.row(j));
            if i == n - 1 && j == m - 1 {
                if acc < *best_cost {
                    *best_cost = acc;
                    *best_path = path.clone();
                }
                return;
            }
            let steps: [(usize, usize); 3] = [(1, 1), (1, 0), (0, 1)];
            for (di, dj) in steps {
                let (ni, nj) = (i + di, j + dj);
                if ni < n && nj < m {
                    path.push((ni, nj));
                    walk(va, vb, n, m, ni, nj, acc, path, best_cost, best_path);
                    path.pop();
                }
            }
        }
        walk(
            &va,
            &vb,
            n,
            m,
            0,
            0,
            0.0,
            &mut path,
            &mut best_cost,
            &mut best_path,
        );
        let mut sum = 0.0;
        for (i, j) in &best_path {
            sum += mcd(va.row(*i).as_slice().unwrap(), vb.row(*j).as_slice().unwrap()).unwrap();
        }
        sum / best_path.len() as f64
    }

    #[test]
    fn dtw_matches_exhaustive_search_exactly() {
        let mut r = rng(4);
        for _ in 0..40 {
            let n = r.gen_range(2..=8);
            let m = r.gen_range(2..=8);
            let a = random_seq(n, &mut r);
            let b = random_seq(m, &mut r);
            let fast = mcd_dtw(&a, &b).unwrap();
            let slow = brute_force_mcd_dtw(&a, &b);
            assert_eq!(fast, slow, "DP and exhaustive search disagree at {n}x{m}");
        }
    }

    #[test]
    fn report_aggregation_and_csv() {
        let mut report = McdReport::default();
        report.push("u1", EmotionLabel::Happy, 4.0);
        report.push("u2", EmotionLabel::Happy, 6.0);
        report.push("u3", EmotionLabel::Sad, 3.0);
        assert_eq!(report.overall_mean().unwrap(), 13.0 / 3.0);
        let by = report.mean_by_emotion();
        assert_eq!(by[&EmotionLabel::Happy], 5.0);
        assert_eq!(by[&EmotionLabel::Sad], 3.0);

        let dir = tempfile::tempdir().unwrap();
        let csv_path = dir.path().join("mcd.csv");
        report.save_csv(&csv_path).unwrap();
        let text = std::fs::read_to_string(&csv_path).unwrap();
        assert!(text.starts_with("utt_id,emotion,mcd_db"));
        assert_eq!(text.lines().count(), 4);
        report
            .save_summary_json(&dir.path().join("mcd.json"))
            .unwrap();
    }

    fn edit_with_f0(t: usize, hz: &[Option<f64>]) -> EditResult {
        let mut frames = Array2::zeros((t, FEAT_DIM));
        for (i, f) in hz.iter().enumerate() {
            if let Some(f) = f {
                frames[[i, 30]] = f.ln();
                frames[[i, 31]] = 1.0;
            }
        }
        EditResult {
            features: FeatureSequence { frames },
            regions: vec![Region {
                source: RegionSource::Generated,
                start: 0,
                end: t,
                emotion: Some(EmotionLabel::Happy),
            }],
        }
    }

    #[test]
    fn f0_stats_constant_tone_and_empty_cell() {
        let steady = edit_with_f0(5, &[Some(200.0); 5]);
        let table = f0_stats(&[(steady, Gender::Female, EmotionLabel::Happy)]);
        let cell = table.cell(Gender::Female, EmotionLabel::Happy).unwrap();
        assert_eq!(cell.voiced_frames, 5);
        assert!((cell.mean_hz.unwrap() - 200.0).abs() < 1e-9);
        assert!(cell.std_hz.unwrap().abs() < 1e-9);

        let silent = edit_with_f0(4, &[None; 4]);
        let table = f0_stats(&[(silent, Gender::Male, EmotionLabel::Sad)]);
        let cell = table.cell(Gender::Male, EmotionLabel::Sad).unwrap();
        assert_eq!(cell.voiced_frames, 0);
        assert!(cell.mean_hz.is_none() && cell.std_hz.is_none());

        let dir = tempfile::tempdir().unwrap();
        table.save_csv(&dir.path().join("f0.csv")).unwrap();
    }

    #[test]
    fn f0_stats_only_pools_generated_regions() {
        let mut result = edit_with_f0(10, &[Some(100.0); 10]);
        // first half original at 100 Hz, second half generated at 300 Hz
        for t in 5..10 {
            result.features.frames[[t, 30]] = 300.0f64.ln();
        }
        result.regions = vec![
            Region {
                source: RegionSource::Original,
                start: 0,
                end: 5,
                emotion: None,
            },
            Region {
                source: RegionSource::Generated,
                start: 5,
                end: 10,
                emotion: Some(EmotionLabel::Angry),
            },
        ];
        let table = f0_stats(&[(result, Gender::Female, EmotionLabel::Angry)]);
        let cell = table.cell(Gender::Female, EmotionLabel::Angry).unwrap();
        assert_eq!(cell.voiced_frames, 5);
        assert!((cell.mean_hz.unwrap() - 300.0).abs() < 1e-9);
    }

    #[test]
    fn f0_curve_marks_unvoiced_frames() {
        let seq = edit_with_f0(4, &[Some(150.0), None, Some(220.0), None]).features;
        let curve = f0_curve(&seq);
        assert_eq!(curve.len(), 4);
        assert!((curve[0].unwrap() - 150.0).abs() < 1e-9);
        assert!(curve[1].is_none());
        assert!((curve[2].unwrap() - 220.0).abs() < 1e-9);
        assert!(curve[3].is_none());
    }
}
