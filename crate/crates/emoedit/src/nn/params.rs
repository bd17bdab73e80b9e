//! Named parameter tensors with deterministic initialization and a binary
//! checkpoint format.
//!
//! Checkpoint layout, little endian throughout:
//!
//! ```text
//! magic    8 bytes  "EMOCKPT1"
//! version  u32      currently 1
//! step     u64      training step the checkpoint was written at
//! count    u32      number of tensors
//! then per tensor:
//!   name_len u32, name bytes (utf-8), rows u32, cols u32, rows*cols f32
//! ```
//!
//! Values are stored as f32; parameters live in f64 in memory. Optimizer
//! state rides along under an "opt." name prefix so training can resume.

use crate::error::{Error, Result};
use crate::util::atomic_write;
use indexmap::IndexMap;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::io::Read;
use std::path::Path;

const MAGIC: &[u8; 8] = b"EMOCKPT1";
const VERSION: u32 = 1;

/// Initialization scheme for a parameter tensor.
#[derive(Debug, Clone, Copy)]
pub enum Init {
    Zeros,
    Ones,
    /// Uniform on [-limit, limit] with limit = sqrt(6 / (fan_in + fan_out)).
    Glorot,
    /// Uniform on [-scale, scale].
    Uniform(f64),
}

/// An ordered map of named f64 matrices.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    tensors: IndexMap<String, Array2<f64>>,
}

fn name_hash(name: &str) -> u64 {
    // FNV-1a, so initialization depends on the name but not on insertion
    // order
    let mut h: u64 = 0xcbf29ce484222325;
    for b in name.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

impl ParamSet {
    pub fn new() -> ParamSet {
        ParamSet::default()
    }

    pub fn insert(&mut self, name: &str, value: Array2<f64>) {
        self.tensors.insert(name.to_string(), value);
    }

    /// Create the named tensor if absent, seeded by `seed ^ hash(name)`.
    pub fn init(&mut self, name: &str, shape: (usize, usize), init: Init, seed: u64) {
        if self.tensors.contains_key(name) {
            return;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ name_hash(name));
        let value = match init {
            Init::Zeros => Array2::zeros(shape),
            Init::Ones => Array2::ones(shape),
            Init::Glorot => {
                let limit = (6.0 / (shape.0 + shape.1) as f64).sqrt();
                Array2::from_shape_fn(shape, |_| rng.gen_range(-limit..limit))
            }
            Init::Uniform(scale) => {
                Array2::from_shape_fn(shape, |_| rng.gen_range(-scale..scale))
            }
        };
        self.tensors.insert(name.to_string(), value);
    }

    pub fn get(&self, name: &str) -> Option<&Array2<f64>> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Array2<f64>> {
        self.tensors.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn remove(&mut self, name: &str) -> Option<Array2<f64>> {
        self.tensors.shift_remove(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Array2<f64>)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total scalar count across all tensors.
    pub fn param_count(&self) -> usize {
        self.tensors.values().map(|t| t.len()).sum()
    }

    pub fn save(&self, path: &Path, step: u64) -> Result<()> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.extend_from_slice(&step.to_le_bytes());
        buf.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, tensor) in &self.tensors {
            buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
            buf.extend_from_slice(name.as_bytes());
            buf.extend_from_slice(&(tensor.nrows() as u32).to_le_bytes());
            buf.extend_from_slice(&(tensor.ncols() as u32).to_le_bytes());
            for v in tensor.iter() {
                buf.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
        atomic_write(path, &buf)
    }

    /// Load a checkpoint, returning the parameters and the step they were
    /// saved at.
    pub fn load(path: &Path) -> Result<(ParamSet, u64)> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = std::io::BufReader::new(file);
        let mut buf = Vec::new();
        reader
            .read_to_end(&mut buf)
            .map_err(|e| Error::io(path, e))?;
        let mut pos = 0usize;
        let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
            if *pos + n > buf.len() {
                return Err(Error::Checkpoint(format!(
                    "{}: truncated at byte {}",
                    path.display(),
                    pos
                )));
            }
            let slice = &buf[*pos..*pos + n];
            *pos += n;
            Ok(slice)
        };
        if take(&mut pos, 8)? != MAGIC {
            return Err(Error::Checkpoint(format!(
                "{}: bad magic, not a checkpoint",
                path.display()
            )));
        }
        let version = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap());
        if version != VERSION {
            return Err(Error::Checkpoint(format!(
                "{}: unsupported version {version}",
                path.display()
            )));
        }
        let step = u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap());
        let count = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap());
        let mut set = ParamSet::new();
        for _ in 0..count {
            let name_len = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
            let name = String::from_utf8(take(&mut pos, name_len)?.to_vec())
                .map_err(|_| Error::Checkpoint(format!("{}: bad tensor name", path.display())))?;
            let rows = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
            let cols = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
            let payload = take(&mut pos, rows * cols * 4)?;
            let mut tensor = Array2::<f64>::zeros((rows, cols));
            for (i, v) in tensor.iter_mut().enumerate() {
                let b: [u8; 4] = payload[i * 4..i * 4 + 4].try_into().unwrap();
                *v = f32::from_le_bytes(b) as f64;
            }
            if tensor.iter().any(|v| !v.is_finite()) {
                return Err(Error::Checkpoint(format!(
                    "{}: non-finite values in tensor {name}",
                    path.display()
                )));
            }
            set.tensors.insert(name, tensor);
        }
        if pos != buf.len() {
            return Err(Error::Checkpoint(format!(
                "{}: {} trailing bytes",
                path.display(),
                buf.len() - pos
            )));
        }
        Ok((set, step))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic_per_name_and_seed() {
        let mut a = ParamSet::new();
        a.init("w1", (4, 3), Init::Glorot, 7);
        a.init("w2", (4, 3), Init::Glorot, 7);
        let mut b = ParamSet::new();
        // insertion order differs; values must not
        b.init("w2", (4, 3), Init::Glorot, 7);
        b.init("w1", (4, 3), Init::Glorot, 7);
        assert_eq!(a.get("w1").unwrap(), b.get("w1").unwrap());
        assert_eq!(a.get("w2").unwrap(), b.get("w2").unwrap());
        assert_ne!(a.get("w1").unwrap(), a.get("w2").unwrap());

        let mut c = ParamSet::new();
        c.init("w1", (4, 3), Init::Glorot, 8);
        assert_ne!(a.get("w1").unwrap(), c.get("w1").unwrap());
    }

    #[test]
    fn init_respects_existing_tensor() {
        let mut p = ParamSet::new();
        p.insert("w", Array2::from_elem((2, 2), 5.0));
        p.init("w", (2, 2), Init::Zeros, 1);
        assert_eq!(p.get("w").unwrap()[[0, 0]], 5.0);
    }

    #[test]
    fn glorot_limit_matches_fan_sum() {
        let mut p = ParamSet::new();
        p.init("w", (100, 50), Init::Glorot, 3);
        let limit = (6.0 / 150.0f64).sqrt();
        let w = p.get("w").unwrap();
        assert!(w.iter().all(|v| v.abs() <= limit));
        // values should actually spread out, not cluster at zero
        let spread = w.iter().map(|v| v.abs()).sum::<f64>() / w.len() as f64;
        assert!(spread > limit * 0.3);
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let mut p = ParamSet::new();
        p.init("enc.w", (5, 4), Init::Glorot, 11);
        p.init("enc.b", (1, 4), Init::Zeros, 11);
        p.init("opt.enc.w.m", (5, 4), Init::Zeros, 11);
        p.save(&path, 1234).unwrap();

        let (q, step) = ParamSet::load(&path).unwrap();
        assert_eq!(step, 1234);
        assert_eq!(q.len(), 3);
        // f32 storage: compare at f32 precision
        for (name, tensor) in p.iter() {
            let loaded = q.get(name).unwrap();
            for (a, b) in tensor.iter().zip(loaded.iter()) {
                assert!((a - b).abs() < 1e-6, "{name}: {a} vs {b}");
            }
        }
        // order preserved
        let names: Vec<&str> = q.names().collect();
        assert_eq!(names, ["enc.w", "enc.b", "opt.enc.w.m"]);
    }

    #[test]
    fn load_rejects_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let mut p = ParamSet::new();
        p.init("w", (3, 3), Init::Glorot, 2);
        p.save(&path, 5).unwrap();

        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(ParamSet::load(&path).is_err());

        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        std::fs::write(&path, &bad_magic).unwrap();
        assert!(ParamSet::load(&path).is_err());

        let mut trailing = bytes.clone();
        trailing.push(0);
        std::fs::write(&path, &trailing).unwrap();
        assert!(ParamSet::load(&path).is_err());
    }
}
