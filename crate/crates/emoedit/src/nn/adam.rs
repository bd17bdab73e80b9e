//! Adam optimizer with state stored inside the [`ParamSet`] under an
//! `opt.` name prefix, so checkpoints carry the moments and training can
//! resume exactly.

use super::params::ParamSet;
use indexmap::IndexMap;
use ndarray::Array2;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// State names used inside the parameter set. The step counter lives in a
/// (1,1) tensor so it serializes with everything else.
fn m_name(param: &str) -> String {
    format!("opt.{param}.m")
}
fn v_name(param: &str) -> String {
    format!("opt.{param}.v")
}
const STEP_NAME: &str = "opt.step";

#[derive(Debug, Clone, Copy)]
pub struct Adam {
    pub lr: f64,
}

impl Adam {
    pub fn new(lr: f64) -> Adam {
        Adam { lr }
    }

    /// Current step count, 0 before the first update.
    pub fn step_count(params: &ParamSet) -> u64 {
        params
            .get(STEP_NAME)
            .map(|t| t[[0, 0]] as u64)
            .unwrap_or(0)
    }

    /// Apply one update from name-keyed gradients. Parameters without a
    /// gradient entry are left untouched; gradients for unknown parameters
    /// are an error in the caller and panic here.
    pub fn step(&self, params: &mut ParamSet, grads: &IndexMap<String, Array2<f64>>) {
        let t = Self::step_count(params) + 1;
        let bias1 = 1.0 - BETA1.powi(t as i32);
        let bias2 = 1.0 - BETA2.powi(t as i32);
        for (name, grad) in grads {
            assert!(
                params.contains(name),
                "gradient for unknown parameter {name}"
            );
            assert!(
                !name.starts_with("opt."),
                "optimizer state must not receive gradients: {name}"
            );
            let (mn, vn) = (m_name(name), v_name(name));
            if !params.contains(&mn) {
                params.insert(&mn, Array2::zeros(grad.dim()));
                params.insert(&vn, Array2::zeros(grad.dim()));
            }
            {
                let m = params.get_mut(&mn).unwrap();
                *m *= BETA1;
                *m += &(grad * (1.0 - BETA1));
            }
            {
                let v = params.get_mut(&vn).unwrap();
                *v *= BETA2;
                *v += &(grad.mapv(|g| g * g) * (1.0 - BETA2));
            }
            let m_hat = params.get(&mn).unwrap() / bias1;
            let v_hat = params.get(&vn).unwrap() / bias2;
            let update = m_hat / v_hat.mapv(|v| v.sqrt() + ADAM_EPS) * self.lr;
            let p = params.get_mut(name).unwrap();
            *p -= &update;
        }
        params.insert(STEP_NAME, Array2::from_elem((1, 1), t as f64));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Graph, Init};

    #[test]
    fn converges_on_a_quadratic() {
        // minimize sum((w - target)^2)
        let target = Array2::from_shape_fn((3, 3), |(i, j)| (i * 3 + j) as f64 * 0.25 - 1.0);
        let mut params = ParamSet::new();
        params.init("w", (3, 3), Init::Uniform(2.0), 9);
        let adam = Adam::new(0.05);
        let mut last = f64::INFINITY;
        for step in 0..400 {
            let mut g = Graph::new(&mut params, 9);
            let w = g.param("w", (3, 3), Init::Uniform(2.0));
            let tgt = g.tape.leaf(target.clone());
            let diff = g.tape.sub(w, tgt);
            let sq = g.tape.mul(diff, diff);
            let loss = g.tape.sum_all(sq);
            let loss_val = g.tape.scalar(loss);
            if step == 399 {
                last = loss_val;
            }
            let grads = g.backward(loss);
            adam.step(&mut params, &grads);
        }
        assert!(last < 1e-6, "loss after 400 steps: {last}");
        assert_eq!(Adam::step_count(&params), 400);
    }

    #[test]
    fn resumed_state_matches_uninterrupted_run() {
        let target = Array2::from_elem((2, 2), 3.0);
        let run_steps = |params: &mut ParamSet, n: usize| {
            let adam = Adam::new(0.1);
            for _ in 0..n {
                let mut g = Graph::new(params, 4);
                let w = g.param("w", (2, 2), Init::Uniform(1.0));
                let tgt = g.tape.leaf(target.clone());
                let diff = g.tape.sub(w, tgt);
                let sq = g.tape.mul(diff, diff);
                let loss = g.tape.sum_all(sq);
                let grads = g.backward(loss);
                adam.step(params, &grads);
            }
        };

        let mut direct = ParamSet::new();
        direct.init("w", (2, 2), Init::Uniform(1.0), 4);
        run_steps(&mut direct, 20);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mid.ckpt");
        let mut resumed = ParamSet::new();
        resumed.init("w", (2, 2), Init::Uniform(1.0), 4);
        run_steps(&mut resumed, 10);
        resumed.save(&path, 10).unwrap();
        let (mut resumed, step) = ParamSet::load(&path).unwrap();
        assert_eq!(step, 10);
        run_steps(&mut resumed, 10);

        // checkpoints store f32, so allow that precision loss and nothing
        // more
        let a = direct.get("w").unwrap();
        let b = resumed.get("w").unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() < 1e-5, "{x} vs {y}");
        }
    }

    #[test]
    fn untouched_parameters_stay_fixed() {
        let mut params = ParamSet::new();
        params.init("w", (2, 2), Init::Uniform(1.0), 5);
        params.init("frozen", (2, 2), Init::Uniform(1.0), 6);
        let before = params.get("frozen").unwrap().clone();
        let mut grads = IndexMap::new();
        grads.insert("w".to_string(), Array2::from_elem((2, 2), 1.0));
        Adam::new(0.1).step(&mut params, &grads);
        assert_eq!(params.get("frozen").unwrap(), &before);
        assert_ne!(params.get("w").unwrap()[[0, 0]], 0.0);
    }
}
