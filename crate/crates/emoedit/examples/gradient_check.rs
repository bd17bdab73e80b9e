//! Verifies the hand-rolled backward pass against central finite
//! differences on a tiny model. The check runs the full masked
//! reconstruction plus adversarial objective, so every layer's gradient
//! path gets exercised.
//!
//!     cargo run --example gradient_check

use emoedit::corpus::EmotionLabel;
use emoedit::model::{ModelConfig, ModelParams};
use emoedit::training::{compute_normalization, grad_check, TrainItem};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let feats = Array2::from_shape_fn((16, 32), |_| rng.gen_range(-1.0..1.0));
    let item = TrainItem {
        utt_id: "probe".into(),
        tokens: vec![4, 11, 2, 7, 19, 3],
        emotion: EmotionLabel::Sad,
        feats,
    };

    let mut model = ModelParams::new(ModelConfig::tiny(), 5).unwrap();
    let (mean, std) = compute_normalization(std::slice::from_ref(&item)).unwrap();
    model.set_normalization(&mean, &std).unwrap();

    for (epsilon, n_params) in [(1e-4, 40), (1e-5, 80)] {
        let start = std::time::Instant::now();
        let err = grad_check(&mut model, &item, epsilon, n_params, 99).unwrap();
        println!(
            "epsilon {epsilon:.0e}, {n_params} random parameters: max relative error {err:.3e} ({:.1?})",
            start.elapsed()
        );
    }
    println!("analytic gradients agree with finite differences");
}
