//! Emotion-selectable text-based speech editing.
//!
//! The crate covers the full pipeline: corpus ingestion and augmentation,
//! acoustic feature extraction, a mask-and-predict acoustic model whose
//! output emotion is a selectable input, adversarial removal of the source
//! emotion from the text-side representation, word-level edit operations
//! (delete, insert, replace), and objective evaluation (mel-cepstral
//! distortion, F0 statistics, a speech emotion classifier).
//!
//! Start with the `examples/` directory; each file there exercises one
//! capability end to end.

pub mod augment;
pub mod commands;
pub mod corpus;
pub mod editor;
pub mod error;
pub mod evalkit;
pub mod model;
pub mod nn;
pub mod signal;
pub mod synth;
pub mod training;
pub mod util;

pub use error::{Error, Result};
