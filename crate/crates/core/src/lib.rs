//! Desk-scale neural text classification for rumor / fake-news detection.
//!
//! The crate is organized as a pipeline:
//!
//! ```text
//! corpus  ->  tokenizer  ->  models  ->  training  ->  evaluation
//!                 |             |
//!                 +-- numerics (tensors + reverse-mode gradients)
//! ```
//!
//! Everything is f64, single-threaded per model, and deterministic for a
//! fixed seed.

pub mod corpus;
pub mod evaluation;
pub mod models;
pub mod numerics;
pub mod synth;
pub mod tokenizer;
pub mod training;
