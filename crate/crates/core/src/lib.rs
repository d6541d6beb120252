//! Lip-sync aware candidate selection for automatic dubbing.
//!
//! The pipeline has two stages. The isochrony stage measures how long the
//! source actually speaks (pauses removed), converts that into a speaking
//! rate, and accepts the first translation whose rate-scaled duration and
//! sentence similarity both fall inside their gates. The phonetic stage then
//! expands candidate phoneme sequences to frames, masks everything except
//! vowels, and ranks candidates by banded DTW distance over a cross-lingual
//! vowel distance matrix, optionally blended with a semantic score.
//!
//! Every neural component (duration predictor, embedder, semantic scorer,
//! paraphraser, phonemizer) sits behind a trait in [`providers`]; the shipped
//! implementations read fixture files.

pub mod audio;
pub mod ctc;
pub mod dtw;
pub mod error;
pub mod format;
pub mod isochrony;
pub mod par;
pub mod pauses;
pub mod pipeline;
pub mod providers;
pub mod selection;
pub mod sequences;
pub mod vowel_space;

pub use error::{Error, Result};
pub use par::Execution;

/// Analysis sample rate in Hz.
pub const SAMPLE_RATE: u32 = 22050;
/// Samples per analysis window.
pub const WINDOW_SIZE: usize = 1024;
/// Samples between consecutive windows.
pub const HOP_SIZE: usize = 256;
