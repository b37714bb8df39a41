//! Polyphonic training data from monophonic clips: audio I/O, mixing
//! strategies, CQT features, training and evaluation.

pub mod audio;
pub mod dataset;
pub mod error;
pub mod features;
pub mod mixing;
pub mod pitchsync;
pub mod temposync;
pub mod traineval;
pub mod vocoder;

pub use error::{Error, Result};
