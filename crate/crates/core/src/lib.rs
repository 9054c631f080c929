//! Utterance verification: decides whether recorded speech matches a text
//! script by force-aligning the script's phones and scoring each segment
//! against per-phone GMMs.
//!
//! Three confidence measures are provided: the log-likelihood ratio against
//! a pooled anti-model, the average phoneme rank of the aligned segments, and
//! a two-stage score that gates the rank average with the likelihood ratio.

pub mod acoustic;
pub mod align;
pub mod corpus;
pub mod error;
pub mod features;
pub mod frontend;
pub mod lexicon;
pub mod verify;

pub use error::{Error, Result};
