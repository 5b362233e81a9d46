//! Low-resource part-of-speech tagging: a BiLSTM tagger trained jointly on
//! distant (projected) and gold labels, cross-lingual embedding alignment by
//! CCA, and entropy-driven active learning.

pub mod active;
pub mod autodiff;
pub mod cli;
pub mod corpus;
pub mod embed;
pub mod error;
pub mod tagger;
pub mod trainer;
pub mod synthetic;

pub use error::{Error, Result};
