//! Open-vocabulary pinyin-to-character conversion.
//!
//! This crate holds everything that does not need an operating system: the
//! pinyin inventory and dictionary, the adaptive bilingual vocabulary with its
//! maximum-matching segmenter, a small reverse-mode autodiff engine, the
//! attention encoder-decoder with character-enhanced word embeddings, the
//! lattice-constrained beam search, the online session engine and the
//! evaluation metrics. File IO, timing, the CLI and the HTTP service live in
//! the `oime` crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod corpus;
pub mod engine;
mod error;
pub mod eval;
pub mod model;
pub mod pinyin;
pub mod tensor;
pub mod trie;
pub mod vocab;

pub use error::{Error, Result};

/// Scalar type used by every tensor. `f64` unless the `f32` feature is on.
#[cfg(not(feature = "f32"))]
pub type Real = f64;
#[cfg(feature = "f32")]
pub type Real = f32;
