//! Text-to-semantic-token transduction at desk scale.
//!
//! The crate is organized around a differentiable alignment lattice: a
//! monotonic grid of emission and blank probabilities whose marginal gives
//! the likelihood of a token sequence given text. Around it sit a small
//! reverse-mode autodiff engine ([`tensor`]), the transducer network with
//! interchangeable prediction networks ([`model`]), a k-means tokenizer and
//! synthetic corpus source ([`quantizer`]), autoregressive decoding
//! ([`decoder`]), and edit-distance diagnostics ([`metrics`]).
//!
//! Everything is `f64`, deterministic under explicit seeds, and verified
//! against brute-force oracles in the test suites. The crate is
//! `no_std`-compatible (with `alloc`); file formats, reports and the CLI
//! live in the companion `toktrans-cli` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod decoder;
pub mod error;
pub mod lattice;
pub mod metrics;
pub mod model;
pub mod num;
pub mod quantizer;
pub mod rng;
pub mod tensor;

pub use error::{CoreError, Result};
