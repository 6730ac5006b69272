//! Harness around the transducer core: corpus generation, tokenizer
//! fitting, training, decoding with evaluation, lattice visualization, the
//! reference-crop ablation, and the rate-control probe. Everything the
//! `toktrans` binary can do is callable as a library function, so the
//! integration suite drives the same code paths as the command line.

pub mod checkpoint;
pub mod cmd;
pub mod config;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod report;
pub mod timing;

pub use config::{RunConfig, Split};
pub use error::{CliError, Result};
