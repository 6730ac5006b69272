//! `gen-data`: draws the train/dev/test corpus from the synthetic source
//! and writes it under one directory. Split speaking-rate bands are
//! pairwise disjoint (enforced at configuration load), so held-out rates
//! are unseen in training by construction.

use std::fs;
use std::path::Path;

use toktrans_core::quantizer::{generate_corpus, Utterance};

use crate::config::{RunConfig, Split};
use crate::corpus::{save_corpus, Manifest};
use crate::error::{CliError, Result};

/// Per-split generation summary.
#[derive(Debug)]
pub struct GenSummary {
    pub split: Split,
    pub utterances: usize,
    pub frames: usize,
    pub min_rate: f64,
    pub max_rate: f64,
}

fn split_seed(seed: u64, split: Split) -> u64 {
    let tag = match split {
        Split::Train => 0,
        Split::Dev => 1,
        Split::Test => 2,
    };
    seed ^ (tag as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

pub fn run(cfg: &RunConfig, out: &Path, force: bool) -> Result<Vec<GenSummary>> {
    if out.exists() {
        if !force {
            return Err(CliError::new(
                "io",
                format!("output dir {} exists; pass --force to regenerate", out.display()),
            ));
        }
        fs::remove_dir_all(out).map_err(|e| CliError::io("clearing output dir", out, e))?;
    }
    fs::create_dir_all(out).map_err(|e| CliError::io("creating output dir", out, e))?;

    let mut generated: Vec<(Split, Vec<Utterance>)> = Vec::new();
    for split in Split::all() {
        let source = cfg.source_config(split);
        let utts = generate_corpus(&source, split_seed(cfg.seed, split))?;
        generated.push((split, utts));
    }
    let manifest = Manifest {
        vocab: cfg.data.vocab,
        feat_dim: cfg.data.feat_dim,
        scale: cfg.data.scale,
        noise: cfg.data.noise,
        seed: cfg.seed,
    };
    let splits: Vec<(Split, &[Utterance])> =
        generated.iter().map(|(s, u)| (*s, u.as_slice())).collect();
    save_corpus(out, &manifest, &splits)?;
    cfg.save_resolved(out)?;

    let mut summaries = Vec::new();
    for (split, utts) in &generated {
        let frames = utts.iter().map(|u| u.gold_tokens.len()).sum();
        let min_rate = utts.iter().map(|u| u.rate).fold(f64::INFINITY, f64::min);
        let max_rate = utts.iter().map(|u| u.rate).fold(f64::NEG_INFINITY, f64::max);
        summaries.push(GenSummary {
            split: *split,
            utterances: utts.len(),
            frames,
            min_rate,
            max_rate,
        });
    }
    Ok(summaries)
}
