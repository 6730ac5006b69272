//! On-disk corpus layout.
//!
//! ```text
//! corpus/
//!   manifest.txt            flat key = value source settings and counts
//!   train.tsv  dev.tsv  test.tsv
//!   blobs/<split>_<idx>.f64 raw little-endian f64 frames, row-major
//! ```
//!
//! Each TSV row holds `text`, `rate`, `tokens`, `frames`: symbol ids and
//! gold tokens as comma-separated integers, frames as a path relative to
//! the corpus root. Frame blob length must equal `tokens * feat_dim`
//! doubles, so a torn blob cannot load as a shorter utterance.

use std::fs;
use std::path::{Path, PathBuf};

use toktrans_core::quantizer::Utterance;
use toktrans_core::tensor::Tensor;

use crate::config::Split;
use crate::error::{CliError, Result};

/// Source settings a corpus was generated with, kept so later stages can
/// reconstruct references and symbol centroids without the original config.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub vocab: usize,
    pub feat_dim: usize,
    pub scale: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Manifest {
    fn render(&self, counts: &[(Split, usize)]) -> String {
        let mut s = String::new();
        s.push_str(&format!("vocab = {}\n", self.vocab));
        s.push_str(&format!("feat_dim = {}\n", self.feat_dim));
        s.push_str(&format!("scale = {}\n", self.scale));
        s.push_str(&format!("noise = {}\n", self.noise));
        s.push_str(&format!("seed = {}\n", self.seed));
        for (split, n) in counts {
            s.push_str(&format!("{}_utterances = {n}\n", split.name()));
        }
        s
    }
}

fn manifest_path(dir: &Path) -> PathBuf {
    dir.join("manifest.txt")
}

pub fn load_manifest(dir: &Path) -> Result<Manifest> {
    let path = manifest_path(dir);
    let text =
        fs::read_to_string(&path).map_err(|e| CliError::io("reading corpus manifest", &path, e))?;
    let mut vocab = None;
    let mut feat_dim = None;
    let mut scale = None;
    let mut noise = None;
    let mut seed = None;
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::corpus(format!("manifest line {line:?} is not key = value")))?;
        let (key, value) = (key.trim(), value.trim());
        let bad = |what: &str| CliError::corpus(format!("manifest key {key:?}: not {what}"));
        match key {
            "vocab" => vocab = Some(value.parse().map_err(|_| bad("an integer"))?),
            "feat_dim" => feat_dim = Some(value.parse().map_err(|_| bad("an integer"))?),
            "scale" => scale = Some(value.parse().map_err(|_| bad("a number"))?),
            "noise" => noise = Some(value.parse().map_err(|_| bad("a number"))?),
            "seed" => seed = Some(value.parse().map_err(|_| bad("an integer"))?),
            _ if key.ends_with("_utterances") => {}
            _ => return Err(CliError::corpus(format!("unknown manifest key {key:?}"))),
        }
    }
    let need = |name: &str| CliError::corpus(format!("manifest is missing {name}"));
    Ok(Manifest {
        vocab: vocab.ok_or_else(|| need("vocab"))?,
        feat_dim: feat_dim.ok_or_else(|| need("feat_dim"))?,
        scale: scale.ok_or_else(|| need("scale"))?,
        noise: noise.ok_or_else(|| need("noise"))?,
        seed: seed.ok_or_else(|| need("seed"))?,
    })
}

fn join_ids(ids: &[usize]) -> String {
    ids.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

fn parse_ids(field: &str, what: &str) -> Result<Vec<usize>> {
    field
        .split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| CliError::corpus(format!("{what} field {field:?} is not integers")))
        })
        .collect()
}

/// Writes the manifest, all split TSVs, and all frame blobs under `dir`.
pub fn save_corpus(
    dir: &Path,
    manifest: &Manifest,
    splits: &[(Split, &[Utterance])],
) -> Result<()> {
    let blob_dir = dir.join("blobs");
    fs::create_dir_all(&blob_dir).map_err(|e| CliError::io("creating blob dir", &blob_dir, e))?;
    let counts: Vec<(Split, usize)> = splits.iter().map(|(s, u)| (*s, u.len())).collect();
    let path = manifest_path(dir);
    fs::write(&path, manifest.render(&counts))
        .map_err(|e| CliError::io("writing corpus manifest", &path, e))?;
    for (split, utts) in splits {
        let mut tsv = String::from("text\trate\ttokens\tframes\n");
        for (idx, utt) in utts.iter().enumerate() {
            let rel = format!("blobs/{}_{idx:05}.f64", split.name());
            let blob: Vec<u8> =
                utt.frames.data().iter().flat_map(|x| x.to_le_bytes()).collect();
            let blob_path = dir.join(&rel);
            fs::write(&blob_path, blob)
                .map_err(|e| CliError::io("writing frame blob", &blob_path, e))?;
            tsv.push_str(&format!(
                "{}\t{}\t{}\t{rel}\n",
                join_ids(&utt.text),
                utt.rate,
                join_ids(&utt.gold_tokens),
            ));
        }
        let tsv_path = dir.join(format!("{}.tsv", split.name()));
        fs::write(&tsv_path, tsv).map_err(|e| CliError::io("writing split table", &tsv_path, e))?;
    }
    Ok(())
}

pub fn load_split(dir: &Path, split: Split) -> Result<Vec<Utterance>> {
    let manifest = load_manifest(dir)?;
    let tsv_path = dir.join(format!("{}.tsv", split.name()));
    let text = fs::read_to_string(&tsv_path)
        .map_err(|e| CliError::io("reading split table", &tsv_path, e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some("text\trate\ttokens\tframes") => {}
        other => {
            return Err(CliError::corpus(format!(
                "{}: bad header {other:?}",
                tsv_path.display()
            )));
        }
    }
    let mut out = Vec::new();
    for (idx, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(CliError::corpus(format!(
                "{} row {}: expected 4 fields, got {}",
                tsv_path.display(),
                idx + 1,
                fields.len()
            )));
        }
        let text = parse_ids(fields[0], "text")?;
        let rate: f64 = fields[1]
            .parse()
            .map_err(|_| CliError::corpus(format!("rate field {:?} is not a number", fields[1])))?;
        let tokens = parse_ids(fields[2], "tokens")?;
        let blob_path = dir.join(fields[3]);
        let blob =
            fs::read(&blob_path).map_err(|e| CliError::io("reading frame blob", &blob_path, e))?;
        let expect = tokens.len() * manifest.feat_dim * 8;
        if blob.len() != expect {
            return Err(CliError::corpus(format!(
                "{}: blob holds {} bytes, row expects {expect}",
                blob_path.display(),
                blob.len()
            )));
        }
        let data: Vec<f64> = blob
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        out.push(Utterance {
            text,
            rate,
            frames: Tensor::new(&[tokens.len(), manifest.feat_dim], data),
            gold_tokens: tokens,
        });
    }
    Ok(out)
}
