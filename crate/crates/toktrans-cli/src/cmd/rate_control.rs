//! `rate-control`: probes whether the reference clip's speaking rate
//! steers decoded length. Fixed texts are decoded under synthesized
//! references spanning a rate sweep; output lengths (normalized by each
//! text's expansion units) are correlated against the reference rate, and
//! a constant-rate arm measures length stability across noise draws.

use std::fmt::Write as _;
use std::path::Path;

use toktrans_core::decoder::decode;
use toktrans_core::quantizer::{expansion_factor, synthesize_frames};
use toktrans_core::rng::Rng;

use crate::checkpoint::load_model;
use crate::config::{RunConfig, Split};
use crate::corpus::{load_manifest, load_split};
use crate::error::{CliError, Result};
use crate::eval::pearson;
use crate::report::write_csv;

#[derive(Debug)]
pub struct RateSummary {
    pub pearson_r: f64,
    pub mean_cv: f64,
    pub texts: usize,
    pub decodes: usize,
}

pub fn run(cfg: &RunConfig, corpus: &Path, ckpt: &Path, out: &Path) -> Result<RateSummary> {
    std::fs::create_dir_all(out).map_err(|e| CliError::io("creating output dir", out, e))?;
    let manifest = load_manifest(corpus)?;
    let (model, _) = load_model(ckpt)?;
    let test = load_split(corpus, Split::Test)?;
    let texts: Vec<&[usize]> =
        test.iter().take(cfg.rate.texts).map(|u| u.text.as_slice()).collect();
    if texts.is_empty() {
        return Err(CliError::corpus("rate control needs test utterances"));
    }
    if cfg.rate.rates.len() < 2 {
        return Err(CliError::config("rate.rates needs at least two rates"));
    }

    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut sweep_rates = Vec::new();
    let mut sweep_lengths = Vec::new();
    let mut decodes = 0usize;
    for (ti, text) in texts.iter().enumerate() {
        let units: usize = text.iter().map(|&s| expansion_factor(s)).sum();
        for (ri, &rate) in cfg.rate.rates.iter().enumerate() {
            for rep in 0..cfg.rate.repeats {
                let tag = 0x4A7E_0000 + ((ti as u64) << 16) + ((ri as u64) << 8) + rep as u64;
                let mut rng = Rng::child(cfg.seed, tag);
                let (frames, _) = synthesize_frames(
                    text,
                    rate,
                    manifest.feat_dim,
                    manifest.scale,
                    manifest.noise,
                    &mut rng,
                );
                let dcfg = cfg.decode_config(cfg.seed ^ tag);
                let mut session = model.decode_session(text, &frames)?;
                let result = decode(&mut session, &dcfg)?;
                let per_unit = result.tokens.len() as f64 / units as f64;
                sweep_rates.push(rate);
                sweep_lengths.push(per_unit);
                decodes += 1;
                rows.push(vec![
                    ti.to_string(),
                    rate.to_string(),
                    rep.to_string(),
                    result.tokens.len().to_string(),
                    units.to_string(),
                    format!("{per_unit:.4}"),
                ]);
            }
        }
    }
    let pearson_r = pearson(&sweep_rates, &sweep_lengths);

    // Constant-rate arm: same text and rate, fresh noise each repeat. The
    // coefficient of variation of decoded length measures stability.
    let mut cvs = Vec::new();
    for (ti, text) in texts.iter().enumerate() {
        let mut lengths = Vec::new();
        for rep in 0..cfg.rate.constant_repeats {
            let tag = 0x4A7F_0000 + ((ti as u64) << 8) + rep as u64;
            let mut rng = Rng::child(cfg.seed, tag);
            let (frames, _) = synthesize_frames(
                text,
                cfg.rate.constant_rate,
                manifest.feat_dim,
                manifest.scale,
                manifest.noise,
                &mut rng,
            );
            let dcfg = cfg.decode_config(cfg.seed ^ tag);
            let mut session = model.decode_session(text, &frames)?;
            lengths.push(decode(&mut session, &dcfg)?.tokens.len() as f64);
        }
        let n = lengths.len() as f64;
        let mean = lengths.iter().sum::<f64>() / n;
        if mean > 0.0 {
            let var = lengths.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>() / n;
            cvs.push(var.sqrt() / mean);
        }
    }
    let mean_cv = if cvs.is_empty() { 0.0 } else { cvs.iter().sum::<f64>() / cvs.len() as f64 };

    write_csv(
        &out.join("rate_control.csv"),
        &["text", "rate", "rep", "tokens", "units", "tokens_per_unit"],
        &rows,
    )?;
    let summary = RateSummary { pearson_r, mean_cv, texts: texts.len(), decodes };
    let mut s = String::new();
    let _ = writeln!(s, "pearson_r = {:.6}", summary.pearson_r);
    let _ = writeln!(s, "mean_cv = {:.6}", summary.mean_cv);
    let _ = writeln!(s, "texts = {}", summary.texts);
    let _ = writeln!(s, "decodes = {}", summary.decodes);
    let path = out.join("summary.txt");
    std::fs::write(&path, &s).map_err(|e| CliError::io("writing summary", &path, e))?;
    print!("{s}");
    cfg.save_resolved(out)?;
    Ok(summary)
}
