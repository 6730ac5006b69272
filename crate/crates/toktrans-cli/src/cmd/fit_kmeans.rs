//! `fit-kmeans`: fits the semantic-token codebook on all training frames
//! and reports cluster purity against the generating symbols.

use std::path::Path;

use toktrans_core::quantizer::{kmeans_fit, Codebook};
use toktrans_core::tensor::Tensor;

use crate::checkpoint::save_codebook;
use crate::config::{RunConfig, Split};
use crate::corpus::{load_manifest, load_split};
use crate::error::{CliError, Result};
use crate::eval::{build_token_map, TokenMap};
use crate::report::write_csv;

#[derive(Debug)]
pub struct FitSummary {
    pub clusters: usize,
    pub frames: usize,
    pub inertia: f64,
    pub iters: usize,
    pub purity: f64,
}

pub fn run(cfg: &RunConfig, corpus: &Path, out: &Path) -> Result<FitSummary> {
    let manifest = load_manifest(corpus)?;
    let train = load_split(corpus, Split::Train)?;
    let total: usize = train.iter().map(|u| u.frames.rows()).sum();
    if total < cfg.tokenizer.k {
        return Err(CliError::corpus(format!(
            "{total} training frames cannot seed {} clusters",
            cfg.tokenizer.k
        )));
    }
    let mut data = Vec::with_capacity(total * manifest.feat_dim);
    for utt in &train {
        data.extend_from_slice(utt.frames.data());
    }
    let points = Tensor::new(&[total, manifest.feat_dim], data);
    // k-means++ still lands in merged-cluster optima now and then; the
    // cheapest reliable escape is independent restarts judged by inertia.
    let mut codebook = None;
    for restart in 0..cfg.tokenizer.restarts as u64 {
        let fit = kmeans_fit(
            &points,
            cfg.tokenizer.k,
            cfg.tokenizer.iters,
            cfg.seed ^ restart.wrapping_mul(0x9E37_79B9_7F4A_7C15),
        )?;
        let better =
            codebook.as_ref().map_or(true, |best: &Codebook| fit.inertia() < best.inertia());
        if better {
            codebook = Some(fit);
        }
    }
    let codebook = codebook.expect("at least one restart");
    save_codebook(out, &codebook)?;

    let (_, votes) = build_token_map(&codebook, &train, manifest.vocab, manifest.scale)?;
    let purity = TokenMap::purity(&votes);
    let report_dir = out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let rows: Vec<Vec<String>> = votes
        .iter()
        .enumerate()
        .map(|(c, tally)| {
            let frames: usize = tally.iter().sum();
            let (majority, &count) =
                tally.iter().enumerate().max_by_key(|(_, &n)| n).unwrap();
            let cluster_purity =
                if frames == 0 { 0.0 } else { count as f64 / frames as f64 };
            vec![
                c.to_string(),
                frames.to_string(),
                majority.to_string(),
                format!("{cluster_purity:.4}"),
            ]
        })
        .collect();
    write_csv(
        &report_dir.join("tokenizer_report.csv"),
        &["cluster", "frames", "majority_symbol", "purity"],
        &rows,
    )?;
    cfg.save_resolved(report_dir)?;
    Ok(FitSummary {
        clusters: codebook.len(),
        frames: total,
        inertia: codebook.inertia(),
        iters: codebook.iters(),
        purity,
    })
}
