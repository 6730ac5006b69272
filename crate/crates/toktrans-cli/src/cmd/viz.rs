//! `viz`: renders one utterance's lattice diagnostics as CSV and PGM pairs:
//! the forward log-alpha surface, the posterior node occupancy, and the
//! greedy decode's alignment staircase.

use std::fmt::Write as _;
use std::path::Path;

use toktrans_core::decoder::decode;
use toktrans_core::lattice::{forward_loss, posterior_occupancy};
use toktrans_core::quantizer::tokenize;

use crate::checkpoint::{load_codebook, load_model};
use crate::config::{RunConfig, Split};
use crate::corpus::load_split;
use crate::error::{CliError, Result};
use crate::report::{write_csv, write_matrix_csv, write_pgm};

#[derive(Debug)]
pub struct VizSummary {
    pub nll: f64,
    pub nll_per_token: f64,
    pub decoded_len: usize,
    pub teacher_len: usize,
}

pub fn run(
    cfg: &RunConfig,
    corpus: &Path,
    codebook_path: &Path,
    ckpt: &Path,
    out: &Path,
    split: Split,
    utterance: usize,
) -> Result<VizSummary> {
    let utts = load_split(corpus, split)?;
    if utterance >= utts.len() {
        return Err(CliError::args(format!(
            "utterance {utterance} outside {} split of {} utterances",
            split.name(),
            utts.len()
        )));
    }
    std::fs::create_dir_all(out).map_err(|e| CliError::io("creating output dir", out, e))?;
    let codebook = load_codebook(codebook_path)?;
    let (model, _) = load_model(ckpt)?;
    let utt = &utts[utterance];
    let teacher = tokenize(&codebook, &utt.frames)?;

    let joint = model.lattice(&utt.text, &teacher, &utt.frames)?;
    let forward = forward_loss(&joint, &teacher)?;
    write_matrix_csv(&out.join("log_alpha.csv"), &forward.alpha)?;
    write_pgm(&out.join("log_alpha.pgm"), &forward.alpha)?;
    let gamma = posterior_occupancy(&joint, &teacher)?;
    write_matrix_csv(&out.join("occupancy.csv"), &gamma)?;
    write_pgm(&out.join("occupancy.pgm"), &gamma)?;

    let mut session = model.decode_session(&utt.text, &utt.frames)?;
    let result = decode(&mut session, &cfg.decode_config(cfg.seed))?;
    let mask = result.alignment.mask();
    write_matrix_csv(&out.join("decoded_mask.csv"), &mask)?;
    write_pgm(&out.join("decoded_mask.pgm"), &mask)?;

    let decoded_rows = vec![vec![
        utterance.to_string(),
        result.tokens.iter().map(usize::to_string).collect::<Vec<_>>().join(" "),
    ]];
    write_csv(&out.join("decoded_tokens.csv"), &["utterance", "tokens"], &decoded_rows)?;

    let nll = forward.nll();
    let summary = VizSummary {
        nll,
        nll_per_token: nll / teacher.len().max(1) as f64,
        decoded_len: result.tokens.len(),
        teacher_len: teacher.len(),
    };
    let mut meta = String::new();
    let _ = writeln!(meta, "split = {}", split.name());
    let _ = writeln!(meta, "utterance = {utterance}");
    let _ = writeln!(
        meta,
        "text = {}",
        utt.text.iter().map(usize::to_string).collect::<Vec<_>>().join(" ")
    );
    let _ = writeln!(meta, "rate = {}", utt.rate);
    let _ = writeln!(meta, "teacher_len = {}", summary.teacher_len);
    let _ = writeln!(meta, "decoded_len = {}", summary.decoded_len);
    let _ = writeln!(meta, "nll = {:.6}", summary.nll);
    let _ = writeln!(meta, "nll_per_token = {:.6}", summary.nll_per_token);
    let path = out.join("meta.txt");
    std::fs::write(&path, &meta).map_err(|e| CliError::io("writing viz meta", &path, e))?;
    print!("{meta}");
    cfg.save_resolved(out)?;
    Ok(summary)
}
