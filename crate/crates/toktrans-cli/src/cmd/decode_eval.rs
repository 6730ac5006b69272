//! `decode-eval`: decodes a held-out split with a trained checkpoint and
//! reports cluster-token error rates against the tokenized teacher, symbol
//! error rates against the true text, and decode timing.

use std::fmt::Write as _;
use std::path::Path;

use toktrans_core::model::PredictorKind;

use crate::checkpoint::{load_codebook, load_model};
use crate::config::{RunConfig, Split};
use crate::corpus::{load_manifest, load_split};
use crate::error::{CliError, Result};
use crate::eval::{build_token_map, evaluate_split, SplitEval};
use crate::report::write_csv;
use crate::timing::{pooled_tokens_per_s, TimingRow};

pub fn variant_name(kind: PredictorKind) -> &'static str {
    match kind {
        PredictorKind::Lstm => "lstm",
        PredictorKind::Attention => "attention",
    }
}

pub fn run(
    cfg: &RunConfig,
    corpus: &Path,
    codebook_path: &Path,
    ckpt: &Path,
    out: &Path,
    split: Split,
) -> Result<SplitEval> {
    std::fs::create_dir_all(out).map_err(|e| CliError::io("creating output dir", out, e))?;
    let manifest = load_manifest(corpus)?;
    let codebook = load_codebook(codebook_path)?;
    let (model, _) = load_model(ckpt)?;
    if model.config().token_vocab != codebook.len() {
        return Err(CliError::checkpoint(format!(
            "model emits {} token classes, codebook holds {}",
            model.config().token_vocab,
            codebook.len()
        )));
    }
    let train_utts = load_split(corpus, Split::Train)?;
    let utts = load_split(corpus, split)?;
    let (map, _) = build_token_map(&codebook, &train_utts, manifest.vocab, manifest.scale)?;
    let dcfg = cfg.decode_config(cfg.seed);
    let variant = variant_name(model.config().predictor);
    let eval = evaluate_split(&model, &codebook, &utts, &map, &dcfg, variant)?;

    let per_rows: Vec<Vec<String>> = eval
        .per_utt
        .iter()
        .map(|u| {
            vec![
                u.index.to_string(),
                u.teacher_len.to_string(),
                u.decoded_len.to_string(),
                format!("{:.6}", u.token_ops.error_rate()),
                format!("{:.6}", u.token_ops.ins_rate()),
                format!("{:.6}", u.token_ops.del_rate()),
                format!("{:.6}", u.token_ops.sub_rate()),
                format!("{:.6}", u.symbol_ops.error_rate()),
                (u.truncated as u8).to_string(),
            ]
        })
        .collect();
    write_csv(
        &out.join("per_utterance.csv"),
        &[
            "utterance",
            "teacher_len",
            "decoded_len",
            "token_cer",
            "token_ins",
            "token_del",
            "token_sub",
            "symbol_wer",
            "truncated",
        ],
        &per_rows,
    )?;
    let timing_rows: Vec<Vec<String>> = eval.timing.iter().map(TimingRow::csv_row).collect();
    write_csv(&out.join("timing.csv"), &TimingRow::HEADER, &timing_rows)?;

    let mut summary = String::new();
    let _ = writeln!(summary, "split = {}", split.name());
    let _ = writeln!(summary, "variant = {variant}");
    let _ = writeln!(summary, "utterances = {}", eval.per_utt.len());
    let _ = writeln!(summary, "token_cer = {:.6}", eval.token_ops.error_rate());
    let _ = writeln!(summary, "token_ins_rate = {:.6}", eval.token_ops.ins_rate());
    let _ = writeln!(summary, "token_del_rate = {:.6}", eval.token_ops.del_rate());
    let _ = writeln!(summary, "token_sub_rate = {:.6}", eval.token_ops.sub_rate());
    let _ = writeln!(summary, "symbol_wer = {:.6}", eval.symbol_ops.error_rate());
    let _ = writeln!(summary, "truncated = {}", eval.truncated);
    let _ = writeln!(summary, "tokens_per_s = {:.1}", pooled_tokens_per_s(&eval.timing));
    let path = out.join("summary.txt");
    std::fs::write(&path, &summary).map_err(|e| CliError::io("writing summary", &path, e))?;
    print!("{summary}");
    cfg.save_resolved(out)?;
    Ok(eval)
}
