//! `ablate-crop`: trains paired models with and without reference
//! cropping, then scores both under matched references (the utterance's
//! own frames) and mismatched references (another utterance from the same
//! rate band). Cropping is supposed to stop the model from copying the
//! reference, which shows up as a smaller matched-to-mismatched gap.

use std::fmt::Write as _;
use std::path::Path;

use toktrans_core::decoder::decode;
use toktrans_core::metrics::{levenshtein_ops, EditOps};
use toktrans_core::model::{Example, Model};
use toktrans_core::quantizer::{tokenize, Codebook, Utterance};
use toktrans_core::rng::Rng;

use crate::checkpoint::load_codebook;
use crate::cmd::train::{train_model, TrainJob};
use crate::config::{RunConfig, Split};
use crate::corpus::load_split;
use crate::error::{CliError, Result};
use crate::report::write_csv;

/// One (seed, arm) cell of the ablation.
#[derive(Debug, Clone)]
pub struct AblateRow {
    pub seed: u64,
    pub arm: &'static str,
    pub nll_per_token_matched: f64,
    pub nll_per_token_mismatched: f64,
    pub gap: f64,
    pub token_cer_matched: f64,
    pub token_cer_mismatched: f64,
}

/// Index of another utterance drawn from the same rate band.
fn partner_index(utts: &[Utterance], bands: &[(f64, f64)], i: usize, rng: &mut Rng) -> usize {
    let band_of = |rate: f64| bands.iter().position(|&(lo, hi)| rate >= lo && rate <= hi);
    let want = band_of(utts[i].rate);
    let candidates: Vec<usize> = (0..utts.len())
        .filter(|&j| j != i && band_of(utts[j].rate) == want)
        .collect();
    if candidates.is_empty() {
        // Single-utterance band: fall back to any other utterance.
        (i + 1) % utts.len()
    } else {
        candidates[rng.below(candidates.len())]
    }
}

struct ArmEval {
    nll_matched: f64,
    nll_mismatched: f64,
    cer_matched: f64,
    cer_mismatched: f64,
}

fn eval_arm(
    cfg: &RunConfig,
    model: &Model,
    codebook: &Codebook,
    utts: &[Utterance],
    partners: &[usize],
    seed: u64,
) -> Result<ArmEval> {
    let dcfg = cfg.decode_config(seed);
    let mut nll_m = 0.0;
    let mut nll_x = 0.0;
    let mut tokens = 0usize;
    let mut ops_m = EditOps::default();
    let mut ops_x = EditOps::default();
    for (i, utt) in utts.iter().enumerate() {
        let teacher = tokenize(codebook, &utt.frames)?;
        let other = &utts[partners[i]];
        let matched = Example { text: &utt.text, tokens: &teacher, frames: &utt.frames };
        let mismatched = Example { text: &utt.text, tokens: &teacher, frames: &other.frames };
        nll_m += model.exact_nll(&matched)?;
        nll_x += model.exact_nll(&mismatched)?;
        tokens += teacher.len();
        let mut s = model.decode_session(&utt.text, &utt.frames)?;
        ops_m.accumulate(&levenshtein_ops(&teacher, &decode(&mut s, &dcfg)?.tokens));
        let mut s = model.decode_session(&utt.text, &other.frames)?;
        ops_x.accumulate(&levenshtein_ops(&teacher, &decode(&mut s, &dcfg)?.tokens));
    }
    let denom = tokens.max(1) as f64;
    Ok(ArmEval {
        nll_matched: nll_m / denom,
        nll_mismatched: nll_x / denom,
        cer_matched: ops_m.error_rate(),
        cer_mismatched: ops_x.error_rate(),
    })
}

pub fn run(cfg: &RunConfig, corpus: &Path, codebook_path: &Path, out: &Path) -> Result<Vec<AblateRow>> {
    std::fs::create_dir_all(out).map_err(|e| CliError::io("creating output dir", out, e))?;
    let codebook = load_codebook(codebook_path)?;
    let train_utts = load_split(corpus, Split::Train)?;
    let dev_utts = load_split(corpus, Split::Dev)?;
    let subset = &train_utts[..cfg.ablate.train_utterances.min(train_utts.len())];
    let eval_utts = &dev_utts[..cfg.ablate.eval_utterances.min(dev_utts.len())];
    if subset.is_empty() || eval_utts.is_empty() {
        return Err(CliError::corpus("ablation needs nonempty train and dev splits"));
    }
    let teachers: Vec<Vec<usize>> = subset
        .iter()
        .map(|u| tokenize(&codebook, &u.frames))
        .collect::<toktrans_core::Result<_>>()?;
    let mut model_cfg = cfg.model_config();
    model_cfg.token_vocab = codebook.len();

    // One partner assignment per seed keeps the two arms directly
    // comparable within that seed.
    let mut rows = Vec::new();
    for seed_idx in 0..cfg.ablate.seeds {
        let seed = cfg.seed + seed_idx as u64;
        let mut rng = Rng::child(seed, 0xAB1A);
        let partners: Vec<usize> = (0..eval_utts.len())
            .map(|i| partner_index(eval_utts, &cfg.data.dev_bands, i, &mut rng))
            .collect();
        for (arm, crop) in [("crop", cfg.train.crop), ("full", 0usize)] {
            let job = TrainJob {
                utts: subset,
                teachers: &teachers,
                steps: cfg.ablate.steps,
                crop,
                seed,
                dev: None,
                checkpoint: None,
                quiet: true,
            };
            let run = train_model(cfg, model_cfg.clone(), &job)?;
            if let Some(abort) = run.aborted {
                return Err(CliError::train(format!(
                    "{arm} arm (seed {seed}) hit a non-finite loss at step {}",
                    abort.bad_step
                )));
            }
            let eval = eval_arm(cfg, &run.model, &codebook, eval_utts, &partners, seed)?;
            println!(
                "seed {seed} {arm}: nll/token matched {:.4} mismatched {:.4} gap {:.4} cer {:.4}/{:.4}",
                eval.nll_matched,
                eval.nll_mismatched,
                eval.nll_mismatched - eval.nll_matched,
                eval.cer_matched,
                eval.cer_mismatched,
            );
            rows.push(AblateRow {
                seed,
                arm,
                nll_per_token_matched: eval.nll_matched,
                nll_per_token_mismatched: eval.nll_mismatched,
                gap: eval.nll_mismatched - eval.nll_matched,
                token_cer_matched: eval.cer_matched,
                token_cer_mismatched: eval.cer_mismatched,
            });
        }
    }

    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.seed.to_string(),
                r.arm.to_string(),
                format!("{:.6}", r.nll_per_token_matched),
                format!("{:.6}", r.nll_per_token_mismatched),
                format!("{:.6}", r.gap),
                format!("{:.6}", r.token_cer_matched),
                format!("{:.6}", r.token_cer_mismatched),
            ]
        })
        .collect();
    write_csv(
        &out.join("ablation.csv"),
        &[
            "seed",
            "arm",
            "nll_per_token_matched",
            "nll_per_token_mismatched",
            "nll_gap",
            "token_cer_matched",
            "token_cer_mismatched",
        ],
        &csv_rows,
    )?;

    let mean = |arm: &str, f: &dyn Fn(&AblateRow) -> f64| {
        let vals: Vec<f64> = rows.iter().filter(|r| r.arm == arm).map(f).collect();
        vals.iter().sum::<f64>() / vals.len().max(1) as f64
    };
    let mut summary = String::new();
    for arm in ["crop", "full"] {
        let _ = writeln!(
            summary,
            "{arm}.nll_per_token_matched = {:.6}",
            mean(arm, &|r| r.nll_per_token_matched)
        );
        let _ = writeln!(
            summary,
            "{arm}.nll_per_token_mismatched = {:.6}",
            mean(arm, &|r| r.nll_per_token_mismatched)
        );
        let _ = writeln!(summary, "{arm}.nll_gap = {:.6}", mean(arm, &|r| r.gap));
        let _ = writeln!(
            summary,
            "{arm}.token_cer_mismatched = {:.6}",
            mean(arm, &|r| r.token_cer_mismatched)
        );
    }
    let path = out.join("summary.txt");
    std::fs::write(&path, &summary).map_err(|e| CliError::io("writing summary", &path, e))?;
    print!("{summary}");
    cfg.save_resolved(out)?;
    Ok(rows)
}
