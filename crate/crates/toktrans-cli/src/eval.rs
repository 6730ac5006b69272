//! Decode-quality evaluation: cluster-token error rates against the
//! tokenized teacher, and symbol error rates against the true text via the
//! expansion grammar's inverse.

use toktrans_core::decoder::DecodeConfig;
use toktrans_core::metrics::{levenshtein_ops, EditOps};
use toktrans_core::model::Model;
use toktrans_core::quantizer::{
    expansion_factor, symbol_centroid, tokenize, Codebook, Utterance,
};

use crate::error::{CliError, Result};
use crate::timing::{batch_decode_timed, TimingRow};

/// Cluster-to-symbol assignment, majority-voted from training data.
#[derive(Debug, Clone)]
pub struct TokenMap {
    map: Vec<usize>,
}

impl TokenMap {
    pub fn symbol(&self, token: usize) -> usize {
        self.map[token]
    }

    /// Fraction of voting frames whose cluster's majority symbol matches
    /// their own generating symbol.
    pub fn purity(votes: &[Vec<usize>]) -> f64 {
        let total: usize = votes.iter().flat_map(|v| v.iter()).sum();
        let majority: usize = votes.iter().map(|v| v.iter().copied().max().unwrap_or(0)).sum();
        if total == 0 {
            0.0
        } else {
            majority as f64 / total as f64
        }
    }
}

/// Votes `cluster -> generating symbol` over every frame of `utterances`.
/// Returns the per-cluster vote table alongside the map so callers can
/// report cluster purity.
pub fn build_token_map(
    codebook: &Codebook,
    utterances: &[Utterance],
    vocab: usize,
    scale: f64,
) -> Result<(TokenMap, Vec<Vec<usize>>)> {
    let mut votes = vec![vec![0usize; vocab]; codebook.len()];
    for utt in utterances {
        let tokens = tokenize(codebook, &utt.frames)?;
        for (tok, &sym) in tokens.iter().zip(&utt.gold_tokens) {
            if sym >= vocab {
                return Err(CliError::corpus(format!(
                    "gold symbol {sym} outside vocab {vocab}"
                )));
            }
            votes[*tok][sym] += 1;
        }
    }
    let feat_dim = codebook.dim();
    let map = votes
        .iter()
        .enumerate()
        .map(|(c, tally)| {
            let best = tally.iter().enumerate().max_by_key(|(_, &n)| n).unwrap();
            if *best.1 > 0 {
                return best.0;
            }
            // A cluster no training frame landed in falls back to the
            // nearest ground-truth centroid.
            let row = codebook.centroids().row(c);
            (0..vocab)
                .min_by(|&a, &b| {
                    let da = sq_dist(row, &symbol_centroid(a, feat_dim, scale));
                    let db = sq_dist(row, &symbol_centroid(b, feat_dim, scale));
                    da.partial_cmp(&db).unwrap()
                })
                .unwrap()
        })
        .collect();
    Ok((TokenMap { map }, votes))
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Inverts the expansion grammar: maps decoded cluster tokens to symbols,
/// collapses runs, and divides each run length by the per-symbol frame
/// count at `rate` to recover repeated text symbols.
pub fn symbols_from_tokens(tokens: &[usize], map: &TokenMap, rate: f64) -> Vec<usize> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let sym = map.symbol(tokens[i]);
        let mut run = 1;
        while i + run < tokens.len() && map.symbol(tokens[i + run]) == sym {
            run += 1;
        }
        let per = ((rate * expansion_factor(sym) as f64).round() as usize).max(1);
        let copies = ((run as f64 / per as f64).round() as usize).max(1);
        for _ in 0..copies {
            out.push(sym);
        }
        i += run;
    }
    out
}

/// Per-utterance decode scores.
#[derive(Debug, Clone)]
pub struct UttEval {
    pub index: usize,
    pub token_ops: EditOps,
    pub symbol_ops: EditOps,
    pub decoded_len: usize,
    pub teacher_len: usize,
    pub truncated: bool,
}

/// Pooled scores over a split.
#[derive(Debug, Clone)]
pub struct SplitEval {
    pub per_utt: Vec<UttEval>,
    pub token_ops: EditOps,
    pub symbol_ops: EditOps,
    pub truncated: usize,
    pub timing: Vec<TimingRow>,
}

/// Decodes every utterance against its own full reference frames and scores
/// cluster tokens against the tokenized teacher sequence, symbols against
/// the true text.
pub fn evaluate_split(
    model: &Model,
    codebook: &Codebook,
    utterances: &[Utterance],
    map: &TokenMap,
    cfg: &DecodeConfig,
    variant: &str,
) -> Result<SplitEval> {
    let items: Vec<(Vec<usize>, toktrans_core::tensor::Tensor)> =
        utterances.iter().map(|u| (u.text.clone(), u.frames.clone())).collect();
    let (results, timing) = batch_decode_timed(model, variant, &items, cfg)?;
    let mut per_utt = Vec::with_capacity(utterances.len());
    let mut token_ops = EditOps::default();
    let mut symbol_ops = EditOps::default();
    let mut truncated = 0;
    for (index, (utt, result)) in utterances.iter().zip(&results).enumerate() {
        let teacher = tokenize(codebook, &utt.frames)?;
        let t_ops = levenshtein_ops(&teacher, &result.tokens);
        let decoded_symbols = symbols_from_tokens(&result.tokens, map, utt.rate);
        let s_ops = levenshtein_ops(&utt.text, &decoded_symbols);
        token_ops.accumulate(&t_ops);
        symbol_ops.accumulate(&s_ops);
        truncated += result.truncated as usize;
        per_utt.push(UttEval {
            index,
            token_ops: t_ops,
            symbol_ops: s_ops,
            decoded_len: result.tokens.len(),
            teacher_len: teacher.len(),
            truncated: result.truncated,
        });
    }
    Ok(SplitEval { per_utt, token_ops, symbol_ops, truncated, timing })
}

/// Pearson correlation; 0 when either side has no variance.
pub fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    if n < 2.0 {
        return 0.0;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        cov += (x - mx) * (y - my);
        vx += (x - mx) * (x - mx);
        vy += (y - my) * (y - my);
    }
    if vx <= 0.0 || vy <= 0.0 {
        return 0.0;
    }
    cov / (vx.sqrt() * vy.sqrt())
}
