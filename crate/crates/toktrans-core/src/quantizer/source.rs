//! Synthetic embedding source: text drawn over a small symbol set, frames
//! generated as per-symbol ground-truth centroids plus Gaussian noise, with
//! a hidden per-symbol expansion grammar controlling frame counts.

use crate::error::{CoreError, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;
use alloc::vec::Vec;

/// Configuration of the synthetic source.
#[derive(Debug, Clone)]
pub struct SourceConfig {
    /// Text symbol count; symbol `s` owns ground-truth centroid `s`.
    pub vocab: usize,
    /// Frame embedding width.
    pub feat_dim: usize,
    /// Centroid coordinates are `+scale` or `-scale`.
    pub scale: f64,
    /// Per-dimension Gaussian noise on every frame.
    pub noise: f64,
    /// Inclusive text length range per utterance.
    pub text_len: (usize, usize),
    /// Speaking-rate bands; each utterance draws one band uniformly, then a
    /// rate uniformly inside it. Disjoint band sets give disjoint splits.
    pub rate_bands: Vec<(f64, f64)>,
    /// Number of utterances to generate.
    pub utterances: usize,
}

impl Default for SourceConfig {
    fn default() -> Self {
        Self {
            vocab: 26,
            feat_dim: 16,
            scale: 1.0,
            noise: 0.1,
            text_len: (4, 10),
            rate_bands: alloc::vec![(0.5, 3.0)],
            utterances: 100,
        }
    }
}

/// One generated utterance.
#[derive(Debug, Clone)]
pub struct Utterance {
    /// Symbol ids, length `U`.
    pub text: Vec<usize>,
    /// The speaking rate that scaled every expansion.
    pub rate: f64,
    /// `[L, feat_dim]` noisy frames, in text order.
    pub frames: Tensor,
    /// Generating centroid index per frame, length `L`.
    pub gold_tokens: Vec<usize>,
}

/// Hidden expansion grammar: symbol `s` spans this many base units, so at
/// rate `r` it produces `round(r * expansion_factor(s))` frames.
pub fn expansion_factor(symbol: usize) -> usize {
    symbol % 3 + 1
}

/// Ground-truth centroid of a symbol: a deterministic sign pattern scaled
/// by `scale`. The low bits carry the symbol index itself, so distinct
/// symbols always differ in at least one coordinate; the high bits come
/// from a mix so the codes spread apart.
pub fn symbol_centroid(symbol: usize, feat_dim: usize, scale: f64) -> Vec<f64> {
    let mut mixed = (symbol as u64).wrapping_add(0x9E37_79B9_7F4A_7C15);
    mixed = (mixed ^ (mixed >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    mixed = (mixed ^ (mixed >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    mixed ^= mixed >> 31;
    let mut index_bits = 0usize;
    while (1usize << index_bits) <= symbol {
        index_bits += 1;
    }
    (0..feat_dim)
        .map(|d| {
            let bit = if d < index_bits {
                (symbol >> d) & 1
            } else {
                ((mixed >> (d % 64)) & 1) as usize
            };
            if bit == 1 {
                scale
            } else {
                -scale
            }
        })
        .collect()
}

fn check_config(cfg: &SourceConfig) -> Result<()> {
    if cfg.vocab == 0 {
        return Err(CoreError::EmptyInput("source vocab"));
    }
    if cfg.utterances == 0 {
        return Err(CoreError::EmptyInput("source utterances"));
    }
    let mut bits = 0usize;
    while (1usize << bits) < cfg.vocab {
        bits += 1;
    }
    if cfg.feat_dim < bits.max(1) {
        return Err(CoreError::Invalid(alloc::format!(
            "feature dim {} cannot keep {} symbol codes distinct",
            cfg.feat_dim,
            cfg.vocab
        )));
    }
    if cfg.text_len.0 == 0 || cfg.text_len.0 > cfg.text_len.1 {
        return Err(CoreError::Invalid(alloc::format!(
            "bad text length range {:?}",
            cfg.text_len
        )));
    }
    if cfg.rate_bands.is_empty() {
        return Err(CoreError::EmptyInput("rate bands"));
    }
    for &(lo, hi) in &cfg.rate_bands {
        if !(lo > 0.0 && hi >= lo) {
            return Err(CoreError::Invalid(alloc::format!("bad rate band ({lo}, {hi})")));
        }
    }
    if !(cfg.noise >= 0.0 && cfg.scale > 0.0) {
        return Err(CoreError::Invalid(alloc::string::String::from(
            "noise must be nonnegative and scale positive",
        )));
    }
    Ok(())
}

/// Draws `cfg.utterances` utterances. Deterministic in `seed`; each
/// utterance spends its own child stream so edits to one draw cannot shift
/// the others.
pub fn generate_corpus(cfg: &SourceConfig, seed: u64) -> Result<Vec<Utterance>> {
    check_config(cfg)?;
    let mut out = Vec::with_capacity(cfg.utterances);
    for i in 0..cfg.utterances {
        let mut rng = Rng::child(seed, 0x5EED_0000 + i as u64);
        out.push(draw_utterance(cfg, &mut rng));
    }
    Ok(out)
}

/// Renders `text` at `rate`: symbol `s` spans `round(rate * expansion_factor(s))`
/// frames (at least one), each the symbol centroid plus Gaussian noise.
/// Returns the `[L, feat_dim]` frames and the generating symbol per frame.
pub fn synthesize_frames(
    text: &[usize],
    rate: f64,
    feat_dim: usize,
    scale: f64,
    noise: f64,
    rng: &mut Rng,
) -> (Tensor, Vec<usize>) {
    let mut gold_tokens = Vec::new();
    for &s in text {
        let frames = crate::num::round(rate * expansion_factor(s) as f64) as usize;
        for _ in 0..frames.max(1) {
            gold_tokens.push(s);
        }
    }
    let mut frames = Tensor::zeros(&[gold_tokens.len(), feat_dim]);
    for (i, &s) in gold_tokens.iter().enumerate() {
        let centroid = symbol_centroid(s, feat_dim, scale);
        let row = frames.row_mut(i);
        for (x, c) in row.iter_mut().zip(centroid) {
            *x = c + noise * rng.normal();
        }
    }
    (frames, gold_tokens)
}

fn draw_utterance(cfg: &SourceConfig, rng: &mut Rng) -> Utterance {
    let len = cfg.text_len.0 + rng.below(cfg.text_len.1 - cfg.text_len.0 + 1);
    let text: Vec<usize> = (0..len).map(|_| rng.below(cfg.vocab)).collect();
    let band = cfg.rate_bands[rng.below(cfg.rate_bands.len())];
    let rate = rng.uniform_in(band.0, band.1);
    let (frames, gold_tokens) =
        synthesize_frames(&text, rate, cfg.feat_dim, cfg.scale, cfg.noise, rng);
    Utterance { text, rate, frames, gold_tokens }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centroids_are_distinct_sign_codes() {
        for a in 0..32 {
            let ca = symbol_centroid(a, 16, 1.0);
            assert!(ca.iter().all(|&x| x == 1.0 || x == -1.0));
            for b in (a + 1)..32 {
                let cb = symbol_centroid(b, 16, 1.0);
                assert_ne!(ca, cb, "symbols {a} and {b} collide");
            }
        }
    }

    #[test]
    fn frame_counts_follow_rate_and_grammar() {
        let cfg = SourceConfig { utterances: 30, ..SourceConfig::default() };
        for utt in generate_corpus(&cfg, 5).unwrap() {
            let expect: usize = utt
                .text
                .iter()
                .map(|&s| crate::num::round(utt.rate * expansion_factor(s) as f64) as usize)
                .sum();
            assert_eq!(utt.gold_tokens.len(), expect);
            assert_eq!(utt.frames.rows(), expect);
            assert_eq!(utt.frames.cols(), cfg.feat_dim);
        }
    }

    #[test]
    fn same_seed_reproduces_bitwise() {
        let cfg = SourceConfig { utterances: 5, ..SourceConfig::default() };
        let a = generate_corpus(&cfg, 9).unwrap();
        let b = generate_corpus(&cfg, 9).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.text, y.text);
            assert_eq!(x.rate, y.rate);
            assert_eq!(x.frames.data(), y.frames.data());
        }
        let c = generate_corpus(&cfg, 10).unwrap();
        assert!(a.iter().zip(&c).any(|(x, y)| x.frames.data() != y.frames.data()));
    }

    #[test]
    fn rates_stay_inside_the_chosen_bands() {
        let cfg = SourceConfig {
            utterances: 50,
            rate_bands: alloc::vec![(0.5, 0.8), (2.0, 2.4)],
            ..SourceConfig::default()
        };
        for utt in generate_corpus(&cfg, 11).unwrap() {
            let inside = (0.5..=0.8).contains(&utt.rate) || (2.0..=2.4).contains(&utt.rate);
            assert!(inside, "rate {} escaped both bands", utt.rate);
        }
    }
}
