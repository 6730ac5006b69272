//! Autoregressive decoding over the alignment lattice.
//!
//! The decoder walks lattice nodes left to right: at each node it asks a
//! [`StepScorer`] for the log-probability row over `vocab` labels plus
//! blank, picks one outcome, and either emits (consuming a token slot)
//! or advances to the next text position (blank). The walk starts at
//! `(u = 0, t = 0)` and ends when the blank at the last text position is
//! taken, so a finished alignment always carries exactly `text_len`
//! blanks. A per-position emission cap bounds the walk at
//! `text_len * (max_tokens_per_input + 1)` steps.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::lattice::{AlignmentPath, Step};
use crate::rng::Rng;

/// Incremental scorer for one utterance. Implementations own the
/// position state: `scores` reports the current node, `advance_text`
/// moves one text position right, `push_token` appends an emission to
/// the prediction context.
pub trait StepScorer {
    /// Label vocabulary size; `scores` rows have `vocab() + 1` entries
    /// with blank last.
    fn vocab(&self) -> usize;

    /// Number of text positions available to `advance_text`.
    fn text_len(&self) -> usize;

    /// Log-probability row for the current node: labels `0..vocab`,
    /// then blank.
    fn scores(&mut self) -> Result<Vec<f64>>;

    /// Moves to the next text position. Called only while positions
    /// remain, i.e. fewer than `text_len() - 1` times.
    fn advance_text(&mut self) -> Result<()>;

    /// Appends an emitted token to the prediction context.
    fn push_token(&mut self, token: usize) -> Result<()>;

    /// Cumulative scalar operation count, for cost accounting. Scorers
    /// without instrumentation report zero.
    fn op_count(&self) -> u64 {
        0
    }
}

/// Outcome selection policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Highest-scoring outcome, ties to the lowest index.
    Greedy,
    /// Sample from the `k` highest-scoring outcomes, renormalized.
    TopK { k: usize },
}

#[derive(Debug, Clone)]
pub struct DecodeConfig {
    pub strategy: Strategy,
    /// Divides log-probabilities before sampling; 1.0 leaves the model
    /// distribution unchanged. Must be positive and finite.
    pub temperature: f64,
    /// Emissions allowed at one text position before a blank is forced.
    pub max_tokens_per_input: usize,
    /// Restricts sampling to label outcomes; blank is taken only when
    /// it is the argmax outcome (or forced by the emission cap).
    pub emission_only: bool,
    pub seed: u64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            strategy: Strategy::TopK { k: 5 },
            temperature: 1.0,
            max_tokens_per_input: 8,
            emission_only: false,
            seed: 0,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if let Strategy::TopK { k } = self.strategy {
            if k == 0 {
                return Err(CoreError::Invalid(format!("top-k needs k >= 1, got {k}")));
            }
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(CoreError::Invalid(format!(
                "temperature must be positive and finite, got {}",
                self.temperature
            )));
        }
        if self.max_tokens_per_input == 0 {
            return Err(CoreError::Invalid(
                "max_tokens_per_input must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// One decoding step: the lattice move taken, the model's log-probability
/// for that move, the scorer operations it consumed, and whether the
/// emission cap forced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: Step,
    pub log_prob: f64,
    pub ops: u64,
    pub forced: bool,
}

#[derive(Debug, Clone)]
pub struct DecodeResult {
    pub tokens: Vec<usize>,
    pub alignment: AlignmentPath,
    pub steps: Vec<StepRecord>,
    /// True when the emission cap forced at least one blank.
    pub truncated: bool,
}

impl DecodeResult {
    /// Sum of the taken moves' log-probabilities, forced blanks included.
    pub fn total_log_prob(&self) -> f64 {
        self.steps.iter().map(|s| s.log_prob).sum()
    }
}

/// Decodes one utterance. The walk visits each text position in order,
/// emitting until blank (or the cap) advances it, and terminates on the
/// final position's blank.
pub fn decode<S: StepScorer>(scorer: &mut S, cfg: &DecodeConfig) -> Result<DecodeResult> {
    cfg.validate()?;
    let vocab = scorer.vocab();
    let u_len = scorer.text_len();
    if u_len == 0 {
        return Err(CoreError::EmptyInput("decode over zero text positions"));
    }
    let mut rng = Rng::new(cfg.seed);
    let mut steps = Vec::new();
    let mut records = Vec::new();
    let mut tokens = Vec::new();
    let mut truncated = false;
    let mut emitted_here = 0usize;
    let mut u = 0usize;
    loop {
        let before = scorer.op_count();
        let scores = scorer.scores()?;
        if scores.len() != vocab + 1 {
            return Err(CoreError::Invalid(format!(
                "scorer returned {} scores for vocabulary {} plus blank",
                scores.len(),
                vocab
            )));
        }
        let forced = emitted_here >= cfg.max_tokens_per_input;
        let choice = if forced { vocab } else { select(&scores, cfg, vocab, &mut rng) };
        if choice == vocab {
            truncated |= forced;
            steps.push(Step::Blank);
            u += 1;
            let done = u == u_len;
            if !done {
                scorer.advance_text()?;
            }
            records.push(StepRecord {
                step: Step::Blank,
                log_prob: scores[vocab],
                ops: scorer.op_count() - before,
                forced,
            });
            if done {
                break;
            }
            emitted_here = 0;
        } else {
            steps.push(Step::Emit(choice));
            tokens.push(choice);
            scorer.push_token(choice)?;
            records.push(StepRecord {
                step: Step::Emit(choice),
                log_prob: scores[choice],
                ops: scorer.op_count() - before,
                forced: false,
            });
            emitted_here += 1;
        }
    }
    let alignment = AlignmentPath::new(u_len, steps)?;
    Ok(DecodeResult { tokens, alignment, steps: records, truncated })
}

fn select(scores: &[f64], cfg: &DecodeConfig, vocab: usize, rng: &mut Rng) -> usize {
    let argmax = argmax_index(scores);
    match cfg.strategy {
        Strategy::Greedy => argmax,
        Strategy::TopK { k } => {
            if cfg.emission_only {
                if argmax == vocab {
                    vocab
                } else {
                    sample_top_k(&scores[..vocab], k, cfg.temperature, rng)
                }
            } else {
                sample_top_k(scores, k, cfg.temperature, rng)
            }
        }
    }
}

fn argmax_index(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Samples from the renormalized `k` best outcomes at the given
/// temperature. Candidate order is score-descending with index ties
/// kept ascending, so the draw is deterministic for a fixed rng state.
fn sample_top_k(scores: &[f64], k: usize, temperature: f64, rng: &mut Rng) -> usize {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b].partial_cmp(&scores[a]).unwrap_or(core::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    order.truncate(k.max(1).min(scores.len()));
    let top = scores[order[0]];
    let weights: Vec<f64> = order.iter().map(|&i| crate::num::exp((scores[i] - top) / temperature)).collect();
    let total: f64 = weights.iter().sum();
    let mut draw = rng.uniform() * total;
    for (&idx, &w) in order.iter().zip(&weights) {
        draw -= w;
        if draw <= 0.0 {
            return idx;
        }
    }
    order[order.len() - 1]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::JointLogProbs;

    /// Scorer reading rows straight out of a fixed lattice.
    struct LatticeScorer {
        joint: JointLogProbs,
        u: usize,
        t: usize,
        calls: u64,
    }

    impl LatticeScorer {
        fn new(joint: JointLogProbs) -> Self {
            LatticeScorer { joint, u: 0, t: 0, calls: 0 }
        }
    }

    impl StepScorer for LatticeScorer {
        fn vocab(&self) -> usize {
            self.joint.vocab()
        }

        fn text_len(&self) -> usize {
            self.joint.text_len()
        }

        fn scores(&mut self) -> Result<Vec<f64>> {
            self.calls += 1;
            let row_width = self.joint.vocab() + 1;
            let row = self.u * (self.joint.token_len() + 1) + self.t;
            Ok(self.joint.log_probs().row(row)[..row_width].to_vec())
        }

        fn advance_text(&mut self) -> Result<()> {
            self.u += 1;
            Ok(())
        }

        fn push_token(&mut self, _token: usize) -> Result<()> {
            self.t += 1;
            Ok(())
        }

        fn op_count(&self) -> u64 {
            self.calls
        }
    }

    /// Blank is effectively impossible until the cap forces it.
    struct EmitOnlyScorer {
        vocab: usize,
        u_len: usize,
    }

    impl StepScorer for EmitOnlyScorer {
        fn vocab(&self) -> usize {
            self.vocab
        }

        fn text_len(&self) -> usize {
            self.u_len
        }

        fn scores(&mut self) -> Result<Vec<f64>> {
            let spread = -(crate::num::ln(self.vocab as f64));
            let mut row = alloc::vec![spread; self.vocab + 1];
            row[self.vocab] = -1.0e9;
            Ok(row)
        }

        fn advance_text(&mut self) -> Result<()> {
            Ok(())
        }

        fn push_token(&mut self, _token: usize) -> Result<()> {
            Ok(())
        }
    }

    fn uniform_scorer(u_len: usize, t_len: usize, vocab: usize) -> LatticeScorer {
        LatticeScorer::new(JointLogProbs::uniform(u_len, t_len, vocab))
    }

    #[test]
    fn alignment_is_valid_and_tokens_match_emissions() {
        let mut scorer = uniform_scorer(3, 40, 4);
        let result = decode(&mut scorer, &DecodeConfig::default()).unwrap();
        assert_eq!(result.alignment.text_len(), 3);
        assert_eq!(result.alignment.tokens(), result.tokens);
        assert_eq!(result.alignment.token_len(), result.tokens.len());
        assert_eq!(result.steps.len(), result.tokens.len() + 3);
    }

    #[test]
    fn same_seed_reproduces_different_seed_varies() {
        let cfg = DecodeConfig { seed: 9, ..DecodeConfig::default() };
        let a = decode(&mut uniform_scorer(4, 40, 5), &cfg).unwrap();
        let b = decode(&mut uniform_scorer(4, 40, 5), &cfg).unwrap();
        assert_eq!(a.tokens, b.tokens);
        assert_eq!(a.alignment.steps(), b.alignment.steps());

        // Uniform rows make a different walk overwhelmingly likely.
        let mut any_differ = false;
        for seed in 10..20 {
            let c = decode(
                &mut uniform_scorer(4, 40, 5),
                &DecodeConfig { seed, ..DecodeConfig::default() },
            )
            .unwrap();
            any_differ |= c.tokens != a.tokens;
        }
        assert!(any_differ);
    }

    #[test]
    fn tiny_temperature_matches_greedy() {
        // Distinct scores at every node so argmax is unambiguous.
        let mut rng = Rng::new(31);
        let u_len = 3;
        let t_len = 30;
        let vocab = 4;
        let mut logits = crate::tensor::Tensor::zeros(&[u_len * (t_len + 1), vocab + 1]);
        for x in logits.data_mut() {
            *x = rng.normal() * 2.0;
        }
        let joint = JointLogProbs::from_logits(u_len, t_len, logits).unwrap();

        let greedy = decode(
            &mut LatticeScorer::new(joint.clone()),
            &DecodeConfig { strategy: Strategy::Greedy, ..DecodeConfig::default() },
        )
        .unwrap();
        let cold = decode(
            &mut LatticeScorer::new(joint.clone()),
            &DecodeConfig { temperature: 1e-9, seed: 3, ..DecodeConfig::default() },
        )
        .unwrap();
        let k1 = decode(
            &mut LatticeScorer::new(joint),
            &DecodeConfig { strategy: Strategy::TopK { k: 1 }, seed: 8, ..DecodeConfig::default() },
        )
        .unwrap();
        assert_eq!(greedy.alignment.steps(), cold.alignment.steps());
        assert_eq!(greedy.alignment.steps(), k1.alignment.steps());
    }

    #[test]
    fn emission_cap_forces_blanks_and_flags_truncation() {
        let mut scorer = EmitOnlyScorer { vocab: 3, u_len: 2 };
        let cfg = DecodeConfig { max_tokens_per_input: 4, ..DecodeConfig::default() };
        let result = decode(&mut scorer, &cfg).unwrap();
        assert!(result.truncated);
        assert_eq!(result.tokens.len(), 8);
        let forced: Vec<bool> = result.steps.iter().map(|s| s.forced).collect();
        // Steps: 4 emissions, forced blank, 4 emissions, forced blank.
        let expect = [
            false, false, false, false, true, false, false, false, false, true,
        ];
        assert_eq!(forced, expect);
        assert_eq!(result.steps.len(), 10);
    }

    #[test]
    fn near_one_hot_lattice_decodes_its_designed_path() {
        // Boost one outcome per node along a staircase; greedy must
        // follow it exactly.
        let u_len = 3;
        let t_len = 4;
        let vocab = 3;
        let mut logits = crate::tensor::Tensor::zeros(&[u_len * (t_len + 1), vocab + 1]);
        let plan: &[(usize, usize, Option<usize>)] = &[
            (0, 0, Some(1)),
            (0, 1, Some(2)),
            (0, 2, None),
            (1, 2, Some(0)),
            (1, 3, None),
            (2, 3, Some(2)),
            (2, 4, None),
        ];
        for &(u, t, label) in plan {
            let col = label.unwrap_or(vocab);
            let row = u * (t_len + 1) + t;
            logits.set2(row, col, 25.0);
        }
        let joint = JointLogProbs::from_logits(u_len, t_len, logits).unwrap();
        let mut scorer = LatticeScorer::new(joint);
        let cfg = DecodeConfig { strategy: Strategy::Greedy, ..DecodeConfig::default() };
        let result = decode(&mut scorer, &cfg).unwrap();
        assert_eq!(result.tokens, [1, 2, 0, 2]);
        let expect = [
            Step::Emit(1),
            Step::Emit(2),
            Step::Blank,
            Step::Emit(0),
            Step::Blank,
            Step::Emit(2),
            Step::Blank,
        ];
        assert_eq!(result.alignment.steps(), expect);
        assert!(!result.truncated);
        // Each log-probability is the boosted outcome's own score.
        for rec in &result.steps {
            assert!(rec.log_prob > -0.01, "move {:?} scored {}", rec.step, rec.log_prob);
        }
    }

    #[test]
    fn emission_only_takes_blank_on_argmax_only() {
        // Blank argmax at (0, 0) and (1, 1): emission-only still honors it.
        let u_len = 2;
        let t_len = 2;
        let vocab = 2;
        let mut logits = crate::tensor::Tensor::zeros(&[u_len * (t_len + 1), vocab + 1]);
        logits.set2(0, vocab, 10.0);
        logits.set2(1 * (t_len + 1) + 0, 1, 10.0);
        logits.set2(1 * (t_len + 1) + 1, vocab, 10.0);
        let joint = JointLogProbs::from_logits(u_len, t_len, logits).unwrap();
        let mut scorer = LatticeScorer::new(joint);
        let cfg = DecodeConfig { emission_only: true, seed: 4, ..DecodeConfig::default() };
        let result = decode(&mut scorer, &cfg).unwrap();
        assert_eq!(result.tokens, [1]);
        assert_eq!(
            result.alignment.steps(),
            [Step::Blank, Step::Emit(1), Step::Blank]
        );
    }

    #[test]
    fn per_step_ops_are_recorded() {
        let mut scorer = uniform_scorer(2, 10, 3);
        let result = decode(&mut scorer, &DecodeConfig::default()).unwrap();
        // LatticeScorer counts one op per scores call.
        assert!(result.steps.iter().all(|s| s.ops == 1));
    }

    #[test]
    fn config_validation_rejects_bad_settings() {
        let mut scorer = uniform_scorer(2, 10, 3);
        let bad_k = DecodeConfig { strategy: Strategy::TopK { k: 0 }, ..DecodeConfig::default() };
        assert!(decode(&mut scorer, &bad_k).is_err());
        let bad_temp = DecodeConfig { temperature: 0.0, ..DecodeConfig::default() };
        assert!(decode(&mut scorer, &bad_temp).is_err());
        let bad_cap = DecodeConfig { max_tokens_per_input: 0, ..DecodeConfig::default() };
        assert!(decode(&mut scorer, &bad_cap).is_err());
    }
}
