//! Edit-distance diagnostics over token and word sequences, plus
//! embedding cosine similarity.
//!
//! `levenshtein_script` returns one unit-cost minimal edit script.
//! Where several minimal scripts exist, op ties resolve substitution
//! first, then insertion, then deletion, so the reported op mix is
//! deterministic. `EditOps` divides the counts by the reference length,
//! giving `error_rate = (ins + del + sub) / ref_len`.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};

/// One step of an edit script. `Match` and `Sub` consume one symbol
/// from both sequences, `Ins` consumes from the hypothesis only, `Del`
/// from the reference only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EditStep {
    Match,
    Sub,
    Ins,
    Del,
}

/// Edit-op counts for a hypothesis scored against a reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EditOps {
    pub ins: usize,
    pub del: usize,
    pub sub: usize,
    pub ref_len: usize,
}

impl EditOps {
    /// Total edited symbols, the unit-cost edit distance.
    pub fn total(&self) -> usize {
        self.ins + self.del + self.sub
    }

    /// (ins + del + sub) / ref_len. An empty reference scores 0 against
    /// an empty hypothesis and infinity against anything else.
    pub fn error_rate(&self) -> f64 {
        self.rate_of(self.total())
    }

    pub fn ins_rate(&self) -> f64 {
        self.rate_of(self.ins)
    }

    pub fn del_rate(&self) -> f64 {
        self.rate_of(self.del)
    }

    pub fn sub_rate(&self) -> f64 {
        self.rate_of(self.sub)
    }

    fn rate_of(&self, count: usize) -> f64 {
        if self.ref_len == 0 {
            if count == 0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            count as f64 / self.ref_len as f64
        }
    }

    /// Pools counts across utterances; corpus rates then come from the
    /// pooled counts, not from averaging per-utterance rates.
    pub fn accumulate(&mut self, other: &EditOps) {
        self.ins += other.ins;
        self.del += other.del;
        self.sub += other.sub;
        self.ref_len += other.ref_len;
    }
}

/// Minimal unit-cost edit script turning `reference` into `hypothesis`.
/// Replaying the script consumes both sequences exactly; the number of
/// non-`Match` steps equals the Levenshtein distance.
pub fn levenshtein_script<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> Vec<EditStep> {
    let m = reference.len();
    let n = hypothesis.len();
    let stride = n + 1;
    let mut cost = vec![0usize; (m + 1) * stride];
    for (j, slot) in cost[..stride].iter_mut().enumerate() {
        *slot = j;
    }
    for i in 1..=m {
        cost[i * stride] = i;
        for j in 1..=n {
            let diag = cost[(i - 1) * stride + j - 1];
            let best = if reference[i - 1] == hypothesis[j - 1] {
                diag
            } else {
                let up = cost[(i - 1) * stride + j];
                let left = cost[i * stride + j - 1];
                1 + diag.min(up).min(left)
            };
            cost[i * stride + j] = best;
        }
    }

    let mut rev = Vec::with_capacity(m.max(n));
    let (mut i, mut j) = (m, n);
    while i > 0 || j > 0 {
        let c = cost[i * stride + j];
        if i > 0 && j > 0 && reference[i - 1] == hypothesis[j - 1] && cost[(i - 1) * stride + j - 1] == c {
            rev.push(EditStep::Match);
            i -= 1;
            j -= 1;
        } else if i > 0 && j > 0 && cost[(i - 1) * stride + j - 1] + 1 == c {
            rev.push(EditStep::Sub);
            i -= 1;
            j -= 1;
        } else if j > 0 && cost[i * stride + j - 1] + 1 == c {
            rev.push(EditStep::Ins);
            j -= 1;
        } else {
            rev.push(EditStep::Del);
            i -= 1;
        }
    }
    rev.reverse();
    rev
}

/// Edit-op counts between a reference and a hypothesis sequence.
pub fn levenshtein_ops<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> EditOps {
    let mut ops = EditOps { ref_len: reference.len(), ..EditOps::default() };
    for step in levenshtein_script(reference, hypothesis) {
        match step {
            EditStep::Match => {}
            EditStep::Sub => ops.sub += 1,
            EditStep::Ins => ops.ins += 1,
            EditStep::Del => ops.del += 1,
        }
    }
    ops
}

/// Character-level edit ops over the raw text, no normalization.
pub fn char_error_ops(reference: &str, hypothesis: &str) -> EditOps {
    let r: Vec<char> = reference.chars().collect();
    let h: Vec<char> = hypothesis.chars().collect();
    levenshtein_ops(&r, &h)
}

/// Word tokenization used for word error rates: split on whitespace,
/// strip terminal punctuation per word, lowercase. Words reduced to
/// nothing by stripping are dropped.
pub fn wer_words(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| {
            w.trim_end_matches(|c: char| matches!(c, '.' | ',' | ';' | ':' | '!' | '?'))
                .to_lowercase()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

/// Word-level edit ops after `wer_words` normalization of both sides.
pub fn word_error_ops(reference: &str, hypothesis: &str) -> EditOps {
    levenshtein_ops(&wer_words(reference), &wer_words(hypothesis))
}

/// Cosine similarity of two equal-length vectors. Rejects length
/// mismatch, empty inputs and zero vectors.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(CoreError::ShapeMismatch {
            op: "cosine_similarity",
            lhs: vec![a.len()],
            rhs: vec![b.len()],
        });
    }
    if a.is_empty() {
        return Err(CoreError::EmptyInput("cosine_similarity"));
    }
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(CoreError::Invalid(String::from(
            "cosine_similarity undefined for a zero vector",
        )));
    }
    Ok(dot / (libm::sqrt(na) * libm::sqrt(nb)))
}
