//! Transducer alignment lattice: exact forward DP, path enumeration,
//! Viterbi alignment, and pruned-window variants.
//!
//! A lattice node `(u, t)` means text position `u` (0-based, `u < U`) with
//! `t` tokens emitted so far (`0 <= t <= T`). Two arcs leave each node:
//! emitting the next label moves to `(u, t + 1)`, a blank moves to
//! `(u + 1, t)`. Every complete path starts at `(0, 0)`, ends at
//! `(U - 1, T)`, and is closed by one final blank, so it carries exactly
//! `U` blanks and `T` emissions.

mod enumerate;
mod forward;
mod prune;
mod viterbi;

pub use enumerate::{enumerate_paths, path_count, Enumeration};
pub use forward::{
    forward_loss, forward_loss_op, node_gradients, path_log_prob, posterior_occupancy,
    LatticeForward,
};
pub use prune::{
    gather_window_rows, pruned_loss, pruned_loss_op, simple_loss_and_bounds, PruneBounds,
};
pub use viterbi::viterbi_align;

use crate::error::{CoreError, Result};
use crate::num;
use crate::tensor::Tensor;
use alloc::string::String;
use alloc::vec::Vec;

/// Per-node log-probabilities must sum to one within this tolerance.
pub const NORM_TOL: f64 = 1e-9;

/// Log-normalized per-node output distributions over `V` labels plus blank.
///
/// Stored as one `[U * (T + 1), V + 1]` matrix. Row `u * (T + 1) + t` holds
/// the distribution at node `(u, t)`; columns `0..V` are labels and column
/// `V` is blank.
#[derive(Debug, Clone)]
pub struct JointLogProbs {
    text_len: usize,
    token_len: usize,
    vocab: usize,
    log_probs: Tensor,
}

impl JointLogProbs {
    /// Wraps an already log-normalized `[U * (T + 1), V + 1]` matrix,
    /// rejecting rows that do not sum to one within `NORM_TOL`.
    pub fn new(text_len: usize, token_len: usize, log_probs: Tensor) -> Result<Self> {
        if text_len == 0 {
            return Err(CoreError::EmptyInput("lattice text"));
        }
        let rows = text_len * (token_len + 1);
        if log_probs.rank() != 2 || log_probs.rows() != rows || log_probs.cols() < 2 {
            return Err(CoreError::ShapeMismatch {
                op: "joint log-probs",
                lhs: alloc::vec![rows, 2],
                rhs: log_probs.shape().to_vec(),
            });
        }
        let vocab = log_probs.cols() - 1;
        for row in 0..rows {
            let mass = num::log_sum_exp(log_probs.row(row));
            if !(mass.abs() <= NORM_TOL) {
                let u = row / (token_len + 1);
                let t = row % (token_len + 1);
                return Err(CoreError::Invalid(alloc::format!(
                    "node ({u}, {t}) log-probs sum to exp({mass:.3e}), not 1"
                )));
            }
        }
        Ok(Self { text_len, token_len, vocab, log_probs })
    }

    /// Log-normalizes raw `[U * (T + 1), V + 1]` logits row-wise.
    pub fn from_logits(text_len: usize, token_len: usize, mut logits: Tensor) -> Result<Self> {
        if logits.rank() == 2 && logits.cols() >= 2 {
            for r in 0..logits.rows() {
                let shift = num::log_sum_exp(logits.row(r));
                for x in logits.row_mut(r) {
                    *x -= shift;
                }
            }
        }
        Self::new(text_len, token_len, logits)
    }

    /// Uniform distribution at every node: each outcome has mass `1 / (V + 1)`.
    pub fn uniform(text_len: usize, token_len: usize, vocab: usize) -> Self {
        let rows = text_len * (token_len + 1);
        let p = -num::ln((vocab + 1) as f64);
        Self {
            text_len,
            token_len,
            vocab,
            log_probs: Tensor::full(&[rows, vocab + 1], p),
        }
    }

    pub fn text_len(&self) -> usize {
        self.text_len
    }

    pub fn token_len(&self) -> usize {
        self.token_len
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    #[inline]
    fn row_of(&self, u: usize, t: usize) -> usize {
        debug_assert!(u < self.text_len && t <= self.token_len);
        u * (self.token_len + 1) + t
    }

    /// Log-probability of emitting label `v` at node `(u, t)`.
    #[inline]
    pub fn emit(&self, u: usize, t: usize, v: usize) -> f64 {
        debug_assert!(v < self.vocab);
        self.log_probs.data()[self.row_of(u, t) * (self.vocab + 1) + v]
    }

    /// Log-probability of the blank arc at node `(u, t)`.
    #[inline]
    pub fn blank(&self, u: usize, t: usize) -> f64 {
        self.log_probs.data()[self.row_of(u, t) * (self.vocab + 1) + self.vocab]
    }

    pub fn log_probs(&self) -> &Tensor {
        &self.log_probs
    }

    pub(crate) fn check_labels(&self, labels: &[usize]) -> Result<()> {
        if labels.len() != self.token_len {
            return Err(CoreError::Invalid(alloc::format!(
                "label length {} does not match lattice token length {}",
                labels.len(),
                self.token_len
            )));
        }
        for &y in labels {
            if y >= self.vocab {
                return Err(CoreError::TokenOutOfRange { token: y, vocab: self.vocab });
            }
        }
        Ok(())
    }
}

/// One arc of an alignment path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    /// Emit the label, staying at the current text position.
    Emit(usize),
    /// Advance one text position without emitting.
    Blank,
}

/// A complete monotone path through a lattice: `U` blanks interleaved with
/// the emitted labels, always closed by the final blank.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignmentPath {
    text_len: usize,
    steps: Vec<Step>,
}

impl AlignmentPath {
    pub fn new(text_len: usize, steps: Vec<Step>) -> Result<Self> {
        if text_len == 0 {
            return Err(CoreError::EmptyInput("alignment text"));
        }
        let blanks = steps.iter().filter(|s| matches!(s, Step::Blank)).count();
        if blanks != text_len {
            return Err(CoreError::Invalid(alloc::format!(
                "alignment has {blanks} blanks for {text_len} text positions"
            )));
        }
        if steps.last() != Some(&Step::Blank) {
            return Err(CoreError::Invalid(String::from(
                "alignment does not end with the final blank",
            )));
        }
        Ok(Self { text_len, steps })
    }

    pub fn text_len(&self) -> usize {
        self.text_len
    }

    pub fn token_len(&self) -> usize {
        self.steps.len() - self.text_len
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    /// The emitted labels in order, with blanks removed.
    pub fn tokens(&self) -> Vec<usize> {
        self.steps
            .iter()
            .filter_map(|s| match s {
                Step::Emit(v) => Some(*v),
                Step::Blank => None,
            })
            .collect()
    }

    /// Text position of each emission, in emission order.
    pub fn emit_positions(&self) -> Vec<usize> {
        let mut u = 0;
        let mut out = Vec::with_capacity(self.token_len());
        for step in &self.steps {
            match step {
                Step::Emit(_) => out.push(u),
                Step::Blank => u += 1,
            }
        }
        out
    }

    /// Binary `[U, T + 1]` node-visit mask. The visited nodes form a single
    /// staircase from `(0, 0)` to `(U - 1, T)`.
    pub fn mask(&self) -> Tensor {
        let t_len = self.token_len();
        let mut mask = Tensor::zeros(&[self.text_len, t_len + 1]);
        let (mut u, mut t) = (0usize, 0usize);
        mask.set2(0, 0, 1.0);
        for step in &self.steps {
            match step {
                Step::Emit(_) => t += 1,
                Step::Blank => u += 1,
            }
            if u < self.text_len {
                mask.set2(u, t, 1.0);
            }
        }
        mask
    }
}
