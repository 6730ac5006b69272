//! Best-path search over the lattice in max-plus log space.

use super::{AlignmentPath, JointLogProbs, Step};
use crate::error::Result;
use crate::num::LOG_ZERO;
use crate::tensor::Tensor;
use alloc::vec::Vec;

/// Highest-probability alignment path and its log-probability.
///
/// Ties between a blank and an emission predecessor resolve toward the
/// blank, which keeps the backtrace deterministic.
pub fn viterbi_align(joint: &JointLogProbs, labels: &[usize]) -> Result<(AlignmentPath, f64)> {
    joint.check_labels(labels)?;
    let (u_len, t_len) = (joint.text_len(), joint.token_len());
    let mut best = Tensor::full(&[u_len, t_len + 1], LOG_ZERO);
    // from_blank[u][t] records whether the best path into (u, t) arrived
    // over the blank arc from (u - 1, t).
    let mut from_blank = alloc::vec![false; u_len * (t_len + 1)];
    best.set2(0, 0, 0.0);
    for u in 0..u_len {
        for t in 0..=t_len {
            if u == 0 && t == 0 {
                continue;
            }
            let via_blank = if u > 0 {
                best.at2(u - 1, t) + joint.blank(u - 1, t)
            } else {
                LOG_ZERO
            };
            let via_emit = if t > 0 {
                best.at2(u, t - 1) + joint.emit(u, t - 1, labels[t - 1])
            } else {
                LOG_ZERO
            };
            if via_blank >= via_emit {
                best.set2(u, t, via_blank);
                from_blank[u * (t_len + 1) + t] = true;
            } else {
                best.set2(u, t, via_emit);
            }
        }
    }
    let log_prob = best.at2(u_len - 1, t_len) + joint.blank(u_len - 1, t_len);

    let mut rev = Vec::with_capacity(u_len + t_len);
    rev.push(Step::Blank);
    let (mut u, mut t) = (u_len - 1, t_len);
    while u > 0 || t > 0 {
        if from_blank[u * (t_len + 1) + t] {
            rev.push(Step::Blank);
            u -= 1;
        } else {
            t -= 1;
            rev.push(Step::Emit(labels[t]));
        }
    }
    rev.reverse();
    Ok((AlignmentPath::new(u_len, rev)?, log_prob))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Lattice that puts probability near one on a fixed arc per node.
    fn peaked(u_len: usize, t_len: usize, vocab: usize, emit_rows: &[usize]) -> JointLogProbs {
        let rows = u_len * (t_len + 1);
        let mut logits = Tensor::zeros(&[rows, vocab + 1]);
        for u in 0..u_len {
            for t in 0..=t_len {
                let col = if emit_rows.contains(&u) && t < t_len { 0 } else { vocab };
                logits.data_mut()[(u * (t_len + 1) + t) * (vocab + 1) + col] = 20.0;
            }
        }
        JointLogProbs::from_logits(u_len, t_len, logits).unwrap()
    }

    #[test]
    fn follows_the_peak() {
        // Emissions favored only at u = 1, so the best path emits both
        // labels there.
        let joint = peaked(3, 2, 2, &[1]);
        let (path, lp) = viterbi_align(&joint, &[0, 0]).unwrap();
        assert_eq!(path.emit_positions(), alloc::vec![1, 1]);
        assert!(lp < 0.0);
    }

    #[test]
    fn path_probability_matches_arc_walk() {
        let joint = JointLogProbs::uniform(3, 2, 2);
        let (path, lp) = viterbi_align(&joint, &[1, 0]).unwrap();
        let walked = super::super::path_log_prob(&joint, &[1, 0], &path).unwrap();
        assert!((lp - walked).abs() < 1e-12);
    }
}
