//! Exact forward/backward dynamic programs over the full lattice.

use super::JointLogProbs;
use crate::error::Result;
use crate::num::{self, LOG_ZERO};
use crate::tensor::{Tape, Tensor, Var};

/// Forward DP state: log-space alpha and the total path log-probability.
#[derive(Debug, Clone)]
pub struct LatticeForward {
    /// `[U, T + 1]` log-space forward scores; `alpha[0, 0] = 0`.
    pub alpha: Tensor,
    /// Log-probability of all complete paths, `alpha[U-1, T] + blank(U-1, T)`.
    pub log_z: f64,
}

impl LatticeForward {
    /// Negative log-likelihood of the label sequence.
    pub fn nll(&self) -> f64 {
        -self.log_z
    }
}

/// Sums all alignment paths for `labels` in log space.
pub fn forward_loss(joint: &JointLogProbs, labels: &[usize]) -> Result<LatticeForward> {
    joint.check_labels(labels)?;
    let (u_len, t_len) = (joint.text_len(), joint.token_len());
    let mut alpha = Tensor::full(&[u_len, t_len + 1], LOG_ZERO);
    alpha.set2(0, 0, 0.0);
    for u in 0..u_len {
        for t in 0..=t_len {
            let mut a = alpha.at2(u, t);
            if u > 0 {
                a = num::log_add(a, alpha.at2(u - 1, t) + joint.blank(u - 1, t));
            }
            if t > 0 {
                a = num::log_add(a, alpha.at2(u, t - 1) + joint.emit(u, t - 1, labels[t - 1]));
            }
            alpha.set2(u, t, a);
        }
    }
    let log_z = alpha.at2(u_len - 1, t_len) + joint.blank(u_len - 1, t_len);
    Ok(LatticeForward { alpha, log_z })
}

/// Backward DP: `beta[u, t]` sums all path suffixes from `(u, t)` to the end.
fn backward_scores(joint: &JointLogProbs, labels: &[usize]) -> Tensor {
    let (u_len, t_len) = (joint.text_len(), joint.token_len());
    let mut beta = Tensor::full(&[u_len, t_len + 1], LOG_ZERO);
    for u in (0..u_len).rev() {
        for t in (0..=t_len).rev() {
            let mut b = if u == u_len - 1 && t == t_len {
                joint.blank(u, t)
            } else {
                LOG_ZERO
            };
            if u + 1 < u_len {
                b = num::log_add(b, beta.at2(u + 1, t) + joint.blank(u, t));
            }
            if t < t_len {
                b = num::log_add(b, beta.at2(u, t + 1) + joint.emit(u, t, labels[t]));
            }
            beta.set2(u, t, b);
        }
    }
    beta
}

/// Node occupancy `gamma[u, t] = P(path visits (u, t) | labels)`, clamped to
/// `[0, 1]` against round-off. Corner nodes `(0, 0)` and `(U-1, T)` carry
/// occupancy one.
pub fn posterior_occupancy(joint: &JointLogProbs, labels: &[usize]) -> Result<Tensor> {
    let fwd = forward_loss(joint, labels)?;
    let beta = backward_scores(joint, labels);
    let (u_len, t_len) = (joint.text_len(), joint.token_len());
    let mut gamma = Tensor::zeros(&[u_len, t_len + 1]);
    for u in 0..u_len {
        for t in 0..=t_len {
            let g = num::exp(fwd.alpha.at2(u, t) + beta.at2(u, t) - fwd.log_z);
            gamma.set2(u, t, g.clamp(0.0, 1.0));
        }
    }
    Ok(gamma)
}

/// Gradient of the negative log-likelihood with respect to every per-node
/// log-probability, as a `[U * (T + 1), V + 1]` matrix matching the joint
/// layout. Each entry is minus the posterior mass of the corresponding arc,
/// so the entries sum to `-(U + T)`: one arc per path step.
pub fn node_gradients(joint: &JointLogProbs, labels: &[usize]) -> Result<Tensor> {
    let fwd = forward_loss(joint, labels)?;
    let beta = backward_scores(joint, labels);
    let (u_len, t_len, vocab) = (joint.text_len(), joint.token_len(), joint.vocab());
    let mut grad = Tensor::zeros(&[u_len * (t_len + 1), vocab + 1]);
    for u in 0..u_len {
        for t in 0..=t_len {
            let row = u * (t_len + 1) + t;
            let a = fwd.alpha.at2(u, t);
            if a == LOG_ZERO {
                continue;
            }
            if t < t_len {
                let v = labels[t];
                let post = num::exp(a + joint.emit(u, t, v) + beta.at2(u, t + 1) - fwd.log_z);
                grad.data_mut()[row * (vocab + 1) + v] -= post;
            }
            if u + 1 < u_len {
                let post = num::exp(a + joint.blank(u, t) + beta.at2(u + 1, t) - fwd.log_z);
                grad.data_mut()[row * (vocab + 1) + vocab] -= post;
            }
            if u == u_len - 1 && t == t_len {
                // Final blank: alpha + blank is log_z itself, posterior one.
                let post = num::exp(a + joint.blank(u, t) - fwd.log_z);
                grad.data_mut()[row * (vocab + 1) + vocab] -= post;
            }
        }
    }
    Ok(grad)
}

/// Log-probability of one explicit path under the lattice.
pub fn path_log_prob(
    joint: &JointLogProbs,
    labels: &[usize],
    path: &super::AlignmentPath,
) -> Result<f64> {
    joint.check_labels(labels)?;
    if path.text_len() != joint.text_len() || path.token_len() != joint.token_len() {
        return Err(crate::error::CoreError::Invalid(alloc::format!(
            "path covers ({}, {}) but lattice is ({}, {})",
            path.text_len(),
            path.token_len(),
            joint.text_len(),
            joint.token_len()
        )));
    }
    let (mut u, mut t) = (0usize, 0usize);
    let mut total = 0.0;
    for step in path.steps() {
        match step {
            super::Step::Emit(v) => {
                if *v != labels[t] {
                    return Err(crate::error::CoreError::Invalid(alloc::format!(
                        "path emits {v} at position {t} but labels say {}",
                        labels[t]
                    )));
                }
                total += joint.emit(u, t, *v);
                t += 1;
            }
            super::Step::Blank => {
                total += joint.blank(u, t);
                u += 1;
            }
        }
    }
    Ok(total)
}

/// Tape op: negative log-likelihood of `labels` given per-node log-probs.
///
/// `log_probs` must hold the `[U * (T + 1), V + 1]` matrix of an already
/// normalized joint; the backward pass scatters arc posteriors computed in
/// closed form from the forward/backward scores.
pub fn forward_loss_op(
    tape: &mut Tape,
    log_probs: Var,
    text_len: usize,
    labels: &[usize],
) -> Result<Var> {
    let value = tape.value(log_probs).clone();
    let joint = JointLogProbs::new(text_len, labels.len(), value)?;
    let fwd = forward_loss(&joint, labels)?;
    let grad = node_gradients(&joint, labels)?;
    let rows = joint.text_len() * (joint.token_len() + 1);
    let flops = 6 * rows as u64 * (joint.vocab() + 1) as u64;
    Ok(tape.custom(
        &[log_probs],
        Tensor::new(&[1], alloc::vec![fwd.nll()]),
        flops,
        alloc::boxed::Box::new(move |g: &Tensor| {
            let mut out = grad;
            out.scale_assign(g.item());
            alloc::vec![out]
        }),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{AlignmentPath, Step};

    #[test]
    fn uniform_two_by_two_hand_value() {
        // Three paths of four arcs each at probability 1/3 per arc: 1/27.
        let joint = JointLogProbs::uniform(2, 2, 2);
        let fwd = forward_loss(&joint, &[0, 1]).unwrap();
        assert!((fwd.log_z - (1.0f64 / 27.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn single_position_no_tokens() {
        let joint = JointLogProbs::uniform(1, 0, 2);
        let fwd = forward_loss(&joint, &[]).unwrap();
        assert!((fwd.log_z - (1.0f64 / 3.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn corner_occupancy_is_one() {
        let joint = JointLogProbs::uniform(3, 2, 3);
        let gamma = posterior_occupancy(&joint, &[1, 2]).unwrap();
        assert!((gamma.at2(0, 0) - 1.0).abs() < 1e-12);
        assert!((gamma.at2(2, 2) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn middle_occupancy_uniform_two_by_two() {
        // Two of the three equally likely paths visit (1, 1).
        let joint = JointLogProbs::uniform(2, 2, 2);
        let gamma = posterior_occupancy(&joint, &[0, 0]).unwrap();
        assert!((gamma.at2(1, 1) - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn path_log_prob_matches_arc_sum() {
        let joint = JointLogProbs::uniform(2, 1, 2);
        let path =
            AlignmentPath::new(2, alloc::vec![Step::Emit(1), Step::Blank, Step::Blank]).unwrap();
        let lp = path_log_prob(&joint, &[1], &path).unwrap();
        assert!((lp - 3.0 * (1.0f64 / 3.0).ln()).abs() < 1e-12);
    }
}
