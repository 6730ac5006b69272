//! Brute-force path enumeration, the oracle for the forward DP.

use super::JointLogProbs;
use crate::error::{CoreError, Result};
use crate::num;
use alloc::vec::Vec;

/// Enumeration refuses lattices with `U + T` beyond this: the path count
/// `C(U - 1 + T, T)` stays near a million below it.
pub const ENUMERATE_LIMIT: usize = 24;

/// Result of exhaustive path enumeration.
#[derive(Debug, Clone, Copy)]
pub struct Enumeration {
    /// Log of the summed probability of every complete path.
    pub log_prob: f64,
    /// Number of complete paths, `C(U - 1 + T, T)`.
    pub paths: u64,
}

/// Number of monotone paths through a `U` by `T` lattice: interleavings of
/// `U - 1` interior blanks with `T` emissions.
pub fn path_count(text_len: usize, token_len: usize) -> u64 {
    let n = (text_len - 1 + token_len) as u64;
    let k = token_len.min(text_len - 1) as u64;
    let mut c = 1u64;
    for i in 0..k {
        c = c * (n - i) / (i + 1);
    }
    c
}

/// Sums every complete path explicitly. Exponential in `U + T`; the size
/// guard keeps it within desk budget.
pub fn enumerate_paths(joint: &JointLogProbs, labels: &[usize]) -> Result<Enumeration> {
    joint.check_labels(labels)?;
    let size = joint.text_len() + joint.token_len();
    if size > ENUMERATE_LIMIT {
        return Err(CoreError::SizeGuard { limit: ENUMERATE_LIMIT, got: size });
    }
    let mut terms = Vec::with_capacity(path_count(joint.text_len(), joint.token_len()) as usize);
    walk(joint, labels, 0, 0, 0.0, &mut terms);
    Ok(Enumeration {
        log_prob: num::log_sum_exp(&terms),
        paths: terms.len() as u64,
    })
}

fn walk(
    joint: &JointLogProbs,
    labels: &[usize],
    u: usize,
    t: usize,
    acc: f64,
    terms: &mut Vec<f64>,
) {
    if u == joint.text_len() - 1 && t == joint.token_len() {
        terms.push(acc + joint.blank(u, t));
        return;
    }
    if t < joint.token_len() {
        walk(joint, labels, u, t + 1, acc + joint.emit(u, t, labels[t]), terms);
    }
    if u + 1 < joint.text_len() {
        walk(joint, labels, u + 1, t, acc + joint.blank(u, t), terms);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_counts() {
        assert_eq!(path_count(2, 2), 3);
        assert_eq!(path_count(1, 5), 1);
        assert_eq!(path_count(4, 1), 4);
        assert_eq!(path_count(5, 4), 70);
    }

    #[test]
    fn enumeration_counts_paths() {
        let joint = JointLogProbs::uniform(3, 2, 2);
        let e = enumerate_paths(&joint, &[0, 1]).unwrap();
        assert_eq!(e.paths, path_count(3, 2));
    }

    #[test]
    fn size_guard_trips() {
        let joint = JointLogProbs::uniform(20, 10, 2);
        let labels = alloc::vec![0usize; 10];
        match enumerate_paths(&joint, &labels) {
            Err(CoreError::SizeGuard { limit, got }) => {
                assert_eq!(limit, ENUMERATE_LIMIT);
                assert_eq!(got, 30);
            }
            other => panic!("expected size guard, got {other:?}"),
        }
    }
}
