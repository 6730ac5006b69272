//! Windowed pruning: per-position token ranges from a cheap simple-joiner
//! lattice, plus the forward DP restricted to those windows.

use super::{forward_loss, posterior_occupancy, JointLogProbs, NORM_TOL};
use crate::error::{CoreError, Result};
use crate::num::{self, LOG_ZERO};
use crate::tensor::{Tape, Tensor, Var};
use alloc::vec::Vec;

/// Per-text-position token windows of a common width.
///
/// Position `u` keeps nodes `(u, t)` for `t` in `lo[u] .. lo[u] + width`,
/// clipped to `T + 1`. Windows are monotone non-decreasing and consecutive
/// starts differ by at most `width`, so a monotone path can stay inside
/// them whenever consecutive windows overlap.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PruneBounds {
    width: usize,
    token_len: usize,
    lo: Vec<usize>,
    // offsets[u] counts the nodes of all windows before position u.
    offsets: Vec<usize>,
}

impl PruneBounds {
    pub fn new(width: usize, token_len: usize, lo: Vec<usize>) -> Result<Self> {
        if lo.is_empty() {
            return Err(CoreError::EmptyInput("prune bounds"));
        }
        if width < 2 {
            return Err(CoreError::InvalidBounds(alloc::format!(
                "window width {width} below minimum 2"
            )));
        }
        let cap = (token_len + 1).saturating_sub(width);
        for (u, &l) in lo.iter().enumerate() {
            if l > cap {
                return Err(CoreError::InvalidBounds(alloc::format!(
                    "window {u} starts at {l}, past the last feasible start {cap}"
                )));
            }
            if u > 0 {
                if l < lo[u - 1] {
                    return Err(CoreError::InvalidBounds(alloc::format!(
                        "window {u} starts at {l}, before window {} at {}",
                        u - 1,
                        lo[u - 1]
                    )));
                }
                if l - lo[u - 1] > width {
                    return Err(CoreError::InvalidBounds(alloc::format!(
                        "window {u} jumps {} from its predecessor, beyond width {width}",
                        l - lo[u - 1]
                    )));
                }
            }
        }
        let mut offsets = Vec::with_capacity(lo.len() + 1);
        let mut total = 0usize;
        for &l in &lo {
            offsets.push(total);
            total += (token_len + 1).min(l + width) - l;
        }
        offsets.push(total);
        Ok(Self { width, token_len, lo, offsets })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn token_len(&self) -> usize {
        self.token_len
    }

    pub fn text_len(&self) -> usize {
        self.lo.len()
    }

    /// True when the width covers every token row, making pruning a no-op.
    pub fn is_full(&self) -> bool {
        self.width >= self.token_len + 1
    }

    pub fn lo(&self) -> &[usize] {
        &self.lo
    }

    /// Half-open token range kept at text position `u`.
    pub fn window(&self, u: usize) -> core::ops::Range<usize> {
        self.lo[u]..(self.token_len + 1).min(self.lo[u] + self.width)
    }

    /// Total node count, at most `U * width`.
    pub fn node_count(&self) -> usize {
        self.offsets[self.lo.len()]
    }

    /// Dense index of node `(u, t)` in window order, if kept.
    pub fn index_of(&self, u: usize, t: usize) -> Option<usize> {
        if self.window(u).contains(&t) {
            Some(self.offsets[u] + t - self.lo[u])
        } else {
            None
        }
    }

    pub fn contains(&self, u: usize, t: usize) -> bool {
        self.index_of(u, t).is_some()
    }

    /// All kept `(u, t)` pairs in window order.
    pub fn node_pairs(&self) -> Vec<(usize, usize)> {
        let mut pairs = Vec::with_capacity(self.node_count());
        for u in 0..self.lo.len() {
            for t in self.window(u) {
                pairs.push((u, t));
            }
        }
        pairs
    }

    pub fn contains_path(&self, path: &super::AlignmentPath) -> bool {
        let (mut u, mut t) = (0usize, 0usize);
        if !self.contains(u, t) {
            return false;
        }
        for step in path.steps() {
            match step {
                super::Step::Emit(_) => t += 1,
                super::Step::Blank => u += 1,
            }
            if u < self.lo.len() && !self.contains(u, t) {
                return false;
            }
        }
        true
    }

    /// Places windows on a lattice: each window centers on the occupancy
    /// centroid of its row, clamped into the band of starts from which both
    /// the path entry `(0, 0)` and exit `(U - 1, T)` stay reachable, then a
    /// forward pass restores monotone starts with steps of at most
    /// `width - 1`, so the result always admits a complete path. The width
    /// is raised to the smallest value that lets `U` such windows span all
    /// `T + 1` token rows.
    ///
    /// The centroid placement at the requested width competes against the
    /// placement grown from the next narrower width, whose windows the
    /// grown ones contain; the candidate keeping more path mass on this
    /// lattice wins. Widening therefore never loses path mass, and the
    /// pruned-to-exact gap is non-increasing in the width.
    pub fn from_lattice(joint: &JointLogProbs, labels: &[usize], width: usize) -> Result<Self> {
        if width < 2 {
            return Err(CoreError::InvalidBounds(alloc::format!(
                "window width {width} below minimum 2"
            )));
        }
        let gamma = posterior_occupancy(joint, labels)?;
        let (u_len, t_len) = (joint.text_len(), joint.token_len());
        // Starts may step by at most width - 1 per row, so U windows reach
        // row T only when U * (width - 1) >= T.
        let feasible = if t_len == 0 { 2 } else { (t_len + u_len - 1) / u_len + 1 };
        let target = width.max(feasible);
        let nll_of = |bounds: &PruneBounds| -> Result<f64> {
            pruned_loss(&gather_window_rows(joint.log_probs(), bounds), bounds, labels)
        };
        let mut best: Option<(PruneBounds, f64)> = None;
        for w in feasible.max(2)..=target {
            let heuristic = Self::centroid_chain(&gamma, u_len, t_len, w)?;
            let h_nll = nll_of(&heuristic)?;
            let cap = (t_len + 1).saturating_sub(w);
            let chosen = match best {
                Some((prev, prev_nll)) => {
                    // Reusing the narrower starts clipped to the new cap
                    // widens every window in place.
                    let lo = prev.lo().iter().map(|&l| l.min(cap)).collect();
                    let grown = Self::new(w, t_len, lo)?;
                    let g_nll = nll_of(&grown)?;
                    debug_assert!(g_nll <= prev_nll + 1e-9);
                    if g_nll < h_nll {
                        (grown, g_nll)
                    } else {
                        (heuristic, h_nll)
                    }
                }
                None => (heuristic, h_nll),
            };
            best = Some(chosen);
        }
        Ok(best.expect("width at least 2").0)
    }

    fn centroid_chain(
        gamma: &Tensor,
        u_len: usize,
        t_len: usize,
        width: usize,
    ) -> Result<Self> {
        let step = width - 1;
        let cap = (t_len + 1).saturating_sub(width);
        let mut lo: Vec<usize> = Vec::with_capacity(u_len);
        for u in 0..u_len {
            let row = gamma.row(u);
            let mass: f64 = row.iter().sum();
            let centroid: f64 =
                row.iter().enumerate().map(|(t, g)| t as f64 * g).sum::<f64>() / mass;
            // Rounding the shifted center, not the centroid, keeps a
            // symmetric span of exactly `width` cells covered.
            let start = num::round(centroid - step as f64 / 2.0) as isize;
            let candidate = (start.max(0) as usize).min(cap);
            // Rows before this one must climb from 0 and rows after it must
            // still reach `cap`, each moving at most `step` per row.
            let reach_lo = cap.saturating_sub((u_len - 1 - u) * step);
            let reach_hi = (u * step).min(cap);
            let candidate = candidate.max(reach_lo).min(reach_hi);
            let s = match lo.last() {
                // The min keeps consecutive windows overlapping in one row.
                Some(&prev) => candidate.max(prev).min(prev + step),
                None => candidate,
            };
            lo.push(s);
        }
        Self::new(width, t_len, lo)
    }
}

/// Loss of the low-rank simple joiner plus the windows its occupancy
/// implies. Logits at node `(u, t)` are `enc_logits[u] + pred_logits[t]`,
/// log-normalized per node; no deep joint network is evaluated.
pub fn simple_loss_and_bounds(
    enc_logits: &Tensor,
    pred_logits: &Tensor,
    labels: &[usize],
    width: usize,
) -> Result<(f64, PruneBounds)> {
    if enc_logits.rank() != 2 || pred_logits.rank() != 2 || enc_logits.cols() != pred_logits.cols()
    {
        return Err(CoreError::ShapeMismatch {
            op: "simple joiner logits",
            lhs: enc_logits.shape().to_vec(),
            rhs: pred_logits.shape().to_vec(),
        });
    }
    if pred_logits.rows() != labels.len() + 1 {
        return Err(CoreError::Invalid(alloc::format!(
            "prediction logits cover {} rows for {} labels",
            pred_logits.rows(),
            labels.len()
        )));
    }
    let (u_len, t_len, cols) = (enc_logits.rows(), labels.len(), enc_logits.cols());
    let mut logits = Tensor::zeros(&[u_len * (t_len + 1), cols]);
    for u in 0..u_len {
        let e = enc_logits.row(u);
        for t in 0..=t_len {
            let p = pred_logits.row(t);
            let row = logits.row_mut(u * (t_len + 1) + t);
            for c in 0..cols {
                row[c] = e[c] + p[c];
            }
        }
    }
    let joint = JointLogProbs::from_logits(u_len, t_len, logits)?;
    let fwd = forward_loss(&joint, labels)?;
    let bounds = PruneBounds::from_lattice(&joint, labels, width)?;
    Ok((fwd.nll(), bounds))
}

struct PrunedScores {
    alpha: Vec<f64>,
    log_z: f64,
}

fn check_pruned_inputs(
    node_log_probs: &Tensor,
    bounds: &PruneBounds,
    labels: &[usize],
) -> Result<usize> {
    if node_log_probs.rank() != 2
        || node_log_probs.rows() != bounds.node_count()
        || node_log_probs.cols() < 2
    {
        return Err(CoreError::ShapeMismatch {
            op: "pruned node log-probs",
            lhs: alloc::vec![bounds.node_count(), 2],
            rhs: node_log_probs.shape().to_vec(),
        });
    }
    let vocab = node_log_probs.cols() - 1;
    if labels.len() != bounds.token_len() {
        return Err(CoreError::Invalid(alloc::format!(
            "label length {} does not match bounds token length {}",
            labels.len(),
            bounds.token_len()
        )));
    }
    for &y in labels {
        if y >= vocab {
            return Err(CoreError::TokenOutOfRange { token: y, vocab });
        }
    }
    for row in 0..node_log_probs.rows() {
        let mass = num::log_sum_exp(node_log_probs.row(row));
        if !(mass.abs() <= NORM_TOL) {
            return Err(CoreError::Invalid(alloc::format!(
                "pruned node {row} log-probs sum to exp({mass:.3e}), not 1"
            )));
        }
    }
    Ok(vocab)
}

fn pruned_forward(
    node_log_probs: &Tensor,
    bounds: &PruneBounds,
    labels: &[usize],
    vocab: usize,
) -> PrunedScores {
    let u_len = bounds.text_len();
    let t_len = bounds.token_len();
    let emit = |idx: usize, v: usize| node_log_probs.data()[idx * (vocab + 1) + v];
    let blank = |idx: usize| node_log_probs.data()[idx * (vocab + 1) + vocab];
    let mut alpha = alloc::vec![LOG_ZERO; bounds.node_count()];
    for u in 0..u_len {
        for t in bounds.window(u) {
            let idx = bounds.index_of(u, t).unwrap();
            let mut a = if u == 0 && t == 0 { 0.0 } else { LOG_ZERO };
            if u > 0 {
                if let Some(up) = bounds.index_of(u - 1, t) {
                    a = num::log_add(a, alpha[up] + blank(up));
                }
            }
            if t > 0 {
                if let Some(left) = bounds.index_of(u, t - 1) {
                    a = num::log_add(a, alpha[left] + emit(left, labels[t - 1]));
                }
            }
            alpha[idx] = a;
        }
    }
    let log_z = match bounds.index_of(u_len - 1, t_len) {
        Some(end) => alpha[end] + blank(end),
        None => LOG_ZERO,
    };
    PrunedScores { alpha, log_z }
}

/// Negative log-likelihood summed over only the paths that stay inside the
/// windows. Always at least the exact loss; `+inf` when the windows admit
/// no complete path.
pub fn pruned_loss(node_log_probs: &Tensor, bounds: &PruneBounds, labels: &[usize]) -> Result<f64> {
    let vocab = check_pruned_inputs(node_log_probs, bounds, labels)?;
    Ok(-pruned_forward(node_log_probs, bounds, labels, vocab).log_z)
}

/// Tape op: pruned negative log-likelihood with arc-posterior gradients on
/// the kept nodes. Rejects windows that admit no complete path, since the
/// loss would be infinite.
pub fn pruned_loss_op(
    tape: &mut Tape,
    node_log_probs: Var,
    bounds: &PruneBounds,
    labels: &[usize],
) -> Result<Var> {
    let value = tape.value(node_log_probs).clone();
    let vocab = check_pruned_inputs(&value, bounds, labels)?;
    let scores = pruned_forward(&value, bounds, labels, vocab);
    if scores.log_z == LOG_ZERO {
        return Err(CoreError::InvalidBounds(alloc::string::String::from(
            "windows admit no complete path",
        )));
    }
    let u_len = bounds.text_len();
    let t_len = bounds.token_len();
    let emit = |idx: usize, v: usize| value.data()[idx * (vocab + 1) + v];
    let blank = |idx: usize| value.data()[idx * (vocab + 1) + vocab];

    // Backward scores over the same windows.
    let mut beta = alloc::vec![LOG_ZERO; bounds.node_count()];
    for u in (0..u_len).rev() {
        for t in bounds.window(u).rev() {
            let idx = bounds.index_of(u, t).unwrap();
            let mut b = if u == u_len - 1 && t == t_len { blank(idx) } else { LOG_ZERO };
            if u + 1 < u_len {
                if let Some(down) = bounds.index_of(u + 1, t) {
                    b = num::log_add(b, beta[down] + blank(idx));
                }
            }
            if t < t_len {
                if let Some(right) = bounds.index_of(u, t + 1) {
                    b = num::log_add(b, beta[right] + emit(idx, labels[t]));
                }
            }
            beta[idx] = b;
        }
    }

    let mut grad = Tensor::zeros(&[bounds.node_count(), vocab + 1]);
    for u in 0..u_len {
        for t in bounds.window(u) {
            let idx = bounds.index_of(u, t).unwrap();
            let a = scores.alpha[idx];
            if a == LOG_ZERO {
                continue;
            }
            if t < t_len {
                if let Some(right) = bounds.index_of(u, t + 1) {
                    let v = labels[t];
                    let post = num::exp(a + emit(idx, v) + beta[right] - scores.log_z);
                    grad.data_mut()[idx * (vocab + 1) + v] -= post;
                }
            }
            if u + 1 < u_len {
                if let Some(down) = bounds.index_of(u + 1, t) {
                    let post = num::exp(a + blank(idx) + beta[down] - scores.log_z);
                    grad.data_mut()[idx * (vocab + 1) + vocab] -= post;
                }
            }
            if u == u_len - 1 && t == t_len {
                let post = num::exp(a + blank(idx) - scores.log_z);
                grad.data_mut()[idx * (vocab + 1) + vocab] -= post;
            }
        }
    }

    let flops = 6 * bounds.node_count() as u64 * (vocab + 1) as u64;
    Ok(tape.custom(
        &[node_log_probs],
        Tensor::new(&[1], alloc::vec![-scores.log_z]),
        flops,
        alloc::boxed::Box::new(move |g: &Tensor| {
            let mut out = grad;
            out.scale_assign(g.item());
            alloc::vec![out]
        }),
    ))
}

/// Extracts the window rows of a full `[U * (T + 1), V + 1]` matrix, in
/// window order, for feeding dense joints to the pruned loss in tests.
pub fn gather_window_rows(full: &Tensor, bounds: &PruneBounds) -> Tensor {
    let cols = full.cols();
    let t_len = bounds.token_len();
    let mut out = Tensor::zeros(&[bounds.node_count(), cols]);
    for (i, (u, t)) in bounds.node_pairs().into_iter().enumerate() {
        let src = full.row(u * (t_len + 1) + t);
        out.row_mut(i).copy_from_slice(src);
    }
    out
}
