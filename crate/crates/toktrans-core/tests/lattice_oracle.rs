//! Lattice verification against independent oracles: exhaustive path
//! enumeration, enumeration-derived arc posteriors, and central finite
//! differences through the fused loss ops.

use std::collections::HashMap;

use toktrans_core::lattice::{
    enumerate_paths, forward_loss, forward_loss_op, gather_window_rows, node_gradients,
    path_count, path_log_prob, posterior_occupancy, pruned_loss, pruned_loss_op,
    simple_loss_and_bounds, viterbi_align, AlignmentPath, JointLogProbs, PruneBounds, Step,
};
use toktrans_core::rng::Rng;
use toktrans_core::tensor::{Tape, Tensor};

fn random_joint(rng: &mut Rng, u_len: usize, t_len: usize, vocab: usize) -> JointLogProbs {
    let mut logits = Tensor::zeros(&[u_len * (t_len + 1), vocab + 1]);
    for x in logits.data_mut() {
        *x = rng.normal() * 2.0;
    }
    JointLogProbs::from_logits(u_len, t_len, logits).unwrap()
}

fn random_labels(rng: &mut Rng, t_len: usize, vocab: usize) -> Vec<usize> {
    (0..t_len).map(|_| rng.below(vocab)).collect()
}

/// Every monotone step sequence through a lattice, as explicit paths.
fn all_paths(u_len: usize, t_len: usize, labels: &[usize]) -> Vec<AlignmentPath> {
    let mut paths = Vec::new();
    let mut steps = Vec::new();
    fn rec(
        u: usize,
        t: usize,
        u_len: usize,
        t_len: usize,
        labels: &[usize],
        steps: &mut Vec<Step>,
        out: &mut Vec<AlignmentPath>,
    ) {
        if u == u_len - 1 && t == t_len {
            steps.push(Step::Blank);
            out.push(AlignmentPath::new(u_len, steps.clone()).unwrap());
            steps.pop();
            return;
        }
        if t < t_len {
            steps.push(Step::Emit(labels[t]));
            rec(u, t + 1, u_len, t_len, labels, steps, out);
            steps.pop();
        }
        if u + 1 < u_len {
            steps.push(Step::Blank);
            rec(u + 1, t, u_len, t_len, labels, steps, out);
            steps.pop();
        }
    }
    rec(0, 0, u_len, t_len, labels, &mut steps, &mut paths);
    paths
}

#[test]
fn forward_matches_enumeration_on_200_random_lattices() {
    let mut rng = Rng::new(101);
    for case in 0..200 {
        let u_len = 1 + rng.below(4) as usize;
        let t_len = rng.below(5) as usize;
        let vocab = 1 + rng.below(3) as usize;
        let joint = random_joint(&mut rng, u_len, t_len, vocab);
        let labels = random_labels(&mut rng, t_len, vocab);
        let fwd = forward_loss(&joint, &labels).unwrap();
        let e = enumerate_paths(&joint, &labels).unwrap();
        assert!(
            (fwd.log_z - e.log_prob).abs() < 1e-9,
            "case {case}: forward {} vs enumeration {}",
            fwd.log_z,
            e.log_prob
        );
        assert_eq!(e.paths, path_count(u_len, t_len));
    }
}

#[test]
fn uniform_two_by_two_probability_is_one_twenty_seventh() {
    let joint = JointLogProbs::uniform(2, 2, 2);
    let fwd = forward_loss(&joint, &[0, 1]).unwrap();
    let p = fwd.log_z.exp();
    assert!((p - 1.0 / 27.0).abs() < 1e-12, "P = {p}");
    assert!((fwd.nll() - 27f64.ln()).abs() < 1e-12);
}

#[test]
fn forward_matches_path_sums_computed_explicitly() {
    // Cross-check against a second oracle that walks AlignmentPath objects
    // through path_log_prob instead of the recursive enumerator.
    let mut rng = Rng::new(102);
    for _ in 0..20 {
        let u_len = 1 + rng.below(3) as usize;
        let t_len = rng.below(4) as usize;
        let vocab = 1 + rng.below(2) as usize;
        let joint = random_joint(&mut rng, u_len, t_len, vocab);
        let labels = random_labels(&mut rng, t_len, vocab);
        let fwd = forward_loss(&joint, &labels).unwrap();
        let sum: f64 = all_paths(u_len, t_len, &labels)
            .iter()
            .map(|p| path_log_prob(&joint, &labels, p).unwrap().exp())
            .sum();
        assert!((fwd.log_z.exp() - sum).abs() < 1e-12);
    }
}

#[test]
fn node_gradients_match_enumeration_arc_posteriors() {
    // The analytic gradient of the NLL at an arc equals minus the posterior
    // probability that a path uses the arc. Recover those posteriors by
    // brute force: walk every path, accumulate its probability onto each
    // arc it uses, divide by the total.
    let mut rng = Rng::new(103);
    for _ in 0..40 {
        let u_len = 1 + rng.below(4) as usize;
        let t_len = rng.below(4) as usize;
        let vocab = 1 + rng.below(3) as usize;
        let joint = random_joint(&mut rng, u_len, t_len, vocab);
        let labels = random_labels(&mut rng, t_len, vocab);

        let mut arc_mass: HashMap<(usize, usize, usize), f64> = HashMap::new();
        let mut total = 0.0;
        for path in all_paths(u_len, t_len, &labels) {
            let p = path_log_prob(&joint, &labels, &path).unwrap().exp();
            total += p;
            let (mut u, mut t) = (0usize, 0usize);
            for step in path.steps() {
                match step {
                    Step::Emit(v) => {
                        *arc_mass.entry((u, t, *v)).or_insert(0.0) += p;
                        t += 1;
                    }
                    Step::Blank => {
                        *arc_mass.entry((u, t, vocab)).or_insert(0.0) += p;
                        u += 1;
                    }
                }
            }
        }

        let grad = node_gradients(&joint, &labels).unwrap();
        for u in 0..u_len {
            for t in 0..=t_len {
                for col in 0..=vocab {
                    let oracle = arc_mass.get(&(u, t, col)).copied().unwrap_or(0.0) / total;
                    let got = -grad.at2(u * (t_len + 1) + t, col);
                    assert!(
                        (got - oracle).abs() < 1e-9,
                        "arc ({u}, {t}, {col}): analytic {got} vs enumerated {oracle}"
                    );
                }
            }
        }
    }
}

#[test]
fn arc_posteriors_sum_to_path_length() {
    // Each path has exactly U + T arcs, so the posterior arc masses must
    // sum to U + T.
    let mut rng = Rng::new(104);
    for _ in 0..50 {
        let u_len = 1 + rng.below(5) as usize;
        let t_len = rng.below(6) as usize;
        let vocab = 1 + rng.below(3) as usize;
        let joint = random_joint(&mut rng, u_len, t_len, vocab);
        let labels = random_labels(&mut rng, t_len, vocab);
        let grad = node_gradients(&joint, &labels).unwrap();
        let sum: f64 = grad.data().iter().sum();
        assert!(
            (sum + (u_len + t_len) as f64).abs() < 1e-9,
            "gradient mass {sum} for U + T = {}",
            u_len + t_len
        );
    }
}

#[test]
fn occupancy_stays_in_unit_interval_with_unit_corners() {
    let mut rng = Rng::new(105);
    for _ in 0..30 {
        let u_len = 1 + rng.below(5) as usize;
        let t_len = rng.below(5) as usize;
        let vocab = 1 + rng.below(3) as usize;
        let joint = random_joint(&mut rng, u_len, t_len, vocab);
        let labels = random_labels(&mut rng, t_len, vocab);
        let gamma = posterior_occupancy(&joint, &labels).unwrap();
        for u in 0..u_len {
            for t in 0..=t_len {
                let g = gamma.at2(u, t);
                assert!((0.0..=1.0).contains(&g));
            }
        }
        assert!((gamma.at2(0, 0) - 1.0).abs() < 1e-9);
        assert!((gamma.at2(u_len - 1, t_len) - 1.0).abs() < 1e-9);
    }
}

#[test]
fn renormalized_perturbations_keep_log_z_nonpositive() {
    let mut rng = Rng::new(106);
    for _ in 0..50 {
        let u_len = 1 + rng.below(4) as usize;
        let t_len = rng.below(4) as usize;
        let vocab = 1 + rng.below(3) as usize;
        // Large perturbation scale stresses the normalization path.
        let mut logits = Tensor::zeros(&[u_len * (t_len + 1), vocab + 1]);
        for x in logits.data_mut() {
            *x = rng.normal() * 10.0;
        }
        let joint = JointLogProbs::from_logits(u_len, t_len, logits).unwrap();
        let labels = random_labels(&mut rng, t_len, vocab);
        let fwd = forward_loss(&joint, &labels).unwrap();
        assert!(fwd.log_z <= 1e-12, "log_z = {}", fwd.log_z);
    }
}

#[test]
fn viterbi_matches_best_enumerated_path() {
    let mut rng = Rng::new(107);
    for _ in 0..40 {
        let u_len = 1 + rng.below(4) as usize;
        let t_len = rng.below(4) as usize;
        let vocab = 1 + rng.below(3) as usize;
        let joint = random_joint(&mut rng, u_len, t_len, vocab);
        let labels = random_labels(&mut rng, t_len, vocab);
        let (path, lp) = viterbi_align(&joint, &labels).unwrap();
        let best = all_paths(u_len, t_len, &labels)
            .iter()
            .map(|p| path_log_prob(&joint, &labels, p).unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((lp - best).abs() < 1e-9, "viterbi {lp} vs best {best}");
        let walked = path_log_prob(&joint, &labels, &path).unwrap();
        assert!((walked - lp).abs() < 1e-12);
        // The best single path can never beat the sum over all paths.
        let fwd = forward_loss(&joint, &labels).unwrap();
        assert!(lp <= fwd.log_z + 1e-12);
    }
}

#[test]
fn near_one_hot_lattice_concentrates_on_its_designed_path() {
    // Drive probability onto one staircase; Viterbi must recover it and
    // the total mass must be dominated by it.
    let (u_len, t_len, vocab) = (4usize, 3usize, 3usize);
    let labels = [2usize, 0, 1];
    // Designed path: emit at u = 0, u = 2, u = 2, blanks elsewhere.
    let emits = [(0usize, 0usize), (2, 1), (2, 2)];
    let mut logits = Tensor::zeros(&[u_len * (t_len + 1), vocab + 1]);
    let mut on_path_arc = vec![vocab; u_len * (t_len + 1)];
    let (mut u, mut t) = (0usize, 0usize);
    let mut steps = Vec::new();
    for _ in 0..(u_len + t_len) {
        if emits.contains(&(u, t)) {
            on_path_arc[u * (t_len + 1) + t] = labels[t];
            steps.push(Step::Emit(labels[t]));
            t += 1;
        } else {
            steps.push(Step::Blank);
            u += 1;
        }
    }
    for (row, &col) in on_path_arc.iter().enumerate() {
        logits.data_mut()[row * (vocab + 1) + col] = 30.0;
    }
    let joint = JointLogProbs::from_logits(u_len, t_len, logits).unwrap();
    let (path, lp) = viterbi_align(&joint, &labels).unwrap();
    assert_eq!(path.steps(), AlignmentPath::new(u_len, steps).unwrap().steps());
    let fwd = forward_loss(&joint, &labels).unwrap();
    assert!((fwd.log_z - lp).abs() < 1e-6, "off-path mass too large");
}

fn log_softmax_rows(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    for r in 0..out.rows() {
        let shift = toktrans_core::num::log_sum_exp(out.row(r));
        for v in out.row_mut(r) {
            *v -= shift;
        }
    }
    out
}

fn fd_compare(at: &Tensor, analytic: &Tensor, loss_of: impl Fn(&Tensor) -> f64) {
    let h = 1e-5;
    let mut probe = at.clone();
    for i in 0..probe.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let up = loss_of(&probe);
        probe.data_mut()[i] = orig - h;
        let down = loss_of(&probe);
        probe.data_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let got = analytic.data()[i];
        let scale = got.abs().max(numeric.abs()).max(1.0);
        assert!(
            ((got - numeric) / scale).abs() < 1e-4,
            "entry {i}: analytic {got} vs numeric {numeric}"
        );
    }
}

/// Central finite differences through logits -> log_softmax -> loss op.
/// `width` switches between the exact loss over the full matrix and the
/// pruned loss over window-node rows with fixed bounds.
fn finite_diff_check(
    u_len: usize,
    t_len: usize,
    vocab: usize,
    labels: &[usize],
    seed: u64,
    width: Option<usize>,
) {
    let mut rng = Rng::new(seed);
    let mut logits = Tensor::zeros(&[u_len * (t_len + 1), vocab + 1]);
    for x in logits.data_mut() {
        *x = rng.normal();
    }

    match width {
        None => {
            let analytic = {
                let mut tape = Tape::new();
                let raw = tape.leaf(logits.clone());
                let lp = tape.log_softmax(raw);
                let loss = forward_loss_op(&mut tape, lp, u_len, labels).unwrap();
                assert!(tape.value(loss).item().is_finite());
                tape.backward(loss).wrt(raw).cloned().unwrap()
            };
            fd_compare(&logits, &analytic, |x| {
                let joint = JointLogProbs::from_logits(u_len, t_len, x.clone()).unwrap();
                forward_loss(&joint, labels).unwrap().nll()
            });
        }
        Some(w) => {
            // Bounds are data, held fixed while the logits move.
            let joint = JointLogProbs::from_logits(u_len, t_len, logits.clone()).unwrap();
            let bounds = PruneBounds::from_lattice(&joint, labels, w).unwrap();
            let raw_rows = gather_window_rows(&logits, &bounds);
            let analytic = {
                let mut tape = Tape::new();
                let raw = tape.leaf(raw_rows.clone());
                let lp = tape.log_softmax(raw);
                let loss = pruned_loss_op(&mut tape, lp, &bounds, labels).unwrap();
                assert!(tape.value(loss).item().is_finite());
                tape.backward(loss).wrt(raw).cloned().unwrap()
            };
            fd_compare(&raw_rows, &analytic, |x| {
                pruned_loss(&log_softmax_rows(x), &bounds, labels).unwrap()
            });
        }
    }
}

#[test]
fn exact_loss_gradients_match_finite_differences() {
    finite_diff_check(3, 3, 3, &[0, 2, 1], 108, None);
    finite_diff_check(1, 2, 2, &[1, 0], 109, None);
    finite_diff_check(4, 0, 2, &[], 110, None);
}

#[test]
fn pruned_loss_gradients_match_finite_differences() {
    finite_diff_check(3, 3, 3, &[0, 2, 1], 111, Some(2));
    finite_diff_check(4, 4, 2, &[1, 0, 0, 1], 112, Some(3));
}

#[test]
fn fused_op_values_match_pure_losses() {
    let mut rng = Rng::new(113);
    for _ in 0..20 {
        let u_len = 1 + rng.below(4) as usize;
        let t_len = rng.below(4) as usize;
        let vocab = 1 + rng.below(3) as usize;
        let joint = random_joint(&mut rng, u_len, t_len, vocab);
        let labels = random_labels(&mut rng, t_len, vocab);

        let mut tape = Tape::new();
        let lp = tape.leaf(joint.log_probs().clone());
        let loss = forward_loss_op(&mut tape, lp, u_len, &labels).unwrap();
        let pure = forward_loss(&joint, &labels).unwrap().nll();
        assert!((tape.value(loss).item() - pure).abs() < 1e-12);

        let bounds = PruneBounds::from_lattice(&joint, &labels, 2).unwrap();
        let rows = gather_window_rows(joint.log_probs(), &bounds);
        let pure_pruned = pruned_loss(&rows, &bounds, &labels).unwrap();
        if pure_pruned.is_finite() {
            let mut tape = Tape::new();
            let lp = tape.leaf(rows);
            let loss = pruned_loss_op(&mut tape, lp, &bounds, &labels).unwrap();
            assert!((tape.value(loss).item() - pure_pruned).abs() < 1e-12);
        }
    }
}

#[test]
fn pruned_loss_never_below_exact_on_100_lattices() {
    let mut rng = Rng::new(114);
    for case in 0..100 {
        let u_len = 2 + rng.below(4) as usize;
        let t_len = 1 + rng.below(4) as usize;
        let vocab = 1 + rng.below(3) as usize;
        let joint = random_joint(&mut rng, u_len, t_len, vocab);
        let labels = random_labels(&mut rng, t_len, vocab);
        let exact = forward_loss(&joint, &labels).unwrap().nll();
        let width = 2 + rng.below(3) as usize;
        let bounds = PruneBounds::from_lattice(&joint, &labels, width).unwrap();
        let pruned =
            pruned_loss(&gather_window_rows(joint.log_probs(), &bounds), &bounds, &labels)
                .unwrap();
        assert!(
            pruned >= exact - 1e-9,
            "case {case}: pruned {pruned} below exact {exact}"
        );
    }
}

#[test]
fn pruned_equals_exact_at_full_width() {
    let mut rng = Rng::new(115);
    for _ in 0..30 {
        let u_len = 1 + rng.below(5) as usize;
        let t_len = rng.below(5) as usize;
        let vocab = 1 + rng.below(3) as usize;
        let joint = random_joint(&mut rng, u_len, t_len, vocab);
        let labels = random_labels(&mut rng, t_len, vocab);
        let exact = forward_loss(&joint, &labels).unwrap().nll();
        for width in [t_len + 1, t_len + 3] {
            if width < 2 {
                continue;
            }
            let bounds = PruneBounds::from_lattice(&joint, &labels, width).unwrap();
            assert!(bounds.is_full());
            let pruned =
                pruned_loss(&gather_window_rows(joint.log_probs(), &bounds), &bounds, &labels)
                    .unwrap();
            assert!((pruned - exact).abs() < 1e-9);
        }
    }
}

#[test]
fn pruning_gap_nonincreasing_along_width_sweep() {
    let mut rng = Rng::new(116);
    for case in 0..100 {
        let (u_len, t_len, vocab) = (5usize, 4usize, 3usize);
        let joint = random_joint(&mut rng, u_len, t_len, vocab);
        let labels = random_labels(&mut rng, t_len, vocab);
        let exact = forward_loss(&joint, &labels).unwrap().nll();
        let mut prev_gap = f64::INFINITY;
        for width in 2..=(t_len + 1) {
            let bounds = PruneBounds::from_lattice(&joint, &labels, width).unwrap();
            let pruned =
                pruned_loss(&gather_window_rows(joint.log_probs(), &bounds), &bounds, &labels)
                    .unwrap();
            let gap = pruned - exact;
            assert!(
                gap <= prev_gap + 1e-9,
                "case {case}: gap grew from {prev_gap} to {gap} at width {width}"
            );
            prev_gap = gap;
        }
        assert!(prev_gap.abs() < 1e-9, "full width must close the gap");
    }
}

#[test]
fn bounds_windows_are_monotone_connected_and_anchored() {
    let mut rng = Rng::new(117);
    for _ in 0..60 {
        let u_len = 1 + rng.below(6) as usize;
        let t_len = rng.below(6) as usize;
        let vocab = 1 + rng.below(3) as usize;
        let joint = random_joint(&mut rng, u_len, t_len, vocab);
        let labels = random_labels(&mut rng, t_len, vocab);
        let width = 2 + rng.below(4) as usize;
        let bounds = PruneBounds::from_lattice(&joint, &labels, width).unwrap();
        // The width only grows, and only when the requested one cannot
        // span the token rows in u_len steps.
        assert!(bounds.width() >= width);
        if u_len * (width - 1) >= t_len {
            assert_eq!(bounds.width(), width);
        }
        let eff = bounds.width();
        let lo = bounds.lo();
        assert_eq!(lo[0], 0, "entry node must stay inside the first window");
        for u in 1..u_len {
            assert!(lo[u] >= lo[u - 1]);
            assert!(lo[u] - lo[u - 1] <= eff - 1, "windows must overlap");
        }
        assert!(bounds.node_count() <= u_len * eff);
        assert!(
            bounds.window(u_len - 1).contains(&t_len),
            "exit node must stay inside the last window"
        );
    }
}

#[test]
fn peaked_lattice_bounds_contain_the_viterbi_path() {
    // When the mass concentrates on one staircase whose per-row spans fit
    // the window width, the centroid windows cover the Viterbi path.
    let mut rng = Rng::new(118);
    for case in 0..40 {
        let u_len = 2 + rng.below(4) as usize;
        let t_len = 1 + rng.below(4) as usize;
        let vocab = 1 + rng.below(3) as usize;
        let labels = random_labels(&mut rng, t_len, vocab);
        // Random staircase, favored sharply.
        let mut arcs = vec![true; t_len];
        arcs.extend(std::iter::repeat(false).take(u_len - 1));
        rng.shuffle(&mut arcs);
        let mut logits = Tensor::zeros(&[u_len * (t_len + 1), vocab + 1]);
        let (mut u, mut t) = (0usize, 0usize);
        for &is_emit in &arcs {
            let row = u * (t_len + 1) + t;
            if is_emit {
                logits.data_mut()[row * (vocab + 1) + labels[t]] = 12.0;
                t += 1;
            } else {
                logits.data_mut()[row * (vocab + 1) + vocab] = 12.0;
                u += 1;
            }
        }
        logits.data_mut()[(u * (t_len + 1) + t) * (vocab + 1) + vocab] = 12.0;
        let joint = JointLogProbs::from_logits(u_len, t_len, logits).unwrap();

        let (path, _) = viterbi_align(&joint, &labels).unwrap();
        let mut span = 1usize;
        let mut widest = 1usize;
        for step in path.steps() {
            match step {
                Step::Emit(_) => span += 1,
                Step::Blank => {
                    widest = widest.max(span);
                    span = 1;
                }
            }
        }
        let width = widest.max(2);
        let bounds = PruneBounds::from_lattice(&joint, &labels, width).unwrap();
        assert!(
            bounds.contains_path(&path),
            "case {case}: windows {:?} miss the peak path",
            bounds.lo()
        );
    }
}

#[test]
fn simple_joiner_lattice_matches_manual_low_rank_sum() {
    let mut rng = Rng::new(119);
    let (u_len, t_len, vocab) = (4usize, 3usize, 4usize);
    let labels = [3usize, 0, 2];
    let mut enc = Tensor::zeros(&[u_len, vocab + 1]);
    let mut pred = Tensor::zeros(&[t_len + 1, vocab + 1]);
    for x in enc.data_mut() {
        *x = rng.normal();
    }
    for x in pred.data_mut() {
        *x = rng.normal();
    }
    let (loss, bounds) = simple_loss_and_bounds(&enc, &pred, &labels, 2).unwrap();

    let mut logits = Tensor::zeros(&[u_len * (t_len + 1), vocab + 1]);
    for u in 0..u_len {
        for t in 0..=t_len {
            for c in 0..=vocab {
                logits.data_mut()[(u * (t_len + 1) + t) * (vocab + 1) + c] =
                    enc.at2(u, c) + pred.at2(t, c);
            }
        }
    }
    let joint = JointLogProbs::from_logits(u_len, t_len, logits).unwrap();
    let manual = forward_loss(&joint, &labels).unwrap().nll();
    assert!((loss - manual).abs() < 1e-12);
    assert_eq!(bounds.width(), 2);
    assert_eq!(bounds.token_len(), t_len);
}

#[test]
fn enumeration_guard_bounds_runtime() {
    use std::time::Instant;
    let start = Instant::now();
    let joint = JointLogProbs::uniform(4, 4, 3);
    let labels = [0usize, 1, 2, 0];
    for _ in 0..200 {
        enumerate_paths(&joint, &labels).unwrap();
    }
    assert!(start.elapsed().as_secs() < 10);
}
