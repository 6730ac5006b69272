//! Tape-side network builders. Training, evaluation and decoding all
//! compose these, so a value computed stepwise during decoding is the
//! same number the training graph produces at that lattice node.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::Result;
use crate::lattice::{forward_loss_op, pruned_loss_op, simple_loss_and_bounds, PruneBounds};
use crate::num;
use crate::tensor::{ParamSet, Tape, Tensor, Var};

use super::{ModelConfig, PredictorKind};

/// Binds parameters to tape nodes at most once per tape.
pub(super) struct Bound<'a> {
    pub cfg: &'a ModelConfig,
    params: &'a ParamSet,
    vars: Vec<(String, Var)>,
}

impl<'a> Bound<'a> {
    pub fn new(cfg: &'a ModelConfig, params: &'a ParamSet) -> Self {
        Bound { cfg, params, vars: Vec::new() }
    }

    pub fn var(&mut self, tape: &mut Tape, name: &str) -> Var {
        if let Some(&(_, v)) = self.vars.iter().find(|(n, _)| n == name) {
            return v;
        }
        let v = tape.param(name, self.params.expect(name));
        self.vars.push((String::from(name), v));
        v
    }
}

fn linear(tape: &mut Tape, bound: &mut Bound, x: Var, w: &str, b: &str) -> Var {
    let w = bound.var(tape, w);
    let b = bound.var(tape, b);
    let y = tape.matmul(x, false, w, false);
    tape.add_row(y, b)
}

fn feed_forward(tape: &mut Tape, bound: &mut Bound, prefix: &str, x: Var) -> Var {
    let h = linear(tape, bound, x, &format!("{prefix}.w1"), &format!("{prefix}.b1"));
    let h = tape.tanh(h);
    linear(tape, bound, h, &format!("{prefix}.w2"), &format!("{prefix}.b2"))
}

/// Lower-triangular mask: row `i` may attend to columns `0..=i`.
pub(super) fn causal_mask(n: usize) -> Tensor {
    let mut m = Tensor::zeros(&[n, n]);
    for i in 0..n {
        for j in 0..=i {
            m.set2(i, j, 1.0);
        }
    }
    m
}

/// Multi-head attention computed from a per-head score product. `q_src`
/// attends over `kv_src`; both are already layer-normed inputs.
fn attend(
    tape: &mut Tape,
    bound: &mut Bound,
    prefix: &str,
    q_src: Var,
    kv_src: Var,
    mask: Option<&Tensor>,
) -> Var {
    let heads = bound.cfg.heads;
    let dh = bound.cfg.dim / heads;
    let wq = bound.var(tape, &format!("{prefix}.wq"));
    let wk = bound.var(tape, &format!("{prefix}.wk"));
    let wv = bound.var(tape, &format!("{prefix}.wv"));
    let q = tape.matmul(q_src, false, wq, false);
    let k = tape.matmul(kv_src, false, wk, false);
    let v = tape.matmul(kv_src, false, wv, false);
    let mut ctx = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = tape.slice_cols(q, h * dh, dh);
        let kh = tape.slice_cols(k, h * dh, dh);
        let vh = tape.slice_cols(v, h * dh, dh);
        let scores = tape.matmul(qh, false, kh, true);
        let scores = tape.scale(scores, 1.0 / num::sqrt(dh as f64));
        let probs = match mask {
            Some(m) => tape.masked_softmax(scores, m),
            None => tape.softmax(scores),
        };
        ctx.push(tape.matmul(probs, false, vh, false));
    }
    let ctx = tape.concat_cols(&ctx);
    let wo = bound.var(tape, &format!("{prefix}.wo"));
    tape.matmul(ctx, false, wo, false)
}

/// Pre-norm residual block: attention then feed-forward.
fn attention_block(
    tape: &mut Tape,
    bound: &mut Bound,
    prefix: &str,
    x: Var,
    mask: Option<&Tensor>,
) -> Var {
    let eps = bound.cfg.ln_eps;
    let ln1 = tape.layer_norm(x, eps);
    let attn = attend(tape, bound, &format!("{prefix}.attn"), ln1, ln1, mask);
    let x = tape.add(x, attn);
    let ln2 = tape.layer_norm(x, eps);
    let ff = feed_forward(tape, bound, &format!("{prefix}.ff"), ln2);
    tape.add(x, ff)
}

/// Bidirectional text encoder: symbol embedding plus learned positions
/// through the attention stack. Output `[text_len, dim]`.
pub(super) fn text_encoder(tape: &mut Tape, bound: &mut Bound, text: &[usize]) -> Var {
    let table = bound.var(tape, "text.embed");
    let emb = tape.embedding(table, text);
    let pos_table = bound.var(tape, "text.pos");
    let pos = tape.slice_rows(pos_table, 0, text.len());
    let mut x = tape.add(emb, pos);
    for b in 0..bound.cfg.text_blocks {
        x = attention_block(tape, bound, &format!("text.b{b}"), x, None);
    }
    tape.layer_norm(x, bound.cfg.ln_eps)
}

pub(super) struct LstmLayer {
    pub wx: Var,
    pub wh: Var,
    pub b: Var,
}

pub(super) fn lstm_layer_vars(tape: &mut Tape, bound: &mut Bound, layer: usize) -> LstmLayer {
    LstmLayer {
        wx: bound.var(tape, &format!("pred.l{layer}.wx")),
        wh: bound.var(tape, &format!("pred.l{layer}.wh")),
        b: bound.var(tape, &format!("pred.l{layer}.b")),
    }
}

/// One recurrence step. Gate columns are input, forget, cell, output in
/// that order. Work per step does not depend on how many steps preceded
/// it.
pub(super) fn lstm_cell(
    tape: &mut Tape,
    layer: &LstmLayer,
    hidden: usize,
    x_t: Var,
    h_prev: Var,
    c_prev: Var,
) -> (Var, Var) {
    let from_x = tape.matmul(x_t, false, layer.wx, false);
    let from_h = tape.matmul(h_prev, false, layer.wh, false);
    let pre = tape.add(from_x, from_h);
    let gates = tape.add_row(pre, layer.b);
    let i_lin = tape.slice_cols(gates, 0, hidden);
    let f_lin = tape.slice_cols(gates, hidden, hidden);
    let g_lin = tape.slice_cols(gates, 2 * hidden, hidden);
    let o_lin = tape.slice_cols(gates, 3 * hidden, hidden);
    let i = tape.sigmoid(i_lin);
    let f = tape.sigmoid(f_lin);
    let g = tape.tanh(g_lin);
    let o = tape.sigmoid(o_lin);
    let fc = tape.mul(f, c_prev);
    let ig = tape.mul(i, g);
    let c = tape.add(fc, ig);
    let tc = tape.tanh(c);
    let h = tape.mul(o, tc);
    (h, c)
}

/// Projects the top recurrent state into the joint width and normalizes,
/// shared by the full unroll and the stepwise decode path.
pub(super) fn lstm_output_row(tape: &mut Tape, bound: &mut Bound, h_top: Var) -> Var {
    let out_w = bound.var(tape, "pred.out");
    let projected = tape.matmul(h_top, false, out_w, false);
    tape.layer_norm(projected, bound.cfg.ln_eps)
}

///// Prediction-network rows for the shifted sequence `[start, labels..]`:
/// row `t` conditions on the first `t` labels. Output `[T + 1, dim]`.
pub(super) fn predictor(tape: &mut Tape, bound: &mut Bound, labels: &[usize]) -> Var {
    let cfg = bound.cfg;
    let mut ids = Vec::with_capacity(labels.len() + 1);
    ids.push(cfg.token_vocab);
    ids.extend_from_slice(labels);
    let table = bound.var(tape, "pred.embed");
    let emb = tape.embedding(table, &ids);
    match cfg.predictor {
        PredictorKind::Lstm => {
            let hidden = cfg.lstm_hidden;
            let mut seq = emb;
            for l in 0..cfg.lstm_layers {
                let layer = lstm_layer_vars(tape, bound, l);
                let mut h = tape.leaf(Tensor::zeros(&[1, hidden]));
                let mut c = tape.leaf(Tensor::zeros(&[1, hidden]));
                let mut rows = Vec::with_capacity(ids.len());
                for t in 0..ids.len() {
                    let xt = tape.slice_rows(seq, t, 1);
                    let (nh, nc) = lstm_cell(tape, &layer, hidden, xt, h, c);
                    h = nh;
                    c = nc;
                    rows.push(nh);
                }
                seq = tape.concat_rows(&rows);
            }
            lstm_output_row(tape, bound, seq)
        }
        PredictorKind::Attention => {
            let pos_table = bound.var(tape, "pred.pos");
            let pos = tape.slice_rows(pos_table, 0, ids.len());
            let mut x = tape.add(emb, pos);
            let mask = causal_mask(ids.len());
            for b in 0..cfg.pred_blocks {
                x = attention_block(tape, bound, &format!("pred.b{b}"), x, Some(&mask));
            }
            tape.layer_norm(x, cfg.ln_eps)
        }
    }
}

/// One-row continuation of a causal attention block. The cache carries
/// the projected key and value rows of every previous position for this
/// block; the new row attends over them plus itself, reproducing row
/// `t` of the batched causal block exactly. Returns the block output
/// row and the extended cache.
pub(super) fn attention_block_step(
    tape: &mut Tape,
    bound: &mut Bound,
    prefix: &str,
    x_row: Var,
    cache: Option<(Var, Var)>,
) -> (Var, (Var, Var)) {
    let eps = bound.cfg.ln_eps;
    let heads = bound.cfg.heads;
    let dh = bound.cfg.dim / heads;
    let ln1 = tape.layer_norm(x_row, eps);
    let wq = bound.var(tape, &format!("{prefix}.attn.wq"));
    let wk = bound.var(tape, &format!("{prefix}.attn.wk"));
    let wv = bound.var(tape, &format!("{prefix}.attn.wv"));
    let q = tape.matmul(ln1, false, wq, false);
    let k_new = tape.matmul(ln1, false, wk, false);
    let v_new = tape.matmul(ln1, false, wv, false);
    let (k_all, v_all) = match cache {
        Some((k, v)) => (tape.concat_rows(&[k, k_new]), tape.concat_rows(&[v, v_new])),
        None => (k_new, v_new),
    };
    let mut ctx = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = tape.slice_cols(q, h * dh, dh);
        let kh = tape.slice_cols(k_all, h * dh, dh);
        let vh = tape.slice_cols(v_all, h * dh, dh);
        let scores = tape.matmul(qh, false, kh, true);
        let scores = tape.scale(scores, 1.0 / num::sqrt(dh as f64));
        let probs = tape.softmax(scores);
        ctx.push(tape.matmul(probs, false, vh, false));
    }
    let ctx = tape.concat_cols(&ctx);
    let wo = bound.var(tape, &format!("{prefix}.attn.wo"));
    let attn = tape.matmul(ctx, false, wo, false);
    let x = tape.add(x_row, attn);
    let ln2 = tape.layer_norm(x, eps);
    let ff = feed_forward(tape, bound, &format!("{prefix}.ff"), ln2);
    (tape.add(x, ff), (k_all, v_all))
}

/// Reference encoder: per-frame MLP followed by attentive mean pooling.
/// Output `[1, ref_dim]`; invariant to frame order and to repeating the
/// whole frame set.
pub(super) fn reference_encoder(tape: &mut Tape, bound: &mut Bound, frames: &Tensor) -> Var {
    let x = tape.leaf(frames.clone());
    let h = linear(tape, bound, x, "ref.w1", "ref.b1");
    let h = tape.tanh(h);
    let h = linear(tape, bound, h, "ref.w2", "ref.b2");
    let h = tape.tanh(h);
    let s = linear(tape, bound, h, "ref.score_w", "ref.score_b");
    let s = tape.tanh(s);
    let v = bound.var(tape, "ref.score_v");
    let scores = tape.matmul(s, false, v, false);
    let scores_row = tape.reshape(scores, &[1, frames.rows()]);
    let weights = tape.softmax(scores_row);
    tape.matmul(weights, false, h, false)
}

/// Conditional feed-forward stack over joint node rows, ending in the
/// zero-initialized output head. Each block layer-norms its input, then
/// applies a reference-derived affine: scale `(1 + s(h_ref))`, plus a
/// shift when configured. Zero conditioning weights leave plain layer
/// norm, making the logits independent of the reference. Returns
/// label-plus-blank logits, one row per input row.
pub(super) fn joint_logits(tape: &mut Tape, bound: &mut Bound, nodes: Var, h_ref: Var) -> Var {
    let cfg = bound.cfg;
    let mut x = nodes;
    for b in 0..cfg.joint_blocks {
        let ln = tape.layer_norm(x, cfg.ln_eps);
        let scale_w = bound.var(tape, &format!("joint.b{b}.cln.scale"));
        let scale = tape.matmul(h_ref, false, scale_w, false);
        let scaled = tape.mul_row(ln, scale);
        let mut y = tape.add(ln, scaled);
        if cfg.cln_shift {
            let shift_w = bound.var(tape, &format!("joint.b{b}.cln.shift"));
            let shift = tape.matmul(h_ref, false, shift_w, false);
            y = tape.add_row(y, shift);
        }
        let ff = feed_forward(tape, bound, &format!("joint.b{b}.ff"), y);
        x = tape.add(x, ff);
    }
    let ln_out = tape.layer_norm(x, cfg.ln_eps);
    linear(tape, bound, ln_out, "joint.head.w", "joint.head.b")
}

pub(super) struct Towers {
    pub h_text: Var,
    pub h_pred: Var,
    pub h_ref: Var,
}

pub(super) fn towers(
    tape: &mut Tape,
    bound: &mut Bound,
    text: &[usize],
    labels: &[usize],
    frames: &Tensor,
) -> Towers {
    Towers {
        h_text: text_encoder(tape, bound, text),
        h_pred: predictor(tape, bound, labels),
        h_ref: reference_encoder(tape, bound, frames),
    }
}

/// Full-lattice loss: every `(u, t)` node is scored by the joint stack
/// and the exact lattice marginal is the training objective. Also
/// returns the normalized node log-probabilities.
pub(super) fn exact_loss_graph(
    tape: &mut Tape,
    bound: &mut Bound,
    text: &[usize],
    labels: &[usize],
    frames: &Tensor,
) -> Result<(Var, Var)> {
    let tw = towers(tape, bound, text, labels, frames);
    let nodes = tape.pair_sum(tw.h_text, tw.h_pred);
    let logits = joint_logits(tape, bound, nodes, tw.h_ref);
    let log_probs = tape.log_softmax(logits);
    let loss = forward_loss_op(tape, log_probs, text.len(), labels)?;
    Ok((loss, log_probs))
}

pub(super) struct PrunedGraph {
    pub loss: Var,
    pub simple: Var,
    pub pruned: Var,
    pub bounds: PruneBounds,
}

/// Two-stage pruned loss. A cheap additive joiner scores the full grid,
/// fixes the per-row windows, and contributes its own lattice loss; the
/// rich joint stack then scores only the kept nodes. The combined
/// objective is `a_simple * simple + a_pruned * pruned`. Passing
/// `fixed_bounds` skips window placement and reuses the given windows,
/// which keeps the loss differentiable for finite-difference checks.
pub(super) fn pruned_loss_graph(
    tape: &mut Tape,
    bound: &mut Bound,
    text: &[usize],
    labels: &[usize],
    frames: &Tensor,
    width: usize,
    a_simple: f64,
    a_pruned: f64,
    fixed_bounds: Option<&PruneBounds>,
) -> Result<PrunedGraph> {
    let tw = towers(tape, bound, text, labels, frames);
    let enc_logits = linear(tape, bound, tw.h_text, "simple.enc.w", "simple.enc.b");
    let pred_logits = linear(tape, bound, tw.h_pred, "simple.pred.w", "simple.pred.b");
    let bounds = match fixed_bounds {
        Some(b) => b.clone(),
        None => {
            let (_, bounds) = simple_loss_and_bounds(
                tape.value(enc_logits),
                tape.value(pred_logits),
                labels,
                width,
            )?;
            bounds
        }
    };
    let simple_nodes = tape.pair_sum(enc_logits, pred_logits);
    let simple_logp = tape.log_softmax(simple_nodes);
    let simple = forward_loss_op(tape, simple_logp, text.len(), labels)?;

    let pairs = bounds.node_pairs();
    let kept = tape.pair_sum_select(tw.h_text, tw.h_pred, &pairs);
    let kept_logits = joint_logits(tape, bound, kept, tw.h_ref);
    let kept_logp = tape.log_softmax(kept_logits);
    let pruned = pruned_loss_op(tape, kept_logp, &bounds, labels)?;

    let weighted_simple = tape.scale(simple, a_simple);
    let weighted_pruned = tape.scale(pruned, a_pruned);
    let loss = tape.add(weighted_simple, weighted_pruned);
    Ok(PrunedGraph { loss, simple, pruned, bounds })
}
