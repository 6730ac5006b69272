//! Incremental decoding state.
//!
//! A session walks the emission lattice one node at a time, scoring the
//! current (text position, token prefix) pair on demand. All math runs
//! through the same graph builders as training, on one long-lived tape:
//! the text and reference towers are built once, the predictor advances
//! one row per accepted token (recurrent state for the LSTM, projected
//! key/value caches for causal attention), and each score query joins a
//! single text row against the current predictor row. Tape flop deltas
//! therefore measure the true per-step cost of the chosen predictor.

use alloc::vec::Vec;

use crate::decoder::StepScorer;
use crate::error::{CoreError, Result};
use crate::tensor::{Tape, Tensor, Var};

use super::graph::{self, Bound};
use super::{Model, PredictorKind};

pub struct DecodeSession<'m> {
    tape: Tape,
    bound: Bound<'m>,
    u_len: usize,
    u: usize,
    t: usize,
    h_text: Var,
    h_ref: Var,
    pred_row: Var,
    // One (h, c) pair per layer, present for the LSTM predictor.
    lstm_state: Vec<(Var, Var)>,
    // One (keys, values) pair per block, present for the attention predictor.
    attn_cache: Vec<(Var, Var)>,
    cached_scores: Option<Vec<f64>>,
}

impl<'m> DecodeSession<'m> {
    pub(super) fn new(model: &'m Model, text: &[usize], frames: &Tensor) -> Result<Self> {
        let cfg = &model.cfg;
        let mut tape = Tape::new();
        let mut bound = Bound::new(cfg, &model.params);
        let h_text = graph::text_encoder(&mut tape, &mut bound, text);
        let h_ref = graph::reference_encoder(&mut tape, &mut bound, frames);

        let mut session = DecodeSession {
            tape,
            bound,
            u_len: text.len(),
            u: 0,
            t: 0,
            h_text,
            h_ref,
            // Placeholder until the start-of-sequence row is pushed below.
            pred_row: h_text,
            lstm_state: Vec::new(),
            attn_cache: Vec::new(),
            cached_scores: None,
        };
        if cfg.predictor == PredictorKind::Lstm {
            let zero = Tensor::zeros(&[1, cfg.lstm_hidden]);
            for _ in 0..cfg.lstm_layers {
                let h = session.tape.leaf(zero.clone());
                let c = session.tape.leaf(zero.clone());
                session.lstm_state.push((h, c));
            }
        }
        // The predictor starts from the start-of-sequence id; its first
        // output row scores the empty token prefix.
        session.feed_predictor(cfg.token_vocab)?;
        Ok(session)
    }

    /// Current lattice node as (text position, tokens emitted).
    pub fn position(&self) -> (usize, usize) {
        (self.u, self.t)
    }

    /// Total floating point work since the session was opened.
    pub fn flops(&self) -> u64 {
        self.tape.flops()
    }

    /// Runs one predictor step on token id `id` and replaces the current
    /// predictor output row. Counters are managed by the callers.
    fn feed_predictor(&mut self, id: usize) -> Result<()> {
        let cfg = self.bound.cfg;
        match cfg.predictor {
            PredictorKind::Lstm => {
                let embed = self.bound.var(&mut self.tape, "pred.embed");
                let mut x = self.tape.embedding(embed, &[id]);
                for l in 0..cfg.lstm_layers {
                    let layer = graph::lstm_layer_vars(&mut self.tape, &mut self.bound, l);
                    let (h_prev, c_prev) = self.lstm_state[l];
                    let (h, c) = graph::lstm_cell(
                        &mut self.tape,
                        &layer,
                        cfg.lstm_hidden,
                        x,
                        h_prev,
                        c_prev,
                    );
                    self.lstm_state[l] = (h, c);
                    x = h;
                }
                self.pred_row = graph::lstm_output_row(&mut self.tape, &mut self.bound, x);
            }
            PredictorKind::Attention => {
                // Row index this token occupies in the unrolled sequence.
                let pos = if self.attn_cache.is_empty() { 0 } else { self.t + 1 };
                if pos >= cfg.max_token_len {
                    return Err(CoreError::SizeGuard {
                        limit: cfg.max_token_len,
                        got: pos + 1,
                    });
                }
                let embed = self.bound.var(&mut self.tape, "pred.embed");
                let emb = self.tape.embedding(embed, &[id]);
                let pos_table = self.bound.var(&mut self.tape, "pred.pos");
                let pos_row = self.tape.slice_rows(pos_table, pos, 1);
                let mut x = self.tape.add(emb, pos_row);
                let fresh = self.attn_cache.is_empty();
                for b in 0..cfg.pred_blocks {
                    let cache = if fresh { None } else { Some(self.attn_cache[b]) };
                    let (out, cache) = graph::attention_block_step(
                        &mut self.tape,
                        &mut self.bound,
                        &format!("pred.b{b}"),
                        x,
                        cache,
                    );
                    if fresh {
                        self.attn_cache.push(cache);
                    } else {
                        self.attn_cache[b] = cache;
                    }
                    x = out;
                }
                self.pred_row = self.tape.layer_norm(x, cfg.ln_eps);
            }
        }
        self.cached_scores = None;
        Ok(())
    }
}

impl<'m> StepScorer for DecodeSession<'m> {
    fn vocab(&self) -> usize {
        self.bound.cfg.token_vocab
    }

    fn text_len(&self) -> usize {
        self.u_len
    }

    fn scores(&mut self) -> Result<Vec<f64>> {
        if let Some(cached) = &self.cached_scores {
            return Ok(cached.clone());
        }
        let text_row = self.tape.slice_rows(self.h_text, self.u, 1);
        let pair = self.tape.add(text_row, self.pred_row);
        let logits = graph::joint_logits(&mut self.tape, &mut self.bound, pair, self.h_ref);
        let log_probs = self.tape.log_softmax(logits);
        let row = self.tape.value(log_probs).data().to_vec();
        self.cached_scores = Some(row.clone());
        Ok(row)
    }

    fn advance_text(&mut self) -> Result<()> {
        if self.u + 1 >= self.u_len {
            return Err(CoreError::Invalid(alloc::format!(
                "no text position after {} (text length {})",
                self.u,
                self.u_len
            )));
        }
        self.u += 1;
        self.cached_scores = None;
        Ok(())
    }

    fn push_token(&mut self, token: usize) -> Result<()> {
        let vocab = self.bound.cfg.token_vocab;
        if token >= vocab {
            return Err(CoreError::TokenOutOfRange { token, vocab });
        }
        self.feed_predictor(token)?;
        self.t += 1;
        Ok(())
    }

    fn op_count(&self) -> u64 {
        self.tape.flops()
    }
}
