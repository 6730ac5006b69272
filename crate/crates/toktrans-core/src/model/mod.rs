//! Reference-conditioned text-to-token transducer.
//!
//! Three towers feed the alignment lattice: a bidirectional attention
//! encoder over input symbols, an autoregressive prediction network
//! over already-emitted tokens (recurrent or causal-attention, chosen
//! per model), and a pooling encoder squeezing reference frames into
//! one conditioning vector. A conditional feed-forward joint stack
//! scores lattice nodes with label-plus-blank logits.
//!
//! The output head and all conditioning projections initialize to zero:
//! an untrained model scores every node exactly uniformly, and zeroed
//! conditioning weights make the logits independent of the reference.
//!
//! Training can use the exact full-grid loss or a pruned pair: a cheap
//! additive joiner places per-row token windows and adds its own loss
//! term, and the rich joint stack evaluates only the kept nodes.

mod graph;
mod session;

pub use session::DecodeSession;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::lattice::{forward_loss, JointLogProbs, PruneBounds};
use crate::rng::Rng;
use crate::tensor::{Gradients, ParamSet, Tape, Tensor};

/// Prediction-network architecture.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictorKind {
    /// Stacked unidirectional recurrence; constant work per emitted
    /// token.
    Lstm,
    /// Causal self-attention; work per emitted token grows with the
    /// emitted prefix.
    Attention,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Input symbol vocabulary.
    pub text_vocab: usize,
    /// Output token vocabulary; the lattice adds a blank outcome and
    /// the predictor embeds a start id at index `token_vocab`.
    pub token_vocab: usize,
    /// Reference frame feature width.
    pub feat_dim: usize,
    /// Shared tower width.
    pub dim: usize,
    /// Reference conditioning vector width.
    pub ref_dim: usize,
    /// Feed-forward inner width as a multiple of `dim`.
    pub ff_mult: usize,
    pub heads: usize,
    pub text_blocks: usize,
    /// Attention predictor depth; unused by the recurrent predictor.
    pub pred_blocks: usize,
    /// Recurrent predictor depth; unused by the attention predictor.
    pub lstm_layers: usize,
    pub lstm_hidden: usize,
    pub joint_blocks: usize,
    /// Position table length for the text encoder.
    pub max_text_len: usize,
    /// Position table length (start row included) for the attention
    /// predictor; caps decodable token counts for that variant.
    pub max_token_len: usize,
    pub predictor: PredictorKind,
    /// Whether conditioning adds a shift on top of the scale.
    pub cln_shift: bool,
    pub ln_eps: f64,
}

impl ModelConfig {
    pub fn new(text_vocab: usize, token_vocab: usize, feat_dim: usize) -> Self {
        ModelConfig {
            text_vocab,
            token_vocab,
            feat_dim,
            dim: 64,
            ref_dim: 32,
            ff_mult: 2,
            heads: 4,
            text_blocks: 3,
            pred_blocks: 3,
            lstm_layers: 2,
            lstm_hidden: 64,
            joint_blocks: 3,
            max_text_len: 64,
            max_token_len: 256,
            predictor: PredictorKind::Lstm,
            cln_shift: true,
            ln_eps: 1e-5,
        }
    }

    pub fn ff_dim(&self) -> usize {
        self.dim * self.ff_mult
    }

    pub fn validate(&self) -> Result<()> {
        let positive: &[(&str, usize)] = &[
            ("text_vocab", self.text_vocab),
            ("token_vocab", self.token_vocab),
            ("feat_dim", self.feat_dim),
            ("dim", self.dim),
            ("ref_dim", self.ref_dim),
            ("ff_mult", self.ff_mult),
            ("heads", self.heads),
            ("text_blocks", self.text_blocks),
            ("joint_blocks", self.joint_blocks),
            ("max_text_len", self.max_text_len),
            ("max_token_len", self.max_token_len),
        ];
        for &(name, v) in positive {
            if v == 0 {
                return Err(CoreError::Invalid(format!("{name} must be positive")));
            }
        }
        match self.predictor {
            PredictorKind::Lstm if self.lstm_layers == 0 || self.lstm_hidden == 0 => {
                return Err(CoreError::Invalid(
                    "recurrent predictor needs lstm_layers and lstm_hidden".into(),
                ));
            }
            PredictorKind::Attention if self.pred_blocks == 0 => {
                return Err(CoreError::Invalid(
                    "attention predictor needs pred_blocks".into(),
                ));
            }
            _ => {}
        }
        if self.dim % self.heads != 0 {
            return Err(CoreError::Invalid(format!(
                "dim {} not divisible by heads {}",
                self.dim, self.heads
            )));
        }
        if !(self.ln_eps.is_finite() && self.ln_eps > 0.0) {
            return Err(CoreError::Invalid(format!(
                "ln_eps must be positive and finite, got {}",
                self.ln_eps
            )));
        }
        Ok(())
    }

    /// Expected parameter inventory: `(name, shape)` in registration
    /// order. Initialization and checkpoint loading both follow it.
    pub fn parameter_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let d = self.dim;
        let f = self.ff_dim();
        let r = self.ref_dim;
        let cols = self.token_vocab + 1;
        let mut out: Vec<(String, Vec<usize>)> = Vec::new();
        let mut push = |name: String, shape: &[usize]| {
            out.push((name, shape.to_vec()));
        };
        push("text.embed".into(), &[self.text_vocab, d]);
        push("text.pos".into(), &[self.max_text_len, d]);
        for b in 0..self.text_blocks {
            for w in ["wq", "wk", "wv", "wo"] {
                push(format!("text.b{b}.attn.{w}"), &[d, d]);
            }
            push(format!("text.b{b}.ff.w1"), &[d, f]);
            push(format!("text.b{b}.ff.b1"), &[1, f]);
            push(format!("text.b{b}.ff.w2"), &[f, d]);
            push(format!("text.b{b}.ff.b2"), &[1, d]);
        }
        push("pred.embed".into(), &[self.token_vocab + 1, d]);
        match self.predictor {
            PredictorKind::Lstm => {
                let h = self.lstm_hidden;
                for l in 0..self.lstm_layers {
                    let input = if l == 0 { d } else { h };
                    push(format!("pred.l{l}.wx"), &[input, 4 * h]);
                    push(format!("pred.l{l}.wh"), &[h, 4 * h]);
                    push(format!("pred.l{l}.b"), &[1, 4 * h]);
                }
                push("pred.out".into(), &[h, d]);
            }
            PredictorKind::Attention => {
                push("pred.pos".into(), &[self.max_token_len, d]);
                for b in 0..self.pred_blocks {
                    for w in ["wq", "wk", "wv", "wo"] {
                        push(format!("pred.b{b}.attn.{w}"), &[d, d]);
                    }
                    push(format!("pred.b{b}.ff.w1"), &[d, f]);
                    push(format!("pred.b{b}.ff.b1"), &[1, f]);
                    push(format!("pred.b{b}.ff.w2"), &[f, d]);
                    push(format!("pred.b{b}.ff.b2"), &[1, d]);
                }
            }
        }
        push("ref.w1".into(), &[self.feat_dim, r]);
        push("ref.b1".into(), &[1, r]);
        push("ref.w2".into(), &[r, r]);
        push("ref.b2".into(), &[1, r]);
        push("ref.score_w".into(), &[r, r]);
        push("ref.score_b".into(), &[1, r]);
        push("ref.score_v".into(), &[r, 1]);
        for b in 0..self.joint_blocks {
            push(format!("joint.b{b}.cln.scale"), &[r, d]);
            if self.cln_shift {
                push(format!("joint.b{b}.cln.shift"), &[r, d]);
            }
            push(format!("joint.b{b}.ff.w1"), &[d, f]);
            push(format!("joint.b{b}.ff.b1"), &[1, f]);
            push(format!("joint.b{b}.ff.w2"), &[f, d]);
            push(format!("joint.b{b}.ff.b2"), &[1, d]);
        }
        push("joint.head.w".into(), &[d, cols]);
        push("joint.head.b".into(), &[1, cols]);
        push("simple.enc.w".into(), &[d, cols]);
        push("simple.enc.b".into(), &[1, cols]);
        push("simple.pred.w".into(), &[d, cols]);
        push("simple.pred.b".into(), &[1, cols]);
        out
    }
}

/// One training or evaluation item.
#[derive(Debug, Clone, Copy)]
pub struct Example<'a> {
    pub text: &'a [usize],
    pub tokens: &'a [usize],
    /// Reference frames, `[n_frames, feat_dim]`.
    pub frames: &'a Tensor,
}

/// Exact-loss result: the negative log-likelihood and named gradients.
#[derive(Debug)]
pub struct ExactLoss {
    pub nll: f64,
    pub grads: Gradients,
}

/// Pruned-loss result. `loss` is the weighted sum actually
/// differentiated; the two stage losses are reported unweighted.
#[derive(Debug)]
pub struct PrunedLoss {
    pub loss: f64,
    pub simple_nll: f64,
    pub pruned_nll: f64,
    /// Lattice nodes the rich joint stack evaluated; at most
    /// `text_len * width`.
    pub kept_nodes: usize,
    pub grads: Gradients,
}

pub struct Model {
    cfg: ModelConfig,
    params: ParamSet,
}

impl Model {
    /// Fresh model with seeded initialization.
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Model> {
        cfg.validate()?;
        let params = init_params(&cfg, seed);
        Ok(Model { cfg, params })
    }

    /// Rebuilds a model around existing parameters (checkpoint load).
    /// The parameter set must carry exactly the configured inventory.
    pub fn from_parts(cfg: ModelConfig, params: ParamSet) -> Result<Model> {
        cfg.validate()?;
        let expected = cfg.parameter_shapes();
        if params.len() != expected.len() {
            return Err(CoreError::Invalid(format!(
                "parameter set has {} tensors, configuration expects {}",
                params.len(),
                expected.len()
            )));
        }
        for (name, shape) in &expected {
            match params.get(name) {
                None => {
                    return Err(CoreError::Invalid(format!("missing parameter {name:?}")));
                }
                Some(t) if t.shape() != shape.as_slice() => {
                    return Err(CoreError::Invalid(format!(
                        "parameter {name:?} has shape {:?}, expected {:?}",
                        t.shape(),
                        shape
                    )));
                }
                Some(_) => {}
            }
        }
        Ok(Model { cfg, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.scalar_count()
    }

    /// Scalar count over parameters whose name starts with `prefix`,
    /// e.g. `"pred."` for the prediction network alone.
    pub fn param_count_with_prefix(&self, prefix: &str) -> usize {
        self.params
            .iter()
            .filter(|(n, _)| n.starts_with(prefix))
            .map(|(_, t)| t.len())
            .sum()
    }

    /// Adds seeded noise to every parameter, the zero-initialized ones
    /// included. Gradient checks use this so no path hides behind an
    /// exactly-zero head.
    pub fn randomize(&mut self, rng: &mut Rng, scale: f64) {
        for (_, t) in self.params.iter_mut() {
            for x in t.data_mut() {
                *x += scale * rng.normal();
            }
        }
    }

    fn validate_example(&self, text: &[usize], tokens: &[usize], frames: &Tensor) -> Result<()> {
        if text.is_empty() {
            return Err(CoreError::EmptyInput("example text"));
        }
        if text.len() > self.cfg.max_text_len {
            return Err(CoreError::Invalid(format!(
                "text length {} exceeds position table of {}",
                text.len(),
                self.cfg.max_text_len
            )));
        }
        for &s in text {
            if s >= self.cfg.text_vocab {
                return Err(CoreError::TokenOutOfRange { token: s, vocab: self.cfg.text_vocab });
            }
        }
        for &t in tokens {
            if t >= self.cfg.token_vocab {
                return Err(CoreError::TokenOutOfRange { token: t, vocab: self.cfg.token_vocab });
            }
        }
        if self.cfg.predictor == PredictorKind::Attention
            && tokens.len() + 1 > self.cfg.max_token_len
        {
            return Err(CoreError::Invalid(format!(
                "token count {} exceeds position table of {}",
                tokens.len(),
                self.cfg.max_token_len
            )));
        }
        if frames.rank() != 2 || frames.cols() != self.cfg.feat_dim || frames.rows() == 0 {
            return Err(CoreError::Invalid(format!(
                "reference frames must be [n >= 1, {}], got {:?}",
                self.cfg.feat_dim,
                frames.shape()
            )));
        }
        Ok(())
    }

    /// Exact lattice loss with gradients for every parameter.
    pub fn exact_loss(&self, ex: &Example) -> Result<ExactLoss> {
        self.validate_example(ex.text, ex.tokens, ex.frames)?;
        let mut tape = Tape::new();
        let mut bound = graph::Bound::new(&self.cfg, &self.params);
        let (loss, _) = graph::exact_loss_graph(&mut tape, &mut bound, ex.text, ex.tokens, ex.frames)?;
        let nll = tape.value(loss).item();
        let grads = tape.backward(loss).into_named();
        Ok(ExactLoss { nll, grads })
    }

    /// Pruned two-stage loss with gradients. Windows are placed from the
    /// additive joiner's current scores.
    pub fn pruned_loss(
        &self,
        ex: &Example,
        width: usize,
        a_simple: f64,
        a_pruned: f64,
    ) -> Result<PrunedLoss> {
        self.pruned_loss_inner(ex, width, a_simple, a_pruned, None)
    }

    /// Pruned loss over caller-supplied windows. Holding the windows
    /// fixed keeps the objective differentiable under parameter
    /// perturbations, which is what finite-difference verification
    /// needs; training uses [`Model::pruned_loss`].
    pub fn pruned_loss_fixed_bounds(
        &self,
        ex: &Example,
        bounds: &PruneBounds,
        a_simple: f64,
        a_pruned: f64,
    ) -> Result<PrunedLoss> {
        self.pruned_loss_inner(ex, bounds.width(), a_simple, a_pruned, Some(bounds))
    }

    fn pruned_loss_inner(
        &self,
        ex: &Example,
        width: usize,
        a_simple: f64,
        a_pruned: f64,
        fixed: Option<&PruneBounds>,
    ) -> Result<PrunedLoss> {
        self.validate_example(ex.text, ex.tokens, ex.frames)?;
        let mut tape = Tape::new();
        let mut bound = graph::Bound::new(&self.cfg, &self.params);
        let g = graph::pruned_loss_graph(
            &mut tape, &mut bound, ex.text, ex.tokens, ex.frames, width, a_simple, a_pruned,
            fixed,
        )?;
        let loss = tape.value(g.loss).item();
        let simple_nll = tape.value(g.simple).item();
        let pruned_nll = tape.value(g.pruned).item();
        let kept_nodes = g.bounds.node_count();
        let grads = tape.backward(g.loss).into_named();
        Ok(PrunedLoss { loss, simple_nll, pruned_nll, kept_nodes, grads })
    }

    /// Window placement the pruned loss would use at the current
    /// parameters.
    pub fn plan_bounds(&self, ex: &Example, width: usize) -> Result<PruneBounds> {
        self.validate_example(ex.text, ex.tokens, ex.frames)?;
        let mut tape = Tape::new();
        let mut bound = graph::Bound::new(&self.cfg, &self.params);
        let g = graph::pruned_loss_graph(
            &mut tape, &mut bound, ex.text, ex.tokens, ex.frames, width, 0.5, 1.0, None,
        )?;
        Ok(g.bounds)
    }

    /// Normalized node log-probabilities for the full lattice.
    pub fn lattice(&self, text: &[usize], tokens: &[usize], frames: &Tensor) -> Result<JointLogProbs> {
        self.validate_example(text, tokens, frames)?;
        let mut tape = Tape::new();
        let mut bound = graph::Bound::new(&self.cfg, &self.params);
        let (_, log_probs) = graph::exact_loss_graph(&mut tape, &mut bound, text, tokens, frames)?;
        JointLogProbs::new(text.len(), tokens.len(), tape.value(log_probs).clone())
    }

    /// Forward-only exact negative log-likelihood.
    pub fn exact_nll(&self, ex: &Example) -> Result<f64> {
        let joint = self.lattice(ex.text, ex.tokens, ex.frames)?;
        Ok(forward_loss(&joint, ex.tokens)?.nll())
    }

    /// Reference conditioning vector for a frame set, `[1, ref_dim]`.
    pub fn reference_vector(&self, frames: &Tensor) -> Result<Tensor> {
        if frames.rank() != 2 || frames.cols() != self.cfg.feat_dim || frames.rows() == 0 {
            return Err(CoreError::Invalid(format!(
                "reference frames must be [n >= 1, {}], got {:?}",
                self.cfg.feat_dim,
                frames.shape()
            )));
        }
        let mut tape = Tape::new();
        let mut bound = graph::Bound::new(&self.cfg, &self.params);
        let h_ref = graph::reference_encoder(&mut tape, &mut bound, frames);
        Ok(tape.value(h_ref).clone())
    }

    /// Incremental scorer for decoding one utterance.
    pub fn decode_session<'m>(
        &'m self,
        text: &[usize],
        frames: &Tensor,
    ) -> Result<DecodeSession<'m>> {
        self.validate_example(text, &[], frames)?;
        DecodeSession::new(self, text, frames)
    }
}

fn init_params(cfg: &ModelConfig, seed: u64) -> ParamSet {
    let mut rng = Rng::child(seed, 0x90DE_1000);
    let mut params = ParamSet::new();
    for (name, shape) in cfg.parameter_shapes() {
        let mut t = Tensor::zeros(&shape);
        if is_zero_init(&name) {
            // Head and conditioning projections start at zero; simple
            // joiner heads too. Untrained lattices are exactly uniform.
        } else if name.ends_with(".b") || name.contains(".b1") || name.contains(".b2")
            || name.ends_with("score_b")
        {
            if name.starts_with("pred.l") && name.ends_with(".b") {
                // Forget-gate bias starts at one; columns [H, 2H).
                let h = cfg.lstm_hidden;
                for c in h..2 * h {
                    t.set2(0, c, 1.0);
                }
            }
        } else if name.ends_with(".embed") || name.ends_with(".pos") {
            for x in t.data_mut() {
                *x = 0.1 * rng.normal();
            }
        } else {
            let fan_in = shape[0] as f64;
            let std = 1.0 / crate::num::sqrt(fan_in);
            for x in t.data_mut() {
                *x = std * rng.normal();
            }
        }
        params.insert(&name, t);
    }
    params
}

fn is_zero_init(name: &str) -> bool {
    name.starts_with("joint.head") || name.starts_with("simple.") || name.contains(".cln.")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num;

    fn micro_config(predictor: PredictorKind) -> ModelConfig {
        let mut cfg = ModelConfig::new(5, 4, 3);
        cfg.dim = 8;
        cfg.ref_dim = 4;
        cfg.heads = 2;
        cfg.text_blocks = 1;
        cfg.pred_blocks = 1;
        cfg.lstm_layers = 1;
        cfg.lstm_hidden = 8;
        cfg.joint_blocks = 2;
        cfg.max_text_len = 8;
        cfg.max_token_len = 16;
        cfg.predictor = predictor;
        cfg
    }

    fn frames(rows: usize, cols: usize, seed: u64) -> Tensor {
        let mut rng = Rng::new(seed);
        let mut t = Tensor::zeros(&[rows, cols]);
        for x in t.data_mut() {
            *x = rng.normal();
        }
        t
    }

    #[test]
    fn untrained_lattice_is_exactly_uniform() {
        for kind in [PredictorKind::Lstm, PredictorKind::Attention] {
            let model = Model::new(micro_config(kind), 1).unwrap();
            let fr = frames(3, 3, 2);
            let joint = model.lattice(&[0, 1, 2], &[1, 3], &fr).unwrap();
            let expect = -num::ln(5.0);
            for &lp in joint.log_probs().data() {
                assert!((lp - expect).abs() < 1e-12, "log prob {lp} vs uniform {expect}");
            }
        }
    }

    #[test]
    fn untrained_two_by_two_nll_is_ln_27() {
        let mut cfg = micro_config(PredictorKind::Lstm);
        cfg.token_vocab = 2;
        let model = Model::new(cfg, 3).unwrap();
        let fr = frames(2, 3, 4);
        let ex = Example { text: &[0, 1], tokens: &[1, 0], frames: &fr };
        let nll = model.exact_nll(&ex).unwrap();
        assert!((nll - num::ln(27.0)).abs() < 1e-12, "nll {nll}");
    }

    #[test]
    fn loss_and_forward_only_paths_agree() {
        for kind in [PredictorKind::Lstm, PredictorKind::Attention] {
            let mut model = Model::new(micro_config(kind), 5).unwrap();
            let mut rng = Rng::new(6);
            model.randomize(&mut rng, 0.2);
            let fr = frames(4, 3, 7);
            let ex = Example { text: &[2, 0, 4], tokens: &[3, 1, 1], frames: &fr };
            let full = model.exact_loss(&ex).unwrap();
            let forward_only = model.exact_nll(&ex).unwrap();
            assert!((full.nll - forward_only).abs() < 1e-12);
            assert!(full.grads.len() > 0);
            assert!(full.grads.global_norm() > 0.0);
        }
    }

    #[test]
    fn zero_conditioning_ignores_reference_and_randomized_uses_it() {
        let mut cfg = micro_config(PredictorKind::Lstm);
        cfg.joint_blocks = 2;
        let mut model = Model::new(cfg, 8).unwrap();
        // Give every non-conditioning parameter noise but keep the cln
        // projections at zero.
        let mut rng = Rng::new(9);
        let snapshot: Vec<(String, Tensor)> = model
            .params()
            .iter()
            .filter(|(n, _)| n.contains(".cln."))
            .map(|(n, t)| (String::from(n), t.clone()))
            .collect();
        model.randomize(&mut rng, 0.2);
        for (name, zeroed) in &snapshot {
            *model.params_mut().get_mut(name).unwrap() = zeroed.clone();
        }
        let fa = frames(3, 3, 10);
        let fb = frames(5, 3, 11);
        let la = model.lattice(&[0, 1], &[2], &fa).unwrap();
        let lb = model.lattice(&[0, 1], &[2], &fb).unwrap();
        assert_eq!(la.log_probs().data(), lb.log_probs().data());

        // Now give the conditioning projections weight: the reference
        // must reach the logits.
        let mut rng = Rng::new(12);
        model.randomize(&mut rng, 0.2);
        let la = model.lattice(&[0, 1], &[2], &fa).unwrap();
        let lb = model.lattice(&[0, 1], &[2], &fb).unwrap();
        let max_gap = la
            .log_probs()
            .data()
            .iter()
            .zip(lb.log_probs().data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(max_gap > 1e-6, "conditioned lattices differ by only {max_gap}");
    }

    #[test]
    fn reference_vector_is_permutation_and_duplication_invariant() {
        let mut model = Model::new(micro_config(PredictorKind::Lstm), 13).unwrap();
        let mut rng = Rng::new(14);
        model.randomize(&mut rng, 0.3);
        let fr = frames(5, 3, 15);
        let base = model.reference_vector(&fr).unwrap();

        // Reversed frame order.
        let mut rev = Tensor::zeros(&[5, 3]);
        for i in 0..5 {
            rev.row_mut(i).copy_from_slice(fr.row(4 - i));
        }
        let v = model.reference_vector(&rev).unwrap();
        for (a, b) in base.data().iter().zip(v.data()) {
            assert!((a - b).abs() < 1e-12);
        }

        // Every frame duplicated: pooling weights halve pairwise and the
        // weighted mean is unchanged.
        let mut dup = Tensor::zeros(&[10, 3]);
        for i in 0..10 {
            dup.row_mut(i).copy_from_slice(fr.row(i % 5));
        }
        let v = model.reference_vector(&dup).unwrap();
        for (a, b) in base.data().iter().zip(v.data()) {
            assert!((a - b).abs() < 1e-12);
        }

        // A single frame pools to exactly its own projection.
        let one = Tensor::new(&[1, 3], fr.row(2).to_vec());
        let single = model.reference_vector(&one).unwrap();
        assert_eq!(single.shape(), [1, 4]);
    }

    #[test]
    fn pruned_loss_with_full_width_matches_exact_loss() {
        for kind in [PredictorKind::Lstm, PredictorKind::Attention] {
            let mut model = Model::new(micro_config(kind), 16).unwrap();
            let mut rng = Rng::new(17);
            model.randomize(&mut rng, 0.2);
            let fr = frames(3, 3, 18);
            let ex = Example { text: &[1, 2, 3], tokens: &[0, 2], frames: &fr };
            let exact = model.exact_nll(&ex).unwrap();
            let pruned = model.pruned_loss(&ex, 3, 0.5, 1.0).unwrap();
            assert!(
                (pruned.pruned_nll - exact).abs() < 1e-10,
                "full-width pruned {} vs exact {}",
                pruned.pruned_nll,
                exact
            );
            assert_eq!(pruned.kept_nodes, 3 * 3);
            let expect = 0.5 * pruned.simple_nll + 1.0 * pruned.pruned_nll;
            assert!((pruned.loss - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn pruned_loss_never_beats_exact_and_respects_node_budget() {
        let mut model = Model::new(micro_config(PredictorKind::Lstm), 19).unwrap();
        let mut rng = Rng::new(20);
        model.randomize(&mut rng, 0.3);
        let fr = frames(4, 3, 21);
        let ex = Example { text: &[0, 1, 2, 4], tokens: &[1, 2, 3, 0, 2], frames: &fr };
        let exact = model.exact_nll(&ex).unwrap();
        let pruned = model.pruned_loss(&ex, 2, 0.5, 1.0).unwrap();
        assert!(pruned.pruned_nll >= exact - 1e-10);
        let bounds = model.plan_bounds(&ex, 2).unwrap();
        // Four windows stepping by at most width - 1 must span six token
        // rows, so the requested width 2 is raised to 3.
        assert_eq!(bounds.width(), 3);
        assert!(pruned.kept_nodes <= 4 * bounds.width());
        assert!(pruned.kept_nodes < 4 * (5 + 1));
        assert_eq!(bounds.node_count(), pruned.kept_nodes);
    }

    #[test]
    fn same_seed_same_parameters() {
        let a = Model::new(micro_config(PredictorKind::Lstm), 33).unwrap();
        let b = Model::new(micro_config(PredictorKind::Lstm), 33).unwrap();
        for ((na, ta), (nb, tb)) in a.params().iter().zip(b.params().iter()) {
            assert_eq!(na, nb);
            assert_eq!(ta.data(), tb.data());
        }
        let c = Model::new(micro_config(PredictorKind::Lstm), 34).unwrap();
        let differs = a
            .params()
            .iter()
            .zip(c.params().iter())
            .any(|((_, ta), (_, tc))| ta.data() != tc.data());
        assert!(differs);
    }

    #[test]
    fn from_parts_round_trips_and_rejects_mismatches() {
        let model = Model::new(micro_config(PredictorKind::Lstm), 35).unwrap();
        let cfg = model.config().clone();
        let params = model.params().clone();
        let again = Model::from_parts(cfg.clone(), params.clone()).unwrap();
        assert_eq!(again.param_count(), model.param_count());

        let mut missing = ParamSet::new();
        for (n, t) in params.iter().take(params.len() - 1) {
            missing.insert(n, t.clone());
        }
        assert!(Model::from_parts(cfg.clone(), missing).is_err());

        let wrong_cfg = micro_config(PredictorKind::Attention);
        assert!(Model::from_parts(wrong_cfg, params).is_err());
    }

    #[test]
    fn forget_gate_bias_starts_open() {
        let model = Model::new(micro_config(PredictorKind::Lstm), 36).unwrap();
        let b = model.params().expect("pred.l0.b");
        let h = model.config().lstm_hidden;
        for c in 0..4 * h {
            let expect = if (h..2 * h).contains(&c) { 1.0 } else { 0.0 };
            assert_eq!(b.at2(0, c), expect);
        }
    }

    #[test]
    fn example_validation_rejects_bad_inputs() {
        let model = Model::new(micro_config(PredictorKind::Lstm), 37).unwrap();
        let fr = frames(2, 3, 38);
        let ok = Example { text: &[0, 1], tokens: &[0], frames: &fr };
        assert!(model.exact_nll(&ok).is_ok());
        let bad_text = Example { text: &[9, 0], ..ok };
        assert!(model.exact_nll(&bad_text).is_err());
        let bad_token = Example { text: &[0, 1], tokens: &[7], frames: &fr };
        assert!(model.exact_nll(&bad_token).is_err());
        let empty_text = Example { text: &[], tokens: &[0], frames: &fr };
        assert!(model.exact_nll(&empty_text).is_err());
        let bad_frames = frames(2, 5, 39);
        let wrong = Example { text: &[0], tokens: &[0], frames: &bad_frames };
        assert!(model.exact_nll(&wrong).is_err());
    }

    #[test]
    fn predictor_towers_report_their_own_parameters() {
        let lstm = Model::new(micro_config(PredictorKind::Lstm), 40).unwrap();
        let attn = Model::new(micro_config(PredictorKind::Attention), 40).unwrap();
        let lstm_pred = lstm.param_count_with_prefix("pred.");
        let attn_pred = attn.param_count_with_prefix("pred.");
        assert!(lstm_pred > 0 && attn_pred > 0);
        assert_ne!(lstm_pred, attn_pred);
        // Shared towers are identically sized.
        assert_eq!(
            lstm.param_count_with_prefix("text."),
            attn.param_count_with_prefix("text.")
        );
        assert_eq!(
            lstm.param_count_with_prefix("joint."),
            attn.param_count_with_prefix("joint.")
        );
    }
}
