//! `train`: optimizes the transducer on tokenized training utterances.
//!
//! Each step samples a batch, builds the per-example loss (pruned
//! guide-plus-rich objective or the exact lattice loss), averages
//! gradients, clips the global norm, and applies Adam. The reference fed to
//! the conditioning tower is a random contiguous crop of the target's own
//! frames, so the model cannot read the answer out of the reference at
//! training time. A non-finite loss aborts the run and restores the last
//! checkpointed parameters.

use std::path::Path;
use std::time::Instant;

use toktrans_core::decoder::{decode, DecodeConfig};
use toktrans_core::metrics::{levenshtein_ops, EditOps};
use toktrans_core::model::{Example, Model, ModelConfig, PredictorKind};
use toktrans_core::quantizer::{tokenize, Utterance};
use toktrans_core::rng::Rng;
use toktrans_core::tensor::{Adam, AdamConfig, Gradients, ParamSet, Tensor};

use crate::checkpoint::{load_codebook, save_model};
use crate::config::{RunConfig, Split, TrainMode};
use crate::corpus::{load_manifest, load_split};
use crate::error::{CliError, Result};
use crate::report::write_csv;

/// One optimizer step's log entry.
#[derive(Debug, Clone)]
pub struct StepRow {
    pub step: usize,
    pub loss: f64,
    pub simple_nll: f64,
    pub pruned_nll: f64,
    pub kept_nodes: f64,
    pub grad_norm: f64,
    pub alpha2: f64,
    pub wall_s: f64,
}

/// One dev-probe log entry.
#[derive(Debug, Clone)]
pub struct DevRow {
    pub step: usize,
    pub nll_per_token: f64,
    pub token_cer: f64,
    pub truncated: usize,
}

/// Periodic held-out probe: mean exact NLL per token plus a greedy decode
/// scored against the tokenized teacher.
pub struct DevProbe<'a> {
    pub utts: &'a [Utterance],
    pub teachers: &'a [Vec<usize>],
    pub every: usize,
    pub decode: DecodeConfig,
}

/// A training run's inputs beyond the shared configuration.
pub struct TrainJob<'a> {
    pub utts: &'a [Utterance],
    pub teachers: &'a [Vec<usize>],
    pub steps: usize,
    pub crop: usize,
    pub seed: u64,
    pub dev: Option<DevProbe<'a>>,
    /// Periodic checkpoint target; also receives the final parameters.
    pub checkpoint: Option<&'a Path>,
    pub quiet: bool,
}

/// Outcome of a training run. `aborted` carries the step that produced a
/// non-finite loss; the model then holds the last checkpointed parameters.
pub struct TrainRun {
    pub model: Model,
    pub log: Vec<StepRow>,
    pub dev: Vec<DevRow>,
    pub aborted: Option<AbortInfo>,
}

#[derive(Debug, Clone, Copy)]
pub struct AbortInfo {
    pub bad_step: usize,
    pub restored_step: usize,
}

/// Random contiguous crop of `len` frame rows; 0 or an oversized `len`
/// passes the full reference through.
pub fn crop_frames(frames: &Tensor, len: usize, rng: &mut Rng) -> Tensor {
    let rows = frames.rows();
    if len == 0 || len >= rows {
        return frames.clone();
    }
    let start = rng.below(rows - len + 1);
    let cols = frames.cols();
    let mut data = Vec::with_capacity(len * cols);
    for r in start..start + len {
        data.extend_from_slice(frames.row(r));
    }
    Tensor::new(&[len, cols], data)
}

fn checkpoint_meta(step: usize, seed: u64) -> Vec<(String, String)> {
    vec![("step".into(), step.to_string()), ("train_seed".into(), seed.to_string())]
}

fn dev_probe(model: &Model, probe: &DevProbe) -> Result<DevRow> {
    let mut nll_sum = 0.0;
    let mut token_sum = 0usize;
    let mut ops = EditOps::default();
    let mut truncated = 0;
    for (utt, teacher) in probe.utts.iter().zip(probe.teachers) {
        let ex = Example { text: &utt.text, tokens: teacher, frames: &utt.frames };
        nll_sum += model.exact_nll(&ex)?;
        token_sum += teacher.len();
        let mut session = model.decode_session(&utt.text, &utt.frames)?;
        let result = decode(&mut session, &probe.decode)?;
        ops.accumulate(&levenshtein_ops(teacher, &result.tokens));
        truncated += result.truncated as usize;
    }
    Ok(DevRow {
        step: 0,
        nll_per_token: nll_sum / token_sum.max(1) as f64,
        token_cer: ops.error_rate(),
        truncated,
    })
}

/// Runs the optimization loop. Reused by the crop ablation with its own
/// step budget, crop length, and seed.
pub fn train_model(
    cfg: &RunConfig,
    model_cfg: ModelConfig,
    job: &TrainJob,
) -> Result<TrainRun> {
    if job.utts.is_empty() {
        return Err(CliError::train("no training utterances"));
    }
    let t = &cfg.train;
    let mut model = Model::new(model_cfg.clone(), job.seed)?;
    let mut adam = Adam::new(AdamConfig { lr: t.lr, beta1: t.beta1, beta2: t.beta2, eps: t.eps });
    let mut rng = Rng::child(job.seed, 0xBA7C);
    let mut log = Vec::with_capacity(job.steps);
    let mut dev_rows = Vec::new();
    let mut last_good: (usize, ParamSet) = (0, model.params().clone());
    let ramp_end = ((t.ramp_frac * job.steps as f64).ceil() as usize).max(1);
    let start = Instant::now();

    for step in 1..=job.steps {
        let alpha2 = match t.mode {
            TrainMode::Exact => 0.0,
            TrainMode::Pruned => t.alpha2 * (step as f64 / ramp_end as f64).min(1.0),
        };
        let mut grads = Gradients::default();
        let mut loss_sum = 0.0;
        let mut simple_sum = 0.0;
        let mut pruned_sum = 0.0;
        let mut kept_sum = 0usize;
        for _ in 0..t.batch {
            let i = rng.below(job.utts.len());
            let utt = &job.utts[i];
            let teacher = &job.teachers[i];
            let frames = crop_frames(&utt.frames, job.crop, &mut rng);
            let ex = Example { text: &utt.text, tokens: teacher, frames: &frames };
            match t.mode {
                TrainMode::Pruned => {
                    let out = model.pruned_loss(&ex, t.width, t.alpha1, alpha2)?;
                    // Pruning must keep the per-example joint work at
                    // O(U * width), not O(U * T).
                    let u = utt.text.len();
                    let eff = t.width.max((teacher.len() + u - 1) / u + 1);
                    debug_assert!(
                        out.kept_nodes <= u * eff,
                        "kept {} nodes, budget {}",
                        out.kept_nodes,
                        u * eff
                    );
                    loss_sum += out.loss;
                    simple_sum += out.simple_nll;
                    pruned_sum += out.pruned_nll;
                    kept_sum += out.kept_nodes;
                    grads.accumulate(out.grads);
                }
                TrainMode::Exact => {
                    let out = model.exact_loss(&ex)?;
                    loss_sum += out.nll;
                    simple_sum += out.nll;
                    pruned_sum += out.nll;
                    grads.accumulate(out.grads);
                }
            }
        }
        let batch = t.batch as f64;
        grads.scale_assign(1.0 / batch);
        let grad_norm = grads.global_norm();
        let loss = loss_sum / batch;

        if !loss.is_finite() || !grad_norm.is_finite() {
            let restored_step = last_good.0;
            let restored = Model::from_parts(model_cfg, last_good.1)?;
            if let Some(path) = job.checkpoint {
                save_model(path, &restored, &checkpoint_meta(restored_step, job.seed))?;
            }
            return Ok(TrainRun {
                model: restored,
                log,
                dev: dev_rows,
                aborted: Some(AbortInfo { bad_step: step, restored_step }),
            });
        }
        grads.clip_global_norm(t.clip);
        adam.step(model.params_mut(), &grads);

        log.push(StepRow {
            step,
            loss,
            simple_nll: simple_sum / batch,
            pruned_nll: pruned_sum / batch,
            kept_nodes: kept_sum as f64 / batch,
            grad_norm,
            alpha2,
            wall_s: start.elapsed().as_secs_f64(),
        });
        if !job.quiet && (step == 1 || step % t.log_every == 0 || step == job.steps) {
            println!(
                "step {step}/{} loss {loss:.4} simple {:.4} pruned {:.4} grad {grad_norm:.3}",
                job.steps,
                simple_sum / batch,
                pruned_sum / batch,
            );
        }
        if let Some(probe) = &job.dev {
            if probe.every > 0 && step % probe.every == 0 {
                let mut row = dev_probe(&model, probe)?;
                row.step = step;
                if !job.quiet {
                    println!(
                        "  dev @ {step}: nll/token {:.4} token-cer {:.4}",
                        row.nll_per_token, row.token_cer
                    );
                }
                dev_rows.push(row);
            }
        }
        if t.checkpoint_every > 0 && step % t.checkpoint_every == 0 {
            last_good = (step, model.params().clone());
            if let Some(path) = job.checkpoint {
                save_model(path, &model, &checkpoint_meta(step, job.seed))?;
            }
        }
    }
    if let Some(path) = job.checkpoint {
        save_model(path, &model, &checkpoint_meta(job.steps, job.seed))?;
    }
    Ok(TrainRun { model, log, dev: dev_rows, aborted: None })
}

fn write_logs(out: &Path, run: &TrainRun) -> Result<()> {
    let rows: Vec<Vec<String>> = run
        .log
        .iter()
        .map(|r| {
            vec![
                r.step.to_string(),
                format!("{:.6}", r.loss),
                format!("{:.6}", r.simple_nll),
                format!("{:.6}", r.pruned_nll),
                format!("{:.2}", r.kept_nodes),
                format!("{:.6}", r.grad_norm),
                format!("{:.4}", r.alpha2),
                format!("{:.3}", r.wall_s),
            ]
        })
        .collect();
    write_csv(
        &out.join("train_log.csv"),
        &["step", "loss", "simple_nll", "pruned_nll", "kept_nodes", "grad_norm", "alpha2", "wall_s"],
        &rows,
    )?;
    let dev_rows: Vec<Vec<String>> = run
        .dev
        .iter()
        .map(|r| {
            vec![
                r.step.to_string(),
                format!("{:.6}", r.nll_per_token),
                format!("{:.6}", r.token_cer),
                r.truncated.to_string(),
            ]
        })
        .collect();
    write_csv(
        &out.join("dev_log.csv"),
        &["step", "nll_per_token", "token_cer", "truncated"],
        &dev_rows,
    )
}

/// CLI entry: loads corpus and codebook, trains with the configured
/// budget, and leaves `checkpoint.bin`, `train_log.csv`, `dev_log.csv`,
/// and the resolved configuration in `out`.
pub fn run(cfg: &RunConfig, corpus: &Path, codebook_path: &Path, out: &Path) -> Result<TrainRun> {
    std::fs::create_dir_all(out).map_err(|e| CliError::io("creating output dir", out, e))?;
    let manifest = load_manifest(corpus)?;
    let codebook = load_codebook(codebook_path)?;
    if codebook.dim() != manifest.feat_dim {
        return Err(CliError::checkpoint(format!(
            "codebook dim {} does not match corpus feat_dim {}",
            codebook.dim(),
            manifest.feat_dim
        )));
    }
    let train_utts = load_split(corpus, Split::Train)?;
    let dev_utts = load_split(corpus, Split::Dev)?;

    let mut model_cfg = cfg.model_config();
    model_cfg.token_vocab = codebook.len();
    let teachers: Vec<Vec<usize>> = train_utts
        .iter()
        .map(|u| tokenize(&codebook, &u.frames))
        .collect::<toktrans_core::Result<_>>()?;
    if model_cfg.predictor == PredictorKind::Attention {
        let longest = teachers.iter().map(Vec::len).max().unwrap_or(0);
        if longest + 1 > model_cfg.max_token_len {
            return Err(CliError::config(format!(
                "model.max_token_len {} cannot hold a {longest}-token teacher sequence",
                model_cfg.max_token_len
            )));
        }
    }
    let dev_count = cfg.train.dev_utterances.min(dev_utts.len());
    let dev_slice = &dev_utts[..dev_count];
    let dev_teachers: Vec<Vec<usize>> = dev_slice
        .iter()
        .map(|u| tokenize(&codebook, &u.frames))
        .collect::<toktrans_core::Result<_>>()?;

    let ckpt = out.join("checkpoint.bin");
    let job = TrainJob {
        utts: &train_utts,
        teachers: &teachers,
        steps: cfg.train.steps,
        crop: cfg.train.crop,
        seed: cfg.seed,
        dev: Some(DevProbe {
            utts: dev_slice,
            teachers: &dev_teachers,
            every: cfg.train.dev_every,
            decode: cfg.decode_config(cfg.seed),
        }),
        checkpoint: Some(&ckpt),
        quiet: false,
    };
    let run = train_model(cfg, model_cfg, &job)?;
    write_logs(out, &run)?;
    cfg.save_resolved(out)?;
    if let Some(abort) = run.aborted {
        return Err(CliError::train(format!(
            "non-finite loss at step {}; checkpoint restored from step {}",
            abort.bad_step, abort.restored_step
        )));
    }
    Ok(run)
}
