//! Flat `key = value` run configuration. Keys carry a section prefix
//! (`data.vocab`, `train.steps`); `#` starts a comment. Every subcommand
//! writes the fully resolved configuration beside its outputs, and that
//! snapshot parses back to the identical configuration.

use std::fmt::Write as _;
use std::path::Path;

use toktrans_core::decoder::{DecodeConfig, Strategy};
use toktrans_core::model::{ModelConfig, PredictorKind};
use toktrans_core::quantizer::SourceConfig;

use crate::error::{CliError, Result};

/// Synthetic-source and split settings.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSection {
    pub vocab: usize,
    pub feat_dim: usize,
    pub scale: f64,
    pub noise: f64,
    pub text_len_min: usize,
    pub text_len_max: usize,
    pub train_utterances: usize,
    pub dev_utterances: usize,
    pub test_utterances: usize,
    /// Speaking-rate bands per split; the three sets must be pairwise
    /// disjoint so held-out rates are never seen in training.
    pub train_bands: Vec<(f64, f64)>,
    pub dev_bands: Vec<(f64, f64)>,
    pub test_bands: Vec<(f64, f64)>,
}

/// K-means tokenizer settings.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenizerSection {
    pub k: usize,
    pub iters: usize,
    /// Independent fits; the lowest-inertia one wins.
    pub restarts: usize,
}

/// Architecture settings mirrored into [`ModelConfig`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSection {
    pub dim: usize,
    pub ref_dim: usize,
    pub ff_mult: usize,
    pub heads: usize,
    pub text_blocks: usize,
    pub pred_blocks: usize,
    pub lstm_layers: usize,
    pub lstm_hidden: usize,
    pub joint_blocks: usize,
    pub max_text_len: usize,
    pub max_token_len: usize,
    pub predictor: PredictorKind,
    pub cln_shift: bool,
}

/// Optimization settings.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSection {
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub clip: f64,
    /// Weight on the simple-joiner guide loss.
    pub alpha1: f64,
    /// Weight on the pruned rich-joiner loss, reached after the ramp.
    pub alpha2: f64,
    /// Fraction of the run over which alpha2 ramps linearly from zero.
    pub ramp_frac: f64,
    /// Pruning window width (token rows kept per text position).
    pub width: usize,
    /// Reference crop length in frames; 0 trains on full references.
    pub crop: usize,
    /// "pruned" or "exact".
    pub mode: TrainMode,
    pub log_every: usize,
    pub dev_every: usize,
    pub dev_utterances: usize,
    pub checkpoint_every: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    Pruned,
    Exact,
}

/// Decoding settings.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeSection {
    pub strategy: DecodeStrategy,
    pub k: usize,
    pub temperature: f64,
    pub max_tokens_per_input: usize,
    pub emission_only: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeStrategy {
    Greedy,
    TopK,
}

/// Rate-control probe settings.
#[derive(Debug, Clone, PartialEq)]
pub struct RateSection {
    pub texts: usize,
    pub rates: Vec<f64>,
    pub repeats: usize,
    pub constant_rate: f64,
    pub constant_repeats: usize,
}

/// Reference-crop ablation settings.
#[derive(Debug, Clone, PartialEq)]
pub struct AblateSection {
    pub seeds: usize,
    pub steps: usize,
    pub train_utterances: usize,
    pub eval_utterances: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DataSection,
    pub tokenizer: TokenizerSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub decode: DecodeSection,
    pub rate: RateSection,
    pub ablate: AblateSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            data: DataSection {
                vocab: 26,
                feat_dim: 16,
                scale: 1.0,
                noise: 0.1,
                text_len_min: 4,
                text_len_max: 10,
                train_utterances: 2000,
                dev_utterances: 200,
                test_utterances: 200,
                train_bands: vec![(0.6, 1.3), (1.75, 2.4)],
                dev_bands: vec![(1.35, 1.5)],
                test_bands: vec![(1.55, 1.7)],
            },
            tokenizer: TokenizerSection { k: 26, iters: 40, restarts: 8 },
            model: ModelSection {
                dim: 48,
                ref_dim: 32,
                ff_mult: 2,
                heads: 4,
                text_blocks: 2,
                pred_blocks: 2,
                lstm_layers: 2,
                lstm_hidden: 48,
                joint_blocks: 2,
                max_text_len: 16,
                max_token_len: 128,
                predictor: PredictorKind::Lstm,
                cln_shift: true,
            },
            train: TrainSection {
                steps: 3000,
                batch: 16,
                lr: 1e-3,
                beta1: 0.9,
                beta2: 0.98,
                eps: 1e-9,
                clip: 5.0,
                alpha1: 0.5,
                alpha2: 1.0,
                ramp_frac: 0.1,
                width: 12,
                crop: 12,
                mode: TrainMode::Pruned,
                log_every: 50,
                dev_every: 500,
                dev_utterances: 24,
                checkpoint_every: 500,
            },
            decode: DecodeSection {
                strategy: DecodeStrategy::Greedy,
                k: 4,
                temperature: 1.0,
                max_tokens_per_input: 8,
                emission_only: false,
            },
            rate: RateSection {
                texts: 12,
                rates: vec![0.7, 0.9, 1.1, 1.3, 1.5, 1.7, 1.9, 2.1],
                repeats: 3,
                constant_rate: 1.2,
                constant_repeats: 8,
            },
            ablate: AblateSection {
                seeds: 3,
                steps: 1200,
                train_utterances: 600,
                eval_utterances: 60,
            },
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str, what: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| CliError::config(format!("key {key:?}: {value:?} is not {what}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(CliError::config(format!("key {key:?}: {value:?} is not true or false"))),
    }
}

/// Parses `lo:hi` pairs separated by commas, e.g. `0.6:1.3,1.7:2.4`.
fn parse_bands(key: &str, value: &str) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::new();
    for part in value.split(',') {
        let part = part.trim();
        let (lo, hi) = part
            .split_once(':')
            .ok_or_else(|| CliError::config(format!("key {key:?}: band {part:?} is not lo:hi")))?;
        out.push((
            parse_num(key, lo.trim(), "a number")?,
            parse_num(key, hi.trim(), "a number")?,
        ));
    }
    if out.is_empty() {
        return Err(CliError::config(format!("key {key:?}: no bands")));
    }
    Ok(out)
}

fn parse_rates(key: &str, value: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for part in value.split(',') {
        out.push(parse_num(key, part.trim(), "a number")?);
    }
    Ok(out)
}

fn render_bands(bands: &[(f64, f64)]) -> String {
    bands
        .iter()
        .map(|(lo, hi)| format!("{lo}:{hi}"))
        .collect::<Vec<_>>()
        .join(",")
}

fn render_rates(rates: &[f64]) -> String {
    rates.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Applies one `key = value` assignment. Unknown keys are errors so a
    /// typo cannot silently fall back to a default.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "seed" => self.seed = parse_num(key, value, "an unsigned integer")?,
            "data.vocab" => self.data.vocab = parse_num(key, value, "an unsigned integer")?,
            "data.feat_dim" => self.data.feat_dim = parse_num(key, value, "an unsigned integer")?,
            "data.scale" => self.data.scale = parse_num(key, value, "a number")?,
            "data.noise" => self.data.noise = parse_num(key, value, "a number")?,
            "data.text_len_min" => {
                self.data.text_len_min = parse_num(key, value, "an unsigned integer")?
            }
            "data.text_len_max" => {
                self.data.text_len_max = parse_num(key, value, "an unsigned integer")?
            }
            "data.train_utterances" => {
                self.data.train_utterances = parse_num(key, value, "an unsigned integer")?
            }
            "data.dev_utterances" => {
                self.data.dev_utterances = parse_num(key, value, "an unsigned integer")?
            }
            "data.test_utterances" => {
                self.data.test_utterances = parse_num(key, value, "an unsigned integer")?
            }
            "data.train_bands" => self.data.train_bands = parse_bands(key, value)?,
            "data.dev_bands" => self.data.dev_bands = parse_bands(key, value)?,
            "data.test_bands" => self.data.test_bands = parse_bands(key, value)?,
            "tokenizer.k" => self.tokenizer.k = parse_num(key, value, "an unsigned integer")?,
            "tokenizer.iters" => {
                self.tokenizer.iters = parse_num(key, value, "an unsigned integer")?
            }
            "tokenizer.restarts" => {
                self.tokenizer.restarts = parse_num(key, value, "an unsigned integer")?
            }
            "model.dim" => self.model.dim = parse_num(key, value, "an unsigned integer")?,
            "model.ref_dim" => self.model.ref_dim = parse_num(key, value, "an unsigned integer")?,
            "model.ff_mult" => self.model.ff_mult = parse_num(key, value, "an unsigned integer")?,
            "model.heads" => self.model.heads = parse_num(key, value, "an unsigned integer")?,
            "model.text_blocks" => {
                self.model.text_blocks = parse_num(key, value, "an unsigned integer")?
            }
            "model.pred_blocks" => {
                self.model.pred_blocks = parse_num(key, value, "an unsigned integer")?
            }
            "model.lstm_layers" => {
                self.model.lstm_layers = parse_num(key, value, "an unsigned integer")?
            }
            "model.lstm_hidden" => {
                self.model.lstm_hidden = parse_num(key, value, "an unsigned integer")?
            }
            "model.joint_blocks" => {
                self.model.joint_blocks = parse_num(key, value, "an unsigned integer")?
            }
            "model.max_text_len" => {
                self.model.max_text_len = parse_num(key, value, "an unsigned integer")?
            }
            "model.max_token_len" => {
                self.model.max_token_len = parse_num(key, value, "an unsigned integer")?
            }
            "model.predictor" => {
                self.model.predictor = match value {
                    "lstm" => PredictorKind::Lstm,
                    "attention" => PredictorKind::Attention,
                    _ => {
                        return Err(CliError::config(format!(
                            "key {key:?}: {value:?} is not lstm or attention"
                        )))
                    }
                }
            }
            "model.cln_shift" => self.model.cln_shift = parse_bool(key, value)?,
            "train.steps" => self.train.steps = parse_num(key, value, "an unsigned integer")?,
            "train.batch" => self.train.batch = parse_num(key, value, "an unsigned integer")?,
            "train.lr" => self.train.lr = parse_num(key, value, "a number")?,
            "train.beta1" => self.train.beta1 = parse_num(key, value, "a number")?,
            "train.beta2" => self.train.beta2 = parse_num(key, value, "a number")?,
            "train.eps" => self.train.eps = parse_num(key, value, "a number")?,
            "train.clip" => self.train.clip = parse_num(key, value, "a number")?,
            "train.alpha1" => self.train.alpha1 = parse_num(key, value, "a number")?,
            "train.alpha2" => self.train.alpha2 = parse_num(key, value, "a number")?,
            "train.ramp_frac" => self.train.ramp_frac = parse_num(key, value, "a number")?,
            "train.width" => self.train.width = parse_num(key, value, "an unsigned integer")?,
            "train.crop" => self.train.crop = parse_num(key, value, "an unsigned integer")?,
            "train.mode" => {
                self.train.mode = match value {
                    "pruned" => TrainMode::Pruned,
                    "exact" => TrainMode::Exact,
                    _ => {
                        return Err(CliError::config(format!(
                            "key {key:?}: {value:?} is not pruned or exact"
                        )))
                    }
                }
            }
            "train.log_every" => {
                self.train.log_every = parse_num(key, value, "an unsigned integer")?
            }
            "train.dev_every" => {
                self.train.dev_every = parse_num(key, value, "an unsigned integer")?
            }
            "train.dev_utterances" => {
                self.train.dev_utterances = parse_num(key, value, "an unsigned integer")?
            }
            "train.checkpoint_every" => {
                self.train.checkpoint_every = parse_num(key, value, "an unsigned integer")?
            }
            "decode.strategy" => {
                self.decode.strategy = match value {
                    "greedy" => DecodeStrategy::Greedy,
                    "topk" => DecodeStrategy::TopK,
                    _ => {
                        return Err(CliError::config(format!(
                            "key {key:?}: {value:?} is not greedy or topk"
                        )))
                    }
                }
            }
            "decode.k" => self.decode.k = parse_num(key, value, "an unsigned integer")?,
            "decode.temperature" => self.decode.temperature = parse_num(key, value, "a number")?,
            "decode.max_tokens_per_input" => {
                self.decode.max_tokens_per_input = parse_num(key, value, "an unsigned integer")?
            }
            "decode.emission_only" => self.decode.emission_only = parse_bool(key, value)?,
            "rate.texts" => self.rate.texts = parse_num(key, value, "an unsigned integer")?,
            "rate.rates" => self.rate.rates = parse_rates(key, value)?,
            "rate.repeats" => self.rate.repeats = parse_num(key, value, "an unsigned integer")?,
            "rate.constant_rate" => self.rate.constant_rate = parse_num(key, value, "a number")?,
            "rate.constant_repeats" => {
                self.rate.constant_repeats = parse_num(key, value, "an unsigned integer")?
            }
            "ablate.seeds" => self.ablate.seeds = parse_num(key, value, "an unsigned integer")?,
            "ablate.steps" => self.ablate.steps = parse_num(key, value, "an unsigned integer")?,
            "ablate.train_utterances" => {
                self.ablate.train_utterances = parse_num(key, value, "an unsigned integer")?
            }
            "ablate.eval_utterances" => {
                self.ablate.eval_utterances = parse_num(key, value, "an unsigned integer")?
            }
            _ => return Err(CliError::config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::config(format!("line {}: expected key = value, got {line:?}", idx + 1))
            })?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| CliError::config(format!("line {}: {}", idx + 1, e.message())))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text =
            std::fs::read_to_string(path).map_err(|e| CliError::io("reading config", path, e))?;
        Self::parse(&text)
    }

    /// Every key, resolved, in a stable order. `parse(render())` yields an
    /// identical configuration.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "seed = {}", self.seed);
        let d = &self.data;
        let _ = writeln!(s, "data.vocab = {}", d.vocab);
        let _ = writeln!(s, "data.feat_dim = {}", d.feat_dim);
        let _ = writeln!(s, "data.scale = {}", d.scale);
        let _ = writeln!(s, "data.noise = {}", d.noise);
        let _ = writeln!(s, "data.text_len_min = {}", d.text_len_min);
        let _ = writeln!(s, "data.text_len_max = {}", d.text_len_max);
        let _ = writeln!(s, "data.train_utterances = {}", d.train_utterances);
        let _ = writeln!(s, "data.dev_utterances = {}", d.dev_utterances);
        let _ = writeln!(s, "data.test_utterances = {}", d.test_utterances);
        let _ = writeln!(s, "data.train_bands = {}", render_bands(&d.train_bands));
        let _ = writeln!(s, "data.dev_bands = {}", render_bands(&d.dev_bands));
        let _ = writeln!(s, "data.test_bands = {}", render_bands(&d.test_bands));
        let _ = writeln!(s, "tokenizer.k = {}", self.tokenizer.k);
        let _ = writeln!(s, "tokenizer.iters = {}", self.tokenizer.iters);
        let _ = writeln!(s, "tokenizer.restarts = {}", self.tokenizer.restarts);
        let m = &self.model;
        let _ = writeln!(s, "model.dim = {}", m.dim);
        let _ = writeln!(s, "model.ref_dim = {}", m.ref_dim);
        let _ = writeln!(s, "model.ff_mult = {}", m.ff_mult);
        let _ = writeln!(s, "model.heads = {}", m.heads);
        let _ = writeln!(s, "model.text_blocks = {}", m.text_blocks);
        let _ = writeln!(s, "model.pred_blocks = {}", m.pred_blocks);
        let _ = writeln!(s, "model.lstm_layers = {}", m.lstm_layers);
        let _ = writeln!(s, "model.lstm_hidden = {}", m.lstm_hidden);
        let _ = writeln!(s, "model.joint_blocks = {}", m.joint_blocks);
        let _ = writeln!(s, "model.max_text_len = {}", m.max_text_len);
        let _ = writeln!(s, "model.max_token_len = {}", m.max_token_len);
        let kind = match m.predictor {
            PredictorKind::Lstm => "lstm",
            PredictorKind::Attention => "attention",
        };
        let _ = writeln!(s, "model.predictor = {kind}");
        let _ = writeln!(s, "model.cln_shift = {}", m.cln_shift);
        let t = &self.train;
        let _ = writeln!(s, "train.steps = {}", t.steps);
        let _ = writeln!(s, "train.batch = {}", t.batch);
        let _ = writeln!(s, "train.lr = {}", t.lr);
        let _ = writeln!(s, "train.beta1 = {}", t.beta1);
        let _ = writeln!(s, "train.beta2 = {}", t.beta2);
        let _ = writeln!(s, "train.eps = {}", t.eps);
        let _ = writeln!(s, "train.clip = {}", t.clip);
        let _ = writeln!(s, "train.alpha1 = {}", t.alpha1);
        let _ = writeln!(s, "train.alpha2 = {}", t.alpha2);
        let _ = writeln!(s, "train.ramp_frac = {}", t.ramp_frac);
        let _ = writeln!(s, "train.width = {}", t.width);
        let _ = writeln!(s, "train.crop = {}", t.crop);
        let mode = match t.mode {
            TrainMode::Pruned => "pruned",
            TrainMode::Exact => "exact",
        };
        let _ = writeln!(s, "train.mode = {mode}");
        let _ = writeln!(s, "train.log_every = {}", t.log_every);
        let _ = writeln!(s, "train.dev_every = {}", t.dev_every);
        let _ = writeln!(s, "train.dev_utterances = {}", t.dev_utterances);
        let _ = writeln!(s, "train.checkpoint_every = {}", t.checkpoint_every);
        let de = &self.decode;
        let strat = match de.strategy {
            DecodeStrategy::Greedy => "greedy",
            DecodeStrategy::TopK => "topk",
        };
        let _ = writeln!(s, "decode.strategy = {strat}");
        let _ = writeln!(s, "decode.k = {}", de.k);
        let _ = writeln!(s, "decode.temperature = {}", de.temperature);
        let _ = writeln!(s, "decode.max_tokens_per_input = {}", de.max_tokens_per_input);
        let _ = writeln!(s, "decode.emission_only = {}", de.emission_only);
        let r = &self.rate;
        let _ = writeln!(s, "rate.texts = {}", r.texts);
        let _ = writeln!(s, "rate.rates = {}", render_rates(&r.rates));
        let _ = writeln!(s, "rate.repeats = {}", r.repeats);
        let _ = writeln!(s, "rate.constant_rate = {}", r.constant_rate);
        let _ = writeln!(s, "rate.constant_repeats = {}", r.constant_repeats);
        let a = &self.ablate;
        let _ = writeln!(s, "ablate.seeds = {}", a.seeds);
        let _ = writeln!(s, "ablate.steps = {}", a.steps);
        let _ = writeln!(s, "ablate.train_utterances = {}", a.train_utterances);
        let _ = writeln!(s, "ablate.eval_utterances = {}", a.eval_utterances);
        s
    }

    /// Writes the resolved snapshot as `config.resolved.txt` inside `dir`.
    pub fn save_resolved(&self, dir: &Path) -> Result<()> {
        let path = dir.join("config.resolved.txt");
        std::fs::write(&path, self.render())
            .map_err(|e| CliError::io("writing config snapshot", &path, e))
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.text_len_min == 0 || self.data.text_len_min > self.data.text_len_max {
            return Err(CliError::config(format!(
                "text length range {}..{} is empty",
                self.data.text_len_min, self.data.text_len_max
            )));
        }
        let mut all = Vec::new();
        for (name, bands) in [
            ("train", &self.data.train_bands),
            ("dev", &self.data.dev_bands),
            ("test", &self.data.test_bands),
        ] {
            for &(lo, hi) in bands {
                if !(lo > 0.0 && hi >= lo) {
                    return Err(CliError::config(format!("{name} band {lo}:{hi} is not ordered")));
                }
                all.push((name, lo, hi));
            }
        }
        // Held-out rates must be unreachable from training, so bands from
        // different splits may not overlap.
        for i in 0..all.len() {
            for j in (i + 1)..all.len() {
                let (na, la, ha) = all[i];
                let (nb, lb, hb) = all[j];
                if na != nb && la <= hb && lb <= ha {
                    return Err(CliError::config(format!(
                        "{na} band {la}:{ha} overlaps {nb} band {lb}:{hb}"
                    )));
                }
            }
        }
        if self.train.batch == 0 {
            return Err(CliError::config("train.batch must be positive"));
        }
        if self.tokenizer.restarts == 0 {
            return Err(CliError::config("tokenizer.restarts must be positive"));
        }
        if !(self.train.ramp_frac >= 0.0 && self.train.ramp_frac <= 1.0) {
            return Err(CliError::config("train.ramp_frac must lie in [0, 1]"));
        }
        if self.model.heads == 0 || self.model.dim % self.model.heads != 0 {
            return Err(CliError::config(format!(
                "model.heads {} must divide model.dim {}",
                self.model.heads, self.model.dim
            )));
        }
        if self.model.max_text_len < self.data.text_len_max {
            return Err(CliError::config(format!(
                "model.max_text_len {} is below data.text_len_max {}",
                self.model.max_text_len, self.data.text_len_max
            )));
        }
        Ok(())
    }

    /// Model architecture for this run; vocabulary sizes come from the data
    /// and tokenizer sections.
    pub fn model_config(&self) -> ModelConfig {
        let mut mc = ModelConfig::new(self.data.vocab, self.tokenizer.k, self.data.feat_dim);
        mc.dim = self.model.dim;
        mc.ref_dim = self.model.ref_dim;
        mc.ff_mult = self.model.ff_mult;
        mc.heads = self.model.heads;
        mc.text_blocks = self.model.text_blocks;
        mc.pred_blocks = self.model.pred_blocks;
        mc.lstm_layers = self.model.lstm_layers;
        mc.lstm_hidden = self.model.lstm_hidden;
        mc.joint_blocks = self.model.joint_blocks;
        mc.max_text_len = self.model.max_text_len;
        mc.max_token_len = self.model.max_token_len;
        mc.predictor = self.model.predictor;
        mc.cln_shift = self.model.cln_shift;
        mc
    }

    /// Source settings for one split.
    pub fn source_config(&self, split: Split) -> SourceConfig {
        let (bands, utterances) = match split {
            Split::Train => (&self.data.train_bands, self.data.train_utterances),
            Split::Dev => (&self.data.dev_bands, self.data.dev_utterances),
            Split::Test => (&self.data.test_bands, self.data.test_utterances),
        };
        SourceConfig {
            vocab: self.data.vocab,
            feat_dim: self.data.feat_dim,
            scale: self.data.scale,
            noise: self.data.noise,
            text_len: (self.data.text_len_min, self.data.text_len_max),
            rate_bands: bands.clone(),
            utterances,
        }
    }

    pub fn decode_config(&self, seed: u64) -> DecodeConfig {
        DecodeConfig {
            strategy: match self.decode.strategy {
                DecodeStrategy::Greedy => Strategy::Greedy,
                DecodeStrategy::TopK => Strategy::TopK { k: self.decode.k },
            },
            temperature: self.decode.temperature,
            max_tokens_per_input: self.decode.max_tokens_per_input,
            emission_only: self.decode.emission_only,
            seed,
        }
    }
}

/// Corpus split names used in file layouts and subcommand arguments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }

    pub fn from_name(name: &str) -> Result<Split> {
        match name {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            _ => Err(CliError::args(format!("unknown split {name:?}"))),
        }
    }

    pub fn all() -> [Split; 3] {
        [Split::Train, Split::Dev, Split::Test]
    }
}
