//! Self-describing binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic     8 bytes  "TTRCKPT1"
//! meta      u32 count, then per entry: u32 key len, key bytes,
//!                                      u32 value len, value bytes
//! tensors   u32 count, then per tensor: u32 name len, name bytes,
//!                                       u32 rank, u64 dims[rank],
//!                                       f64 data[product(dims)]
//! ```
//!
//! Models serialize their full architecture into the meta block, so a load
//! needs no side channel; tensors are validated against the architecture's
//! parameter inventory on the way back in.

use std::fs;
use std::io::{self, Read as _, Write as _};
use std::path::Path;

use toktrans_core::model::{Model, ModelConfig, PredictorKind};
use toktrans_core::quantizer::Codebook;
use toktrans_core::tensor::{ParamSet, Tensor};

use crate::error::{CliError, Result};

const MAGIC: &[u8; 8] = b"TTRCKPT1";

/// Decoded container: ordered meta entries plus named tensors.
#[derive(Debug, Clone)]
pub struct Container {
    pub meta: Vec<(String, String)>,
    pub tensors: Vec<(String, Tensor)>,
}

impl Container {
    pub fn meta_value(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    fn require(&self, key: &str) -> Result<&str> {
        self.meta_value(key)
            .ok_or_else(|| CliError::checkpoint(format!("missing meta key {key:?}")))
    }

    fn require_num<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.require(key)?
            .parse()
            .map_err(|_| CliError::checkpoint(format!("meta key {key:?} is not a number")))
    }
}

fn write_bytes(buf: &mut Vec<u8>, bytes: &[u8]) {
    buf.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
    buf.extend_from_slice(bytes);
}

pub fn write_container(path: &Path, container: &Container) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(container.meta.len() as u32).to_le_bytes());
    for (k, v) in &container.meta {
        write_bytes(&mut buf, k.as_bytes());
        write_bytes(&mut buf, v.as_bytes());
    }
    buf.extend_from_slice(&(container.tensors.len() as u32).to_le_bytes());
    for (name, t) in &container.tensors {
        write_bytes(&mut buf, name.as_bytes());
        buf.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &x in t.data() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    // Write-then-rename keeps a crashed save from truncating an existing
    // checkpoint in place.
    let tmp = path.with_extension("tmp");
    let io_err = |e: io::Error| CliError::io("writing checkpoint", path, e);
    let mut f = fs::File::create(&tmp).map_err(io_err)?;
    f.write_all(&buf).map_err(io_err)?;
    f.sync_all().map_err(io_err)?;
    drop(f);
    fs::rename(&tmp, path).map_err(io_err)
}

struct Reader {
    buf: Vec<u8>,
    pos: usize,
}

impl Reader {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.buf.len() {
            return Err(CliError::checkpoint(format!(
                "truncated: wanted {n} bytes at offset {}, file has {}",
                self.pos,
                self.buf.len()
            )));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        String::from_utf8(self.take(len)?.to_vec())
            .map_err(|_| CliError::checkpoint("non-utf8 string field"))
    }
}

pub fn read_container(path: &Path) -> Result<Container> {
    let mut buf = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| CliError::io("reading checkpoint", path, e))?;
    let mut r = Reader { buf, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(CliError::checkpoint(format!(
            "{} is not a checkpoint (bad magic)",
            path.display()
        )));
    }
    let meta_count = r.u32()? as usize;
    let mut meta = Vec::with_capacity(meta_count);
    for _ in 0..meta_count {
        let k = r.string()?;
        let v = r.string()?;
        meta.push((k, v));
    }
    let tensor_count = r.u32()? as usize;
    let mut tensors = Vec::with_capacity(tensor_count);
    for _ in 0..tensor_count {
        let name = r.string()?;
        let rank = r.u32()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u64()? as usize);
        }
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(f64::from_le_bytes(r.take(8)?.try_into().unwrap()));
        }
        tensors.push((name, Tensor::new(&shape, data)));
    }
    if r.pos != r.buf.len() {
        return Err(CliError::checkpoint(format!(
            "{} bytes of trailing garbage",
            r.buf.len() - r.pos
        )));
    }
    Ok(Container { meta, tensors })
}

fn model_meta(model: &Model, extra: &[(String, String)]) -> Vec<(String, String)> {
    let c = model.config();
    let kind = match c.predictor {
        PredictorKind::Lstm => "lstm",
        PredictorKind::Attention => "attention",
    };
    let mut meta = vec![
        ("kind".into(), "model".into()),
        ("text_vocab".into(), c.text_vocab.to_string()),
        ("token_vocab".into(), c.token_vocab.to_string()),
        ("feat_dim".into(), c.feat_dim.to_string()),
        ("dim".into(), c.dim.to_string()),
        ("ref_dim".into(), c.ref_dim.to_string()),
        ("ff_mult".into(), c.ff_mult.to_string()),
        ("heads".into(), c.heads.to_string()),
        ("text_blocks".into(), c.text_blocks.to_string()),
        ("pred_blocks".into(), c.pred_blocks.to_string()),
        ("lstm_layers".into(), c.lstm_layers.to_string()),
        ("lstm_hidden".into(), c.lstm_hidden.to_string()),
        ("joint_blocks".into(), c.joint_blocks.to_string()),
        ("max_text_len".into(), c.max_text_len.to_string()),
        ("max_token_len".into(), c.max_token_len.to_string()),
        ("predictor".into(), kind.into()),
        ("cln_shift".into(), c.cln_shift.to_string()),
        ("ln_eps".into(), c.ln_eps.to_string()),
    ];
    meta.extend(extra.iter().cloned());
    meta
}

pub fn save_model(path: &Path, model: &Model, extra_meta: &[(String, String)]) -> Result<()> {
    let tensors = model
        .params()
        .iter()
        .map(|(name, t)| (name.to_string(), t.clone()))
        .collect();
    write_container(path, &Container { meta: model_meta(model, extra_meta), tensors })
}

/// Loads a model checkpoint; the returned meta includes any extra entries
/// the saver attached (training step, corpus seed, and the like).
pub fn load_model(path: &Path) -> Result<(Model, Vec<(String, String)>)> {
    let container = read_container(path)?;
    if container.require("kind")? != "model" {
        return Err(CliError::checkpoint(format!(
            "{} holds a {:?}, not a model",
            path.display(),
            container.meta_value("kind").unwrap_or("?")
        )));
    }
    let mut cfg = ModelConfig::new(
        container.require_num("text_vocab")?,
        container.require_num("token_vocab")?,
        container.require_num("feat_dim")?,
    );
    cfg.dim = container.require_num("dim")?;
    cfg.ref_dim = container.require_num("ref_dim")?;
    cfg.ff_mult = container.require_num("ff_mult")?;
    cfg.heads = container.require_num("heads")?;
    cfg.text_blocks = container.require_num("text_blocks")?;
    cfg.pred_blocks = container.require_num("pred_blocks")?;
    cfg.lstm_layers = container.require_num("lstm_layers")?;
    cfg.lstm_hidden = container.require_num("lstm_hidden")?;
    cfg.joint_blocks = container.require_num("joint_blocks")?;
    cfg.max_text_len = container.require_num("max_text_len")?;
    cfg.max_token_len = container.require_num("max_token_len")?;
    cfg.predictor = match container.require("predictor")? {
        "lstm" => PredictorKind::Lstm,
        "attention" => PredictorKind::Attention,
        other => {
            return Err(CliError::checkpoint(format!("unknown predictor kind {other:?}")));
        }
    };
    cfg.cln_shift = match container.require("cln_shift")? {
        "true" => true,
        "false" => false,
        other => {
            return Err(CliError::checkpoint(format!("cln_shift {other:?} is not a bool")));
        }
    };
    cfg.ln_eps = container.require_num("ln_eps")?;
    let mut params = ParamSet::new();
    for (name, t) in &container.tensors {
        params.insert(name, t.clone());
    }
    let model = Model::from_parts(cfg, params)
        .map_err(|e| CliError::checkpoint(format!("{}: {e}", path.display())))?;
    let extra = container
        .meta
        .into_iter()
        .filter(|(k, _)| !MODEL_KEYS.contains(&k.as_str()))
        .collect();
    Ok((model, extra))
}

const MODEL_KEYS: &[&str] = &[
    "kind",
    "text_vocab",
    "token_vocab",
    "feat_dim",
    "dim",
    "ref_dim",
    "ff_mult",
    "heads",
    "text_blocks",
    "pred_blocks",
    "lstm_layers",
    "lstm_hidden",
    "joint_blocks",
    "max_text_len",
    "max_token_len",
    "predictor",
    "cln_shift",
    "ln_eps",
];

pub fn save_codebook(path: &Path, codebook: &Codebook) -> Result<()> {
    let meta = vec![
        ("kind".into(), "codebook".into()),
        ("k".into(), codebook.len().to_string()),
        ("dim".into(), codebook.dim().to_string()),
        ("inertia".into(), codebook.inertia().to_string()),
        ("iters".into(), codebook.iters().to_string()),
    ];
    let tensors = vec![("centroids".to_string(), codebook.centroids().clone())];
    write_container(path, &Container { meta, tensors })
}

pub fn load_codebook(path: &Path) -> Result<Codebook> {
    let container = read_container(path)?;
    if container.require("kind")? != "codebook" {
        return Err(CliError::checkpoint(format!(
            "{} holds a {:?}, not a codebook",
            path.display(),
            container.meta_value("kind").unwrap_or("?")
        )));
    }
    let centroids = container
        .tensors
        .iter()
        .find(|(name, _)| name == "centroids")
        .map(|(_, t)| t.clone())
        .ok_or_else(|| CliError::checkpoint("codebook container has no centroids tensor"))?;
    Codebook::from_centroids(centroids)
        .map_err(|e| CliError::checkpoint(format!("{}: {e}", path.display())))
}
