//! Wall-clock decode timing. Lives in the harness because the core crate
//! has no clock.

use std::time::Instant;

use toktrans_core::decoder::{decode, DecodeConfig, DecodeResult};
use toktrans_core::model::Model;
use toktrans_core::tensor::Tensor;

use crate::error::Result;

/// One timed decode; `step_ops` is the mean tape-op count per decoder step.
#[derive(Debug, Clone)]
pub struct TimingRow {
    pub variant: String,
    pub u_len: usize,
    pub t_len: usize,
    pub wall_ms: f64,
    pub tokens_per_s: f64,
    pub step_ops: u64,
}

impl TimingRow {
    pub const HEADER: [&'static str; 6] =
        ["variant", "U", "T", "wall_ms", "tokens_per_s", "step_ops"];

    pub fn csv_row(&self) -> Vec<String> {
        vec![
            self.variant.clone(),
            self.u_len.to_string(),
            self.t_len.to_string(),
            format!("{:.3}", self.wall_ms),
            format!("{:.1}", self.tokens_per_s),
            self.step_ops.to_string(),
        ]
    }
}

/// Decodes every `(text, reference frames)` pair, timing session build plus
/// the full decode loop. Returns per-item results and timing rows.
pub fn batch_decode_timed(
    model: &Model,
    variant: &str,
    items: &[(Vec<usize>, Tensor)],
    cfg: &DecodeConfig,
) -> Result<(Vec<DecodeResult>, Vec<TimingRow>)> {
    let mut results = Vec::with_capacity(items.len());
    let mut rows = Vec::with_capacity(items.len());
    for (text, frames) in items {
        let start = Instant::now();
        let mut session = model.decode_session(text, frames)?;
        let result = decode(&mut session, cfg)?;
        let wall = start.elapsed().as_secs_f64();
        let ops = session.flops();
        let steps = result.steps.len().max(1) as u64;
        let tokens = result.tokens.len();
        rows.push(TimingRow {
            variant: variant.to_string(),
            u_len: text.len(),
            t_len: tokens,
            wall_ms: wall * 1e3,
            tokens_per_s: if wall > 0.0 { tokens as f64 / wall } else { 0.0 },
            step_ops: ops / steps,
        });
        results.push(result);
    }
    Ok((results, rows))
}

/// Aggregate throughput over timing rows: total tokens / total wall time.
pub fn pooled_tokens_per_s(rows: &[TimingRow]) -> f64 {
    let tokens: f64 = rows.iter().map(|r| r.t_len as f64).sum();
    let wall_s: f64 = rows.iter().map(|r| r.wall_ms / 1e3).sum();
    if wall_s > 0.0 {
        tokens / wall_s
    } else {
        0.0
    }
}
