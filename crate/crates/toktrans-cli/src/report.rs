//! Report file writers: CSV tables, raw matrix CSVs, and 8-bit binary PGM
//! images for lattice heat maps.

use std::fs;
use std::path::Path;

use toktrans_core::tensor::Tensor;

use crate::error::{CliError, Result};

/// Writes a CSV with one header row. Fields are joined naively, so callers
/// keep commas out of field values.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut s = header.join(",");
    s.push('\n');
    for row in rows {
        debug_assert_eq!(row.len(), header.len());
        s.push_str(&row.join(","));
        s.push('\n');
    }
    fs::write(path, s).map_err(|e| CliError::io("writing csv", path, e))
}

/// Writes a rank-2 tensor as rows of comma-separated values.
pub fn write_matrix_csv(path: &Path, matrix: &Tensor) -> Result<()> {
    let mut s = String::new();
    for r in 0..matrix.rows() {
        let row: Vec<String> = matrix.row(r).iter().map(f64::to_string).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    fs::write(path, s).map_err(|e| CliError::io("writing matrix csv", path, e))
}

pub fn read_matrix_csv(path: &Path) -> Result<Tensor> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io("reading matrix csv", path, e))?;
    let mut data = Vec::new();
    let mut rows = 0usize;
    let mut cols = None;
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let mut n = 0usize;
        for field in line.split(',') {
            let x: f64 = field.trim().parse().map_err(|_| {
                CliError::new("report", format!("matrix field {field:?} is not a number"))
            })?;
            data.push(x);
            n += 1;
        }
        match cols {
            None => cols = Some(n),
            Some(c) if c == n => {}
            Some(c) => {
                return Err(CliError::new(
                    "report",
                    format!("ragged matrix: row {} has {n} fields, expected {c}", rows + 1),
                ));
            }
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| CliError::new("report", "empty matrix csv"))?;
    Ok(Tensor::new(&[rows, cols], data))
}

/// Writes a matrix as a binary (P5) PGM, linearly rescaled to 0..=255.
/// The original value range is preserved in a `# min=.. max=..` comment so
/// the image remains quantitatively interpretable. Non-finite entries clamp
/// to the finite range (log-zero scores render as the darkest shade).
pub fn write_pgm(path: &Path, matrix: &Tensor) -> Result<()> {
    let (rows, cols) = (matrix.rows(), matrix.cols());
    let finite: Vec<f64> = matrix.data().iter().copied().filter(|x| x.is_finite()).collect();
    let min = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let max = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    let mut out = format!("P5\n# min={min} max={max}\n{cols} {rows}\n255\n").into_bytes();
    for &x in matrix.data() {
        let byte = if !x.is_finite() {
            if x > 0.0 {
                255
            } else {
                0
            }
        } else if span <= 0.0 {
            0
        } else {
            ((x - min) / span * 255.0).round().clamp(0.0, 255.0) as u8
        };
        out.push(byte);
    }
    fs::write(path, out).map_err(|e| CliError::io("writing pgm", path, e))
}

/// Parsed PGM: dimensions, pixel bytes, and the value range comment.
#[derive(Debug)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
    pub min: f64,
    pub max: f64,
}

/// Reads back a PGM written by [`write_pgm`], validating the header.
pub fn read_pgm(path: &Path) -> Result<Pgm> {
    let bytes = fs::read(path).map_err(|e| CliError::io("reading pgm", path, e))?;
    let bad = |msg: &str| CliError::new("report", format!("{}: {msg}", path.display()));
    // Header is text up to the maxval line; pixel bytes follow the single
    // whitespace after maxval.
    let mut lines = Vec::new();
    let mut pos = 0usize;
    while lines.len() < 4 {
        let nl = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| bad("truncated header"))?;
        let line = std::str::from_utf8(&bytes[pos..pos + nl])
            .map_err(|_| bad("non-utf8 header"))?
            .to_string();
        pos += nl + 1;
        lines.push(line);
    }
    if lines[0] != "P5" {
        return Err(bad("missing P5 magic"));
    }
    let comment = lines[1]
        .strip_prefix("# min=")
        .ok_or_else(|| bad("missing range comment"))?;
    let (min_s, max_s) =
        comment.split_once(" max=").ok_or_else(|| bad("malformed range comment"))?;
    let min: f64 = min_s.parse().map_err(|_| bad("bad min in range comment"))?;
    let max: f64 = max_s.parse().map_err(|_| bad("bad max in range comment"))?;
    let (w_s, h_s) = lines[2].split_once(' ').ok_or_else(|| bad("malformed size line"))?;
    let width: usize = w_s.parse().map_err(|_| bad("bad width"))?;
    let height: usize = h_s.parse().map_err(|_| bad("bad height"))?;
    if lines[3] != "255" {
        return Err(bad("maxval is not 255"));
    }
    let pixels = bytes[pos..].to_vec();
    if pixels.len() != width * height {
        return Err(bad(&format!(
            "pixel payload holds {} bytes, header promises {}",
            pixels.len(),
            width * height
        )));
    }
    Ok(Pgm { width, height, pixels, min, max })
}
