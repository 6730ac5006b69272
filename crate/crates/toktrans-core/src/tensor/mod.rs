//! Dense `f64` tensors, named parameter sets, and a define-by-run
//! reverse-mode tape.
//!
//! [`Tensor`] is a flat row-major buffer with a shape; ranks 1 and 2 cover
//! everything this crate computes. [`ParamSet`] holds named trainable
//! tensors in a stable order. [`tape::Tape`] records operations as they run
//! and plays closures backward to produce gradients; [`adam::Adam`] applies
//! them.

pub mod adam;
pub mod tape;

pub use adam::{Adam, AdamConfig};
pub use tape::{Gradients, Tape, TapeGrads, Var};

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

/// Dense row-major tensor of `f64` values.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor from a shape and matching flat buffer.
    pub fn new(shape: &[usize], data: Vec<f64>) -> Self {
        assert!(!shape.is_empty(), "tensor rank must be at least 1");
        let len: usize = shape.iter().product();
        assert_eq!(
            len,
            data.len(),
            "shape {shape:?} wants {len} elements, buffer has {}",
            data.len()
        );
        Tensor { shape: shape.to_vec(), data }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Tensor::new(shape, vec![0.0; len])
    }

    pub fn full(shape: &[usize], x: f64) -> Self {
        let len = shape.iter().product();
        Tensor::new(shape, vec![x; len])
    }

    /// Single-element tensor of shape `[1]`.
    pub fn scalar(x: f64) -> Self {
        Tensor::new(&[1], vec![x])
    }

    /// The sole element of a single-element tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    #[inline]
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    #[inline]
    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Row count; the tensor must be rank 2.
    #[inline]
    pub fn rows(&self) -> usize {
        assert_eq!(self.rank(), 2, "rows() on tensor of shape {:?}", self.shape);
        self.shape[0]
    }

    /// Column count; the tensor must be rank 2.
    #[inline]
    pub fn cols(&self) -> usize {
        assert_eq!(self.rank(), 2, "cols() on tensor of shape {:?}", self.shape);
        self.shape[1]
    }

    #[inline]
    pub fn at2(&self, r: usize, c: usize) -> f64 {
        debug_assert!(r < self.rows() && c < self.cols());
        self.data[r * self.shape[1] + c]
    }

    #[inline]
    pub fn set2(&mut self, r: usize, c: usize, x: f64) {
        debug_assert!(r < self.rows() && c < self.cols());
        let cols = self.shape[1];
        self.data[r * cols + c] = x;
    }

    /// Contiguous view of one row of a rank-2 tensor.
    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        let cols = self.cols();
        &self.data[r * cols..(r + 1) * cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let cols = self.cols();
        &mut self.data[r * cols..(r + 1) * cols]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Elementwise in-place add; shapes must match exactly.
    pub fn add_assign(&mut self, other: &Tensor) {
        assert_eq!(
            self.shape, other.shape,
            "add_assign: shape mismatch {:?} vs {:?}",
            self.shape, other.shape
        );
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += b;
        }
    }

    pub fn scale_assign(&mut self, c: f64) {
        for x in &mut self.data {
            *x *= c;
        }
    }

    /// Same buffer under a new shape with the same element count.
    pub fn reshaped(&self, shape: &[usize]) -> Tensor {
        Tensor::new(shape, self.data.clone())
    }

    /// Sum of squared elements.
    pub fn sq_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?}", self.shape)?;
        if self.data.len() <= 8 {
            write!(f, " {:?}", self.data)
        } else {
            write!(f, " [{}, {}, .. ; {}]", self.data[0], self.data[1], self.data.len())
        }
    }
}

/// Matrix product with optional operand transposes, used by the tape both
/// forward and backward. Logical operands are `op(a) [m,k]` and `op(b)
/// [k,n]` where `op` transposes when the flag is set.
pub(crate) fn matmul_raw(a: &Tensor, ta: bool, b: &Tensor, tb: bool) -> Tensor {
    let (ar, ac) = (a.rows(), a.cols());
    let (br, bc) = (b.rows(), b.cols());
    let (m, k) = if ta { (ac, ar) } else { (ar, ac) };
    let (kb, n) = if tb { (bc, br) } else { (br, bc) };
    assert_eq!(
        k, kb,
        "matmul: inner dims disagree, {:?}{} x {:?}{}",
        a.shape(),
        if ta { "^T" } else { "" },
        b.shape(),
        if tb { "^T" } else { "" }
    );
    let mut out = vec![0.0; m * n];
    match (ta, tb) {
        (false, false) => {
            for i in 0..m {
                for p in 0..k {
                    let aip = a.data[i * ac + p];
                    if aip == 0.0 {
                        continue;
                    }
                    let brow = &b.data[p * bc..p * bc + n];
                    let orow = &mut out[i * n..i * n + n];
                    for (o, &bv) in orow.iter_mut().zip(brow) {
                        *o += aip * bv;
                    }
                }
            }
        }
        (false, true) => {
            for i in 0..m {
                let arow = &a.data[i * ac..i * ac + k];
                for j in 0..n {
                    let brow = &b.data[j * bc..j * bc + k];
                    let mut acc = 0.0;
                    for (&av, &bv) in arow.iter().zip(brow) {
                        acc += av * bv;
                    }
                    out[i * n + j] = acc;
                }
            }
        }
        (true, false) => {
            for p in 0..k {
                let arow = &a.data[p * ac..p * ac + m];
                let brow = &b.data[p * bc..p * bc + n];
                for (i, &av) in arow.iter().enumerate() {
                    if av == 0.0 {
                        continue;
                    }
                    let orow = &mut out[i * n..i * n + n];
                    for (o, &bv) in orow.iter_mut().zip(brow) {
                        *o += av * bv;
                    }
                }
            }
        }
        (true, true) => {
            for i in 0..m {
                for j in 0..n {
                    let mut acc = 0.0;
                    for p in 0..k {
                        acc += a.data[p * ac + i] * b.data[j * bc + p];
                    }
                    out[i * n + j] = acc;
                }
            }
        }
    }
    Tensor::new(&[m, n], out)
}

/// Named tensors in insertion order. Lookup is a linear scan, which is fine
/// for the few dozen parameters a model carries.
#[derive(Clone, Debug, Default)]
pub struct ParamSet {
    entries: Vec<(String, Tensor)>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet { entries: Vec::new() }
    }

    /// Registers a tensor under a fresh name.
    pub fn insert(&mut self, name: &str, t: Tensor) {
        assert!(
            !self.contains(name),
            "parameter {name:?} registered twice"
        );
        self.entries.push((name.to_string(), t));
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.iter().any(|(n, _)| n == name)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.iter_mut().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// The tensor registered under `name`; panics when absent.
    pub fn expect(&self, name: &str) -> &Tensor {
        self.get(name).unwrap_or_else(|| panic!("unknown parameter {name:?}"))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    /// Total scalar count across all tensors.
    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }
}
