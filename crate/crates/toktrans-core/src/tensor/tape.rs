//! Define-by-run reverse-mode differentiation.
//!
//! A [`Tape`] records every operation as a node holding the forward value
//! and a closure that maps the node's output gradient to contributions for
//! its parents. Nodes are appended in execution order, so walking the list
//! backward visits them in reverse topological order. [`Tape::backward`]
//! consumes the tape: each training or evaluation pass builds a fresh one.
//!
//! Shape errors in tape operations are programmer errors and panic;
//! data-dependent validation lives at the public model and lattice entry
//! points.

use alloc::boxed::Box;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::num;
use crate::tensor::{matmul_raw, Tensor};

/// Handle to a node on a specific tape.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Var(usize);

/// Maps the node's output gradient to `(parent, contribution)` pairs.
type BackFn = Box<dyn FnOnce(&Tensor) -> Vec<(Var, Tensor)>>;

struct Node {
    value: Tensor,
    back: Option<BackFn>,
}

/// Operation recorder; one forward pass per tape.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    named: Vec<(String, Var)>,
    flops: u64,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    /// Forward value of a recorded node.
    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Approximate scalar operation count of the forward pass so far.
    /// Matrix products count multiply-adds; elementwise operations count
    /// outputs. The tally is deterministic for a fixed graph, which is what
    /// cost comparisons need.
    pub fn flops(&self) -> u64 {
        self.flops
    }

    fn push(&mut self, value: Tensor, back: Option<BackFn>) -> Var {
        self.nodes.push(Node { value, back });
        Var(self.nodes.len() - 1)
    }

    /// Inserts an input node. Gradient flows into it and can be read back
    /// with [`TapeGrads::wrt`], but it is not reported by name.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, None)
    }

    /// Inserts an input node registered under a parameter name, so its
    /// gradient lands in [`Gradients`] after backward.
    pub fn param(&mut self, name: &str, value: &Tensor) -> Var {
        assert!(
            !self.named.iter().any(|(n, _)| n == name),
            "parameter {name:?} pushed twice onto one tape"
        );
        let v = self.leaf(value.clone());
        self.named.push((name.to_string(), v));
        v
    }

    /// Elementwise sum; shapes must match.
    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(
            va.shape(),
            vb.shape(),
            "add: shape mismatch {:?} vs {:?}",
            va.shape(),
            vb.shape()
        );
        let mut y = va.clone();
        y.add_assign(vb);
        self.flops += y.len() as u64;
        self.push(y, Some(Box::new(move |g| vec![(a, g.clone()), (b, g.clone())])))
    }

    /// Elementwise difference `a - b`.
    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(
            va.shape(),
            vb.shape(),
            "sub: shape mismatch {:?} vs {:?}",
            va.shape(),
            vb.shape()
        );
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x - y).collect();
        let y = Tensor::new(va.shape(), data);
        self.flops += y.len() as u64;
        self.push(
            y,
            Some(Box::new(move |g| vec![(a, g.clone()), (b, g.map(|x| -x))])),
        )
    }

    /// Elementwise product; shapes must match.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(
            va.shape(),
            vb.shape(),
            "mul: shape mismatch {:?} vs {:?}",
            va.shape(),
            vb.shape()
        );
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x * y).collect();
        let y = Tensor::new(va.shape(), data);
        let (ca, cb) = (va.clone(), vb.clone());
        self.flops += y.len() as u64;
        self.push(
            y,
            Some(Box::new(move |g| {
                let ga = Tensor::new(
                    cb.shape(),
                    g.data().iter().zip(cb.data()).map(|(g, b)| g * b).collect(),
                );
                let gb = Tensor::new(
                    ca.shape(),
                    g.data().iter().zip(ca.data()).map(|(g, a)| g * a).collect(),
                );
                vec![(a, ga), (b, gb)]
            })),
        )
    }

    /// Constant scaling `c * a`.
    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let y = self.nodes[a.0].value.map(|x| c * x);
        self.flops += y.len() as u64;
        self.push(y, Some(Box::new(move |g| vec![(a, g.map(|x| c * x))])))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    /// Adds a length-`C` vector to every row of an `[R, C]` matrix.
    pub fn add_row(&mut self, m: Var, r: Var) -> Var {
        let (vm, vr) = (&self.nodes[m.0].value, &self.nodes[r.0].value);
        let cols = vm.cols();
        assert_eq!(
            vr.len(),
            cols,
            "add_row: row of {} values against {} columns",
            vr.len(),
            cols
        );
        let rshape = vr.shape().to_vec();
        let mut y = vm.clone();
        for i in 0..y.rows() {
            for (o, &rv) in y.row_mut(i).iter_mut().zip(vr.data()) {
                *o += rv;
            }
        }
        self.flops += y.len() as u64;
        self.push(
            y,
            Some(Box::new(move |g| {
                let mut gr = vec![0.0; cols];
                for i in 0..g.rows() {
                    for (acc, &gv) in gr.iter_mut().zip(g.row(i)) {
                        *acc += gv;
                    }
                }
                vec![(m, g.clone()), (r, Tensor::new(&rshape, gr))]
            })),
        )
    }

    /// Multiplies every row of an `[R, C]` matrix by a length-`C` vector.
    pub fn mul_row(&mut self, m: Var, r: Var) -> Var {
        let (vm, vr) = (&self.nodes[m.0].value, &self.nodes[r.0].value);
        let cols = vm.cols();
        assert_eq!(
            vr.len(),
            cols,
            "mul_row: row of {} values against {} columns",
            vr.len(),
            cols
        );
        let rshape = vr.shape().to_vec();
        let mut y = vm.clone();
        for i in 0..y.rows() {
            for (o, &rv) in y.row_mut(i).iter_mut().zip(vr.data()) {
                *o *= rv;
            }
        }
        let (cm, cr) = (vm.clone(), vr.clone());
        self.flops += y.len() as u64;
        self.push(
            y,
            Some(Box::new(move |g| {
                let mut gm = g.clone();
                for i in 0..gm.rows() {
                    for (o, &rv) in gm.row_mut(i).iter_mut().zip(cr.data()) {
                        *o *= rv;
                    }
                }
                let mut gr = vec![0.0; cols];
                for i in 0..g.rows() {
                    for ((acc, &gv), &mv) in gr.iter_mut().zip(g.row(i)).zip(cm.row(i)) {
                        *acc += gv * mv;
                    }
                }
                vec![(m, gm), (r, Tensor::new(&rshape, gr))]
            })),
        )
    }

    /// Matrix product with optional transposes on either operand.
    pub fn matmul(&mut self, a: Var, ta: bool, b: Var, tb: bool) -> Var {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let y = matmul_raw(va, ta, vb, tb);
        let (ca, cb) = (va.clone(), vb.clone());
        self.flops += (y.rows() * y.cols()) as u64
            * (if ta { ca.rows() } else { ca.cols() }) as u64;
        self.push(
            y,
            Some(Box::new(move |g| {
                let ga = if ta {
                    matmul_raw(&cb, tb, g, true)
                } else {
                    matmul_raw(g, false, &cb, !tb)
                };
                let gb = if tb {
                    matmul_raw(g, true, &ca, ta)
                } else {
                    matmul_raw(&ca, !ta, g, false)
                };
                vec![(a, ga), (b, gb)]
            })),
        )
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let y = self.nodes[a.0].value.map(num::tanh);
        let cy = y.clone();
        self.flops += y.len() as u64;
        self.push(
            y,
            Some(Box::new(move |g| {
                let ga = Tensor::new(
                    cy.shape(),
                    g.data().iter().zip(cy.data()).map(|(g, y)| g * (1.0 - y * y)).collect(),
                );
                vec![(a, ga)]
            })),
        )
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let y = self.nodes[a.0].value.map(num::sigmoid);
        let cy = y.clone();
        self.flops += y.len() as u64;
        self.push(
            y,
            Some(Box::new(move |g| {
                let ga = Tensor::new(
                    cy.shape(),
                    g.data()
                        .iter()
                        .zip(cy.data())
                        .map(|(g, y)| g * y * (1.0 - y))
                        .collect(),
                );
                vec![(a, ga)]
            })),
        )
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let y = self.nodes[a.0].value.map(num::exp);
        let cy = y.clone();
        self.flops += y.len() as u64;
        self.push(
            y,
            Some(Box::new(move |g| {
                let ga = Tensor::new(
                    cy.shape(),
                    g.data().iter().zip(cy.data()).map(|(g, y)| g * y).collect(),
                );
                vec![(a, ga)]
            })),
        )
    }

    /// Row-wise log-softmax of an `[R, C]` matrix.
    pub fn log_softmax(&mut self, a: Var) -> Var {
        let va = &self.nodes[a.0].value;
        let mut y = va.clone();
        for i in 0..y.rows() {
            let lse = num::log_sum_exp(y.row(i));
            for x in y.row_mut(i) {
                *x -= lse;
            }
        }
        let cy = y.clone();
        self.flops += 3 * y.len() as u64;
        self.push(
            y,
            Some(Box::new(move |g| {
                let mut ga = g.clone();
                for i in 0..ga.rows() {
                    let gsum: f64 = g.row(i).iter().sum();
                    for (o, &lp) in ga.row_mut(i).iter_mut().zip(cy.row(i)) {
                        *o -= num::exp(lp) * gsum;
                    }
                }
                vec![(a, ga)]
            })),
        )
    }

    /// Row-wise softmax of an `[R, C]` matrix.
    pub fn softmax(&mut self, a: Var) -> Var {
        let va = &self.nodes[a.0].value;
        let y = softmax_rows(va, None);
        let cy = y.clone();
        self.flops += 3 * y.len() as u64;
        self.push(y, Some(Box::new(move |g| vec![(a, softmax_back(g, &cy))])))
    }

    /// Row-wise softmax restricted to entries where `allowed` is nonzero.
    /// Excluded entries get probability exactly zero; every row must allow
    /// at least one entry. The mask is a constant, not a differentiable
    /// input.
    pub fn masked_softmax(&mut self, a: Var, allowed: &Tensor) -> Var {
        let va = &self.nodes[a.0].value;
        assert_eq!(
            va.shape(),
            allowed.shape(),
            "masked_softmax: mask shape {:?} against input {:?}",
            allowed.shape(),
            va.shape()
        );
        let y = softmax_rows(va, Some(allowed));
        let cy = y.clone();
        self.flops += 3 * y.len() as u64;
        self.push(y, Some(Box::new(move |g| vec![(a, softmax_back(g, &cy))])))
    }

    /// Row-wise layer normalization without an affine stage: each row is
    /// shifted to mean zero and scaled to unit variance (plus `eps`).
    pub fn layer_norm(&mut self, a: Var, eps: f64) -> Var {
        let va = &self.nodes[a.0].value;
        let (rows, cols) = (va.rows(), va.cols());
        let n = cols as f64;
        let mut y = va.clone();
        let mut inv_std = vec![0.0; rows];
        for i in 0..rows {
            let row = y.row_mut(i);
            let mean: f64 = row.iter().sum::<f64>() / n;
            let var: f64 = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
            let inv = 1.0 / num::sqrt(var + eps);
            inv_std[i] = inv;
            for x in row {
                *x = (*x - mean) * inv;
            }
        }
        let cy = y.clone();
        self.flops += 5 * y.len() as u64;
        self.push(
            y,
            Some(Box::new(move |g| {
                let mut ga = g.clone();
                for i in 0..ga.rows() {
                    let grow = g.row(i);
                    let yrow = cy.row(i);
                    let m1: f64 = grow.iter().sum::<f64>() / n;
                    let m2: f64 =
                        grow.iter().zip(yrow).map(|(g, y)| g * y).sum::<f64>() / n;
                    for ((o, &gv), &yv) in
                        ga.row_mut(i).iter_mut().zip(grow).zip(yrow)
                    {
                        *o = inv_std[i] * (gv - m1 - yv * m2);
                    }
                }
                vec![(a, ga)]
            })),
        )
    }

    /// Row-wise log-sum-exp of an `[R, C]` matrix, producing `[R, 1]`.
    pub fn row_logsumexp(&mut self, a: Var) -> Var {
        let va = &self.nodes[a.0].value;
        let rows = va.rows();
        let mut out = vec![0.0; rows];
        let mut soft = va.clone();
        for i in 0..rows {
            let lse = num::log_sum_exp(va.row(i));
            out[i] = lse;
            for x in soft.row_mut(i) {
                *x = num::exp(*x - lse);
            }
        }
        self.flops += 3 * va.len() as u64;
        self.push(
            Tensor::new(&[rows, 1], out),
            Some(Box::new(move |g| {
                let mut ga = soft;
                for i in 0..ga.rows() {
                    let gi = g.data()[i];
                    for x in ga.row_mut(i) {
                        *x *= gi;
                    }
                }
                vec![(a, ga)]
            })),
        )
    }

    /// Gathers rows of a `[V, D]` table: output row `i` is `table[ids[i]]`.
    /// The backward pass scatter-adds into the table rows.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Var {
        let vt = &self.nodes[table.0].value;
        let (v, d) = (vt.rows(), vt.cols());
        for &id in ids {
            assert!(id < v, "embedding: id {id} outside table of {v} rows");
        }
        let mut y = Tensor::zeros(&[ids.len(), d]);
        for (i, &id) in ids.iter().enumerate() {
            y.row_mut(i).copy_from_slice(vt.row(id));
        }
        let ids = ids.to_vec();
        self.flops += y.len() as u64;
        self.push(
            y,
            Some(Box::new(move |g| {
                let mut gt = Tensor::zeros(&[v, d]);
                for (i, &id) in ids.iter().enumerate() {
                    for (acc, &gv) in gt.row_mut(id).iter_mut().zip(g.row(i)) {
                        *acc += gv;
                    }
                }
                vec![(table, gt)]
            })),
        )
    }

    /// Stacks rank-2 parts vertically; all must share a column count.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_rows of nothing");
        let cols = self.nodes[parts[0].0].value.cols();
        let mut rows = 0;
        let mut row_counts = Vec::with_capacity(parts.len());
        for &p in parts {
            let v = &self.nodes[p.0].value;
            assert_eq!(v.cols(), cols, "concat_rows: column mismatch");
            rows += v.rows();
            row_counts.push(v.rows());
        }
        let mut y = Tensor::zeros(&[rows, cols]);
        let mut at = 0;
        for &p in parts {
            let v = &self.nodes[p.0].value;
            for i in 0..v.rows() {
                y.row_mut(at + i).copy_from_slice(v.row(i));
            }
            at += v.rows();
        }
        let parts = parts.to_vec();
        self.flops += y.len() as u64;
        self.push(
            y,
            Some(Box::new(move |g| {
                let mut out = Vec::with_capacity(parts.len());
                let mut at = 0;
                for (&p, &r) in parts.iter().zip(&row_counts) {
                    let mut gp = Tensor::zeros(&[r, cols]);
                    for i in 0..r {
                        gp.row_mut(i).copy_from_slice(g.row(at + i));
                    }
                    out.push((p, gp));
                    at += r;
                }
                out
            })),
        )
    }

    /// Stacks rank-2 parts side by side; all must share a row count.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_cols of nothing");
        let rows = self.nodes[parts[0].0].value.rows();
        let mut cols = 0;
        let mut col_counts = Vec::with_capacity(parts.len());
        for &p in parts {
            let v = &self.nodes[p.0].value;
            assert_eq!(v.rows(), rows, "concat_cols: row mismatch");
            cols += v.cols();
            col_counts.push(v.cols());
        }
        let mut y = Tensor::zeros(&[rows, cols]);
        let mut at = 0;
        for &p in parts {
            let v = &self.nodes[p.0].value;
            for i in 0..rows {
                y.row_mut(i)[at..at + v.cols()].copy_from_slice(v.row(i));
            }
            at += v.cols();
        }
        let parts = parts.to_vec();
        self.flops += y.len() as u64;
        self.push(
            y,
            Some(Box::new(move |g| {
                let mut out = Vec::with_capacity(parts.len());
                let mut at = 0;
                for (&p, &c) in parts.iter().zip(&col_counts) {
                    let mut gp = Tensor::zeros(&[rows, c]);
                    for i in 0..rows {
                        gp.row_mut(i).copy_from_slice(&g.row(i)[at..at + c]);
                    }
                    out.push((p, gp));
                    at += c;
                }
                out
            })),
        )
    }

    /// Rows `start .. start + len` of a rank-2 tensor.
    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let va = &self.nodes[a.0].value;
        let (rows, cols) = (va.rows(), va.cols());
        assert!(
            start + len <= rows,
            "slice_rows: {start}..{} outside {rows} rows",
            start + len
        );
        let mut y = Tensor::zeros(&[len, cols]);
        for i in 0..len {
            y.row_mut(i).copy_from_slice(va.row(start + i));
        }
        self.flops += y.len() as u64;
        self.push(
            y,
            Some(Box::new(move |g| {
                let mut ga = Tensor::zeros(&[rows, cols]);
                for i in 0..len {
                    ga.row_mut(start + i).copy_from_slice(g.row(i));
                }
                vec![(a, ga)]
            })),
        )
    }

    /// Columns `start .. start + len` of a rank-2 tensor.
    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let va = &self.nodes[a.0].value;
        let (rows, cols) = (va.rows(), va.cols());
        assert!(
            start + len <= cols,
            "slice_cols: {start}..{} outside {cols} columns",
            start + len
        );
        let mut y = Tensor::zeros(&[rows, len]);
        for i in 0..rows {
            y.row_mut(i).copy_from_slice(&va.row(i)[start..start + len]);
        }
        self.flops += y.len() as u64;
        self.push(
            y,
            Some(Box::new(move |g| {
                let mut ga = Tensor::zeros(&[rows, cols]);
                for i in 0..rows {
                    ga.row_mut(i)[start..start + len].copy_from_slice(g.row(i));
                }
                vec![(a, ga)]
            })),
        )
    }

    /// Same elements under a new shape.
    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Var {
        let va = &self.nodes[a.0].value;
        let old = va.shape().to_vec();
        let y = va.reshaped(shape);
        self.push(y, Some(Box::new(move |g| vec![(a, g.reshaped(&old))])))
    }

    /// Sum of all elements, as a `[1]` scalar.
    pub fn sum(&mut self, a: Var) -> Var {
        let va = &self.nodes[a.0].value;
        let shape = va.shape().to_vec();
        let total: f64 = va.data().iter().sum();
        self.flops += va.len() as u64;
        self.push(
            Tensor::scalar(total),
            Some(Box::new(move |g| vec![(a, Tensor::full(&shape, g.item()))])),
        )
    }

    /// All-pairs broadcast sum: for `a [U, D]` and `b [T, D]` the output is
    /// `[U * T, D]` with row `u * T + t` equal to `a[u] + b[t]`.
    pub fn pair_sum(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let d = va.cols();
        assert_eq!(
            vb.cols(),
            d,
            "pair_sum: feature dims {} vs {}",
            d,
            vb.cols()
        );
        let (u, t) = (va.rows(), vb.rows());
        let mut y = Tensor::zeros(&[u * t, d]);
        for i in 0..u {
            for j in 0..t {
                for ((o, &x), &z) in
                    y.row_mut(i * t + j).iter_mut().zip(va.row(i)).zip(vb.row(j))
                {
                    *o = x + z;
                }
            }
        }
        self.flops += y.len() as u64;
        self.push(
            y,
            Some(Box::new(move |g| {
                let mut ga = Tensor::zeros(&[u, d]);
                let mut gb = Tensor::zeros(&[t, d]);
                for i in 0..u {
                    for j in 0..t {
                        let grow = g.row(i * t + j);
                        for (acc, &gv) in ga.row_mut(i).iter_mut().zip(grow) {
                            *acc += gv;
                        }
                        for (acc, &gv) in gb.row_mut(j).iter_mut().zip(grow) {
                            *acc += gv;
                        }
                    }
                }
                vec![(a, ga), (b, gb)]
            })),
        )
    }

    /// Broadcast sum over an explicit node list: output row `n` is
    /// `a[pairs[n].0] + b[pairs[n].1]`. This is the pruned counterpart of
    /// [`Tape::pair_sum`]; cost scales with `pairs.len()`, not the full
    /// grid.
    pub fn pair_sum_select(&mut self, a: Var, b: Var, pairs: &[(usize, usize)]) -> Var {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let d = va.cols();
        assert_eq!(
            vb.cols(),
            d,
            "pair_sum_select: feature dims {} vs {}",
            d,
            vb.cols()
        );
        let (u, t) = (va.rows(), vb.rows());
        let mut y = Tensor::zeros(&[pairs.len(), d]);
        for (n, &(i, j)) in pairs.iter().enumerate() {
            assert!(i < u && j < t, "pair_sum_select: node ({i}, {j}) outside [{u}, {t}]");
            for ((o, &x), &z) in
                y.row_mut(n).iter_mut().zip(va.row(i)).zip(vb.row(j))
            {
                *o = x + z;
            }
        }
        let pairs = pairs.to_vec();
        self.flops += y.len() as u64;
        self.push(
            y,
            Some(Box::new(move |g| {
                let mut ga = Tensor::zeros(&[u, d]);
                let mut gb = Tensor::zeros(&[t, d]);
                for (n, &(i, j)) in pairs.iter().enumerate() {
                    let grow = g.row(n);
                    for (acc, &gv) in ga.row_mut(i).iter_mut().zip(grow) {
                        *acc += gv;
                    }
                    for (acc, &gv) in gb.row_mut(j).iter_mut().zip(grow) {
                        *acc += gv;
                    }
                }
                vec![(a, ga), (b, gb)]
            })),
        )
    }

    /// Records an externally computed operation. `back` receives the output
    /// gradient and must return one gradient per parent, in order, each
    /// matching that parent's shape. This is how fused dynamic programs
    /// join the tape with analytic gradients.
    pub fn custom(
        &mut self,
        parents: &[Var],
        value: Tensor,
        flops: u64,
        back: Box<dyn FnOnce(&Tensor) -> Vec<Tensor>>,
    ) -> Var {
        let parents = parents.to_vec();
        self.flops += flops;
        self.push(
            value,
            Some(Box::new(move |g| {
                let grads = back(g);
                assert_eq!(
                    grads.len(),
                    parents.len(),
                    "custom backward returned {} gradients for {} parents",
                    grads.len(),
                    parents.len()
                );
                parents.into_iter().zip(grads).collect()
            })),
        )
    }

    /// Runs the backward sweep from a single-element node and consumes the
    /// tape. Returns per-leaf gradients.
    pub fn backward(mut self, loss: Var) -> TapeGrads {
        let seed_shape = self.nodes[loss.0].value.shape().to_vec();
        assert_eq!(
            self.nodes[loss.0].value.len(),
            1,
            "backward target must hold one element, got shape {seed_shape:?}"
        );
        let n = self.nodes.len();
        let mut grads: Vec<Option<Tensor>> = vec![None; n];
        grads[loss.0] = Some(Tensor::full(&seed_shape, 1.0));
        for i in (0..n).rev() {
            let Some(back) = self.nodes[i].back.take() else {
                continue;
            };
            let Some(g) = grads[i].take() else {
                continue;
            };
            for (p, contrib) in back(&g) {
                debug_assert_eq!(
                    contrib.shape(),
                    self.nodes[p.0].value.shape(),
                    "gradient shape mismatch flowing into node {}",
                    p.0
                );
                match &mut grads[p.0] {
                    Some(acc) => acc.add_assign(&contrib),
                    slot => *slot = Some(contrib),
                }
            }
        }
        TapeGrads { grads, named: self.named }
    }
}

fn softmax_rows(x: &Tensor, allowed: Option<&Tensor>) -> Tensor {
    let mut y = x.clone();
    let cols = x.cols();
    for i in 0..y.rows() {
        let row = y.row_mut(i);
        let mask = allowed.map(|m| m.row(i));
        let mut hi = f64::NEG_INFINITY;
        for (j, &v) in row.iter().enumerate() {
            if mask.is_none_or(|m| m[j] != 0.0) && v > hi {
                hi = v;
            }
        }
        assert!(
            hi > f64::NEG_INFINITY,
            "softmax row {i} has no allowed entries"
        );
        let mut total = 0.0;
        for j in 0..cols {
            if mask.is_none_or(|m| m[j] != 0.0) {
                row[j] = num::exp(row[j] - hi);
                total += row[j];
            } else {
                row[j] = 0.0;
            }
        }
        for v in row {
            *v /= total;
        }
    }
    y
}

fn softmax_back(g: &Tensor, probs: &Tensor) -> Tensor {
    let mut ga = g.clone();
    for i in 0..ga.rows() {
        let dot: f64 = g.row(i).iter().zip(probs.row(i)).map(|(g, p)| g * p).sum();
        for (o, &p) in ga.row_mut(i).iter_mut().zip(probs.row(i)) {
            *o = p * (*o - dot);
        }
    }
    ga
}

/// Gradients left behind by [`Tape::backward`].
pub struct TapeGrads {
    grads: Vec<Option<Tensor>>,
    named: Vec<(String, Var)>,
}

impl TapeGrads {
    /// Gradient with respect to a leaf, or `None` when no gradient flowed
    /// into it. Internal nodes give up their gradients during the sweep, so
    /// only leaves can be queried.
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    /// Collects gradients of named parameters. Parameters no gradient
    /// reached are absent; the optimizer reports them.
    pub fn into_named(mut self) -> Gradients {
        let mut entries = Vec::with_capacity(self.named.len());
        for (name, v) in self.named.drain(..) {
            if let Some(g) = self.grads[v.0].take() {
                entries.push((name, g));
            }
        }
        Gradients { entries }
    }
}

/// Named parameter gradients in parameter registration order.
#[derive(Debug, Default)]
pub struct Gradients {
    entries: Vec<(String, Tensor)>,
}

impl Gradients {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
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

    /// Euclidean norm over every gradient element.
    pub fn global_norm(&self) -> f64 {
        num::sqrt(self.entries.iter().map(|(_, t)| t.sq_norm()).sum())
    }

    /// Rescales all gradients so the global norm is at most `max`.
    /// Returns the norm before clipping.
    pub fn clip_global_norm(&mut self, max: f64) -> f64 {
        let norm = self.global_norm();
        if norm > max && norm > 0.0 {
            let c = max / norm;
            for (_, t) in &mut self.entries {
                t.scale_assign(c);
            }
        }
        norm
    }

    /// Merges gradient sums from another pass, adding where names collide.
    /// Used to accumulate over a batch of per-utterance tapes.
    pub fn accumulate(&mut self, other: Gradients) {
        for (name, g) in other.entries {
            match self.entries.iter_mut().find(|(n, _)| *n == name) {
                Some((_, acc)) => acc.add_assign(&g),
                None => self.entries.push((name, g)),
            }
        }
    }

    /// Scales every gradient, e.g. by `1 / batch_size`.
    pub fn scale_assign(&mut self, c: f64) {
        for (_, t) in &mut self.entries {
            t.scale_assign(c);
        }
    }
}
