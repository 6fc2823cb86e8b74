use std::cell::RefCell;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{gemm_nn, gemm_nt, gemm_tn, Real, Tensor};
use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`]. Only meaningful on the graph that created
/// it.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct Var(usize);

type BackwardFn<T> = Box<dyn Fn(&[Tensor<T>], &Tensor<T>, &mut [Option<Tensor<T>>])>;

struct OpRecord<T> {
    out: usize,
    backward: BackwardFn<T>,
}

struct Inner<T> {
    values: Vec<Tensor<T>>,
    ops: Vec<OpRecord<T>>,
}

/// Reverse-mode autodiff tape.
///
/// A graph lives for one forward/backward pass: leaves enter through
/// [`Graph::input`], each operation records how to push gradients back to its
/// inputs, and [`Graph::backward`] replays the tape in reverse. Every
/// operation validates shapes up front and rejects non-finite outputs.
pub struct Graph<T> {
    inner: RefCell<Inner<T>>,
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`]. Nodes the
/// loss does not depend on have no entry.
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

fn slot<'a, T: Real>(
    grads: &'a mut [Option<Tensor<T>>],
    idx: usize,
    shape: &[usize],
) -> &'a mut Tensor<T> {
    grads[idx].get_or_insert_with(|| Tensor::zeros(shape))
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Graph {
            inner: RefCell::new(Inner {
                values: Vec::new(),
                ops: Vec::new(),
            }),
        }
    }

    /// Registers a leaf node. Gradients accumulate here during backward.
    pub fn input(&self, value: Tensor<T>) -> Var {
        let mut inner = self.inner.borrow_mut();
        inner.values.push(value);
        Var(inner.values.len() - 1)
    }

    /// Copy of the current value of a node.
    pub fn value(&self, v: Var) -> Tensor<T> {
        self.inner.borrow().values[v.0].clone()
    }

    pub fn shape_of(&self, v: Var) -> Vec<usize> {
        self.inner.borrow().values[v.0].shape().to_vec()
    }

    fn record(&self, op: &'static str, value: Tensor<T>, backward: BackwardFn<T>) -> Result<Var> {
        if !value.all_finite() {
            return Err(Error::NonFinite {
                path: op.to_string(),
            });
        }
        let mut inner = self.inner.borrow_mut();
        inner.values.push(value);
        let out = inner.values.len() - 1;
        inner.ops.push(OpRecord { out, backward });
        Ok(Var(out))
    }

    /// Replays the tape in reverse from a scalar root, accumulating gradients
    /// for every node the root depends on.
    pub fn backward(&self, root: Var) -> Result<Gradients<T>> {
        let inner = self.inner.borrow();
        if inner.values[root.0].len() != 1 {
            return Err(Error::Shape {
                op: "backward",
                lhs: inner.values[root.0].shape().to_vec(),
                rhs: vec![1],
            });
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; inner.values.len()];
        grads[root.0] = Some(Tensor::scalar(T::one()));
        for op in inner.ops.iter().rev() {
            let Some(gout) = grads[op.out].clone() else {
                continue;
            };
            (op.backward)(&inner.values, &gout, &mut grads);
        }
        Ok(Gradients { grads })
    }

    /// Elementwise sum of two nodes with identical shapes.
    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        let value = {
            let inner = self.inner.borrow();
            let (ta, tb) = (&inner.values[a.0], &inner.values[b.0]);
            if ta.shape() != tb.shape() {
                return Err(Error::Shape {
                    op: "add",
                    lhs: ta.shape().to_vec(),
                    rhs: tb.shape().to_vec(),
                });
            }
            let data = ta
                .data()
                .iter()
                .zip(tb.data())
                .map(|(x, y)| *x + *y)
                .collect();
            Tensor::from_vec(ta.shape(), data)?
        };
        let shape = value.shape().to_vec();
        self.record(
            "add",
            value,
            Box::new(move |_values, gout, grads| {
                slot(grads, a.0, &shape).accumulate(gout);
                slot(grads, b.0, &shape).accumulate(gout);
            }),
        )
    }

    /// Elementwise product of two nodes with identical shapes.
    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        let value = {
            let inner = self.inner.borrow();
            let (ta, tb) = (&inner.values[a.0], &inner.values[b.0]);
            if ta.shape() != tb.shape() {
                return Err(Error::Shape {
                    op: "mul",
                    lhs: ta.shape().to_vec(),
                    rhs: tb.shape().to_vec(),
                });
            }
            let data = ta
                .data()
                .iter()
                .zip(tb.data())
                .map(|(x, y)| *x * *y)
                .collect();
            Tensor::from_vec(ta.shape(), data)?
        };
        let shape = value.shape().to_vec();
        self.record(
            "mul",
            value,
            Box::new(move |values, gout, grads| {
                {
                    let ga = slot(grads, a.0, &shape);
                    for ((g, go), ob) in ga
                        .data_mut()
                        .iter_mut()
                        .zip(gout.data())
                        .zip(values[b.0].data())
                    {
                        *g = *g + *go * *ob;
                    }
                }
                let gb = slot(grads, b.0, &shape);
                for ((g, go), oa) in gb
                    .data_mut()
                    .iter_mut()
                    .zip(gout.data())
                    .zip(values[a.0].data())
                {
                    *g = *g + *go * *oa;
                }
            }),
        )
    }

    /// Multiplies every element by a constant.
    pub fn scale(&self, a: Var, factor: T) -> Result<Var> {
        let value = {
            let inner = self.inner.borrow();
            let ta = &inner.values[a.0];
            let data = ta.data().iter().map(|x| *x * factor).collect();
            Tensor::from_vec(ta.shape(), data)?
        };
        let shape = value.shape().to_vec();
        self.record(
            "scale",
            value,
            Box::new(move |_values, gout, grads| {
                let ga = slot(grads, a.0, &shape);
                for (g, go) in ga.data_mut().iter_mut().zip(gout.data()) {
                    *g = *g + *go * factor;
                }
            }),
        )
    }

    /// Matrix product `a [m,k] · b [k,n] -> [m,n]`.
    ///
    /// Backward: `dA += dC · Bᵀ`, `dB += Aᵀ · dC`.
    pub fn matmul(&self, a: Var, b: Var) -> Result<Var> {
        let (value, m, k, n) = {
            let inner = self.inner.borrow();
            let (ta, tb) = (&inner.values[a.0], &inner.values[b.0]);
            if ta.rank() != 2 || tb.rank() != 2 || ta.shape()[1] != tb.shape()[0] {
                return Err(Error::Shape {
                    op: "matmul",
                    lhs: ta.shape().to_vec(),
                    rhs: tb.shape().to_vec(),
                });
            }
            let (m, k) = (ta.shape()[0], ta.shape()[1]);
            let n = tb.shape()[1];
            let mut out = Tensor::zeros(&[m, n]);
            gemm_nn(ta.data(), tb.data(), out.data_mut(), m, k, n);
            (out, m, k, n)
        };
        self.record(
            "matmul",
            value,
            Box::new(move |values, gout, grads| {
                {
                    let ga = slot(grads, a.0, &[m, k]);
                    gemm_nt(gout.data(), values[b.0].data(), ga.data_mut(), m, n, k);
                }
                let gb = slot(grads, b.0, &[k, n]);
                gemm_tn(values[a.0].data(), gout.data(), gb.data_mut(), m, k, n);
            }),
        )
    }

    /// Matrix product with the second operand transposed:
    /// `a [m,k] · b [n,k]ᵀ -> [m,n]`. Used for the tied-embedding output
    /// layer, where `b` is the `[vocab, hidden]` embedding table.
    pub fn matmul_nt(&self, a: Var, b: Var) -> Result<Var> {
        let (value, m, k, n) = {
            let inner = self.inner.borrow();
            let (ta, tb) = (&inner.values[a.0], &inner.values[b.0]);
            if ta.rank() != 2 || tb.rank() != 2 || ta.shape()[1] != tb.shape()[1] {
                return Err(Error::Shape {
                    op: "matmul_nt",
                    lhs: ta.shape().to_vec(),
                    rhs: tb.shape().to_vec(),
                });
            }
            let (m, k) = (ta.shape()[0], ta.shape()[1]);
            let n = tb.shape()[0];
            let mut out = Tensor::zeros(&[m, n]);
            gemm_nt(ta.data(), tb.data(), out.data_mut(), m, k, n);
            (out, m, k, n)
        };
        self.record(
            "matmul_nt",
            value,
            Box::new(move |values, gout, grads| {
                {
                    let ga = slot(grads, a.0, &[m, k]);
                    gemm_nn(gout.data(), values[b.0].data(), ga.data_mut(), m, n, k);
                }
                let gb = slot(grads, b.0, &[n, k]);
                gemm_tn(gout.data(), values[a.0].data(), gb.data_mut(), m, n, k);
            }),
        )
    }

    /// Batched matrix product `a [g,m,k] · b [g,k,n] -> [g,m,n]`.
    pub fn bmm(&self, a: Var, b: Var) -> Result<Var> {
        let (value, g, m, k, n) = {
            let inner = self.inner.borrow();
            let (ta, tb) = (&inner.values[a.0], &inner.values[b.0]);
            if ta.rank() != 3
                || tb.rank() != 3
                || ta.shape()[0] != tb.shape()[0]
                || ta.shape()[2] != tb.shape()[1]
            {
                return Err(Error::Shape {
                    op: "bmm",
                    lhs: ta.shape().to_vec(),
                    rhs: tb.shape().to_vec(),
                });
            }
            let (g, m, k) = (ta.shape()[0], ta.shape()[1], ta.shape()[2]);
            let n = tb.shape()[2];
            let mut out = Tensor::zeros(&[g, m, n]);
            for i in 0..g {
                gemm_nn(
                    &ta.data()[i * m * k..(i + 1) * m * k],
                    &tb.data()[i * k * n..(i + 1) * k * n],
                    &mut out.data_mut()[i * m * n..(i + 1) * m * n],
                    m,
                    k,
                    n,
                );
            }
            (out, g, m, k, n)
        };
        self.record(
            "bmm",
            value,
            Box::new(move |values, gout, grads| {
                {
                    let bv = values[b.0].data();
                    let ga = slot(grads, a.0, &[g, m, k]);
                    for i in 0..g {
                        gemm_nt(
                            &gout.data()[i * m * n..(i + 1) * m * n],
                            &bv[i * k * n..(i + 1) * k * n],
                            &mut ga.data_mut()[i * m * k..(i + 1) * m * k],
                            m,
                            n,
                            k,
                        );
                    }
                }
                let av = values[a.0].data();
                let gb = slot(grads, b.0, &[g, k, n]);
                for i in 0..g {
                    gemm_tn(
                        &av[i * m * k..(i + 1) * m * k],
                        &gout.data()[i * m * n..(i + 1) * m * n],
                        &mut gb.data_mut()[i * k * n..(i + 1) * k * n],
                        m,
                        k,
                        n,
                    );
                }
            }),
        )
    }

    /// Batched product with the second operand transposed:
    /// `a [g,m,k] · b [g,n,k]ᵀ -> [g,m,n]`. This is the attention-score
    /// product `Q · Kᵀ`.
    pub fn bmm_nt(&self, a: Var, b: Var) -> Result<Var> {
        let (value, g, m, k, n) = {
            let inner = self.inner.borrow();
            let (ta, tb) = (&inner.values[a.0], &inner.values[b.0]);
            if ta.rank() != 3
                || tb.rank() != 3
                || ta.shape()[0] != tb.shape()[0]
                || ta.shape()[2] != tb.shape()[2]
            {
                return Err(Error::Shape {
                    op: "bmm_nt",
                    lhs: ta.shape().to_vec(),
                    rhs: tb.shape().to_vec(),
                });
            }
            let (g, m, k) = (ta.shape()[0], ta.shape()[1], ta.shape()[2]);
            let n = tb.shape()[1];
            let mut out = Tensor::zeros(&[g, m, n]);
            for i in 0..g {
                gemm_nt(
                    &ta.data()[i * m * k..(i + 1) * m * k],
                    &tb.data()[i * n * k..(i + 1) * n * k],
                    &mut out.data_mut()[i * m * n..(i + 1) * m * n],
                    m,
                    k,
                    n,
                );
            }
            (out, g, m, k, n)
        };
        self.record(
            "bmm_nt",
            value,
            Box::new(move |values, gout, grads| {
                {
                    let bv = values[b.0].data();
                    let ga = slot(grads, a.0, &[g, m, k]);
                    for i in 0..g {
                        gemm_nn(
                            &gout.data()[i * m * n..(i + 1) * m * n],
                            &bv[i * n * k..(i + 1) * n * k],
                            &mut ga.data_mut()[i * m * k..(i + 1) * m * k],
                            m,
                            n,
                            k,
                        );
                    }
                }
                let av = values[a.0].data();
                let gb = slot(grads, b.0, &[g, n, k]);
                for i in 0..g {
                    gemm_tn(
                        &gout.data()[i * m * n..(i + 1) * m * n],
                        &av[i * m * k..(i + 1) * m * k],
                        &mut gb.data_mut()[i * n * k..(i + 1) * n * k],
                        m,
                        n,
                        k,
                    );
                }
            }),
        )
    }

    /// Gathers rows of `table` (first axis) at the given indices. Works for
    /// embedding lookup and for selecting activation rows; the backward pass
    /// scatter-adds gradients into the gathered rows.
    pub fn gather_rows(&self, table: Var, indices: &[usize]) -> Result<Var> {
        let (value, row_len, table_shape) = {
            let inner = self.inner.borrow();
            let tt = &inner.values[table.0];
            if tt.rank() < 2 {
                return Err(Error::Shape {
                    op: "gather_rows",
                    lhs: tt.shape().to_vec(),
                    rhs: vec![indices.len()],
                });
            }
            let rows = tt.shape()[0];
            let row_len: usize = tt.shape()[1..].iter().product();
            let mut data = Vec::with_capacity(indices.len() * row_len);
            for &idx in indices {
                if idx >= rows {
                    return Err(Error::Index {
                        op: "gather_rows",
                        index: idx,
                        size: rows,
                    });
                }
                data.extend_from_slice(&tt.data()[idx * row_len..(idx + 1) * row_len]);
            }
            let mut shape = vec![indices.len()];
            shape.extend_from_slice(&tt.shape()[1..]);
            (
                Tensor::from_vec(&shape, data)?,
                row_len,
                tt.shape().to_vec(),
            )
        };
        let indices = indices.to_vec();
        self.record(
            "gather_rows",
            value,
            Box::new(move |_values, gout, grads| {
                let gt = slot(grads, table.0, &table_shape);
                for (i, &idx) in indices.iter().enumerate() {
                    let src = &gout.data()[i * row_len..(i + 1) * row_len];
                    let dst = &mut gt.data_mut()[idx * row_len..(idx + 1) * row_len];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d = *d + *s;
                    }
                }
            }),
        )
    }

    /// Reorders `x [batch*seq, heads*head_dim]` into per-head matrices
    /// `[batch*heads, seq, head_dim]`.
    pub fn split_heads(&self, x: Var, batch: usize, seq: usize, heads: usize) -> Result<Var> {
        let (value, hidden, head_dim) = {
            let inner = self.inner.borrow();
            let tx = &inner.values[x.0];
            if tx.rank() != 2 || tx.shape()[0] != batch * seq || tx.shape()[1] % heads != 0 {
                return Err(Error::Shape {
                    op: "split_heads",
                    lhs: tx.shape().to_vec(),
                    rhs: vec![batch * seq, heads],
                });
            }
            let hidden = tx.shape()[1];
            let head_dim = hidden / heads;
            let mut out = Tensor::zeros(&[batch * heads, seq, head_dim]);
            for b in 0..batch {
                for h in 0..heads {
                    for r in 0..seq {
                        let src = (b * seq + r) * hidden + h * head_dim;
                        let dst = ((b * heads + h) * seq + r) * head_dim;
                        out.data_mut()[dst..dst + head_dim]
                            .copy_from_slice(&tx.data()[src..src + head_dim]);
                    }
                }
            }
            (out, hidden, head_dim)
        };
        self.record(
            "split_heads",
            value,
            Box::new(move |_values, gout, grads| {
                let gx = slot(grads, x.0, &[batch * seq, hidden]);
                for b in 0..batch {
                    for h in 0..heads {
                        for r in 0..seq {
                            let dst = (b * seq + r) * hidden + h * head_dim;
                            let src = ((b * heads + h) * seq + r) * head_dim;
                            let gsrc = &gout.data()[src..src + head_dim];
                            let gdst = &mut gx.data_mut()[dst..dst + head_dim];
                            for (d, s) in gdst.iter_mut().zip(gsrc) {
                                *d = *d + *s;
                            }
                        }
                    }
                }
            }),
        )
    }

    /// Inverse of [`Graph::split_heads`]: `[batch*heads, seq, head_dim]` back
    /// to `[batch*seq, heads*head_dim]`.
    pub fn merge_heads(&self, x: Var, batch: usize, seq: usize, heads: usize) -> Result<Var> {
        let (value, hidden, head_dim) = {
            let inner = self.inner.borrow();
            let tx = &inner.values[x.0];
            if tx.rank() != 3 || tx.shape()[0] != batch * heads || tx.shape()[1] != seq {
                return Err(Error::Shape {
                    op: "merge_heads",
                    lhs: tx.shape().to_vec(),
                    rhs: vec![batch * heads, seq],
                });
            }
            let head_dim = tx.shape()[2];
            let hidden = heads * head_dim;
            let mut out = Tensor::zeros(&[batch * seq, hidden]);
            for b in 0..batch {
                for h in 0..heads {
                    for r in 0..seq {
                        let src = ((b * heads + h) * seq + r) * head_dim;
                        let dst = (b * seq + r) * hidden + h * head_dim;
                        out.data_mut()[dst..dst + head_dim]
                            .copy_from_slice(&tx.data()[src..src + head_dim]);
                    }
                }
            }
            (out, hidden, head_dim)
        };
        self.record(
            "merge_heads",
            value,
            Box::new(move |_values, gout, grads| {
                let gx = slot(grads, x.0, &[batch * heads, seq, head_dim]);
                for b in 0..batch {
                    for h in 0..heads {
                        for r in 0..seq {
                            let dst = ((b * heads + h) * seq + r) * head_dim;
                            let src = (b * seq + r) * hidden + h * head_dim;
                            let gsrc = &gout.data()[src..src + head_dim];
                            let gdst = &mut gx.data_mut()[dst..dst + head_dim];
                            for (d, s) in gdst.iter_mut().zip(gsrc) {
                                *d = *d + *s;
                            }
                        }
                    }
                }
            }),
        )
    }

    /// Adds `-1e9` to attention scores wherever the key position is padding.
    /// `scores` is `[batch*heads, seq, seq]`; `key_mask` holds one byte per
    /// `[batch, seq]` position, non-zero meaning a real token.
    pub fn mask_scores(&self, scores: Var, key_mask: &[u8], heads: usize) -> Result<Var> {
        let value = {
            let inner = self.inner.borrow();
            let ts = &inner.values[scores.0];
            if ts.rank() != 3 || ts.shape()[1] != ts.shape()[2] {
                return Err(Error::Shape {
                    op: "mask_scores",
                    lhs: ts.shape().to_vec(),
                    rhs: vec![heads],
                });
            }
            let (groups, seq) = (ts.shape()[0], ts.shape()[1]);
            if groups % heads != 0 || key_mask.len() != (groups / heads) * seq {
                return Err(Error::Shape {
                    op: "mask_scores",
                    lhs: ts.shape().to_vec(),
                    rhs: vec![key_mask.len()],
                });
            }
            let neg = T::from_f64(-1e9);
            let mut out = ts.clone();
            for gidx in 0..groups {
                let example = gidx / heads;
                for r in 0..seq {
                    let row = &mut out.data_mut()[(gidx * seq + r) * seq..(gidx * seq + r + 1) * seq];
                    for c in 0..seq {
                        if key_mask[example * seq + c] == 0 {
                            row[c] = row[c] + neg;
                        }
                    }
                }
            }
            out
        };
        let shape = value.shape().to_vec();
        self.record(
            "mask_scores",
            value,
            Box::new(move |_values, gout, grads| {
                slot(grads, scores.0, &shape).accumulate(gout);
            }),
        )
    }

    /// Softmax over the last axis. Each row is shifted by its maximum before
    /// exponentiation so large scores cannot overflow.
    pub fn softmax(&self, x: Var) -> Result<Var> {
        let (value, n) = {
            let inner = self.inner.borrow();
            let tx = &inner.values[x.0];
            if tx.rank() == 0 || *tx.shape().last().unwrap() == 0 {
                return Err(Error::Shape {
                    op: "softmax",
                    lhs: tx.shape().to_vec(),
                    rhs: vec![1],
                });
            }
            let n = *tx.shape().last().unwrap();
            let mut out = tx.clone();
            for row in out.data_mut().chunks_mut(n) {
                softmax_row(row);
            }
            (out, n)
        };
        let shape = value.shape().to_vec();
        let out_idx_hint = {
            let inner = self.inner.borrow();
            inner.values.len()
        };
        self.record(
            "softmax",
            value,
            Box::new(move |values, gout, grads| {
                let y = &values[out_idx_hint];
                let gx = slot(grads, x.0, &shape);
                for ((grow, yrow), gxrow) in gout
                    .data()
                    .chunks(n)
                    .zip(y.data().chunks(n))
                    .zip(gx.data_mut().chunks_mut(n))
                {
                    let mut dot = T::zero();
                    for (g, yv) in grow.iter().zip(yrow) {
                        dot = dot + *g * *yv;
                    }
                    for ((gx_v, g), yv) in gxrow.iter_mut().zip(grow).zip(yrow) {
                        *gx_v = *gx_v + *yv * (*g - dot);
                    }
                }
            }),
        )
    }

    /// Layer normalization over the last axis of `x [rows, width]` with
    /// per-feature `gain` and `bias` (both `[width]`). Uses population
    /// variance with epsilon added inside the square root.
    pub fn layer_norm(&self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let (value, rows, width) = {
            let inner = self.inner.borrow();
            let (tx, tg, tb) = (
                &inner.values[x.0],
                &inner.values[gain.0],
                &inner.values[bias.0],
            );
            if tx.rank() != 2 {
                return Err(Error::Shape {
                    op: "layer_norm",
                    lhs: tx.shape().to_vec(),
                    rhs: vec![2],
                });
            }
            let (rows, width) = (tx.shape()[0], tx.shape()[1]);
            if tg.shape() != [width] || tb.shape() != [width] {
                return Err(Error::Shape {
                    op: "layer_norm",
                    lhs: tg.shape().to_vec(),
                    rhs: vec![width],
                });
            }
            let epst = T::from_f64(eps);
            let inv_w = T::from_f64(1.0 / width as f64);
            let mut out = Tensor::zeros(&[rows, width]);
            for r in 0..rows {
                let xrow = &tx.data()[r * width..(r + 1) * width];
                let mut mean = T::zero();
                for v in xrow {
                    mean = mean + *v;
                }
                mean = mean * inv_w;
                let mut var = T::zero();
                for v in xrow {
                    let d = *v - mean;
                    var = var + d * d;
                }
                var = var * inv_w;
                let inv_std = (var + epst).sqrt().recip();
                let orow = &mut out.data_mut()[r * width..(r + 1) * width];
                for j in 0..width {
                    let xhat = (xrow[j] - mean) * inv_std;
                    orow[j] = xhat * tg.data()[j] + tb.data()[j];
                }
            }
            (out, rows, width)
        };
        self.record(
            "layer_norm",
            value,
            Box::new(move |values, gout, grads| {
                let tx = &values[x.0];
                let tg = &values[gain.0];
                let epst = T::from_f64(eps);
                let inv_w = T::from_f64(1.0 / width as f64);
                let mut gx_acc = Tensor::zeros(&[rows, width]);
                let mut ggain_acc = Tensor::zeros(&[width]);
                let mut gbias_acc = Tensor::zeros(&[width]);
                for r in 0..rows {
                    let xrow = &tx.data()[r * width..(r + 1) * width];
                    let grow = &gout.data()[r * width..(r + 1) * width];
                    let mut mean = T::zero();
                    for v in xrow {
                        mean = mean + *v;
                    }
                    mean = mean * inv_w;
                    let mut var = T::zero();
                    for v in xrow {
                        let d = *v - mean;
                        var = var + d * d;
                    }
                    var = var * inv_w;
                    let inv_std = (var + epst).sqrt().recip();

                    // dxhat = g * gain; dx = (dxhat - mean(dxhat)
                    //        - xhat * mean(dxhat * xhat)) / std
                    let mut mean_dxhat = T::zero();
                    let mut mean_dxhat_xhat = T::zero();
                    for j in 0..width {
                        let xhat = (xrow[j] - mean) * inv_std;
                        let dxhat = grow[j] * tg.data()[j];
                        mean_dxhat = mean_dxhat + dxhat;
                        mean_dxhat_xhat = mean_dxhat_xhat + dxhat * xhat;
                        ggain_acc.data_mut()[j] = ggain_acc.data_mut()[j] + grow[j] * xhat;
                        gbias_acc.data_mut()[j] = gbias_acc.data_mut()[j] + grow[j];
                    }
                    mean_dxhat = mean_dxhat * inv_w;
                    mean_dxhat_xhat = mean_dxhat_xhat * inv_w;
                    let gx_row = &mut gx_acc.data_mut()[r * width..(r + 1) * width];
                    for j in 0..width {
                        let xhat = (xrow[j] - mean) * inv_std;
                        let dxhat = grow[j] * tg.data()[j];
                        gx_row[j] = (dxhat - mean_dxhat - xhat * mean_dxhat_xhat) * inv_std;
                    }
                }
                slot(grads, x.0, &[rows, width]).accumulate(&gx_acc);
                slot(grads, gain.0, &[width]).accumulate(&ggain_acc);
                slot(grads, bias.0, &[width]).accumulate(&gbias_acc);
            }),
        )
    }

    /// GELU activation using the tanh approximation:
    /// `0.5·x·(1 + tanh(√(2/π)·(x + 0.044715·x³)))`.
    pub fn gelu(&self, x: Var) -> Result<Var> {
        const SQRT_2_OVER_PI: f64 = 0.7978845608028654;
        const CUBIC: f64 = 0.044715;
        let value = {
            let inner = self.inner.borrow();
            let tx = &inner.values[x.0];
            let c = T::from_f64(SQRT_2_OVER_PI);
            let a = T::from_f64(CUBIC);
            let half = T::from_f64(0.5);
            let data = tx
                .data()
                .iter()
                .map(|&v| {
                    let u = c * (v + a * v * v * v);
                    half * v * (T::one() + u.tanh())
                })
                .collect();
            Tensor::from_vec(tx.shape(), data)?
        };
        let shape = value.shape().to_vec();
        self.record(
            "gelu",
            value,
            Box::new(move |values, gout, grads| {
                let tx = &values[x.0];
                let c = T::from_f64(SQRT_2_OVER_PI);
                let a = T::from_f64(CUBIC);
                let half = T::from_f64(0.5);
                let three = T::from_f64(3.0);
                let gx = slot(grads, x.0, &shape);
                for ((g, go), &v) in gx.data_mut().iter_mut().zip(gout.data()).zip(tx.data()) {
                    let u = c * (v + a * v * v * v);
                    let t = u.tanh();
                    let sech2 = T::one() - t * t;
                    let du = c * (T::one() + three * a * v * v);
                    let dy = half * (T::one() + t) + half * v * sech2 * du;
                    *g = *g + *go * dy;
                }
            }),
        )
    }

    /// Elementwise hyperbolic tangent.
    pub fn tanh(&self, x: Var) -> Result<Var> {
        let value = {
            let inner = self.inner.borrow();
            let tx = &inner.values[x.0];
            let data = tx.data().iter().map(|v| v.tanh()).collect();
            Tensor::from_vec(tx.shape(), data)?
        };
        let shape = value.shape().to_vec();
        let out_idx_hint = {
            let inner = self.inner.borrow();
            inner.values.len()
        };
        self.record(
            "tanh",
            value,
            Box::new(move |values, gout, grads| {
                let y = &values[out_idx_hint];
                let gx = slot(grads, x.0, &shape);
                for ((g, go), &yv) in gx.data_mut().iter_mut().zip(gout.data()).zip(y.data()) {
                    *g = *g + *go * (T::one() - yv * yv);
                }
            }),
        )
    }

    /// Adds a `[width]` bias vector to every row of `x [rows, width]`.
    pub fn add_row_bias(&self, x: Var, bias: Var) -> Result<Var> {
        let (value, rows, width) = {
            let inner = self.inner.borrow();
            let (tx, tb) = (&inner.values[x.0], &inner.values[bias.0]);
            if tx.rank() != 2 || tb.shape() != [tx.shape()[1]] {
                return Err(Error::Shape {
                    op: "add_row_bias",
                    lhs: tx.shape().to_vec(),
                    rhs: tb.shape().to_vec(),
                });
            }
            let (rows, width) = (tx.shape()[0], tx.shape()[1]);
            let mut out = tx.clone();
            for row in out.data_mut().chunks_mut(width) {
                for (o, b) in row.iter_mut().zip(tb.data()) {
                    *o = *o + *b;
                }
            }
            (out, rows, width)
        };
        self.record(
            "add_row_bias",
            value,
            Box::new(move |_values, gout, grads| {
                slot(grads, x.0, &[rows, width]).accumulate(gout);
                let gb = slot(grads, bias.0, &[width]);
                for row in gout.data().chunks(width) {
                    for (g, v) in gb.data_mut().iter_mut().zip(row) {
                        *g = *g + *v;
                    }
                }
            }),
        )
    }

    /// Inverted dropout: zeroes each element with probability `rate` and
    /// scales survivors by `1/(1-rate)`. The mask is drawn from `rng` when the
    /// op is recorded, so a fixed RNG state gives a fixed mask.
    pub fn dropout(&self, x: Var, rate: f64, rng: &mut ChaCha8Rng) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!(
                "dropout rate {rate} outside [0, 1)"
            )));
        }
        if rate == 0.0 {
            return Ok(x);
        }
        let keep_scale = T::from_f64(1.0 / (1.0 - rate));
        let (value, mask) = {
            let inner = self.inner.borrow();
            let tx = &inner.values[x.0];
            let mask: Vec<bool> = (0..tx.len()).map(|_| rng.gen::<f64>() >= rate).collect();
            let data = tx
                .data()
                .iter()
                .zip(&mask)
                .map(|(&v, &keep)| if keep { v * keep_scale } else { T::zero() })
                .collect();
            (Tensor::from_vec(tx.shape(), data)?, mask)
        };
        let shape = value.shape().to_vec();
        self.record(
            "dropout",
            value,
            Box::new(move |_values, gout, grads| {
                let gx = slot(grads, x.0, &shape);
                for ((g, go), &keep) in gx.data_mut().iter_mut().zip(gout.data()).zip(&mask) {
                    if keep {
                        *g = *g + *go * keep_scale;
                    }
                }
            }),
        )
    }

    /// Mean cross-entropy between `logits [batch, classes]` and integer
    /// labels. Returns a scalar node.
    ///
    /// Backward is the classic `(softmax - onehot) / batch`.
    pub fn cross_entropy(&self, logits: Var, labels: &[usize]) -> Result<Var> {
        let (value, probs, b, c) = {
            let inner = self.inner.borrow();
            let tl = &inner.values[logits.0];
            if tl.rank() != 2 || tl.shape()[0] != labels.len() || labels.is_empty() {
                return Err(Error::Shape {
                    op: "cross_entropy",
                    lhs: tl.shape().to_vec(),
                    rhs: vec![labels.len()],
                });
            }
            let (b, c) = (tl.shape()[0], tl.shape()[1]);
            for &y in labels {
                if y >= c {
                    return Err(Error::Index {
                        op: "cross_entropy",
                        index: y,
                        size: c,
                    });
                }
            }
            let mut probs = tl.data().to_vec();
            let mut loss = T::zero();
            for (row, &y) in probs.chunks_mut(c).zip(labels) {
                softmax_row(row);
                loss = loss - row[y].max(T::min_positive_value()).ln();
            }
            loss = loss / T::from_f64(b as f64);
            (Tensor::scalar(loss), probs, b, c)
        };
        let labels = labels.to_vec();
        self.record(
            "cross_entropy",
            value,
            Box::new(move |_values, gout, grads| {
                let go = gout.item() / T::from_f64(b as f64);
                let gl = slot(grads, logits.0, &[b, c]);
                for (i, (grow, prow)) in gl
                    .data_mut()
                    .chunks_mut(c)
                    .zip(probs.chunks(c))
                    .enumerate()
                {
                    for (j, (g, &p)) in grow.iter_mut().zip(prow).enumerate() {
                        let onehot = if labels[i] == j { T::one() } else { T::zero() };
                        *g = *g + (p - onehot) * go;
                    }
                }
            }),
        )
    }

    /// Sum of all elements, as a scalar node.
    pub fn sum(&self, x: Var) -> Result<Var> {
        let value = {
            let inner = self.inner.borrow();
            let tx = &inner.values[x.0];
            let mut acc = T::zero();
            for v in tx.data() {
                acc = acc + *v;
            }
            Tensor::scalar(acc)
        };
        let shape = self.shape_of(x);
        self.record(
            "sum",
            value,
            Box::new(move |_values, gout, grads| {
                let go = gout.item();
                let gx = slot(grads, x.0, &shape);
                for g in gx.data_mut() {
                    *g = *g + go;
                }
            }),
        )
    }
}

/// In-place numerically stable softmax of one row.
fn softmax_row<T: Real>(row: &mut [T]) {
    let mut max = row[0];
    for v in row.iter() {
        if *v > max {
            max = *v;
        }
    }
    let mut total = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total = total + *v;
    }
    for v in row.iter_mut() {
        *v = *v / total;
    }
}
