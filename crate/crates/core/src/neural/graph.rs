//! Tape of matrix operations with reverse-mode gradient propagation.
//!
//! A [`Graph`] borrows a [`ParamStore`]; parameter nodes read values straight
//! from the store, so large embedding tables are never copied onto the tape.
//! Every op stores its output value plus whatever it needs for the backward
//! pass. [`Graph::backward`] walks the tape in reverse from a scalar node and
//! returns gradients for every parameter.

use super::layers::{layer_norm_row, sigmoid, softmax_row};
use super::tensor::{Gradients, ParamId, ParamStore, Real, Tensor};

/// Handle to a node on the tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Relu(Var),
    Sigmoid(Var),
    SoftmaxRows(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<T>,
        inv_std: Vec<T>,
    },
    Gather {
        table: Var,
        ids: Vec<usize>,
    },
    SliceRows {
        x: Var,
        start: usize,
    },
    SliceCols {
        x: Var,
        start: usize,
    },
    ConcatCols(Vec<Var>),
    MulConst {
        x: Var,
        factors: Vec<T>,
    },
    Unfold {
        x: Var,
        width: usize,
    },
    PadRows(Var),
    MaxRows {
        x: Var,
        argmax: Vec<usize>,
    },
    ScaledNoise {
        x: Var,
        direction: Vec<T>,
        rho: T,
        norm: T,
    },
    BceLogits {
        logits: Var,
        targets: Vec<T>,
        probs: Vec<T>,
    },
    Sum(Vec<Var>),
}

enum Node<T> {
    Param(ParamId),
    Value { value: Tensor<T>, op: Op<T> },
}

/// Probability clamp used by the binary cross-entropy.
pub const PROB_CLAMP: f64 = 1e-7;

pub struct Graph<'p, T: Real> {
    params: &'p ParamStore<T>,
    nodes: Vec<Node<T>>,
}

fn tensor<T: Real>(rows: usize, cols: usize, data: Vec<T>) -> Tensor<T> {
    Tensor::from_vec(&[rows, cols], data).expect("op output shape")
}

impl<'p, T: Real> Graph<'p, T> {
    pub fn new(params: &'p ParamStore<T>) -> Self {
        Graph {
            params,
            nodes: Vec::new(),
        }
    }

    pub fn params(&self) -> &'p ParamStore<T> {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        match &self.nodes[v.0] {
            Node::Param(id) => self.params.get(*id),
            Node::Value { value, .. } => value,
        }
    }

    /// Scalar value of a `[1, 1]` node.
    pub fn scalar(&self, v: Var) -> T {
        let t = self.value(v);
        assert_eq!(t.len(), 1, "scalar() on a non-scalar node");
        t.data()[0]
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        self.nodes.push(Node::Value { value, op });
        Var(self.nodes.len() - 1)
    }

    fn dims(&self, v: Var) -> (usize, usize) {
        let t = self.value(v);
        (t.rows(), t.cols())
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.nodes.push(Node::Param(id));
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf)
    }

    /// `a[m,k] · b[k,n]`
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (m, k) = self.dims(a);
        let (k2, n) = self.dims(b);
        assert_eq!(k, k2, "matmul inner dimensions {k} vs {k2}");
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            let orow = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let x = av[i * k + p];
                if x == T::zero() {
                    continue;
                }
                let brow = &bv[p * n..(p + 1) * n];
                for (o, &bb) in orow.iter_mut().zip(brow) {
                    *o = *o + x * bb;
                }
            }
        }
        self.push(tensor(m, n, out), Op::MatMul(a, b))
    }

    /// `a[m,k] · b[n,k]ᵀ`
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let (m, k) = self.dims(a);
        let (n, k2) = self.dims(b);
        assert_eq!(k, k2, "matmul_t inner dimensions {k} vs {k2}");
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            let arow = &av[i * k..(i + 1) * k];
            for j in 0..n {
                let brow = &bv[j * k..(j + 1) * k];
                out[i * n + j] = arow.iter().zip(brow).fold(T::zero(), |s, (&x, &y)| s + x * y);
            }
        }
        self.push(tensor(m, n, out), Op::MatMulT(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.dims(a), self.dims(b), "add shapes");
        let (m, n) = self.dims(a);
        let out = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x + y)
            .collect();
        self.push(tensor(m, n, out), Op::Add(a, b))
    }

    /// Adds a `[1, n]` row to every row of `x[m, n]`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Var {
        let (m, n) = self.dims(x);
        assert_eq!(self.value(row).len(), n, "add_row width");
        let r = self.value(row).data();
        let out = self
            .value(x)
            .data()
            .chunks(n)
            .flat_map(|xs| xs.iter().zip(r).map(|(&a, &b)| a + b))
            .collect();
        self.push(tensor(m, n, out), Op::AddRow(x, row))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.dims(a), self.dims(b), "mul shapes");
        let (m, n) = self.dims(a);
        let out = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x * y)
            .collect();
        self.push(tensor(m, n, out), Op::Mul(a, b))
    }

    pub fn scale(&mut self, x: Var, factor: T) -> Var {
        let (m, n) = self.dims(x);
        let out = self.value(x).data().iter().map(|&v| v * factor).collect();
        self.push(tensor(m, n, out), Op::Scale(x, factor))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let (m, n) = self.dims(x);
        let out = self.value(x).data().iter().map(|&v| v.max(T::zero())).collect();
        self.push(tensor(m, n, out), Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let (m, n) = self.dims(x);
        let out = self.value(x).data().iter().map(|&v| sigmoid(v)).collect();
        self.push(tensor(m, n, out), Op::Sigmoid(x))
    }

    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let (m, n) = self.dims(x);
        let mut out = vec![T::zero(); m * n];
        for (src, dst) in self.value(x).data().chunks(n).zip(out.chunks_mut(n)) {
            softmax_row(src, dst);
        }
        self.push(tensor(m, n, out), Op::SoftmaxRows(x))
    }

    /// Row-wise layer normalization with `[1, n]` gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: T) -> Var {
        let (m, n) = self.dims(x);
        assert_eq!(self.value(gain).len(), n, "layer_norm gain width");
        assert_eq!(self.value(bias).len(), n, "layer_norm bias width");
        let (gv, bv) = (self.value(gain).data(), self.value(bias).data());
        let mut out = vec![T::zero(); m * n];
        let mut xhat = vec![T::zero(); m * n];
        let mut inv_std = Vec::with_capacity(m);
        for (i, src) in self.value(x).data().chunks(n).enumerate() {
            let range = i * n..(i + 1) * n;
            inv_std.push(layer_norm_row(
                src,
                gv,
                bv,
                eps,
                &mut xhat[range.clone()],
                &mut out[range],
            ));
        }
        self.push(
            tensor(m, n, out),
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
        )
    }

    /// Rows of `table` selected by `ids`.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Var {
        let (rows, n) = self.dims(table);
        let tv = self.value(table).data();
        let mut out = Vec::with_capacity(ids.len() * n);
        for &id in ids {
            assert!(id < rows, "gather index {id} out of {rows}");
            out.extend_from_slice(&tv[id * n..(id + 1) * n]);
        }
        self.push(
            tensor(ids.len(), n, out),
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
        )
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Var {
        let (m, n) = self.dims(x);
        assert!(len > 0 && start + len <= m, "slice_rows {start}+{len} of {m}");
        let out = self.value(x).data()[start * n..(start + len) * n].to_vec();
        self.push(tensor(len, n, out), Op::SliceRows { x, start })
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let (m, n) = self.dims(x);
        assert!(len > 0 && start + len <= n, "slice_cols {start}+{len} of {n}");
        let out = self
            .value(x)
            .data()
            .chunks(n)
            .flat_map(|r| r[start..start + len].iter().copied())
            .collect();
        self.push(tensor(m, len, out), Op::SliceCols { x, start })
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_cols of nothing");
        let m = self.dims(parts[0]).0;
        let widths: Vec<usize> = parts.iter().map(|&p| self.dims(p).1).collect();
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(m * total);
        for i in 0..m {
            for &p in parts {
                assert_eq!(self.dims(p).0, m, "concat_cols row counts");
                out.extend_from_slice(self.value(p).row(i));
            }
        }
        self.push(tensor(m, total, out), Op::ConcatCols(parts.to_vec()))
    }

    /// Elementwise product with fixed factors (a frozen dropout mask).
    pub fn mul_const(&mut self, x: Var, factors: Vec<T>) -> Var {
        let (m, n) = self.dims(x);
        assert_eq!(factors.len(), m * n, "mul_const length");
        let out = self
            .value(x)
            .data()
            .iter()
            .zip(&factors)
            .map(|(&v, &f)| v * f)
            .collect();
        self.push(tensor(m, n, out), Op::MulConst { x, factors })
    }

    /// Sliding windows of `width` consecutive rows, flattened:
    /// `x[L, d] -> [L - width + 1, width * d]`.
    pub fn unfold(&mut self, x: Var, width: usize) -> Var {
        let (l, d) = self.dims(x);
        assert!(width >= 1 && width <= l, "unfold width {width} over {l} rows");
        let xv = self.value(x).data();
        let rows = l - width + 1;
        let mut out = Vec::with_capacity(rows * width * d);
        for t in 0..rows {
            out.extend_from_slice(&xv[t * d..(t + width) * d]);
        }
        self.push(tensor(rows, width * d, out), Op::Unfold { x, width })
    }

    /// Appends zero rows until `x` has at least `rows` rows.
    pub fn pad_rows(&mut self, x: Var, rows: usize) -> Var {
        let (m, n) = self.dims(x);
        let total = m.max(rows);
        let mut out = self.value(x).data().to_vec();
        out.resize(total * n, T::zero());
        self.push(tensor(total, n, out), Op::PadRows(x))
    }

    /// Column-wise maximum over rows: `[L, n] -> [1, n]`.
    pub fn max_rows(&mut self, x: Var) -> Var {
        let (m, n) = self.dims(x);
        let xv = self.value(x).data();
        let mut argmax = vec![0usize; n];
        let mut out = xv[..n].to_vec();
        for i in 1..m {
            for j in 0..n {
                if xv[i * n + j] > out[j] {
                    out[j] = xv[i * n + j];
                    argmax[j] = i;
                }
            }
        }
        self.push(tensor(1, n, out), Op::MaxRows { x, argmax })
    }

    /// `x + rho * ‖x‖ * direction` for a unit `direction`. The gradient flows
    /// through `‖x‖` as well as the identity path.
    pub fn scaled_noise(&mut self, x: Var, direction: Vec<T>, rho: T) -> Var {
        let (m, n) = self.dims(x);
        assert_eq!(direction.len(), m * n, "noise direction length");
        let xv = self.value(x).data();
        let norm = xv.iter().fold(T::zero(), |a, &v| a + v * v).sqrt();
        let out = xv
            .iter()
            .zip(&direction)
            .map(|(&v, &u)| v + rho * norm * u)
            .collect();
        self.push(
            tensor(m, n, out),
            Op::ScaledNoise {
                x,
                direction,
                rho,
                norm,
            },
        )
    }

    /// Sum over positions of the clamped binary cross-entropy of
    /// `sigmoid(logits)` against `targets`; returns a `[1, 1]` node.
    pub fn bce_with_logits(&mut self, logits: Var, targets: Vec<T>) -> Var {
        let lv = self.value(logits).data();
        assert_eq!(lv.len(), targets.len(), "bce target length");
        let lo = T::lit(PROB_CLAMP);
        let hi = T::one() - lo;
        let probs: Vec<T> = lv.iter().map(|&z| sigmoid(z)).collect();
        let loss = probs.iter().zip(&targets).fold(T::zero(), |acc, (&p, &t)| {
            let pc = p.max(lo).min(hi);
            acc - (t * pc.ln() + (T::one() - t) * (T::one() - pc).ln())
        });
        self.push(
            tensor(1, 1, vec![loss]),
            Op::BceLogits {
                logits,
                targets,
                probs,
            },
        )
    }

    /// Sum of `[1, 1]` nodes.
    pub fn sum(&mut self, parts: &[Var]) -> Var {
        let total = parts.iter().fold(T::zero(), |a, &p| a + self.scalar(p));
        self.push(tensor(1, 1, vec![total]), Op::Sum(parts.to_vec()))
    }

    fn accumulate(
        &self,
        grads: &mut [Option<Tensor<T>>],
        pgrads: &mut Gradients<T>,
        v: Var,
        f: impl FnOnce(&mut [T]),
    ) {
        match &self.nodes[v.0] {
            Node::Param(id) => f(pgrads.get_mut(*id).data_mut()),
            Node::Value { value, op } => {
                if matches!(op, Op::Leaf) {
                    return;
                }
                let slot = grads[v.0].get_or_insert_with(|| Tensor::zeros(value.shape()));
                f(slot.data_mut())
            }
        }
    }

    /// Reverse pass from the scalar node `loss`.
    pub fn backward(&self, loss: Var) -> Gradients<T> {
        assert_eq!(self.value(loss).len(), 1, "backward from a non-scalar node");
        let mut pgrads = Gradients::zeros_like(self.params);
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(tensor(1, 1, vec![T::one()]));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let Node::Value { value: out, op } = &self.nodes[i] else {
                continue;
            };
            let g = g.data();
            let (m, n) = (out.rows(), out.cols());
            match op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let k = self.dims(*a).1;
                    let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                    self.accumulate(&mut grads, &mut pgrads, *a, |ga| {
                        for r in 0..m {
                            for p in 0..k {
                                let brow = &bv[p * n..(p + 1) * n];
                                let s = g[r * n..(r + 1) * n]
                                    .iter()
                                    .zip(brow)
                                    .fold(T::zero(), |s, (&x, &y)| s + x * y);
                                ga[r * k + p] = ga[r * k + p] + s;
                            }
                        }
                    });
                    self.accumulate(&mut grads, &mut pgrads, *b, |gb| {
                        for r in 0..m {
                            let grow = &g[r * n..(r + 1) * n];
                            for p in 0..k {
                                let x = av[r * k + p];
                                if x == T::zero() {
                                    continue;
                                }
                                for (o, &gg) in gb[p * n..(p + 1) * n].iter_mut().zip(grow) {
                                    *o = *o + x * gg;
                                }
                            }
                        }
                    });
                }
                Op::MatMulT(a, b) => {
                    let k = self.dims(*a).1;
                    let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                    self.accumulate(&mut grads, &mut pgrads, *a, |ga| {
                        for r in 0..m {
                            for j in 0..n {
                                let gg = g[r * n + j];
                                if gg == T::zero() {
                                    continue;
                                }
                                for (o, &y) in ga[r * k..(r + 1) * k].iter_mut().zip(&bv[j * k..(j + 1) * k]) {
                                    *o = *o + gg * y;
                                }
                            }
                        }
                    });
                    self.accumulate(&mut grads, &mut pgrads, *b, |gb| {
                        for r in 0..m {
                            for j in 0..n {
                                let gg = g[r * n + j];
                                if gg == T::zero() {
                                    continue;
                                }
                                for (o, &x) in gb[j * k..(j + 1) * k].iter_mut().zip(&av[r * k..(r + 1) * k]) {
                                    *o = *o + gg * x;
                                }
                            }
                        }
                    });
                }
                Op::Add(a, b) => {
                    for v in [*a, *b] {
                        self.accumulate(&mut grads, &mut pgrads, v, |ga| add_into(ga, g));
                    }
                }
                Op::AddRow(x, row) => {
                    self.accumulate(&mut grads, &mut pgrads, *x, |gx| add_into(gx, g));
                    self.accumulate(&mut grads, &mut pgrads, *row, |gr| {
                        for grow in g.chunks(n) {
                            add_into(gr, grow);
                        }
                    });
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                    self.accumulate(&mut grads, &mut pgrads, *a, |ga| {
                        for ((o, &gg), &y) in ga.iter_mut().zip(g).zip(bv) {
                            *o = *o + gg * y;
                        }
                    });
                    self.accumulate(&mut grads, &mut pgrads, *b, |gb| {
                        for ((o, &gg), &x) in gb.iter_mut().zip(g).zip(av) {
                            *o = *o + gg * x;
                        }
                    });
                }
                Op::Scale(x, factor) => {
                    self.accumulate(&mut grads, &mut pgrads, *x, |gx| {
                        for (o, &gg) in gx.iter_mut().zip(g) {
                            *o = *o + gg * *factor;
                        }
                    });
                }
                Op::Relu(x) => {
                    let ov = out.data();
                    self.accumulate(&mut grads, &mut pgrads, *x, |gx| {
                        for ((o, &gg), &y) in gx.iter_mut().zip(g).zip(ov) {
                            if y > T::zero() {
                                *o = *o + gg;
                            }
                        }
                    });
                }
                Op::Sigmoid(x) => {
                    let ov = out.data();
                    self.accumulate(&mut grads, &mut pgrads, *x, |gx| {
                        for ((o, &gg), &y) in gx.iter_mut().zip(g).zip(ov) {
                            *o = *o + gg * y * (T::one() - y);
                        }
                    });
                }
                Op::SoftmaxRows(x) => {
                    let ov = out.data();
                    self.accumulate(&mut grads, &mut pgrads, *x, |gx| {
                        for r in 0..m {
                            let range = r * n..(r + 1) * n;
                            let (yr, gr) = (&ov[range.clone()], &g[range.clone()]);
                            let dot = yr.iter().zip(gr).fold(T::zero(), |s, (&y, &gg)| s + y * gg);
                            for ((o, &y), &gg) in gx[range].iter_mut().zip(yr).zip(gr) {
                                *o = *o + y * (gg - dot);
                            }
                        }
                    });
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    xhat,
                    inv_std,
                } => {
                    let gv = self.value(*gain).data();
                    let nn = T::lit(n as f64);
                    self.accumulate(&mut grads, &mut pgrads, *gain, |gg| {
                        for r in 0..m {
                            for j in 0..n {
                                gg[j] = gg[j] + g[r * n + j] * xhat[r * n + j];
                            }
                        }
                    });
                    self.accumulate(&mut grads, &mut pgrads, *bias, |gb| {
                        for grow in g.chunks(n) {
                            add_into(gb, grow);
                        }
                    });
                    self.accumulate(&mut grads, &mut pgrads, *x, |gx| {
                        let mut dxhat = vec![T::zero(); n];
                        for r in 0..m {
                            let base = r * n;
                            let mut mean_d = T::zero();
                            let mut mean_dx = T::zero();
                            for j in 0..n {
                                dxhat[j] = g[base + j] * gv[j];
                                mean_d = mean_d + dxhat[j];
                                mean_dx = mean_dx + dxhat[j] * xhat[base + j];
                            }
                            mean_d = mean_d / nn;
                            mean_dx = mean_dx / nn;
                            for j in 0..n {
                                gx[base + j] = gx[base + j]
                                    + inv_std[r] * (dxhat[j] - mean_d - xhat[base + j] * mean_dx);
                            }
                        }
                    });
                }
                Op::Gather { table, ids } => {
                    self.accumulate(&mut grads, &mut pgrads, *table, |gt| {
                        for (r, &id) in ids.iter().enumerate() {
                            add_into(&mut gt[id * n..(id + 1) * n], &g[r * n..(r + 1) * n]);
                        }
                    });
                }
                Op::SliceRows { x, start } => {
                    self.accumulate(&mut grads, &mut pgrads, *x, |gx| {
                        add_into(&mut gx[start * n..(start + m) * n], g);
                    });
                }
                Op::SliceCols { x, start } => {
                    let full = self.dims(*x).1;
                    self.accumulate(&mut grads, &mut pgrads, *x, |gx| {
                        for r in 0..m {
                            add_into(
                                &mut gx[r * full + start..r * full + start + n],
                                &g[r * n..(r + 1) * n],
                            );
                        }
                    });
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let w = self.dims(p).1;
                        self.accumulate(&mut grads, &mut pgrads, p, |gp| {
                            for r in 0..m {
                                add_into(
                                    &mut gp[r * w..(r + 1) * w],
                                    &g[r * n + offset..r * n + offset + w],
                                );
                            }
                        });
                        offset += w;
                    }
                }
                Op::MulConst { x, factors } => {
                    self.accumulate(&mut grads, &mut pgrads, *x, |gx| {
                        for ((o, &gg), &f) in gx.iter_mut().zip(g).zip(factors) {
                            *o = *o + gg * f;
                        }
                    });
                }
                Op::Unfold { x, width } => {
                    let d = self.dims(*x).1;
                    self.accumulate(&mut grads, &mut pgrads, *x, |gx| {
                        for t in 0..m {
                            add_into(&mut gx[t * d..(t + width) * d], &g[t * n..(t + 1) * n]);
                        }
                    });
                }
                Op::PadRows(x) => {
                    let len = self.value(*x).len();
                    self.accumulate(&mut grads, &mut pgrads, *x, |gx| add_into(gx, &g[..len]));
                }
                Op::MaxRows { x, argmax } => {
                    self.accumulate(&mut grads, &mut pgrads, *x, |gx| {
                        for (j, &r) in argmax.iter().enumerate() {
                            gx[r * n + j] = gx[r * n + j] + g[j];
                        }
                    });
                }
                Op::ScaledNoise {
                    x,
                    direction,
                    rho,
                    norm,
                } => {
                    let xv = self.value(*x).data();
                    let gu = g.iter().zip(direction).fold(T::zero(), |s, (&a, &b)| s + a * b);
                    self.accumulate(&mut grads, &mut pgrads, *x, |gx| {
                        for ((o, &gg), &v) in gx.iter_mut().zip(g).zip(xv) {
                            let through_norm = if *norm > T::zero() {
                                *rho * gu * v / *norm
                            } else {
                                T::zero()
                            };
                            *o = *o + gg + through_norm;
                        }
                    });
                }
                Op::BceLogits {
                    logits,
                    targets,
                    probs,
                } => {
                    let lo = T::lit(PROB_CLAMP);
                    let hi = T::one() - lo;
                    let scale = g[0];
                    self.accumulate(&mut grads, &mut pgrads, *logits, |gl| {
                        for ((o, &p), &t) in gl.iter_mut().zip(probs).zip(targets) {
                            if p > lo && p < hi {
                                *o = *o + scale * (p - t);
                            }
                        }
                    });
                }
                Op::Sum(parts) => {
                    for &p in parts {
                        self.accumulate(&mut grads, &mut pgrads, p, |gp| gp[0] = gp[0] + g[0]);
                    }
                }
            }
        }
        pgrads
    }
}

fn add_into<T: Real>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = *d + s;
    }
}
