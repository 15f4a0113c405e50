use std::borrow::Cow;

use rand::Rng;

use super::{Real, Tensor, TensorError};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    MatMulNT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<T>,
        inv_std: Vec<T>,
    },
    Gelu(Var),
    Softmax(Var),
    Embedding {
        table: Var,
        ids: Vec<usize>,
    },
    Dropout {
        x: Var,
        mask: Vec<T>,
    },
    SliceCols {
        x: Var,
        start: usize,
    },
    ConcatCols(Vec<Var>),
    GatherRows {
        x: Var,
        rows: Vec<usize>,
    },
    CrossEntropySum {
        logits: Var,
        targets: Vec<usize>,
        probs: Vec<T>,
    },
    Sum(Var),
}

struct Node<'a, T: Real> {
    value: Cow<'a, Tensor<T>>,
    op: Op<T>,
    needs_grad: bool,
}

/// Records a forward computation so it can be differentiated.
///
/// Nodes are appended in evaluation order, so creation order is a
/// topological order and the graph cannot contain cycles. Parameters are
/// borrowed, not copied.
pub struct Tape<'a, T: Real> {
    nodes: Vec<Node<'a, T>>,
}

impl<'a, T: Real> Default for Tape<'a, T> {
    fn default() -> Self {
        Self::new()
    }
}

fn shape_err(op: &'static str, detail: String) -> TensorError {
    TensorError::Shape { op, detail }
}

impl<'a, T: Real> Tape<'a, T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A borrowed trainable leaf.
    pub fn param(&mut self, t: &'a Tensor<T>) -> Var {
        self.nodes.push(Node {
            value: Cow::Borrowed(t),
            op: Op::Leaf,
            needs_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// A borrowed leaf that receives no gradient.
    pub fn frozen(&mut self, t: &'a Tensor<T>) -> Var {
        self.nodes.push(Node {
            value: Cow::Borrowed(t),
            op: Op::Leaf,
            needs_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// An owned leaf; `needs_grad` decides whether backward reports its gradient.
    pub fn leaf(&mut self, t: Tensor<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value: Cow::Owned(t),
            op: Op::Leaf,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.leaf(t, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, name: &'static str, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Result<Var, TensorError> {
        if !value.is_finite() {
            return Err(TensorError::NonFinite(name));
        }
        let needs_grad = inputs.iter().any(|&v| self.needs(v));
        self.nodes.push(Node {
            value: Cow::Owned(value),
            op,
            needs_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn dims(&self, v: Var) -> Result<(usize, usize), TensorError> {
        self.value(v).dims2()
    }

    /// `a·b` for `a: [n×k]`, `b: [k×m]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (n, k) = self.dims(a)?;
        let (k2, m) = self.dims(b)?;
        if k != k2 {
            return Err(shape_err("matmul", format!("[{n}x{k}] x [{k2}x{m}]")));
        }
        let mut out = Tensor::zeros(&[n, m]);
        T::gemm(
            n,
            k,
            m,
            T::one(),
            self.value(a).data(),
            k as isize,
            1,
            self.value(b).data(),
            m as isize,
            1,
            T::zero(),
            out.data_mut(),
            m as isize,
            1,
        );
        self.push("matmul", out, Op::MatMul(a, b), &[a, b])
    }

    /// `a·bᵀ` for `a: [n×k]`, `b: [m×k]`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (n, k) = self.dims(a)?;
        let (m, k2) = self.dims(b)?;
        if k != k2 {
            return Err(shape_err("matmul_nt", format!("[{n}x{k}] x [{m}x{k2}]^T")));
        }
        let mut out = Tensor::zeros(&[n, m]);
        T::gemm(
            n,
            k,
            m,
            T::one(),
            self.value(a).data(),
            k as isize,
            1,
            self.value(b).data(),
            1,
            k as isize,
            T::zero(),
            out.data_mut(),
            m as isize,
            1,
        );
        self.push("matmul_nt", out, Op::MatMulNT(a, b), &[a, b])
    }

    fn zip_same(&self, op: &'static str, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Result<Tensor<T>, TensorError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err(op, format!("{:?} vs {:?}", ta.shape(), tb.shape())));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::from_vec(ta.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let out = self.zip_same("add", a, b, |x, y| x + y)?;
        self.push("add", out, Op::Add(a, b), &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let out = self.zip_same("mul", a, b, |x, y| x * y)?;
        self.push("mul", out, Op::Mul(a, b), &[a, b])
    }

    /// Adds a length-`d` row vector to every row of `x: [n×d]`.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var, TensorError> {
        let (n, d) = self.dims(x)?;
        let b = self.value(bias);
        if b.len() != d {
            return Err(shape_err("add_row", format!("[{n}x{d}] + bias of length {}", b.len())));
        }
        let mut out = self.value(x).clone();
        for row in out.data_mut().chunks_mut(d) {
            for (o, &bv) in row.iter_mut().zip(b.data()) {
                *o += bv;
            }
        }
        self.push("add_row", out, Op::AddRow(x, bias), &[x, bias])
    }

    pub fn scale(&mut self, x: Var, s: T) -> Result<Var, TensorError> {
        let mut out = self.value(x).clone();
        out.scale_assign(s);
        self.push("scale", out, Op::Scale(x, s), &[x])
    }

    /// Row-wise layer normalization followed by the affine `gain`, `bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: T) -> Result<Var, TensorError> {
        let (n, d) = self.dims(x)?;
        if self.value(gain).len() != d || self.value(bias).len() != d {
            return Err(shape_err("layer_norm", format!("rows of width {d} vs affine params")));
        }
        let xv = self.value(x).data();
        let g = self.value(gain).data();
        let b = self.value(bias).data();
        let mut xhat = vec![T::zero(); n * d];
        let mut inv_std = vec![T::zero(); n];
        let mut out = Tensor::zeros(&[n, d]);
        let dn = T::of(d as f64);
        for r in 0..n {
            let row = &xv[r * d..(r + 1) * d];
            let mean = row.iter().copied().sum::<T>() / dn;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / dn;
            let inv = T::one() / (var + eps).sqrt();
            inv_std[r] = inv;
            for j in 0..d {
                let h = (row[j] - mean) * inv;
                xhat[r * d + j] = h;
                out.data_mut()[r * d + j] = h * g[j] + b[j];
            }
        }
        self.push(
            "layer_norm",
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
            &[x, gain, bias],
        )
    }

    /// Exact (erf-based) GELU.
    pub fn gelu(&mut self, x: Var) -> Result<Var, TensorError> {
        let half = T::of(0.5);
        let inv_sqrt2 = T::of(std::f64::consts::FRAC_1_SQRT_2);
        let src = self.value(x);
        let data = src
            .data()
            .iter()
            .map(|&v| half * v * (T::one() + (v * inv_sqrt2).erf()))
            .collect();
        let out = Tensor::from_vec(src.shape().to_vec(), data)?;
        self.push("gelu", out, Op::Gelu(x), &[x])
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, x: Var) -> Result<Var, TensorError> {
        let (_, m) = self.dims(x)?;
        self.masked_softmax(x, &vec![true; m])
    }

    /// Row-wise softmax restricted to columns where `keep` is true; the other
    /// columns get probability exactly zero and receive no gradient.
    pub fn masked_softmax(&mut self, x: Var, keep: &[bool]) -> Result<Var, TensorError> {
        let (n, m) = self.dims(x)?;
        if keep.len() != m {
            return Err(shape_err("masked_softmax", format!("mask of {} for width {m}", keep.len())));
        }
        if !keep.iter().any(|&k| k) {
            return Err(shape_err("masked_softmax", "every column masked".into()));
        }
        let mut out = Tensor::zeros(&[n, m]);
        let src = self.value(x).data();
        for r in 0..n {
            let row = &src[r * m..(r + 1) * m];
            let max = row
                .iter()
                .zip(keep)
                .filter(|(_, &k)| k)
                .map(|(&v, _)| v)
                .fold(T::neg_infinity(), T::max);
            let dst = &mut out.data_mut()[r * m..(r + 1) * m];
            let mut total = T::zero();
            for j in 0..m {
                if keep[j] {
                    dst[j] = (row[j] - max).exp();
                    total += dst[j];
                }
            }
            for v in dst.iter_mut() {
                *v = *v / total;
            }
        }
        self.push("softmax", out, Op::Softmax(x), &[x])
    }

    /// Rows of `table` selected by `ids`.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var, TensorError> {
        let (v, d) = self.dims(table)?;
        let src = self.value(table).data();
        let mut out = Tensor::zeros(&[ids.len(), d]);
        for (r, &id) in ids.iter().enumerate() {
            if id >= v {
                return Err(TensorError::Index {
                    op: "embedding",
                    index: id,
                    bound: v,
                });
            }
            out.data_mut()[r * d..(r + 1) * d].copy_from_slice(&src[id * d..(id + 1) * d]);
        }
        self.push(
            "embedding",
            out,
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
            &[table],
        )
    }

    /// Inverted dropout: zeroes each entry with probability `p` and scales the
    /// survivors by `1/(1-p)`. Identity when `p == 0`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, p: f64, rng: &mut R) -> Result<Var, TensorError> {
        if p <= 0.0 {
            return Ok(x);
        }
        let keep_scale = T::of(1.0 / (1.0 - p));
        let src = self.value(x);
        let mask: Vec<T> = (0..src.len())
            .map(|_| if rng.random::<f64>() < p { T::zero() } else { keep_scale })
            .collect();
        let data = src.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let out = Tensor::from_vec(src.shape().to_vec(), data)?;
        self.push("dropout", out, Op::Dropout { x, mask }, &[x])
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var, TensorError> {
        let (n, m) = self.dims(x)?;
        if start + len > m {
            return Err(shape_err("slice_cols", format!("{start}+{len} > {m}")));
        }
        let src = self.value(x).data();
        let mut out = Tensor::zeros(&[n, len]);
        for r in 0..n {
            out.data_mut()[r * len..(r + 1) * len].copy_from_slice(&src[r * m + start..r * m + start + len]);
        }
        self.push("slice_cols", out, Op::SliceCols { x, start }, &[x])
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let dims: Vec<(usize, usize)> = parts.iter().map(|&p| self.dims(p)).collect::<Result<_, _>>()?;
        let n = dims.first().map(|d| d.0).unwrap_or(0);
        if dims.iter().any(|d| d.0 != n) {
            return Err(shape_err("concat_cols", format!("row counts {dims:?}")));
        }
        let m: usize = dims.iter().map(|d| d.1).sum();
        let mut out = Tensor::zeros(&[n, m]);
        let mut offset = 0;
        for (&p, &(_, w)) in parts.iter().zip(&dims) {
            let src = self.value(p).data();
            for r in 0..n {
                out.data_mut()[r * m + offset..r * m + offset + w].copy_from_slice(&src[r * w..(r + 1) * w]);
            }
            offset += w;
        }
        self.push("concat_cols", out, Op::ConcatCols(parts.to_vec()), parts)
    }

    pub fn gather_rows(&mut self, x: Var, rows: &[usize]) -> Result<Var, TensorError> {
        let (n, d) = self.dims(x)?;
        let src = self.value(x).data();
        let mut out = Tensor::zeros(&[rows.len(), d]);
        for (i, &r) in rows.iter().enumerate() {
            if r >= n {
                return Err(TensorError::Index {
                    op: "gather_rows",
                    index: r,
                    bound: n,
                });
            }
            out.data_mut()[i * d..(i + 1) * d].copy_from_slice(&src[r * d..(r + 1) * d]);
        }
        self.push(
            "gather_rows",
            out,
            Op::GatherRows {
                x,
                rows: rows.to_vec(),
            },
            &[x],
        )
    }

    /// `Σ_r −log softmax(logits[r])[targets[r]]` as a scalar.
    pub fn cross_entropy_sum(&mut self, logits: Var, targets: &[usize]) -> Result<Var, TensorError> {
        let (n, v) = self.dims(logits)?;
        if targets.len() != n {
            return Err(shape_err("cross_entropy", format!("{n} rows, {} targets", targets.len())));
        }
        let src = self.value(logits).data();
        let mut probs = src.to_vec();
        let mut total = T::zero();
        for (r, &t) in targets.iter().enumerate() {
            if t >= v {
                return Err(TensorError::Index {
                    op: "cross_entropy",
                    index: t,
                    bound: v,
                });
            }
            total -= super::log_softmax_at(&src[r * v..(r + 1) * v], t);
            super::softmax_in_place(&mut probs[r * v..(r + 1) * v]);
        }
        self.push(
            "cross_entropy",
            Tensor::scalar(total),
            Op::CrossEntropySum {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            &[logits],
        )
    }

    /// Mean cross-entropy over rows.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var, TensorError> {
        let total = self.cross_entropy_sum(logits, targets)?;
        let n = targets.len().max(1);
        self.scale(total, T::one() / T::of(n as f64))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var, TensorError> {
        let s = self.value(x).sum();
        self.push("sum", Tensor::scalar(s), Op::Sum(x), &[x])
    }

    /// Reverse-mode sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>, TensorError> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(TensorError::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(lv.shape(), T::one()));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            if matches!(node.op, Op::Leaf) {
                grads[i] = Some(g);
            } else {
                self.propagate(&node.op, &node.value, &g, &mut grads);
            }
        }
        Ok(Gradients { grads })
    }

    fn acc<'g>(&self, grads: &'g mut [Option<Tensor<T>>], v: Var) -> Option<&'g mut Tensor<T>> {
        if !self.needs(v) {
            return None;
        }
        Some(grads[v.0].get_or_insert_with(|| Tensor::zeros(self.value(v).shape())))
    }

    fn propagate(&self, op: &Op<T>, out: &Tensor<T>, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let gd = g.data();
        match op {
            Op::Leaf => {}
            &Op::MatMul(a, b) => {
                let (n, k) = self.dims(a).unwrap();
                let m = self.dims(b).unwrap().1;
                if let Some(da) = self.acc(grads, a) {
                    // da += g·bᵀ
                    T::gemm(
                        n,
                        m,
                        k,
                        T::one(),
                        gd,
                        m as isize,
                        1,
                        self.value(b).data(),
                        1,
                        m as isize,
                        T::one(),
                        da.data_mut(),
                        k as isize,
                        1,
                    );
                }
                if let Some(db) = self.acc(grads, b) {
                    // db += aᵀ·g
                    T::gemm(
                        k,
                        n,
                        m,
                        T::one(),
                        self.value(a).data(),
                        1,
                        k as isize,
                        gd,
                        m as isize,
                        1,
                        T::one(),
                        db.data_mut(),
                        m as isize,
                        1,
                    );
                }
            }
            &Op::MatMulNT(a, b) => {
                let (n, k) = self.dims(a).unwrap();
                let m = self.dims(b).unwrap().0;
                if let Some(da) = self.acc(grads, a) {
                    // da += g·b
                    T::gemm(
                        n,
                        m,
                        k,
                        T::one(),
                        gd,
                        m as isize,
                        1,
                        self.value(b).data(),
                        k as isize,
                        1,
                        T::one(),
                        da.data_mut(),
                        k as isize,
                        1,
                    );
                }
                if let Some(db) = self.acc(grads, b) {
                    // db += gᵀ·a
                    T::gemm(
                        m,
                        n,
                        k,
                        T::one(),
                        gd,
                        1,
                        m as isize,
                        self.value(a).data(),
                        k as isize,
                        1,
                        T::one(),
                        db.data_mut(),
                        k as isize,
                        1,
                    );
                }
            }
            &Op::Add(a, b) => {
                if let Some(da) = self.acc(grads, a) {
                    da.add_assign(g);
                }
                if let Some(db) = self.acc(grads, b) {
                    db.add_assign(g);
                }
            }
            &Op::Mul(a, b) => {
                let av = self.value(a).data();
                let bv = self.value(b).data();
                if let Some(da) = self.acc(grads, a) {
                    for ((d, &gv), &y) in da.data_mut().iter_mut().zip(gd).zip(bv) {
                        *d += gv * y;
                    }
                }
                if let Some(db) = self.acc(grads, b) {
                    for ((d, &gv), &x) in db.data_mut().iter_mut().zip(gd).zip(av) {
                        *d += gv * x;
                    }
                }
            }
            &Op::AddRow(x, bias) => {
                if let Some(dx) = self.acc(grads, x) {
                    dx.add_assign(g);
                }
                if let Some(db) = self.acc(grads, bias) {
                    let d = db.len();
                    for row in gd.chunks(d) {
                        for (o, &v) in db.data_mut().iter_mut().zip(row) {
                            *o += v;
                        }
                    }
                }
            }
            &Op::Scale(x, s) => {
                if let Some(dx) = self.acc(grads, x) {
                    for (o, &v) in dx.data_mut().iter_mut().zip(gd) {
                        *o += s * v;
                    }
                }
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            } => {
                let d = self.value(*gain).len();
                let gv = self.value(*gain).data();
                if let Some(dg) = self.acc(grads, *gain) {
                    for (row, hrow) in gd.chunks(d).zip(xhat.chunks(d)) {
                        for j in 0..d {
                            dg.data_mut()[j] += row[j] * hrow[j];
                        }
                    }
                }
                if let Some(db) = self.acc(grads, *bias) {
                    for row in gd.chunks(d) {
                        for (o, &v) in db.data_mut().iter_mut().zip(row) {
                            *o += v;
                        }
                    }
                }
                if let Some(dx) = self.acc(grads, *x) {
                    let dn = T::of(d as f64);
                    let mut dxhat = vec![T::zero(); d];
                    for (r, (row, hrow)) in gd.chunks(d).zip(xhat.chunks(d)).enumerate() {
                        let mut s1 = T::zero();
                        let mut s2 = T::zero();
                        for j in 0..d {
                            dxhat[j] = row[j] * gv[j];
                            s1 += dxhat[j];
                            s2 += dxhat[j] * hrow[j];
                        }
                        let scale = inv_std[r] / dn;
                        let out = &mut dx.data_mut()[r * d..(r + 1) * d];
                        for j in 0..d {
                            out[j] += scale * (dn * dxhat[j] - s1 - hrow[j] * s2);
                        }
                    }
                }
            }
            &Op::Gelu(x) => {
                let xv = self.value(x).data();
                if let Some(dx) = self.acc(grads, x) {
                    let half = T::of(0.5);
                    let inv_sqrt2 = T::of(std::f64::consts::FRAC_1_SQRT_2);
                    let inv_sqrt_2pi = T::of(0.5 * std::f64::consts::FRAC_2_SQRT_PI * std::f64::consts::FRAC_1_SQRT_2);
                    for ((o, &gv), &v) in dx.data_mut().iter_mut().zip(gd).zip(xv) {
                        let cdf = half * (T::one() + (v * inv_sqrt2).erf());
                        let pdf = inv_sqrt_2pi * (-half * v * v).exp();
                        *o += gv * (cdf + v * pdf);
                    }
                }
            }
            &Op::Softmax(x) => {
                let m = self.dims(x).unwrap().1;
                let out = out.data();
                if let Some(dx) = self.acc(grads, x) {
                    for ((orow, grow), yrow) in dx.data_mut().chunks_mut(m).zip(gd.chunks(m)).zip(out.chunks(m)) {
                        let dot: T = grow.iter().zip(yrow).map(|(&a, &b)| a * b).sum();
                        for j in 0..m {
                            orow[j] += yrow[j] * (grow[j] - dot);
                        }
                    }
                }
            }
            Op::Embedding { table, ids } => {
                if let Some(dt) = self.acc(grads, *table) {
                    let d = dt.dims2().unwrap().1;
                    for (r, &id) in ids.iter().enumerate() {
                        let src = &gd[r * d..(r + 1) * d];
                        for (o, &v) in dt.data_mut()[id * d..(id + 1) * d].iter_mut().zip(src) {
                            *o += v;
                        }
                    }
                }
            }
            Op::Dropout { x, mask } => {
                if let Some(dx) = self.acc(grads, *x) {
                    for ((o, &gv), &m) in dx.data_mut().iter_mut().zip(gd).zip(mask) {
                        *o += gv * m;
                    }
                }
            }
            &Op::SliceCols { x, start } => {
                let (n, m) = self.dims(x).unwrap();
                let w = gd.len() / n.max(1);
                if let Some(dx) = self.acc(grads, x) {
                    for r in 0..n {
                        for j in 0..w {
                            dx.data_mut()[r * m + start + j] += gd[r * w + j];
                        }
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let total = g.dims2().unwrap().1;
                let mut offset = 0;
                for &p in parts {
                    let (n, w) = self.dims(p).unwrap();
                    if let Some(dp) = self.acc(grads, p) {
                        for r in 0..n {
                            for j in 0..w {
                                dp.data_mut()[r * w + j] += gd[r * total + offset + j];
                            }
                        }
                    }
                    offset += w;
                }
            }
            Op::GatherRows { x, rows } => {
                if let Some(dx) = self.acc(grads, *x) {
                    let d = dx.dims2().unwrap().1;
                    for (i, &r) in rows.iter().enumerate() {
                        for j in 0..d {
                            dx.data_mut()[r * d + j] += gd[i * d + j];
                        }
                    }
                }
            }
            Op::CrossEntropySum { logits, targets, probs } => {
                let scale = gd[0];
                if let Some(dl) = self.acc(grads, *logits) {
                    let v = dl.dims2().unwrap().1;
                    for (r, &t) in targets.iter().enumerate() {
                        let out = &mut dl.data_mut()[r * v..(r + 1) * v];
                        for j in 0..v {
                            let p = probs[r * v + j];
                            out[j] += scale * if j == t { p - T::one() } else { p };
                        }
                    }
                }
            }
            &Op::Sum(x) => {
                let s = gd[0];
                if let Some(dx) = self.acc(grads, x) {
                    for o in dx.data_mut() {
                        *o += s;
                    }
                }
            }
        }
    }
}

/// Gradients of a backward pass, indexed by leaf [`Var`].
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}
