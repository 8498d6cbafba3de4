//! Reverse-mode automatic differentiation over [`Matrix`] values.
//!
//! A [`Tape`] records every operation of a forward pass. [`Tape::backward`]
//! walks the record in reverse and returns the gradient of a scalar output
//! with respect to every recorded value. Shapes are checked with assertions:
//! callers validate user-facing shapes before building a graph.

use std::sync::Arc;

use crate::tensor::{gemm_nt_acc, gemm_tn_acc, Matrix};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Routing of input rows onto output rows with a fixed coefficient per row.
///
/// Used both for weighted sums (`scatter`) and for grouped softmax, where the
/// groups are the rows sharing a target.
#[derive(Clone, Debug)]
pub struct ScatterPlan {
    n_out: usize,
    targets: Vec<usize>,
    coef: Vec<f64>,
    groups: Vec<Vec<usize>>,
}

impl ScatterPlan {
    pub fn new(n_out: usize, targets: Vec<usize>, coef: Vec<f64>) -> Self {
        assert_eq!(targets.len(), coef.len());
        let mut groups = vec![Vec::new(); n_out];
        for (row, &t) in targets.iter().enumerate() {
            assert!(t < n_out, "scatter target {t} out of range {n_out}");
            groups[t].push(row);
        }
        Self {
            n_out,
            targets,
            coef,
            groups,
        }
    }

    /// Plan with unit coefficients.
    pub fn unweighted(n_out: usize, targets: Vec<usize>) -> Self {
        let n = targets.len();
        Self::new(n_out, targets, vec![1.0; n])
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    pub fn n_in(&self) -> usize {
        self.targets.len()
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }
}

/// Geometry of a same-padded dilated 1-D convolution.
///
/// Inputs are laid out `rows × (c_in · len)` channel-major, kernels as
/// `c_out × (c_in · kernel)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub dilation: usize,
    pub len: usize,
}

impl ConvSpec {
    fn offset(&self, k: usize) -> isize {
        (k as isize - (self.kernel as isize - 1) / 2) * self.dilation as isize
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    OneMinus(Var),
    Sigmoid(Var),
    Tanh(Var),
    Silu(Var),
    LeakyRelu(Var, f64),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    Reshape(Var),
    GatherRows(Var, Arc<[usize]>),
    Scatter(Var, Arc<ScatterPlan>),
    MulRowScalar(Var, Var),
    MaskMul(Var, Arc<[f64]>),
    SegmentSoftmax(Var, Arc<ScatterPlan>),
    RowMean(Var),
    Conv1d(Var, Var, Var, ConvSpec),
    ChannelGate(Var, Var, usize),
    TransposeBlocks(Var, usize),
    Mse(Var, Arc<Matrix>),
    Sum(Var),
    /// Inputs `gi`, `gh`, `h`; cache holds `[r | z | n]`.
    GruCell(Var, Var, Var, Box<Matrix>),
    /// Inputs gates and `c`; cache holds `[i | f | g | o | tanh c']`.
    LstmCell(Var, Var, Box<Matrix>),
}

/// Recorded computation graph.
#[derive(Default)]
pub struct Tape {
    values: Vec<Matrix>,
    ops: Vec<Op>,
}

/// Gradients of one scalar with respect to every value on a tape.
pub struct Grads {
    grads: Vec<Option<Matrix>>,
}

impl Grads {
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads[v.0].as_ref()
    }

    /// Gradient of `v`, or zeros of `shape` when `v` did not influence the output.
    pub fn get_or_zeros(&self, v: Var, shape: (usize, usize)) -> Matrix {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Matrix::zeros(shape.0, shape.1))
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

fn zip_map(a: &Matrix, b: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    assert_eq!(a.shape(), b.shape(), "elementwise shape mismatch");
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Matrix::from_vec(a.rows(), a.cols(), data)
}

/// Sum of values in an order that does not depend on their arrangement.
fn canonical_sum(buf: &mut [f64]) -> f64 {
    buf.sort_unstable_by(f64::total_cmp);
    buf.iter().fold(0.0, |acc, v| acc + v)
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.values.push(value);
        self.ops.push(op);
        Var(self.values.len() - 1)
    }

    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn zeros(&mut self, rows: usize, cols: usize) -> Var {
        self.leaf(Matrix::zeros(rows, cols))
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.values[v.0]
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.values[v.0].shape()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).matmul(self.value(b));
        self.push(out, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = zip_map(self.value(a), self.value(b), |x, y| x + y);
        self.push(out, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let out = zip_map(self.value(a), self.value(b), |x, y| x - y);
        self.push(out, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = zip_map(self.value(a), self.value(b), |x, y| x * y);
        self.push(out, Op::Mul(a, b))
    }

    /// Adds a `1×C` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Var {
        let (rows, cols) = self.shape(a);
        let b = self.value(bias);
        assert_eq!(b.shape(), (1, cols), "bias shape mismatch");
        let mut out = self.value(a).clone();
        for r in 0..rows {
            for (o, &bv) in out.row_mut(r).iter_mut().zip(b.data()) {
                *o += bv;
            }
        }
        self.push(out, Op::AddRow(a, bias))
    }

    /// `a · w + bias`.
    pub fn affine(&mut self, a: Var, w: Var, bias: Var) -> Var {
        let z = self.matmul(a, w);
        self.add_row(z, bias)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|x| x * c);
        self.push(out, Op::Scale(a, c))
    }

    pub fn one_minus(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| 1.0 - x);
        self.push(out, Op::OneMinus(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        self.push(out, Op::Tanh(a))
    }

    pub fn silu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(silu);
        self.push(out, Op::Silu(a))
    }

    /// GRU update from input and hidden pre-activations `gi`, `gh`
    /// (`rows × 3d`, gate order r, z, n) and state `h`:
    /// `h' = (1 − z)·n + z·h` with `n = tanh(gi_n + r·gh_n)`.
    pub fn gru_cell(&mut self, gi: Var, gh: Var, h: Var) -> Var {
        let (giv, ghv, hv) = (self.value(gi), self.value(gh), self.value(h));
        let (rows, d) = hv.shape();
        assert_eq!(giv.shape(), (rows, 3 * d), "gru_cell input shape");
        assert_eq!(ghv.shape(), (rows, 3 * d), "gru_cell hidden shape");
        let mut out = Matrix::zeros(rows, d);
        let mut cache = Matrix::zeros(rows, 3 * d);
        for row in 0..rows {
            let (a, b, hr) = (giv.row(row), ghv.row(row), hv.row(row));
            let c = cache.row_mut(row);
            for k in 0..d {
                let r = sigmoid(a[k] + b[k]);
                let z = sigmoid(a[d + k] + b[d + k]);
                let n = (a[2 * d + k] + r * b[2 * d + k]).tanh();
                c[k] = r;
                c[d + k] = z;
                c[2 * d + k] = n;
            }
            let o = out.row_mut(row);
            for k in 0..d {
                let (z, n) = (c[d + k], c[2 * d + k]);
                o[k] = (1.0 - z) * n + z * hr[k];
            }
        }
        self.push(out, Op::GruCell(gi, gh, h, Box::new(cache)))
    }

    /// LSTM update from gate pre-activations (`rows × 4d`, order i, f, g, o)
    /// and cell `c`; returns `[h' | c']` (`rows × 2d`).
    pub fn lstm_cell(&mut self, gates: Var, c: Var) -> Var {
        let (gv, cv) = (self.value(gates), self.value(c));
        let (rows, d) = cv.shape();
        assert_eq!(gv.shape(), (rows, 4 * d), "lstm_cell gate shape");
        let mut out = Matrix::zeros(rows, 2 * d);
        let mut cache = Matrix::zeros(rows, 5 * d);
        for row in 0..rows {
            let (g, cr) = (gv.row(row), cv.row(row));
            let k5 = cache.row_mut(row);
            let o = out.row_mut(row);
            for k in 0..d {
                let i = sigmoid(g[k]);
                let f = sigmoid(g[d + k]);
                let cand = g[2 * d + k].tanh();
                let og = sigmoid(g[3 * d + k]);
                let c_new = f * cr[k] + i * cand;
                let tc = c_new.tanh();
                k5[k] = i;
                k5[d + k] = f;
                k5[2 * d + k] = cand;
                k5[3 * d + k] = og;
                k5[4 * d + k] = tc;
                o[k] = og * tc;
                o[d + k] = c_new;
            }
        }
        self.push(out, Op::LstmCell(gates, c, Box::new(cache)))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let out = self.value(a).map(|x| if x > 0.0 { x } else { slope * x });
        self.push(out, Op::LeakyRelu(a, slope))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let rows = self.shape(parts[0]).0;
        let cols: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut out = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let mut c0 = 0;
            for &p in parts {
                let v = self.value(p);
                assert_eq!(v.rows(), rows, "concat_cols row mismatch");
                out.row_mut(r)[c0..c0 + v.cols()].copy_from_slice(v.row(r));
                c0 += v.cols();
            }
        }
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let cols = self.shape(parts[0]).1;
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let v = self.value(p);
            assert_eq!(v.cols(), cols, "concat_rows col mismatch");
            data.extend_from_slice(v.data());
            rows += v.rows();
        }
        self.push(Matrix::from_vec(rows, cols, data), Op::ConcatRows(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, width: usize) -> Var {
        let v = self.value(a);
        assert!(start + width <= v.cols(), "slice out of range");
        let mut out = Matrix::zeros(v.rows(), width);
        for r in 0..v.rows() {
            out.row_mut(r).copy_from_slice(&v.row(r)[start..start + width]);
        }
        self.push(out, Op::SliceCols(a, start))
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let out = self.value(a).clone().reshaped(rows, cols);
        self.push(out, Op::Reshape(a))
    }

    pub fn gather_rows(&mut self, a: Var, idx: Arc<[usize]>) -> Var {
        let v = self.value(a);
        let mut out = Matrix::zeros(idx.len(), v.cols());
        for (r, &i) in idx.iter().enumerate() {
            out.row_mut(r).copy_from_slice(v.row(i));
        }
        self.push(out, Op::GatherRows(a, idx))
    }

    /// Weighted sum of input rows into their target rows.
    ///
    /// Each output entry is summed in sorted order, so the result does not
    /// depend on how the contributing rows are arranged.
    pub fn scatter(&mut self, a: Var, plan: Arc<ScatterPlan>) -> Var {
        let v = self.value(a);
        assert_eq!(v.rows(), plan.n_in(), "scatter plan row mismatch");
        let cols = v.cols();
        let mut out = Matrix::zeros(plan.n_out, cols);
        let mut buf = Vec::new();
        for (o, group) in plan.groups.iter().enumerate() {
            match group.len() {
                0 => {}
                1 => {
                    let r = group[0];
                    let c = plan.coef[r];
                    for (dst, &x) in out.row_mut(o).iter_mut().zip(v.row(r)) {
                        *dst = c * x;
                    }
                }
                _ => {
                    for col in 0..cols {
                        buf.clear();
                        buf.extend(group.iter().map(|&r| plan.coef[r] * v.get(r, col)));
                        out.set(o, col, canonical_sum(&mut buf));
                    }
                }
            }
        }
        self.push(out, Op::Scatter(a, plan))
    }

    /// Scales row `r` of `a` by the scalar `s[r]` (`s` is `R×1`).
    pub fn mul_row_scalar(&mut self, a: Var, s: Var) -> Var {
        let av = self.value(a);
        let sv = self.value(s);
        assert_eq!(sv.shape(), (av.rows(), 1), "row scalar shape mismatch");
        let mut out = av.clone();
        for r in 0..av.rows() {
            let k = sv.get(r, 0);
            for x in out.row_mut(r) {
                *x *= k;
            }
        }
        self.push(out, Op::MulRowScalar(a, s))
    }

    /// Elementwise product with a constant mask (dropout).
    pub fn mask_mul(&mut self, a: Var, mask: Arc<[f64]>) -> Var {
        let v = self.value(a);
        assert_eq!(v.len(), mask.len());
        let data = v.data().iter().zip(mask.iter()).map(|(x, m)| x * m).collect();
        let out = Matrix::from_vec(v.rows(), v.cols(), data);
        self.push(out, Op::MaskMul(a, mask))
    }

    /// Softmax of an `R×1` score column within each group of `plan`.
    pub fn segment_softmax(&mut self, scores: Var, plan: Arc<ScatterPlan>) -> Var {
        let v = self.value(scores);
        assert_eq!(v.shape(), (plan.n_in(), 1), "softmax scores must be a column");
        let mut out = Matrix::zeros(v.rows(), 1);
        let mut buf = Vec::new();
        for group in &plan.groups {
            if group.is_empty() {
                continue;
            }
            let max = group
                .iter()
                .map(|&r| v.get(r, 0))
                .fold(f64::NEG_INFINITY, f64::max);
            buf.clear();
            buf.extend(group.iter().map(|&r| (v.get(r, 0) - max).exp()));
            let exps = buf.clone();
            let z = canonical_sum(&mut buf);
            for (&r, e) in group.iter().zip(exps) {
                out.set(r, 0, e / z);
            }
        }
        self.push(out, Op::SegmentSoftmax(scores, plan))
    }

    /// Mean of each row (`R×C → R×1`).
    pub fn row_mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let n = v.cols() as f64;
        let data = (0..v.rows())
            .map(|r| v.row(r).iter().sum::<f64>() / n)
            .collect();
        let out = Matrix::from_vec(v.rows(), 1, data);
        self.push(out, Op::RowMean(a))
    }

    /// Same-padded dilated 1-D convolution with bias.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, spec: ConvSpec) -> Var {
        assert!(spec.kernel % 2 == 1, "kernel width must be odd");
        assert!(spec.dilation >= 1);
        let xv = self.value(x);
        let wv = self.value(w);
        let bv = self.value(b);
        assert_eq!(xv.cols(), spec.c_in * spec.len, "conv input shape mismatch");
        assert_eq!(wv.shape(), (spec.c_out, spec.c_in * spec.kernel));
        assert_eq!(bv.shape(), (1, spec.c_out));
        let t_len = spec.len as isize;
        let mut out = Matrix::zeros(xv.rows(), spec.c_out * spec.len);
        for r in 0..xv.rows() {
            let xr = xv.row(r);
            let or = out.row_mut(r);
            for o in 0..spec.c_out {
                let orow = &mut or[o * spec.len..(o + 1) * spec.len];
                orow.fill(bv.get(0, o));
                for c in 0..spec.c_in {
                    let xc = &xr[c * spec.len..(c + 1) * spec.len];
                    for k in 0..spec.kernel {
                        let wk = wv.get(o, c * spec.kernel + k);
                        let off = spec.offset(k);
                        let t0 = (-off).max(0);
                        let t1 = (t_len - off).min(t_len);
                        for t in t0..t1 {
                            orow[t as usize] += wk * xc[(t + off) as usize];
                        }
                    }
                }
            }
        }
        self.push(out, Op::Conv1d(x, w, b, spec))
    }

    /// Multiplies every time step of channel `c` in `z` by `g[r, c]`.
    pub fn channel_gate(&mut self, z: Var, g: Var, len: usize) -> Var {
        let zv = self.value(z);
        let gv = self.value(g);
        assert_eq!(zv.rows(), gv.rows());
        assert_eq!(zv.cols(), gv.cols() * len, "gate channel mismatch");
        let mut out = zv.clone();
        for r in 0..zv.rows() {
            let row = out.row_mut(r);
            for c in 0..gv.cols() {
                let k = gv.get(r, c);
                for x in &mut row[c * len..(c + 1) * len] {
                    *x *= k;
                }
            }
        }
        self.push(out, Op::ChannelGate(z, g, len))
    }

    /// Transposes each of `blocks` stacked row blocks: `(B·R)×C → (B·C)×R`.
    pub fn transpose_blocks(&mut self, a: Var, blocks: usize) -> Var {
        let v = self.value(a);
        assert_eq!(v.rows() % blocks, 0);
        let r = v.rows() / blocks;
        let c = v.cols();
        let mut out = Matrix::zeros(blocks * c, r);
        for b in 0..blocks {
            for i in 0..r {
                for j in 0..c {
                    out.set(b * c + j, i, v.get(b * r + i, j));
                }
            }
        }
        self.push(out, Op::TransposeBlocks(a, blocks))
    }

    /// Mean squared error against a constant target (`1×1` output).
    pub fn mse(&mut self, pred: Var, target: Arc<Matrix>) -> Var {
        let p = self.value(pred);
        assert_eq!(p.shape(), target.shape(), "mse target shape mismatch");
        let n = p.len() as f64;
        let s: f64 = p
            .data()
            .iter()
            .zip(target.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        self.push(Matrix::from_vec(1, 1, vec![s / n]), Op::Mse(pred, target))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Matrix::from_vec(1, 1, vec![s]), Op::Sum(a))
    }

    /// Gradients of the scalar `output` with respect to every recorded value.
    pub fn backward(&self, output: Var) -> Grads {
        assert_eq!(self.shape(output), (1, 1), "backward needs a scalar output");
        let mut grads: Vec<Option<Matrix>> = vec![None; self.values.len()];
        grads[output.0] = Some(Matrix::filled(1, 1, 1.0));

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.backprop_one(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Grads { grads }
    }

    fn backprop_one(&self, idx: usize, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let y = &self.values[idx];
        match &self.ops[idx] {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                gemm_nt_acc(g, bv, acc(grads, *a, av.shape()));
                gemm_tn_acc(av, g, acc(grads, *b, bv.shape()));
            }
            Op::Add(a, b) => {
                acc(grads, *a, g.shape()).add_assign(g);
                acc(grads, *b, g.shape()).add_assign(g);
            }
            Op::Sub(a, b) => {
                acc(grads, *a, g.shape()).add_assign(g);
                axpy(acc(grads, *b, g.shape()), -1.0, g);
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                add_prod(acc(grads, *a, g.shape()), g, bv);
                add_prod(acc(grads, *b, g.shape()), g, av);
            }
            Op::AddRow(a, bias) => {
                acc(grads, *a, g.shape()).add_assign(g);
                let gb = acc(grads, *bias, (1, g.cols()));
                for r in 0..g.rows() {
                    for (o, &x) in gb.data_mut().iter_mut().zip(g.row(r)) {
                        *o += x;
                    }
                }
            }
            Op::Scale(a, c) => axpy(acc(grads, *a, g.shape()), *c, g),
            Op::OneMinus(a) => axpy(acc(grads, *a, g.shape()), -1.0, g),
            Op::Sigmoid(a) => {
                let ga = acc(grads, *a, g.shape());
                for ((o, &gy), &yy) in ga.data_mut().iter_mut().zip(g.data()).zip(y.data()) {
                    *o += gy * yy * (1.0 - yy);
                }
            }
            Op::Tanh(a) => {
                let ga = acc(grads, *a, g.shape());
                for ((o, &gy), &yy) in ga.data_mut().iter_mut().zip(g.data()).zip(y.data()) {
                    *o += gy * (1.0 - yy * yy);
                }
            }
            Op::Silu(a) => {
                let x = self.value(*a);
                let ga = acc(grads, *a, g.shape());
                for ((o, &gy), &xx) in ga.data_mut().iter_mut().zip(g.data()).zip(x.data()) {
                    let s = sigmoid(xx);
                    *o += gy * s * (1.0 + xx * (1.0 - s));
                }
            }
            Op::LeakyRelu(a, slope) => {
                let x = self.value(*a);
                let ga = acc(grads, *a, g.shape());
                for ((o, &gy), &xx) in ga.data_mut().iter_mut().zip(g.data()).zip(x.data()) {
                    *o += if xx > 0.0 { gy } else { slope * gy };
                }
            }
            Op::ConcatCols(parts) => {
                let mut c0 = 0;
                for &p in parts {
                    let (rows, cols) = self.shape(p);
                    let gp = acc(grads, p, (rows, cols));
                    for r in 0..rows {
                        for (o, &x) in gp.row_mut(r).iter_mut().zip(&g.row(r)[c0..c0 + cols]) {
                            *o += x;
                        }
                    }
                    c0 += cols;
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for &p in parts {
                    let shape = self.shape(p);
                    let n = shape.0 * shape.1;
                    let gp = acc(grads, p, shape);
                    for (o, &x) in gp.data_mut().iter_mut().zip(&g.data()[off..off + n]) {
                        *o += x;
                    }
                    off += n;
                }
            }
            Op::SliceCols(a, start) => {
                let shape = self.shape(*a);
                let ga = acc(grads, *a, shape);
                for r in 0..g.rows() {
                    for (o, &x) in ga.row_mut(r)[*start..*start + g.cols()]
                        .iter_mut()
                        .zip(g.row(r))
                    {
                        *o += x;
                    }
                }
            }
            Op::Reshape(a) => {
                let shape = self.shape(*a);
                let ga = acc(grads, *a, shape);
                for (o, &x) in ga.data_mut().iter_mut().zip(g.data()) {
                    *o += x;
                }
            }
            Op::GatherRows(a, idx) => {
                let shape = self.shape(*a);
                let ga = acc(grads, *a, shape);
                for (r, &i) in idx.iter().enumerate() {
                    for (o, &x) in ga.row_mut(i).iter_mut().zip(g.row(r)) {
                        *o += x;
                    }
                }
            }
            Op::Scatter(a, plan) => {
                let shape = self.shape(*a);
                let ga = acc(grads, *a, shape);
                for (r, (&t, &c)) in plan.targets.iter().zip(&plan.coef).enumerate() {
                    for (o, &x) in ga.row_mut(r).iter_mut().zip(g.row(t)) {
                        *o += c * x;
                    }
                }
            }
            Op::MulRowScalar(a, s) => {
                let (av, sv) = (self.value(*a), self.value(*s));
                {
                    let ga = acc(grads, *a, av.shape());
                    for r in 0..g.rows() {
                        let k = sv.get(r, 0);
                        for (o, &x) in ga.row_mut(r).iter_mut().zip(g.row(r)) {
                            *o += k * x;
                        }
                    }
                }
                let gs = acc(grads, *s, sv.shape());
                for r in 0..g.rows() {
                    let d: f64 = g.row(r).iter().zip(av.row(r)).map(|(x, y)| x * y).sum();
                    gs.data_mut()[r] += d;
                }
            }
            Op::MaskMul(a, mask) => {
                let ga = acc(grads, *a, g.shape());
                for ((o, &x), &m) in ga.data_mut().iter_mut().zip(g.data()).zip(mask.iter()) {
                    *o += x * m;
                }
            }
            Op::SegmentSoftmax(a, plan) => {
                let ga = acc(grads, *a, g.shape());
                for group in &plan.groups {
                    let dot: f64 = group.iter().map(|&r| y.get(r, 0) * g.get(r, 0)).sum();
                    for &r in group {
                        ga.data_mut()[r] += y.get(r, 0) * (g.get(r, 0) - dot);
                    }
                }
            }
            Op::RowMean(a) => {
                let shape = self.shape(*a);
                let n = shape.1 as f64;
                let ga = acc(grads, *a, shape);
                for r in 0..shape.0 {
                    let k = g.get(r, 0) / n;
                    for o in ga.row_mut(r) {
                        *o += k;
                    }
                }
            }
            Op::Conv1d(x, w, b, spec) => self.conv1d_backward(*x, *w, *b, *spec, g, grads),
            Op::ChannelGate(z, gate, len) => {
                let (zv, gv) = (self.value(*z), self.value(*gate));
                {
                    let gz = acc(grads, *z, zv.shape());
                    for r in 0..zv.rows() {
                        for c in 0..gv.cols() {
                            let k = gv.get(r, c);
                            let span = c * len..(c + 1) * len;
                            for (o, &x) in gz.row_mut(r)[span.clone()].iter_mut().zip(&g.row(r)[span]) {
                                *o += k * x;
                            }
                        }
                    }
                }
                let gg = acc(grads, *gate, gv.shape());
                for r in 0..zv.rows() {
                    for c in 0..gv.cols() {
                        let span = c * len..(c + 1) * len;
                        let d: f64 = g.row(r)[span.clone()]
                            .iter()
                            .zip(&zv.row(r)[span])
                            .map(|(p, q)| p * q)
                            .sum();
                        let v = gg.get(r, c);
                        gg.set(r, c, v + d);
                    }
                }
            }
            Op::TransposeBlocks(a, blocks) => {
                let shape = self.shape(*a);
                let rr = shape.0 / blocks;
                let ga = acc(grads, *a, shape);
                for b in 0..*blocks {
                    for i in 0..rr {
                        for j in 0..shape.1 {
                            let v = ga.get(b * rr + i, j);
                            ga.set(b * rr + i, j, v + g.get(b * shape.1 + j, i));
                        }
                    }
                }
            }
            Op::Mse(p, target) => {
                let pv = self.value(*p);
                let k = 2.0 * g.get(0, 0) / pv.len() as f64;
                let gp = acc(grads, *p, pv.shape());
                for ((o, &a), &t) in gp.data_mut().iter_mut().zip(pv.data()).zip(target.data()) {
                    *o += k * (a - t);
                }
            }
            Op::Sum(a) => {
                let shape = self.shape(*a);
                let k = g.get(0, 0);
                for o in acc(grads, *a, shape).data_mut() {
                    *o += k;
                }
            }
            Op::GruCell(gi, gh, h, cache) => self.gru_cell_backward(*gi, *gh, *h, cache, g, grads),
            Op::LstmCell(gates, c, cache) => self.lstm_cell_backward(*gates, *c, cache, g, grads),
        }
    }

    fn gru_cell_backward(&self, gi: Var, gh: Var, h: Var, cache: &Matrix, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let (hv, ghv) = (self.value(h), self.value(gh));
        let (rows, d) = hv.shape();
        let mut d_gi = Matrix::zeros(rows, 3 * d);
        let mut d_gh = Matrix::zeros(rows, 3 * d);
        {
            let gh_grad = acc(grads, h, (rows, d));
            for row in 0..rows {
                let (c, gr, hr, ghr) = (cache.row(row), g.row(row), hv.row(row), ghv.row(row));
                let dh = gh_grad.row_mut(row);
                let (a, b) = (d_gi.row_mut(row), d_gh.row_mut(row));
                for k in 0..d {
                    let (r, z, n) = (c[k], c[d + k], c[2 * d + k]);
                    dh[k] += gr[k] * z;
                    let dz = gr[k] * (hr[k] - n) * z * (1.0 - z);
                    let dn = gr[k] * (1.0 - z) * (1.0 - n * n);
                    let dr = dn * ghr[2 * d + k] * r * (1.0 - r);
                    a[k] = dr;
                    a[d + k] = dz;
                    a[2 * d + k] = dn;
                    b[k] = dr;
                    b[d + k] = dz;
                    b[2 * d + k] = dn * r;
                }
            }
        }
        acc(grads, gi, (rows, 3 * d)).add_assign(&d_gi);
        acc(grads, gh, (rows, 3 * d)).add_assign(&d_gh);
    }

    fn lstm_cell_backward(&self, gates: Var, c: Var, cache: &Matrix, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let cv = self.value(c);
        let (rows, d) = cv.shape();
        let mut d_gates = Matrix::zeros(rows, 4 * d);
        {
            let gc = acc(grads, c, (rows, d));
            for row in 0..rows {
                let (k5, gr, cr) = (cache.row(row), g.row(row), cv.row(row));
                let dg = d_gates.row_mut(row);
                let dc = gc.row_mut(row);
                for k in 0..d {
                    let (i, f, cand, o, tc) = (k5[k], k5[d + k], k5[2 * d + k], k5[3 * d + k], k5[4 * d + k]);
                    let dh = gr[k];
                    let dc_new = gr[d + k] + dh * o * (1.0 - tc * tc);
                    dg[k] = dc_new * cand * i * (1.0 - i);
                    dg[d + k] = dc_new * cr[k] * f * (1.0 - f);
                    dg[2 * d + k] = dc_new * i * (1.0 - cand * cand);
                    dg[3 * d + k] = dh * tc * o * (1.0 - o);
                    dc[k] += dc_new * f;
                }
            }
        }
        acc(grads, gates, (rows, 4 * d)).add_assign(&d_gates);
    }

    fn conv1d_backward(
        &self,
        x: Var,
        w: Var,
        b: Var,
        spec: ConvSpec,
        g: &Matrix,
        grads: &mut [Option<Matrix>],
    ) {
        let xv = self.value(x);
        let wv = self.value(w);
        let t_len = spec.len as isize;
        {
            let gb = acc(grads, b, (1, spec.c_out));
            for r in 0..g.rows() {
                for o in 0..spec.c_out {
                    let s: f64 = g.row(r)[o * spec.len..(o + 1) * spec.len].iter().sum();
                    gb.data_mut()[o] += s;
                }
            }
        }
        {
            let gw = acc(grads, w, wv.shape());
            for r in 0..g.rows() {
                let xr = xv.row(r);
                let gr = g.row(r);
                for o in 0..spec.c_out {
                    let go = &gr[o * spec.len..(o + 1) * spec.len];
                    for c in 0..spec.c_in {
                        let xc = &xr[c * spec.len..(c + 1) * spec.len];
                        for k in 0..spec.kernel {
                            let off = spec.offset(k);
                            let t0 = (-off).max(0);
                            let t1 = (t_len - off).min(t_len);
                            let mut s = 0.0;
                            for t in t0..t1 {
                                s += go[t as usize] * xc[(t + off) as usize];
                            }
                            let col = c * spec.kernel + k;
                            let v = gw.get(o, col);
                            gw.set(o, col, v + s);
                        }
                    }
                }
            }
        }
        let gx = acc(grads, x, xv.shape());
        for r in 0..g.rows() {
            let gr = g.row(r).to_vec();
            let gxr = gx.row_mut(r);
            for o in 0..spec.c_out {
                let go = &gr[o * spec.len..(o + 1) * spec.len];
                for c in 0..spec.c_in {
                    let gxc = &mut gxr[c * spec.len..(c + 1) * spec.len];
                    for k in 0..spec.kernel {
                        let wk = wv.get(o, c * spec.kernel + k);
                        let off = spec.offset(k);
                        let t0 = (-off).max(0);
                        let t1 = (t_len - off).min(t_len);
                        for t in t0..t1 {
                            gxc[(t + off) as usize] += wk * go[t as usize];
                        }
                    }
                }
            }
        }
    }
}

fn acc(grads: &mut [Option<Matrix>], v: Var, shape: (usize, usize)) -> &mut Matrix {
    grads[v.0].get_or_insert_with(|| Matrix::zeros(shape.0, shape.1))
}

fn axpy(dst: &mut Matrix, k: f64, src: &Matrix) {
    for (o, &x) in dst.data_mut().iter_mut().zip(src.data()) {
        *o += k * x;
    }
}

fn add_prod(dst: &mut Matrix, a: &Matrix, b: &Matrix) {
    for ((o, &x), &y) in dst.data_mut().iter_mut().zip(a.data()).zip(b.data()) {
        *o += x * y;
    }
}

/// Logistic sigmoid, overflow-safe for large magnitudes.
pub fn sigmoid_scalar(x: f64) -> f64 {
    sigmoid(x)
}

/// `x · σ(x)`.
pub fn silu_scalar(x: f64) -> f64 {
    silu(x)
}
