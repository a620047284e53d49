use crate::error::{Error, Result};

use super::tensor::Tensor;

/// Handle to a node on a [`Tape`]. Cheap to copy; only valid for the tape
/// that produced it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Tx {
    pub id: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Tx {
    pub fn numel(&self) -> usize {
        self.rows * self.cols
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    MinElem(usize, usize),
    /// `[B, n] + [1, n]` with the row broadcast over the batch.
    AddRow(usize, usize),
    MatMul(usize, usize),
    /// `[1, n]` repeated into `[B, n]`.
    RepeatRows(usize),
    ConcatCols(usize, usize),
    /// Per-row selection: `mask[i]` picks row i of `on`, otherwise of `off`.
    RowBlend {
        on: usize,
        off: usize,
        mask: Vec<bool>,
    },
    Tanh(usize),
    Sigmoid(usize),
    Relu(usize),
    Softplus(usize),
    Exp(usize),
    Neg(usize),
    Square(usize),
    Scale(usize, f64),
    Shift(usize, f64),
    Clamp(usize, f64, f64),
    SumAll(usize),
    MeanAll(usize),
    /// Sum across columns: `[B, n] -> [B, 1]`.
    SumRows(usize),
}

struct Node {
    op: Op,
    data: Vec<f64>,
    rows: usize,
    cols: usize,
    grad: Option<Vec<f64>>,
    needs_grad: bool,
}

/// Reverse-mode autodiff tape over row-major 2D f64 buffers.
///
/// One tape records one forward computation; `backward` runs once against a
/// scalar output. Single-threaded by construction.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, rows: usize, cols: usize, data: Vec<f64>, needs_grad: bool) -> Tx {
        debug_assert_eq!(data.len(), rows * cols);
        let id = self.nodes.len();
        self.nodes.push(Node { op, data, rows, cols, grad: None, needs_grad });
        Tx { id, rows, cols }
    }

    fn needs(&self, id: usize) -> bool {
        self.nodes[id].needs_grad
    }

    /// Register a gradient-tracked leaf (a parameter).
    pub fn leaf(&mut self, t: &Tensor) -> Tx {
        self.push(Op::Leaf, t.rows(), t.cols(), t.data.clone(), true)
    }

    /// Register a constant leaf (an input, or a frozen parameter).
    pub fn constant(&mut self, t: &Tensor) -> Tx {
        self.push(Op::Leaf, t.rows(), t.cols(), t.data.clone(), false)
    }

    pub fn constant_from(&mut self, rows: usize, cols: usize, data: Vec<f64>) -> Tx {
        self.push(Op::Leaf, rows, cols, data, false)
    }

    pub fn constant_scalar(&mut self, x: f64) -> Tx {
        self.push(Op::Leaf, 1, 1, vec![x], false)
    }

    pub fn value(&self, t: Tx) -> &[f64] {
        &self.nodes[t.id].data
    }

    pub fn scalar_value(&self, t: Tx) -> f64 {
        self.nodes[t.id].data[0]
    }

    /// Copy a node's current value out as a detached constant of this tape.
    pub fn detach(&mut self, t: Tx) -> Tx {
        let data = self.nodes[t.id].data.clone();
        self.push(Op::Leaf, t.rows, t.cols, data, false)
    }

    /// Extract the value (and gradient, if backward has run) as a tensor.
    pub fn to_tensor(&self, t: Tx) -> Tensor {
        let node = &self.nodes[t.id];
        Tensor {
            shape: vec![node.rows, node.cols],
            data: node.data.clone(),
            grad: node.grad.clone(),
            tape_id: Some(t.id),
        }
    }

    pub fn grad(&self, t: Tx) -> Option<&[f64]> {
        self.nodes[t.id].grad.as_deref()
    }

    fn same_shape(&self, a: Tx, b: Tx, context: &str) -> Result<()> {
        if a.rows != b.rows || a.cols != b.cols {
            return Err(Error::ShapeMismatch {
                context: context.into(),
                expected: vec![a.rows, a.cols],
                got: vec![b.rows, b.cols],
            });
        }
        Ok(())
    }

    fn binary_elementwise(
        &mut self,
        a: Tx,
        b: Tx,
        context: &str,
        f: impl Fn(f64, f64) -> f64,
        op: impl Fn(usize, usize) -> Op,
    ) -> Result<Tx> {
        self.same_shape(a, b, context)?;
        let data: Vec<f64> = self.nodes[a.id]
            .data
            .iter()
            .zip(&self.nodes[b.id].data)
            .map(|(&x, &y)| f(x, y))
            .collect();
        let needs = self.needs(a.id) || self.needs(b.id);
        Ok(self.push(op(a.id, b.id), a.rows, a.cols, data, needs))
    }

    pub fn add(&mut self, a: Tx, b: Tx) -> Result<Tx> {
        self.binary_elementwise(a, b, "add", |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Tx, b: Tx) -> Result<Tx> {
        self.binary_elementwise(a, b, "sub", |x, y| x - y, Op::Sub)
    }

    pub fn mul(&mut self, a: Tx, b: Tx) -> Result<Tx> {
        self.binary_elementwise(a, b, "mul", |x, y| x * y, Op::Mul)
    }

    pub fn min_elem(&mut self, a: Tx, b: Tx) -> Result<Tx> {
        self.binary_elementwise(a, b, "min_elem", f64::min, Op::MinElem)
    }

    /// `[B, n] + [1, n]` — the bias-add of an affine layer.
    pub fn add_row(&mut self, a: Tx, row: Tx) -> Result<Tx> {
        if row.rows != 1 || row.cols != a.cols {
            return Err(Error::ShapeMismatch {
                context: "add_row".into(),
                expected: vec![1, a.cols],
                got: vec![row.rows, row.cols],
            });
        }
        let n = a.cols;
        let mut data = self.nodes[a.id].data.clone();
        for r in 0..a.rows {
            for j in 0..n {
                data[r * n + j] += self.nodes[row.id].data[j];
            }
        }
        let needs = self.needs(a.id) || self.needs(row.id);
        Ok(self.push(Op::AddRow(a.id, row.id), a.rows, a.cols, data, needs))
    }

    pub fn matmul(&mut self, a: Tx, b: Tx) -> Result<Tx> {
        if a.cols != b.rows {
            return Err(Error::ShapeMismatch {
                context: "matmul".into(),
                expected: vec![a.cols, b.cols],
                got: vec![b.rows, b.cols],
            });
        }
        let (m, k, n) = (a.rows, a.cols, b.cols);
        let mut out = vec![0.0; m * n];
        matmul_acc(&self.nodes[a.id].data, &self.nodes[b.id].data, m, k, n, &mut out);
        let needs = self.needs(a.id) || self.needs(b.id);
        Ok(self.push(Op::MatMul(a.id, b.id), m, n, out, needs))
    }

    pub fn repeat_rows(&mut self, a: Tx, batch: usize) -> Result<Tx> {
        if a.rows != 1 {
            return Err(Error::ShapeMismatch {
                context: "repeat_rows".into(),
                expected: vec![1, a.cols],
                got: vec![a.rows, a.cols],
            });
        }
        let row = self.nodes[a.id].data.clone();
        let mut data = Vec::with_capacity(batch * a.cols);
        for _ in 0..batch {
            data.extend_from_slice(&row);
        }
        let needs = self.needs(a.id);
        Ok(self.push(Op::RepeatRows(a.id), batch, a.cols, data, needs))
    }

    pub fn concat_cols(&mut self, a: Tx, b: Tx) -> Result<Tx> {
        if a.rows != b.rows {
            return Err(Error::ShapeMismatch {
                context: "concat_cols".into(),
                expected: vec![a.rows, b.cols],
                got: vec![b.rows, b.cols],
            });
        }
        let (na, nb) = (a.cols, b.cols);
        let mut data = Vec::with_capacity(a.rows * (na + nb));
        for r in 0..a.rows {
            data.extend_from_slice(&self.nodes[a.id].data[r * na..(r + 1) * na]);
            data.extend_from_slice(&self.nodes[b.id].data[r * nb..(r + 1) * nb]);
        }
        let needs = self.needs(a.id) || self.needs(b.id);
        Ok(self.push(Op::ConcatCols(a.id, b.id), a.rows, na + nb, data, needs))
    }

    /// Per-row blend: row i comes from `on` where `mask[i]`, else from `off`.
    pub fn row_blend(&mut self, on: Tx, off: Tx, mask: &[bool]) -> Result<Tx> {
        self.same_shape(on, off, "row_blend")?;
        if mask.len() != on.rows {
            return Err(Error::DimensionMismatch {
                context: "row_blend mask".into(),
                lhs: mask.len(),
                rhs: on.rows,
            });
        }
        let n = on.cols;
        let mut data = Vec::with_capacity(on.rows * n);
        for (r, &keep) in mask.iter().enumerate() {
            let src = if keep { on.id } else { off.id };
            data.extend_from_slice(&self.nodes[src].data[r * n..(r + 1) * n]);
        }
        let needs = self.needs(on.id) || self.needs(off.id);
        Ok(self.push(
            Op::RowBlend { on: on.id, off: off.id, mask: mask.to_vec() },
            on.rows,
            n,
            data,
            needs,
        ))
    }

    fn unary(&mut self, a: Tx, f: impl Fn(f64) -> f64, op: Op) -> Tx {
        let data: Vec<f64> = self.nodes[a.id].data.iter().map(|&x| f(x)).collect();
        let needs = self.needs(a.id);
        self.push(op, a.rows, a.cols, data, needs)
    }

    pub fn tanh(&mut self, a: Tx) -> Tx {
        self.unary(a, f64::tanh, Op::Tanh(a.id))
    }

    pub fn sigmoid(&mut self, a: Tx) -> Tx {
        self.unary(a, stable_sigmoid, Op::Sigmoid(a.id))
    }

    pub fn relu(&mut self, a: Tx) -> Tx {
        self.unary(a, |x| x.max(0.0), Op::Relu(a.id))
    }

    pub fn softplus(&mut self, a: Tx) -> Tx {
        self.unary(a, stable_softplus, Op::Softplus(a.id))
    }

    pub fn exp(&mut self, a: Tx) -> Tx {
        self.unary(a, f64::exp, Op::Exp(a.id))
    }

    pub fn neg(&mut self, a: Tx) -> Tx {
        self.unary(a, |x| -x, Op::Neg(a.id))
    }

    pub fn square(&mut self, a: Tx) -> Tx {
        self.unary(a, |x| x * x, Op::Square(a.id))
    }

    pub fn scale(&mut self, a: Tx, c: f64) -> Tx {
        self.unary(a, |x| c * x, Op::Scale(a.id, c))
    }

    pub fn shift(&mut self, a: Tx, c: f64) -> Tx {
        self.unary(a, |x| x + c, Op::Shift(a.id, c))
    }

    /// Hard clamp; gradient is zero outside `[lo, hi]`.
    pub fn clamp(&mut self, a: Tx, lo: f64, hi: f64) -> Tx {
        self.unary(a, |x| x.clamp(lo, hi), Op::Clamp(a.id, lo, hi))
    }

    pub fn sum_all(&mut self, a: Tx) -> Tx {
        let s: f64 = self.nodes[a.id].data.iter().sum();
        let needs = self.needs(a.id);
        self.push(Op::SumAll(a.id), 1, 1, vec![s], needs)
    }

    pub fn mean_all(&mut self, a: Tx) -> Tx {
        let n = self.nodes[a.id].data.len() as f64;
        let s: f64 = self.nodes[a.id].data.iter().sum();
        let needs = self.needs(a.id);
        self.push(Op::MeanAll(a.id), 1, 1, vec![s / n], needs)
    }

    /// Sum across columns: `[B, n] -> [B, 1]`.
    pub fn sum_rows(&mut self, a: Tx) -> Tx {
        let n = a.cols;
        let data: Vec<f64> = (0..a.rows)
            .map(|r| self.nodes[a.id].data[r * n..(r + 1) * n].iter().sum())
            .collect();
        let needs = self.needs(a.id);
        self.push(Op::SumRows(a.id), a.rows, 1, data, needs)
    }

    /// Reverse pass from a scalar output. Fills gradients on every
    /// gradient-tracked node reachable from `out`.
    pub fn backward(&mut self, out: Tx) -> Result<()> {
        let node = &self.nodes[out.id];
        if node.rows != 1 || node.cols != 1 {
            return Err(Error::NonScalarBackward { shape: vec![node.rows, node.cols] });
        }
        if !node.needs_grad {
            return Err(Error::DetachedTensor);
        }
        self.nodes[out.id].grad = Some(vec![1.0]);

        for id in (0..=out.id).rev() {
            if self.nodes[id].grad.is_none() || !self.nodes[id].needs_grad {
                continue;
            }
            let grad = self.nodes[id].grad.take().unwrap();
            self.propagate(id, &grad)?;
            self.nodes[id].grad = Some(grad);
        }
        Ok(())
    }

    fn accumulate(&mut self, id: usize, contrib: &[f64]) {
        if !self.nodes[id].needs_grad {
            return;
        }
        let numel = self.nodes[id].data.len();
        let grad = self.nodes[id].grad.get_or_insert_with(|| vec![0.0; numel]);
        for (g, &c) in grad.iter_mut().zip(contrib) {
            *g += c;
        }
    }

    fn accumulate_with(&mut self, id: usize, g_out: &[f64], f: impl Fn(usize, f64) -> f64) {
        if !self.nodes[id].needs_grad {
            return;
        }
        let numel = self.nodes[id].data.len();
        let grad = self.nodes[id].grad.get_or_insert_with(|| vec![0.0; numel]);
        for (i, g) in grad.iter_mut().enumerate() {
            *g += f(i, g_out[i]);
        }
    }

    fn propagate(&mut self, id: usize, g: &[f64]) -> Result<()> {
        // `g` is d(output)/d(node id); push contributions into parents.
        let (rows, cols) = (self.nodes[id].rows, self.nodes[id].cols);
        match &self.nodes[id].op {
            Op::Leaf => {}
            &Op::Add(a, b) => {
                self.accumulate(a, g);
                self.accumulate(b, g);
            }
            &Op::Sub(a, b) => {
                self.accumulate(a, g);
                if self.nodes[b].needs_grad {
                    let neg: Vec<f64> = g.iter().map(|&x| -x).collect();
                    self.accumulate(b, &neg);
                }
            }
            &Op::Mul(a, b) => {
                if self.nodes[a].needs_grad {
                    let contrib: Vec<f64> =
                        g.iter().zip(&self.nodes[b].data).map(|(&go, &bv)| go * bv).collect();
                    self.accumulate(a, &contrib);
                }
                if self.nodes[b].needs_grad {
                    let contrib: Vec<f64> =
                        g.iter().zip(&self.nodes[a].data).map(|(&go, &av)| go * av).collect();
                    self.accumulate(b, &contrib);
                }
            }
            &Op::MinElem(a, b) => {
                // Subgradient: route to the smaller branch (ties go to `a`).
                let pick_a: Vec<bool> = self.nodes[a]
                    .data
                    .iter()
                    .zip(&self.nodes[b].data)
                    .map(|(&x, &y)| x <= y)
                    .collect();
                if self.nodes[a].needs_grad {
                    let contrib: Vec<f64> = g
                        .iter()
                        .zip(&pick_a)
                        .map(|(&go, &p)| if p { go } else { 0.0 })
                        .collect();
                    self.accumulate(a, &contrib);
                }
                if self.nodes[b].needs_grad {
                    let contrib: Vec<f64> = g
                        .iter()
                        .zip(&pick_a)
                        .map(|(&go, &p)| if p { 0.0 } else { go })
                        .collect();
                    self.accumulate(b, &contrib);
                }
            }
            &Op::AddRow(a, row) => {
                self.accumulate(a, g);
                if self.nodes[row].needs_grad {
                    let n = cols;
                    let mut contrib = vec![0.0; n];
                    for r in 0..rows {
                        for j in 0..n {
                            contrib[j] += g[r * n + j];
                        }
                    }
                    self.accumulate(row, &contrib);
                }
            }
            &Op::MatMul(a, b) => {
                let m = self.nodes[a].rows;
                let k = self.nodes[a].cols;
                let n = cols;
                if self.nodes[a].needs_grad {
                    // dA = dC · Bᵀ
                    let bdat = &self.nodes[b].data;
                    let mut da = vec![0.0; m * k];
                    for i in 0..m {
                        for p in 0..k {
                            let mut s = 0.0;
                            let grow = &g[i * n..(i + 1) * n];
                            let brow = &bdat[p * n..(p + 1) * n];
                            for j in 0..n {
                                s += grow[j] * brow[j];
                            }
                            da[i * k + p] = s;
                        }
                    }
                    self.accumulate(a, &da);
                }
                if self.nodes[b].needs_grad {
                    // dB = Aᵀ · dC
                    let adat = &self.nodes[a].data;
                    let mut db = vec![0.0; k * n];
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let av = adat[i * k + p];
                            if av != 0.0 {
                                let dbrow = &mut db[p * n..(p + 1) * n];
                                for j in 0..n {
                                    dbrow[j] += av * grow[j];
                                }
                            }
                        }
                    }
                    self.accumulate(b, &db);
                }
            }
            &Op::RepeatRows(a) => {
                let n = cols;
                let mut contrib = vec![0.0; n];
                for r in 0..rows {
                    for j in 0..n {
                        contrib[j] += g[r * n + j];
                    }
                }
                self.accumulate(a, &contrib);
            }
            &Op::ConcatCols(a, b) => {
                let na = self.nodes[a].cols;
                let nb = self.nodes[b].cols;
                if self.nodes[a].needs_grad {
                    let mut ga = vec![0.0; rows * na];
                    for r in 0..rows {
                        ga[r * na..(r + 1) * na]
                            .copy_from_slice(&g[r * (na + nb)..r * (na + nb) + na]);
                    }
                    self.accumulate(a, &ga);
                }
                if self.nodes[b].needs_grad {
                    let mut gb = vec![0.0; rows * nb];
                    for r in 0..rows {
                        gb[r * nb..(r + 1) * nb]
                            .copy_from_slice(&g[r * (na + nb) + na..(r + 1) * (na + nb)]);
                    }
                    self.accumulate(b, &gb);
                }
            }
            Op::RowBlend { on, off, mask } => {
                let (on, off, mask) = (*on, *off, mask.clone());
                let n = cols;
                if self.nodes[on].needs_grad {
                    let mut contrib = vec![0.0; rows * n];
                    for (r, &keep) in mask.iter().enumerate() {
                        if keep {
                            contrib[r * n..(r + 1) * n].copy_from_slice(&g[r * n..(r + 1) * n]);
                        }
                    }
                    self.accumulate(on, &contrib);
                }
                if self.nodes[off].needs_grad {
                    let mut contrib = vec![0.0; rows * n];
                    for (r, &keep) in mask.iter().enumerate() {
                        if !keep {
                            contrib[r * n..(r + 1) * n].copy_from_slice(&g[r * n..(r + 1) * n]);
                        }
                    }
                    self.accumulate(off, &contrib);
                }
            }
            &Op::Tanh(a) => {
                let out: Vec<f64> = self.nodes[id].data.clone();
                self.accumulate_with(a, g, |i, go| go * (1.0 - out[i] * out[i]));
            }
            &Op::Sigmoid(a) => {
                let out: Vec<f64> = self.nodes[id].data.clone();
                self.accumulate_with(a, g, |i, go| go * out[i] * (1.0 - out[i]));
            }
            &Op::Relu(a) => {
                let inp: Vec<f64> = self.nodes[a].data.clone();
                self.accumulate_with(a, g, |i, go| if inp[i] > 0.0 { go } else { 0.0 });
            }
            &Op::Softplus(a) => {
                let inp: Vec<f64> = self.nodes[a].data.clone();
                self.accumulate_with(a, g, |i, go| go * stable_sigmoid(inp[i]));
            }
            &Op::Exp(a) => {
                let out: Vec<f64> = self.nodes[id].data.clone();
                self.accumulate_with(a, g, |i, go| go * out[i]);
            }
            &Op::Neg(a) => {
                self.accumulate_with(a, g, |_, go| -go);
            }
            &Op::Square(a) => {
                let inp: Vec<f64> = self.nodes[a].data.clone();
                self.accumulate_with(a, g, |i, go| go * 2.0 * inp[i]);
            }
            &Op::Scale(a, c) => {
                self.accumulate_with(a, g, |_, go| go * c);
            }
            &Op::Shift(a, _) => {
                self.accumulate(a, g);
            }
            &Op::Clamp(a, lo, hi) => {
                let inp: Vec<f64> = self.nodes[a].data.clone();
                self.accumulate_with(a, g, |i, go| {
                    if inp[i] >= lo && inp[i] <= hi {
                        go
                    } else {
                        0.0
                    }
                });
            }
            &Op::SumAll(a) => {
                let numel = self.nodes[a].data.len();
                let contrib = vec![g[0]; numel];
                self.accumulate(a, &contrib);
            }
            &Op::MeanAll(a) => {
                let numel = self.nodes[a].data.len();
                let contrib = vec![g[0] / numel as f64; numel];
                self.accumulate(a, &contrib);
            }
            &Op::SumRows(a) => {
                let n = self.nodes[a].cols;
                let mut contrib = vec![0.0; rows * n];
                for r in 0..rows {
                    for j in 0..n {
                        contrib[r * n + j] = g[r];
                    }
                }
                self.accumulate(a, &contrib);
            }
        }
        Ok(())
    }

    /// Check every node value for non-finite entries; names the first bad node.
    pub fn check_finite(&self, context: &str) -> Result<()> {
        for (id, node) in self.nodes.iter().enumerate() {
            if !node.data.iter().all(|x| x.is_finite()) {
                return Err(Error::NonFinite { context: format!("{context} (node {id})") });
            }
        }
        Ok(())
    }
}

/// `out += A[m,k] · B[k,n]`, row-major.
pub fn matmul_acc(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av != 0.0 {
                let brow = &b[p * n..(p + 1) * n];
                for (o, &bv) in orow.iter_mut().zip(brow) {
                    *o += av * bv;
                }
            }
        }
    }
}

fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn stable_softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}
