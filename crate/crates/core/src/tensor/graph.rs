use super::{numel, Tensor};
use crate::error::{Error, Result};

/// Handle to a node recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    /// Adds a 1-D bias along the last axis.
    AddBias(Var, Var),
    Relu(Var),
    /// Elementwise product with a constant mask (dropout).
    Mask(Var, Vec<f64>),
    MatMul(Var, Var),
    Reshape(Var),
    Slice {
        input: Var,
        axis: usize,
        start: usize,
    },
    Concat {
        inputs: Vec<Var>,
        axis: usize,
    },
    Sum(Var),
    Mean(Var),
    Gather {
        table: Var,
        indices: Vec<usize>,
    },
    Conv1d {
        input: Var,
        weight: Var,
        bias: Var,
        dilation: usize,
    },
}

#[derive(Debug)]
struct Node {
    shape: Vec<usize>,
    data: Vec<f64>,
    op: Op,
    requires_grad: bool,
}

/// Define-by-run tape. Nodes are appended in evaluation order, so the node
/// list is already topologically sorted; `backward` walks it once in reverse.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    consumed: bool,
}

/// Splits `shape` around `axis` into (outer, len, inner) extents.
fn axis_extents(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = numel(&shape[..axis]);
    let inner = numel(&shape[axis + 1..]);
    (outer, shape[axis], inner)
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn is_consumed(&self) -> bool {
        self.consumed
    }

    fn push(&mut self, shape: Vec<usize>, data: Vec<f64>, op: Op, requires_grad: bool) -> Var {
        debug_assert_eq!(numel(&shape), data.len());
        self.nodes.push(Node {
            shape,
            data,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].data
    }

    /// Copies the node's value out as a standalone tensor.
    pub fn tensor(&self, v: Var) -> Tensor {
        let n = self.node(v);
        Tensor::new(n.shape.clone(), n.data.clone()).expect("node shape invariant")
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.node(*v).requires_grad)
    }

    /// Records a leaf holding a copy of `t`. Gradients are tracked when
    /// `t.requires_grad()` is set.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.push(t.shape().to_vec(), t.data().to_vec(), Op::Leaf, t.requires_grad())
    }

    /// Records a non-differentiable leaf.
    pub fn constant(&mut self, shape: Vec<usize>, data: Vec<f64>) -> Result<Var> {
        if numel(&shape) != data.len() {
            return Err(Error::invalid(format!(
                "constant of shape {:?} needs {} values, got {}",
                shape,
                numel(&shape),
                data.len()
            )));
        }
        Ok(self.push(shape, data, Op::Leaf, false))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::ShapeMismatch {
                op,
                left: self.shape(a).to_vec(),
                right: self.shape(b).to_vec(),
            });
        }
        Ok(())
    }

    fn zip_with(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        self.value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| f(*x, *y))
            .collect()
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let data = self.zip_with(a, b, |x, y| x + y);
        let rg = self.rg(&[a, b]);
        Ok(self.push(self.shape(a).to_vec(), data, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let data = self.zip_with(a, b, |x, y| x - y);
        let rg = self.rg(&[a, b]);
        Ok(self.push(self.shape(a).to_vec(), data, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let data = self.zip_with(a, b, |x, y| x * y);
        let rg = self.rg(&[a, b]);
        Ok(self.push(self.shape(a).to_vec(), data, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let data = self.value(a).iter().map(|x| x * factor).collect();
        let rg = self.rg(&[a]);
        self.push(self.shape(a).to_vec(), data, Op::Scale(a, factor), rg)
    }

    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        let last = shape.last().copied().unwrap_or(1);
        if self.shape(bias) != [last] {
            return Err(Error::ShapeMismatch {
                op: "add_bias",
                left: shape,
                right: self.shape(bias).to_vec(),
            });
        }
        let b = self.value(bias);
        let data = self
            .value(a)
            .chunks(last)
            .flat_map(|row| row.iter().zip(b).map(|(x, y)| x + y))
            .collect();
        let rg = self.rg(&[a, bias]);
        Ok(self.push(shape, data, Op::AddBias(a, bias), rg))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let data = self.value(a).iter().map(|x| x.max(0.0)).collect();
        let rg = self.rg(&[a]);
        self.push(self.shape(a).to_vec(), data, Op::Relu(a), rg)
    }

    /// Multiplies elementwise by a constant mask; used for inverted dropout.
    pub fn mask(&mut self, a: Var, mask: Vec<f64>) -> Result<Var> {
        if mask.len() != self.value(a).len() {
            return Err(Error::ShapeMismatch {
                op: "mask",
                left: self.shape(a).to_vec(),
                right: vec![mask.len()],
            });
        }
        let data = self.value(a).iter().zip(&mask).map(|(x, m)| x * m).collect();
        let rg = self.rg(&[a]);
        Ok(self.push(self.shape(a).to_vec(), data, Op::Mask(a, mask), rg))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                left: sa.to_vec(),
                right: sb.to_vec(),
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let (av, bv) = (self.value(a), self.value(b));
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let orow = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let x = av[i * k + p];
                let brow = &bv[p * n..(p + 1) * n];
                for (o, y) in orow.iter_mut().zip(brow) {
                    *o += x * y;
                }
            }
        }
        let rg = self.rg(&[a, b]);
        Ok(self.push(vec![m, n], out, Op::MatMul(a, b), rg))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        if numel(shape) != self.value(a).len() {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                left: self.shape(a).to_vec(),
                right: shape.to_vec(),
            });
        }
        let data = self.value(a).to_vec();
        let rg = self.rg(&[a]);
        Ok(self.push(shape.to_vec(), data, Op::Reshape(a), rg))
    }

    /// Takes `len` entries starting at `start` along `axis`.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() || start + len > shape[axis] {
            return Err(Error::invalid(format!(
                "slice [{start}, {}) along axis {axis} out of range for shape {shape:?}",
                start + len
            )));
        }
        let (outer, full, inner) = axis_extents(&shape, axis);
        let src = self.value(a);
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * full + start) * inner;
            data.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut out_shape = shape;
        out_shape[axis] = len;
        let rg = self.rg(&[a]);
        Ok(self.push(out_shape, data, Op::Slice { input: a, axis, start }, rg))
    }

    /// Concatenates along `axis`; all other extents must agree.
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = inputs
            .first()
            .ok_or_else(|| Error::invalid("concat of zero tensors"))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(Error::invalid(format!("concat axis {axis} for shape {base:?}")));
        }
        let mut total = 0;
        for v in inputs {
            let s = self.shape(*v);
            let compatible = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(i, (x, y))| i == axis || x == y);
            if !compatible {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    left: base,
                    right: s.to_vec(),
                });
            }
            total += s[axis];
        }
        let (outer, _, inner) = axis_extents(&base, axis);
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for v in inputs {
                let len = self.shape(*v)[axis];
                let src = self.value(*v);
                let start = o * len * inner;
                data.extend_from_slice(&src[start..start + len * inner]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let rg = self.rg(inputs);
        Ok(self.push(
            shape,
            data,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            rg,
        ))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s: f64 = self.value(a).iter().sum();
        let rg = self.rg(&[a]);
        self.push(Vec::new(), vec![s], Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let s = v.iter().sum::<f64>() / v.len().max(1) as f64;
        let rg = self.rg(&[a]);
        self.push(Vec::new(), vec![s], Op::Mean(a), rg)
    }

    /// Embedding lookup: gathers rows of a `[rows, width]` table.
    pub fn gather(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        let shape = self.shape(table);
        if shape.len() != 2 {
            return Err(Error::invalid(format!("gather table must be 2-D, got {shape:?}")));
        }
        let (rows, width) = (shape[0], shape[1]);
        let src = self.value(table);
        let mut data = Vec::with_capacity(indices.len() * width);
        for &i in indices {
            if i >= rows {
                return Err(Error::IndexOutOfBounds { index: i, rows });
            }
            data.extend_from_slice(&src[i * width..(i + 1) * width]);
        }
        let rg = self.rg(&[table]);
        Ok(self.push(
            vec![indices.len(), width],
            data,
            Op::Gather {
                table,
                indices: indices.to_vec(),
            },
            rg,
        ))
    }

    /// Causal dilated 1-D convolution.
    ///
    /// `input` is `[batch, time, c_in]`, `weight` is `[k, c_in, c_out]` with
    /// tap `i` applied to lag `i * dilation`, `bias` is `[c_out]`. Positions
    /// before the start of the sequence read as zero, so the output keeps the
    /// input length and position `s` depends only on inputs at `<= s`.
    pub fn conv1d(&mut self, input: Var, weight: Var, bias: Var, dilation: usize) -> Result<Var> {
        if dilation < 1 {
            return Err(Error::invalid("dilation must be >= 1"));
        }
        let (xs, ws) = (self.shape(input), self.shape(weight));
        if xs.len() != 3 || ws.len() != 3 || xs[2] != ws[1] || self.shape(bias) != [ws[2]] {
            return Err(Error::ShapeMismatch {
                op: "conv1d",
                left: xs.to_vec(),
                right: ws.to_vec(),
            });
        }
        let (batch, time, c_in) = (xs[0], xs[1], xs[2]);
        let (k, c_out) = (ws[0], ws[2]);
        if time == 0 || k == 0 {
            return Err(Error::invalid(format!(
                "kernel {k} exceeds padded length of a {time}-step sequence"
            )));
        }
        let (x, w, b) = (self.value(input), self.value(weight), self.value(bias));
        let mut out = vec![0.0; batch * time * c_out];
        for bt in 0..batch {
            for t in 0..time {
                let orow = &mut out[(bt * time + t) * c_out..(bt * time + t + 1) * c_out];
                orow.copy_from_slice(b);
                for tap in 0..k {
                    let lag = tap * dilation;
                    if lag > t {
                        break;
                    }
                    let src = bt * time + t - lag;
                    let xrow = &x[src * c_in..(src + 1) * c_in];
                    for (ci, xv) in xrow.iter().enumerate() {
                        let wrow = &w[(tap * c_in + ci) * c_out..(tap * c_in + ci + 1) * c_out];
                        for (o, wv) in orow.iter_mut().zip(wrow) {
                            *o += xv * wv;
                        }
                    }
                }
            }
        }
        let rg = self.rg(&[input, weight, bias]);
        Ok(self.push(
            vec![batch, time, c_out],
            out,
            Op::Conv1d {
                input,
                weight,
                bias,
                dilation,
            },
            rg,
        ))
    }

    /// Reverse sweep from a scalar `loss`. Gradients for every node that
    /// requires them are retrievable with [`Graph::grad`] afterwards. The
    /// tape can only be swept once.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.consumed {
            return Err(Error::ConsumedTape);
        }
        let ls = self.shape(loss);
        if numel(ls) != 1 {
            return Err(Error::NonScalarLoss(ls.to_vec()));
        }
        self.consumed = true;
        self.grads = vec![None; self.nodes.len()];
        if !self.node(loss).requires_grad {
            return Ok(());
        }
        self.grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].requires_grad || matches!(self.nodes[idx].op, Op::Leaf) {
                continue;
            }
            let Some(g) = self.grads[idx].take() else {
                continue;
            };
            self.propagate(idx, &g);
            self.grads[idx] = Some(g);
        }
        Ok(())
    }

    fn grad_buf(&mut self, v: Var) -> Option<&mut Vec<f64>> {
        if !self.nodes[v.0].requires_grad {
            return None;
        }
        let n = self.nodes[v.0].data.len();
        Some(self.grads[v.0].get_or_insert_with(|| vec![0.0; n]))
    }

    fn propagate(&mut self, idx: usize, g: &[f64]) {
        // The op is moved out temporarily so input values can be borrowed
        // while gradient buffers of earlier nodes are mutated.
        let op = std::mem::replace(&mut self.nodes[idx].op, Op::Leaf);
        match &op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if let Some(buf) = self.grad_buf(v) {
                        buf.iter_mut().zip(g).for_each(|(d, s)| *d += s);
                    }
                }
            }
            Op::Sub(a, b) => {
                if let Some(buf) = self.grad_buf(*a) {
                    buf.iter_mut().zip(g).for_each(|(d, s)| *d += s);
                }
                if let Some(buf) = self.grad_buf(*b) {
                    buf.iter_mut().zip(g).for_each(|(d, s)| *d -= s);
                }
            }
            Op::Mul(a, b) => {
                let (a, b) = (*a, *b);
                if self.nodes[a.0].requires_grad {
                    let other = self.nodes[b.0].data.clone();
                    let buf = self.grad_buf(a).expect("requires grad");
                    for ((d, s), o) in buf.iter_mut().zip(g).zip(&other) {
                        *d += s * o;
                    }
                }
                if self.nodes[b.0].requires_grad {
                    let other = self.nodes[a.0].data.clone();
                    let buf = self.grad_buf(b).expect("requires grad");
                    for ((d, s), o) in buf.iter_mut().zip(g).zip(&other) {
                        *d += s * o;
                    }
                }
            }
            Op::Scale(a, f) => {
                if let Some(buf) = self.grad_buf(*a) {
                    buf.iter_mut().zip(g).for_each(|(d, s)| *d += s * f);
                }
            }
            Op::AddBias(a, bias) => {
                if let Some(buf) = self.grad_buf(*a) {
                    buf.iter_mut().zip(g).for_each(|(d, s)| *d += s);
                }
                if let Some(buf) = self.grad_buf(*bias) {
                    let width = buf.len();
                    for row in g.chunks(width) {
                        buf.iter_mut().zip(row).for_each(|(d, s)| *d += s);
                    }
                }
            }
            Op::Relu(a) => {
                let out = std::mem::take(&mut self.nodes[idx].data);
                if let Some(buf) = self.grad_buf(*a) {
                    for ((d, s), y) in buf.iter_mut().zip(g).zip(&out) {
                        if *y > 0.0 {
                            *d += s;
                        }
                    }
                }
                self.nodes[idx].data = out;
            }
            Op::Mask(a, m) => {
                if let Some(buf) = self.grad_buf(*a) {
                    for ((d, s), mv) in buf.iter_mut().zip(g).zip(m) {
                        *d += s * mv;
                    }
                }
            }
            Op::MatMul(a, b) => {
                let (a, b) = (*a, *b);
                let (m, k) = (self.nodes[a.0].shape[0], self.nodes[a.0].shape[1]);
                let n = self.nodes[b.0].shape[1];
                if self.nodes[a.0].requires_grad {
                    // dA = dC · Bᵀ
                    let bv = self.nodes[b.0].data.clone();
                    let buf = self.grad_buf(a).expect("requires grad");
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let brow = &bv[p * n..(p + 1) * n];
                            buf[i * k + p] += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                        }
                    }
                }
                if self.nodes[b.0].requires_grad {
                    // dB = Aᵀ · dC
                    let av = self.nodes[a.0].data.clone();
                    let buf = self.grad_buf(b).expect("requires grad");
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let x = av[i * k + p];
                            let brow = &mut buf[p * n..(p + 1) * n];
                            brow.iter_mut().zip(grow).for_each(|(d, s)| *d += x * s);
                        }
                    }
                }
            }
            Op::Reshape(a) => {
                if let Some(buf) = self.grad_buf(*a) {
                    buf.iter_mut().zip(g).for_each(|(d, s)| *d += s);
                }
            }
            Op::Slice { input, axis, start } => {
                let in_shape = self.nodes[input.0].shape.clone();
                let len = self.nodes[idx].shape[*axis];
                let (outer, full, inner) = axis_extents(&in_shape, *axis);
                if let Some(buf) = self.grad_buf(*input) {
                    for o in 0..outer {
                        let base = (o * full + start) * inner;
                        let src = &g[o * len * inner..(o + 1) * len * inner];
                        buf[base..base + len * inner]
                            .iter_mut()
                            .zip(src)
                            .for_each(|(d, s)| *d += s);
                    }
                }
            }
            Op::Concat { inputs, axis } => {
                let out_shape = self.nodes[idx].shape.clone();
                let (outer, total, inner) = axis_extents(&out_shape, *axis);
                let mut offset = 0;
                for v in inputs {
                    let len = self.nodes[v.0].shape[*axis];
                    if let Some(buf) = self.grad_buf(*v) {
                        for o in 0..outer {
                            let src_start = (o * total + offset) * inner;
                            let src = &g[src_start..src_start + len * inner];
                            buf[o * len * inner..(o + 1) * len * inner]
                                .iter_mut()
                                .zip(src)
                                .for_each(|(d, s)| *d += s);
                        }
                    }
                    offset += len;
                }
            }
            Op::Sum(a) => {
                if let Some(buf) = self.grad_buf(*a) {
                    buf.iter_mut().for_each(|d| *d += g[0]);
                }
            }
            Op::Mean(a) => {
                if let Some(buf) = self.grad_buf(*a) {
                    let scale = g[0] / buf.len().max(1) as f64;
                    buf.iter_mut().for_each(|d| *d += scale);
                }
            }
            Op::Gather { table, indices } => {
                if let Some(buf) = self.grad_buf(*table) {
                    let width = g.len() / indices.len().max(1);
                    for (row, &i) in indices.iter().enumerate() {
                        buf[i * width..(i + 1) * width]
                            .iter_mut()
                            .zip(&g[row * width..(row + 1) * width])
                            .for_each(|(d, s)| *d += s);
                    }
                }
            }
            Op::Conv1d {
                input,
                weight,
                bias,
                dilation,
            } => self.conv1d_backward(g, *input, *weight, *bias, *dilation),
        }
        self.nodes[idx].op = op;
    }

    fn conv1d_backward(&mut self, g: &[f64], input: Var, weight: Var, bias: Var, dilation: usize) {
        let xs = self.nodes[input.0].shape.clone();
        let (batch, time, c_in) = (xs[0], xs[1], xs[2]);
        let ws = self.nodes[weight.0].shape.clone();
        let (k, c_out) = (ws[0], ws[2]);

        if let Some(buf) = self.grad_buf(bias) {
            for row in g.chunks(c_out) {
                buf.iter_mut().zip(row).for_each(|(d, s)| *d += s);
            }
        }
        if self.nodes[weight.0].requires_grad {
            let x = std::mem::take(&mut self.nodes[input.0].data);
            let buf = self.grad_buf(weight).expect("requires grad");
            for bt in 0..batch {
                for t in 0..time {
                    let grow = &g[(bt * time + t) * c_out..(bt * time + t + 1) * c_out];
                    for tap in 0..k {
                        let lag = tap * dilation;
                        if lag > t {
                            break;
                        }
                        let src = bt * time + t - lag;
                        for ci in 0..c_in {
                            let xv = x[src * c_in + ci];
                            let wrow = &mut buf[(tap * c_in + ci) * c_out..(tap * c_in + ci + 1) * c_out];
                            wrow.iter_mut().zip(grow).for_each(|(d, s)| *d += xv * s);
                        }
                    }
                }
            }
            self.nodes[input.0].data = x;
        }
        if self.nodes[input.0].requires_grad {
            let w = std::mem::take(&mut self.nodes[weight.0].data);
            let buf = self.grad_buf(input).expect("requires grad");
            for bt in 0..batch {
                for t in 0..time {
                    let grow = &g[(bt * time + t) * c_out..(bt * time + t + 1) * c_out];
                    for tap in 0..k {
                        let lag = tap * dilation;
                        if lag > t {
                            break;
                        }
                        let src = bt * time + t - lag;
                        for ci in 0..c_in {
                            let wrow = &w[(tap * c_in + ci) * c_out..(tap * c_in + ci + 1) * c_out];
                            buf[src * c_in + ci] += wrow.iter().zip(grow).map(|(a, b)| a * b).sum::<f64>();
                        }
                    }
                }
            }
            self.nodes[weight.0].data = w;
        }
    }
}
