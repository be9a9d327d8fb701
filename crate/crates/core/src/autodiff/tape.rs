use super::kernels::{self, Conv1dGeom, MatRef};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Transpose(Var),
    Permute(Var, Vec<usize>),
    Conv1d {
        input: Var,
        kernel: Var,
        bias: Option<Var>,
        geom: Conv1dGeom,
    },
    Relu(Var),
    Softplus(Var),
    Sigmoid(Var),
    Exp(Var),
    Log(Var),
    Abs(Var),
    Sum(Var, Vec<usize>),
    Mean(Var, Vec<usize>),
    Reshape(Var),
    Slice {
        input: Var,
        axis: usize,
        start: usize,
    },
    Concat(Vec<Var>, usize),
    EmaTrend {
        input: Var,
        alpha: f64,
        axis: usize,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Wengert list of operations for one forward pass.
///
/// Nodes are appended in evaluation order, so every operation's inputs precede
/// it and a single reverse sweep visits each node once. Leaf gradients
/// accumulate across calls to [`Tape::backward`] until [`Tape::zero_grad`].
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    leaf_grads: Vec<Option<Tensor>>,
}

/// `outer × axis × inner` factorisation of a shape around one axis.
fn split_at_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus_scalar(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

fn accumulate(slot: &mut Option<Vec<f64>>, g: Vec<f64>) {
    match slot {
        Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
        None => *slot = Some(g),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Bytes held by non-leaf node values: the activation footprint of the pass.
    pub fn activation_bytes(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| !matches!(n.op, Op::Leaf))
            .map(|n| n.value.len() * std::mem::size_of::<f64>())
            .sum()
    }

    /// Records a leaf. Values are re-checked for finiteness.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::Domain("non-finite value in leaf tensor".into()));
        }
        Ok(self.push(value, Op::Leaf, requires_grad))
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Result<Var> {
        self.leaf(value, true)
    }

    /// Leaf that never receives gradient.
    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a leaf, if backward has reached it.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.leaf_grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn zero_grad(&mut self) {
        self.leaf_grads.iter_mut().for_each(|g| *g = None);
    }

    /// Copies a node's value into a fresh constant leaf (gradient stops here).
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.nodes[v.0].value.clone();
        self.push(value, Op::Leaf, false)
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        self.leaf_grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn check_broadcast(&self, a: Var, b: Var, what: &str) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sb.len() > sa.len() || sa[sa.len() - sb.len()..] != *sb {
            return Err(Error::dim(format!(
                "{what}: shape {sb:?} does not broadcast onto {sa:?}"
            )));
        }
        Ok(())
    }

    fn binary(&mut self, a: Var, b: Var, what: &str, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        self.check_broadcast(a, b, what)?;
        let (va, vb) = (self.value(a), self.value(b));
        let nb = vb.len();
        let bd = vb.data();
        let data = va
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| f(x, bd[i % nb]))
            .collect();
        let value = Tensor::from_raw(va.shape().to_vec(), data);
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, op, rg))
    }

    /// Elementwise `a + b`; `b` may broadcast along leading axes of `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let value = self.value(a).map(|x| x * factor);
        let rg = self.rg(&[a]);
        self.push(value, Op::Scale(a, factor), rg)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    /// `a + c` for a scalar constant `c`.
    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        let cv = self.constant(Tensor::scalar(c))?;
        self.add(a, cv)
    }

    /// 2-D matrix product.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::dim(format!("matmul of {sa:?} and {sb:?}")));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        kernels::gemm(
            1.0,
            MatRef::row_major(self.value(a).data(), m, k),
            MatRef::row_major(self.value(b).data(), k, n),
            0.0,
            &mut out,
        );
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor::from_raw(vec![m, n], out), Op::MatMul(a, b), rg))
    }

    /// `a · bᵀ` for `a: [m, k]`, `b: [n, k]`, without materialising `bᵀ`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[1] {
            return Err(Error::dim(format!("matmul_nt of {sa:?} and {sb:?}")));
        }
        let (m, k, n) = (sa[0], sa[1], sb[0]);
        let mut out = vec![0.0; m * n];
        kernels::gemm(
            1.0,
            MatRef::row_major(self.value(a).data(), m, k),
            MatRef::row_major(self.value(b).data(), n, k).t(),
            0.0,
            &mut out,
        );
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor::from_raw(vec![m, n], out), Op::MatMulNt(a, b), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if s.len() != 2 {
            return Err(Error::dim(format!("transpose needs rank 2, got {s:?}")));
        }
        let data = kernels::permute(self.value(a).data(), &s, &[1, 0]);
        let rg = self.rg(&[a]);
        Ok(self.push(Tensor::from_raw(vec![s[1], s[0]], data), Op::Transpose(a), rg))
    }

    /// Reorders axes: output axis `i` is input axis `axes[i]`.
    pub fn permute(&mut self, a: Var, axes: &[usize]) -> Result<Var> {
        let s = self.shape(a).to_vec();
        let mut seen = vec![false; s.len()];
        if axes.len() != s.len() || axes.iter().any(|&ax| ax >= s.len() || std::mem::replace(&mut seen[ax], true)) {
            return Err(Error::dim(format!("invalid permutation {axes:?} for shape {s:?}")));
        }
        let data = kernels::permute(self.value(a).data(), &s, axes);
        let shape = axes.iter().map(|&ax| s[ax]).collect();
        let rg = self.rg(&[a]);
        Ok(self.push(Tensor::from_raw(shape, data), Op::Permute(a, axes.to_vec()), rg))
    }

    /// 1-D cross-correlation over `B × C_in × T` with kernel `C_out × C_in × k`.
    pub fn conv1d(&mut self, x: Var, kernel: Var, bias: Option<Var>, stride: usize, padding: usize) -> Result<Var> {
        let (sx, sk) = (self.shape(x).to_vec(), self.shape(kernel).to_vec());
        if sx.len() != 3 || sk.len() != 3 || sx[1] != sk[1] {
            return Err(Error::dim(format!("conv1d input {sx:?} with kernel {sk:?}")));
        }
        if stride == 0 {
            return Err(Error::dim("conv1d stride must be at least 1"));
        }
        let t_out = Conv1dGeom::output_len(sx[2], sk[2], stride, padding).ok_or_else(|| {
            Error::dim(format!(
                "conv1d output length < 1 (T={}, k={}, stride={stride}, padding={padding})",
                sx[2], sk[2]
            ))
        })?;
        if let Some(b) = bias {
            if self.shape(b) != [sk[0]] {
                return Err(Error::dim(format!("conv1d bias {:?}, expected [{}]", self.shape(b), sk[0])));
            }
        }
        let geom = Conv1dGeom {
            batch: sx[0],
            c_in: sx[1],
            c_out: sk[0],
            t_in: sx[2],
            t_out,
            k: sk[2],
            stride,
            padding,
        };
        let out = kernels::conv1d_forward(
            &geom,
            self.value(x).data(),
            self.value(kernel).data(),
            bias.map(|b| self.value(b).data()),
        );
        let mut inputs = vec![x, kernel];
        inputs.extend(bias);
        let rg = self.rg(&inputs);
        Ok(self.push(
            Tensor::from_raw(vec![geom.batch, geom.c_out, t_out], out),
            Op::Conv1d { input: x, kernel, bias, geom },
            rg,
        ))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let value = self.value(a).map(f);
        let rg = self.rg(&[a]);
        self.push(value, op, rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.max(0.0), Op::Relu(a))
    }

    /// `ln(1 + eˣ)`, overflow-safe.
    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(a, softplus_scalar, Op::Softplus(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, f64::exp, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        if let Some(bad) = self.value(a).data().iter().find(|&&x| x <= 0.0) {
            return Err(Error::Domain(format!("log of non-positive value {bad}")));
        }
        Ok(self.unary(a, f64::ln, Op::Log(a)))
    }

    /// `|x|`, with subgradient 0 at 0.
    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(a, f64::abs, Op::Abs(a))
    }

    /// `sign(x) ∈ {−1, 0, +1}`; recorded as a constant, so no gradient flows.
    pub fn sign(&mut self, a: Var) -> Var {
        let value = self.value(a).map(sign);
        self.push(value, Op::Leaf, false)
    }

    fn reduced_shape(&self, a: Var, axes: &[usize]) -> Result<(Vec<usize>, Vec<usize>)> {
        let s = self.shape(a);
        let mut sorted = axes.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != axes.len() || sorted.iter().any(|&ax| ax >= s.len()) {
            return Err(Error::dim(format!("invalid reduction axes {axes:?} for shape {s:?}")));
        }
        let out = s
            .iter()
            .enumerate()
            .filter(|(i, _)| !sorted.contains(i))
            .map(|(_, &d)| d)
            .collect();
        Ok((out, sorted))
    }

    /// Sums over `axes`; reduced axes are removed from the shape.
    pub fn sum(&mut self, a: Var, axes: &[usize]) -> Result<Var> {
        let (shape, axes) = self.reduced_shape(a, axes)?;
        let data = reduce_sum(self.value(a), &axes, &shape);
        let rg = self.rg(&[a]);
        Ok(self.push(Tensor::from_raw(shape, data), Op::Sum(a, axes), rg))
    }

    pub fn mean(&mut self, a: Var, axes: &[usize]) -> Result<Var> {
        let (shape, axes) = self.reduced_shape(a, axes)?;
        let count: usize = axes.iter().map(|&ax| self.shape(a)[ax]).product();
        let data = reduce_sum(self.value(a), &axes, &shape)
            .into_iter()
            .map(|v| v / count as f64)
            .collect();
        let rg = self.rg(&[a]);
        Ok(self.push(Tensor::from_raw(shape, data), Op::Mean(a, axes), rg))
    }

    pub fn sum_all(&mut self, a: Var) -> Result<Var> {
        let axes: Vec<usize> = (0..self.shape(a).len()).collect();
        self.sum(a, &axes)
    }

    pub fn mean_all(&mut self, a: Var) -> Result<Var> {
        let axes: Vec<usize> = (0..self.shape(a).len()).collect();
        self.mean(a, &axes)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).reshaped(shape.to_vec())?;
        let rg = self.rg(&[a]);
        Ok(self.push(value, Op::Reshape(a), rg))
    }

    /// Half-open range `[start, end)` along `axis`.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, end: usize) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if axis >= s.len() || start >= end || end > s[axis] {
            return Err(Error::dim(format!(
                "slice [{start}, {end}) on axis {axis} of shape {s:?}"
            )));
        }
        let (outer, len, inner) = split_at_axis(&s, axis);
        let width = end - start;
        let src = self.value(a).data();
        let mut data = Vec::with_capacity(outer * width * inner);
        for o in 0..outer {
            data.extend_from_slice(&src[(o * len + start) * inner..(o * len + end) * inner]);
        }
        let mut shape = s;
        shape[axis] = width;
        let rg = self.rg(&[a]);
        Ok(self.push(Tensor::from_raw(shape, data), Op::Slice { input: a, axis, start }, rg))
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::dim("concat of zero tensors"))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(Error::dim(format!("concat axis {axis} for shape {base:?}")));
        }
        for p in parts {
            let s = self.shape(*p);
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(i, (x, y))| i == axis || x == y);
            if !compatible {
                return Err(Error::dim(format!("concat of {base:?} with {s:?} on axis {axis}")));
            }
        }
        let (outer, _, inner) = split_at_axis(&base, axis);
        let total: usize = parts.iter().map(|p| self.shape(*p)[axis]).sum();
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for p in parts {
                let len = self.shape(*p)[axis];
                data.extend_from_slice(&self.value(*p).data()[o * len * inner..(o + 1) * len * inner]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let rg = self.rg(parts);
        Ok(self.push(Tensor::from_raw(shape, data), Op::Concat(parts.to_vec(), axis), rg))
    }

    /// Exponential moving average along `axis`:
    /// `trend₀ = x₀`, `trendₜ = α·xₜ + (1−α)·trendₜ₋₁`.
    pub fn ema_trend(&mut self, a: Var, alpha: f64, axis: usize) -> Result<Var> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::Parameter(format!("EMA alpha {alpha} outside (0, 1]")));
        }
        let s = self.shape(a).to_vec();
        if axis >= s.len() {
            return Err(Error::dim(format!("EMA axis {axis} for shape {s:?}")));
        }
        let (outer, len, inner) = split_at_axis(&s, axis);
        let mut data = self.value(a).data().to_vec();
        for o in 0..outer {
            let block = &mut data[o * len * inner..(o + 1) * len * inner];
            for t in 1..len {
                let (prev, cur) = block.split_at_mut(t * inner);
                let prev = &prev[(t - 1) * inner..];
                for (c, p) in cur[..inner].iter_mut().zip(prev) {
                    *c = alpha * *c + (1.0 - alpha) * *p;
                }
            }
        }
        let rg = self.rg(&[a]);
        Ok(self.push(Tensor::from_raw(s, data), Op::EmaTrend { input: a, alpha, axis }, rg))
    }

    /// Reverse sweep from a one-element `loss`. Populates leaf gradients,
    /// adding to whatever earlier calls left there.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            if let Op::Leaf = node.op {
                let shape = node.value.shape().to_vec();
                match &mut self.leaf_grads[id] {
                    Some(acc) => acc.data_mut().iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                    slot => *slot = Some(Tensor::from_raw(shape, g)),
                }
                continue;
            }
            self.propagate(id, g, &mut grads);
        }
        Ok(())
    }

    fn propagate(&self, id: usize, g: Vec<f64>, grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[id];
        let want = |v: Var| self.nodes[v.0].requires_grad;
        let val = |v: Var| self.nodes[v.0].value.data();
        match &node.op {
            Op::Leaf => unreachable!(),
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign_b = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                if want(*b) {
                    let nb = self.nodes[b.0].value.len();
                    let mut gb = vec![0.0; nb];
                    for (i, &gi) in g.iter().enumerate() {
                        gb[i % nb] += sign_b * gi;
                    }
                    accumulate(&mut grads[b.0], gb);
                }
                if want(*a) {
                    accumulate(&mut grads[a.0], g);
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                let nb = vb.len();
                if want(*b) {
                    let mut gb = vec![0.0; nb];
                    for (i, &gi) in g.iter().enumerate() {
                        gb[i % nb] += gi * va[i];
                    }
                    accumulate(&mut grads[b.0], gb);
                }
                if want(*a) {
                    let ga = g.iter().enumerate().map(|(i, &gi)| gi * vb[i % nb]).collect();
                    accumulate(&mut grads[a.0], ga);
                }
            }
            Op::Scale(a, f) => accumulate(&mut grads[a.0], g.iter().map(|x| x * f).collect()),
            Op::MatMul(a, b) => {
                let (sa, sb) = (self.nodes[a.0].value.shape(), self.nodes[b.0].value.shape());
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                let gm = MatRef::row_major(&g, m, n);
                if want(*a) {
                    let mut ga = vec![0.0; m * k];
                    kernels::gemm(1.0, gm, MatRef::row_major(val(*b), k, n).t(), 0.0, &mut ga);
                    accumulate(&mut grads[a.0], ga);
                }
                if want(*b) {
                    let mut gb = vec![0.0; k * n];
                    kernels::gemm(1.0, MatRef::row_major(val(*a), m, k).t(), gm, 0.0, &mut gb);
                    accumulate(&mut grads[b.0], gb);
                }
            }
            Op::MatMulNt(a, b) => {
                let (sa, sb) = (self.nodes[a.0].value.shape(), self.nodes[b.0].value.shape());
                let (m, k, n) = (sa[0], sa[1], sb[0]);
                let gm = MatRef::row_major(&g, m, n);
                if want(*a) {
                    let mut ga = vec![0.0; m * k];
                    kernels::gemm(1.0, gm, MatRef::row_major(val(*b), n, k), 0.0, &mut ga);
                    accumulate(&mut grads[a.0], ga);
                }
                if want(*b) {
                    let mut gb = vec![0.0; n * k];
                    kernels::gemm(1.0, gm.t(), MatRef::row_major(val(*a), m, k), 0.0, &mut gb);
                    accumulate(&mut grads[b.0], gb);
                }
            }
            Op::Transpose(a) => {
                let s = node.value.shape();
                accumulate(&mut grads[a.0], kernels::permute(&g, s, &[1, 0]));
            }
            Op::Permute(a, axes) => {
                let inv = kernels::inverse_permutation(axes);
                accumulate(&mut grads[a.0], kernels::permute(&g, node.value.shape(), &inv));
            }
            Op::Conv1d { input, kernel, bias, geom } => {
                let wants = (want(*input), want(*kernel), bias.is_some_and(want));
                let cg = kernels::conv1d_backward(geom, val(*input), val(*kernel), &g, wants);
                if let Some(dx) = cg.dx {
                    accumulate(&mut grads[input.0], dx);
                }
                if let Some(dw) = cg.dw {
                    accumulate(&mut grads[kernel.0], dw);
                }
                if let (Some(b), Some(db)) = (bias, cg.dbias) {
                    accumulate(&mut grads[b.0], db);
                }
            }
            Op::Relu(a) => {
                let x = val(*a);
                let ga = g.iter().zip(x).map(|(gi, &xi)| if xi > 0.0 { *gi } else { 0.0 }).collect();
                accumulate(&mut grads[a.0], ga);
            }
            Op::Softplus(a) => {
                let x = val(*a);
                let ga = g.iter().zip(x).map(|(gi, &xi)| gi * sigmoid(xi)).collect();
                accumulate(&mut grads[a.0], ga);
            }
            Op::Sigmoid(a) => {
                let y = node.value.data();
                let ga = g.iter().zip(y).map(|(gi, &yi)| gi * yi * (1.0 - yi)).collect();
                accumulate(&mut grads[a.0], ga);
            }
            Op::Exp(a) => {
                let y = node.value.data();
                accumulate(&mut grads[a.0], g.iter().zip(y).map(|(gi, yi)| gi * yi).collect());
            }
            Op::Log(a) => {
                let x = val(*a);
                accumulate(&mut grads[a.0], g.iter().zip(x).map(|(gi, xi)| gi / xi).collect());
            }
            Op::Abs(a) => {
                let x = val(*a);
                accumulate(&mut grads[a.0], g.iter().zip(x).map(|(gi, &xi)| gi * sign(xi)).collect());
            }
            Op::Sum(a, axes) | Op::Mean(a, axes) => {
                let in_shape = self.nodes[a.0].value.shape();
                let mut ga = broadcast_back(&g, in_shape, axes);
                if matches!(node.op, Op::Mean(..)) {
                    let count: usize = axes.iter().map(|&ax| in_shape[ax]).product();
                    ga.iter_mut().for_each(|v| *v /= count as f64);
                }
                accumulate(&mut grads[a.0], ga);
            }
            Op::Reshape(a) => accumulate(&mut grads[a.0], g),
            Op::Slice { input, axis, start } => {
                let in_shape = self.nodes[input.0].value.shape();
                let (outer, len, inner) = split_at_axis(in_shape, *axis);
                let width = node.value.shape()[*axis];
                let mut ga = vec![0.0; outer * len * inner];
                for o in 0..outer {
                    ga[(o * len + start) * inner..(o * len + start + width) * inner]
                        .copy_from_slice(&g[o * width * inner..(o + 1) * width * inner]);
                }
                accumulate(&mut grads[input.0], ga);
            }
            Op::Concat(parts, axis) => {
                let (outer, total, inner) = split_at_axis(node.value.shape(), *axis);
                let mut offset = 0;
                for p in parts {
                    let len = self.nodes[p.0].value.shape()[*axis];
                    if want(*p) {
                        let mut gp = Vec::with_capacity(outer * len * inner);
                        for o in 0..outer {
                            let base = (o * total + offset) * inner;
                            gp.extend_from_slice(&g[base..base + len * inner]);
                        }
                        accumulate(&mut grads[p.0], gp);
                    }
                    offset += len;
                }
            }
            Op::EmaTrend { input, alpha, axis } => {
                let (outer, len, inner) = split_at_axis(node.value.shape(), *axis);
                let mut ga = g;
                // acc_t = g_t + (1−α)·acc_{t+1};  dx_t = α·acc_t (t ≥ 1), dx_0 = acc_0
                for o in 0..outer {
                    let block = &mut ga[o * len * inner..(o + 1) * len * inner];
                    for t in (0..len.saturating_sub(1)).rev() {
                        let (cur, next) = block.split_at_mut((t + 1) * inner);
                        for (c, n) in cur[t * inner..].iter_mut().zip(&next[..inner]) {
                            *c += (1.0 - alpha) * *n;
                        }
                    }
                    for v in &mut block[inner..] {
                        *v *= alpha;
                    }
                }
                accumulate(&mut grads[input.0], ga);
            }
        }
    }
}

pub(crate) fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// For each flat input index, the flat index of the reduced output it feeds.
fn reduction_targets(in_shape: &[usize], axes: &[usize]) -> Vec<usize> {
    let rank = in_shape.len();
    let n: usize = in_shape.iter().product();
    // output strides over kept axes, zero for reduced ones
    let mut out_stride = vec![0usize; rank];
    let mut acc = 1;
    for ax in (0..rank).rev() {
        if !axes.contains(&ax) {
            out_stride[ax] = acc;
            acc *= in_shape[ax];
        }
    }
    let mut idx = vec![0usize; rank];
    let mut target = 0usize;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(target);
        let mut ax = rank;
        while ax > 0 {
            ax -= 1;
            idx[ax] += 1;
            target += out_stride[ax];
            if idx[ax] < in_shape[ax] {
                break;
            }
            target -= out_stride[ax] * in_shape[ax];
            idx[ax] = 0;
        }
    }
    out
}

fn reduce_sum(x: &Tensor, axes: &[usize], out_shape: &[usize]) -> Vec<f64> {
    let mut out = vec![0.0; out_shape.iter().product()];
    for (v, t) in x.data().iter().zip(reduction_targets(x.shape(), axes)) {
        out[t] += v;
    }
    out
}

fn broadcast_back(g: &[f64], in_shape: &[usize], axes: &[usize]) -> Vec<f64> {
    reduction_targets(in_shape, axes).into_iter().map(|t| g[t]).collect()
}
