//! Define-by-run tape for reverse-mode differentiation.
//!
//! Every operation appends a node holding its output value. Nodes whose inputs
//! do not require gradients are stored as constants, so inference passes carry
//! no backward bookkeeping. Node indices are assigned in execution order, which
//! makes the node list a valid topological order; [`Graph::backward`] walks it
//! once in reverse.

use crate::error::{DsvbError, Result};

use super::Tensor;

/// Handle to a node of one [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnaryOp {
    Exp,
    Log,
    Tanh,
    Sigmoid,
    Softplus,
    Square,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

/// The sanctioned operation set, for callers that dispatch on data.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpKind {
    MatMul,
    Add,
    Sub,
    Mul,
    Div,
    Exp,
    Log,
    Tanh,
    Sigmoid,
    Softplus,
    Square,
    Concat,
    Slice { start: usize, len: usize },
    Sum,
    Mean,
}

/// Inputs above this are treated as linear by softplus.
pub const SOFTPLUS_LINEAR_ABOVE: f64 = 30.0;

#[derive(Clone, Copy, Debug)]
enum Side {
    Full,
    Row,
    Scalar,
}

impl Side {
    #[inline(always)]
    fn at(self, i: usize, cols: usize) -> usize {
        match self {
            Side::Full => i,
            Side::Row => i % cols,
            Side::Scalar => 0,
        }
    }
}

#[derive(Clone, Debug)]
enum Record {
    Leaf,
    MatMul { a: Var, b: Var },
    Linear { x: Var, w: Var, b: Var },
    Binary {
        op: BinaryOp,
        lhs: Var,
        rhs: Var,
        sides: (Side, Side),
    },
    Unary { op: UnaryOp, input: Var },
    Scale { input: Var, factor: f64 },
    AddScalar { input: Var },
    Concat { inputs: Vec<Var> },
    Slice { input: Var, start: usize },
    Sum { input: Var },
    Mean { input: Var },
}

struct Node {
    value: Tensor,
    grad: Option<Vec<f64>>,
    requires_grad: bool,
    record: Record,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub(crate) fn softplus(x: f64) -> f64 {
    if x > SOFTPLUS_LINEAR_ABOVE {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// `c = beta * c + op(a) * op(b)` where `a` is logically `[m, k]` and `b` is `[k, n]`.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    c: &mut [f64],
    beta: f64,
) {
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    // SAFETY: slice lengths are checked above against the logical shapes, and the
    // strides describe row-major (or transposed row-major) layouts inside them.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, requires_grad: bool, record: Record) -> Var {
        let record = if requires_grad { record } else { Record::Leaf };
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            record,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, requires_grad, Record::Leaf)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn variable(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    /// Constant copy of `v`: gradients do not flow through the result.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.nodes[v.0].value.clone();
        self.constant(value)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient from the last [`backward`](Self::backward), if `v` was reached.
    pub fn grad(&self, v: Var) -> Option<Tensor> {
        let node = &self.nodes[v.0];
        node.grad.as_ref().map(|g| {
            Tensor::new(node.value.shape().to_vec(), g.clone()).expect("grad matches value shape")
        })
    }

    pub fn grad_or_zeros(&self, v: Var) -> Tensor {
        self.grad(v)
            .unwrap_or_else(|| Tensor::zeros(self.nodes[v.0].value.shape()))
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Dispatch entry point over [`OpKind`].
    pub fn apply(&mut self, op: OpKind, inputs: &[Var]) -> Result<Var> {
        let want = |n: usize| -> Result<()> {
            if inputs.len() == n {
                Ok(())
            } else {
                Err(DsvbError::shape(
                    "apply",
                    format!("{:?} takes {} inputs, got {}", op, n, inputs.len()),
                ))
            }
        };
        match op {
            OpKind::MatMul => {
                want(2)?;
                self.matmul(inputs[0], inputs[1])
            }
            OpKind::Add => {
                want(2)?;
                self.add(inputs[0], inputs[1])
            }
            OpKind::Sub => {
                want(2)?;
                self.sub(inputs[0], inputs[1])
            }
            OpKind::Mul => {
                want(2)?;
                self.mul(inputs[0], inputs[1])
            }
            OpKind::Div => {
                want(2)?;
                self.div(inputs[0], inputs[1])
            }
            OpKind::Exp => {
                want(1)?;
                self.unary(UnaryOp::Exp, inputs[0])
            }
            OpKind::Log => {
                want(1)?;
                self.unary(UnaryOp::Log, inputs[0])
            }
            OpKind::Tanh => {
                want(1)?;
                self.unary(UnaryOp::Tanh, inputs[0])
            }
            OpKind::Sigmoid => {
                want(1)?;
                self.unary(UnaryOp::Sigmoid, inputs[0])
            }
            OpKind::Softplus => {
                want(1)?;
                self.unary(UnaryOp::Softplus, inputs[0])
            }
            OpKind::Square => {
                want(1)?;
                self.unary(UnaryOp::Square, inputs[0])
            }
            OpKind::Concat => self.concat(inputs),
            OpKind::Slice { start, len } => {
                want(1)?;
                self.slice(inputs[0], start, len)
            }
            OpKind::Sum => {
                want(1)?;
                self.sum(inputs[0])
            }
            OpKind::Mean => {
                want(1)?;
                self.mean(inputs[0])
            }
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if av.rank() > 2 || bv.rank() != 2 || av.cols() != bv.rows() {
            return Err(DsvbError::shape(
                "matmul",
                format!("{:?} x {:?}", av.shape(), bv.shape()),
            ));
        }
        let (m, k, n) = (av.rows(), av.cols(), bv.cols());
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, av.data(), false, bv.data(), false, &mut out, 0.0);
        let value = Tensor::new(vec![m, n], out)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, rg, Record::MatMul { a, b }))
    }

    /// Affine map `x · w + b` with `b` broadcast over rows.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xv, wv, bv) = (
            &self.nodes[x.0].value,
            &self.nodes[w.0].value,
            &self.nodes[b.0].value,
        );
        if xv.rank() > 2 || wv.rank() != 2 || xv.cols() != wv.rows() || bv.numel() != wv.cols()
        {
            return Err(DsvbError::shape(
                "linear",
                format!("x {:?}, w {:?}, b {:?}", xv.shape(), wv.shape(), bv.shape()),
            ));
        }
        let (m, k, n) = (xv.rows(), xv.cols(), wv.cols());
        let mut out = Vec::with_capacity(m * n);
        for _ in 0..m {
            out.extend_from_slice(bv.data());
        }
        gemm(m, k, n, xv.data(), false, wv.data(), false, &mut out, 1.0);
        let value = Tensor::new(vec![m, n], out)?;
        let rg = self.rg(&[x, w, b]);
        Ok(self.push(value, rg, Record::Linear { x, w, b }))
    }

    fn sides(&self, op: &'static str, lhs: &Tensor, rhs: &Tensor) -> Result<(Side, Side, Vec<usize>)> {
        if lhs.shape() == rhs.shape() {
            return Ok((Side::Full, Side::Full, lhs.shape().to_vec()));
        }
        if rhs.numel() == 1 {
            return Ok((Side::Full, Side::Scalar, lhs.shape().to_vec()));
        }
        if lhs.numel() == 1 {
            return Ok((Side::Scalar, Side::Full, rhs.shape().to_vec()));
        }
        let is_row = |t: &Tensor| t.rank() == 1 || (t.rank() == 2 && t.rows() == 1);
        if lhs.rank() == 2 && is_row(rhs) && rhs.cols() == lhs.cols() {
            return Ok((Side::Full, Side::Row, lhs.shape().to_vec()));
        }
        if rhs.rank() == 2 && is_row(lhs) && lhs.cols() == rhs.cols() {
            return Ok((Side::Row, Side::Full, rhs.shape().to_vec()));
        }
        Err(DsvbError::shape(
            op,
            format!("{:?} vs {:?}", lhs.shape(), rhs.shape()),
        ))
    }

    pub fn binary(&mut self, op: BinaryOp, lhs: Var, rhs: Var) -> Result<Var> {
        let name = match op {
            BinaryOp::Add => "add",
            BinaryOp::Sub => "sub",
            BinaryOp::Mul => "mul",
            BinaryOp::Div => "div",
        };
        let (lv, rv) = (&self.nodes[lhs.0].value, &self.nodes[rhs.0].value);
        let (ls, rs, shape) = self.sides(name, lv, rv)?;
        if op == BinaryOp::Div && rv.data().iter().any(|&d| d == 0.0) {
            return Err(DsvbError::domain("div", "division by zero"));
        }
        let numel: usize = shape.iter().product();
        let cols = shape.last().copied().unwrap_or(1);
        let (l, r) = (lv.data(), rv.data());
        let out: Vec<f64> = match op {
            BinaryOp::Add => (0..numel)
                .map(|i| l[ls.at(i, cols)] + r[rs.at(i, cols)])
                .collect(),
            BinaryOp::Sub => (0..numel)
                .map(|i| l[ls.at(i, cols)] - r[rs.at(i, cols)])
                .collect(),
            BinaryOp::Mul => (0..numel)
                .map(|i| l[ls.at(i, cols)] * r[rs.at(i, cols)])
                .collect(),
            BinaryOp::Div => (0..numel)
                .map(|i| l[ls.at(i, cols)] / r[rs.at(i, cols)])
                .collect(),
        };
        let value = Tensor::new(shape, out)?;
        let rg = self.rg(&[lhs, rhs]);
        Ok(self.push(
            value,
            rg,
            Record::Binary {
                op,
                lhs,
                rhs,
                sides: (ls, rs),
            },
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Mul, a, b)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Div, a, b)
    }

    pub fn unary(&mut self, op: UnaryOp, input: Var) -> Result<Var> {
        let x = &self.nodes[input.0].value;
        let data: Vec<f64> = match op {
            UnaryOp::Exp => x.data().iter().map(|v| v.exp()).collect(),
            UnaryOp::Log => {
                if let Some(bad) = x.data().iter().find(|&&v| v <= 0.0 || v.is_nan()) {
                    return Err(DsvbError::domain(
                        "log",
                        format!("non-positive input {}", bad),
                    ));
                }
                x.data().iter().map(|v| v.ln()).collect()
            }
            UnaryOp::Tanh => x.data().iter().map(|v| v.tanh()).collect(),
            UnaryOp::Sigmoid => x.data().iter().map(|&v| sigmoid(v)).collect(),
            UnaryOp::Softplus => x.data().iter().map(|&v| softplus(v)).collect(),
            UnaryOp::Square => x.data().iter().map(|v| v * v).collect(),
        };
        let value = Tensor::new(x.shape().to_vec(), data)?;
        let rg = self.rg(&[input]);
        Ok(self.push(value, rg, Record::Unary { op, input }))
    }

    pub fn exp(&mut self, x: Var) -> Result<Var> {
        self.unary(UnaryOp::Exp, x)
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        self.unary(UnaryOp::Log, x)
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.unary(UnaryOp::Tanh, x)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.unary(UnaryOp::Sigmoid, x)
    }

    pub fn softplus(&mut self, x: Var) -> Result<Var> {
        self.unary(UnaryOp::Softplus, x)
    }

    pub fn square(&mut self, x: Var) -> Result<Var> {
        self.unary(UnaryOp::Square, x)
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let xv = &self.nodes[x.0].value;
        let data = xv.data().iter().map(|v| v * factor).collect();
        let value = Tensor::new(xv.shape().to_vec(), data).expect("same shape");
        let rg = self.rg(&[x]);
        self.push(value, rg, Record::Scale { input: x, factor })
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.scale(x, -1.0)
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        let xv = &self.nodes[x.0].value;
        let data = xv.data().iter().map(|v| v + c).collect();
        let value = Tensor::new(xv.shape().to_vec(), data).expect("same shape");
        let rg = self.rg(&[x]);
        self.push(value, rg, Record::AddScalar { input: x })
    }

    /// Concatenate along the last axis. All inputs need the same row count.
    pub fn concat(&mut self, inputs: &[Var]) -> Result<Var> {
        if inputs.is_empty() {
            return Err(DsvbError::shape("concat", "no inputs"));
        }
        let rows = self.nodes[inputs[0].0].value.rows();
        let all_vec = inputs.iter().all(|v| self.nodes[v.0].value.rank() <= 1);
        let mut total = 0;
        for v in inputs {
            let t = &self.nodes[v.0].value;
            if t.rows() != rows || t.rank() > 2 {
                return Err(DsvbError::shape(
                    "concat",
                    format!("row count {} vs {}", t.rows(), rows),
                ));
            }
            total += t.cols();
        }
        let mut out = vec![0.0; rows * total];
        let mut offset = 0;
        for v in inputs {
            let t = &self.nodes[v.0].value;
            let c = t.cols();
            for r in 0..rows {
                out[r * total + offset..r * total + offset + c].copy_from_slice(t.row_slice(r));
            }
            offset += c;
        }
        let shape = if all_vec { vec![total] } else { vec![rows, total] };
        let value = Tensor::new(shape, out)?;
        let rg = self.rg(inputs);
        Ok(self.push(
            value,
            rg,
            Record::Concat {
                inputs: inputs.to_vec(),
            },
        ))
    }

    /// Columns `[start, start + len)` along the last axis.
    pub fn slice(&mut self, input: Var, start: usize, len: usize) -> Result<Var> {
        let t = &self.nodes[input.0].value;
        let cols = t.cols();
        if t.rank() == 0 || start + len > cols {
            return Err(DsvbError::shape(
                "slice",
                format!("[{}, {}) out of {:?}", start, start + len, t.shape()),
            ));
        }
        let rows = t.rows();
        let mut out = Vec::with_capacity(rows * len);
        for r in 0..rows {
            out.extend_from_slice(&t.row_slice(r)[start..start + len]);
        }
        let shape = if t.rank() == 1 { vec![len] } else { vec![rows, len] };
        let value = Tensor::new(shape, out)?;
        let rg = self.rg(&[input]);
        Ok(self.push(value, rg, Record::Slice { input, start }))
    }

    pub fn sum(&mut self, input: Var) -> Result<Var> {
        let s = self.nodes[input.0].value.data().iter().sum();
        let rg = self.rg(&[input]);
        Ok(self.push(Tensor::scalar(s), rg, Record::Sum { input }))
    }

    pub fn mean(&mut self, input: Var) -> Result<Var> {
        let t = &self.nodes[input.0].value;
        if t.numel() == 0 {
            return Err(DsvbError::shape("mean", "empty tensor"));
        }
        let m = t.data().iter().sum::<f64>() / t.numel() as f64;
        let rg = self.rg(&[input]);
        Ok(self.push(Tensor::scalar(m), rg, Record::Mean { input }))
    }

    fn take_grad(&mut self, v: Var) -> Option<Vec<f64>> {
        let node = &mut self.nodes[v.0];
        if !node.requires_grad {
            return None;
        }
        Some(
            node.grad
                .take()
                .unwrap_or_else(|| vec![0.0; node.value.numel()]),
        )
    }

    fn put_grad(&mut self, v: Var, g: Vec<f64>) {
        self.nodes[v.0].grad = Some(g);
    }

    /// Populate gradients of the scalar `output` on every reachable node that
    /// requires them. Gradients from earlier calls are cleared first.
    pub fn backward(&mut self, output: Var) -> Result<()> {
        let shape = self.nodes[output.0].value.shape().to_vec();
        if self.nodes[output.0].value.numel() != 1 {
            return Err(DsvbError::NonScalarOutput(shape));
        }
        for n in &mut self.nodes {
            n.grad = None;
        }
        if !self.nodes[output.0].requires_grad {
            return Ok(());
        }
        self.nodes[output.0].grad = Some(vec![1.0]);
        for i in (0..=output.0).rev() {
            let Some(g) = self.nodes[i].grad.take() else {
                continue;
            };
            self.propagate(i, &g);
            self.nodes[i].grad = Some(g);
        }
        Ok(())
    }

    fn propagate(&mut self, i: usize, g: &[f64]) {
        let record = self.nodes[i].record.clone();
        match record {
            Record::Leaf => {}
            Record::MatMul { a, b } => {
                let (m, k) = {
                    let av = &self.nodes[a.0].value;
                    (av.rows(), av.cols())
                };
                let n = self.nodes[b.0].value.cols();
                if let Some(mut ga) = self.take_grad(a) {
                    gemm(m, n, k, g, false, self.nodes[b.0].value.data(), true, &mut ga, 1.0);
                    self.put_grad(a, ga);
                }
                if let Some(mut gb) = self.take_grad(b) {
                    gemm(k, m, n, self.nodes[a.0].value.data(), true, g, false, &mut gb, 1.0);
                    self.put_grad(b, gb);
                }
            }
            Record::Linear { x, w, b } => {
                let (m, k) = {
                    let xv = &self.nodes[x.0].value;
                    (xv.rows(), xv.cols())
                };
                let n = self.nodes[w.0].value.cols();
                if let Some(mut gx) = self.take_grad(x) {
                    gemm(m, n, k, g, false, self.nodes[w.0].value.data(), true, &mut gx, 1.0);
                    self.put_grad(x, gx);
                }
                if let Some(mut gw) = self.take_grad(w) {
                    gemm(k, m, n, self.nodes[x.0].value.data(), true, g, false, &mut gw, 1.0);
                    self.put_grad(w, gw);
                }
                if let Some(mut gb) = self.take_grad(b) {
                    for r in 0..m {
                        for (acc, gv) in gb.iter_mut().zip(&g[r * n..(r + 1) * n]) {
                            *acc += gv;
                        }
                    }
                    self.put_grad(b, gb);
                }
            }
            Record::Binary {
                op,
                lhs,
                rhs,
                sides: (ls, rs),
            } => {
                let cols = self.nodes[i].value.cols();
                if let Some(mut gl) = self.take_grad(lhs) {
                    let r = self.nodes[rhs.0].value.data();
                    match op {
                        BinaryOp::Add | BinaryOp::Sub => {
                            for (j, gv) in g.iter().enumerate() {
                                gl[ls.at(j, cols)] += gv;
                            }
                        }
                        BinaryOp::Mul => {
                            for (j, gv) in g.iter().enumerate() {
                                gl[ls.at(j, cols)] += gv * r[rs.at(j, cols)];
                            }
                        }
                        BinaryOp::Div => {
                            for (j, gv) in g.iter().enumerate() {
                                gl[ls.at(j, cols)] += gv / r[rs.at(j, cols)];
                            }
                        }
                    }
                    self.put_grad(lhs, gl);
                }
                if let Some(mut gr) = self.take_grad(rhs) {
                    let l = self.nodes[lhs.0].value.data();
                    let r = self.nodes[rhs.0].value.data();
                    match op {
                        BinaryOp::Add => {
                            for (j, gv) in g.iter().enumerate() {
                                gr[rs.at(j, cols)] += gv;
                            }
                        }
                        BinaryOp::Sub => {
                            for (j, gv) in g.iter().enumerate() {
                                gr[rs.at(j, cols)] -= gv;
                            }
                        }
                        BinaryOp::Mul => {
                            for (j, gv) in g.iter().enumerate() {
                                gr[rs.at(j, cols)] += gv * l[ls.at(j, cols)];
                            }
                        }
                        BinaryOp::Div => {
                            for (j, gv) in g.iter().enumerate() {
                                let d = r[rs.at(j, cols)];
                                gr[rs.at(j, cols)] -= gv * l[ls.at(j, cols)] / (d * d);
                            }
                        }
                    }
                    self.put_grad(rhs, gr);
                }
            }
            Record::Unary { op, input } => {
                if let Some(mut gi) = self.take_grad(input) {
                    let x = self.nodes[input.0].value.data();
                    let y = self.nodes[i].value.data();
                    let it = gi.iter_mut().zip(g).zip(x.iter().zip(y));
                    match op {
                        UnaryOp::Exp => it.for_each(|((a, gv), (_, yv))| *a += gv * yv),
                        UnaryOp::Log => it.for_each(|((a, gv), (xv, _))| *a += gv / xv),
                        UnaryOp::Tanh => {
                            it.for_each(|((a, gv), (_, yv))| *a += gv * (1.0 - yv * yv))
                        }
                        UnaryOp::Sigmoid => {
                            it.for_each(|((a, gv), (_, yv))| *a += gv * yv * (1.0 - yv))
                        }
                        UnaryOp::Softplus => it.for_each(|((a, gv), (xv, _))| {
                            let d = if *xv > SOFTPLUS_LINEAR_ABOVE {
                                1.0
                            } else {
                                sigmoid(*xv)
                            };
                            *a += gv * d
                        }),
                        UnaryOp::Square => it.for_each(|((a, gv), (xv, _))| *a += 2.0 * gv * xv),
                    }
                    self.put_grad(input, gi);
                }
            }
            Record::Scale { input, factor } => {
                if let Some(mut gi) = self.take_grad(input) {
                    gi.iter_mut().zip(g).for_each(|(a, gv)| *a += gv * factor);
                    self.put_grad(input, gi);
                }
            }
            Record::AddScalar { input } => {
                if let Some(mut gi) = self.take_grad(input) {
                    gi.iter_mut().zip(g).for_each(|(a, gv)| *a += gv);
                    self.put_grad(input, gi);
                }
            }
            Record::Concat { inputs } => {
                let total = self.nodes[i].value.cols();
                let rows = self.nodes[i].value.rows();
                let mut offset = 0;
                for v in inputs {
                    let c = self.nodes[v.0].value.cols();
                    if let Some(mut gi) = self.take_grad(v) {
                        for r in 0..rows {
                            let src = &g[r * total + offset..r * total + offset + c];
                            for (a, gv) in gi[r * c..(r + 1) * c].iter_mut().zip(src) {
                                *a += gv;
                            }
                        }
                        self.put_grad(v, gi);
                    }
                    offset += c;
                }
            }
            Record::Slice { input, start } => {
                let len = self.nodes[i].value.cols();
                let cols = self.nodes[input.0].value.cols();
                let rows = self.nodes[input.0].value.rows();
                if let Some(mut gi) = self.take_grad(input) {
                    for r in 0..rows {
                        let dst = &mut gi[r * cols + start..r * cols + start + len];
                        for (a, gv) in dst.iter_mut().zip(&g[r * len..(r + 1) * len]) {
                            *a += gv;
                        }
                    }
                    self.put_grad(input, gi);
                }
            }
            Record::Sum { input } => {
                if let Some(mut gi) = self.take_grad(input) {
                    gi.iter_mut().for_each(|a| *a += g[0]);
                    self.put_grad(input, gi);
                }
            }
            Record::Mean { input } => {
                if let Some(mut gi) = self.take_grad(input) {
                    let s = g[0] / gi.len() as f64;
                    gi.iter_mut().for_each(|a| *a += s);
                    self.put_grad(input, gi);
                }
            }
        }
    }
}
