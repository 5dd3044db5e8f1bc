//! Tape-based reverse-mode automatic differentiation over small dense tensors.
//!
//! A [`Tape`] records every primitive applied during a forward pass. Calling
//! [`Tape::backward`] on a scalar output walks the tape once in reverse and
//! produces the gradient of that output with respect to every recorded
//! variable. One backward pass per tape; a second call is an error, which
//! keeps accidental gradient accumulation from going unnoticed.
//!
//! All arithmetic is f64. Shapes are limited to scalars, vectors and
//! matrices, which is all the engine's consumers need.

use std::cell::RefCell;
use thiserror::Error;

/// Shape of a [`Tensor`]: scalar, vector or row-major matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shape {
    Scalar,
    Vector(usize),
    Matrix(usize, usize),
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Scalar => 1,
            Shape::Vector(n) => n,
            Shape::Matrix(r, c) => r * c,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Dense f64 tensor with one of the three supported shapes.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub shape: Shape,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn scalar(v: f64) -> Self {
        Tensor { shape: Shape::Scalar, data: vec![v] }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor { shape: Shape::Vector(data.len()), data }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        Tensor { shape: Shape::Matrix(rows, cols), data }
    }

    pub fn zeros(shape: Shape) -> Self {
        Tensor { shape, data: vec![0.0; shape.len()] }
    }

    pub fn as_scalar(&self) -> f64 {
        assert_eq!(self.shape, Shape::Scalar, "not a scalar tensor");
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AutodiffError {
    #[error("backward requires a scalar loss, got {0:?}")]
    NonScalarLoss(Shape),
    #[error("backward has already been run on this tape")]
    BackwardAlreadyRun,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Neg(usize),
    AddConst(usize),
    MulConst(usize, f64),
    /// Elementwise max(x, lo): clamp from below by a constant.
    ClampMin(usize, f64),
    /// Elementwise clamp into [lo, hi]; gradient is zero where clamped.
    Clamp(usize, f64, f64),
    /// Broadcast: scalar s times tensor t.
    ScaleBy(usize, usize),
    /// Broadcast: scalar s added to every element of t.
    ShiftBy(usize, usize),
    MatVec(usize, usize),
    Tanh(usize),
    Atanh(usize),
    Cosh(usize),
    Sinh(usize),
    Acosh(usize),
    Asinh(usize),
    Sqrt(usize),
    Exp(usize),
    Ln(usize),
    Softplus(usize),
    Sin(usize),
    LeakyRelu(usize, f64),
    Softmax(usize),
    Concat(Vec<usize>),
    Slice(usize, usize, usize),
    Row(usize, usize),
    Sum(usize),
    Dot(usize, usize),
    /// Elementwise max of two tensors; ties route the gradient to the first.
    VMax(usize, usize),
    Index(usize, usize),
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Append-only record of one forward pass.
pub struct Tape {
    inner: RefCell<TapeInner>,
}

struct TapeInner {
    nodes: Vec<Node>,
    backward_done: bool,
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

/// Gradients produced by one backward pass, indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Shape>,
}

impl Gradients {
    /// Gradient with respect to `v`; zero if `v` did not influence the loss.
    pub fn wrt(&self, v: Var<'_>) -> Tensor {
        match &self.grads[v.id] {
            Some(g) => g.clone(),
            None => Tensor::zeros(self.shapes[v.id]),
        }
    }
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { inner: RefCell::new(TapeInner { nodes: Vec::new(), backward_done: false }) }
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Op) -> Var<'_> {
        debug_assert!(value.is_finite(), "non-finite tensor produced by {:?}", op);
        let mut inner = self.inner.borrow_mut();
        let id = inner.nodes.len();
        inner.nodes.push(Node { value, op });
        Var { tape: self, id }
    }

    pub fn leaf(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf)
    }

    pub fn scalar(&self, v: f64) -> Var<'_> {
        self.leaf(Tensor::scalar(v))
    }

    pub fn vector(&self, data: &[f64]) -> Var<'_> {
        self.leaf(Tensor::vector(data.to_vec()))
    }

    pub fn matrix(&self, rows: usize, cols: usize, data: &[f64]) -> Var<'_> {
        self.leaf(Tensor::matrix(rows, cols, data.to_vec()))
    }

    fn value_of(&self, id: usize) -> Tensor {
        self.inner.borrow().nodes[id].value.clone()
    }

    fn shape_of(&self, id: usize) -> Shape {
        self.inner.borrow().nodes[id].value.shape
    }

    /// Reverse pass from a scalar loss. Populates gradients for every node
    /// that influenced the loss; untouched nodes report zero gradients.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients, AutodiffError> {
        assert!(std::ptr::eq(loss.tape, self), "loss var from a different tape");
        let mut inner = self.inner.borrow_mut();
        if inner.backward_done {
            return Err(AutodiffError::BackwardAlreadyRun);
        }
        let loss_shape = inner.nodes[loss.id].value.shape;
        if loss_shape != Shape::Scalar {
            return Err(AutodiffError::NonScalarLoss(loss_shape));
        }
        inner.backward_done = true;

        let n = inner.nodes.len();
        let mut grads: Vec<Option<Tensor>> = vec![None; n];
        grads[loss.id] = Some(Tensor::scalar(1.0));

        for id in (0..n).rev() {
            let g = match grads[id].take() {
                Some(g) => g,
                None => continue,
            };
            let op = inner.nodes[id].op.clone();
            backprop(&inner.nodes, &mut grads, id, &op, &g);
            grads[id] = Some(g);
        }

        let shapes = inner.nodes.iter().map(|n| n.value.shape).collect();
        Ok(Gradients { grads, shapes })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], nodes: &[Node], id: usize, delta: &[f64]) {
    let slot = grads[id].get_or_insert_with(|| Tensor::zeros(nodes[id].value.shape));
    debug_assert_eq!(slot.data.len(), delta.len());
    for (a, d) in slot.data.iter_mut().zip(delta) {
        *a += d;
    }
}

fn backprop(nodes: &[Node], grads: &mut [Option<Tensor>], id: usize, op: &Op, g: &Tensor) {
    match *op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            accumulate(grads, nodes, a, &g.data);
            accumulate(grads, nodes, b, &g.data);
        }
        Op::Sub(a, b) => {
            accumulate(grads, nodes, a, &g.data);
            let neg: Vec<f64> = g.data.iter().map(|v| -v).collect();
            accumulate(grads, nodes, b, &neg);
        }
        Op::Mul(a, b) => {
            let (va, vb) = (&nodes[a].value.data, &nodes[b].value.data);
            let da: Vec<f64> = g.data.iter().zip(vb).map(|(g, b)| g * b).collect();
            let db: Vec<f64> = g.data.iter().zip(va).map(|(g, a)| g * a).collect();
            accumulate(grads, nodes, a, &da);
            accumulate(grads, nodes, b, &db);
        }
        Op::Div(a, b) => {
            let (va, vb) = (&nodes[a].value.data, &nodes[b].value.data);
            let da: Vec<f64> = g.data.iter().zip(vb).map(|(g, b)| g / b).collect();
            let db: Vec<f64> = g
                .data
                .iter()
                .zip(va.iter().zip(vb))
                .map(|(g, (a, b))| -g * a / (b * b))
                .collect();
            accumulate(grads, nodes, a, &da);
            accumulate(grads, nodes, b, &db);
        }
        Op::Neg(a) => {
            let da: Vec<f64> = g.data.iter().map(|v| -v).collect();
            accumulate(grads, nodes, a, &da);
        }
        Op::AddConst(a) => accumulate(grads, nodes, a, &g.data),
        Op::MulConst(a, k) => {
            let da: Vec<f64> = g.data.iter().map(|v| v * k).collect();
            accumulate(grads, nodes, a, &da);
        }
        Op::ClampMin(a, lo) => {
            let va = &nodes[a].value.data;
            let da: Vec<f64> =
                g.data.iter().zip(va).map(|(g, v)| if *v >= lo { *g } else { 0.0 }).collect();
            accumulate(grads, nodes, a, &da);
        }
        Op::Clamp(a, lo, hi) => {
            let va = &nodes[a].value.data;
            let da: Vec<f64> = g
                .data
                .iter()
                .zip(va)
                .map(|(g, v)| if *v >= lo && *v <= hi { *g } else { 0.0 })
                .collect();
            accumulate(grads, nodes, a, &da);
        }
        Op::ScaleBy(s, t) => {
            let sv = nodes[s].value.data[0];
            let tv = &nodes[t].value.data;
            let ds: f64 = g.data.iter().zip(tv).map(|(g, t)| g * t).sum();
            let dt: Vec<f64> = g.data.iter().map(|g| g * sv).collect();
            accumulate(grads, nodes, s, &[ds]);
            accumulate(grads, nodes, t, &dt);
        }
        Op::ShiftBy(s, t) => {
            let ds: f64 = g.data.iter().sum();
            accumulate(grads, nodes, s, &[ds]);
            accumulate(grads, nodes, t, &g.data);
        }
        Op::MatVec(m, v) => {
            let (rows, cols) = match nodes[m].value.shape {
                Shape::Matrix(r, c) => (r, c),
                _ => unreachable!(),
            };
            let mv = &nodes[m].value.data;
            let vv = &nodes[v].value.data;
            let mut dm = vec![0.0; rows * cols];
            let mut dv = vec![0.0; cols];
            for i in 0..rows {
                let gi = g.data[i];
                for j in 0..cols {
                    dm[i * cols + j] += gi * vv[j];
                    dv[j] += gi * mv[i * cols + j];
                }
            }
            accumulate(grads, nodes, m, &dm);
            accumulate(grads, nodes, v, &dv);
        }
        Op::Tanh(a) => {
            let y = &nodes[id].value.data;
            let da: Vec<f64> = g.data.iter().zip(y).map(|(g, y)| g * (1.0 - y * y)).collect();
            accumulate(grads, nodes, a, &da);
        }
        Op::Atanh(a) => {
            let va = &nodes[a].value.data;
            let da: Vec<f64> = g
                .data
                .iter()
                .zip(va)
                .map(|(g, x)| {
                    let xc = x.clamp(-ATANH_BOUND, ATANH_BOUND);
                    g / (1.0 - xc * xc)
                })
                .collect();
            accumulate(grads, nodes, a, &da);
        }
        Op::Cosh(a) => {
            let va = &nodes[a].value.data;
            let da: Vec<f64> = g.data.iter().zip(va).map(|(g, x)| g * x.sinh()).collect();
            accumulate(grads, nodes, a, &da);
        }
        Op::Sinh(a) => {
            let va = &nodes[a].value.data;
            let da: Vec<f64> = g.data.iter().zip(va).map(|(g, x)| g * x.cosh()).collect();
            accumulate(grads, nodes, a, &da);
        }
        Op::Acosh(a) => {
            let va = &nodes[a].value.data;
            let da: Vec<f64> = g
                .data
                .iter()
                .zip(va)
                .map(|(g, x)| {
                    let xc = x.max(ACOSH_BOUND);
                    g / (xc * xc - 1.0).sqrt()
                })
                .collect();
            accumulate(grads, nodes, a, &da);
        }
        Op::Asinh(a) => {
            let va = &nodes[a].value.data;
            let da: Vec<f64> =
                g.data.iter().zip(va).map(|(g, x)| g / (x * x + 1.0).sqrt()).collect();
            accumulate(grads, nodes, a, &da);
        }
        Op::Sqrt(a) => {
            let y = &nodes[id].value.data;
            let da: Vec<f64> =
                g.data.iter().zip(y).map(|(g, y)| g / (2.0 * y.max(1e-300))).collect();
            accumulate(grads, nodes, a, &da);
        }
        Op::Exp(a) => {
            let y = &nodes[id].value.data;
            let da: Vec<f64> = g.data.iter().zip(y).map(|(g, y)| g * y).collect();
            accumulate(grads, nodes, a, &da);
        }
        Op::Ln(a) => {
            let va = &nodes[a].value.data;
            let da: Vec<f64> = g.data.iter().zip(va).map(|(g, x)| g / x.max(LN_FLOOR)).collect();
            accumulate(grads, nodes, a, &da);
        }
        Op::Softplus(a) => {
            let va = &nodes[a].value.data;
            // d/dx softplus = logistic
            let da: Vec<f64> =
                g.data.iter().zip(va).map(|(g, x)| g / (1.0 + (-x).exp())).collect();
            accumulate(grads, nodes, a, &da);
        }
        Op::Sin(a) => {
            let va = &nodes[a].value.data;
            let da: Vec<f64> = g.data.iter().zip(va).map(|(g, x)| g * x.cos()).collect();
            accumulate(grads, nodes, a, &da);
        }
        Op::LeakyRelu(a, slope) => {
            let va = &nodes[a].value.data;
            let da: Vec<f64> = g
                .data
                .iter()
                .zip(va)
                .map(|(g, x)| if *x >= 0.0 { *g } else { g * slope })
                .collect();
            accumulate(grads, nodes, a, &da);
        }
        Op::Softmax(a) => {
            let y = &nodes[id].value.data;
            let gy: f64 = g.data.iter().zip(y).map(|(g, y)| g * y).sum();
            let da: Vec<f64> = g.data.iter().zip(y).map(|(g, y)| y * (g - gy)).collect();
            accumulate(grads, nodes, a, &da);
        }
        Op::Concat(ref parts) => {
            let mut off = 0;
            for &p in parts {
                let len = nodes[p].value.data.len();
                accumulate(grads, nodes, p, &g.data[off..off + len]);
                off += len;
            }
        }
        Op::Slice(a, start, len) => {
            let mut da = vec![0.0; nodes[a].value.data.len()];
            da[start..start + len].copy_from_slice(&g.data);
            accumulate(grads, nodes, a, &da);
        }
        Op::Row(m, i) => {
            let cols = match nodes[m].value.shape {
                Shape::Matrix(_, c) => c,
                _ => unreachable!(),
            };
            let mut dm = vec![0.0; nodes[m].value.data.len()];
            dm[i * cols..(i + 1) * cols].copy_from_slice(&g.data);
            accumulate(grads, nodes, m, &dm);
        }
        Op::Sum(a) => {
            let da = vec![g.data[0]; nodes[a].value.data.len()];
            accumulate(grads, nodes, a, &da);
        }
        Op::Dot(a, b) => {
            let (va, vb) = (&nodes[a].value.data, &nodes[b].value.data);
            let gs = g.data[0];
            let da: Vec<f64> = vb.iter().map(|b| gs * b).collect();
            let db: Vec<f64> = va.iter().map(|a| gs * a).collect();
            accumulate(grads, nodes, a, &da);
            accumulate(grads, nodes, b, &db);
        }
        Op::VMax(a, b) => {
            let (va, vb) = (&nodes[a].value.data, &nodes[b].value.data);
            let mut da = vec![0.0; va.len()];
            let mut db = vec![0.0; vb.len()];
            for i in 0..va.len() {
                // tie goes to the first operand, so fold order fixes ties
                // deterministically to the lowest index
                if va[i] >= vb[i] {
                    da[i] = g.data[i];
                } else {
                    db[i] = g.data[i];
                }
            }
            accumulate(grads, nodes, a, &da);
            accumulate(grads, nodes, b, &db);
        }
        Op::Index(a, i) => {
            let mut da = vec![0.0; nodes[a].value.data.len()];
            da[i] = g.data[0];
            accumulate(grads, nodes, a, &da);
        }
    }
}

const ATANH_BOUND: f64 = 1.0 - 1e-15;
const ACOSH_BOUND: f64 = 1.0;
const LN_FLOOR: f64 = 1e-300;

/// Numerically stable softplus: log1p(exp(-|x|)) + max(x, 0).
pub fn softplus_stable(x: f64) -> f64 {
    (-x.abs()).exp().ln_1p() + x.max(0.0)
}

impl<'t> Var<'t> {
    /// The tape this variable lives on.
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Tensor {
        self.tape.value_of(self.id)
    }

    pub fn shape(&self) -> Shape {
        self.tape.shape_of(self.id)
    }

    pub fn scalar_value(&self) -> f64 {
        self.value().as_scalar()
    }

    fn unary(self, f: impl Fn(f64) -> f64, op: impl FnOnce(usize) -> Op) -> Var<'t> {
        let v = self.value();
        let data = v.data.iter().map(|x| f(*x)).collect();
        self.tape.push(Tensor { shape: v.shape, data }, op(self.id))
    }

    fn binary(self, rhs: Var<'t>, f: impl Fn(f64, f64) -> f64, op: Op) -> Var<'t> {
        let (a, b) = (self.value(), rhs.value());
        assert_eq!(a.shape, b.shape, "shape mismatch in elementwise op");
        let data = a.data.iter().zip(&b.data).map(|(x, y)| f(*x, *y)).collect();
        self.tape.push(Tensor { shape: a.shape, data }, op)
    }

    pub fn add(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, |a, b| a + b, Op::Add(self.id, rhs.id))
    }

    pub fn sub(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, |a, b| a - b, Op::Sub(self.id, rhs.id))
    }

    pub fn mul(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, |a, b| a * b, Op::Mul(self.id, rhs.id))
    }

    pub fn div(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, |a, b| a / b, Op::Div(self.id, rhs.id))
    }

    pub fn neg(self) -> Var<'t> {
        self.unary(|x| -x, |a| Op::Neg(a))
    }

    pub fn add_const(self, k: f64) -> Var<'t> {
        self.unary(|x| x + k, |a| Op::AddConst(a))
    }

    pub fn mul_const(self, k: f64) -> Var<'t> {
        self.unary(|x| x * k, |a| Op::MulConst(a, k))
    }

    pub fn clamp_min(self, lo: f64) -> Var<'t> {
        self.unary(|x| x.max(lo), |a| Op::ClampMin(a, lo))
    }

    pub fn clamp(self, lo: f64, hi: f64) -> Var<'t> {
        self.unary(|x| x.clamp(lo, hi), |a| Op::Clamp(a, lo, hi))
    }

    /// Broadcast multiply: `s` must be scalar.
    pub fn scale_by(self, s: Var<'t>) -> Var<'t> {
        assert_eq!(s.shape(), Shape::Scalar, "scale_by needs a scalar");
        let sv = s.scalar_value();
        let t = self.value();
        let data = t.data.iter().map(|x| sv * x).collect();
        self.tape.push(Tensor { shape: t.shape, data }, Op::ScaleBy(s.id, self.id))
    }

    /// Broadcast add: `s` must be scalar.
    pub fn shift_by(self, s: Var<'t>) -> Var<'t> {
        assert_eq!(s.shape(), Shape::Scalar, "shift_by needs a scalar");
        let sv = s.scalar_value();
        let t = self.value();
        let data = t.data.iter().map(|x| sv + x).collect();
        self.tape.push(Tensor { shape: t.shape, data }, Op::ShiftBy(s.id, self.id))
    }

    /// Matrix-vector product; `self` is the matrix.
    pub fn matvec(self, v: Var<'t>) -> Var<'t> {
        let m = self.value();
        let x = v.value();
        let (rows, cols) = match m.shape {
            Shape::Matrix(r, c) => (r, c),
            other => panic!("matvec needs a matrix, got {:?}", other),
        };
        assert_eq!(x.shape, Shape::Vector(cols), "matvec dimension mismatch");
        let mut out = vec![0.0; rows];
        for i in 0..rows {
            let mut acc = 0.0;
            for j in 0..cols {
                acc += m.data[i * cols + j] * x.data[j];
            }
            out[i] = acc;
        }
        self.tape.push(Tensor::vector(out), Op::MatVec(self.id, v.id))
    }

    pub fn tanh(self) -> Var<'t> {
        self.unary(f64::tanh, |a| Op::Tanh(a))
    }

    /// arctanh with the input clamped just inside (-1, 1).
    pub fn atanh(self) -> Var<'t> {
        self.unary(|x| x.clamp(-ATANH_BOUND, ATANH_BOUND).atanh(), |a| Op::Atanh(a))
    }

    pub fn cosh(self) -> Var<'t> {
        self.unary(f64::cosh, |a| Op::Cosh(a))
    }

    pub fn sinh(self) -> Var<'t> {
        self.unary(f64::sinh, |a| Op::Sinh(a))
    }

    /// arcosh with the argument clamped to >= 1.
    pub fn acosh(self) -> Var<'t> {
        self.unary(|x| x.max(ACOSH_BOUND).acosh(), |a| Op::Acosh(a))
    }

    /// arsinh; smooth everywhere with derivative bounded by 1.
    pub fn asinh(self) -> Var<'t> {
        self.unary(f64::asinh, |a| Op::Asinh(a))
    }

    pub fn sqrt(self) -> Var<'t> {
        self.unary(|x| x.max(0.0).sqrt(), |a| Op::Sqrt(a))
    }

    pub fn exp(self) -> Var<'t> {
        self.unary(f64::exp, |a| Op::Exp(a))
    }

    pub fn ln(self) -> Var<'t> {
        self.unary(|x| x.max(LN_FLOOR).ln(), |a| Op::Ln(a))
    }

    pub fn softplus(self) -> Var<'t> {
        self.unary(softplus_stable, |a| Op::Softplus(a))
    }

    pub fn sin(self) -> Var<'t> {
        self.unary(f64::sin, |a| Op::Sin(a))
    }

    pub fn leaky_relu(self, slope: f64) -> Var<'t> {
        self.unary(|x| if x >= 0.0 { x } else { slope * x }, |a| Op::LeakyRelu(a, slope))
    }

    /// Stable softmax over a vector.
    pub fn softmax(self) -> Var<'t> {
        let v = self.value();
        assert!(matches!(v.shape, Shape::Vector(_)), "softmax needs a vector");
        let m = v.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = v.data.iter().map(|x| (x - m).exp()).collect();
        let z: f64 = exps.iter().sum();
        let data = exps.iter().map(|e| e / z).collect();
        self.tape.push(Tensor { shape: v.shape, data }, Op::Softmax(self.id))
    }

    pub fn slice(self, start: usize, len: usize) -> Var<'t> {
        let v = self.value();
        assert!(start + len <= v.data.len(), "slice out of bounds");
        let data = v.data[start..start + len].to_vec();
        self.tape.push(Tensor::vector(data), Op::Slice(self.id, start, len))
    }

    /// Row `i` of a matrix, as a vector.
    pub fn row(self, i: usize) -> Var<'t> {
        let m = self.value();
        let cols = match m.shape {
            Shape::Matrix(r, c) => {
                assert!(i < r, "row index out of bounds");
                c
            }
            other => panic!("row needs a matrix, got {:?}", other),
        };
        let data = m.data[i * cols..(i + 1) * cols].to_vec();
        self.tape.push(Tensor::vector(data), Op::Row(self.id, i))
    }

    pub fn sum(self) -> Var<'t> {
        let v = self.value();
        self.tape.push(Tensor::scalar(v.data.iter().sum()), Op::Sum(self.id))
    }

    pub fn dot(self, rhs: Var<'t>) -> Var<'t> {
        let (a, b) = (self.value(), rhs.value());
        assert_eq!(a.shape, b.shape, "dot shape mismatch");
        let v = a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum();
        self.tape.push(Tensor::scalar(v), Op::Dot(self.id, rhs.id))
    }

    /// Elementwise max; on a tie the gradient goes to `self`.
    pub fn vmax(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, |a, b| if a >= b { a } else { b }, Op::VMax(self.id, rhs.id))
    }

    pub fn index(self, i: usize) -> Var<'t> {
        let v = self.value();
        assert!(i < v.data.len(), "index out of bounds");
        self.tape.push(Tensor::scalar(v.data[i]), Op::Index(self.id, i))
    }

    /// Euclidean norm, with the squared norm floored to keep the
    /// gradient finite at the origin.
    pub fn norm(self) -> Var<'t> {
        self.dot(self).clamp_min(1e-30).sqrt()
    }
}

/// Concatenate scalars and vectors into one vector.
pub fn concat<'t>(tape: &'t Tape, parts: &[Var<'t>]) -> Var<'t> {
    assert!(!parts.is_empty(), "concat of nothing");
    let mut data = Vec::new();
    for p in parts {
        let v = p.value();
        assert!(!matches!(v.shape, Shape::Matrix(_, _)), "cannot concat matrices");
        data.extend_from_slice(&v.data);
    }
    tape.push(Tensor::vector(data), Op::Concat(parts.iter().map(|p| p.id).collect()))
}

/// Result of comparing reverse-mode gradients against central finite
/// differences, coordinate by coordinate.
pub struct GradCheckReport {
    /// (input index, coordinate, relative error) for every coordinate
    /// exceeding the tolerance.
    pub failures: Vec<(usize, usize, f64)>,
    pub max_rel_err: f64,
    pub coords_checked: usize,
    pub tol: f64,
}

impl GradCheckReport {
    pub fn pass(&self) -> bool {
        self.failures.is_empty()
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    let denom = a.abs().max(b.abs()).max(1.0);
    (a - b).abs() / denom
}

/// Compare the reverse-mode gradient of `f` at `inputs` against central
/// finite differences with the given step.
pub fn grad_check<F>(f: F, inputs: &[Tensor], step: f64, tol: f64) -> GradCheckReport
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Var<'t>,
{
    assert!(step > 0.0, "finite-difference step must be positive");
    let eval = |points: &[Tensor]| -> f64 {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = points.iter().map(|t| tape.leaf(t.clone())).collect();
        f(&tape, &vars).scalar_value()
    };

    // analytic gradient
    let tape = Tape::new();
    let vars: Vec<Var<'_>> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let loss = f(&tape, &vars);
    let grads = tape.backward(loss).expect("grad_check forward produced non-scalar loss");
    let analytic: Vec<Tensor> = vars.iter().map(|v| grads.wrt(*v)).collect();

    let mut failures = Vec::new();
    let mut max_rel = 0.0f64;
    let mut checked = 0;
    for (pi, t) in inputs.iter().enumerate() {
        for ci in 0..t.data.len() {
            let mut plus = inputs.to_vec();
            plus[pi].data[ci] += step;
            let mut minus = inputs.to_vec();
            minus[pi].data[ci] -= step;
            let fd = (eval(&plus) - eval(&minus)) / (2.0 * step);
            let re = rel_err(analytic[pi].data[ci], fd);
            max_rel = max_rel.max(re);
            checked += 1;
            if re > tol {
                failures.push((pi, ci, re));
            }
        }
    }
    GradCheckReport { failures, max_rel_err: max_rel, coords_checked: checked, tol }
}
