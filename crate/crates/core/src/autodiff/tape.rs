//! Reverse-mode differentiation over a per-pass tape of tensor operations.

use std::sync::atomic::{AtomicUsize, Ordering};

use crate::error::{Error, Result};

/// Smoothing used by [`Tape::row_norms`].
pub const NORM_EPS: f64 = 1e-12;

/// Dense row-major tensor of `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    requires_grad: bool,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for shape {shape:?}",
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::Autodiff("non-finite tensor entry".into()));
        }
        Ok(Self {
            shape,
            data,
            requires_grad: false,
        })
    }

    pub fn scalar(x: f64) -> Self {
        Self {
            shape: vec![],
            data: vec![x],
            requires_grad: false,
        }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; len],
            requires_grad: false,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> f64 {
        self.data[0]
    }

    fn rows_cols(&self) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            [r, c] => Ok((*r, *c)),
            s => Err(Error::ShapeMismatch(format!("expected a matrix, got shape {s:?}"))),
        }
    }
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var {
    tape: usize,
    index: usize,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    /// Matrix plus a row vector broadcast over the rows.
    AddRow(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    Relu(usize),
    Silu(usize),
    Tanh(usize),
    Sigmoid(usize),
    Softplus(usize),
    Exp(usize),
    Log(usize),
    Square(usize),
    Sqrt(usize),
    Sum(usize),
    Mean(usize),
    RowNorms(usize),
    GatherCols(usize, Vec<usize>),
    Reshape(usize),
    /// Scalar whose gradient with respect to the input was supplied by the caller.
    External(usize, Vec<f64>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

static NEXT_TAPE: AtomicUsize = AtomicUsize::new(0);

/// Records one forward pass; dropped after [`Tape::backward`].
#[derive(Debug)]
pub struct Tape {
    id: usize,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients from one backward pass, indexed by the variables of the tape.
#[derive(Debug)]
pub struct Gradients {
    tape: usize,
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> Result<&Tensor> {
        if v.tape != self.tape {
            return Err(Error::Autodiff("variable belongs to another tape".into()));
        }
        self.grads
            .get(v.index)
            .and_then(Option::as_ref)
            .ok_or_else(|| Error::Autodiff("variable does not require a gradient".into()))
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.index].value
    }

    fn check(&self, v: Var) -> Result<usize> {
        if v.tape != self.id || v.index >= self.nodes.len() {
            return Err(Error::Autodiff("variable was not recorded on this tape".into()));
        }
        Ok(v.index)
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var {
            tape: self.id,
            index: self.nodes.len() - 1,
        }
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: fn(usize) -> Op) -> Result<Var> {
        let ia = self.check(a)?;
        let va = &self.nodes[ia].value;
        let value = Tensor {
            shape: va.shape.clone(),
            data: va.data.iter().map(|&x| f(x)).collect(),
            requires_grad: va.requires_grad,
        };
        Ok(self.push(value, op(ia)))
    }

    fn binary(
        &mut self,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: fn(usize, usize) -> Op,
    ) -> Result<Var> {
        let (ia, ib) = (self.check(a)?, self.check(b)?);
        let (va, vb) = (&self.nodes[ia].value, &self.nodes[ib].value);
        if va.shape != vb.shape {
            return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", va.shape, vb.shape)));
        }
        let value = Tensor {
            shape: va.shape.clone(),
            data: va.data.iter().zip(&vb.data).map(|(&x, &y)| f(x, y)).collect(),
            requires_grad: va.requires_grad || vb.requires_grad,
        };
        Ok(self.push(value, op(ia, ib)))
    }

    /// Records a leaf. Its gradient is kept when `t.requires_grad()`.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    /// Records a trainable leaf.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.leaf(t.with_grad())
    }

    pub fn constant(&mut self, mut t: Tensor) -> Var {
        t.requires_grad = false;
        self.leaf(t)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.check(a)?, self.check(b)?);
        let (va, vb) = (&self.nodes[ia].value, &self.nodes[ib].value);
        let (m, k) = va.rows_cols()?;
        let (k2, n) = vb.rows_cols()?;
        if k != k2 {
            return Err(Error::ShapeMismatch(format!("matmul {m}x{k} by {k2}x{n}")));
        }
        let mut out = vec![0.0; m * n];
        gemm(false, false, m, k, n, &va.data, &vb.data, &mut out, 0.0);
        let value = Tensor {
            shape: vec![m, n],
            data: out,
            requires_grad: va.requires_grad || vb.requires_grad,
        };
        Ok(self.push(value, Op::MatMul(ia, ib)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, |x, y| x + y, Op::Add)
    }

    /// `a[r, c] + row[c]`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (ia, ib) = (self.check(a)?, self.check(row)?);
        let (va, vb) = (&self.nodes[ia].value, &self.nodes[ib].value);
        let (_, cols) = va.rows_cols()?;
        if vb.len() != cols {
            return Err(Error::ShapeMismatch(format!(
                "row of {} added to {cols} columns",
                vb.len()
            )));
        }
        let data = va
            .data
            .iter()
            .enumerate()
            .map(|(k, x)| x + vb.data[k % cols])
            .collect();
        let value = Tensor {
            shape: va.shape.clone(),
            data,
            requires_grad: va.requires_grad || vb.requires_grad,
        };
        Ok(self.push(value, Op::AddRow(ia, ib)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, |x, y| x - y, Op::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, |x, y| x * y, Op::Mul)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let ia = self.check(a)?;
        let va = &self.nodes[ia].value;
        let value = Tensor {
            shape: va.shape.clone(),
            data: va.data.iter().map(|x| c * x).collect(),
            requires_grad: va.requires_grad,
        };
        Ok(self.push(value, Op::Scale(ia, c)))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        self.unary(a, |x| x + c, Op::AddScalar)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary(a, |x| x.max(0.0), Op::Relu)
    }

    pub fn silu(&mut self, a: Var) -> Result<Var> {
        self.unary(a, |x| x * sigmoid(x), Op::Silu)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary(a, f64::tanh, Op::Tanh)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary(a, sigmoid, Op::Sigmoid)
    }

    /// `ln(1 + eˣ)`, evaluated without overflow.
    pub fn softplus(&mut self, a: Var) -> Result<Var> {
        self.unary(a, softplus, Op::Softplus)
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.unary(a, f64::exp, Op::Exp)
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.unary(a, f64::ln, Op::Log)
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.unary(a, |x| x * x, Op::Square)
    }

    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        self.unary(a, f64::sqrt, Op::Sqrt)
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let ia = self.check(a)?;
        let va = &self.nodes[ia].value;
        let value = Tensor {
            shape: vec![],
            data: vec![va.data.iter().sum()],
            requires_grad: va.requires_grad,
        };
        Ok(self.push(value, Op::Sum(ia)))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let ia = self.check(a)?;
        let va = &self.nodes[ia].value;
        let value = Tensor {
            shape: vec![],
            data: vec![va.data.iter().sum::<f64>() / va.len() as f64],
            requires_grad: va.requires_grad,
        };
        Ok(self.push(value, Op::Mean(ia)))
    }

    /// `√(Σ_c a[r, c]² + ε²)` for every row, as a vector.
    pub fn row_norms(&mut self, a: Var) -> Result<Var> {
        let ia = self.check(a)?;
        let va = &self.nodes[ia].value;
        let (rows, cols) = va.rows_cols()?;
        let data = va
            .data
            .chunks_exact(cols.max(1))
            .map(|r| (r.iter().map(|x| x * x).sum::<f64>() + NORM_EPS * NORM_EPS).sqrt())
            .collect();
        let value = Tensor {
            shape: vec![rows],
            data,
            requires_grad: va.requires_grad,
        };
        Ok(self.push(value, Op::RowNorms(ia)))
    }

    /// Selects columns of a matrix (duplicates allowed).
    pub fn gather_cols(&mut self, a: Var, cols: &[usize]) -> Result<Var> {
        let ia = self.check(a)?;
        let va = &self.nodes[ia].value;
        let (rows, width) = va.rows_cols()?;
        if let Some(&c) = cols.iter().find(|&&c| c >= width) {
            return Err(Error::ShapeMismatch(format!("column {c} of {width}")));
        }
        let mut data = Vec::with_capacity(rows * cols.len());
        for r in 0..rows {
            data.extend(cols.iter().map(|&c| va.data[r * width + c]));
        }
        let value = Tensor {
            shape: vec![rows, cols.len()],
            data,
            requires_grad: va.requires_grad,
        };
        Ok(self.push(value, Op::GatherCols(ia, cols.to_vec())))
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let ia = self.check(a)?;
        let va = &self.nodes[ia].value;
        if shape.iter().product::<usize>() != va.len() {
            return Err(Error::ShapeMismatch(format!(
                "cannot reshape {:?} to {shape:?}",
                va.shape
            )));
        }
        let value = Tensor {
            shape,
            data: va.data.clone(),
            requires_grad: va.requires_grad,
        };
        Ok(self.push(value, Op::Reshape(ia)))
    }

    /// Scalar node with value `value` and `∂value/∂input = grad`, for losses
    /// whose gradients are computed outside the tape.
    pub fn external(&mut self, input: Var, value: f64, grad: Vec<f64>) -> Result<Var> {
        let ia = self.check(input)?;
        let vi = &self.nodes[ia].value;
        if grad.len() != vi.len() {
            return Err(Error::ShapeMismatch(format!(
                "external gradient of {} for input of {}",
                grad.len(),
                vi.len()
            )));
        }
        let value = Tensor {
            shape: vec![],
            data: vec![value],
            requires_grad: vi.requires_grad,
        };
        Ok(self.push(value, Op::External(ia, grad)))
    }

    /// Back-propagates from a scalar root. Gradients are returned for every
    /// leaf with `requires_grad` (and every node depending on one).
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let ir = self.check(root)?;
        if self.nodes[ir].value.len() != 1 {
            return Err(Error::Autodiff(format!(
                "backward needs a scalar root, got shape {:?}",
                self.nodes[ir].value.shape
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[ir] = Some(vec![1.0]);

        for i in (0..=ir).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.value.requires_grad {
                continue;
            }
            let out = &node.value.data;
            let mut acc = |target: usize, contrib: Vec<f64>| {
                if !self.nodes[target].value.requires_grad {
                    return;
                }
                match &mut grads[target] {
                    Some(existing) => existing.iter_mut().zip(contrib).for_each(|(e, c)| *e += c),
                    slot => *slot = Some(contrib),
                }
            };
            let x = |k: usize| &self.nodes[k].value.data;
            match &node.op {
                Op::Leaf => {
                    grads[i] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let (m, k) = self.nodes[*a].value.rows_cols()?;
                    let (_, n) = self.nodes[*b].value.rows_cols()?;
                    if self.nodes[*a].value.requires_grad {
                        let mut ga = vec![0.0; m * k];
                        gemm(false, true, m, n, k, &g, x(*b), &mut ga, 0.0);
                        acc(*a, ga);
                    }
                    if self.nodes[*b].value.requires_grad {
                        let mut gb = vec![0.0; k * n];
                        gemm(true, false, k, m, n, x(*a), &g, &mut gb, 0.0);
                        acc(*b, gb);
                    }
                }
                Op::Add(a, b) => {
                    acc(*a, g.clone());
                    acc(*b, g);
                }
                Op::AddRow(a, b) => {
                    let cols = self.nodes[*b].value.len();
                    let mut gb = vec![0.0; cols];
                    for (k, v) in g.iter().enumerate() {
                        gb[k % cols] += v;
                    }
                    acc(*a, g);
                    acc(*b, gb);
                }
                Op::Sub(a, b) => {
                    acc(*b, g.iter().map(|v| -v).collect());
                    acc(*a, g);
                }
                Op::Mul(a, b) => {
                    acc(*a, g.iter().zip(x(*b)).map(|(v, y)| v * y).collect());
                    acc(*b, g.iter().zip(x(*a)).map(|(v, y)| v * y).collect());
                }
                Op::Scale(a, c) => acc(*a, g.iter().map(|v| v * c).collect()),
                Op::AddScalar(a) | Op::Reshape(a) => acc(*a, g),
                Op::Relu(a) => acc(
                    *a,
                    g.iter().zip(x(*a)).map(|(v, &u)| if u > 0.0 { *v } else { 0.0 }).collect(),
                ),
                Op::Silu(a) => acc(
                    *a,
                    g.iter()
                        .zip(x(*a))
                        .map(|(v, &u)| {
                            let s = sigmoid(u);
                            v * s * (1.0 + u * (1.0 - s))
                        })
                        .collect(),
                ),
                Op::Tanh(a) => acc(*a, g.iter().zip(out).map(|(v, t)| v * (1.0 - t * t)).collect()),
                Op::Sigmoid(a) => acc(*a, g.iter().zip(out).map(|(v, s)| v * s * (1.0 - s)).collect()),
                Op::Softplus(a) => {
                    acc(*a, g.iter().zip(x(*a)).map(|(v, &u)| v * sigmoid(u)).collect())
                }
                Op::Exp(a) => acc(*a, g.iter().zip(out).map(|(v, e)| v * e).collect()),
                Op::Log(a) => acc(*a, g.iter().zip(x(*a)).map(|(v, u)| v / u).collect()),
                Op::Square(a) => acc(*a, g.iter().zip(x(*a)).map(|(v, u)| 2.0 * v * u).collect()),
                Op::Sqrt(a) => acc(*a, g.iter().zip(out).map(|(v, s)| v / (2.0 * s)).collect()),
                Op::Sum(a) => acc(*a, vec![g[0]; x(*a).len()]),
                Op::Mean(a) => {
                    let len = x(*a).len();
                    acc(*a, vec![g[0] / len as f64; len])
                }
                Op::RowNorms(a) => {
                    let cols = self.nodes[*a].value.rows_cols()?.1.max(1);
                    let ga = x(*a)
                        .iter()
                        .enumerate()
                        .map(|(k, u)| g[k / cols] * u / out[k / cols])
                        .collect();
                    acc(*a, ga)
                }
                Op::GatherCols(a, cols) => {
                    let width = self.nodes[*a].value.rows_cols()?.1;
                    let mut ga = vec![0.0; x(*a).len()];
                    for (k, v) in g.iter().enumerate() {
                        let (r, c) = (k / cols.len(), cols[k % cols.len()]);
                        ga[r * width + c] += v;
                    }
                    acc(*a, ga)
                }
                Op::External(a, grad) => acc(*a, grad.iter().map(|d| g[0] * d).collect()),
            }
        }

        let grads = self
            .nodes
            .iter()
            .zip(grads)
            .map(|(node, g)| match (&node.op, g) {
                (Op::Leaf, Some(data)) if node.value.requires_grad => Some(Tensor {
                    shape: node.value.shape.clone(),
                    data,
                    requires_grad: false,
                }),
                (Op::Leaf, None) if node.value.requires_grad => {
                    Some(Tensor::zeros(node.value.shape.clone()))
                }
                _ => None,
            })
            .collect();
        Ok(Gradients {
            tape: self.id,
            grads,
        })
    }
}

/// `c = op(a)·op(b) + beta·c` for row-major operands, where `op(a)` is
/// `m × k` and `op(b)` is `k × n`.
#[allow(clippy::too_many_arguments)]
fn gemm(ta: bool, tb: bool, m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64], beta: f64) {
    if m == 0 || n == 0 {
        return;
    }
    // Strides of the stored (untransposed) matrices.
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
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
