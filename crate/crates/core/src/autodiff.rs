//! Tape-based reverse-mode differentiation over dense matrices.
//!
//! Every forward op appends a node holding its result and whatever the
//! backward rule needs. Node inputs always have smaller ids, so a single
//! reverse sweep over the tape visits nodes in topological order.
//!
//! Sparse operands of [`Tape::spmm`] are constants: no gradient flows into
//! them.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dense::Dense;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sparse::Csr;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    id: usize,
    rows: usize,
    cols: usize,
}

impl Var {
    pub fn id(self) -> usize {
        self.id
    }

    pub fn shape(self) -> (usize, usize) {
        (self.rows, self.cols)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    pub const ALL: [Activation; 3] = [Activation::Tanh, Activation::Relu, Activation::Identity];

    pub fn apply<T: Scalar>(self, v: T) -> T {
        match self {
            Activation::Tanh => v.tanh(),
            Activation::Relu => v.max(T::zero()),
            Activation::Identity => v,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Activation::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::invalid("activation", format!("`{s}` is not one of tanh, relu, identity")))
    }
}

enum Op<T> {
    Leaf {
        trainable: bool,
    },
    MatMul(usize, usize),
    Spmm(Arc<Csr<T>>, usize),
    /// `Σ_k (M^k x) θ_k`; keeps `M^k x` for k >= 1.
    HopPoly {
        m: Arc<Csr<T>>,
        x: usize,
        theta: Vec<usize>,
        hops: Vec<Dense<T>>,
    },
    Add(usize, usize),
    AddRow(usize, usize),
    Scale(usize, T),
    Tanh(usize),
    Relu(usize),
    ConcatCols(usize, usize),
    Sum(usize),
    MeanAbsError(usize, usize),
}

struct Node<T> {
    value: Dense<T>,
    op: Op<T>,
    /// Whether any trainable leaf feeds into this node.
    needs_grad: bool,
}

/// Append-only record of a forward computation.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Dense<T> {
        &self.nodes[v.id].value
    }

    fn push(&mut self, value: Dense<T>, op: Op<T>) -> Var {
        let (rows, cols) = value.shape();
        let needs_grad = match &op {
            Op::Leaf { trainable } => *trainable,
            Op::MatMul(a, b) | Op::Add(a, b) | Op::AddRow(a, b) | Op::ConcatCols(a, b) | Op::MeanAbsError(a, b) => {
                self.needs(*a) || self.needs(*b)
            }
            Op::Spmm(_, a) | Op::Scale(a, _) | Op::Tanh(a) | Op::Relu(a) | Op::Sum(a) => self.needs(*a),
            Op::HopPoly { x, theta, .. } => self.needs(*x) || theta.iter().any(|&t| self.needs(t)),
        };
        self.nodes.push(Node { value, op, needs_grad });
        Var {
            id: self.nodes.len() - 1,
            rows,
            cols,
        }
    }

    fn needs(&self, id: usize) -> bool {
        self.nodes[id].needs_grad
    }

    /// Trainable input; [`Gradients`] reports its gradient.
    pub fn leaf(&mut self, value: Dense<T>) -> Var {
        self.push(value, Op::Leaf { trainable: true })
    }

    pub fn constant(&mut self, value: Dense<T>) -> Var {
        self.push(value, Op::Leaf { trainable: false })
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(value, Op::MatMul(a.id, b.id)))
    }

    pub fn spmm(&mut self, m: &Arc<Csr<T>>, x: Var) -> Result<Var> {
        let value = m.spmm(self.value(x))?;
        Ok(self.push(value, Op::Spmm(Arc::clone(m), x.id)))
    }

    /// `Σ_{k=0}^{K} (M^k x) θ_k` for `theta = [θ_0, ..., θ_K]`, as one node.
    ///
    /// The sum is accumulated in order `k = 0, 1, ..., K` with `M^k x`
    /// formed by repeated application of `M`, so the value matches the
    /// equivalent chain of [`Tape::matmul`], [`Tape::spmm`] and
    /// [`Tape::add`] bit for bit.
    pub fn hop_poly(&mut self, m: &Arc<Csr<T>>, x: Var, theta: &[Var]) -> Result<Var> {
        let Some((&first, rest)) = theta.split_first() else {
            return Err(Error::InvalidModel("hop_poly needs at least one weight matrix".into()));
        };
        let mut acc = self.value(x).matmul(self.value(first))?;
        let mut hops = Vec::with_capacity(rest.len());
        for &th in rest {
            let hop = m.spmm(hops.last().unwrap_or(self.value(x)))?;
            acc.add_assign(&hop.matmul(self.value(th))?)?;
            hops.push(hop);
        }
        let op = Op::HopPoly {
            m: Arc::clone(m),
            x: x.id,
            theta: theta.iter().map(|t| t.id).collect(),
            hops,
        };
        Ok(self.push(acc, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        Ok(self.push(value, Op::Add(a.id, b.id)))
    }

    /// Adds the `1 x c` row `bias` to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        if bias.rows != 1 || bias.cols != a.cols {
            return Err(Error::shape(
                "add_row",
                format!("1x{} bias", a.cols),
                format!("{}x{}", bias.rows, bias.cols),
            ));
        }
        let b = self.value(bias).as_slice();
        let mut value = self.value(a).clone();
        let c = a.cols;
        for row in value.as_mut_slice().chunks_mut(c.max(1)) {
            for (v, &bb) in row.iter_mut().zip(b) {
                *v = *v + bb;
            }
        }
        Ok(self.push(value, Op::AddRow(a.id, bias.id)))
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        let value = self.value(a).scale(c);
        self.push(value, Op::Scale(a.id, c))
    }

    /// Elementwise activation. `Identity` records nothing and returns `a`.
    pub fn activation(&mut self, kind: Activation, a: Var) -> Var {
        match kind {
            Activation::Identity => a,
            Activation::Tanh => {
                let value = self.value(a).map(|v| v.tanh());
                self.push(value, Op::Tanh(a.id))
            }
            Activation::Relu => {
                let value = self.value(a).map(|v| v.max(T::zero()));
                self.push(value, Op::Relu(a.id))
            }
        }
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).concat_cols(self.value(b))?;
        Ok(self.push(value, Op::ConcatCols(a.id, b.id)))
    }

    /// Sum of all entries as a `1 x 1` value.
    pub fn sum(&mut self, a: Var) -> Var {
        let value = Dense::filled(1, 1, self.value(a).sum());
        self.push(value, Op::Sum(a.id))
    }

    /// `mean |pred - target|` as a `1 x 1` value.
    pub fn mean_abs_error(&mut self, pred: Var, target: Var) -> Result<Var> {
        let mae = self.value(pred).mean_abs_diff(self.value(target))?;
        Ok(self.push(Dense::filled(1, 1, mae), Op::MeanAbsError(pred.id, target.id)))
    }

    /// Reverse sweep from a scalar root. Fan-out contributions are summed;
    /// relu and `|.|` use subgradient 0 at exactly 0.
    pub fn backward(&self, root: Var) -> Result<Gradients<T>> {
        if root.shape() != (1, 1) {
            return Err(Error::NonScalarRoot {
                rows: root.rows,
                cols: root.cols,
            });
        }
        let mut grads: Vec<Option<Dense<T>>> = Vec::new();
        grads.resize_with(root.id + 1, || None);
        grads[root.id] = Some(Dense::filled(1, 1, T::one()));

        for i in (0..=root.id).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad || matches!(node.op, Op::Leaf { .. }) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            match &node.op {
                Op::Leaf { .. } => unreachable!(),
                Op::MatMul(a, b) => {
                    if self.needs(*a) {
                        let da = g.matmul_t(&self.nodes[*b].value)?;
                        accumulate(&mut grads, *a, da)?;
                    }
                    if self.needs(*b) {
                        let db = self.nodes[*a].value.t_matmul(&g)?;
                        accumulate(&mut grads, *b, db)?;
                    }
                }
                Op::Spmm(m, a) => {
                    let da = m.spmm_transpose(&g)?;
                    accumulate(&mut grads, *a, da)?;
                }
                Op::HopPoly { m, x, theta, hops } => {
                    let xv = &self.nodes[*x].value;
                    for (k, &th) in theta.iter().enumerate() {
                        if self.needs(th) {
                            let p = if k == 0 { xv } else { &hops[k - 1] };
                            accumulate(&mut grads, th, p.t_matmul(&g)?)?;
                        }
                    }
                    if self.needs(*x) {
                        // Horner: dx = Σ_k (Mᵀ)^k g θ_kᵀ
                        let (last, lower) = theta.split_last().expect("non-empty theta");
                        let mut dx = g.matmul_t(&self.nodes[*last].value)?;
                        for &th in lower.iter().rev() {
                            dx = m.spmm_transpose(&dx)?;
                            dx.add_assign(&g.matmul_t(&self.nodes[th].value)?)?;
                        }
                        accumulate(&mut grads, *x, dx)?;
                    }
                }
                Op::Add(a, b) => {
                    if self.needs(*a) {
                        accumulate(&mut grads, *a, g.clone())?;
                    }
                    if self.needs(*b) {
                        accumulate(&mut grads, *b, g)?;
                    }
                }
                Op::AddRow(a, bias) => {
                    let c = g.cols();
                    let mut db = Dense::zeros(1, c);
                    for r in 0..g.rows() {
                        for (d, &v) in db.as_mut_slice().iter_mut().zip(g.row(r)) {
                            *d = *d + v;
                        }
                    }
                    accumulate(&mut grads, *bias, db)?;
                    accumulate(&mut grads, *a, g)?;
                }
                Op::Scale(a, c) => accumulate(&mut grads, *a, g.scale(*c))?,
                Op::Tanh(a) => {
                    let da = g.zip_map(&node.value, |gv, y| gv * (T::one() - y * y));
                    accumulate(&mut grads, *a, da)?;
                }
                Op::Relu(a) => {
                    let x = &self.nodes[*a].value;
                    let da = g.zip_map(x, |gv, xv| if xv > T::zero() { gv } else { T::zero() });
                    accumulate(&mut grads, *a, da)?;
                }
                Op::ConcatCols(a, b) => {
                    let wa = self.nodes[*a].value.cols();
                    let wb = self.nodes[*b].value.cols();
                    if self.needs(*a) {
                        accumulate(&mut grads, *a, g.slice_cols(0, wa))?;
                    }
                    if self.needs(*b) {
                        accumulate(&mut grads, *b, g.slice_cols(wa, wb))?;
                    }
                }
                Op::Sum(a) => {
                    let (r, c) = self.nodes[*a].value.shape();
                    accumulate(&mut grads, *a, Dense::filled(r, c, g.get(0, 0)))?;
                }
                Op::MeanAbsError(p, t) => {
                    let pv = &self.nodes[*p].value;
                    let tv = &self.nodes[*t].value;
                    let w = g.get(0, 0) / T::of(pv.len() as f64);
                    let dp = pv.zip_map(tv, |a, b| {
                        let d = a - b;
                        if d > T::zero() {
                            w
                        } else if d < T::zero() {
                            -w
                        } else {
                            T::zero()
                        }
                    });
                    if self.needs(*t) {
                        accumulate(&mut grads, *t, dp.scale(-T::one()))?;
                    }
                    if self.needs(*p) {
                        accumulate(&mut grads, *p, dp)?;
                    }
                }
            }
        }
        // keep only trainable leaves
        for (i, g) in grads.iter_mut().enumerate() {
            if !matches!(self.nodes[i].op, Op::Leaf { trainable: true }) {
                *g = None;
            }
        }
        Ok(Gradients { grads })
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<Dense<T>>], id: usize, g: Dense<T>) -> Result<()> {
    match &mut grads[id] {
        Some(acc) => acc.add_assign(&g),
        slot @ None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

/// Gradients of a scalar root with respect to trainable leaves.
pub struct Gradients<T> {
    grads: Vec<Option<Dense<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient for `leaf`; zeros of the leaf's shape if the root does not
    /// depend on it.
    pub fn get(&self, leaf: Var) -> Dense<T> {
        self.grads
            .get(leaf.id)
            .and_then(Option::as_ref)
            .cloned()
            .unwrap_or_else(|| Dense::zeros(leaf.rows, leaf.cols))
    }
}
