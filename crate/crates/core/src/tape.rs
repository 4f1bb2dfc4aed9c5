//! Reverse-mode automatic differentiation over dense tensors.
//!
//! A [`Tape`] borrows a [`ParamStore`] read-only; parameters enter the graph
//! as leaves without being copied. Every primitive records its inputs, and
//! [`Tape::backward`] walks the nodes in reverse creation order (a valid
//! reverse topological order, since inputs always precede their consumers),
//! accumulating exact analytic partials into a [`Gradients`] buffer keyed by
//! parameter.

use crate::params::{ParamId, ParamStore};
use crate::tensor::{self, Shape, Tensor, TensorError};

/// Handle to a node on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    MatVec(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Concat(Vec<Var>),
    Dot(Var, Var),
    Scale(Var, Var),
    ScaleConst(Var, f64),
    LeakyRelu(Var, f64),
    Tanh(Var),
    Exp(Var),
    Log(Var),
    Softmax(Var),
    LogSoftmax(Var),
    Sum(Var),
    GatherRow(Var, usize),
    Gather(Var, Vec<usize>),
    StackCols(Vec<Var>),
}

enum Value {
    Param(ParamId),
    Owned(Tensor),
}

struct Node {
    value: Value,
    op: Op,
}

pub struct Tape<'s> {
    store: &'s ParamStore,
    nodes: Vec<Node>,
    param_leaves: Vec<Option<Var>>,
}

type OpResult = Result<Var, TensorError>;

impl<'s> Tape<'s> {
    pub fn new(store: &'s ParamStore) -> Self {
        Self {
            store,
            nodes: Vec::new(),
            param_leaves: vec![None; store.len()],
        }
    }

    pub fn store(&self) -> &'s ParamStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        match &self.nodes[v.0].value {
            Value::Param(id) => self.store.get(*id),
            Value::Owned(t) => t,
        }
    }

    /// Value of a scalar node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v).data()[0]
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node {
            value: Value::Owned(value),
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn shape(&self, v: Var) -> Shape {
        self.value(v).shape()
    }

    fn data(&self, v: Var) -> &[f64] {
        self.value(v).data()
    }

    fn vector_len(&self, v: Var, op: &'static str) -> Result<usize, TensorError> {
        match self.shape(v) {
            Shape::Vector(n) => Ok(n),
            s => Err(TensorError::ShapeMismatch {
                op,
                left: s,
                right: Shape::Vector(s.len()),
            }),
        }
    }

    fn same_vector(&self, a: Var, b: Var, op: &'static str) -> Result<usize, TensorError> {
        let n = self.vector_len(a, op)?;
        if self.shape(b) != Shape::Vector(n) {
            return Err(TensorError::ShapeMismatch {
                op,
                left: self.shape(a),
                right: self.shape(b),
            });
        }
        Ok(n)
    }

    /// Non-differentiable input.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Constant)
    }

    /// Leaf bound to a stored parameter. Repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_leaves[id.0] {
            return v;
        }
        self.nodes.push(Node {
            value: Value::Param(id),
            op: Op::Param(id),
        });
        let v = Var(self.nodes.len() - 1);
        self.param_leaves[id.0] = Some(v);
        v
    }

    pub fn matvec(&mut self, m: Var, x: Var) -> OpResult {
        let (rows, cols) = match self.shape(m) {
            Shape::Matrix(r, c) => (r, c),
            s => {
                return Err(TensorError::ShapeMismatch {
                    op: "matvec",
                    left: s,
                    right: self.shape(x),
                })
            }
        };
        if self.shape(x) != Shape::Vector(cols) {
            return Err(TensorError::ShapeMismatch {
                op: "matvec",
                left: Shape::Matrix(rows, cols),
                right: self.shape(x),
            });
        }
        let md = self.data(m);
        let xd = self.data(x);
        let out: Vec<f64> = md.chunks_exact(cols).map(|row| tensor::dot(row, xd)).collect();
        Ok(self.push(Tensor::vector(out), Op::MatVec(m, x)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> OpResult {
        self.same_vector(a, b, "add")?;
        let out = self.data(a).iter().zip(self.data(b)).map(|(x, y)| x + y).collect();
        Ok(self.push(Tensor::vector(out), Op::Add(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> OpResult {
        self.same_vector(a, b, "mul")?;
        let out = self.data(a).iter().zip(self.data(b)).map(|(x, y)| x * y).collect();
        Ok(self.push(Tensor::vector(out), Op::Mul(a, b)))
    }

    pub fn concat(&mut self, parts: &[Var]) -> OpResult {
        if parts.is_empty() {
            return Err(TensorError::Empty { op: "concat" });
        }
        let mut out = Vec::new();
        for &p in parts {
            self.vector_len(p, "concat")?;
            out.extend_from_slice(self.data(p));
        }
        Ok(self.push(Tensor::vector(out), Op::Concat(parts.to_vec())))
    }

    pub fn dot(&mut self, a: Var, b: Var) -> OpResult {
        self.same_vector(a, b, "dot")?;
        let out = tensor::dot(self.data(a), self.data(b));
        Ok(self.push(Tensor::scalar(out), Op::Dot(a, b)))
    }

    /// Vector times a scalar node.
    pub fn scale(&mut self, v: Var, s: Var) -> OpResult {
        self.vector_len(v, "scale")?;
        if self.shape(s) != Shape::Vector(1) {
            return Err(TensorError::ShapeMismatch {
                op: "scale",
                left: self.shape(v),
                right: self.shape(s),
            });
        }
        let k = self.data(s)[0];
        let out = self.data(v).iter().map(|x| x * k).collect();
        Ok(self.push(Tensor::vector(out), Op::Scale(v, s)))
    }

    pub fn scale_const(&mut self, v: Var, k: f64) -> OpResult {
        self.vector_len(v, "scale_const")?;
        let out = self.data(v).iter().map(|x| x * k).collect();
        Ok(self.push(Tensor::vector(out), Op::ScaleConst(v, k)))
    }

    pub fn leaky_relu(&mut self, v: Var, slope: f64) -> OpResult {
        self.vector_len(v, "leaky_relu")?;
        let out = self.data(v).iter().map(|&x| tensor::leaky_relu(x, slope)).collect();
        Ok(self.push(Tensor::vector(out), Op::LeakyRelu(v, slope)))
    }

    pub fn tanh(&mut self, v: Var) -> OpResult {
        self.vector_len(v, "tanh")?;
        let out = self.data(v).iter().map(|x| x.tanh()).collect();
        Ok(self.push(Tensor::vector(out), Op::Tanh(v)))
    }

    pub fn exp(&mut self, v: Var) -> OpResult {
        self.vector_len(v, "exp")?;
        let out = self.data(v).iter().map(|x| x.exp()).collect();
        Ok(self.push(Tensor::vector(out), Op::Exp(v)))
    }

    /// Natural log. Non-positive inputs saturate to `-inf`/NaN.
    pub fn log(&mut self, v: Var) -> OpResult {
        self.vector_len(v, "log")?;
        let out = self.data(v).iter().map(|x| x.ln()).collect();
        Ok(self.push(Tensor::vector(out), Op::Log(v)))
    }

    pub fn softmax(&mut self, v: Var) -> OpResult {
        if self.vector_len(v, "softmax")? == 0 {
            return Err(TensorError::Empty { op: "softmax" });
        }
        let out = tensor::softmax(self.data(v));
        Ok(self.push(Tensor::vector(out), Op::Softmax(v)))
    }

    pub fn log_softmax(&mut self, v: Var) -> OpResult {
        if self.vector_len(v, "log_softmax")? == 0 {
            return Err(TensorError::Empty { op: "log_softmax" });
        }
        let out = tensor::log_softmax(self.data(v));
        Ok(self.push(Tensor::vector(out), Op::LogSoftmax(v)))
    }

    pub fn sum(&mut self, v: Var) -> OpResult {
        self.vector_len(v, "sum")?;
        let out = self.data(v).iter().sum();
        Ok(self.push(Tensor::scalar(out), Op::Sum(v)))
    }

    /// Row `r` of a matrix as a vector.
    pub fn gather_row(&mut self, m: Var, r: usize) -> OpResult {
        let rows = match self.shape(m) {
            Shape::Matrix(rows, _) => rows,
            s => {
                return Err(TensorError::ShapeMismatch {
                    op: "gather_row",
                    left: s,
                    right: Shape::Matrix(s.len(), 1),
                })
            }
        };
        if r >= rows {
            return Err(TensorError::IndexOutOfBounds {
                op: "gather_row",
                index: r,
                len: rows,
            });
        }
        let out = self.value(m).row(r).to_vec();
        Ok(self.push(Tensor::vector(out), Op::GatherRow(m, r)))
    }

    /// Sub-vector at the given positions (repeats allowed).
    pub fn gather(&mut self, v: Var, idx: &[usize]) -> OpResult {
        let n = self.vector_len(v, "gather")?;
        if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
            return Err(TensorError::IndexOutOfBounds {
                op: "gather",
                index: bad,
                len: n,
            });
        }
        let d = self.data(v);
        let out = idx.iter().map(|&i| d[i]).collect();
        Ok(self.push(Tensor::vector(out), Op::Gather(v, idx.to_vec())))
    }

    /// Scalar element `i` of a vector.
    pub fn select(&mut self, v: Var, i: usize) -> OpResult {
        self.gather(v, &[i])
    }

    /// Stacks equal-length vectors as the columns of a matrix, so that
    /// `matvec(stack_cols(vs), w)` is the weighted sum `Σ w_j vs[j]`.
    pub fn stack_cols(&mut self, cols: &[Var]) -> OpResult {
        let first = *cols.first().ok_or(TensorError::Empty { op: "stack_cols" })?;
        let rows = self.vector_len(first, "stack_cols")?;
        for &c in &cols[1..] {
            self.same_vector(first, c, "stack_cols")?;
        }
        let n = cols.len();
        let mut out = vec![0.0; rows * n];
        for (j, &c) in cols.iter().enumerate() {
            for (i, &x) in self.data(c).iter().enumerate() {
                out[i * n + j] = x;
            }
        }
        let t = Tensor::matrix(rows, n, out)?;
        Ok(self.push(t, Op::StackCols(cols.to_vec())))
    }

    /// Back-propagates from a scalar output, returning gradients for every
    /// parameter that participated.
    pub fn backward(&self, output: Var) -> Result<Gradients, TensorError> {
        let out_shape = self.shape(output);
        if out_shape != Shape::Vector(1) {
            return Err(TensorError::NotScalar(out_shape));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..=output.0).map(|_| None).collect();
        grads[output.0] = Some(vec![1.0]);
        let mut result = Gradients::new(self.store);

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => result.accumulate(*id, &g),
                Op::MatVec(m, x) => {
                    let md = self.data(*m);
                    let xd = self.data(*x);
                    let cols = xd.len();
                    let gm = acc(&mut grads, *m, md.len());
                    for (i, gi) in g.iter().enumerate() {
                        if *gi != 0.0 {
                            for (dst, xj) in gm[i * cols..(i + 1) * cols].iter_mut().zip(xd) {
                                *dst += gi * xj;
                            }
                        }
                    }
                    let gx = acc(&mut grads, *x, cols);
                    for (row, gi) in md.chunks_exact(cols).zip(&g) {
                        for (dst, mij) in gx.iter_mut().zip(row) {
                            *dst += mij * gi;
                        }
                    }
                }
                Op::Add(a, b) => {
                    add_into(acc(&mut grads, *a, g.len()), &g);
                    add_into(acc(&mut grads, *b, g.len()), &g);
                }
                Op::Mul(a, b) => {
                    let (ad, bd) = (self.data(*a), self.data(*b));
                    for ((dst, gi), bi) in acc(&mut grads, *a, g.len()).iter_mut().zip(&g).zip(bd) {
                        *dst += gi * bi;
                    }
                    for ((dst, gi), ai) in acc(&mut grads, *b, g.len()).iter_mut().zip(&g).zip(ad) {
                        *dst += gi * ai;
                    }
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let n = self.data(*p).len();
                        add_into(acc(&mut grads, *p, n), &g[off..off + n]);
                        off += n;
                    }
                }
                Op::Dot(a, b) => {
                    let (ad, bd) = (self.data(*a), self.data(*b));
                    for (dst, bi) in acc(&mut grads, *a, ad.len()).iter_mut().zip(bd) {
                        *dst += g[0] * bi;
                    }
                    for (dst, ai) in acc(&mut grads, *b, bd.len()).iter_mut().zip(ad) {
                        *dst += g[0] * ai;
                    }
                }
                Op::Scale(v, s) => {
                    let vd = self.data(*v);
                    let k = self.data(*s)[0];
                    for (dst, gi) in acc(&mut grads, *v, vd.len()).iter_mut().zip(&g) {
                        *dst += gi * k;
                    }
                    acc(&mut grads, *s, 1)[0] += tensor::dot(&g, vd);
                }
                Op::ScaleConst(v, k) => {
                    for (dst, gi) in acc(&mut grads, *v, g.len()).iter_mut().zip(&g) {
                        *dst += gi * k;
                    }
                }
                Op::LeakyRelu(v, slope) => {
                    let vd = self.data(*v);
                    for ((dst, gi), x) in acc(&mut grads, *v, g.len()).iter_mut().zip(&g).zip(vd) {
                        *dst += if *x > 0.0 { *gi } else { gi * slope };
                    }
                }
                Op::Tanh(v) => {
                    let y = self.node_data(idx);
                    for ((dst, gi), yi) in acc(&mut grads, *v, g.len()).iter_mut().zip(&g).zip(y) {
                        *dst += gi * (1.0 - yi * yi);
                    }
                }
                Op::Exp(v) => {
                    let y = self.node_data(idx);
                    for ((dst, gi), yi) in acc(&mut grads, *v, g.len()).iter_mut().zip(&g).zip(y) {
                        *dst += gi * yi;
                    }
                }
                Op::Log(v) => {
                    let x = self.data(*v);
                    for ((dst, gi), xi) in acc(&mut grads, *v, g.len()).iter_mut().zip(&g).zip(x) {
                        *dst += gi / xi;
                    }
                }
                Op::Softmax(v) => {
                    let s = self.node_data(idx);
                    let gs = tensor::dot(&g, s);
                    for ((dst, gi), si) in acc(&mut grads, *v, g.len()).iter_mut().zip(&g).zip(s) {
                        *dst += si * (gi - gs);
                    }
                }
                Op::LogSoftmax(v) => {
                    let y = self.node_data(idx);
                    let total: f64 = g.iter().sum();
                    for ((dst, gi), yi) in acc(&mut grads, *v, g.len()).iter_mut().zip(&g).zip(y) {
                        *dst += gi - yi.exp() * total;
                    }
                }
                Op::Sum(v) => {
                    let n = self.data(*v).len();
                    for dst in acc(&mut grads, *v, n) {
                        *dst += g[0];
                    }
                }
                Op::GatherRow(m, r) => {
                    let md = self.value(*m);
                    let cols = g.len();
                    let gm = acc(&mut grads, *m, md.len());
                    add_into(&mut gm[r * cols..(r + 1) * cols], &g);
                }
                Op::Gather(v, positions) => {
                    let n = self.data(*v).len();
                    let gv = acc(&mut grads, *v, n);
                    for (gi, &p) in g.iter().zip(positions) {
                        gv[p] += gi;
                    }
                }
                Op::StackCols(cols) => {
                    let n = cols.len();
                    for (j, c) in cols.iter().enumerate() {
                        let rows = g.len() / n;
                        let gc = acc(&mut grads, *c, rows);
                        for (i, dst) in gc.iter_mut().enumerate() {
                            *dst += g[i * n + j];
                        }
                    }
                }
            }
        }
        Ok(result)
    }

    fn node_data(&self, idx: usize) -> &[f64] {
        self.data(Var(idx))
    }
}

fn acc(grads: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut [f64] {
    grads[v.0].get_or_insert_with(|| vec![0.0; len])
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Per-parameter gradient buffers. Parameters that did not participate in the
/// computation have no entry and are treated as zero.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn new(store: &ParamStore) -> Self {
        Self {
            grads: vec![None; store.len()],
        }
    }

    fn accumulate(&mut self, id: ParamId, g: &[f64]) {
        match &mut self.grads[id.0] {
            Some(t) => add_into(t.data_mut(), g),
            slot @ None => {
                // Shape is recovered by the caller through the store; a flat
                // vector is enough for arithmetic here.
                *slot = Some(Tensor::vector(g.to_vec()));
            }
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&[f64]> {
        self.grads[id.0].as_ref().map(Tensor::data)
    }

    /// Adds `scale * other` into `self`.
    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        for (dst, src) in self.grads.iter_mut().zip(&other.grads) {
            let Some(src) = src else { continue };
            match dst {
                Some(d) => {
                    for (x, y) in d.data_mut().iter_mut().zip(src.data()) {
                        *x += scale * y;
                    }
                }
                None => {
                    let mut t = src.clone();
                    t.data_mut().iter_mut().for_each(|x| *x *= scale);
                    *dst = Some(t);
                }
            }
        }
    }

    pub fn scale(&mut self, k: f64) {
        for t in self.grads.iter_mut().flatten() {
            t.data_mut().iter_mut().for_each(|x| *x *= k);
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.grads
            .iter()
            .flatten()
            .flat_map(|t| t.data())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Largest `|analytic - numeric| / max(1e-8, |analytic| + |numeric|)`.
    pub max_rel_error: f64,
    /// Parameter name and flat element index of the worst entry.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
}

/// Compares tape gradients against central finite differences for every
/// element of every parameter in `store`.
///
/// `f` must be deterministic given the parameter values; it is re-run twice
/// per element, so keep any randomness it consumes frozen outside.
pub fn grad_check<E, F>(store: &mut ParamStore, eps: f64, mut f: F) -> Result<GradCheckReport, E>
where
    F: FnMut(&mut Tape<'_>) -> Result<Var, E>,
    E: From<TensorError>,
{
    let analytic = {
        let mut tape = Tape::new(store);
        let out = f(&mut tape)?;
        tape.backward(out)?
    };
    let mut eval = |store: &ParamStore| -> Result<f64, E> {
        let mut tape = Tape::new(store);
        let out = f(&mut tape)?;
        Ok(tape.scalar(out))
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
    };
    let ids: Vec<ParamId> = store.ids().collect();
    for id in ids {
        for k in 0..store.get(id).len() {
            let orig = store.get(id).data()[k];
            store.get_mut(id).data_mut()[k] = orig + eps;
            let plus = eval(store)?;
            store.get_mut(id).data_mut()[k] = orig - eps;
            let minus = eval(store)?;
            store.get_mut(id).data_mut()[k] = orig;

            let numeric = (plus - minus) / (2.0 * eps);
            let exact = analytic.get(id).map_or(0.0, |g| g[k]);
            let err = (exact - numeric).abs() / (exact.abs() + numeric.abs()).max(1e-8);
            report.checked += 1;
            if err > report.max_rel_error || err.is_nan() {
                report.max_rel_error = err;
                report.worst = Some((store.name(id).to_owned(), k));
            }
        }
    }
    Ok(report)
}
