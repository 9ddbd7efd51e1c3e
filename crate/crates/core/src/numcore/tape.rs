//! Tape-based reverse-mode differentiation over [`Tensor2`] values.
//!
//! Every forward operation appends a node whose parents already live on the
//! tape, so node order is a topological order and the backward pass is a
//! single reverse sweep. Parameters are borrowed from a [`ParamStore`] rather
//! than copied; after [`Tape::backward`] their gradients are flushed into a
//! [`Grads`] buffer with [`Tape::accumulate_param_grads`].

use std::borrow::Cow;

use super::params::{Grads, ParamId, ParamStore};
use super::tensor::Tensor2;
use crate::error::{Error, Result};

/// Lower/upper clamp applied to probabilities inside the cross-entropy node.
pub const PROB_CLAMP: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Const,
    Param(ParamId),
    Gather { param: ParamId, rows: Vec<usize> },
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Hadamard(NodeId, NodeId),
    MulCol(NodeId, NodeId),
    OneMinus(NodeId),
    Shift(NodeId),
    ConcatCols(NodeId, NodeId),
    ConcatRows(Vec<NodeId>),
    RepeatRows(NodeId),
    Transpose(NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    RowSoftmax(NodeId, Option<Vec<bool>>),
    MeanRows(NodeId, Vec<bool>),
    MaskRows(NodeId, Vec<bool>),
    SumAll(NodeId),
    Bce { probs: NodeId, label: f64 },
}

struct Node<'p> {
    value: Cow<'p, Tensor2>,
    grad: Option<Tensor2>,
    op: Op,
}

/// A single-threaded computation tape bound to one parameter store.
pub struct Tape<'p> {
    store: &'p ParamStore,
    nodes: Vec<Node<'p>>,
    param_nodes: Vec<Option<NodeId>>,
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl<'p> Tape<'p> {
    pub fn new(store: &'p ParamStore) -> Self {
        Self {
            store,
            nodes: Vec::new(),
            param_nodes: vec![None; store.len()],
        }
    }

    pub fn store(&self) -> &'p ParamStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Cow<'p, Tensor2>, op: Op) -> NodeId {
        self.nodes.push(Node {
            value,
            grad: None,
            op,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Tensor2 {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> (usize, usize) {
        self.nodes[id.0].value.shape()
    }

    /// Gradient of `id` after [`Tape::backward`]; zeros if unreached.
    pub fn grad(&self, id: NodeId) -> Tensor2 {
        let node = &self.nodes[id.0];
        node.grad.clone().unwrap_or_else(|| {
            let (r, c) = node.value.shape();
            Tensor2::zeros(r, c)
        })
    }

    /// A differentiable input that is not a stored parameter.
    pub fn leaf(&mut self, value: Tensor2) -> NodeId {
        self.push(Cow::Owned(value), Op::Leaf)
    }

    /// A value that receives no gradient (adjacency, masks).
    pub fn constant(&mut self, value: Tensor2) -> NodeId {
        self.push(Cow::Owned(value), Op::Const)
    }

    fn is_const(&self, id: NodeId) -> bool {
        matches!(self.nodes[id.0].op, Op::Const)
    }

    /// Node for a stored parameter; repeated calls return the same node so
    /// every use accumulates into one gradient.
    pub fn param(&mut self, id: ParamId) -> NodeId {
        if let Some(n) = self.param_nodes[id.0] {
            return n;
        }
        let n = self.push(Cow::Borrowed(self.store.get(id)), Op::Param(id));
        self.param_nodes[id.0] = Some(n);
        n
    }

    /// Selects rows of a stored table (embedding lookup).
    pub fn gather(&mut self, id: ParamId, rows: &[usize]) -> Result<NodeId> {
        let table = self.store.get(id);
        let mut out = Tensor2::zeros(rows.len(), table.cols());
        for (i, &r) in rows.iter().enumerate() {
            if r >= table.rows() {
                return Err(Error::Model(format!(
                    "row {r} out of range for table {} with {} rows",
                    self.store.name(id),
                    table.rows()
                )));
            }
            out.row_mut(i).copy_from_slice(table.row(r));
        }
        Ok(self.push(
            Cow::Owned(out),
            Op::Gather {
                param: id,
                rows: rows.to_vec(),
            },
        ))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.push(Cow::Owned(v), Op::MatMul(a, b)))
    }

    fn same_shape(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(op, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("add", a, b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        Ok(self.push(Cow::Owned(v), Op::Add(a, b)))
    }

    /// `a + row` with `row` (1×c) broadcast over every row of `a`.
    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> Result<NodeId> {
        let (ar, ac) = self.shape(a);
        if self.shape(row) != (1, ac) {
            return Err(Error::shape("add_row", (ar, ac), self.shape(row)));
        }
        let bias = self.value(row).row(0).to_vec();
        let mut v = self.value(a).clone();
        for r in 0..ar {
            for (x, b) in v.row_mut(r).iter_mut().zip(&bias) {
                *x += b;
            }
        }
        Ok(self.push(Cow::Owned(v), Op::AddRow(a, row)))
    }

    pub fn hadamard(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("hadamard", a, b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        Ok(self.push(Cow::Owned(v), Op::Hadamard(a, b)))
    }

    /// `a ⊙ col` with `col` (n×1) broadcast across the columns of `a`.
    pub fn mul_col(&mut self, a: NodeId, col: NodeId) -> Result<NodeId> {
        let (ar, ac) = self.shape(a);
        if self.shape(col) != (ar, 1) {
            return Err(Error::shape("mul_col", (ar, ac), self.shape(col)));
        }
        let mut v = self.value(a).clone();
        for r in 0..ar {
            let s = self.value(col).get(r, 0);
            for x in v.row_mut(r) {
                *x *= s;
            }
        }
        Ok(self.push(Cow::Owned(v), Op::MulCol(a, col)))
    }

    /// `1 - a`, elementwise.
    pub fn one_minus(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| 1.0 - x);
        self.push(Cow::Owned(v), Op::OneMinus(a))
    }

    /// `a + c` for a constant scalar `c`.
    pub fn shift(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.value(a).map(|x| x + c);
        self.push(Cow::Owned(v), Op::Shift(a))
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ar, ac) = self.shape(a);
        let (br, bc) = self.shape(b);
        if ar != br {
            return Err(Error::shape("concat_cols", (ar, ac), (br, bc)));
        }
        let mut v = Tensor2::zeros(ar, ac + bc);
        for r in 0..ar {
            let row = v.row_mut(r);
            row[..ac].copy_from_slice(self.nodes[a.0].value.row(r));
            row[ac..].copy_from_slice(self.nodes[b.0].value.row(r));
        }
        Ok(self.push(Cow::Owned(v), Op::ConcatCols(a, b)))
    }

    /// Stacks the given nodes vertically; all must share a column count.
    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Model("concat_rows of nothing".into()))?;
        let cols = self.shape(*first).1;
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            if self.shape(p).1 != cols {
                return Err(Error::shape("concat_rows", self.shape(*first), self.shape(p)));
            }
            rows += self.shape(p).0;
            data.extend_from_slice(self.value(p).data());
        }
        let v = Tensor2::from_vec(rows, cols, data)?;
        Ok(self.push(Cow::Owned(v), Op::ConcatRows(parts.to_vec())))
    }

    /// Repeats a 1×c row `n` times into an n×c matrix.
    pub fn repeat_rows(&mut self, row: NodeId, n: usize) -> Result<NodeId> {
        let (r, c) = self.shape(row);
        if r != 1 {
            return Err(Error::shape("repeat_rows", (r, c), (1, c)));
        }
        let src = self.value(row).row(0).to_vec();
        let mut v = Tensor2::zeros(n, c);
        for i in 0..n {
            v.row_mut(i).copy_from_slice(&src);
        }
        Ok(self.push(Cow::Owned(v), Op::RepeatRows(row)))
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).transpose();
        self.push(Cow::Owned(v), Op::Transpose(a))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(sigmoid);
        self.push(Cow::Owned(v), Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::tanh);
        self.push(Cow::Owned(v), Op::Tanh(a))
    }

    /// Softmax along each row. Entries whose column is `false` in `mask`
    /// get exactly zero weight and no gradient.
    pub fn row_softmax(&mut self, a: NodeId, mask: Option<&[bool]>) -> Result<NodeId> {
        let (rows, cols) = self.shape(a);
        if let Some(m) = mask {
            if m.len() != cols {
                return Err(Error::shape("row_softmax mask", (rows, cols), (1, m.len())));
            }
            if !m.iter().any(|&x| x) {
                return Err(Error::Model("softmax over an empty support".into()));
            }
        } else if cols == 0 {
            return Err(Error::Model("softmax over an empty support".into()));
        }
        let live = |j: usize| mask.is_none_or(|m| m[j]);
        let src = self.value(a);
        let mut v = Tensor2::zeros(rows, cols);
        for r in 0..rows {
            let row = src.row(r);
            let max = (0..cols)
                .filter(|&j| live(j))
                .map(|j| row[j])
                .fold(f64::NEG_INFINITY, f64::max);
            let out = v.row_mut(r);
            let mut total = 0.0;
            for j in 0..cols {
                if live(j) {
                    out[j] = (row[j] - max).exp();
                    total += out[j];
                }
            }
            for x in out.iter_mut() {
                *x /= total;
            }
        }
        Ok(self.push(Cow::Owned(v), Op::RowSoftmax(a, mask.map(<[bool]>::to_vec))))
    }

    /// Mean over the rows selected by `mask`, producing a 1×c row.
    pub fn mean_rows(&mut self, a: NodeId, mask: &[bool]) -> Result<NodeId> {
        let (rows, cols) = self.shape(a);
        if mask.len() != rows {
            return Err(Error::shape("mean_rows mask", (rows, cols), (mask.len(), 1)));
        }
        let live = mask.iter().filter(|&&m| m).count();
        if live == 0 {
            return Err(Error::Model("mean over zero live rows".into()));
        }
        let src = self.value(a);
        let mut v = Tensor2::zeros(1, cols);
        for r in (0..rows).filter(|&r| mask[r]) {
            for (o, x) in v.row_mut(0).iter_mut().zip(src.row(r)) {
                *o += x;
            }
        }
        let n = live as f64;
        for o in v.data_mut() {
            *o /= n;
        }
        Ok(self.push(Cow::Owned(v), Op::MeanRows(a, mask.to_vec())))
    }

    /// Zeroes every row whose mask entry is `false`.
    pub fn mask_rows(&mut self, a: NodeId, mask: &[bool]) -> Result<NodeId> {
        let (rows, cols) = self.shape(a);
        if mask.len() != rows {
            return Err(Error::shape("mask_rows mask", (rows, cols), (mask.len(), 1)));
        }
        let mut v = self.value(a).clone();
        for r in (0..rows).filter(|&r| !mask[r]) {
            v.row_mut(r).fill(0.0);
        }
        Ok(self.push(Cow::Owned(v), Op::MaskRows(a, mask.to_vec())))
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let s: f64 = self.value(a).data().iter().sum();
        self.push(Cow::Owned(Tensor2::filled(1, 1, s)), Op::SumAll(a))
    }

    /// Binary cross-entropy on a 1×2 probability row, where column 1 is the
    /// probability of class 1. The probability is clamped to
    /// `[PROB_CLAMP, 1 - PROB_CLAMP]`.
    pub fn bce(&mut self, probs: NodeId, label: u8) -> Result<NodeId> {
        if self.shape(probs) != (1, 2) {
            return Err(Error::shape("bce", self.shape(probs), (1, 2)));
        }
        let y = f64::from(label);
        let p = self.value(probs).get(0, 1).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        let loss = -(y * p.ln() + (1.0 - y) * (1.0 - p).ln());
        Ok(self.push(
            Cow::Owned(Tensor2::filled(1, 1, loss)),
            Op::Bce { probs, label: y },
        ))
    }

    /// Reverse sweep from `root`, seeding its gradient with `seed` in every
    /// entry. Gradients accumulate on top of any earlier backward call.
    pub fn backward(&mut self, root: NodeId, seed: f64) {
        let (r, c) = self.shape(root);
        let seed_t = Tensor2::filled(r, c, seed);
        match &mut self.nodes[root.0].grad {
            Some(g) => g.add_assign(&seed_t),
            slot @ None => *slot = Some(seed_t),
        }
        for i in (0..=root.0).rev() {
            let Some(g) = self.nodes[i].grad.take() else {
                continue;
            };
            let mut contributions = self.vjp(i, &g);
            contributions.retain(|(p, _)| !self.is_const(*p));
            self.nodes[i].grad = Some(g);
            for (parent, contrib) in contributions {
                match &mut self.nodes[parent.0].grad {
                    Some(pg) => pg.add_assign(&contrib),
                    slot @ None => *slot = Some(contrib),
                }
            }
        }
    }

    /// Vector-Jacobian products of node `i` with upstream gradient `g`.
    fn vjp(&self, i: usize, g: &Tensor2) -> Vec<(NodeId, Tensor2)> {
        let val = |id: NodeId| -> &Tensor2 { &self.nodes[id.0].value };
        let out = &self.nodes[i].value;
        match &self.nodes[i].op {
            Op::Leaf | Op::Const | Op::Param(_) | Op::Gather { .. } => Vec::new(),
            Op::MatMul(a, b) => {
                let mut out = Vec::with_capacity(2);
                if !self.is_const(*a) {
                    out.push((*a, g.matmul_t(val(*b)).expect("shapes checked in forward")));
                }
                if !self.is_const(*b) {
                    out.push((*b, val(*a).t_matmul(g).expect("shapes checked in forward")));
                }
                out
            }
            Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
            Op::AddRow(a, row) => {
                let mut gr = Tensor2::zeros(1, g.cols());
                for r in 0..g.rows() {
                    for (o, x) in gr.row_mut(0).iter_mut().zip(g.row(r)) {
                        *o += x;
                    }
                }
                vec![(*a, g.clone()), (*row, gr)]
            }
            Op::Hadamard(a, b) => {
                let ga = g.zip_map(val(*b), |x, y| x * y);
                let gb = g.zip_map(val(*a), |x, y| x * y);
                vec![(*a, ga), (*b, gb)]
            }
            Op::MulCol(a, col) => {
                let av = val(*a);
                let cv = val(*col);
                let mut ga = g.clone();
                let mut gc = Tensor2::zeros(g.rows(), 1);
                for r in 0..g.rows() {
                    let s = cv.get(r, 0);
                    let mut acc = 0.0;
                    for (k, x) in ga.row_mut(r).iter_mut().enumerate() {
                        acc += *x * av.get(r, k);
                        *x *= s;
                    }
                    gc.set(r, 0, acc);
                }
                vec![(*a, ga), (*col, gc)]
            }
            Op::OneMinus(a) => vec![(*a, g.map(|x| -x))],
            Op::Shift(a) => vec![(*a, g.clone())],
            Op::ConcatCols(a, b) => {
                let ac = val(*a).cols();
                let bc = val(*b).cols();
                let mut ga = Tensor2::zeros(g.rows(), ac);
                let mut gb = Tensor2::zeros(g.rows(), bc);
                for r in 0..g.rows() {
                    ga.row_mut(r).copy_from_slice(&g.row(r)[..ac]);
                    gb.row_mut(r).copy_from_slice(&g.row(r)[ac..]);
                }
                vec![(*a, ga), (*b, gb)]
            }
            Op::ConcatRows(parts) => {
                let mut start = 0;
                parts
                    .iter()
                    .map(|&p| {
                        let (pr, pc) = val(p).shape();
                        let slice = g.data()[start * pc..(start + pr) * pc].to_vec();
                        start += pr;
                        (p, Tensor2::from_vec(pr, pc, slice).expect("sized"))
                    })
                    .collect()
            }
            Op::RepeatRows(row) => {
                let mut gr = Tensor2::zeros(1, g.cols());
                for r in 0..g.rows() {
                    for (o, x) in gr.row_mut(0).iter_mut().zip(g.row(r)) {
                        *o += x;
                    }
                }
                vec![(*row, gr)]
            }
            Op::Transpose(a) => vec![(*a, g.transpose())],
            Op::Sigmoid(a) => vec![(*a, g.zip_map(out, |x, s| x * s * (1.0 - s)))],
            Op::Tanh(a) => vec![(*a, g.zip_map(out, |x, t| x * (1.0 - t * t)))],
            Op::RowSoftmax(a, mask) => {
                let mut ga = Tensor2::zeros(g.rows(), g.cols());
                for r in 0..g.rows() {
                    let y = out.row(r);
                    let gr = g.row(r);
                    let live = |j: usize| mask.as_ref().is_none_or(|m| m[j]);
                    let dot: f64 = (0..g.cols()).filter(|&j| live(j)).map(|j| gr[j] * y[j]).sum();
                    for j in (0..g.cols()).filter(|&j| live(j)) {
                        ga.set(r, j, y[j] * (gr[j] - dot));
                    }
                }
                vec![(*a, ga)]
            }
            Op::MeanRows(a, mask) => {
                let live = mask.iter().filter(|&&m| m).count() as f64;
                let mut ga = Tensor2::zeros(mask.len(), g.cols());
                for r in (0..mask.len()).filter(|&r| mask[r]) {
                    for (o, x) in ga.row_mut(r).iter_mut().zip(g.row(0)) {
                        *o = x / live;
                    }
                }
                vec![(*a, ga)]
            }
            Op::MaskRows(a, mask) => {
                let mut ga = g.clone();
                for r in (0..mask.len()).filter(|&r| !mask[r]) {
                    ga.row_mut(r).fill(0.0);
                }
                vec![(*a, ga)]
            }
            Op::SumAll(a) => {
                let (r, c) = val(*a).shape();
                vec![(*a, Tensor2::filled(r, c, g.get(0, 0)))]
            }
            Op::Bce { probs, label } => {
                let raw = val(*probs).get(0, 1);
                let mut gp = Tensor2::zeros(1, 2);
                if raw > PROB_CLAMP && raw < 1.0 - PROB_CLAMP {
                    let d = -label / raw + (1.0 - label) / (1.0 - raw);
                    gp.set(0, 1, g.get(0, 0) * d);
                }
                vec![(*probs, gp)]
            }
        }
    }

    /// Adds the gradients of every trainable parameter reached by the last
    /// backward pass into `grads`. Frozen parameters are skipped.
    pub fn accumulate_param_grads(&self, grads: &mut Grads) {
        for node in &self.nodes {
            let Some(g) = &node.grad else { continue };
            match &node.op {
                Op::Param(id) if self.store.is_trainable(*id) => grads.accumulate(*id, g),
                Op::Gather { param, rows } if self.store.is_trainable(*param) => {
                    let shape = self.store.get(*param).shape();
                    let slot = grads.slot_mut(*param, shape);
                    for (i, &r) in rows.iter().enumerate() {
                        for (o, x) in slot.row_mut(r).iter_mut().zip(g.row(i)) {
                            *o += x;
                        }
                    }
                }
                _ => {}
            }
        }
    }
}
