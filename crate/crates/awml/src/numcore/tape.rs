//! Define-by-run reverse-mode automatic differentiation.
//!
//! Operations execute eagerly and append a node to the tape; [`Tape::backward`]
//! sweeps the record once in reverse topological order (which is simply
//! reverse recording order) and accumulates gradients into a [`ParamSet`]
//! shaped like the one the leaves were bound from. Unrolling an LSTM over a
//! window and calling backward on the window loss therefore performs exact
//! full-length backpropagation through time.
//!
//! Shape agreement inside ops is a programming error and panics; data-borne
//! problems (non-finite inputs) are caught at tensor construction.

use super::matmul::{matmul_acc, matmul_at_acc, matmul_bt_acc};
use super::{ParamSet, Tensor};

/// Handle to a tape node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Const,
    Param { slot: usize },
    Matmul { a: Var, b: Var },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Scale { x: Var, c: f64 },
    AddRowBias { x: Var, bias: Var },
    Sigmoid { x: Var },
    Tanh { x: Var },
    SliceCols { x: Var, start: usize },
    ConcatCols { parts: Vec<Var> },
    SumAll { x: Var },
    MeanAll { x: Var },
    MaskedCoordBce { pred: Var, ctilde: Tensor, mask: Tensor, squared: bool },
    TdLoss { q: Var, actions: Vec<usize>, targets: Vec<f64> },
    MseLoss { pred: Var, target: Tensor },
}

struct Node {
    op: Op,
    value: Tensor,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Numerically stable logistic sigmoid.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable `ln(1 + exp(x))`.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Coordinate and cross-entropy terms of the masked window loss for one
/// prediction row.
///
/// The row is laid out unit-major as `(x̂, ŷ, m̂_logit)` per unit; `ctilde`
/// holds `(x, y)` targets per unit and `mask` the 0/1 visibility labels.
/// Returns `(Σ_u m·‖ĉ−c̃‖₂, Σ_u BCE(σ(m̂), m))`, the two addends of the
/// world-model loss, separated so callers can also score coordinates alone.
/// With `squared` the coordinate term uses `‖ĉ−c̃‖₂²` instead.
pub fn masked_row_terms(pred: &[f64], ctilde: &[f64], mask: &[f64], squared: bool) -> (f64, f64) {
    let units = mask.len();
    debug_assert_eq!(pred.len(), 3 * units);
    debug_assert_eq!(ctilde.len(), 2 * units);
    let mut coord = 0.0;
    let mut ce = 0.0;
    for u in 0..units {
        let dx = pred[3 * u] - ctilde[2 * u];
        let dy = pred[3 * u + 1] - ctilde[2 * u + 1];
        let z = pred[3 * u + 2];
        let m = mask[u];
        let sq = dx * dx + dy * dy;
        coord += m * if squared { sq } else { sq.sqrt() };
        ce += softplus(z) - m * z;
    }
    (coord, ce)
}

impl Tape {
    pub fn new() -> Tape {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        self.nodes[v.0].value.item()
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    /// Records a non-differentiable input.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(Op::Const, t)
    }

    /// Binds a parameter entry as a differentiable leaf. The tensor value is
    /// captured at call time; `backward` must be given the same `ParamSet`
    /// schema to receive this leaf's gradient.
    pub fn param(&mut self, params: &ParamSet, name: &str) -> Var {
        let slot = params
            .slot(name)
            .unwrap_or_else(|| panic!("no parameter named {name:?}"));
        self.push(Op::Param { slot }, params.by_slot(slot).clone())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        let (m, ka) = (av.rows(), av.cols());
        let (kb, n) = (bv.rows(), bv.cols());
        assert_eq!(ka, kb, "matmul inner dims {ka} vs {kb}");
        let mut out = Tensor::zeros(&[m, n]);
        matmul_acc(out.as_mut_slice(), av.as_slice(), bv.as_slice(), m, ka, n);
        self.push(Op::Matmul { a, b }, out)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.zip(a, b, |x, y| x + y, "add");
        self.push(Op::Add { a, b }, value)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.zip(a, b, |x, y| x - y, "sub");
        self.push(Op::Sub { a, b }, value)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = self.zip(a, b, |x, y| x * y, "mul");
        self.push(Op::Mul { a, b }, value)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let mut value = self.value(x).clone();
        for v in value.as_mut_slice() {
            *v *= c;
        }
        self.push(Op::Scale { x, c }, value)
    }

    /// Adds a 1×N bias row to every row of a B×N matrix.
    pub fn add_row_bias(&mut self, x: Var, bias: Var) -> Var {
        let (xv, bv) = (self.value(x), self.value(bias));
        assert_eq!(bv.rows(), 1, "bias must be a single row");
        assert_eq!(xv.cols(), bv.cols(), "bias width {} vs input {}", bv.cols(), xv.cols());
        let (rows, cols) = (xv.rows(), xv.cols());
        let mut value = xv.clone();
        {
            let dst = value.as_mut_slice();
            let b = bv.as_slice();
            for r in 0..rows {
                for c in 0..cols {
                    dst[r * cols + c] += b[c];
                }
            }
        }
        self.push(Op::AddRowBias { x, bias }, value)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let mut value = self.value(x).clone();
        for v in value.as_mut_slice() {
            *v = sigmoid(*v);
        }
        self.push(Op::Sigmoid { x }, value)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let mut value = self.value(x).clone();
        for v in value.as_mut_slice() {
            *v = v.tanh();
        }
        self.push(Op::Tanh { x }, value)
    }

    /// Selects columns `start..start+len` of a B×N matrix.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let xv = self.value(x);
        let (rows, cols) = (xv.rows(), xv.cols());
        assert!(start + len <= cols, "slice {start}..{} out of {cols} cols", start + len);
        let mut value = Tensor::zeros(&[rows, len]);
        {
            let dst = value.as_mut_slice();
            let src = xv.as_slice();
            for r in 0..rows {
                dst[r * len..(r + 1) * len]
                    .copy_from_slice(&src[r * cols + start..r * cols + start + len]);
            }
        }
        self.push(Op::SliceCols { x, start }, value)
    }

    /// Concatenates same-height matrices along columns.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let rows = self.value(parts[0]).rows();
        let total: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut value = Tensor::zeros(&[rows, total]);
        {
            let dst = value.as_mut_slice();
            let mut off = 0;
            for &p in parts {
                let pv = self.value(p);
                assert_eq!(pv.rows(), rows, "concat_cols height mismatch");
                let c = pv.cols();
                let src = pv.as_slice();
                for r in 0..rows {
                    dst[r * total + off..r * total + off + c]
                        .copy_from_slice(&src[r * c..(r + 1) * c]);
                }
                off += c;
            }
        }
        self.push(Op::ConcatCols { parts: parts.to_vec() }, value)
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let s: f64 = self.value(x).as_slice().iter().sum();
        self.push(Op::SumAll { x }, Tensor::scalar(s))
    }

    pub fn mean_all(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let s: f64 = xv.as_slice().iter().sum();
        let n = xv.len() as f64;
        self.push(Op::MeanAll { x }, Tensor::scalar(s / n))
    }

    /// World-model window loss, averaged over the batch dimension.
    ///
    /// `pred` is B×3u with rows laid out as in [`masked_row_terms`]; `ctilde`
    /// is B×2u coordinate targets; `mask` is B×u visibility labels. Per row
    /// the loss is `Σ_u [ m·‖ĉ−c̃‖₂ + BCE(σ(m̂), m) ]` (squared norm when
    /// `squared`); the node value is the mean over rows. Coordinate terms
    /// with `m = 0` contribute exactly zero and receive exactly zero
    /// gradient.
    pub fn masked_coord_bce(&mut self, pred: Var, ctilde: Tensor, mask: Tensor, squared: bool) -> Var {
        let pv = self.value(pred);
        let rows = pv.rows();
        let units = mask.cols();
        assert_eq!(pv.cols(), 3 * units, "pred width {} for {units} units", pv.cols());
        assert_eq!(ctilde.shape(), [rows, 2 * units], "ctilde shape");
        assert_eq!(mask.shape(), [rows, units], "mask shape");
        let mut total = 0.0;
        for r in 0..rows {
            let (coord, ce) =
                masked_row_terms(pv.row_slice(r), ctilde.row_slice(r), mask.row_slice(r), squared);
            total += coord + ce;
        }
        let value = Tensor::scalar(total / rows as f64);
        self.push(Op::MaskedCoordBce { pred, ctilde, mask, squared }, value)
    }

    /// Mean squared temporal-difference error on the chosen action's Q-value
    /// per row: `mean_b (q[b, a_b] − y_b)²`.
    pub fn td_loss(&mut self, q: Var, actions: &[usize], targets: &[f64]) -> Var {
        let qv = self.value(q);
        let (rows, cols) = (qv.rows(), qv.cols());
        assert_eq!(actions.len(), rows);
        assert_eq!(targets.len(), rows);
        assert!(actions.iter().all(|&a| a < cols), "action index out of range");
        let mut total = 0.0;
        for r in 0..rows {
            let d = qv.at(r, actions[r]) - targets[r];
            total += d * d;
        }
        let value = Tensor::scalar(total / rows as f64);
        self.push(Op::TdLoss { q, actions: actions.to_vec(), targets: targets.to_vec() }, value)
    }

    /// Mean squared difference against a constant target, over all elements.
    pub fn mse_loss(&mut self, pred: Var, target: Tensor) -> Var {
        let pv = self.value(pred);
        assert!(pv.same_shape(&target), "mse shapes {:?} vs {:?}", pv.shape(), target.shape());
        let mut total = 0.0;
        for (p, t) in pv.as_slice().iter().zip(target.as_slice()) {
            let d = p - t;
            total += d * d;
        }
        let value = Tensor::scalar(total / pv.len() as f64);
        self.push(Op::MseLoss { pred, target }, value)
    }

    fn zip(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, what: &str) -> Tensor {
        let (av, bv) = (self.value(a), self.value(b));
        assert!(
            av.same_shape(bv),
            "{what} shape mismatch {:?} vs {:?}",
            av.shape(),
            bv.shape()
        );
        let mut out = av.clone();
        for (o, y) in out.as_mut_slice().iter_mut().zip(bv.as_slice()) {
            *o = f(*o, *y);
        }
        out
    }

    /// Reverse sweep from a scalar loss node. Returns gradients shaped like
    /// `params`; leaves bound from other slots panic, and parameters that do
    /// not reach the loss get zero gradient.
    pub fn backward(&self, loss: Var, params: &ParamSet) -> ParamSet {
        assert_eq!(self.value(loss).len(), 1, "backward requires a scalar loss node");
        let mut grads: Vec<Option<Tensor>> = Vec::with_capacity(self.nodes.len());
        grads.resize_with(self.nodes.len(), || None);
        grads[loss.0] = Some(Tensor::scalar(1.0));
        let mut out = params.zeros_like();

        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            match &self.nodes[id].op {
                Op::Const => {}
                Op::Param { slot } => {
                    let dst = out.by_slot_mut(*slot);
                    assert!(
                        dst.same_shape(&g),
                        "leaf bound against a different schema (slot {slot})"
                    );
                    for (d, s) in dst.as_mut_slice().iter_mut().zip(g.as_slice()) {
                        *d += s;
                    }
                }
                Op::Matmul { a, b } => {
                    let (m, k) = (self.value(*a).rows(), self.value(*a).cols());
                    let n = self.value(*b).cols();
                    {
                        let da = Self::slot(&mut grads, *a, self.value(*a).shape());
                        matmul_bt_acc(da.as_mut_slice(), g.as_slice(), self.value(*b).as_slice(), m, k, n);
                    }
                    {
                        let db = Self::slot(&mut grads, *b, self.value(*b).shape());
                        matmul_at_acc(db.as_mut_slice(), self.value(*a).as_slice(), g.as_slice(), m, k, n);
                    }
                }
                Op::Add { a, b } => {
                    Self::acc(&mut grads, *a, g.as_slice(), self.value(*a).shape(), 1.0);
                    Self::acc(&mut grads, *b, g.as_slice(), self.value(*b).shape(), 1.0);
                }
                Op::Sub { a, b } => {
                    Self::acc(&mut grads, *a, g.as_slice(), self.value(*a).shape(), 1.0);
                    Self::acc(&mut grads, *b, g.as_slice(), self.value(*b).shape(), -1.0);
                }
                Op::Mul { a, b } => {
                    let bv: Vec<f64> = self
                        .value(*b)
                        .as_slice()
                        .iter()
                        .zip(g.as_slice())
                        .map(|(x, gg)| x * gg)
                        .collect();
                    Self::acc(&mut grads, *a, &bv, self.value(*a).shape(), 1.0);
                    let av: Vec<f64> = self
                        .value(*a)
                        .as_slice()
                        .iter()
                        .zip(g.as_slice())
                        .map(|(x, gg)| x * gg)
                        .collect();
                    Self::acc(&mut grads, *b, &av, self.value(*b).shape(), 1.0);
                }
                Op::Scale { x, c } => {
                    Self::acc(&mut grads, *x, g.as_slice(), self.value(*x).shape(), *c);
                }
                Op::AddRowBias { x, bias } => {
                    Self::acc(&mut grads, *x, g.as_slice(), self.value(*x).shape(), 1.0);
                    let cols = self.value(*bias).cols();
                    let rows = g.len() / cols;
                    let mut brow = vec![0.0; cols];
                    for r in 0..rows {
                        for c in 0..cols {
                            brow[c] += g.as_slice()[r * cols + c];
                        }
                    }
                    Self::acc(&mut grads, *bias, &brow, self.value(*bias).shape(), 1.0);
                }
                Op::Sigmoid { x } => {
                    let y = self.nodes[id].value.as_slice();
                    let dx: Vec<f64> = y
                        .iter()
                        .zip(g.as_slice())
                        .map(|(s, gg)| gg * s * (1.0 - s))
                        .collect();
                    Self::acc(&mut grads, *x, &dx, self.value(*x).shape(), 1.0);
                }
                Op::Tanh { x } => {
                    let y = self.nodes[id].value.as_slice();
                    let dx: Vec<f64> = y
                        .iter()
                        .zip(g.as_slice())
                        .map(|(t, gg)| gg * (1.0 - t * t))
                        .collect();
                    Self::acc(&mut grads, *x, &dx, self.value(*x).shape(), 1.0);
                }
                Op::SliceCols { x, start } => {
                    let xv = self.value(*x);
                    let (rows, cols) = (xv.rows(), xv.cols());
                    let len = g.len() / rows;
                    let dst = Self::slot(&mut grads, *x, xv.shape());
                    let d = dst.as_mut_slice();
                    let gs = g.as_slice();
                    for r in 0..rows {
                        for c in 0..len {
                            d[r * cols + start + c] += gs[r * len + c];
                        }
                    }
                }
                Op::ConcatCols { parts } => {
                    let rows = self.nodes[id].value.rows();
                    let total = self.nodes[id].value.cols();
                    let gs = g.as_slice();
                    let mut off = 0;
                    for &p in parts {
                        let pc = self.value(p).cols();
                        let dst = Self::slot(&mut grads, p, self.value(p).shape());
                        let d = dst.as_mut_slice();
                        for r in 0..rows {
                            for c in 0..pc {
                                d[r * pc + c] += gs[r * total + off + c];
                            }
                        }
                        off += pc;
                    }
                }
                Op::SumAll { x } => {
                    let gv = g.item();
                    let xs = self.value(*x);
                    let ones = vec![gv; xs.len()];
                    Self::acc(&mut grads, *x, &ones, xs.shape(), 1.0);
                }
                Op::MeanAll { x } => {
                    let xs = self.value(*x);
                    let gv = g.item() / xs.len() as f64;
                    let ones = vec![gv; xs.len()];
                    Self::acc(&mut grads, *x, &ones, xs.shape(), 1.0);
                }
                Op::MaskedCoordBce { pred, ctilde, mask, squared } => {
                    let pv = self.value(*pred);
                    let (rows, width) = (pv.rows(), pv.cols());
                    let units = mask.cols();
                    let gv = g.item() / rows as f64;
                    let dst = Self::slot(&mut grads, *pred, pv.shape());
                    let d = dst.as_mut_slice();
                    for r in 0..rows {
                        let p = pv.row_slice(r);
                        let ct = ctilde.row_slice(r);
                        let mk = mask.row_slice(r);
                        for u in 0..units {
                            let dx = p[3 * u] - ct[2 * u];
                            let dy = p[3 * u + 1] - ct[2 * u + 1];
                            if mk[u] != 0.0 {
                                if *squared {
                                    d[r * width + 3 * u] += gv * mk[u] * 2.0 * dx;
                                    d[r * width + 3 * u + 1] += gv * mk[u] * 2.0 * dy;
                                } else {
                                    // Subgradient 0 at the norm's kink.
                                    let norm = (dx * dx + dy * dy).sqrt();
                                    if norm > 0.0 {
                                        d[r * width + 3 * u] += gv * mk[u] * dx / norm;
                                        d[r * width + 3 * u + 1] += gv * mk[u] * dy / norm;
                                    }
                                }
                            }
                            let z = p[3 * u + 2];
                            d[r * width + 3 * u + 2] += gv * (sigmoid(z) - mk[u]);
                        }
                    }
                }
                Op::TdLoss { q, actions, targets } => {
                    let qv = self.value(*q);
                    let (rows, cols) = (qv.rows(), qv.cols());
                    let gv = g.item() / rows as f64;
                    let dst = Self::slot(&mut grads, *q, qv.shape());
                    let d = dst.as_mut_slice();
                    for r in 0..rows {
                        let diff = qv.at(r, actions[r]) - targets[r];
                        d[r * cols + actions[r]] += gv * 2.0 * diff;
                    }
                }
                Op::MseLoss { pred, target } => {
                    let pv = self.value(*pred);
                    let gv = g.item() / pv.len() as f64;
                    let dst = Self::slot(&mut grads, *pred, pv.shape());
                    let d = dst.as_mut_slice();
                    for (i, (p, t)) in pv.as_slice().iter().zip(target.as_slice()).enumerate() {
                        d[i] += gv * 2.0 * (p - t);
                    }
                }
            }
        }
        out
    }

    fn slot<'g>(grads: &'g mut [Option<Tensor>], v: Var, shape: &[usize]) -> &'g mut Tensor {
        grads[v.0].get_or_insert_with(|| Tensor::zeros(shape))
    }

    fn acc(grads: &mut [Option<Tensor>], v: Var, delta: &[f64], shape: &[usize], scale: f64) {
        let dst = Self::slot(grads, v, shape);
        for (d, s) in dst.as_mut_slice().iter_mut().zip(delta) {
            *d += scale * s;
        }
    }
}
