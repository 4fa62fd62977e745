//! The Wengert tape: op recording and reverse-mode gradient accumulation.

use crate::error::{Result, SanError};
use crate::{Real, LOG_EPS};

use super::tensor::Tensor;

/// Handle to a tensor recorded on a [`Tape`].
///
/// Vars are only meaningful for the tape that produced them; they are cheap
/// indices, not owners.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// One recorded operation.  Input handles always point at earlier nodes, so
/// a single reverse sweep visits consumers before producers.
#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Matmul {
        a: Var,
        b: Var,
    },
    Affine {
        x: Var,
        w: Var,
        b: Var,
    },
    Relu {
        x: Var,
    },
    SoftmaxRows {
        x: Var,
    },
    /// Mean over rows of `-ln(max(probs[i, labels[i]], eps))`.
    CrossEntropy {
        probs: Var,
        labels: Vec<usize>,
    },
    /// `(1/denom) * sum_i weights[i] * -ln(max(probs[i, labels[i]], eps))`
    /// with constant (non-differentiated) weights.
    WeightedCrossEntropy {
        probs: Var,
        labels: Vec<usize>,
        weights: Vec<Real>,
        denom: Real,
    },
    /// Per-row `-ln(max(probs[i, labels[i]], eps))` as a length-m vector.
    NllRows {
        probs: Var,
        labels: Vec<usize>,
    },
    /// Mean over rows of the Shannon entropy `-sum_k p ln(max(p, eps))`.
    Entropy {
        probs: Var,
    },
    /// Forward identity; backward multiplies the upstream gradient by
    /// `-lambda`.
    GradReverse {
        x: Var,
        lambda: Real,
    },
    SelectRows {
        x: Var,
        rows: Vec<usize>,
    },
    SelectColumn {
        x: Var,
        col: usize,
    },
    Mul {
        a: Var,
        b: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    Scale {
        x: Var,
        c: Real,
    },
    Sum {
        x: Var,
    },
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Gradient map produced by [`Tape::backward`], keyed by [`Var`].
///
/// Entries exist for every `requires_grad` tensor reachable from the loss;
/// unreachable tensors report `None`.
pub struct Gradients {
    grads: Vec<Option<Vec<Real>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[Real]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient for `v`, or a zero vector of length `numel` if the tensor
    /// was not reached from the loss.
    pub fn get_or_zeros(&self, v: Var, numel: usize) -> Vec<Real> {
        match self.get(v) {
            Some(g) => g.to_vec(),
            None => vec![0.0; numel],
        }
    }
}

/// Define-by-run recording of one forward pass.
///
/// Insert leaves with [`Tape::input`] / [`Tape::param`], build the
/// computation with the op methods, read intermediate values with
/// [`Tape::value`], then call [`Tape::backward`] (which consumes the tape)
/// to obtain gradients for every parameter leaf.
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

    /// Value of a recorded tensor.
    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Insert a leaf that will not receive gradients (batch data, constants).
    pub fn input(&mut self, t: &Tensor) -> Var {
        let mut v = t.clone();
        v.requires_grad = false;
        self.push(v, Op::Leaf)
    }

    /// Insert a leaf that accumulates gradients (model parameters).
    pub fn param(&mut self, t: &Tensor) -> Var {
        let mut v = t.clone();
        v.requires_grad = true;
        self.push(v, Op::Leaf)
    }

    /// Insert a leaf honoring the tensor's own `requires_grad` flag.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        let v = t.clone();
        self.push(v, Op::Leaf)
    }

    /// Constant scalar leaf.
    pub fn constant(&mut self, v: Real) -> Var {
        self.push(Tensor::scalar(v), Op::Leaf)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].value.requires_grad)
    }

    fn require_matrix(&self, v: Var, op: &'static str) -> Result<(usize, usize)> {
        let t = &self.nodes[v.0].value;
        if t.shape.len() != 2 {
            return Err(SanError::ShapeMismatch {
                op,
                lhs: t.shape.clone(),
                rhs: vec![0, 0],
            });
        }
        Ok((t.shape[0], t.shape[1]))
    }

    // ── forward ops ────────────────────────────────────────────────────

    /// `a (m×k) · b (k×n) -> (m×n)`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, ka) = self.require_matrix(a, "matmul")?;
        let (kb, n) = self.require_matrix(b, "matmul")?;
        if ka != kb {
            return Err(SanError::ShapeMismatch {
                op: "matmul",
                lhs: self.nodes[a.0].value.shape.clone(),
                rhs: self.nodes[b.0].value.shape.clone(),
            });
        }
        let mut out = matmul_raw(
            &self.nodes[a.0].value.data,
            &self.nodes[b.0].value.data,
            m,
            ka,
            n,
        );
        let mut t = Tensor::new(vec![m, n], std::mem::take(&mut out))?;
        t.requires_grad = self.any_grad(&[a, b]);
        Ok(self.push(t, Op::Matmul { a, b }))
    }

    /// `x (m×k) · w (k×n) + bias (n)`, bias broadcast over rows.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (m, kx) = self.require_matrix(x, "affine")?;
        let (kw, n) = self.require_matrix(w, "affine")?;
        if kx != kw {
            return Err(SanError::ShapeMismatch {
                op: "affine",
                lhs: self.nodes[x.0].value.shape.clone(),
                rhs: self.nodes[w.0].value.shape.clone(),
            });
        }
        let bias = &self.nodes[b.0].value;
        if bias.shape != [n] {
            return Err(SanError::ShapeMismatch {
                op: "affine",
                lhs: bias.shape.clone(),
                rhs: vec![n],
            });
        }
        let mut data = matmul_raw(
            &self.nodes[x.0].value.data,
            &self.nodes[w.0].value.data,
            m,
            kx,
            n,
        );
        let bias = &self.nodes[b.0].value.data;
        for i in 0..m {
            for j in 0..n {
                data[i * n + j] += bias[j];
            }
        }
        let mut t = Tensor::new(vec![m, n], data)?;
        t.requires_grad = self.any_grad(&[x, w, b]);
        Ok(self.push(t, Op::Affine { x, w, b }))
    }

    /// Elementwise `max(x, 0)`.
    pub fn relu(&mut self, x: Var) -> Var {
        let src = &self.nodes[x.0].value;
        let data = src.data.iter().map(|&v| v.max(0.0)).collect();
        let t = Tensor {
            shape: src.shape.clone(),
            data,
            requires_grad: src.requires_grad,
        };
        self.push(t, Op::Relu { x })
    }

    /// Row-wise softmax with max subtraction; each output row sums to 1 and
    /// every entry is strictly positive.
    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let (m, n) = self.require_matrix(x, "softmax_rows")?;
        let src = &self.nodes[x.0].value;
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            let row = &src.data[i * n..(i + 1) * n];
            let max = row.iter().cloned().fold(Real::NEG_INFINITY, Real::max);
            let mut sum = 0.0;
            for j in 0..n {
                let e = (row[j] - max).exp();
                data[i * n + j] = e;
                sum += e;
            }
            for j in 0..n {
                data[i * n + j] /= sum;
            }
        }
        let mut t = Tensor::new(vec![m, n], data)?;
        t.requires_grad = src.requires_grad;
        Ok(self.push(t, Op::SoftmaxRows { x }))
    }

    fn check_labels(&self, probs: Var, labels: &[usize], op: &'static str) -> Result<(usize, usize)> {
        let (m, n) = self.require_matrix(probs, op)?;
        if labels.len() != m {
            return Err(SanError::ShapeMismatch {
                op,
                lhs: vec![m, n],
                rhs: vec![labels.len()],
            });
        }
        for (row, &l) in labels.iter().enumerate() {
            if l >= n {
                return Err(SanError::LabelOutOfRange {
                    label: l,
                    classes: n,
                    row,
                });
            }
        }
        Ok((m, n))
    }

    /// Mean negative log-likelihood of the labeled entries.  `probs` rows are
    /// expected to be probability distributions; entries are clamped at
    /// [`LOG_EPS`] before the log.
    pub fn cross_entropy(&mut self, probs: Var, labels: &[usize]) -> Result<Var> {
        let (m, n) = self.check_labels(probs, labels, "cross_entropy")?;
        let src = &self.nodes[probs.0].value;
        let mut total = 0.0;
        for (i, &l) in labels.iter().enumerate() {
            total -= src.data[i * n + l].max(LOG_EPS).ln();
        }
        let mut t = Tensor::scalar(total / m as Real);
        t.requires_grad = src.requires_grad;
        Ok(self.push(
            t,
            Op::CrossEntropy {
                probs,
                labels: labels.to_vec(),
            },
        ))
    }

    /// Per-row weighted negative log-likelihood, `(1/denom) Σ_i w_i · nll_i`.
    /// The weights are constants: no gradient flows through them.
    pub fn weighted_cross_entropy(
        &mut self,
        probs: Var,
        labels: &[usize],
        weights: &[Real],
        denom: Real,
    ) -> Result<Var> {
        let (m, n) = self.check_labels(probs, labels, "weighted_cross_entropy")?;
        if weights.len() != m {
            return Err(SanError::ShapeMismatch {
                op: "weighted_cross_entropy",
                lhs: vec![m, n],
                rhs: vec![weights.len()],
            });
        }
        if !(denom > 0.0) {
            return Err(SanError::Config(format!(
                "weighted_cross_entropy denominator must be positive, got {denom}"
            )));
        }
        let src = &self.nodes[probs.0].value;
        let mut total = 0.0;
        for (i, &l) in labels.iter().enumerate() {
            total -= weights[i] * src.data[i * n + l].max(LOG_EPS).ln();
        }
        let mut t = Tensor::scalar(total / denom);
        t.requires_grad = src.requires_grad;
        Ok(self.push(
            t,
            Op::WeightedCrossEntropy {
                probs,
                labels: labels.to_vec(),
                weights: weights.to_vec(),
                denom,
            },
        ))
    }

    /// Per-row negative log-likelihood as a length-m vector (no reduction).
    pub fn nll_rows(&mut self, probs: Var, labels: &[usize]) -> Result<Var> {
        let (_, n) = self.check_labels(probs, labels, "nll_rows")?;
        let src = &self.nodes[probs.0].value;
        let data: Vec<Real> = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| -src.data[i * n + l].max(LOG_EPS).ln())
            .collect();
        let mut t = Tensor::vector(data)?;
        t.requires_grad = src.requires_grad;
        Ok(self.push(
            t,
            Op::NllRows {
                probs,
                labels: labels.to_vec(),
            },
        ))
    }

    /// Mean over rows of the Shannon entropy of each row.
    pub fn entropy(&mut self, probs: Var) -> Result<Var> {
        let (m, n) = self.require_matrix(probs, "entropy")?;
        let src = &self.nodes[probs.0].value;
        let mut total = 0.0;
        for i in 0..m {
            for j in 0..n {
                let p = src.data[i * n + j];
                total -= p * p.max(LOG_EPS).ln();
            }
        }
        let mut t = Tensor::scalar(total / m as Real);
        t.requires_grad = src.requires_grad;
        Ok(self.push(t, Op::Entropy { probs }))
    }

    /// Gradient reversal: forward is the identity (bit-identical copy);
    /// backward multiplies the upstream gradient by `-lambda`.
    pub fn grad_reverse(&mut self, x: Var, lambda: Real) -> Result<Var> {
        if lambda < 0.0 || !lambda.is_finite() {
            return Err(SanError::Config(format!(
                "gradient reversal strength must be finite and non-negative, got {lambda}"
            )));
        }
        let src = &self.nodes[x.0].value;
        let t = src.clone();
        Ok(self.push(t, Op::GradReverse { x, lambda }))
    }

    /// Gather rows of a matrix in the given order.
    pub fn select_rows(&mut self, x: Var, rows: &[usize]) -> Result<Var> {
        let (m, n) = self.require_matrix(x, "select_rows")?;
        if rows.is_empty() {
            return Err(SanError::Empty {
                what: "row selection",
            });
        }
        if let Some(&bad) = rows.iter().find(|&&r| r >= m) {
            return Err(SanError::Config(format!(
                "select_rows index {bad} out of range for {m} rows"
            )));
        }
        let src = &self.nodes[x.0].value;
        let mut data = Vec::with_capacity(rows.len() * n);
        for &r in rows {
            data.extend_from_slice(&src.data[r * n..(r + 1) * n]);
        }
        let mut t = Tensor::new(vec![rows.len(), n], data)?;
        t.requires_grad = src.requires_grad;
        Ok(self.push(
            t,
            Op::SelectRows {
                x,
                rows: rows.to_vec(),
            },
        ))
    }

    /// Extract one column of a matrix as a length-m vector.
    pub fn select_column(&mut self, x: Var, col: usize) -> Result<Var> {
        let (m, n) = self.require_matrix(x, "select_column")?;
        if col >= n {
            return Err(SanError::Config(format!(
                "select_column index {col} out of range for {n} columns"
            )));
        }
        let src = &self.nodes[x.0].value;
        let data: Vec<Real> = (0..m).map(|i| src.data[i * n + col]).collect();
        let mut t = Tensor::vector(data)?;
        t.requires_grad = src.requires_grad;
        Ok(self.push(t, Op::SelectColumn { x, col }))
    }

    /// Elementwise product of same-shape tensors.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if ta.shape != tb.shape {
            return Err(SanError::ShapeMismatch {
                op: "mul",
                lhs: ta.shape.clone(),
                rhs: tb.shape.clone(),
            });
        }
        let data = ta.data.iter().zip(&tb.data).map(|(x, y)| x * y).collect();
        let mut t = Tensor::new(ta.shape.clone(), data)?;
        t.requires_grad = self.any_grad(&[a, b]);
        Ok(self.push(t, Op::Mul { a, b }))
    }

    /// Elementwise sum of same-shape tensors.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if ta.shape != tb.shape {
            return Err(SanError::ShapeMismatch {
                op: "add",
                lhs: ta.shape.clone(),
                rhs: tb.shape.clone(),
            });
        }
        let data = ta.data.iter().zip(&tb.data).map(|(x, y)| x + y).collect();
        let mut t = Tensor::new(ta.shape.clone(), data)?;
        t.requires_grad = self.any_grad(&[a, b]);
        Ok(self.push(t, Op::Add { a, b }))
    }

    /// Multiply by a constant.
    pub fn scale(&mut self, x: Var, c: Real) -> Var {
        let src = &self.nodes[x.0].value;
        let data = src.data.iter().map(|&v| c * v).collect();
        let t = Tensor {
            shape: src.shape.clone(),
            data,
            requires_grad: src.requires_grad,
        };
        self.push(t, Op::Scale { x, c })
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(&mut self, x: Var) -> Var {
        let src = &self.nodes[x.0].value;
        let mut t = Tensor::scalar(src.data.iter().sum());
        t.requires_grad = src.requires_grad;
        self.push(t, Op::Sum { x })
    }

    // ── backward ───────────────────────────────────────────────────────

    /// Reverse sweep from a scalar loss.  Consumes the tape and returns the
    /// gradient map; every `requires_grad` leaf reachable from `loss` gets a
    /// gradient of the same shape as its value.
    pub fn backward(self, loss: Var) -> Result<Gradients> {
        let loss_t = &self.nodes[loss.0].value;
        if !loss_t.is_scalar() {
            return Err(SanError::ShapeMismatch {
                op: "backward",
                lhs: loss_t.shape.clone(),
                rhs: vec![1],
            });
        }
        let mut grads: Vec<Option<Vec<Real>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            if grads[i].is_none() || !self.nodes[i].value.requires_grad {
                continue;
            }
            // Inputs always precede outputs on the tape, so splitting at `i`
            // gives us the output gradient and mutable access to all input
            // slots without copying.
            let (before, rest) = grads.split_at_mut(i);
            let g = rest[0].as_ref().expect("checked above");
            let nodes = &self.nodes;

            let acc = |slot: &mut [Option<Vec<Real>>], v: Var, f: &mut dyn FnMut(&mut [Real])| {
                if !nodes[v.0].value.requires_grad {
                    return;
                }
                let entry =
                    slot[v.0].get_or_insert_with(|| vec![0.0; nodes[v.0].value.numel()]);
                f(entry);
            };

            match &self.nodes[i].op {
                Op::Leaf => {}
                Op::Matmul { a, b } => {
                    let (m, k) = (nodes[a.0].value.shape[0], nodes[a.0].value.shape[1]);
                    let n = nodes[b.0].value.shape[1];
                    let (ad, bd) = (&nodes[a.0].value.data, &nodes[b.0].value.data);
                    acc(before, *a, &mut |da| add_matmul_bt(da, g, bd, m, k, n));
                    acc(before, *b, &mut |db| add_matmul_at(db, ad, g, m, k, n));
                }
                Op::Affine { x, w, b } => {
                    let (m, k) = (nodes[x.0].value.shape[0], nodes[x.0].value.shape[1]);
                    let n = nodes[w.0].value.shape[1];
                    let (xd, wd) = (&nodes[x.0].value.data, &nodes[w.0].value.data);
                    acc(before, *x, &mut |dx| add_matmul_bt(dx, g, wd, m, k, n));
                    acc(before, *w, &mut |dw| add_matmul_at(dw, xd, g, m, k, n));
                    acc(before, *b, &mut |db| {
                        for i in 0..m {
                            for j in 0..n {
                                db[j] += g[i * n + j];
                            }
                        }
                    });
                }
                Op::Relu { x } => {
                    let xd = &nodes[x.0].value.data;
                    acc(before, *x, &mut |dx| {
                        for (idx, &v) in xd.iter().enumerate() {
                            if v > 0.0 {
                                dx[idx] += g[idx];
                            }
                        }
                    });
                }
                Op::SoftmaxRows { x } => {
                    let p = &self.nodes[i].value; // outputs, not inputs
                    let (m, n) = (p.shape[0], p.shape[1]);
                    acc(before, *x, &mut |dx| {
                        for r in 0..m {
                            let row = &p.data[r * n..(r + 1) * n];
                            let grow = &g[r * n..(r + 1) * n];
                            let dot: Real =
                                row.iter().zip(grow).map(|(pj, gj)| pj * gj).sum();
                            for j in 0..n {
                                dx[r * n + j] += row[j] * (grow[j] - dot);
                            }
                        }
                    });
                }
                Op::CrossEntropy { probs, labels } => {
                    let p = &nodes[probs.0].value;
                    let n = p.shape[1];
                    let m = labels.len() as Real;
                    let gs = g[0];
                    acc(before, *probs, &mut |dp| {
                        for (r, &l) in labels.iter().enumerate() {
                            let v = p.data[r * n + l];
                            if v > LOG_EPS {
                                dp[r * n + l] -= gs / (v * m);
                            }
                        }
                    });
                }
                Op::WeightedCrossEntropy {
                    probs,
                    labels,
                    weights,
                    denom,
                } => {
                    let p = &nodes[probs.0].value;
                    let n = p.shape[1];
                    let gs = g[0];
                    acc(before, *probs, &mut |dp| {
                        for (r, &l) in labels.iter().enumerate() {
                            let v = p.data[r * n + l];
                            if v > LOG_EPS {
                                dp[r * n + l] -= gs * weights[r] / (v * denom);
                            }
                        }
                    });
                }
                Op::NllRows { probs, labels } => {
                    let p = &nodes[probs.0].value;
                    let n = p.shape[1];
                    acc(before, *probs, &mut |dp| {
                        for (r, &l) in labels.iter().enumerate() {
                            let v = p.data[r * n + l];
                            if v > LOG_EPS {
                                dp[r * n + l] -= g[r] / v;
                            }
                        }
                    });
                }
                Op::Entropy { probs } => {
                    let p = &nodes[probs.0].value;
                    let m = p.shape[0];
                    let gs = g[0] / m as Real;
                    acc(before, *probs, &mut |dp| {
                        for (idx, &v) in p.data.iter().enumerate() {
                            // d(-p ln max(p,eps))/dp: below the clamp the log
                            // factor is constant, so the +1 term drops out.
                            let inner = if v > LOG_EPS { 1.0 } else { 0.0 };
                            dp[idx] -= gs * (v.max(LOG_EPS).ln() + inner);
                        }
                    });
                }
                Op::GradReverse { x, lambda } => {
                    let lam = *lambda;
                    acc(before, *x, &mut |dx| {
                        for (idx, gv) in g.iter().enumerate() {
                            dx[idx] -= lam * gv;
                        }
                    });
                }
                Op::SelectRows { x, rows } => {
                    let n = nodes[x.0].value.shape[1];
                    acc(before, *x, &mut |dx| {
                        for (out_r, &src_r) in rows.iter().enumerate() {
                            for j in 0..n {
                                dx[src_r * n + j] += g[out_r * n + j];
                            }
                        }
                    });
                }
                Op::SelectColumn { x, col } => {
                    let n = nodes[x.0].value.shape[1];
                    let c = *col;
                    acc(before, *x, &mut |dx| {
                        for (r, gv) in g.iter().enumerate() {
                            dx[r * n + c] += gv;
                        }
                    });
                }
                Op::Mul { a, b } => {
                    let (ad, bd) = (&nodes[a.0].value.data, &nodes[b.0].value.data);
                    acc(before, *a, &mut |da| {
                        for (idx, gv) in g.iter().enumerate() {
                            da[idx] += gv * bd[idx];
                        }
                    });
                    acc(before, *b, &mut |db| {
                        for (idx, gv) in g.iter().enumerate() {
                            db[idx] += gv * ad[idx];
                        }
                    });
                }
                Op::Add { a, b } => {
                    acc(before, *a, &mut |da| {
                        for (idx, gv) in g.iter().enumerate() {
                            da[idx] += gv;
                        }
                    });
                    acc(before, *b, &mut |db| {
                        for (idx, gv) in g.iter().enumerate() {
                            db[idx] += gv;
                        }
                    });
                }
                Op::Scale { x, c } => {
                    let c = *c;
                    acc(before, *x, &mut |dx| {
                        for (idx, gv) in g.iter().enumerate() {
                            dx[idx] += c * gv;
                        }
                    });
                }
                Op::Sum { x } => {
                    let gs = g[0];
                    acc(before, *x, &mut |dx| {
                        for v in dx.iter_mut() {
                            *v += gs;
                        }
                    });
                }
            }
        }
        Ok(Gradients { grads })
    }
}

// ── raw kernels ────────────────────────────────────────────────────────

/// `c = a (m×k) · b (k×n)`, i-k-j loop order for cache-friendly access.
pub(crate) fn matmul_raw(a: &[Real], b: &[Real], m: usize, k: usize, n: usize) -> Vec<Real> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            let crow = &mut c[i * n..(i + 1) * n];
            for j in 0..n {
                crow[j] += aip * brow[j];
            }
        }
    }
    c
}

/// `da += g (m×n) · bᵀ (n×k)` — the left-operand adjoint of a matmul.
fn add_matmul_bt(da: &mut [Real], g: &[Real], b: &[Real], m: usize, k: usize, n: usize) {
    for i in 0..m {
        for p in 0..k {
            let mut s = 0.0;
            let grow = &g[i * n..(i + 1) * n];
            let brow = &b[p * n..(p + 1) * n];
            for j in 0..n {
                s += grow[j] * brow[j];
            }
            da[i * k + p] += s;
        }
    }
}

/// `db += aᵀ (k×m) · g (m×n)` — the right-operand adjoint of a matmul.
fn add_matmul_at(db: &mut [Real], a: &[Real], g: &[Real], m: usize, k: usize, n: usize) {
    for i in 0..m {
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let grow = &g[i * n..(i + 1) * n];
            let drow = &mut db[p * n..(p + 1) * n];
            for j in 0..n {
                drow[j] += aip * grow[j];
            }
        }
    }
}
