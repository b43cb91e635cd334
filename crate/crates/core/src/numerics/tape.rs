//! Reverse-mode differentiation over matrix-valued nodes.
//!
//! A [`Tape`] records every operation together with whatever intermediates its
//! backward rule needs. Leaves are either trainable parameters
//! ([`Tape::param`]) or constants ([`Tape::constant`]); gradients are only
//! propagated through nodes that depend on at least one parameter.
//!
//! Besides the elementary ops the tape carries a few fused loss kernels
//! (contrastive log-sum-exp term, softmax cross-entropy, bidirectional hinge)
//! whose gradients are derived by hand. Every rule is exercised by the
//! finite-difference checks in this module's tests.

use super::matrix::{dot, softmax_in_place, Matrix};
use crate::error::{invalid, Error, Result};

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddRow(Var, Var),
    Tanh(Var),
    LeakyRelu(Var, f64),
    Normalize {
        input: Var,
        norms: Vec<f64>,
    },
    Softmax {
        input: Var,
        temperature: f64,
    },
    ConcatRows(Vec<Var>),
    Diag(Var),
    RowDot(Var, Var),
    Sum(Var),
    Contrastive {
        pos: Var,
        neg: Var,
        /// d loss / d neg, precomputed in the forward pass.
        neg_grad: Matrix,
        /// d loss / d pos.
        pos_grad: Vec<f64>,
    },
    CrossEntropy {
        logits: Var,
        probs: Matrix,
        labels: Vec<usize>,
    },
    Hinge {
        input: Var,
        margin: f64,
    },
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    needs_grad: bool,
}

/// Records a forward pass for one backward sweep.
///
/// After [`Tape::backward`] the tape is consumed; call [`Tape::reset`] before
/// recording the next forward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
}

/// Gradients of a scalar loss, indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, or zeros of `shape` when the loss does not depend on it.
    pub fn get_or_zeros(&self, v: Var, shape: (usize, usize)) -> Matrix {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Matrix::zeros(shape.0, shape.1))
    }
}

/// Specification of the fused contrastive term
/// `(mu / N) * sum_n [ ln(1 + sum_q exp((neg_nq - gamma) / (mu * div_n))) - ln(pos_n + 1) ]`.
#[derive(Clone, Debug)]
pub struct ContrastiveSpec<'a> {
    /// Per-row column excluded from the negative set (the in-batch positive).
    pub exclude: Option<&'a [Option<usize>]>,
    /// Per-anchor diversity, each in (0, 1].
    pub diversity: &'a [f64],
    pub mu: f64,
    pub gamma: f64,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    /// Drops all recorded nodes so a fresh forward pass can be recorded.
    pub fn reset(&mut self) {
        self.nodes.clear();
        self.consumed = false;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn param(&mut self, value: Matrix) -> Var {
        self.push_raw(value, Op::Leaf, true)
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push_raw(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    /// Scalar value of a 1x1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.get(0, 0)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push_raw(&mut self, value: Matrix, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(
        &mut self,
        op_name: &'static str,
        value: Matrix,
        op: Op,
        inputs: &[Var],
    ) -> Result<Var> {
        let value = value.ensure_finite(op_name)?;
        let needs = inputs.iter().any(|&v| self.needs(v));
        Ok(self.push_raw(value, op, needs))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::DimensionMismatch {
                op,
                left: self.shape(a),
                right: self.shape(b),
            });
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        self.push("matmul", value, Op::MatMul(a, b), &[a, b])
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).transpose();
        self.push("transpose", value, Op::Transpose(a), &[a])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        self.push("add", value, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).sub(self.value(b))?;
        self.push("sub", value, Op::Sub(a, b), &[a, b])
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), "mul", |x, y| x * y)?;
        self.push("mul", value, Op::Mul(a, b), &[a, b])
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        let value = self.value(a).scale(s);
        self.push("scale", value, Op::Scale(a, s), &[a])
    }

    /// Adds a `1 x c` row to every row of an `r x c` matrix.
    pub fn add_row(&mut self, m: Var, row: Var) -> Result<Var> {
        let (mv, rv) = (self.value(m), self.value(row));
        if rv.rows() != 1 || rv.cols() != mv.cols() {
            return Err(Error::DimensionMismatch {
                op: "add_row",
                left: mv.shape(),
                right: rv.shape(),
            });
        }
        let value = Matrix::from_fn(mv.rows(), mv.cols(), |i, j| mv.get(i, j) + rv.get(0, j));
        self.push("add_row", value, Op::AddRow(m, row), &[m, row])
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(f64::tanh);
        self.push("tanh", value, Op::Tanh(a), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.leaky_relu(a, 0.0)
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Result<Var> {
        let value = self.value(a).map(|x| if x > 0.0 { x } else { slope * x });
        self.push("leaky_relu", value, Op::LeakyRelu(a, slope), &[a])
    }

    pub fn l2_normalize_rows(&mut self, a: Var) -> Result<Var> {
        let input = self.value(a);
        let norms: Vec<f64> = (0..input.rows()).map(|i| input.row_norm(i)).collect();
        let value = input.l2_normalize_rows()?;
        self.push(
            "l2_normalize_rows",
            value,
            Op::Normalize { input: a, norms },
            &[a],
        )
    }

    pub fn softmax_rows(&mut self, a: Var, temperature: f64) -> Result<Var> {
        let value = self.value(a).softmax_rows(temperature)?;
        self.push(
            "softmax_rows",
            value,
            Op::Softmax {
                input: a,
                temperature,
            },
            &[a],
        )
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::EmptyInput("concat_rows of zero parts".into()));
        }
        let mats: Vec<&Matrix> = parts.iter().map(|&v| self.value(v)).collect();
        let value = Matrix::vstack(&mats)?;
        self.push("concat_rows", value, Op::ConcatRows(parts.to_vec()), parts)
    }

    /// Diagonal of a square matrix as an `n x 1` column.
    pub fn diag(&mut self, a: Var) -> Result<Var> {
        let m = self.value(a);
        if m.rows() != m.cols() {
            return Err(Error::DimensionMismatch {
                op: "diag",
                left: m.shape(),
                right: (m.cols(), m.rows()),
            });
        }
        let value = Matrix::from_fn(m.rows(), 1, |i, _| m.get(i, i));
        self.push("diag", value, Op::Diag(a), &[a])
    }

    /// Row-wise inner products as an `n x 1` column.
    pub fn row_dot(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("row_dot", a, b)?;
        let (am, bm) = (self.value(a), self.value(b));
        let value = Matrix::from_fn(am.rows(), 1, |i, _| dot(am.row(i), bm.row(i)));
        self.push("row_dot", value, Op::RowDot(a, b), &[a, b])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let value = Matrix::scalar(self.value(a).sum());
        self.push("sum", value, Op::Sum(a), &[a])
    }

    /// Fused one-directional contrastive term; see [`ContrastiveSpec`].
    ///
    /// `pos` is `n x 1`, `neg` is `n x q`. Returns a `1 x 1` node.
    pub fn contrastive_term(
        &mut self,
        pos: Var,
        neg: Var,
        spec: &ContrastiveSpec<'_>,
    ) -> Result<Var> {
        let (pv, nv) = (self.value(pos), self.value(neg));
        let n = nv.rows();
        if pv.shape() != (n, 1) {
            return Err(Error::DimensionMismatch {
                op: "contrastive_term",
                left: pv.shape(),
                right: nv.shape(),
            });
        }
        if n == 0 {
            return Err(Error::EmptyInput("contrastive_term with no anchors".into()));
        }
        if spec.diversity.len() != n {
            return Err(Error::DimensionMismatch {
                op: "contrastive_term diversity",
                left: (n, 1),
                right: (spec.diversity.len(), 1),
            });
        }
        if let Some(ex) = spec.exclude {
            if ex.len() != n {
                return Err(Error::DimensionMismatch {
                    op: "contrastive_term exclude",
                    left: (n, 1),
                    right: (ex.len(), 1),
                });
            }
        }
        if !(spec.mu > 0.0) {
            return Err(invalid(format!(
                "temperature mu must be positive, got {}",
                spec.mu
            )));
        }
        let scale = spec.mu / n as f64;
        let mut total = 0.0;
        let mut neg_grad = Matrix::zeros(n, nv.cols());
        let mut pos_grad = vec![0.0; n];
        let mut z = Vec::with_capacity(nv.cols());
        for i in 0..n {
            let div = spec.diversity[i];
            if !(div > 0.0) {
                return Err(invalid(format!(
                    "diversity must be positive, got {div} for anchor {i}"
                )));
            }
            let p = pv.get(i, 0);
            if p <= -1.0 {
                return Err(invalid(format!(
                    "positive similarity {p} for anchor {i} is <= -1; log(S + 1) undefined"
                )));
            }
            let t = spec.mu * div;
            let skip = spec.exclude.and_then(|ex| ex[i]);
            z.clear();
            z.extend(
                (0..nv.cols())
                    .filter(|&j| Some(j) != skip)
                    .map(|j| (j, (nv.get(i, j) - spec.gamma) / t)),
            );
            // log(1 + sum exp z) as a log-sum-exp over {0} and z.
            let max = z.iter().fold(0.0f64, |m, &(_, v)| m.max(v));
            let denom = (-max).exp() + z.iter().map(|&(_, v)| (v - max).exp()).sum::<f64>();
            let lse = max + denom.ln();
            for &(j, v) in &z {
                let w = (v - max).exp() / denom;
                neg_grad.set(i, j, scale * w / t);
            }
            pos_grad[i] = -scale / (p + 1.0);
            total += lse - (p + 1.0).ln();
        }
        let value = Matrix::scalar(scale * total);
        self.push(
            "contrastive_term",
            value,
            Op::Contrastive {
                pos,
                neg,
                neg_grad,
                pos_grad,
            },
            &[pos, neg],
        )
    }

    /// Mean softmax cross-entropy of `logits` (n x k) against integer labels.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let lv = self.value(logits);
        let (n, k) = lv.shape();
        if labels.len() != n {
            return Err(Error::DimensionMismatch {
                op: "softmax_cross_entropy",
                left: lv.shape(),
                right: (labels.len(), 1),
            });
        }
        if n == 0 {
            return Err(Error::EmptyInput(
                "softmax_cross_entropy with no rows".into(),
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::LabelOutOfRange {
                label: bad,
                classes: k,
            });
        }
        let mut probs = lv.clone();
        let mut total = 0.0;
        for (i, &label) in labels.iter().enumerate() {
            let row = lv.row(i);
            let max = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            total += lse - row[label];
            softmax_in_place(&mut probs.data_mut()[i * k..(i + 1) * k], 1.0);
        }
        let value = Matrix::scalar(total / n as f64);
        self.push(
            "softmax_cross_entropy",
            value,
            Op::CrossEntropy {
                logits,
                probs,
                labels: labels.to_vec(),
            },
            &[logits],
        )
    }

    /// Bidirectional max-margin hinge over a square similarity matrix with
    /// positives on the diagonal, summed over negatives and averaged over anchors.
    pub fn bidirectional_hinge(&mut self, s: Var, margin: f64) -> Result<Var> {
        let m = self.value(s);
        if m.rows() != m.cols() {
            return Err(Error::DimensionMismatch {
                op: "bidirectional_hinge",
                left: m.shape(),
                right: (m.cols(), m.rows()),
            });
        }
        let n = m.rows();
        if n == 0 {
            return Err(Error::EmptyInput("hinge over empty batch".into()));
        }
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    total += (margin - m.get(i, i) + m.get(i, j)).max(0.0);
                    total += (margin - m.get(j, j) + m.get(i, j)).max(0.0);
                }
            }
        }
        let value = Matrix::scalar(total / n as f64);
        self.push(
            "bidirectional_hinge",
            value,
            Op::Hinge { input: s, margin },
            &[s],
        )
    }

    /// Runs the reverse sweep from the `1 x 1` node `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.consumed {
            return Err(Error::TapeConsumed);
        }
        if self.shape(loss) != (1, 1) {
            return Err(Error::DimensionMismatch {
                op: "backward",
                left: self.shape(loss),
                right: (1, 1),
            });
        }
        self.consumed = true;
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                grads[idx] = Some(g);
                continue;
            }
            let mut emit = |v: Var, delta: Matrix| {
                if !self.nodes[v.0].needs_grad {
                    return;
                }
                match &mut grads[v.0] {
                    Some(acc) => acc.add_assign(&delta),
                    slot @ None => *slot = Some(delta),
                }
            };
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    if self.nodes[a.0].needs_grad {
                        emit(*a, g.matmul(&bv.transpose())?);
                    }
                    if self.nodes[b.0].needs_grad {
                        emit(*b, av.transpose().matmul(&g)?);
                    }
                }
                Op::Transpose(a) => emit(*a, g.transpose()),
                Op::Add(a, b) => {
                    emit(*a, g.clone());
                    emit(*b, g.clone());
                }
                Op::Sub(a, b) => {
                    emit(*a, g.clone());
                    emit(*b, g.scale(-1.0));
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    emit(*a, g.zip_map(bv, "mul_grad", |x, y| x * y)?);
                    emit(*b, g.zip_map(av, "mul_grad", |x, y| x * y)?);
                }
                Op::Scale(a, s) => emit(*a, g.scale(*s)),
                Op::AddRow(m, row) => {
                    let cols = g.cols();
                    let sums =
                        Matrix::from_fn(1, cols, |_, j| (0..g.rows()).map(|i| g.get(i, j)).sum());
                    emit(*row, sums);
                    emit(*m, g.clone());
                }
                Op::Tanh(a) => {
                    let y = &node.value;
                    emit(
                        *a,
                        g.zip_map(y, "tanh_grad", |gi, yi| gi * (1.0 - yi * yi))?,
                    );
                }
                Op::LeakyRelu(a, slope) => {
                    let x = &self.nodes[a.0].value;
                    let s = *slope;
                    emit(
                        *a,
                        g.zip_map(x, "relu_grad", |gi, xi| if xi > 0.0 { gi } else { s * gi })?,
                    );
                }
                Op::Normalize { input, norms } => {
                    let y = &node.value;
                    let grad = Matrix::from_fn(y.rows(), y.cols(), |i, j| {
                        let gy = dot(g.row(i), y.row(i));
                        (g.get(i, j) - y.get(i, j) * gy) / norms[i]
                    });
                    emit(*input, grad);
                }
                Op::Softmax { input, temperature } => {
                    let y = &node.value;
                    let t = *temperature;
                    let grad = Matrix::from_fn(y.rows(), y.cols(), |i, j| {
                        let gy = dot(g.row(i), y.row(i));
                        y.get(i, j) * (g.get(i, j) - gy) / t
                    });
                    emit(*input, grad);
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let rows = self.nodes[p.0].value.rows();
                        let idx: Vec<usize> = (offset..offset + rows).collect();
                        emit(p, g.select_rows(&idx));
                        offset += rows;
                    }
                }
                Op::Diag(a) => {
                    let n = g.rows();
                    emit(
                        *a,
                        Matrix::from_fn(n, n, |i, j| if i == j { g.get(i, 0) } else { 0.0 }),
                    );
                }
                Op::RowDot(a, b) => {
                    let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    emit(
                        *a,
                        Matrix::from_fn(bv.rows(), bv.cols(), |i, j| g.get(i, 0) * bv.get(i, j)),
                    );
                    emit(
                        *b,
                        Matrix::from_fn(av.rows(), av.cols(), |i, j| g.get(i, 0) * av.get(i, j)),
                    );
                }
                Op::Sum(a) => {
                    let (r, c) = self.nodes[a.0].value.shape();
                    emit(*a, Matrix::filled(r, c, g.get(0, 0)));
                }
                Op::Contrastive {
                    pos,
                    neg,
                    neg_grad,
                    pos_grad,
                } => {
                    let s = g.get(0, 0);
                    emit(*neg, neg_grad.scale(s));
                    emit(
                        *pos,
                        Matrix::from_fn(pos_grad.len(), 1, |i, _| s * pos_grad[i]),
                    );
                }
                Op::CrossEntropy {
                    logits,
                    probs,
                    labels,
                } => {
                    let s = g.get(0, 0) / labels.len() as f64;
                    let grad = Matrix::from_fn(probs.rows(), probs.cols(), |i, j| {
                        let target = if labels[i] == j { 1.0 } else { 0.0 };
                        s * (probs.get(i, j) - target)
                    });
                    emit(*logits, grad);
                }
                Op::Hinge { input, margin } => {
                    let m = &self.nodes[input.0].value;
                    let n = m.rows();
                    let s = g.get(0, 0) / n as f64;
                    let mut grad = Matrix::zeros(n, n);
                    for i in 0..n {
                        for j in 0..n {
                            if i == j {
                                continue;
                            }
                            if margin - m.get(i, i) + m.get(i, j) > 0.0 {
                                grad.set(i, j, grad.get(i, j) + s);
                                grad.set(i, i, grad.get(i, i) - s);
                            }
                            if margin - m.get(j, j) + m.get(i, j) > 0.0 {
                                grad.set(i, j, grad.get(i, j) + s);
                                grad.set(j, j, grad.get(j, j) - s);
                            }
                        }
                    }
                    emit(*input, grad);
                }
            }
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::grad_check::grad_check;
    use crate::numerics::rng::SeededRng;

    /// Finite-difference check of `f` w.r.t. a single parameter matrix.
    fn check(param: Matrix, f: impl Fn(&mut Tape, Var) -> Result<Var>) -> f64 {
        grad_check(
            |p| {
                let mut tape = Tape::new();
                let v = tape.param(p.clone());
                let loss = f(&mut tape, v)?;
                let value = tape.scalar(loss);
                let grads = tape.backward(loss)?;
                Ok((value, grads.get_or_zeros(v, p.shape())))
            },
            &param,
            1e-5,
        )
        .unwrap()
    }

    fn weighted_sum(tape: &mut Tape, x: Var, seed: u64) -> Result<Var> {
        let (r, c) = tape.shape(x);
        let w = tape.constant(SeededRng::new(seed).normal_matrix(r, c, 1.0));
        let p = tape.mul(x, w)?;
        tape.sum(p)
    }

    #[test]
    fn elementary_ops_pass_gradient_check() {
        for seed in 0..5 {
            let mut rng = SeededRng::new(seed);
            let a = rng.normal_matrix(4, 3, 1.0);
            let b = rng.normal_matrix(3, 5, 1.0);
            let err = check(a.clone(), |t, x| {
                let bv = t.constant(b.clone());
                let y = t.matmul(x, bv)?;
                let y = t.tanh(y)?;
                weighted_sum(t, y, 99)
            });
            assert!(err <= 1e-6, "matmul/tanh err {err}");

            let err = check(a.clone(), |t, x| {
                let y = t.l2_normalize_rows(x)?;
                weighted_sum(t, y, 7)
            });
            assert!(err <= 1e-6, "normalize err {err}");

            let err = check(a.clone(), |t, x| {
                let y = t.softmax_rows(x, 0.3)?;
                weighted_sum(t, y, 8)
            });
            assert!(err <= 1e-6, "softmax err {err}");

            let row = rng.normal_matrix(1, 3, 1.0);
            let err = check(row, |t, r| {
                let m = t.constant(a.clone());
                let y = t.add_row(m, r)?;
                let y = t.leaky_relu(y, 0.2)?;
                let yt = t.transpose(y)?;
                weighted_sum(t, yt, 3)
            });
            assert!(err <= 1e-6, "add_row err {err}");

            let sq = rng.normal_matrix(4, 4, 1.0);
            let err = check(sq, |t, x| {
                let d = t.diag(x)?;
                let c = t.concat_rows(&[d, d])?;
                let s = t.scale(c, 1.5)?;
                weighted_sum(t, s, 4)
            });
            assert!(err <= 1e-6, "diag err {err}");

            let other = rng.normal_matrix(4, 3, 1.0);
            let err = check(a.clone(), |t, x| {
                let o = t.constant(other.clone());
                let d = t.row_dot(x, o)?;
                let dd = t.row_dot(x, x)?;
                let s = t.sub(d, dd)?;
                weighted_sum(t, s, 5)
            });
            assert!(err <= 1e-6, "row_dot err {err}");
        }
    }

    #[test]
    fn fused_kernels_pass_gradient_check() {
        for seed in 0..5 {
            let mut rng = SeededRng::new(100 + seed);
            // Moderate temperature keeps every gradient entry well above the
            // finite-difference noise floor.
            let s = rng.uniform_matrix(6, 6, -0.9, 0.9);
            let div: Vec<f64> = (0..6).map(|_| 0.5 + 0.5 * rng.uniform()).collect();
            let exclude: Vec<Option<usize>> = (0..6).map(Some).collect();
            let err = check(s.clone(), |t, x| {
                let pos = t.diag(x)?;
                let spec = ContrastiveSpec {
                    exclude: Some(&exclude),
                    diversity: &div,
                    mu: 0.5,
                    gamma: 0.3,
                };
                t.contrastive_term(pos, x, &spec)
            });
            assert!(err <= 1e-4, "contrastive err {err}");

            let labels: Vec<usize> = (0..6).map(|i| i % 4).collect();
            let logits = rng.normal_matrix(6, 4, 2.0);
            let err = check(logits, |t, x| t.softmax_cross_entropy(x, &labels));
            assert!(err <= 1e-6, "cross entropy err {err}");

            let err = check(s.clone(), |t, x| t.bidirectional_hinge(x, 0.2));
            assert!(err <= 1e-6, "hinge err {err}");
        }
    }

    #[test]
    fn second_backward_is_an_error() {
        let mut tape = Tape::new();
        let x = tape.param(Matrix::scalar(2.0));
        let y = tape.mul(x, x).unwrap();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(x).unwrap().get(0, 0), 4.0);
        assert!(matches!(tape.backward(y), Err(Error::TapeConsumed)));
        tape.reset();
        let x = tape.param(Matrix::scalar(3.0));
        let y = tape.mul(x, x).unwrap();
        assert_eq!(tape.backward(y).unwrap().get(x).unwrap().get(0, 0), 6.0);
    }

    #[test]
    fn gradient_shapes_match_parameters() {
        let mut rng = SeededRng::new(1);
        let mut tape = Tape::new();
        let w = tape.param(rng.normal_matrix(3, 2, 1.0));
        let x = tape.constant(rng.normal_matrix(5, 3, 1.0));
        let y = tape.matmul(x, w).unwrap();
        let l = tape.sum(y).unwrap();
        let g = tape.backward(l).unwrap();
        assert_eq!(g.get(w).unwrap().shape(), (3, 2));
        assert!(g.get(x).is_none());
    }

    #[test]
    fn cross_entropy_rejects_bad_label() {
        let mut tape = Tape::new();
        let l = tape.param(Matrix::zeros(2, 3));
        assert!(matches!(
            tape.softmax_cross_entropy(l, &[0, 3]),
            Err(Error::LabelOutOfRange {
                label: 3,
                classes: 3
            })
        ));
    }

    #[test]
    fn contrastive_rejects_degenerate_positive() {
        let mut tape = Tape::new();
        let pos = tape.param(Matrix::scalar(-1.0));
        let neg = tape.param(Matrix::scalar(0.0));
        let spec = ContrastiveSpec {
            exclude: None,
            diversity: &[1.0],
            mu: 0.1,
            gamma: 0.3,
        };
        assert!(tape.contrastive_term(pos, neg, &spec).is_err());
    }
}
