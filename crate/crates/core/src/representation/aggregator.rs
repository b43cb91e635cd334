use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numerics::{Matrix, SeededRng, Tape, Var};

/// A sequence of local features (image regions or token embeddings), one per row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct FeatureSequence(Matrix);

impl FeatureSequence {
    pub fn new(items: Matrix) -> Result<Self> {
        if items.rows() == 0 || items.cols() == 0 {
            return Err(Error::EmptyInput(
                "feature sequence must have at least one item".into(),
            ));
        }
        Ok(FeatureSequence(items))
    }

    pub fn len(&self) -> usize {
        self.0.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.0.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.0.cols()
    }

    pub fn items(&self) -> &Matrix {
        &self.0
    }
}

impl TryFrom<Vec<Vec<f64>>> for FeatureSequence {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        FeatureSequence::new(Matrix::from_rows(&rows)?)
    }
}

impl From<FeatureSequence> for Vec<Vec<f64>> {
    fn from(seq: FeatureSequence) -> Self {
        seq.0.row_vecs()
    }
}

/// Sinusoidal encoding of a sequence position: `sin(u_j l)` at even and
/// `cos(u_j l)` at odd components, with `u_j = 10000^(-2j / d_p)`.
pub fn positional_encoding(index: usize, d_p: usize) -> Result<Vec<f64>> {
    if d_p == 0 || !d_p.is_multiple_of(2) {
        return Err(invalid(format!(
            "positional dimension must be even and positive, got {d_p}"
        )));
    }
    let l = index as f64;
    let mut out = Vec::with_capacity(d_p);
    for j in 0..d_p / 2 {
        let u = 1.0 / 10000f64.powf(2.0 * j as f64 / d_p as f64);
        out.push((u * l).sin());
        out.push((u * l).cos());
    }
    Ok(out)
}

fn positional_matrix(len: usize, d_p: usize) -> Result<Matrix> {
    let mut data = Vec::with_capacity(len * d_p);
    for l in 0..len {
        data.extend(positional_encoding(l, d_p)?);
    }
    Matrix::from_vec(len, d_p, data)
}

/// Position-weighted pooling followed by a linear projection into the joint
/// space. Pooling weights come from a two-layer perceptron applied to the
/// positional encoding of each item: `theta_l = tanh(p_l W1 + b1) W2 + b2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureAggregator {
    pub proj: Matrix,
    pub w1: Matrix,
    pub b1: Matrix,
    pub w2: Matrix,
    pub b2: Matrix,
    d_p: usize,
}

/// Tape handles for one aggregator's parameters.
#[derive(Clone, Copy, Debug)]
pub struct AggregatorVars {
    pub proj: Var,
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
    d_p: usize,
}

impl FeatureAggregator {
    pub fn new(
        d_in: usize,
        dim: usize,
        d_p: usize,
        hidden: usize,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        if d_p == 0 || !d_p.is_multiple_of(2) {
            return Err(invalid(format!(
                "positional dimension must be even and positive, got {d_p}"
            )));
        }
        if d_in == 0 || dim == 0 || hidden == 0 {
            return Err(invalid("aggregator dimensions must be positive"));
        }
        Ok(FeatureAggregator {
            proj: rng.normal_matrix(d_in, dim, 1.0 / (d_in as f64).sqrt()),
            w1: rng.normal_matrix(d_p, hidden, 1.0 / (d_p as f64).sqrt()),
            b1: Matrix::zeros(1, hidden),
            w2: rng.normal_matrix(hidden, 1, 0.1 / (hidden as f64).sqrt()),
            // Start close to uniform pooling.
            b2: Matrix::scalar(1.0),
            d_p,
        })
    }

    /// Assembles an aggregator from explicit weights.
    pub fn from_parts(
        proj: Matrix,
        w1: Matrix,
        b1: Matrix,
        w2: Matrix,
        b2: Matrix,
    ) -> Result<Self> {
        let d_p = w1.rows();
        let hidden = w1.cols();
        if d_p == 0 || !d_p.is_multiple_of(2) {
            return Err(invalid(format!(
                "positional dimension must be even and positive, got {d_p}"
            )));
        }
        if b1.shape() != (1, hidden) || w2.shape() != (hidden, 1) || b2.shape() != (1, 1) {
            return Err(invalid("inconsistent pooling decoder shapes"));
        }
        Ok(FeatureAggregator {
            proj,
            w1,
            b1,
            w2,
            b2,
            d_p,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.proj.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.proj.cols()
    }

    pub fn positional_dim(&self) -> usize {
        self.d_p
    }

    pub fn parameters(&self) -> [&Matrix; 5] {
        [&self.proj, &self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn parameters_mut(&mut self) -> [&mut Matrix; 5] {
        [
            &mut self.proj,
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
        ]
    }

    /// Places the parameters on `tape`, as trainable leaves or as constants.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> AggregatorVars {
        let mut leaf = |m: &Matrix| {
            if trainable {
                tape.param(m.clone())
            } else {
                tape.constant(m.clone())
            }
        };
        AggregatorVars {
            proj: leaf(&self.proj),
            w1: leaf(&self.w1),
            b1: leaf(&self.b1),
            w2: leaf(&self.w2),
            b2: leaf(&self.b2),
            d_p: self.d_p,
        }
    }

    /// Forward pass without gradients; one unit-norm row per sequence.
    pub fn embed(&self, seqs: &[&FeatureSequence]) -> Result<Matrix> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape, false);
        let out = aggregate_batch(&mut tape, &vars, seqs)?;
        Ok(tape.value(out).clone())
    }
}

/// Pooling weights `theta` (len x 1) for a sequence of the given length.
pub fn pooling_weights(tape: &mut Tape, vars: &AggregatorVars, len: usize) -> Result<Var> {
    if len == 0 {
        return Err(Error::EmptyInput(
            "pooling weights for empty sequence".into(),
        ));
    }
    let pos = tape.constant(positional_matrix(len, vars.d_p)?);
    let h = tape.matmul(pos, vars.w1)?;
    let h = tape.add_row(h, vars.b1)?;
    let h = tape.tanh(h)?;
    let theta = tape.matmul(h, vars.w2)?;
    tape.add_row(theta, vars.b2)
}

/// `normalize(sum_l theta_l * o_l W_proj)` for a fixed weight column `theta`.
pub fn pool(tape: &mut Tape, proj: Var, items: Var, theta: Var) -> Result<Var> {
    let theta_t = tape.transpose(theta)?;
    let pooled = tape.matmul(theta_t, items)?;
    let projected = tape.matmul(pooled, proj)?;
    tape.l2_normalize_rows(projected)
}

/// Aggregates one sequence into a unit-norm `1 x F` embedding.
pub fn aggregate(tape: &mut Tape, vars: &AggregatorVars, seq: &FeatureSequence) -> Result<Var> {
    check_input_dim(tape, vars, seq)?;
    let theta = pooling_weights(tape, vars, seq.len())?;
    let items = tape.constant(seq.items().clone());
    pool(tape, vars.proj, items, theta)
}

/// Aggregates a batch of sequences into a `B x F` matrix of unit rows.
/// Pooling weights depend only on position, so they are computed once per
/// distinct length.
pub fn aggregate_batch(
    tape: &mut Tape,
    vars: &AggregatorVars,
    seqs: &[&FeatureSequence],
) -> Result<Var> {
    if seqs.is_empty() {
        return Err(Error::EmptyInput(
            "aggregate_batch of zero sequences".into(),
        ));
    }
    let mut weights: BTreeMap<usize, Var> = BTreeMap::new();
    let mut rows = Vec::with_capacity(seqs.len());
    for seq in seqs {
        check_input_dim(tape, vars, seq)?;
        let theta = match weights.get(&seq.len()) {
            Some(&t) => t,
            None => {
                let t = pooling_weights(tape, vars, seq.len())?;
                weights.insert(seq.len(), t);
                t
            }
        };
        let items = tape.constant(seq.items().clone());
        rows.push(pool(tape, vars.proj, items, theta)?);
    }
    tape.concat_rows(&rows)
}

fn check_input_dim(tape: &Tape, vars: &AggregatorVars, seq: &FeatureSequence) -> Result<()> {
    let d_in = tape.shape(vars.proj).0;
    if seq.dim() != d_in {
        return Err(Error::DimensionMismatch {
            op: "aggregate",
            left: (seq.len(), seq.dim()),
            right: tape.shape(vars.proj),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::grad_check;

    fn random_seq(rng: &mut SeededRng, len: usize, dim: usize) -> FeatureSequence {
        FeatureSequence::new(rng.normal_matrix(len, dim, 1.0)).unwrap()
    }

    #[test]
    fn positional_encoding_values() {
        let p0 = positional_encoding(0, 6).unwrap();
        assert_eq!(p0, vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
        let p1 = positional_encoding(1, 2).unwrap();
        assert!((p1[0] - 0.841471).abs() < 1e-6 && (p1[1] - 0.540302).abs() < 1e-6);
        for l in [3, 17, 1000] {
            assert!(positional_encoding(l, 32)
                .unwrap()
                .iter()
                .all(|v| v.abs() <= 1.0));
        }
        assert!(positional_encoding(1, 3).is_err());
    }

    #[test]
    fn identical_items_give_their_projection() {
        let mut rng = SeededRng::new(4);
        let agg = FeatureAggregator::new(5, 4, 8, 6, &mut rng).unwrap();
        let row = rng.normal_matrix(1, 5, 1.0);
        let seq = FeatureSequence::new(Matrix::vstack(&[&row, &row, &row]).unwrap()).unwrap();
        let out = agg.embed(&[&seq]).unwrap();
        let expected = row.matmul(&agg.proj).unwrap().l2_normalize_rows().unwrap();
        // The pooled sum may flip sign if the weights sum to a negative value.
        let sign = if out.get(0, 0) * expected.get(0, 0) >= 0.0 {
            1.0
        } else {
            -1.0
        };
        for (a, b) in out.data().iter().zip(expected.data()) {
            assert!((a - sign * b).abs() < 1e-12);
        }
    }

    #[test]
    fn single_item_sequence() {
        let mut rng = SeededRng::new(5);
        let agg = FeatureAggregator::new(3, 4, 4, 3, &mut rng).unwrap();
        let seq = random_seq(&mut rng, 1, 3);
        let out = agg.embed(&[&seq]).unwrap();
        let expected = seq
            .items()
            .matmul(&agg.proj)
            .unwrap()
            .l2_normalize_rows()
            .unwrap();
        for (a, b) in out.data().iter().zip(expected.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn forced_one_hot_weights_select_first_item() {
        let mut rng = SeededRng::new(6);
        let agg = FeatureAggregator::new(6, 5, 4, 3, &mut rng).unwrap();
        let seq = random_seq(&mut rng, 4, 6);
        let mut tape = Tape::new();
        let vars = agg.bind(&mut tape, false);
        let items = tape.constant(seq.items().clone());
        let theta = tape.constant(Matrix::from_vec(4, 1, vec![1.0, 0.0, 0.0, 0.0]).unwrap());
        let out = pool(&mut tape, vars.proj, items, theta).unwrap();
        let first = seq
            .items()
            .select_rows(&[0])
            .matmul(&agg.proj)
            .unwrap()
            .l2_normalize_rows()
            .unwrap();
        for (a, b) in tape.value(out).data().iter().zip(first.data()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn outputs_are_unit_norm() {
        let mut rng = SeededRng::new(7);
        let agg = FeatureAggregator::new(8, 6, 8, 5, &mut rng).unwrap();
        let seqs: Vec<FeatureSequence> = (1..10).map(|l| random_seq(&mut rng, l, 8)).collect();
        let refs: Vec<&FeatureSequence> = seqs.iter().collect();
        let out = agg.embed(&refs).unwrap();
        for i in 0..out.rows() {
            assert!((out.row_norm(i) - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn rejects_empty_and_mismatched_sequences() {
        assert!(FeatureSequence::new(Matrix::zeros(0, 3)).is_err());
        let mut rng = SeededRng::new(8);
        let agg = FeatureAggregator::new(3, 2, 4, 3, &mut rng).unwrap();
        let seq = random_seq(&mut rng, 2, 4);
        assert!(agg.embed(&[&seq]).is_err());
        assert!(agg.embed(&[]).is_err());
    }

    #[test]
    fn gradient_through_aggregate() {
        let mut rng = SeededRng::new(9);
        let agg = FeatureAggregator::new(5, 4, 6, 4, &mut rng).unwrap();
        let seqs: Vec<FeatureSequence> = (2..5).map(|l| random_seq(&mut rng, l, 5)).collect();
        let target = rng.normal_matrix(3, 4, 1.0);
        for which in 0..5 {
            let err = grad_check(
                |p| {
                    let mut a = agg.clone();
                    *a.parameters_mut()[which] = p.clone();
                    let mut tape = Tape::new();
                    let vars = a.bind(&mut tape, true);
                    let refs: Vec<&FeatureSequence> = seqs.iter().collect();
                    let out = aggregate_batch(&mut tape, &vars, &refs)?;
                    let t = tape.constant(target.clone());
                    let prod = tape.mul(out, t)?;
                    let loss = tape.sum(prod)?;
                    let value = tape.scalar(loss);
                    let v = [vars.proj, vars.w1, vars.b1, vars.w2, vars.b2][which];
                    let g = tape.backward(loss)?;
                    Ok((value, g.get_or_zeros(v, p.shape())))
                },
                agg.parameters()[which],
                1e-5,
            )
            .unwrap();
            assert!(err <= 1e-4, "param {which}: {err}");
        }
    }
}
