use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::ConceptVocabulary;
use crate::error::{invalid, Error, Result};
use crate::numerics::{Matrix, Tape, Var};

/// Caption-level co-occurrence statistics over a concept vocabulary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CooccurrenceStats {
    /// `b[i][j]`: captions containing both concept i and j (zero diagonal).
    pub b: Matrix,
    /// `n[i]`: captions containing concept i.
    pub n: Vec<f64>,
    /// Conditional probabilities `p[i][j] = b[i][j] / n[i]`, zero where `n[i] = 0`.
    pub p: Matrix,
}

pub fn build_cooccurrence(corpus: &[Vec<String>], vocab: &ConceptVocabulary) -> CooccurrenceStats {
    let g = vocab.len();
    let index = vocab.index();
    let mut b = Matrix::zeros(g, g);
    let mut n = vec![0.0; g];
    for caption in corpus {
        let present: BTreeSet<usize> = caption
            .iter()
            .filter_map(|t| index.get(t.as_str()).copied())
            .collect();
        for &i in &present {
            n[i] += 1.0;
            for &j in &present {
                if i != j {
                    b.set(i, j, b.get(i, j) + 1.0);
                }
            }
        }
    }
    let p = Matrix::from_fn(
        g,
        g,
        |i, j| if n[i] > 0.0 { b.get(i, j) / n[i] } else { 0.0 },
    );
    CooccurrenceStats { b, n, p }
}

/// `1` where `p >= eps_t`, else `0`.
pub fn binarize(p: &Matrix, eps_t: f64) -> Result<Matrix> {
    if !(eps_t > 0.0) || !eps_t.is_finite() {
        return Err(invalid(format!(
            "binarization threshold must be positive, got {eps_t}"
        )));
    }
    Ok(p.map(|v| if v >= eps_t { 1.0 } else { 0.0 }))
}

/// `D_r^{-1/2} H D_c^{-1/2} + I` with row degrees on the left and column
/// degrees on the right. Zero-degree rows or columns contribute nothing.
pub fn normalized_adjacency(hsc: &Matrix) -> Result<Matrix> {
    let (r, c) = hsc.shape();
    if r != c {
        return Err(Error::DimensionMismatch {
            op: "normalized_adjacency",
            left: hsc.shape(),
            right: (c, r),
        });
    }
    let row_deg: Vec<f64> = (0..r).map(|i| hsc.row(i).iter().sum()).collect();
    let col_deg: Vec<f64> = (0..c)
        .map(|j| (0..r).map(|i| hsc.get(i, j)).sum())
        .collect();
    let a = Matrix::from_fn(r, c, |i, j| {
        let h = hsc.get(i, j);
        let norm = if h != 0.0 && row_deg[i] > 0.0 && col_deg[j] > 0.0 {
            h / (row_deg[i] * col_deg[j]).sqrt()
        } else {
            0.0
        };
        norm + if i == j { 1.0 } else { 0.0 }
    });
    a.ensure_finite("normalized_adjacency")
}

/// Nonlinearity applied after graph propagation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphActivation {
    #[default]
    Relu,
    LeakyRelu,
}

impl GraphActivation {
    pub fn slope(self) -> f64 {
        match self {
            GraphActivation::Relu => 0.0,
            GraphActivation::LeakyRelu => 0.2,
        }
    }
}

/// `Y = act(A X W_sc)` recorded on the tape.
pub fn gcn_forward(
    tape: &mut Tape,
    a_tilde: Var,
    x: Var,
    w_sc: Var,
    act: GraphActivation,
) -> Result<Var> {
    let ax = tape.matmul(a_tilde, x)?;
    let pre = tape.matmul(ax, w_sc)?;
    tape.leaky_relu(pre, act.slope())
}

/// Value-only graph convolution from the raw binary adjacency.
pub fn gcn_value(x: &Matrix, hsc: &Matrix, w_sc: &Matrix, act: GraphActivation) -> Result<Matrix> {
    let a = normalized_adjacency(hsc)?;
    if a.rows() != x.rows() {
        return Err(Error::DimensionMismatch {
            op: "gcn_forward",
            left: a.shape(),
            right: x.shape(),
        });
    }
    let mut tape = Tape::new();
    let (av, xv, wv) = (
        tape.constant(a),
        tape.constant(x.clone()),
        tape.constant(w_sc.clone()),
    );
    let y = gcn_forward(&mut tape, av, xv, wv, act)?;
    Ok(tape.value(y).clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{grad_check, SeededRng};

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn toy() -> (Vec<Vec<String>>, ConceptVocabulary) {
        let corpus = vec![toks("c1 c2"), toks("c1 c2 x"), toks("c1"), toks("c1 y")];
        let vocab = ConceptVocabulary::new(vec!["c1".into(), "c2".into()], 3, 1).unwrap();
        (corpus, vocab)
    }

    #[test]
    fn toy_conditional_probabilities() {
        let (corpus, vocab) = toy();
        let stats = build_cooccurrence(&corpus, &vocab);
        assert_eq!(stats.n, vec![4.0, 2.0]);
        assert_eq!(stats.p.get(0, 1), 0.5);
        assert_eq!(stats.p.get(1, 0), 1.0);
        assert_eq!(stats.b.get(0, 1), stats.b.get(1, 0));
        assert_eq!(stats.b.get(0, 0), 0.0);

        let h = binarize(&stats.p, 0.6).unwrap();
        assert_eq!(h.get(0, 1), 0.0);
        assert_eq!(h.get(1, 0), 1.0);
        assert_eq!(binarize(&stats.p, 1.0).unwrap().get(1, 0), 1.0);
        assert_eq!(binarize(&stats.p, 1.0 + 1e-9).unwrap().sum(), 0.0);
        assert!(binarize(&stats.p, 0.0).is_err());
    }

    #[test]
    fn isolated_concept_has_zero_row() {
        let corpus = vec![toks("a b"), toks("c")];
        let vocab = ConceptVocabulary::new(vec!["a".into(), "b".into(), "c".into()], 2, 0).unwrap();
        let stats = build_cooccurrence(&corpus, &vocab);
        assert!(stats.p.row(2).iter().all(|&v| v == 0.0));
        let missing = ConceptVocabulary::new(vec!["zzz".into()], 2, 0).unwrap();
        assert_eq!(build_cooccurrence(&corpus, &missing).p.get(0, 0), 0.0);
    }

    #[test]
    fn adjacency_examples() {
        let a = normalized_adjacency(&Matrix::zeros(3, 3)).unwrap();
        assert_eq!(a, Matrix::identity(3));
        let a = normalized_adjacency(&Matrix::filled(2, 2, 1.0)).unwrap();
        assert_eq!(a.data(), &[1.5, 0.5, 0.5, 1.5]);
    }

    #[test]
    fn empty_graph_is_identity_propagation() {
        let mut rng = SeededRng::new(2);
        let x = rng.uniform_matrix(4, 3, 0.0, 1.0);
        let y = gcn_value(
            &x,
            &Matrix::zeros(4, 4),
            &Matrix::identity(3),
            GraphActivation::Relu,
        )
        .unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn gradient_wrt_weights() {
        let mut rng = SeededRng::new(5);
        let h = Matrix::from_fn(5, 5, |i, j| {
            if (i + 2 * j) % 3 == 0 && i != j {
                1.0
            } else {
                0.0
            }
        });
        let a = normalized_adjacency(&h).unwrap();
        let x = rng.unit_rows(5, 4);
        let w = rng.normal_matrix(4, 3, 1.0);
        let target = rng.normal_matrix(5, 3, 1.0);
        let err = grad_check(
            |p| {
                let mut t = Tape::new();
                let (av, xv, wv) = (
                    t.constant(a.clone()),
                    t.constant(x.clone()),
                    t.param(p.clone()),
                );
                let y = gcn_forward(&mut t, av, xv, wv, GraphActivation::LeakyRelu)?;
                let tv = t.constant(target.clone());
                let prod = t.mul(y, tv)?;
                let l = t.sum(prod)?;
                let value = t.scalar(l);
                Ok((value, t.backward(l)?.get_or_zeros(wv, p.shape())))
            },
            &w,
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-4, "{err}");
    }
}
