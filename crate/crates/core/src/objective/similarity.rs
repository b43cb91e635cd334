use crate::error::{Error, Result};
use crate::numerics::{dot, Matrix};

/// Anchor-by-candidate similarities together with the positive candidate (if
/// any) of each anchor. Every other candidate in a row is a negative.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityMatrix {
    s: Matrix,
    positives: Vec<Option<usize>>,
}

impl SimilarityMatrix {
    /// Square matrix with the positive of anchor `i` at column `i`.
    pub fn paired(s: Matrix) -> Result<Self> {
        if s.rows() != s.cols() {
            return Err(Error::DimensionMismatch {
                op: "paired similarity",
                left: s.shape(),
                right: (s.cols(), s.rows()),
            });
        }
        let positives = (0..s.rows()).map(Some).collect();
        Ok(SimilarityMatrix { s, positives })
    }

    /// All candidates are negatives (e.g. memory-bank entries).
    pub fn unpaired(s: Matrix) -> Self {
        let positives = vec![None; s.rows()];
        SimilarityMatrix { s, positives }
    }

    pub fn with_positives(s: Matrix, positives: Vec<Option<usize>>) -> Result<Self> {
        if positives.len() != s.rows() {
            return Err(Error::DimensionMismatch {
                op: "similarity positives",
                left: s.shape(),
                right: (positives.len(), 1),
            });
        }
        if let Some(bad) = positives.iter().flatten().find(|&&p| p >= s.cols()) {
            return Err(Error::InvalidParameter(format!(
                "positive column {bad} out of range"
            )));
        }
        Ok(SimilarityMatrix { s, positives })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.s
    }

    pub fn positives(&self) -> &[Option<usize>] {
        &self.positives
    }

    pub fn anchors(&self) -> usize {
        self.s.rows()
    }

    /// Similarities between anchor `i` and its negatives.
    pub fn negatives(&self, i: usize) -> Vec<f64> {
        let skip = self.positives[i];
        self.s
            .row(i)
            .iter()
            .enumerate()
            .filter(|(j, _)| Some(*j) != skip)
            .map(|(_, &v)| v)
            .collect()
    }

    /// The same matrix seen from the candidates' side.
    pub fn transposed(&self) -> Result<Self> {
        if self.positives.iter().all(Option::is_none) {
            return Ok(SimilarityMatrix::unpaired(self.s.transpose()));
        }
        let mut positives = vec![None; self.s.cols()];
        for (i, p) in self.positives.iter().enumerate() {
            if let Some(j) = *p {
                positives[j] = Some(i);
            }
        }
        SimilarityMatrix::with_positives(self.s.transpose(), positives)
    }
}

/// `S_ij = a_i . b_j / (|a_i| |b_j|)`.
pub fn cosine_matrix(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols() != b.cols() {
        return Err(Error::DimensionMismatch {
            op: "cosine_matrix",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let norms = |m: &Matrix| -> Result<Vec<f64>> {
        (0..m.rows())
            .map(|i| {
                let n = m.row_norm(i);
                if n == 0.0 {
                    Err(Error::ZeroRow {
                        op: "cosine_matrix",
                        row: i,
                    })
                } else {
                    Ok(n)
                }
            })
            .collect()
    };
    let (na, nb) = (norms(a)?, norms(b)?);
    Ok(Matrix::from_fn(a.rows(), b.rows(), |i, j| {
        (dot(a.row(i), b.row(j)) / (na[i] * nb[j])).clamp(-1.0, 1.0)
    }))
}
