use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::numerics::{Matrix, SeededRng, Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Visual,
    Textual,
}

/// Bilinear query matrices for the two modalities plus softmax sharpness.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConceptQueryHead {
    pub w_v: Matrix,
    pub w_w: Matrix,
    pub lambda: f64,
}

impl ConceptQueryHead {
    pub fn new(dim: usize, lambda: f64, rng: &mut SeededRng) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(invalid(format!(
                "concept smoothness must be positive, got {lambda}"
            )));
        }
        let std = 1.0 / (dim as f64).sqrt();
        Ok(ConceptQueryHead {
            w_v: rng.normal_matrix(dim, dim, std),
            w_w: rng.normal_matrix(dim, dim, std),
            lambda,
        })
    }

    pub fn weights(&self, modality: Modality) -> &Matrix {
        match modality {
            Modality::Visual => &self.w_v,
            Modality::Textual => &self.w_w,
        }
    }

    /// Value-only query; returns unit-norm concept embeddings and attention rows.
    pub fn query(
        &self,
        queries: &Matrix,
        y: &Matrix,
        modality: Modality,
    ) -> Result<(Matrix, Matrix)> {
        let mut tape = Tape::new();
        let w = tape.constant(self.weights(modality).clone());
        let q = tape.constant(queries.clone());
        let yv = tape.constant(y.clone());
        let (out, attn) = concept_query(&mut tape, w, q, yv, self.lambda)?;
        Ok((tape.value(out).clone(), tape.value(attn).clone()))
    }
}

/// Attention `a = softmax(lambda * q W Y^T)` over concepts and the unit-norm
/// combination `normalize(a Y)`. Returns `(embedding, attention)`.
pub fn concept_query(
    tape: &mut Tape,
    w: Var,
    queries: Var,
    y: Var,
    lambda: f64,
) -> Result<(Var, Var)> {
    if !(lambda > 0.0) {
        return Err(invalid(format!(
            "concept smoothness must be positive, got {lambda}"
        )));
    }
    let qw = tape.matmul(queries, w)?;
    let yt = tape.transpose(y)?;
    let scores = tape.matmul(qw, yt)?;
    let attn = tape.softmax_rows(scores, 1.0 / lambda)?;
    let mixed = tape.matmul(attn, y)?;
    let out = tape.l2_normalize_rows(mixed)?;
    Ok((out, attn))
}
