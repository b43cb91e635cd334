use serde::{Deserialize, Serialize};

use super::{Model, PairedDataset};
use crate::error::{invalid, Error, Result};
use crate::knowledge::ConceptBasis;
use crate::numerics::{dot, Matrix};

/// Recall percentages for text retrieval (image queries, `_t`) and image
/// retrieval (caption queries, `_i`).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub r1_t: f64,
    pub r5_t: f64,
    pub r10_t: f64,
    pub r1_i: f64,
    pub r5_i: f64,
    pub r10_i: f64,
    pub rsum: f64,
}

/// 0-based rank of candidate `target` among `scores`: candidates scoring
/// higher, or equal with a lower index, rank ahead of it.
fn rank_of(scores: &[f64], target: usize) -> usize {
    let t = scores[target];
    scores
        .iter()
        .enumerate()
        .filter(|&(j, &s)| s > t || (s == t && j < target))
        .count()
}

fn percent(ranks: &[usize], k: usize) -> f64 {
    100.0 * ranks.iter().filter(|&&r| r < k).count() as f64 / ranks.len() as f64
}

/// Recall@{1,5,10} in both directions from an `images x captions` similarity
/// matrix; `caption_image[j]` is the ground-truth image of caption `j`.
pub fn recall_at_k(sim: &Matrix, caption_image: &[usize]) -> Result<EvalResult> {
    let (n_img, n_cap) = sim.shape();
    if n_img == 0 || n_cap == 0 {
        return Err(Error::EmptyInput(
            "evaluation needs at least one image and caption".into(),
        ));
    }
    if caption_image.len() != n_cap {
        return Err(Error::DimensionMismatch {
            op: "recall_at_k",
            left: sim.shape(),
            right: (caption_image.len(), 1),
        });
    }
    if let Some(&bad) = caption_image.iter().find(|&&i| i >= n_img) {
        return Err(invalid(format!("caption refers to image {bad} of {n_img}")));
    }
    let mut captions_of = vec![Vec::new(); n_img];
    for (j, &i) in caption_image.iter().enumerate() {
        captions_of[i].push(j);
    }
    if captions_of.iter().any(Vec::is_empty) {
        return Err(invalid(
            "every image needs at least one ground-truth caption",
        ));
    }

    let text_ranks: Vec<usize> = (0..n_img)
        .map(|i| {
            let row = sim.row(i);
            captions_of[i]
                .iter()
                .map(|&j| rank_of(row, j))
                .min()
                .expect("non-empty")
        })
        .collect();
    let st = sim.transpose();
    let image_ranks: Vec<usize> = (0..n_cap)
        .map(|j| rank_of(st.row(j), caption_image[j]))
        .collect();

    let mut r = EvalResult {
        r1_t: percent(&text_ranks, 1),
        r5_t: percent(&text_ranks, 5),
        r10_t: percent(&text_ranks, 10),
        r1_i: percent(&image_ranks, 1),
        r5_i: percent(&image_ranks, 5),
        r10_i: percent(&image_ranks, 10),
        rsum: 0.0,
    };
    r.rsum = r.r1_t + r.r5_t + r.r10_t + r.r1_i + r.r5_i + r.r10_i;
    Ok(r)
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let n = dot(a, a).sqrt() * dot(b, b).sqrt();
    if n == 0.0 {
        0.0
    } else {
        dot(a, b) / n
    }
}

/// `beta * cos(v_i, w_i) + (1 - beta) * cos(v_c, w_c)`.
pub fn blended_similarity(
    v_i: &[f64],
    w_i: &[f64],
    v_c: &[f64],
    w_c: &[f64],
    beta: f64,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(invalid(format!("beta must lie in [0, 1], got {beta}")));
    }
    Ok(beta * cosine(v_i, w_i) + (1.0 - beta) * cosine(v_c, w_c))
}

/// Blended similarity between every image and every caption. Inputs are
/// unit rows, so cosine reduces to a dot product.
pub fn blended_similarity_matrix(
    v_i: &Matrix,
    w_i: &Matrix,
    v_c: &Matrix,
    w_c: &Matrix,
    beta: f64,
) -> Result<Matrix> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(invalid(format!("beta must lie in [0, 1], got {beta}")));
    }
    let inst = v_i.matmul(&w_i.transpose())?;
    if beta == 1.0 {
        return Ok(inst);
    }
    let conc = v_c.matmul(&w_c.transpose())?;
    inst.scale(beta).add(&conc.scale(1.0 - beta))
}

/// Image-by-caption similarity of a whole dataset under `model`.
pub fn similarity_matrix(
    model: &Model,
    basis: &ConceptBasis,
    data: &PairedDataset,
    beta: f64,
) -> Result<Matrix> {
    if data.is_empty() {
        return Err(Error::EmptyInput("evaluation split is empty".into()));
    }
    let images: Vec<_> = (0..data.image_count())
        .map(|i| data.image_features(i))
        .collect();
    let captions: Vec<_> = data.records().iter().map(|r| &r.caption_features).collect();
    let (img, cap) = model.embed(basis, &images, &captions)?;
    blended_similarity_matrix(
        &img.instance,
        &cap.instance,
        &img.concept,
        &cap.concept,
        beta,
    )
}

pub fn evaluate(
    model: &Model,
    basis: &ConceptBasis,
    data: &PairedDataset,
    beta: f64,
) -> Result<EvalResult> {
    let sim = similarity_matrix(model, basis, data, beta)?;
    recall_at_k(&sim, data.caption_image())
}
