//! Embedding files: JSONL with one row per line,
//! `{"id": str, "role": "anchor" | "candidate", "embedding": [real], "positive": str?}`.
//! Every anchor is scored against every candidate; its `positive` candidate
//! (if any) is excluded from the negatives.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use momalign_core::numerics::Matrix;
use momalign_core::objective::{cosine_matrix, SimilarityMatrix};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Anchor,
    Candidate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRow {
    pub id: String,
    pub role: Role,
    pub embedding: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positive: Option<String>,
}

pub fn read_rows(path: &Path) -> Result<Vec<EmbeddingRow>> {
    let file = std::fs::File::open(path)
        .with_context(|| format!("cannot read embeddings file {}", path.display()))?;
    let mut rows = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: EmbeddingRow = serde_json::from_str(&line)
            .with_context(|| format!("{}: line {}", path.display(), i + 1))?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_rows(path: &Path, rows: &[EmbeddingRow]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for row in rows {
        serde_json::to_writer(&mut out, row)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Anchor ids and the anchor-by-candidate cosine similarities.
pub fn similarities(rows: &[EmbeddingRow]) -> Result<(Vec<String>, SimilarityMatrix)> {
    let (anchors, candidates): (Vec<&EmbeddingRow>, Vec<&EmbeddingRow>) =
        rows.iter().partition(|r| r.role == Role::Anchor);
    if anchors.is_empty() || candidates.is_empty() {
        bail!("embeddings file needs at least one anchor and one candidate");
    }
    let dim = rows[0].embedding.len();
    if let Some(bad) = rows.iter().find(|r| r.embedding.len() != dim) {
        bail!(
            "row '{}' has dimension {}, expected {dim}",
            bad.id,
            bad.embedding.len()
        );
    }
    let index: HashMap<&str, usize> = candidates
        .iter()
        .enumerate()
        .map(|(j, r)| (r.id.as_str(), j))
        .collect();
    let positives = anchors
        .iter()
        .map(|a| match &a.positive {
            None => Ok(None),
            Some(p) => index
                .get(p.as_str())
                .map(|&j| Some(j))
                .ok_or_else(|| anyhow!("anchor '{}' names unknown positive '{p}'", a.id)),
        })
        .collect::<Result<Vec<_>>>()?;
    let matrix = |rs: &[&EmbeddingRow]| {
        Matrix::from_rows(&rs.iter().map(|r| r.embedding.clone()).collect::<Vec<_>>())
    };
    let s = cosine_matrix(&matrix(&anchors)?, &matrix(&candidates)?)?;
    let ids = anchors.iter().map(|a| a.id.clone()).collect();
    Ok((ids, SimilarityMatrix::with_positives(s, positives)?))
}
