//! Benchmarks live in `benches/`; run with `cargo bench -p momalign-bench`.

use momalign_core::numerics::{Matrix, SeededRng};
use momalign_core::representation::FeatureSequence;

/// Seeded inputs shared by the benchmarks.
pub fn sequences(n: usize, len: usize, dim: usize, seed: u64) -> Vec<FeatureSequence> {
    let mut rng = SeededRng::new(seed);
    (0..n)
        .map(|_| FeatureSequence::new(rng.normal_matrix(len, dim, 1.0)).expect("non-empty"))
        .collect()
}

/// Unit-row similarity matrix `a b^T` of two random batches.
pub fn similarity(rows: usize, cols: usize, dim: usize, seed: u64) -> Matrix {
    let mut rng = SeededRng::new(seed);
    let a = rng.unit_rows(rows, dim);
    let b = rng.unit_rows(cols, dim);
    a.matmul(&b.transpose()).expect("conformable")
}
