use std::collections::VecDeque;

use crate::error::{invalid, Error, Result};
use crate::numerics::Matrix;

const UNIT_TOLERANCE: f64 = 1e-6;

/// Fixed-capacity FIFO queue of unit-norm embeddings, oldest first.
#[derive(Clone, Debug, PartialEq)]
pub struct MemoryBank {
    capacity: usize,
    dim: usize,
    rows: VecDeque<Vec<f64>>,
}

impl MemoryBank {
    pub fn new(capacity: usize, dim: usize) -> Result<Self> {
        if capacity == 0 || dim == 0 {
            return Err(invalid(
                "memory bank capacity and dimension must be positive",
            ));
        }
        Ok(MemoryBank {
            capacity,
            dim,
            rows: VecDeque::with_capacity(capacity),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Appends `batch` rows newest-last, evicting the oldest rows beyond capacity.
    pub fn enqueue(&mut self, batch: &Matrix) -> Result<()> {
        if batch.cols() != self.dim {
            return Err(Error::DimensionMismatch {
                op: "bank_enqueue",
                left: (self.len(), self.dim),
                right: batch.shape(),
            });
        }
        for i in 0..batch.rows() {
            let norm = batch.row_norm(i);
            if (norm - 1.0).abs() > UNIT_TOLERANCE {
                return Err(invalid(format!(
                    "bank rows must be unit norm, row {i} has norm {norm}"
                )));
            }
        }
        for i in 0..batch.rows() {
            if self.rows.len() == self.capacity {
                self.rows.pop_front();
            }
            self.rows.push_back(batch.row(i).to_vec());
        }
        Ok(())
    }

    /// Current contents as a `len x dim` matrix, oldest row first.
    pub fn to_matrix(&self) -> Matrix {
        let mut data = Vec::with_capacity(self.rows.len() * self.dim);
        for r in &self.rows {
            data.extend_from_slice(r);
        }
        Matrix::from_vec_unchecked(self.rows.len(), self.dim, data)
    }

    pub fn clear(&mut self) {
        self.rows.clear();
    }
}
