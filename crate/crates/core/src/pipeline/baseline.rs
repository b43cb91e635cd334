use crate::error::Result;
use crate::numerics::{Matrix, Tape, Var};

/// Bidirectional max-margin ranking loss over in-batch negatives:
/// `sum max(0, margin - S_nn + S_nq)` over both directions, divided by N.
pub fn triplet_baseline_loss(tape: &mut Tape, s: Var, margin: f64) -> Result<Var> {
    tape.bidirectional_hinge(s, margin)
}

pub fn triplet_loss_value(s: &Matrix, margin: f64) -> Result<f64> {
    let mut tape = Tape::new();
    let v = tape.constant(s.clone());
    let l = triplet_baseline_loss(&mut tape, v, margin)?;
    Ok(tape.scalar(l))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hinge_values() {
        assert_eq!(triplet_loss_value(&Matrix::identity(3), 0.2).unwrap(), 0.0);
        // Every hinge equals the margin when all similarities tie: 2 * N * (N - 1) hinges over N.
        let tie = triplet_loss_value(&Matrix::filled(3, 3, 0.4), 0.2).unwrap();
        assert!((tie - 0.2 * 4.0).abs() < 1e-12);
        let s = Matrix::from_rows(&[vec![0.9, 0.8], vec![0.1, 0.7]]).unwrap();
        assert!((triplet_loss_value(&s, 0.2).unwrap() - 0.2).abs() < 1e-12);
    }
}
