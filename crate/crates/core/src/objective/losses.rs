//! Diversity-sensitive contrastive losses and the prototype classification loss.
//!
//! One direction of the contrastive loss over anchors `n` reads
//!
//! ```text
//! l(V, W) = (mu / N) * sum_n [ ln(1 + sum_{q != n} exp((S_nq - gamma) / (mu * div_n))) - ln(S_nn + 1) ]
//! ```
//!
//! With `div = 1` this is the diversity-insensitive form. The bidirectional
//! loss adds the same expression over `S^T`.

use super::{diversity, DiversityEstimator, SimilarityMatrix};
use crate::error::{Error, Result};
use crate::numerics::{ContrastiveSpec, Matrix, Tape, Var};

fn square(tape: &Tape, s: Var, op: &'static str) -> Result<usize> {
    let (r, c) = tape.shape(s);
    if r != c {
        return Err(Error::DimensionMismatch {
            op,
            left: (r, c),
            right: (c, r),
        });
    }
    Ok(r)
}

/// One direction over a square similarity matrix with diagonal positives.
pub fn dcl_direction(tape: &mut Tape, s: Var, div: &[f64], mu: f64, gamma: f64) -> Result<Var> {
    let n = square(tape, s, "dcl_direction")?;
    let exclude: Vec<Option<usize>> = (0..n).map(Some).collect();
    let pos = tape.diag(s)?;
    let spec = ContrastiveSpec {
        exclude: Some(&exclude),
        diversity: div,
        mu,
        gamma,
    };
    tape.contrastive_term(pos, s, &spec)
}

/// Bidirectional loss; `div_fwd` weights row anchors, `div_bwd` column anchors.
pub fn dcl_loss(
    tape: &mut Tape,
    s: Var,
    div_fwd: &[f64],
    div_bwd: &[f64],
    mu: f64,
    gamma: f64,
) -> Result<Var> {
    let fwd = dcl_direction(tape, s, div_fwd, mu, gamma)?;
    let st = tape.transpose(s)?;
    let bwd = dcl_direction(tape, st, div_bwd, mu, gamma)?;
    tape.add(fwd, bwd)
}

/// Diversity-insensitive bidirectional loss (all diversities 1).
pub fn dcl_i_loss(tape: &mut Tape, s: Var, mu: f64, gamma: f64) -> Result<Var> {
    let n = square(tape, s, "dcl_i_loss")?;
    let ones = vec![1.0; n];
    dcl_loss(tape, s, &ones, &ones, mu, gamma)
}

pub fn dcl_i_loss_value(s: &Matrix, mu: f64, gamma: f64) -> Result<f64> {
    let mut tape = Tape::new();
    let sv = tape.constant(s.clone());
    let l = dcl_i_loss(&mut tape, sv, mu, gamma)?;
    Ok(tape.scalar(l))
}

pub fn dcl_loss_value(
    s: &Matrix,
    div_fwd: &[f64],
    div_bwd: &[f64],
    mu: f64,
    gamma: f64,
) -> Result<f64> {
    let mut tape = Tape::new();
    let sv = tape.constant(s.clone());
    let l = dcl_loss(&mut tape, sv, div_fwd, div_bwd, mu, gamma)?;
    Ok(tape.scalar(l))
}

/// Normalised diversity of the row anchors of `s`, or all ones when no
/// estimator is given.
pub fn anchor_diversity(
    s: &SimilarityMatrix,
    estimator: Option<DiversityEstimator>,
    eps: f64,
) -> Result<Vec<f64>> {
    match estimator {
        Some(e) => Ok(diversity(s, e, eps)?.normalized),
        None => Ok(vec![1.0; s.anchors()]),
    }
}

/// Diversities of both directions of a paired in-batch similarity matrix.
pub fn paired_diversity(
    s: &Matrix,
    estimator: Option<DiversityEstimator>,
    eps: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let sm = SimilarityMatrix::paired(s.clone())?;
    let fwd = anchor_diversity(&sm, estimator, eps)?;
    let bwd = anchor_diversity(&sm.transposed()?, estimator, eps)?;
    Ok((fwd, bwd))
}

/// One modality's side of the memory-bank loss.
#[derive(Clone, Copy, Debug)]
pub struct BankSide<'a> {
    /// In-batch anchors (`N x F`, unit rows) on the tape.
    pub anchors: Var,
    /// Momentum-encoded cross-modal counterpart of each anchor (`N x F`).
    pub momentum_positives: &'a Matrix,
    /// Bank of the other modality (`C x F`); every entry is a negative.
    pub bank: &'a Matrix,
    /// Normalised in-batch diversity of each anchor.
    pub batch_diversity: &'a [f64],
}

/// Bank-level diversity of each anchor row against every bank entry.
pub fn bank_diversity(
    anchors: &Matrix,
    bank: &Matrix,
    estimator: Option<DiversityEstimator>,
    eps: f64,
) -> Result<Vec<f64>> {
    if bank.rows() == 0 {
        return Err(Error::EmptyInput("memory bank is empty".into()));
    }
    anchor_diversity(
        &SimilarityMatrix::unpaired(anchors.matmul(&bank.transpose())?),
        estimator,
        eps,
    )
}

/// Anchor-direction bank loss with the per-anchor diversity held fixed.
/// Bank entries and momentum positives are constants.
pub fn m_dcl_term(
    tape: &mut Tape,
    side: &BankSide<'_>,
    diversity: &[f64],
    mu: f64,
    gamma: f64,
) -> Result<Var> {
    if side.bank.rows() == 0 {
        return Err(Error::EmptyInput("memory bank is empty".into()));
    }
    let n = tape.shape(side.anchors).0;
    if diversity.len() != n || side.momentum_positives.rows() != n {
        return Err(Error::DimensionMismatch {
            op: "m_dcl_loss",
            left: tape.shape(side.anchors),
            right: side.momentum_positives.shape(),
        });
    }
    let bank_t = tape.constant(side.bank.transpose());
    let neg = tape.matmul(side.anchors, bank_t)?;
    let positives = tape.constant(side.momentum_positives.clone());
    let pos = tape.row_dot(side.anchors, positives)?;
    let spec = ContrastiveSpec {
        exclude: None,
        diversity,
        mu,
        gamma,
    };
    tape.contrastive_term(pos, neg, &spec)
}

/// Anchor-direction loss against a bank, with diversity averaged over the
/// batch level and the bank level. Diversity acts as a fixed weight and
/// receives no gradient.
pub fn m_dcl_direction(
    tape: &mut Tape,
    side: &BankSide<'_>,
    estimator: Option<DiversityEstimator>,
    eps: f64,
    mu: f64,
    gamma: f64,
) -> Result<Var> {
    if side.batch_diversity.len() != tape.shape(side.anchors).0 {
        return Err(Error::DimensionMismatch {
            op: "m_dcl_loss",
            left: tape.shape(side.anchors),
            right: (side.batch_diversity.len(), 1),
        });
    }
    let bank_level = bank_diversity(tape.value(side.anchors), side.bank, estimator, eps)?;
    let div: Vec<f64> = side
        .batch_diversity
        .iter()
        .zip(&bank_level)
        .map(|(a, b)| 0.5 * (a + b))
        .collect();
    m_dcl_term(tape, side, &div, mu, gamma)
}

/// `L(V, B_w) + L(W, B_v)`, anchors from the batch only.
pub fn m_dcl_loss(
    tape: &mut Tape,
    visual: &BankSide<'_>,
    textual: &BankSide<'_>,
    estimator: Option<DiversityEstimator>,
    eps: f64,
    mu: f64,
    gamma: f64,
) -> Result<Var> {
    let a = m_dcl_direction(tape, visual, estimator, eps, mu, gamma)?;
    let b = m_dcl_direction(tape, textual, estimator, eps, mu, gamma)?;
    tape.add(a, b)
}

/// Cross-entropy of the concept embeddings of both modalities against
/// prototype labels, with logits `emb P^T`.
pub fn pgc_loss(
    tape: &mut Tape,
    v_c: Var,
    w_c: Var,
    classifier: Var,
    labels: &[usize],
) -> Result<Var> {
    let pt = tape.transpose(classifier)?;
    let lv = tape.matmul(v_c, pt)?;
    let lw = tape.matmul(w_c, pt)?;
    let cv = tape.softmax_cross_entropy(lv, labels)?;
    let cw = tape.softmax_cross_entropy(lw, labels)?;
    tape.add(cv, cw)
}

/// Scalar values of each objective term for one batch.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossReport {
    pub dcl_i: f64,
    pub m_dcl: f64,
    pub dcl_c: f64,
    pub pgc: f64,
    pub total: f64,
}

impl LossReport {
    pub fn combine(lambda: f64, dcl_i: f64, m_dcl: f64, dcl_c: f64, pgc: f64) -> Self {
        LossReport {
            dcl_i,
            m_dcl,
            dcl_c,
            pgc,
            total: lambda * dcl_i + m_dcl + dcl_c + pgc,
        }
    }
}

/// Optional loss terms for [`total_loss`]; absent terms count as zero.
#[derive(Clone, Copy, Debug, Default)]
pub struct LossTerms {
    pub dcl_i: Option<Var>,
    pub m_dcl: Option<Var>,
    pub dcl_c: Option<Var>,
    pub pgc: Option<Var>,
}

/// `lambda * L_dcl_i + L_m_dcl + L_dcl_c + L_pgc` on the tape, plus its report.
pub fn total_loss(tape: &mut Tape, terms: LossTerms, lambda: f64) -> Result<(Var, LossReport)> {
    let value = |t: &Tape, v: Option<Var>| v.map_or(0.0, |v| t.scalar(v));
    let report = LossReport::combine(
        lambda,
        value(tape, terms.dcl_i),
        value(tape, terms.m_dcl),
        value(tape, terms.dcl_c),
        value(tape, terms.pgc),
    );
    let mut acc: Option<Var> = None;
    let weighted = match terms.dcl_i {
        Some(v) => Some(tape.scale(v, lambda)?),
        None => None,
    };
    for term in [weighted, terms.m_dcl, terms.dcl_c, terms.pgc]
        .into_iter()
        .flatten()
    {
        acc = Some(match acc {
            Some(a) => tape.add(a, term)?,
            None => term,
        });
    }
    let total = match acc {
        Some(v) => v,
        None => tape.constant(Matrix::scalar(0.0)),
    };
    Ok((total, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{grad_check, SeededRng};

    const MU: f64 = 0.1;
    const GAMMA: f64 = 0.3;

    #[test]
    fn golden_values() {
        let v = dcl_i_loss_value(&Matrix::scalar(1.0), MU, GAMMA).unwrap();
        assert!((v - -0.138629).abs() < 1e-6, "{v}");
        let v = dcl_i_loss_value(&Matrix::identity(2), MU, GAMMA).unwrap();
        assert!((v - -0.128912).abs() < 1e-6, "{v}");

        let mut tape = Tape::new();
        let s = tape.constant(Matrix::identity(2));
        let fwd = dcl_direction(&mut tape, s, &[0.5, 1.0], MU, GAMMA).unwrap();
        assert!((tape.scalar(fwd) - -0.066762).abs() < 1e-6);
    }

    #[test]
    fn monotone_in_negatives() {
        let mut rng = SeededRng::new(2);
        let s = rng.uniform_matrix(4, 4, -0.5, 0.5);
        let base = dcl_i_loss_value(&s, MU, GAMMA).unwrap();
        let mut t = s.clone();
        t.set(1, 2, s.get(1, 2) + 0.1);
        assert!(dcl_i_loss_value(&t, MU, GAMMA).unwrap() > base);
    }

    #[test]
    fn unit_diversity_reduces_to_insensitive_loss() {
        let mut rng = SeededRng::new(3);
        let s = rng.uniform_matrix(5, 5, -0.9, 0.9);
        let ones = vec![1.0; 5];
        let a = dcl_loss_value(&s, &ones, &ones, MU, GAMMA).unwrap();
        let b = dcl_i_loss_value(&s, MU, GAMMA).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn single_negative_batches_have_unit_diversity() {
        let s = Matrix::from_rows(&[vec![0.8, 0.1], vec![-0.2, 0.6]]).unwrap();
        let (f, b) = paired_diversity(&s, Some(DiversityEstimator::Std), 0.1).unwrap();
        assert_eq!(f, vec![1.0, 1.0]);
        assert_eq!(b, vec![1.0, 1.0]);
        assert_eq!(
            dcl_loss_value(&s, &f, &b, MU, GAMMA).unwrap(),
            dcl_i_loss_value(&s, MU, GAMMA).unwrap()
        );
    }

    #[test]
    fn rejects_invalid_inputs() {
        let s = Matrix::from_rows(&[vec![-1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!(dcl_i_loss_value(&s, MU, GAMMA).is_err());
        assert!(dcl_i_loss_value(&Matrix::zeros(2, 3), MU, GAMMA).is_err());
        assert!(dcl_loss_value(&Matrix::identity(2), &[0.0, 1.0], &[1.0, 1.0], MU, GAMMA).is_err());
        assert!(dcl_i_loss_value(&Matrix::identity(2), 0.0, GAMMA).is_err());
    }

    #[test]
    fn bank_with_orthogonal_entry() {
        let mut tape = Tape::new();
        let anchors = tape.param(Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap());
        let positive = Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        let bank = Matrix::from_rows(&[vec![0.0, 1.0]]).unwrap();
        let side = BankSide {
            anchors,
            momentum_positives: &positive,
            bank: &bank,
            batch_diversity: &[1.0],
        };
        let l = m_dcl_direction(
            &mut tape,
            &side,
            Some(DiversityEstimator::Std),
            0.1,
            MU,
            GAMMA,
        )
        .unwrap();
        let expected = 0.1 * ((1.0 + (-3.0f64).exp()).ln() - 2f64.ln());
        assert!((tape.scalar(l) - expected).abs() < 1e-12);
        let both = m_dcl_loss(&mut tape, &side, &side, None, 0.1, MU, GAMMA).unwrap();
        assert!((tape.scalar(both) - 2.0 * expected).abs() < 1e-12);
    }

    #[test]
    fn saturated_easy_bank_negatives() {
        let mut tape = Tape::new();
        let anchors = tape.param(Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap());
        let positive = Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        let bank = Matrix::from_rows(&vec![vec![-1.0, 0.0]; 50]).unwrap();
        let side = BankSide {
            anchors,
            momentum_positives: &positive,
            bank: &bank,
            batch_diversity: &[1.0],
        };
        let l = m_dcl_direction(&mut tape, &side, None, 0.1, MU, GAMMA).unwrap();
        let neg_term = tape.scalar(l) + 0.1 * 2f64.ln();
        assert!(neg_term.abs() < 1e-4, "{neg_term}");
    }

    #[test]
    fn bank_equal_to_in_batch_negatives_matches_dcl() {
        // Two anchors, one negative each: all diversities are 1 at both levels.
        let mut rng = SeededRng::new(8);
        let v = rng.unit_rows(2, 4);
        let w = rng.unit_rows(2, 4);
        let s = v.matmul(&w.transpose()).unwrap();
        let mut tape = Tape::new();
        let sv = tape.constant(s.clone());
        let fwd = dcl_direction(&mut tape, sv, &[1.0, 1.0], MU, GAMMA).unwrap();
        let expected = tape.scalar(fwd);
        let mut per_anchor = 0.0;
        for i in 0..2 {
            let mut t = Tape::new();
            let a = t.constant(v.select_rows(&[i]));
            let pos = w.select_rows(&[i]);
            let bank = w.select_rows(&[1 - i]);
            let side = BankSide {
                anchors: a,
                momentum_positives: &pos,
                bank: &bank,
                batch_diversity: &[1.0],
            };
            let l = m_dcl_direction(&mut t, &side, Some(DiversityEstimator::Std), 0.1, MU, GAMMA)
                .unwrap();
            per_anchor += t.scalar(l) / 2.0;
        }
        assert!((per_anchor - expected).abs() < 1e-12);
    }

    #[test]
    fn empty_bank_is_an_error() {
        let mut tape = Tape::new();
        let anchors = tape.param(Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap());
        let positive = Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        let bank = Matrix::zeros(0, 2);
        let side = BankSide {
            anchors,
            momentum_positives: &positive,
            bank: &bank,
            batch_diversity: &[1.0],
        };
        assert!(m_dcl_direction(&mut tape, &side, None, 0.1, MU, GAMMA).is_err());
    }

    #[test]
    fn pgc_values() {
        let mut rng = SeededRng::new(4);
        let mut tape = Tape::new();
        let vc = tape.constant(rng.unit_rows(3, 5));
        let wc = tape.constant(rng.unit_rows(3, 5));
        let p = tape.param(Matrix::zeros(4, 5));
        let l = pgc_loss(&mut tape, vc, wc, p, &[0, 1, 3]).unwrap();
        assert!((tape.scalar(l) - 2.0 * 4f64.ln()).abs() < 1e-9);

        // logits (1, 0) for true class 0 in both modalities.
        let mut tape = Tape::new();
        let e = tape.constant(Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap());
        let p = tape.param(Matrix::identity(2));
        let l = pgc_loss(&mut tape, e, e, p, &[0]).unwrap();
        assert!((tape.scalar(l) - 0.626523).abs() < 1e-6);

        let mut tape = Tape::new();
        let e = tape.constant(Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap());
        let p = tape.param(Matrix::from_rows(&[vec![60.0, 0.0], vec![0.0, 0.0]]).unwrap());
        let l = pgc_loss(&mut tape, e, e, p, &[0]).unwrap();
        assert!(tape.scalar(l) < 1e-20);
        assert!(pgc_loss(&mut tape, e, e, p, &[2]).is_err());
    }

    #[test]
    fn total_combination() {
        let r = LossReport::combine(3.0, 1.0, 2.0, 3.0, 4.0);
        assert_eq!(r.total, 12.0);
        let r = LossReport::combine(0.0, 5.0, 0.0, 0.0, 0.7);
        assert_eq!(r.total, 0.7);

        let mut tape = Tape::new();
        let parts: Vec<Var> = [1.0, 2.0, 3.0, 4.0]
            .iter()
            .map(|&v| tape.param(Matrix::scalar(v)))
            .collect();
        let terms = LossTerms {
            dcl_i: Some(parts[0]),
            m_dcl: Some(parts[1]),
            dcl_c: Some(parts[2]),
            pgc: Some(parts[3]),
        };
        let (total, report) = total_loss(&mut tape, terms, 3.0).unwrap();
        assert_eq!(tape.scalar(total), 12.0);
        assert_eq!(report.total, 12.0);
        let g = tape.backward(total).unwrap();
        assert_eq!(g.get(parts[0]).unwrap().get(0, 0), 3.0);
        assert_eq!(g.get(parts[3]).unwrap().get(0, 0), 1.0);
    }

    #[test]
    fn dcl_gradient_wrt_embeddings() {
        for seed in 0..3 {
            let mut rng = SeededRng::new(seed);
            let v = rng.normal_matrix(8, 8, 1.0);
            let w = rng.unit_rows(8, 8);
            let s0 = v
                .l2_normalize_rows()
                .unwrap()
                .matmul(&w.transpose())
                .unwrap();
            let (df, db) = paired_diversity(&s0, Some(DiversityEstimator::Std), 0.1).unwrap();
            let err = grad_check(
                |p| {
                    let mut t = Tape::new();
                    let vv = t.param(p.clone());
                    let vn = t.l2_normalize_rows(vv)?;
                    let wv = t.constant(w.transpose());
                    let s = t.matmul(vn, wv)?;
                    let l = dcl_loss(&mut t, s, &df, &db, MU, GAMMA)?;
                    let value = t.scalar(l);
                    Ok((value, t.backward(l)?.get_or_zeros(vv, p.shape())))
                },
                &v,
                1e-5,
            )
            .unwrap();
            assert!(err <= 1e-4, "seed {seed}: {err}");
        }
    }
}
