//! The perturbation matrix and its inverses.
//!
//! A transition matrix P is K×K column-stochastic: entry (i, j) is the
//! probability that a record whose true level is j-1 is released with level
//! i-1, so every column is a probability distribution over released levels.
//! Its inverse P⁻¹ ("reversion" matrix) undoes the perturbation in
//! expectation and is what every estimator in this crate is built on; the
//! Bayes posterior reversion (model-dependent) shares the same type and is
//! produced by `mechanism::diagnostics`.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::SquareMat;

/// Column sums may deviate from 1 by at most this much.
pub const COLUMN_SUM_TOLERANCE: f64 = 1e-12;
/// |det P| at or below this is treated as singular.
pub const SINGULAR_DET_THRESHOLD: f64 = 1e-12;
/// 1-norm condition numbers above this make inversion a hard error.
pub const CONDITION_ERROR_LIMIT: f64 = 1e8;
/// 1-norm condition numbers at or above this raise a warning: the inverse
/// exists but amplifies sampling noise by roughly this factor.
pub const CONDITION_WARN_THRESHOLD: f64 = 30.0;
/// Max-norm residual allowed on ‖P⁻¹P − I‖.
pub const INVERSE_RESIDUAL_LIMIT: f64 = 1e-9;

/// Non-fatal validation findings, surfaced so callers can report them.
#[derive(Debug, Clone, PartialEq)]
pub enum TransitionWarning {
    /// A diagonal entry below 0.5: the level is more likely to be changed
    /// than kept, which is unusual for a disclosure-control mechanism.
    LowDiagonal { level: usize, value: f64 },
    /// Invertible but noise-amplifying.
    HighCondition { condition: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    mat: SquareMat,
    inverse: SquareMat,
    determinant: f64,
    condition: f64,
    warnings: Vec<TransitionWarning>,
}

impl TransitionMatrix {
    /// Validate and build from row slices: rows index the released level,
    /// columns the true level.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::validate(SquareMat::from_rows(rows)?)
    }

    /// Validate and build from a flat row-major slice.
    pub fn from_row_major(k: usize, data: &[f64]) -> Result<Self> {
        Self::validate(SquareMat::from_row_major(k, data)?)
    }

    /// Binary mechanism that keeps level 0 with probability `p00` and level 1
    /// with probability `p11`.
    pub fn binary(p00: f64, p11: f64) -> Result<Self> {
        Self::from_rows(&[
            alloc::vec![p00, 1.0 - p11],
            alloc::vec![1.0 - p00, p11],
        ])
    }

    /// The do-nothing mechanism.
    pub fn identity(k: usize) -> Result<Self> {
        Self::validate(SquareMat::identity(k))
    }

    fn validate(mat: SquareMat) -> Result<Self> {
        let k = mat.size();
        if k < 2 {
            return Err(Error::InvalidConfig {
                context: alloc::format!("a transition matrix needs at least 2 levels, got {k}"),
            });
        }
        for j in 0..k {
            for (i, &v) in mat.column(j).iter().enumerate() {
                if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                    return Err(Error::EntryOutOfRange {
                        row: i,
                        column: j,
                        value: v,
                    });
                }
            }
            let sum: f64 = mat.column(j).iter().sum();
            if (sum - 1.0).abs() > COLUMN_SUM_TOLERANCE {
                return Err(Error::NonStochastic {
                    column: j,
                    sum,
                    tolerance: COLUMN_SUM_TOLERANCE,
                });
            }
        }

        let determinant = mat.determinant();
        if determinant.abs() <= SINGULAR_DET_THRESHOLD {
            return Err(Error::Singular {
                det: determinant,
                threshold: SINGULAR_DET_THRESHOLD,
            });
        }
        let inverse = mat.invert().map_err(|_| Error::Singular {
            det: determinant,
            threshold: SINGULAR_DET_THRESHOLD,
        })?;
        let condition = mat.norm_one() * inverse.norm_one();

        let mut warnings = Vec::new();
        for j in 0..k {
            let v = mat.get(j, j);
            if v < 0.5 {
                warnings.push(TransitionWarning::LowDiagonal { level: j, value: v });
            }
        }
        if condition >= CONDITION_WARN_THRESHOLD {
            warnings.push(TransitionWarning::HighCondition { condition });
        }

        Ok(Self {
            mat,
            inverse,
            determinant,
            condition,
            warnings,
        })
    }

    pub fn levels(&self) -> usize {
        self.mat.size()
    }

    /// Pr(released = i | true = j).
    #[inline]
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.mat.get(i, j)
    }

    /// The released-level distribution for true level `j`.
    #[inline]
    pub fn column(&self, j: usize) -> &[f64] {
        self.mat.column(j)
    }

    pub fn matrix(&self) -> &SquareMat {
        &self.mat
    }

    pub fn determinant(&self) -> f64 {
        self.determinant
    }

    /// 1-norm condition number (for a column-stochastic matrix this equals
    /// the 1-norm of the inverse).
    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn warnings(&self) -> &[TransitionWarning] {
        &self.warnings
    }

    /// The inverse reversion matrix Q = P⁻¹, the model-free way back from
    /// released to true level distributions.
    pub fn invert(&self) -> Result<ReversionMatrix> {
        if self.condition > CONDITION_ERROR_LIMIT {
            return Err(Error::IllConditioned {
                condition: self.condition,
                limit: CONDITION_ERROR_LIMIT,
            });
        }
        // Residual check: with partial pivoting this only trips when the
        // matrix is effectively numerically singular.
        let prod = self.inverse.mat_mul(&self.mat);
        let mut residual: f64 = 0.0;
        let k = self.levels();
        for i in 0..k {
            for j in 0..k {
                let want = if i == j { 1.0 } else { 0.0 };
                residual = residual.max((prod.get(i, j) - want).abs());
            }
        }
        if residual > INVERSE_RESIDUAL_LIMIT {
            return Err(Error::IllConditioned {
                condition: self.condition,
                limit: CONDITION_ERROR_LIMIT,
            });
        }
        Ok(ReversionMatrix::inverse_q2(self.inverse.clone(), self.condition))
    }
}

/// Which reversion a matrix is: the model-free inverse (signed entries,
/// columns sum to 1) or the Bayes posterior (a proper conditional
/// distribution per column, model-dependent through the marginal it was
/// built from).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReversionKind {
    InverseQ2,
    PosteriorQ1,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReversionMatrix {
    kind: ReversionKind,
    mat: SquareMat,
    transition_condition: Option<f64>,
}

impl ReversionMatrix {
    pub(crate) fn inverse_q2(mat: SquareMat, transition_condition: f64) -> Self {
        Self {
            kind: ReversionKind::InverseQ2,
            mat,
            transition_condition: Some(transition_condition),
        }
    }

    pub(crate) fn posterior_q1(mat: SquareMat) -> Self {
        Self {
            kind: ReversionKind::PosteriorQ1,
            mat,
            transition_condition: None,
        }
    }

    pub fn kind(&self) -> ReversionKind {
        self.kind
    }

    pub fn levels(&self) -> usize {
        self.mat.size()
    }

    /// Entry (k, i): the weight (Q2) or posterior probability (Q1) on true
    /// level k given observed level i.
    #[inline]
    pub fn entry(&self, k: usize, i: usize) -> f64 {
        self.mat.get(k, i)
    }

    /// The column attached to observed level `i`.
    #[inline]
    pub fn column(&self, i: usize) -> &[f64] {
        self.mat.column(i)
    }

    pub fn matrix(&self) -> &SquareMat {
        &self.mat
    }

    /// Condition number of the transition matrix this inverse came from;
    /// `None` for posterior reversions.
    pub fn transition_condition(&self) -> Option<f64> {
        self.transition_condition
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        self.mat.mul_vec(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example() -> TransitionMatrix {
        TransitionMatrix::from_rows(&[vec![0.8, 0.1], vec![0.2, 0.9]]).unwrap()
    }

    #[test]
    fn valid_matrix_passes_with_no_warnings() {
        let p = example();
        assert_eq!(p.levels(), 2);
        assert!((p.determinant() - 0.7).abs() < 1e-15);
        assert!(p.warnings().is_empty());
        // ||P||_1 = 1 for a stochastic matrix, so cond = ||P^{-1}||_1 = 11/7.
        assert!((p.condition() - 11.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn inverse_matches_closed_form() {
        let q = example().invert().unwrap();
        assert_eq!(q.kind(), ReversionKind::InverseQ2);
        assert!((q.entry(0, 0) - 9.0 / 7.0).abs() < 1e-14);
        assert!((q.entry(0, 1) - (-1.0 / 7.0)).abs() < 1e-14);
        assert!((q.entry(1, 0) - (-2.0 / 7.0)).abs() < 1e-14);
        assert!((q.entry(1, 1) - 8.0 / 7.0).abs() < 1e-14);
        // Columns of the inverse sum to one because columns of P do.
        for i in 0..2 {
            let s: f64 = q.column(i).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_inverts_to_identity() {
        let p = TransitionMatrix::identity(3).unwrap();
        let q = p.invert().unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert_eq!(q.entry(i, j), want);
            }
        }
    }

    #[test]
    fn near_singular_matrix_warns_about_conditioning() {
        // det = 0.02; the inverse has entries ±25-ish, condition number 50.
        let p = TransitionMatrix::from_rows(&[vec![0.51, 0.49], vec![0.49, 0.51]]).unwrap();
        assert!((p.condition() - 50.0).abs() < 1e-9);
        assert!(p
            .warnings()
            .iter()
            .any(|w| matches!(w, TransitionWarning::HighCondition { .. })));
        // Still invertible.
        assert!(p.invert().is_ok());
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let err = TransitionMatrix::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap_err();
        assert!(matches!(err, Error::Singular { .. }));
    }

    #[test]
    fn bad_column_sum_is_rejected() {
        let err = TransitionMatrix::from_rows(&[vec![0.8, 0.1], vec![0.1, 0.9]]).unwrap_err();
        match err {
            Error::NonStochastic { column, sum, .. } => {
                assert_eq!(column, 0);
                assert!((sum - 0.9).abs() < 1e-15);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn out_of_range_entries_are_rejected() {
        let err = TransitionMatrix::from_rows(&[vec![1.1, 0.1], vec![-0.1, 0.9]]).unwrap_err();
        assert!(matches!(err, Error::EntryOutOfRange { row: 0, column: 0, .. }));
    }

    #[test]
    fn non_square_input_is_rejected() {
        let err = TransitionMatrix::from_rows(&[vec![0.8, 0.1, 0.0], vec![0.2, 0.9, 0.0]]).unwrap_err();
        assert!(matches!(err, Error::NotSquare { .. }));
    }

    #[test]
    fn tiny_matrices_are_rejected() {
        let err = TransitionMatrix::from_rows(&[vec![1.0]]).unwrap_err();
        assert!(matches!(err, Error::InvalidConfig { .. }));
    }

    #[test]
    fn low_diagonal_warns_per_level() {
        // Columns sum to 1, diagonals all 0.4 < 0.5, det = 0.01 (valid).
        let rows = vec![
            vec![0.4, 0.3, 0.3],
            vec![0.3, 0.4, 0.3],
            vec![0.3, 0.3, 0.4],
        ];
        let p = TransitionMatrix::from_rows(&rows).unwrap();
        let low: Vec<_> = p
            .warnings()
            .iter()
            .filter(|w| matches!(w, TransitionWarning::LowDiagonal { .. }))
            .collect();
        assert_eq!(low.len(), 3);
        // Condition = ||P^{-1}||_1 = 13 here, below the warning threshold.
        assert!((p.condition() - 13.0).abs() < 1e-9);
    }

    #[test]
    fn binary_constructor_lays_out_probabilities() {
        let p = TransitionMatrix::binary(0.95, 0.85).unwrap();
        assert_eq!(p.entry(0, 0), 0.95);
        assert!((p.entry(1, 0) - 0.05).abs() < 1e-15);
        assert!((p.entry(0, 1) - 0.15).abs() < 1e-15);
        assert_eq!(p.entry(1, 1), 0.85);
    }
}
