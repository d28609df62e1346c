//! Dense square matrices, just large enough for this crate: transition
//! matrices have at most a few dozen rows and Jacobians a handful. Storage is
//! column-major so that "column j" — the conditional distribution given true
//! level j, or the weights attached to observed level j — is a contiguous
//! slice.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Relative pivot floor below which LU elimination reports singularity.
const PIVOT_RELATIVE_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct SquareMat {
    k: usize,
    /// Column-major: entry (i, j) lives at data[j * k + i].
    data: Vec<f64>,
}

impl SquareMat {
    pub fn zeros(k: usize) -> Self {
        Self {
            k,
            data: vec![0.0; k * k],
        }
    }

    pub fn identity(k: usize) -> Self {
        let mut m = Self::zeros(k);
        for j in 0..k {
            m.set(j, j, 1.0);
        }
        m
    }

    /// Build from row slices (the natural reading order of a CSV file).
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.len();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != k {
                return Err(Error::NotSquare {
                    rows: k,
                    cols: row.len().max(if i == 0 { row.len() } else { k }),
                });
            }
        }
        let mut m = Self::zeros(k);
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                m.set(i, j, v);
            }
        }
        Ok(m)
    }

    /// Build from a flat row-major slice of length k*k.
    pub fn from_row_major(k: usize, data: &[f64]) -> Result<Self> {
        if data.len() != k * k {
            return Err(Error::DimensionMismatch {
                context: format!("expected {} entries for a {k}x{k} matrix, got {}", k * k, data.len()),
            });
        }
        let mut m = Self::zeros(k);
        for i in 0..k {
            for j in 0..k {
                m.set(i, j, data[i * k + j]);
            }
        }
        Ok(m)
    }

    pub fn size(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.k + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[j * self.k + i] = v;
    }

    #[inline]
    pub fn column(&self, j: usize) -> &[f64] {
        &self.data[j * self.k..(j + 1) * self.k]
    }

    pub fn column_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.k..(j + 1) * self.k]
    }

    /// Rows as vectors, for serialization and display.
    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.k)
            .map(|i| (0..self.k).map(|j| self.get(i, j)).collect())
            .collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.k, "matrix-vector size mismatch");
        let mut out = vec![0.0; self.k];
        for j in 0..self.k {
            let col = self.column(j);
            let xj = x[j];
            for (o, &c) in out.iter_mut().zip(col.iter()) {
                *o += c * xj;
            }
        }
        out
    }

    pub fn mat_mul(&self, other: &Self) -> Self {
        assert_eq!(self.k, other.k, "matrix-matrix size mismatch");
        let mut out = Self::zeros(self.k);
        for j in 0..self.k {
            let prod = self.mul_vec(other.column(j));
            out.column_mut(j).copy_from_slice(&prod);
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.k);
        for i in 0..self.k {
            for j in 0..self.k {
                out.set(j, i, self.get(i, j));
            }
        }
        out
    }

    /// Maximum absolute column sum.
    pub fn norm_one(&self) -> f64 {
        (0..self.k)
            .map(|j| self.column(j).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        let mut best: f64 = 0.0;
        for i in 0..self.k {
            let mut s = 0.0;
            for j in 0..self.k {
                s += self.get(i, j).abs();
            }
            best = best.max(s);
        }
        best
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, &v| m.max(v.abs()))
    }

    pub fn determinant(&self) -> f64 {
        match self.lu() {
            Ok(lu) => lu.determinant(),
            Err(_) => 0.0,
        }
    }

    /// Inverse via LU with partial pivoting.
    pub fn invert(&self) -> Result<SquareMat> {
        let lu = self.lu()?;
        let mut inv = SquareMat::zeros(self.k);
        let mut e = vec![0.0; self.k];
        for j in 0..self.k {
            e.fill(0.0);
            e[j] = 1.0;
            let col = lu.solve(&e);
            inv.column_mut(j).copy_from_slice(&col);
        }
        Ok(inv)
    }

    /// Solve self * x = rhs.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        assert_eq!(rhs.len(), self.k, "solve rhs size mismatch");
        Ok(self.lu()?.solve(rhs))
    }

    /// 1-norm condition number, computed exactly from the inverse (the
    /// matrices here are small enough that this beats estimation).
    pub fn condition_one(&self) -> Result<f64> {
        let inv = self.invert()?;
        Ok(self.norm_one() * inv.norm_one())
    }

    /// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations,
    /// ascending. Symmetry is the caller's responsibility (covariances and
    /// moment matrices here are symmetric by construction).
    pub fn symmetric_eigenvalues(&self) -> Vec<f64> {
        let k = self.k;
        let mut a = self.clone();
        if k <= 1 {
            return a.data;
        }
        for _sweep in 0..60 {
            let mut off = 0.0;
            for j in 0..k {
                for i in 0..j {
                    off += a.get(i, j) * a.get(i, j);
                }
            }
            if off <= 1e-30 * (1.0 + a.max_abs() * a.max_abs()) {
                break;
            }
            for p in 0..k - 1 {
                for q in p + 1..k {
                    let apq = a.get(p, q);
                    if apq.abs() <= 1e-300 {
                        continue;
                    }
                    let app = a.get(p, p);
                    let aqq = a.get(q, q);
                    let theta = (aqq - app) / (2.0 * apq);
                    // Stable tangent of the rotation angle.
                    let t = if theta >= 0.0 {
                        1.0 / (theta + libm::sqrt(1.0 + theta * theta))
                    } else {
                        -1.0 / (-theta + libm::sqrt(1.0 + theta * theta))
                    };
                    let c = 1.0 / libm::sqrt(1.0 + t * t);
                    let s = t * c;
                    for r in 0..k {
                        let arp = a.get(r, p);
                        let arq = a.get(r, q);
                        a.set(r, p, c * arp - s * arq);
                        a.set(r, q, s * arp + c * arq);
                    }
                    for r in 0..k {
                        let apr = a.get(p, r);
                        let aqr = a.get(q, r);
                        a.set(p, r, c * apr - s * aqr);
                        a.set(q, r, s * apr + c * aqr);
                    }
                }
            }
        }
        let mut eig: Vec<f64> = (0..k).map(|i| a.get(i, i)).collect();
        eig.sort_by(|x, y| x.partial_cmp(y).expect("eigenvalues are finite"));
        eig
    }

    fn lu(&self) -> Result<Lu> {
        Lu::factor(self)
    }
}

/// LU factorization with partial pivoting (Doolittle, column-major in place).
struct Lu {
    k: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
    sign: f64,
}

impl Lu {
    fn factor(m: &SquareMat) -> Result<Self> {
        let k = m.k;
        let mut lu = m.data.clone();
        let mut perm: Vec<usize> = (0..k).collect();
        let mut sign = 1.0;
        let scale = m.max_abs().max(1e-300);

        for col in 0..k {
            // Pivot search in the current column.
            let mut pivot_row = col;
            let mut pivot_val = lu[col * k + col].abs();
            for r in col + 1..k {
                let v = lu[col * k + r].abs();
                if v > pivot_val {
                    pivot_val = v;
                    pivot_row = r;
                }
            }
            if pivot_val < PIVOT_RELATIVE_FLOOR * scale {
                // Determinant of what we have so far is the best report.
                let mut det = sign;
                for d in 0..k {
                    det *= lu[d * k + d];
                }
                return Err(Error::Singular {
                    det,
                    threshold: PIVOT_RELATIVE_FLOOR * scale,
                });
            }
            if pivot_row != col {
                for j in 0..k {
                    lu.swap(j * k + col, j * k + pivot_row);
                }
                perm.swap(col, pivot_row);
                sign = -sign;
            }
            let pivot = lu[col * k + col];
            for r in col + 1..k {
                let factor = lu[col * k + r] / pivot;
                lu[col * k + r] = factor;
                if factor != 0.0 {
                    for j in col + 1..k {
                        lu[j * k + r] -= factor * lu[j * k + col];
                    }
                }
            }
        }
        Ok(Self { k, lu, perm, sign })
    }

    fn determinant(&self) -> f64 {
        let mut det = self.sign;
        for d in 0..self.k {
            det *= self.lu[d * self.k + d];
        }
        det
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let k = self.k;
        let mut x: Vec<f64> = (0..k).map(|i| rhs[self.perm[i]]).collect();
        // Forward substitution with unit lower triangle.
        for i in 1..k {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[j * k + i] * x[j];
            }
            x[i] = s;
        }
        // Back substitution.
        for i in (0..k).rev() {
            let mut s = x[i];
            for j in i + 1..k {
                s -= self.lu[j * k + i] * x[j];
            }
            x[i] = s / self.lu[i * k + i];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: &[&[f64]]) -> SquareMat {
        SquareMat::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn inverse_of_two_by_two_matches_closed_form() {
        // [[0.8, 0.1], [0.2, 0.9]] has determinant 0.7 and inverse
        // (1/0.7) [[0.9, -0.1], [-0.2, 0.8]].
        let p = mat(&[&[0.8, 0.1], &[0.2, 0.9]]);
        assert!((p.determinant() - 0.7).abs() < 1e-15);
        let inv = p.invert().unwrap();
        assert!((inv.get(0, 0) - 9.0 / 7.0).abs() < 1e-14);
        assert!((inv.get(0, 1) - (-1.0 / 7.0)).abs() < 1e-14);
        assert!((inv.get(1, 0) - (-2.0 / 7.0)).abs() < 1e-14);
        assert!((inv.get(1, 1) - 8.0 / 7.0).abs() < 1e-14);
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let m = mat(&[&[0.5, 0.5], &[0.5, 0.5]]);
        assert!(matches!(m.invert(), Err(Error::Singular { .. })));
        assert_eq!(m.determinant(), 0.0);
    }

    #[test]
    fn inverse_roundtrip_on_a_larger_matrix() {
        let m = mat(&[
            &[4.0, 1.0, 0.3, 0.0],
            &[1.0, 3.0, 0.5, 0.2],
            &[0.0, 0.5, 5.0, 1.0],
            &[0.2, 0.0, 1.0, 2.0],
        ]);
        let inv = m.invert().unwrap();
        let prod = inv.mat_mul(&m);
        let mut err: f64 = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 1.0 } else { 0.0 };
                err = err.max((prod.get(i, j) - want).abs());
            }
        }
        assert!(err < 1e-13, "round-trip error {err}");
    }

    #[test]
    fn solve_matches_hand_solution() {
        // x + 2y = 5, 3x + 4y = 11  =>  x = 1, y = 2.
        let m = mat(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let x = m.solve(&[5.0, 11.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14);
        assert!((x[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn norms_and_condition() {
        let m = mat(&[&[1.0, -2.0], &[3.0, 4.0]]);
        assert_eq!(m.norm_one(), 6.0); // max(|1|+|3|, |-2|+|4|)
        assert_eq!(m.norm_inf(), 7.0); // max(|1|+|-2|, |3|+|4|)
        // Identity has condition number exactly 1.
        assert_eq!(SquareMat::identity(3).condition_one().unwrap(), 1.0);
    }

    #[test]
    fn symmetric_eigenvalues_of_known_matrix() {
        // [[2, 1], [1, 2]] has eigenvalues 1 and 3.
        let m = mat(&[&[2.0, 1.0], &[1.0, 2.0]]);
        let e = m.symmetric_eigenvalues();
        assert!((e[0] - 1.0).abs() < 1e-12);
        assert!((e[1] - 3.0).abs() < 1e-12);
        // Diagonal matrix: eigenvalues are the sorted diagonal.
        let d = mat(&[&[5.0, 0.0, 0.0], &[0.0, -1.0, 0.0], &[0.0, 0.0, 2.0]]);
        let e = d.symmetric_eigenvalues();
        assert_eq!(e, vec![-1.0, 2.0, 5.0]);
    }

    #[test]
    fn permutation_pivoting_handles_zero_leading_entry() {
        let m = mat(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let inv = m.invert().unwrap();
        assert_eq!(inv.get(0, 1), 1.0);
        assert_eq!(inv.get(1, 0), 1.0);
        assert!((m.determinant() + 1.0).abs() < 1e-15);
    }
}
