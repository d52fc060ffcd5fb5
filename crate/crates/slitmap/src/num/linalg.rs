//! Small dense linear algebra: row-major matrices, normal equations and a
//! Cholesky solve. Problem sizes here are at most a few hundred, so plain
//! triple loops are both adequate and easy to audit.

use alloc::vec;
use alloc::vec::Vec;

/// Dense row-major matrix.
#[derive(Clone, Debug)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }

    /// `A^T A`, the Gram matrix of the columns.
    pub fn gram(&self) -> Mat {
        let n = self.cols;
        let mut g = Mat::zeros(n, n);
        for row in self.data.chunks_exact(self.cols) {
            for i in 0..n {
                let ri = row[i];
                if ri == 0.0 {
                    continue;
                }
                for j in i..n {
                    *g.at_mut(i, j) += ri * row[j];
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                *g.at_mut(i, j) = g.at(j, i);
            }
        }
        g
    }

    /// `A^T v`.
    pub fn tr_mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (row, &vi) in self.data.chunks_exact(self.cols).zip(v) {
            if vi == 0.0 {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(row) {
                *o += a * vi;
            }
        }
        out
    }
}

/// Solves `A x = b` for symmetric positive definite `A` by Cholesky
/// factorization. Returns `None` if a pivot drops below `tiny`, which the
/// damped least-squares driver treats as "increase damping and retry".
pub fn cholesky_solve(a: &Mat, b: &[f64], tiny: f64) -> Option<Vec<f64>> {
    let n = a.rows;
    assert_eq!(a.cols, n);
    assert_eq!(b.len(), n);
    let mut l = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a.at(i, j);
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= tiny {
                    return None;
                }
                l[i * n + i] = libm::sqrt(s);
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            y[i] -= l[i * n + k] * y[k];
        }
        y[i] /= l[i * n + i];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            y[i] -= l[k * n + i] * y[k];
        }
        y[i] /= l[i * n + i];
    }
    Some(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_solves_a_known_spd_system() {
        let mut a = Mat::zeros(3, 3);
        let entries = [[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]];
        for i in 0..3 {
            for j in 0..3 {
                *a.at_mut(i, j) = entries[i][j];
            }
        }
        let x_true = [1.0, -2.0, 0.5];
        let mut b = [0.0; 3];
        for i in 0..3 {
            for j in 0..3 {
                b[i] += entries[i][j] * x_true[j];
            }
        }
        let x = cholesky_solve(&a, &b, 1e-300).unwrap();
        for i in 0..3 {
            assert!((x[i] - x_true[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite_input() {
        let mut a = Mat::zeros(2, 2);
        *a.at_mut(0, 0) = 1.0;
        *a.at_mut(0, 1) = 2.0;
        *a.at_mut(1, 0) = 2.0;
        *a.at_mut(1, 1) = 1.0;
        assert!(cholesky_solve(&a, &[1.0, 1.0], 1e-300).is_none());
    }

    #[test]
    fn gram_and_transpose_products_agree_with_direct_sums() {
        let mut a = Mat::zeros(4, 3);
        for r in 0..4 {
            for c in 0..3 {
                *a.at_mut(r, c) = (r * 3 + c) as f64 * 0.3 - 1.0;
            }
        }
        let g = a.gram();
        let v = [1.0, -1.0, 2.0, 0.5];
        let atv = a.tr_mul_vec(&v);
        for i in 0..3 {
            let mut dot = 0.0;
            for r in 0..4 {
                dot += a.at(r, i) * v[r];
            }
            assert!((atv[i] - dot).abs() < 1e-14);
            for j in 0..3 {
                let mut gij = 0.0;
                for r in 0..4 {
                    gij += a.at(r, i) * a.at(r, j);
                }
                assert!((g.at(i, j) - gij).abs() < 1e-12);
            }
        }
    }
}
