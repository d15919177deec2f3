//! Dense helpers on top of `nalgebra`: a Cholesky factorization that reports
//! the failing leading minor, a semidefinite-tolerant variant for conditional
//! covariances, and triangular solves.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Lower Cholesky factor `L` with `L Lᵀ = a`. Only the lower triangle of `a`
/// is read.
pub fn cholesky(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Dimension(format!(
            "cholesky of a {}x{} matrix",
            n,
            a.ncols()
        )));
    }
    let mut l = a.clone();
    // Column-major left-looking factorization.
    for j in 0..n {
        for k in 0..j {
            let ljk = l[(j, k)];
            if ljk != 0.0 {
                let data = l.as_mut_slice();
                let (left, right) = data.split_at_mut(j * n);
                let src = &left[k * n + j..(k + 1) * n];
                let dst = &mut right[j..n];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d -= ljk * s;
                }
            }
        }
        let pivot = l[(j, j)];
        if !(pivot > 0.0) || !pivot.is_finite() {
            return Err(Error::NotPositiveDefinite { minor: j + 1 });
        }
        let d = pivot.sqrt();
        let col = &mut l.column_mut(j);
        col[j] = d;
        for i in j + 1..n {
            col[i] /= d;
        }
    }
    zero_upper(&mut l);
    Ok(l)
}

/// Cholesky factor of a positive semidefinite matrix. Pivots with magnitude
/// at most `tol` (absolute) are treated as exact zeros and their column is
/// cleared; pivots below `-tol` are an error.
pub fn cholesky_semidefinite(a: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let mut l = a.clone();
    for j in 0..n {
        for k in 0..j {
            let ljk = l[(j, k)];
            if ljk != 0.0 {
                for i in j..n {
                    l[(i, j)] -= ljk * l[(i, k)];
                }
            }
        }
        let pivot = l[(j, j)];
        if !pivot.is_finite() || pivot < -tol {
            return Err(Error::NotPositiveDefinite { minor: j + 1 });
        }
        if pivot <= tol {
            for i in j..n {
                l[(i, j)] = 0.0;
            }
            continue;
        }
        let d = pivot.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            l[(i, j)] /= d;
        }
    }
    zero_upper(&mut l);
    Ok(l)
}

fn zero_upper(l: &mut DMatrix<f64>) {
    let n = l.nrows();
    for j in 1..n {
        for i in 0..j {
            l[(i, j)] = 0.0;
        }
    }
}

/// `Σ log L_ii`, i.e. `log |A^{1/2}|` for `A = L Lᵀ`.
pub fn log_det_half(l: &DMatrix<f64>) -> f64 {
    l.diagonal().iter().map(|d| d.ln()).sum()
}

/// Solves `L x = b` for lower triangular `L`.
pub fn solve_lower(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let mut x = b.clone();
    l.solve_lower_triangular_unchecked_mut(&mut x);
    x
}

/// Solves `L X = B` for lower triangular `L`.
pub fn solve_lower_mat(l: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut x = b.clone();
    l.solve_lower_triangular_unchecked_mut(&mut x);
    x
}

/// Solves `Lᵀ x = b` for lower triangular `L`.
pub fn solve_lower_transpose(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let mut x = b.clone();
    l.tr_solve_lower_triangular_unchecked_mut(&mut x);
    x
}

/// Solves `A x = b` given the lower Cholesky factor of `A`.
pub fn cholesky_solve(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    solve_lower_transpose(l, &solve_lower(l, b))
}

/// `A⁻¹` given the lower Cholesky factor of `A`.
pub fn cholesky_inverse(l: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    let mut x = DMatrix::identity(n, n);
    l.solve_lower_triangular_unchecked_mut(&mut x);
    l.tr_solve_lower_triangular_unchecked_mut(&mut x);
    symmetrize(&mut x);
    x
}

pub fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for j in 0..n {
        for i in j + 1..n {
            let m = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = m;
            a[(j, i)] = m;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn spd(n: usize) -> DMatrix<f64> {
        let b = DMatrix::from_fn(n, n, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0 + 0.1 * i as f64);
        &b * b.transpose() + DMatrix::identity(n, n)
    }

    #[test]
    fn factor_reconstructs() {
        let a = spd(6);
        let l = cholesky(&a).unwrap();
        let back = &l * l.transpose();
        assert_relative_eq!(back, a, epsilon = 1e-10);
        assert_eq!(l[(0, 3)], 0.0);
    }

    #[test]
    fn names_failing_minor() {
        let mut a = DMatrix::identity(4, 4);
        a[(2, 2)] = -1.0;
        match cholesky(&a) {
            Err(Error::NotPositiveDefinite { minor }) => assert_eq!(minor, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn semidefinite_rank_one() {
        let v = DVector::from_vec(vec![1.0, 2.0, -1.0]);
        let a = &v * v.transpose();
        assert!(cholesky(&a).is_err());
        let l = cholesky_semidefinite(&a, 1e-12).unwrap();
        assert_relative_eq!(&l * l.transpose(), a, epsilon = 1e-12);
    }

    #[test]
    fn solves_and_inverse() {
        let a = spd(5);
        let l = cholesky(&a).unwrap();
        let b = DVector::from_fn(5, |i, _| i as f64 - 1.5);
        let x = cholesky_solve(&l, &b);
        assert_relative_eq!(&a * x, b, epsilon = 1e-10);
        let inv = cholesky_inverse(&l);
        assert_relative_eq!(&a * inv, DMatrix::identity(5, 5), epsilon = 1e-10);
        assert_relative_eq!(log_det_half(&l) * 2.0, a.determinant().ln(), epsilon = 1e-10);
    }
}
