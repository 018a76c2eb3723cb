//! Dense linear-algebra kernels: Householder QR for least squares and small
//! direct solvers for the tiny symmetric systems that show up in the
//! covariance and score algebra.

use ndarray::{Array1, Array2};

use crate::error::{HetfxError, Result};

/// Relative pivot threshold for declaring a design column linearly dependent.
pub const RANK_TOL: f64 = 1e-10;

/// QR factorization of a tall matrix, kept in compact form.
///
/// `r` is the p x p upper-triangular factor; `qty` holds the first p entries
/// of Q'y for each solve.
#[derive(Debug)]
pub struct QrLeastSquares {
    r: Array2<f64>,
    coef: Array1<f64>,
}

impl QrLeastSquares {
    /// Householder least squares of `y` on the columns of `a`.
    ///
    /// Fails with `RankDeficient(k)` when the k-th triangular pivot falls
    /// below `RANK_TOL` relative to the largest column norm.
    pub fn solve(a: &Array2<f64>, y: &Array1<f64>) -> Result<Self> {
        let n = a.nrows();
        let p = a.ncols();
        if y.len() != n {
            return Err(HetfxError::DimensionMismatch(format!(
                "design has {n} rows but response has {}",
                y.len()
            )));
        }
        if n < p {
            return Err(HetfxError::DimensionMismatch(format!(
                "more columns ({p}) than rows ({n})"
            )));
        }

        let mut work = a.clone();
        let mut rhs = y.clone();

        // Largest column norm sets the scale for the rank check.
        let mut scale = 0.0_f64;
        for k in 0..p {
            let norm = work.column(k).iter().map(|v| v * v).sum::<f64>().sqrt();
            scale = scale.max(norm);
        }
        if scale == 0.0 {
            return Err(HetfxError::RankDeficient(0));
        }

        for k in 0..p {
            // Householder vector for column k, rows k..n.
            let mut alpha = 0.0_f64;
            for i in k..n {
                alpha += work[[i, k]] * work[[i, k]];
            }
            let alpha = alpha.sqrt();
            if alpha < RANK_TOL * scale {
                return Err(HetfxError::RankDeficient(k));
            }
            let pivot = if work[[k, k]] >= 0.0 { -alpha } else { alpha };
            // v = x - pivot*e1, normalized so v[k] = 1 implicitly via beta.
            let v0 = work[[k, k]] - pivot;
            let beta = -1.0 / (pivot * v0);

            // Apply H = I - beta * v v' to remaining columns and the rhs.
            for j in (k + 1)..p {
                let mut dot = v0 * work[[k, j]];
                for i in (k + 1)..n {
                    dot += work[[i, k]] * work[[i, j]];
                }
                let t = beta * dot;
                work[[k, j]] -= t * v0;
                for i in (k + 1)..n {
                    let vik = work[[i, k]];
                    work[[i, j]] -= t * vik;
                }
            }
            let mut dot = v0 * rhs[k];
            for i in (k + 1)..n {
                dot += work[[i, k]] * rhs[i];
            }
            let t = beta * dot;
            rhs[k] -= t * v0;
            for i in (k + 1)..n {
                rhs[i] -= t * work[[i, k]];
            }

            work[[k, k]] = pivot;
            if pivot.abs() < RANK_TOL * scale {
                return Err(HetfxError::RankDeficient(k));
            }
        }

        // Back substitution on the triangular factor.
        let mut coef = Array1::zeros(p);
        for k in (0..p).rev() {
            let mut s = rhs[k];
            for j in (k + 1)..p {
                s -= work[[k, j]] * coef[j];
            }
            coef[k] = s / work[[k, k]];
        }

        let mut r = Array2::zeros((p, p));
        for i in 0..p {
            for j in i..p {
                r[[i, j]] = work[[i, j]];
            }
        }
        Ok(Self { r, coef })
    }

    pub fn coef(&self) -> &Array1<f64> {
        &self.coef
    }

    /// Diagonal of (X'X)^-1, from the triangular factor.
    pub fn xtx_inverse_diag(&self) -> Array1<f64> {
        let p = self.r.nrows();
        let mut diag = Array1::zeros(p);
        for k in 0..p {
            // Forward solve R' v = e_k; then the (k,k) entry is |v|^2.
            let mut v = vec![0.0_f64; p];
            for i in k..p {
                let mut s = if i == k { 1.0 } else { 0.0 };
                for j in k..i {
                    s -= self.r[[j, i]] * v[j];
                }
                v[i] = s / self.r[[i, i]];
            }
            diag[k] = v.iter().map(|t| t * t).sum();
        }
        diag
    }
}

/// Determinant of a small square matrix via LU with partial pivoting.
pub fn det_small(a: &Array2<f64>) -> f64 {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    let mut lu = a.clone();
    let mut det = 1.0_f64;
    for k in 0..n {
        let mut piv = k;
        for i in (k + 1)..n {
            if lu[[i, k]].abs() > lu[[piv, k]].abs() {
                piv = i;
            }
        }
        if lu[[piv, k]] == 0.0 {
            return 0.0;
        }
        if piv != k {
            for j in 0..n {
                let t = lu[[k, j]];
                lu[[k, j]] = lu[[piv, j]];
                lu[[piv, j]] = t;
            }
            det = -det;
        }
        det *= lu[[k, k]];
        for i in (k + 1)..n {
            let f = lu[[i, k]] / lu[[k, k]];
            for j in (k + 1)..n {
                lu[[i, j]] -= f * lu[[k, j]];
            }
        }
    }
    det
}

/// Solve A X = B for a small square A (LU with partial pivoting).
pub fn solve_small(a: &Array2<f64>, b: &Array2<f64>) -> Option<Array2<f64>> {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    debug_assert_eq!(n, b.nrows());
    let m = b.ncols();
    let mut lu = a.clone();
    let mut x = b.clone();
    for k in 0..n {
        let mut piv = k;
        for i in (k + 1)..n {
            if lu[[i, k]].abs() > lu[[piv, k]].abs() {
                piv = i;
            }
        }
        if lu[[piv, k]] == 0.0 {
            return None;
        }
        if piv != k {
            for j in 0..n {
                lu.swap([k, j], [piv, j]);
            }
            for j in 0..m {
                x.swap([k, j], [piv, j]);
            }
        }
        for i in (k + 1)..n {
            let f = lu[[i, k]] / lu[[k, k]];
            lu[[i, k]] = f;
            for j in (k + 1)..n {
                lu[[i, j]] -= f * lu[[k, j]];
            }
            for j in 0..m {
                let t = f * x[[k, j]];
                x[[i, j]] -= t;
            }
        }
    }
    for j in 0..m {
        for k in (0..n).rev() {
            let mut s = x[[k, j]];
            for i in (k + 1)..n {
                s -= lu[[k, i]] * x[[i, j]];
            }
            x[[k, j]] = s / lu[[k, k]];
        }
    }
    Some(x)
}

/// Cholesky factor (lower) of a symmetric positive definite matrix.
pub fn cholesky(a: &Array2<f64>) -> Option<Array2<f64>> {
    let n = a.nrows();
    let mut l: Array2<f64> = Array2::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        if d <= 0.0 || !d.is_finite() {
            return None;
        }
        l[[j, j]] = d.sqrt();
        for i in (j + 1)..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / l[[j, j]];
        }
    }
    Some(l)
}

/// Solve L L' x = b given the Cholesky factor.
pub fn cholesky_solve(l: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut y = Array1::zeros(n);
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[[i, k]] * y[k];
        }
        y[i] = s / l[[i, i]];
    }
    let mut x = Array1::zeros(n);
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[[k, i]] * x[k];
        }
        x[i] = s / l[[i, i]];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn qr_exact_linear_fit() {
        let a = array![[1.0, 0.0], [1.0, 1.0], [1.0, 2.0], [1.0, 3.0]];
        let y = array![2.0, 5.0, 8.0, 11.0]; // 2 + 3x
        let qr = QrLeastSquares::solve(&a, &y).unwrap();
        assert!((qr.coef()[0] - 2.0).abs() < 1e-12);
        assert!((qr.coef()[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn qr_flags_collinear_column() {
        let a = array![[1.0, 2.0], [1.0, 2.0], [1.0, 2.0]];
        let y = array![1.0, 1.0, 1.0];
        match QrLeastSquares::solve(&a, &y) {
            Err(HetfxError::RankDeficient(k)) => assert_eq!(k, 1),
            other => panic!("expected rank failure, got {other:?}"),
        }
    }

    #[test]
    fn det_and_solve_agree_with_inverse() {
        let a = array![[4.0, 1.0, 0.3], [1.0, 3.0, -0.2], [0.3, -0.2, 2.0]];
        let det = det_small(&a);
        assert!(det > 0.0);
        let id = Array2::eye(3);
        let inv = solve_small(&a, &id).unwrap();
        let prod = a.dot(&inv);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((prod[[i, j]] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cholesky_round_trip() {
        let a = array![[2.0, 0.5], [0.5, 1.0]];
        let l = cholesky(&a).unwrap();
        let b = array![1.0, -2.0];
        let x = cholesky_solve(&l, &b);
        let ax = a.dot(&x);
        assert!((ax[0] - b[0]).abs() < 1e-12);
        assert!((ax[1] - b[1]).abs() < 1e-12);
    }
}
