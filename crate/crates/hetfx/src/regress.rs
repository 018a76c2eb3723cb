//! Shared regression primitives: labelled design matrices, QR-based OLS,
//! treatment dummies, linear projections, and polynomial bases.

use ndarray::{Array1, Array2};

use crate::error::{HetfxError, Result};
use crate::linalg::QrLeastSquares;

/// A design matrix with named columns. Column names travel into reports, so
/// their order is part of the interface.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    pub columns: Array2<f64>,
    pub labels: Vec<String>,
}

impl DesignMatrix {
    pub fn new(columns: Array2<f64>, labels: Vec<String>) -> Result<Self> {
        if labels.len() != columns.ncols() {
            return Err(HetfxError::DimensionMismatch(format!(
                "{} labels for {} columns",
                labels.len(),
                columns.ncols()
            )));
        }
        Ok(Self { columns, labels })
    }

    pub fn unlabeled(columns: Array2<f64>) -> Self {
        let labels = (0..columns.ncols()).map(|k| format!("c{k}")).collect();
        Self { columns, labels }
    }

    pub fn nrows(&self) -> usize {
        self.columns.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.columns.ncols()
    }
}

/// Ordinary least squares output.
#[derive(Debug, Clone)]
pub struct OlsFit {
    pub coef: Array1<f64>,
    pub fitted: Array1<f64>,
    pub residuals: Array1<f64>,
    xtx_inv_diag: Array1<f64>,
}

impl OlsFit {
    /// Classical standard errors (homoskedastic), mostly for display.
    pub fn classical_se(&self) -> Array1<f64> {
        let n = self.residuals.len();
        let p = self.coef.len();
        let dof = (n.saturating_sub(p)).max(1) as f64;
        let sigma2 = self.residuals.iter().map(|r| r * r).sum::<f64>() / dof;
        self.xtx_inv_diag.mapv(|v| (sigma2 * v).sqrt())
    }
}

/// Least squares of `response` on the design columns via Householder QR.
pub fn fit_ols(design: &DesignMatrix, response: &Array1<f64>) -> Result<OlsFit> {
    let qr = QrLeastSquares::solve(&design.columns, response)?;
    let coef = qr.coef().clone();
    let fitted = design.columns.dot(&coef);
    let residuals = response - &fitted;
    let xtx_inv_diag = qr.xtx_inverse_diag();
    Ok(OlsFit { coef, fitted, residuals, xtx_inv_diag })
}

/// Dummy matrix with column j-1 holding `1[d_i = j]` for j = 1..=j_max.
/// The control category gets no column.
pub fn make_dummies(d: &[usize], j_max: usize) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((d.len(), j_max));
    for (i, &di) in d.iter().enumerate() {
        if di > j_max {
            return Err(HetfxError::OutOfRangeCategory { found: di, max: j_max });
        }
        if di >= 1 {
            out[[i, di - 1]] = 1.0;
        }
    }
    Ok(out)
}

/// Sample linear projection of `target` on the columns of `x`: the fitted
/// values from OLS of target on x.
pub fn linear_projection(target: &Array1<f64>, x: &Array2<f64>) -> Result<Array1<f64>> {
    let design = DesignMatrix::unlabeled(x.clone());
    Ok(fit_ols(&design, target)?.fitted)
}

/// Polynomial basis in the columns of `x`: a constant, then all pure powers
/// grouped by degree, then (optionally) pairwise interaction products up to
/// total degree `q`. Column order is fixed: for q = 2 and two variables the
/// columns are (1, x1, x2, x1^2, x2^2, x1*x2).
pub fn poly_basis(x: &Array2<f64>, q: usize, with_interactions: bool) -> DesignMatrix {
    let names: Vec<String> = (0..x.ncols()).map(|k| format!("x{}", k + 1)).collect();
    poly_basis_named(x, &names, q, with_interactions)
}

/// `poly_basis` with caller-supplied variable names for the column labels.
pub fn poly_basis_named(
    x: &Array2<f64>,
    names: &[String],
    q: usize,
    with_interactions: bool,
) -> DesignMatrix {
    let n = x.nrows();
    let k = x.ncols();
    let mut cols: Vec<Array1<f64>> = Vec::new();
    let mut labels: Vec<String> = Vec::new();

    cols.push(Array1::ones(n));
    labels.push("1".to_string());

    let pow_label = |v: usize, p: usize| -> String {
        if p == 1 {
            names[v].clone()
        } else {
            format!("{}^{}", names[v], p)
        }
    };

    for p in 1..=q {
        for v in 0..k {
            let col = x.column(v).mapv(|t| t.powi(p as i32));
            cols.push(col);
            labels.push(pow_label(v, p));
        }
    }

    if with_interactions {
        for deg in 2..=q {
            for v in 0..k {
                for w in (v + 1)..k {
                    for a in 1..deg {
                        let b = deg - a;
                        let col = ndarray::Zip::from(&x.column(v))
                            .and(&x.column(w))
                            .map_collect(|&xv, &xw| xv.powi(a as i32) * xw.powi(b as i32));
                        cols.push(col);
                        labels.push(format!("{}*{}", pow_label(v, a), pow_label(w, b)));
                    }
                }
            }
        }
    }

    let mut columns = Array2::zeros((n, cols.len()));
    for (j, col) in cols.into_iter().enumerate() {
        columns.column_mut(j).assign(&col);
    }
    DesignMatrix { columns, labels }
}

/// Rows of `m` at the given indices, in order.
pub fn take_rows(m: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((idx.len(), m.ncols()));
    for (pos, &i) in idx.iter().enumerate() {
        out.row_mut(pos).assign(&m.row(i));
    }
    out
}

/// Elements of `v` at the given indices, in order.
pub fn take(v: &Array1<f64>, idx: &[usize]) -> Array1<f64> {
    Array1::from_iter(idx.iter().map(|&i| v[i]))
}

/// Stack matrices side by side.
pub fn hstack(parts: &[&Array2<f64>]) -> Array2<f64> {
    let n = parts[0].nrows();
    let total: usize = parts.iter().map(|m| m.ncols()).sum();
    let mut out = Array2::zeros((n, total));
    let mut offset = 0;
    for m in parts {
        debug_assert_eq!(m.nrows(), n);
        for j in 0..m.ncols() {
            out.column_mut(offset + j).assign(&m.column(j));
        }
        offset += m.ncols();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn ols_identity_design_returns_basis_vector() {
        let design = DesignMatrix::unlabeled(Array2::eye(3));
        let y = array![1.0, 0.0, 0.0];
        let fit = fit_ols(&design, &y).unwrap();
        assert!((fit.coef[0] - 1.0).abs() < 1e-14);
        assert!(fit.coef[1].abs() < 1e-14);
        assert!(fit.coef[2].abs() < 1e-14);
    }

    #[test]
    fn ols_residuals_orthogonal_to_design() {
        let x = array![
            [1.0, 0.3, 2.1],
            [1.0, -1.2, 0.4],
            [1.0, 0.8, -0.9],
            [1.0, 2.2, 1.5],
            [1.0, -0.4, 0.7],
            [1.0, 1.1, -2.0]
        ];
        let y = array![0.5, -1.0, 2.0, 0.3, 1.1, -0.7];
        let design = DesignMatrix::unlabeled(x.clone());
        let fit = fit_ols(&design, &y).unwrap();
        let xt_r = x.t().dot(&fit.residuals);
        let design_norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let y_norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        let rel = xt_r.iter().map(|v| v.abs()).fold(0.0, f64::max) / (design_norm * y_norm);
        assert!(rel < 1e-8, "relative orthogonality violation {rel}");
    }

    #[test]
    fn dummies_match_definition() {
        let d = vec![0, 1, 2];
        let m = make_dummies(&d, 2).unwrap();
        assert_eq!(m, array![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
        let m2 = make_dummies(&[2, 2, 1], 2).unwrap();
        assert_eq!(m2, array![[0.0, 1.0], [0.0, 1.0], [1.0, 0.0]]);
        let zeros = make_dummies(&[0, 0], 2).unwrap();
        assert_eq!(zeros.sum(), 0.0);
    }

    #[test]
    fn dummies_reject_out_of_range() {
        assert!(make_dummies(&[0, 3], 2).is_err());
    }

    #[test]
    fn projection_is_identity_on_span_and_zero_on_orthogonal() {
        let x = array![[1.0, 0.0], [1.0, 1.0], [1.0, 2.0], [1.0, 3.0]];
        let in_span = array![2.0, 3.0, 4.0, 5.0]; // 2 + x
        let proj = linear_projection(&in_span, &x).unwrap();
        for i in 0..4 {
            assert!((proj[i] - in_span[i]).abs() < 1e-12);
        }
        // Orthogonal to both the constant and the trend.
        let ortho = array![1.0, -3.0, 3.0, -1.0];
        assert!(x.t().dot(&ortho).iter().all(|v| v.abs() < 1e-12));
        let proj0 = linear_projection(&ortho, &x).unwrap();
        assert!(proj0.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn projection_of_projection_is_itself() {
        let x = array![
            [1.0, 0.2],
            [1.0, 1.4],
            [1.0, -0.6],
            [1.0, 2.3],
            [1.0, 0.9]
        ];
        let y = array![3.0, -1.0, 2.5, 0.0, 1.2];
        let once = linear_projection(&y, &x).unwrap();
        let twice = linear_projection(&once, &x).unwrap();
        for i in 0..5 {
            assert!((once[i] - twice[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn poly_basis_orders_match_contract() {
        let x = array![[2.0, 3.0], [0.5, -1.0]];
        let basis = poly_basis(&x, 2, true);
        assert_eq!(
            basis.labels,
            vec!["1", "x1", "x2", "x1^2", "x2^2", "x1*x2"]
        );
        assert_eq!(basis.columns.ncols(), 6);
        assert!((basis.columns[[0, 3]] - 4.0).abs() < 1e-15);
        assert!((basis.columns[[0, 5]] - 6.0).abs() < 1e-15);

        let one = array![[2.0], [3.0]];
        let cubic = poly_basis(&one, 3, false);
        assert_eq!(cubic.labels, vec!["1", "x1", "x1^2", "x1^3"]);

        let constant = poly_basis(&x, 0, true);
        assert_eq!(constant.labels, vec!["1"]);
    }
}
