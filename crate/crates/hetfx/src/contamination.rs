//! Decomposition of the usual multi-dummy OLS estimand under heterogeneous
//! effects: conditional treatment covariances per covariate cell, the
//! contamination weight matrices through which other categories' effects leak
//! into each dummy slope, and the implied estimand.
//!
//! The cell-based path requires discrete covariates, where the conditional
//! mean of each dummy coincides with its linear projection on a saturated
//! design. Cells can carry empirical frequencies or user-supplied exact
//! probabilities; the exact mode makes the weight-mean identities sharp.

use ndarray::{Array1, Array2};

use crate::data::Dataset;
use crate::error::{HetfxError, Result};
use crate::linalg::{det_small, solve_small};
use crate::regress::{fit_ols, hstack, DesignMatrix};

/// Assignment of observations to discrete covariate cells.
#[derive(Debug, Clone)]
pub struct CellPartition {
    labels: Vec<usize>,
    n_cells: usize,
}

impl CellPartition {
    /// Validates that cell ids 0..n_cells are all used.
    pub fn new(labels: Vec<usize>) -> Result<Self> {
        let n_cells = labels.iter().max().map_or(0, |m| m + 1);
        if n_cells == 0 {
            return Err(HetfxError::InvalidData("no observations to partition".into()));
        }
        let mut seen = vec![false; n_cells];
        for &c in &labels {
            seen[c] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(HetfxError::EmptyCell(missing));
        }
        Ok(Self { labels, n_cells })
    }

    /// Groups identical covariate rows into cells. Rejects data where every
    /// observation is unique, which signals continuous covariates.
    pub fn from_covariate_rows(x: &Array2<f64>) -> Result<Self> {
        let n = x.nrows();
        let mut keys: Vec<Vec<u64>> = Vec::new();
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let key: Vec<u64> = x.row(i).iter().map(|v| v.to_bits()).collect();
            match keys.iter().position(|k| *k == key) {
                Some(c) => labels.push(c),
                None => {
                    keys.push(key);
                    labels.push(keys.len() - 1);
                }
            }
        }
        if keys.len() == n && n > 1 {
            return Err(HetfxError::ContinuousCovariate);
        }
        Self::new(labels)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }
}

/// Conditional covariance matrices of the treatment dummies, one J x J
/// matrix per covariate cell, plus their probability-weighted average.
#[derive(Debug, Clone)]
pub struct ConditionalCov {
    j: usize,
    cell_weight: Vec<f64>,
    cell_cov: Vec<Array2<f64>>,
    assignment: Option<Vec<usize>>,
    c_bar: Array2<f64>,
}

impl ConditionalCov {
    /// Within-cell sample covariances: mean(Dj*Dd) - mean(Dj)*mean(Dd), with
    /// cells weighted by their empirical frequency.
    pub fn from_data(ds: &Dataset, cells: &CellPartition) -> Result<Self> {
        if cells.labels().len() != ds.n() {
            return Err(HetfxError::DimensionMismatch(format!(
                "{} cell labels for {} observations",
                cells.labels().len(),
                ds.n()
            )));
        }
        let j = ds.j();
        let n = ds.n();
        let n_cells = cells.n_cells();
        let mut counts = vec![0usize; n_cells];
        let mut freq = vec![vec![0.0_f64; j + 1]; n_cells];
        for (i, &c) in cells.labels().iter().enumerate() {
            counts[c] += 1;
            freq[c][ds.d()[i]] += 1.0;
        }
        let mut cell_weight = Vec::with_capacity(n_cells);
        let mut cell_cov = Vec::with_capacity(n_cells);
        for c in 0..n_cells {
            if counts[c] == 0 {
                return Err(HetfxError::EmptyCell(c));
            }
            let total = counts[c] as f64;
            let probs: Vec<f64> = freq[c].iter().map(|f| f / total).collect();
            cell_weight.push(total / n as f64);
            cell_cov.push(multinomial_cov(&probs));
        }
        let c_bar = weighted_average(&cell_weight, &cell_cov, j);
        Ok(Self { j, cell_weight, cell_cov, assignment: Some(cells.labels().to_vec()), c_bar })
    }

    /// Exact mode: cell weights and category probabilities supplied
    /// analytically. `probs[c]` must be a length J+1 distribution.
    pub fn from_exact(weights: &[f64], probs: &[Vec<f64>]) -> Result<Self> {
        if weights.len() != probs.len() || weights.is_empty() {
            return Err(HetfxError::DimensionMismatch(
                "cell weights and probability rows must match and be nonempty".into(),
            ));
        }
        let j = probs[0].len().checked_sub(1).unwrap_or(0);
        if j < 1 {
            return Err(HetfxError::InvalidData("need at least two categories".into()));
        }
        let wsum: f64 = weights.iter().sum();
        if (wsum - 1.0).abs() > 1e-10 || weights.iter().any(|&w| w < 0.0) {
            return Err(HetfxError::InvalidData("cell weights must be a distribution".into()));
        }
        let mut cell_cov = Vec::with_capacity(probs.len());
        for p in probs {
            if p.len() != j + 1 {
                return Err(HetfxError::DimensionMismatch("ragged probability rows".into()));
            }
            let psum: f64 = p.iter().sum();
            if (psum - 1.0).abs() > 1e-10 || p.iter().any(|&v| v < 0.0) {
                return Err(HetfxError::InvalidData("cell probabilities must be a distribution".into()));
            }
            cell_cov.push(multinomial_cov(p));
        }
        let c_bar = weighted_average(weights, &cell_cov, j);
        Ok(Self { j, cell_weight: weights.to_vec(), cell_cov, assignment: None, c_bar })
    }

    pub fn j(&self) -> usize {
        self.j
    }

    pub fn n_cells(&self) -> usize {
        self.cell_weight.len()
    }

    pub fn cell_weight(&self) -> &[f64] {
        &self.cell_weight
    }

    pub fn cell_cov(&self, c: usize) -> &Array2<f64> {
        &self.cell_cov[c]
    }

    /// Averaged conditional covariance matrix.
    pub fn c_bar(&self) -> &Array2<f64> {
        &self.c_bar
    }

    /// Cell assignment per observation (empirical mode only).
    pub fn assignment(&self) -> Option<&[usize]> {
        self.assignment.as_deref()
    }
}

fn multinomial_cov(p: &[f64]) -> Array2<f64> {
    let j = p.len() - 1;
    let mut c = Array2::zeros((j, j));
    for a in 0..j {
        for b in 0..j {
            let pa = p[a + 1];
            let pb = p[b + 1];
            c[[a, b]] = if a == b { pa * (1.0 - pa) } else { -pa * pb };
        }
    }
    c
}

fn weighted_average(w: &[f64], mats: &[Array2<f64>], j: usize) -> Array2<f64> {
    let mut out = Array2::zeros((j, j));
    for (wc, m) in w.iter().zip(mats) {
        out = out + m * *wc;
    }
    out
}

/// Contamination weight matrices, one per covariate cell. Row k of a cell's
/// matrix holds the weights through which each category's heterogeneous
/// effect enters the usual-OLS slope of dummy k.
#[derive(Debug, Clone)]
pub struct ContaminationWeights {
    j: usize,
    cell_weight: Vec<f64>,
    cell_omega: Vec<Array2<f64>>,
    assignment: Option<Vec<usize>>,
    /// Weighted average of the omega matrices; identity up to sampling noise,
    /// exactly identity under exact cell probabilities.
    pub weight_means: Array2<f64>,
    /// The closed-form decomposition is established for up to four
    /// categories; beyond that the matrix computation is reported as a
    /// conjectured decomposition.
    pub conjectured: bool,
}

impl ContaminationWeights {
    pub fn j(&self) -> usize {
        self.j
    }

    pub fn cell_omega(&self, c: usize) -> &Array2<f64> {
        &self.cell_omega[c]
    }

    pub fn cell_weight(&self) -> &[f64] {
        &self.cell_weight
    }

    /// Omega matrix for observation i (empirical mode).
    pub fn omega_at(&self, i: usize) -> Option<&Array2<f64>> {
        self.assignment.as_ref().map(|a| &self.cell_omega[a[i]])
    }
}

/// Weight matrices from the averaged covariance: omega(cell) = Cbar^-1 C(cell).
pub fn contamination_weights(cov: &ConditionalCov) -> Result<ContaminationWeights> {
    let j = cov.j();
    let c_bar = cov.c_bar();
    let scale = c_bar.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let det = det_small(c_bar);
    if det.abs() < 1e-12 * scale.powi(j as i32) {
        return Err(HetfxError::SingularCovariance { det });
    }
    let mut cell_omega = Vec::with_capacity(cov.n_cells());
    for c in 0..cov.n_cells() {
        let omega = solve_small(c_bar, cov.cell_cov(c))
            .ok_or(HetfxError::SingularCovariance { det })?;
        cell_omega.push(omega);
    }
    let weight_means = weighted_average(cov.cell_weight(), &cell_omega, j);
    Ok(ContaminationWeights {
        j,
        cell_weight: cov.cell_weight().to_vec(),
        cell_omega,
        assignment: cov.assignment().map(|a| a.to_vec()),
        weight_means,
        conjectured: j >= 4,
    })
}

/// Closed-form weight matrix for two non-control categories.
pub fn closed_form_omega_j2(c_bar: &Array2<f64>, c_x: &Array2<f64>) -> Result<Array2<f64>> {
    let det = c_bar[[0, 0]] * c_bar[[1, 1]] - c_bar[[0, 1]] * c_bar[[1, 0]];
    if det == 0.0 {
        return Err(HetfxError::SingularCovariance { det });
    }
    let mut omega = Array2::zeros((2, 2));
    for jj in 0..2 {
        omega[[0, jj]] = (c_bar[[1, 1]] * c_x[[0, jj]] - c_bar[[0, 1]] * c_x[[1, jj]]) / det;
        omega[[1, jj]] = (c_bar[[0, 0]] * c_x[[1, jj]] - c_bar[[1, 0]] * c_x[[0, jj]]) / det;
    }
    Ok(omega)
}

/// Closed-form weight matrix for three non-control categories, via the
/// explicit adjoint of the 3 x 3 averaged covariance.
pub fn closed_form_omega_j3(c_bar: &Array2<f64>, c_x: &Array2<f64>) -> Result<Array2<f64>> {
    let c = |a: usize, b: usize| c_bar[[a - 1, b - 1]];
    let det = c(1, 1) * (c(2, 2) * c(3, 3) - c(2, 3) * c(3, 2))
        - c(2, 1) * (c(1, 2) * c(3, 3) - c(1, 3) * c(3, 2))
        + c(3, 1) * (c(1, 2) * c(2, 3) - c(1, 3) * c(2, 2));
    if det == 0.0 {
        return Err(HetfxError::SingularCovariance { det });
    }
    // Rows of the adjoint of c_bar.
    let adj = [
        [
            c(2, 2) * c(3, 3) - c(2, 3) * c(3, 2),
            -(c(1, 2) * c(3, 3) - c(1, 3) * c(3, 2)),
            c(1, 2) * c(2, 3) - c(1, 3) * c(2, 2),
        ],
        [
            -(c(2, 1) * c(3, 3) - c(2, 3) * c(3, 1)),
            c(1, 1) * c(3, 3) - c(1, 3) * c(3, 1),
            -(c(1, 1) * c(2, 3) - c(1, 3) * c(2, 1)),
        ],
        [
            c(2, 1) * c(3, 2) - c(2, 2) * c(3, 1),
            -(c(1, 1) * c(3, 2) - c(1, 2) * c(3, 1)),
            c(1, 1) * c(2, 2) - c(1, 2) * c(2, 1),
        ],
    ];
    let mut omega = Array2::zeros((3, 3));
    for k in 0..3 {
        for jj in 0..3 {
            let mut s = 0.0;
            for m in 0..3 {
                s += adj[k][m] * c_x[[m, jj]];
            }
            omega[[k, jj]] = s / det;
        }
    }
    Ok(omega)
}

/// Estimand of the usual-OLS dummy slopes implied by the weights, given the
/// heterogeneous effects per cell (`mu_by_cell` is n_cells x J).
pub fn contamination_estimand_cells(
    weights: &ContaminationWeights,
    mu_by_cell: &Array2<f64>,
) -> Result<Array1<f64>> {
    let j = weights.j();
    if mu_by_cell.nrows() != weights.cell_weight.len() || mu_by_cell.ncols() != j {
        return Err(HetfxError::DimensionMismatch(format!(
            "mu is {} x {}, expected {} x {}",
            mu_by_cell.nrows(),
            mu_by_cell.ncols(),
            weights.cell_weight.len(),
            j
        )));
    }
    let mut estimand = Array1::zeros(j);
    for (c, &wc) in weights.cell_weight.iter().enumerate() {
        let omega = &weights.cell_omega[c];
        for k in 0..j {
            let mut s = 0.0;
            for jj in 0..j {
                s += omega[[k, jj]] * mu_by_cell[[c, jj]];
            }
            estimand[k] += wc * s;
        }
    }
    Ok(estimand)
}

/// Estimand from per-observation effects (empirical mode): the sample average
/// of sum_j omega_kj(X_i) mu_j(X_i).
pub fn contamination_estimand(
    weights: &ContaminationWeights,
    mu: &Array2<f64>,
) -> Result<Array1<f64>> {
    let assignment = weights
        .assignment
        .as_ref()
        .ok_or_else(|| HetfxError::InvalidConfig(
            "per-observation estimand needs weights built from data; use the cell form for exact probabilities".into(),
        ))?;
    let j = weights.j();
    let n = assignment.len();
    if mu.nrows() != n || mu.ncols() != j {
        return Err(HetfxError::DimensionMismatch(format!(
            "mu is {} x {}, expected {} x {}",
            mu.nrows(),
            mu.ncols(),
            n,
            j
        )));
    }
    let mut estimand = Array1::zeros(j);
    for i in 0..n {
        let omega = &weights.cell_omega[assignment[i]];
        for k in 0..j {
            let mut s = 0.0;
            for jj in 0..j {
                s += omega[[k, jj]] * mu[[i, jj]];
            }
            estimand[k] += s;
        }
    }
    Ok(estimand / n as f64)
}

/// Dummy-slope subvector from the OLS of y on (D_1..D_J, X).
pub fn usual_ols_slopes(ds: &Dataset) -> Result<Array1<f64>> {
    let dummies = ds.dummies();
    let design = DesignMatrix::unlabeled(hstack(&[&dummies, ds.x()]));
    let fit = fit_ols(&design, ds.y())?;
    Ok(fit.coef.slice(ndarray::s![..ds.j()]).to_owned())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn uniform_three_category_cell_covariance() {
        // One cell, D uniform on {0,1,2}.
        let cov = ConditionalCov::from_exact(&[1.0], &[vec![1.0 / 3.0; 3]]).unwrap();
        let c = cov.c_bar();
        assert!((c[[0, 0]] - 2.0 / 9.0).abs() < 1e-15);
        assert!((c[[1, 1]] - 2.0 / 9.0).abs() < 1e-15);
        assert!((c[[0, 1]] + 1.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_cell_has_zero_covariance() {
        let cov = ConditionalCov::from_exact(&[0.5, 0.5], &[vec![1.0, 0.0, 0.0], vec![0.2, 0.5, 0.3]])
            .unwrap();
        assert_eq!(cov.cell_cov(0).sum(), 0.0);
    }

    #[test]
    fn homogeneous_covariance_gives_identity_weights() {
        let probs = vec![vec![0.3, 0.4, 0.3], vec![0.3, 0.4, 0.3]];
        let cov = ConditionalCov::from_exact(&[0.4, 0.6], &probs).unwrap();
        let w = contamination_weights(&cov).unwrap();
        for c in 0..2 {
            let omega = w.cell_omega(c);
            for a in 0..2 {
                for b in 0..2 {
                    let want = if a == b { 1.0 } else { 0.0 };
                    assert!((omega[[a, b]] - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn binary_reduction_matches_variance_ratio() {
        // With a single treated category the weight collapses to the
        // conditional variance over its average.
        let probs = vec![vec![0.5, 0.5], vec![0.8, 0.2]];
        let cov = ConditionalCov::from_exact(&[0.5, 0.5], &probs).unwrap();
        let w = contamination_weights(&cov).unwrap();
        let c_bar = cov.c_bar()[[0, 0]];
        assert!((w.cell_omega(0)[[0, 0]] - 0.25 / c_bar).abs() < 1e-14);
        assert!((w.cell_omega(1)[[0, 0]] - 0.16 / c_bar).abs() < 1e-14);
    }

    #[test]
    fn exact_weight_means_are_identity() {
        let probs = vec![vec![0.5, 0.4772498680518208, 0.0227501319481792],
                         vec![0.0227501319481792, 0.4772498680518208, 0.5]];
        let cov = ConditionalCov::from_exact(&[0.3, 0.7], &probs).unwrap();
        let w = contamination_weights(&cov).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((w.weight_means[[a, b]] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_effects_recover_their_own_slope() {
        let probs = vec![vec![0.6, 0.3, 0.1], vec![0.1, 0.5, 0.4]];
        let cov = ConditionalCov::from_exact(&[0.35, 0.65], &probs).unwrap();
        let w = contamination_weights(&cov).unwrap();
        let mu = array![[1.5, -0.7], [1.5, -0.7]];
        let est = contamination_estimand_cells(&w, &mu).unwrap();
        assert!((est[0] - 1.5).abs() < 1e-12);
        assert!((est[1] + 0.7).abs() < 1e-12);
        let zero = contamination_estimand_cells(&w, &Array2::zeros((2, 2))).unwrap();
        assert!(zero.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn closed_forms_match_matrix_path() {
        let probs = vec![vec![0.4, 0.3, 0.2, 0.1], vec![0.1, 0.2, 0.3, 0.4]];
        let cov = ConditionalCov::from_exact(&[0.4, 0.6], &probs).unwrap();
        let w = contamination_weights(&cov).unwrap();
        for c in 0..2 {
            let closed = closed_form_omega_j3(cov.c_bar(), cov.cell_cov(c)).unwrap();
            let general = w.cell_omega(c);
            for a in 0..3 {
                for b in 0..3 {
                    assert!((closed[[a, b]] - general[[a, b]]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn continuous_covariates_rejected() {
        let x = array![[0.11], [0.22], [0.33], [0.44]];
        match CellPartition::from_covariate_rows(&x) {
            Err(HetfxError::ContinuousCovariate) => {}
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn empty_cell_label_rejected() {
        match CellPartition::new(vec![0, 0, 2, 2]) {
            Err(HetfxError::EmptyCell(1)) => {}
            other => panic!("unexpected: {other:?}"),
        }
    }
}
