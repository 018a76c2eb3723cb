//! Subsample least squares with propensity-score residuals.
//!
//! For a target category d, estimation runs on the observations with
//! D in {0, d}: the outcome is centered by a chosen function of the data,
//! the treatment dummy is centered at its conditional probability within the
//! pair, and the slope of the centered outcome on that residual is the
//! estimate. The centering choice never moves the estimand (an overlap-weight
//! average of the heterogeneous effect) but controls robustness and
//! efficiency under a misspecified treatment model.

use ndarray::{Array1, Array2};
use serde::Serialize;

use crate::data::Dataset;
use crate::error::{HetfxError, Result};
use crate::propensity::PropensityFit;
use crate::regress::{fit_ols, poly_basis, take, take_rows, DesignMatrix};

/// How the outcome is centered before the residual regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CenteringVariant {
    /// Subtract the subsample mean of the outcome.
    RawMean,
    /// Residualize on a polynomial basis in the covariates (degree q with
    /// pairwise interactions), fit on the subsample only.
    CovariatePoly { q: usize },
    /// Residualize on a polynomial basis in the fitted index functions of
    /// the treatment model, fit on the subsample only.
    IndexPoly { q: usize },
}

impl CenteringVariant {
    pub fn label(&self) -> &'static str {
        match self {
            CenteringVariant::RawMean => "raw",
            CenteringVariant::CovariatePoly { .. } => "covpoly",
            CenteringVariant::IndexPoly { .. } => "indexpoly",
        }
    }

    pub fn parse(s: &str, q: usize) -> Result<Self> {
        match s {
            "raw" => Ok(CenteringVariant::RawMean),
            "covpoly" => Ok(CenteringVariant::CovariatePoly { q }),
            "indexpoly" => Ok(CenteringVariant::IndexPoly { q }),
            other => Err(HetfxError::InvalidConfig(format!(
                "unknown variant '{other}' (expected raw, covpoly, or indexpoly)"
            ))),
        }
    }
}

/// Indices of the observations with D in {0, d}, both categories present.
pub fn subsample_mask(ds: &Dataset, d: usize) -> Result<Vec<usize>> {
    if d < 1 || d > ds.j() {
        return Err(HetfxError::BadCategory(d));
    }
    let mut mask = Vec::new();
    let mut has_control = false;
    let mut has_treated = false;
    for (i, &di) in ds.d().iter().enumerate() {
        if di == 0 {
            has_control = true;
            mask.push(i);
        } else if di == d {
            has_treated = true;
            mask.push(i);
        }
    }
    if !has_control {
        return Err(HetfxError::EmptySubsampleSide { d, missing: 0 });
    }
    if !has_treated {
        return Err(HetfxError::EmptySubsampleSide { d, missing: d });
    }
    Ok(mask)
}

/// Output of the centering step.
#[derive(Debug, Clone)]
pub struct Centering {
    /// y - predictor on the subsample.
    pub centered_y: Array1<f64>,
    /// Coefficients of the centering regression.
    pub gamma: Array1<f64>,
    /// The basis the gamma coefficients apply to, on subsample rows,
    /// evaluated at the fitted treatment model.
    pub basis: Array2<f64>,
    pub basis_labels: Vec<String>,
}

/// Polynomial basis in index functions, restricted to `mask` rows.
pub(crate) fn index_poly_basis(indices: &Array2<f64>, mask: &[usize], q: usize) -> DesignMatrix {
    let sub = take_rows(indices, mask);
    let names: Vec<String> = (0..sub.ncols()).map(|k| format!("idx{}", k + 1)).collect();
    crate::regress::poly_basis_named(&sub, &names, q, true)
}

/// Centers the outcome on the subsample. The centering regression uses only
/// subsample rows; the index functions, when used, come from the full-sample
/// treatment fit.
pub fn center_outcome(
    ds: &Dataset,
    mask: &[usize],
    variant: CenteringVariant,
    fit: Option<&PropensityFit>,
) -> Result<Centering> {
    if mask.is_empty() {
        return Err(HetfxError::InvalidData("empty subsample".into()));
    }
    let y_sub = take(ds.y(), mask);
    let design = match variant {
        CenteringVariant::RawMean => DesignMatrix::new(
            Array2::ones((mask.len(), 1)),
            vec!["1".to_string()],
        )?,
        CenteringVariant::CovariatePoly { q } => {
            let x_sub = take_rows(ds.x(), mask);
            poly_basis(&x_sub, q, true)
        }
        CenteringVariant::IndexPoly { q } => {
            let fit = fit.ok_or_else(|| {
                HetfxError::InvalidConfig("index-based centering needs a fitted treatment model".into())
            })?;
            index_poly_basis(&fit.indices, mask, q)
        }
    };
    let ols = fit_ols(&design, &y_sub)?;
    Ok(Centering {
        centered_y: ols.residuals,
        gamma: ols.coef,
        basis: design.columns,
        basis_labels: design.labels,
    })
}

/// No-intercept slope of the centered outcome on the propensity-score
/// residual over the subsample.
pub fn olspsr(centered_y: &Array1<f64>, psr: &Array1<f64>) -> Result<f64> {
    if centered_y.len() != psr.len() {
        return Err(HetfxError::DimensionMismatch(format!(
            "centered outcome has {} rows, residual has {}",
            centered_y.len(),
            psr.len()
        )));
    }
    let denom: f64 = psr.iter().map(|v| v * v).sum();
    if denom < 1e-10 * psr.len() as f64 {
        return Err(HetfxError::DegeneratePsr);
    }
    let num: f64 = centered_y.iter().zip(psr.iter()).map(|(a, b)| a * b).sum();
    Ok(num / denom)
}

/// Overlap weights over a chosen index set, normalized to mean one.
#[derive(Debug, Clone)]
pub struct OverlapWeights {
    pub w: Array1<f64>,
    pub index: Vec<usize>,
}

/// w_i proportional to P0*Pd/(P0+Pd), evaluated on `index` rows of a
/// probability matrix and normalized to mean one over that set. A vanishing
/// pair probability gets weight zero (no overlap there).
pub fn overlap_weights_from_probs(
    probs: &Array2<f64>,
    d: usize,
    index: &[usize],
) -> Result<OverlapWeights> {
    if d < 1 || d >= probs.ncols() {
        return Err(HetfxError::BadCategory(d));
    }
    let mut w = Array1::zeros(index.len());
    for (pos, &i) in index.iter().enumerate() {
        let p0 = probs[[i, 0]];
        let pd = probs[[i, d]];
        let denom = p0 + pd;
        if !denom.is_finite() || denom < 0.0 {
            return Err(HetfxError::DegenerateDenominator(i));
        }
        w[pos] = if denom > 0.0 { p0 * pd / denom } else { 0.0 };
    }
    let mean = w.sum() / index.len().max(1) as f64;
    if mean <= 0.0 {
        return Err(HetfxError::DegenerateDenominator(index.first().copied().unwrap_or(0)));
    }
    Ok(OverlapWeights { w: w / mean, index: index.to_vec() })
}

/// Overlap weights from a fitted treatment model.
pub fn overlap_weights(fit: &PropensityFit, d: usize, index: &[usize]) -> Result<OverlapWeights> {
    overlap_weights_from_probs(&fit.probs, d, index)
}

/// Weighted average of per-observation effects under the overlap weights:
/// the estimand the subsample residual regression targets, and the per-sample
/// truth the simulation harness measures bias against.
pub fn ow_target(weights: &OverlapWeights, mu_d: &Array1<f64>) -> Result<f64> {
    if weights.w.len() != mu_d.len() {
        return Err(HetfxError::DimensionMismatch(format!(
            "{} weights for {} effect values",
            weights.w.len(),
            mu_d.len()
        )));
    }
    Ok(weights.w.iter().zip(mu_d.iter()).map(|(w, m)| w * m).sum::<f64>() / weights.w.len() as f64)
}

/// Spread diagnostics of the fitted pair propensity over the subsample.
#[derive(Debug, Clone, Serialize)]
pub struct PropensityDiagnostics {
    pub min: f64,
    pub median: f64,
    pub max: f64,
    pub n_below_001: usize,
    pub n_above_099: usize,
}

impl PropensityDiagnostics {
    fn from_values(pi: &Array1<f64>) -> Self {
        let mut sorted: Vec<f64> = pi.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = sorted.len();
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
        };
        Self {
            min: sorted[0],
            median,
            max: sorted[n - 1],
            n_below_001: sorted.iter().filter(|&&v| v < 0.01).count(),
            n_above_099: sorted.iter().filter(|&&v| v > 0.99).count(),
        }
    }
}

/// A fitted subsample residual regression for one target category.
#[derive(Debug, Clone)]
pub struct SubsampleEstimate {
    pub d: usize,
    pub variant: CenteringVariant,
    pub beta_hat: f64,
    pub n_sub: usize,
    pub mask: Vec<usize>,
    /// D_d - pair propensity on the subsample.
    pub psr: Array1<f64>,
    pub centered_y: Array1<f64>,
    pub gamma_hat: Array1<f64>,
    /// Centering basis on subsample rows at the fitted treatment model.
    pub centering_basis: Array2<f64>,
    /// Filled by the variance step.
    pub asy_sd: Option<f64>,
    pub diagnostics: PropensityDiagnostics,
}

/// Runs mask -> centering -> residual regression for one (d, variant) pair.
pub fn estimate(
    ds: &Dataset,
    fit: &PropensityFit,
    d: usize,
    variant: CenteringVariant,
) -> Result<SubsampleEstimate> {
    if fit.n() != ds.n() {
        return Err(HetfxError::DimensionMismatch(
            "treatment model was fitted on a different sample".into(),
        ));
    }
    let mask = subsample_mask(ds, d)?;
    let pi_full = fit.pairwise_propensity(d)?;
    let pi = take(&pi_full, &mask);
    let mut psr = Array1::zeros(mask.len());
    for (pos, &i) in mask.iter().enumerate() {
        let dummy = if ds.d()[i] == d { 1.0 } else { 0.0 };
        psr[pos] = dummy - pi[pos];
    }
    let centering = center_outcome(ds, &mask, variant, Some(fit))?;
    let beta_hat = olspsr(&centering.centered_y, &psr)?;
    let diagnostics = PropensityDiagnostics::from_values(&pi);
    Ok(SubsampleEstimate {
        d,
        variant,
        beta_hat,
        n_sub: mask.len(),
        mask,
        psr,
        centered_y: centering.centered_y,
        gamma_hat: centering.gamma,
        centering_basis: centering.basis,
        asy_sd: None,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn toy_dataset() -> Dataset {
        let y = array![1.0, 2.0, 3.0, 4.0, 5.0];
        let d = vec![0, 1, 2, 0, 2];
        let x = array![[0.1], [0.4], [0.9], [0.3], [0.7]];
        Dataset::new(y, d, x, 2).unwrap()
    }

    #[test]
    fn mask_selects_pair_rows() {
        let ds = toy_dataset();
        assert_eq!(subsample_mask(&ds, 2).unwrap(), vec![0, 2, 3, 4]);
        assert_eq!(subsample_mask(&ds, 1).unwrap(), vec![0, 1, 3]);
    }

    #[test]
    fn mask_requires_both_sides() {
        let y = array![1.0, 2.0, 3.0];
        let ds = Dataset::new(y, vec![0, 0, 0], array![[1.0], [2.0], [3.0]], 1).unwrap();
        match subsample_mask(&ds, 1) {
            Err(HetfxError::EmptySubsampleSide { d: 1, missing: 1 }) => {}
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn raw_centering_of_constant_outcome_is_zero() {
        let y = array![3.0, 3.0, 3.0, 3.0];
        let ds = Dataset::new(y, vec![0, 1, 0, 1], array![[0.0], [1.0], [0.5], [0.2]], 1).unwrap();
        let mask = subsample_mask(&ds, 1).unwrap();
        let c = center_outcome(&ds, &mask, CenteringVariant::RawMean, None).unwrap();
        assert!(c.centered_y.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn covariate_centering_absorbs_exact_polynomial() {
        // y = 1 + 2x + x^2 is exactly degree-2, so residuals vanish.
        let x = array![[0.0], [0.5], [1.0], [1.5], [2.0], [2.5]];
        let y = x.column(0).mapv(|v| 1.0 + 2.0 * v + v * v);
        let ds = Dataset::new(y, vec![0, 1, 0, 1, 0, 1], x, 1).unwrap();
        let mask = subsample_mask(&ds, 1).unwrap();
        let c = center_outcome(&ds, &mask, CenteringVariant::CovariatePoly { q: 2 }, None).unwrap();
        assert!(c.centered_y.iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn olspsr_zero_when_orthogonal() {
        let cy = array![1.0, -1.0, 1.0, -1.0];
        let psr = array![1.0, 1.0, -1.0, -1.0];
        assert_eq!(olspsr(&cy, &psr).unwrap(), 0.0);
    }

    #[test]
    fn olspsr_rejects_degenerate_residuals() {
        let cy = array![1.0, 2.0];
        let psr = array![0.0, 0.0];
        assert!(matches!(olspsr(&cy, &psr), Err(HetfxError::DegeneratePsr)));
    }

    #[test]
    fn overlap_weights_uniform_when_balanced() {
        // Two categories, P0 = P1 = 0.5 everywhere.
        let probs = array![[0.5, 0.5], [0.5, 0.5], [0.5, 0.5]];
        let w = overlap_weights_from_probs(&probs, 1, &[0, 1, 2]).unwrap();
        assert!(w.w.iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn overlap_weights_vanish_without_overlap() {
        let probs = array![[0.0, 0.5, 0.5], [0.4, 0.4, 0.2]];
        let w = overlap_weights_from_probs(&probs, 1, &[0, 1]).unwrap();
        assert_eq!(w.w[0], 0.0);
        assert!((w.w.sum() / 2.0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ow_target_of_constant_is_the_constant() {
        let probs = array![[0.3, 0.5, 0.2], [0.6, 0.2, 0.2], [0.2, 0.5, 0.3]];
        let w = overlap_weights_from_probs(&probs, 1, &[0, 1, 2]).unwrap();
        let mu = array![2.5, 2.5, 2.5];
        assert!((ow_target(&w, &mu).unwrap() - 2.5).abs() < 1e-12);
        let zero = array![0.0, 0.0, 0.0];
        assert_eq!(ow_target(&w, &zero).unwrap(), 0.0);
    }
}
