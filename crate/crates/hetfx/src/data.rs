use ndarray::{Array1, Array2};

use crate::error::{HetfxError, Result};

/// An outcome vector, an integer treatment in `0..=j`, and a covariate matrix.
///
/// Category 0 is the control. The covariate matrix holds whatever the caller
/// wants downstream regressions to see; a leading constant column is allowed
/// but never added implicitly.
#[derive(Debug, Clone)]
pub struct Dataset {
    y: Array1<f64>,
    d: Vec<usize>,
    x: Array2<f64>,
    j: usize,
}

impl Dataset {
    pub fn new(y: Array1<f64>, d: Vec<usize>, x: Array2<f64>, j: usize) -> Result<Self> {
        let n = y.len();
        if d.len() != n || x.nrows() != n {
            return Err(HetfxError::DimensionMismatch(format!(
                "y has {n} rows, d has {}, x has {}",
                d.len(),
                x.nrows()
            )));
        }
        if j < 1 {
            return Err(HetfxError::InvalidData("need at least one non-control category".into()));
        }
        if n <= x.ncols() {
            return Err(HetfxError::InvalidData(format!(
                "need more observations ({n}) than covariates ({})",
                x.ncols()
            )));
        }
        if let Some(&bad) = d.iter().find(|&&v| v > j) {
            return Err(HetfxError::OutOfRangeCategory { found: bad, max: j });
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(HetfxError::InvalidData("outcome contains non-finite values".into()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(HetfxError::InvalidData("covariates contain non-finite values".into()));
        }
        Ok(Self { y, d, x, j })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn j(&self) -> usize {
        self.j
    }

    pub fn y(&self) -> &Array1<f64> {
        &self.y
    }

    pub fn d(&self) -> &[usize] {
        &self.d
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    /// Treatment dummy matrix, one column per non-control category.
    pub fn dummies(&self) -> Array2<f64> {
        crate::regress::make_dummies(&self.d, self.j).expect("categories validated on construction")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn rejects_out_of_range_category() {
        let y = array![1.0, 2.0, 3.0];
        let x = array![[1.0], [2.0], [3.0]];
        match Dataset::new(y, vec![0, 1, 3], x, 2) {
            Err(HetfxError::OutOfRangeCategory { found: 3, max: 2 }) => {}
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn rejects_non_finite_outcome() {
        let y = array![1.0, f64::NAN, 3.0];
        let x = array![[1.0], [2.0], [3.0]];
        assert!(Dataset::new(y, vec![0, 1, 2], x, 2).is_err());
    }
}
