//! Glue from a dataset to a fitted estimate: treatment-model choice, fit, and
//! the residual regression, shared by the CLI, the simulation harness, and
//! the bootstrap.

use ndarray::Array2;

use crate::data::Dataset;
use crate::error::Result;
use crate::estimators::{estimate, CenteringVariant, SubsampleEstimate};
use crate::propensity::{fit_mnl, fit_ordered_probit, MnlSpec, OrderedProbitSpec, PropensityFit};
use crate::regress::hstack;

/// Which treatment model to fit.
#[derive(Debug, Clone)]
pub enum PropensityConfig {
    OrderedProbit {
        /// Prepend a constant column to the covariates before fitting. The
        /// constant's slope absorbs a nonzero first cutoff under the
        /// zero-first-cutoff normalization.
        with_intercept: bool,
    },
    Mnl { spec: MnlSpec },
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub model: PropensityConfig,
    pub variant: CenteringVariant,
    pub d: usize,
}

pub fn fit_propensity(ds: &Dataset, model: &PropensityConfig) -> Result<PropensityFit> {
    match model {
        PropensityConfig::OrderedProbit { with_intercept } => {
            let x = if *with_intercept {
                let ones = Array2::ones((ds.n(), 1));
                hstack(&[&ones, ds.x()])
            } else {
                ds.x().clone()
            };
            let spec = OrderedProbitSpec::new(x, ds.j())?;
            fit_ordered_probit(&spec, ds.d())
        }
        PropensityConfig::Mnl { spec } => fit_mnl(spec, ds.x(), ds.d()),
    }
}

/// Fit the treatment model and run the residual regression for one target.
pub fn run(ds: &Dataset, cfg: &PipelineConfig) -> Result<SubsampleEstimate> {
    let fit = fit_propensity(ds, &cfg.model)?;
    estimate(ds, &fit, cfg.d, cfg.variant)
}
