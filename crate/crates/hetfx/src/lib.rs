//! Estimation of heterogeneous multiple-treatment effects.
//!
//! With a treatment taking values 0..=J, the common practice of regressing
//! the outcome on all treatment dummies plus covariates does not estimate
//! any average of a single category's effect: each dummy slope mixes every
//! category's heterogeneous effect through contamination weights. This crate
//! computes that decomposition exactly on discrete designs, and implements
//! the consistent alternative: least squares of a centered outcome on the
//! propensity-score residual `D_d - P(D = d | X, D in {0, d})`, run on the
//! `D in {0, d}` subsample only. The estimand is an overlap-weight average of
//! the effect of category d, for any outcome type.
//!
//! The crate ships the treatment models (ordered probit and multinomial
//! logit), the two-step asymptotic variance with numerical first-step
//! derivatives, a bootstrap alternative, and a deterministic parallel Monte
//! Carlo harness with built-in simulation designs. Start with the runnable
//! programs under `examples/`, or the `hetfx` binary for CSV workflows.

pub mod cli;
pub mod contamination;
pub mod data;
pub mod error;
pub mod estimators;
pub mod inference;
pub mod linalg;
pub mod pipeline;
pub mod propensity;
pub mod regress;
pub mod report;
pub mod seeding;
pub mod simulation;

pub use data::Dataset;
pub use error::{HetfxError, Result};
pub use estimators::CenteringVariant;
pub use propensity::PropensityFit;
