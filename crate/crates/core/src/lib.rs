//! Hierarchical Bayesian dose-response meta-analysis with B-spline curves.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod io;
pub mod linalg;
pub mod loo;
pub mod math;
pub mod model;
pub mod pipeline;
pub mod plot;
pub mod sampler;
pub mod sim;
pub mod summaries;

pub use basis::{build_basis, eval_row, BasisSet};
pub use data::{Dataset, SubjectRecord};
pub use error::{Error, Result};
pub use model::{linear_predictor, HierarchicalModel, ModelShape, ParameterState, ParameterValues, Priors};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/basis.md")]
    mod basis {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/sampling.md")]
    mod sampling {}
    #[doc = include_str!("../../../book/src/comparison.md")]
    mod comparison {}
    #[doc = include_str!("../../../book/src/summaries.md")]
    mod summaries {}
    #[doc = include_str!("../../../book/src/predictive_checks.md")]
    mod predictive_checks {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
