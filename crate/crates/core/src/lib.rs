//! MAP scoring of entities from mixed ratings and pairwise comparisons.
//!
//! Observations follow a generalized Bradley–Terry model. A comparison `r` of
//! entities `b` and `c` has density `∝ f(r)·exp(r(θ_b − θ_c))`. A rating `t`
//! of entity `a` has density `∝ g(t)·exp(t(θ_a − θ0))`, where `θ0` is a
//! learned threshold. Scores are linear in features, `θ = xᵀβ`, with Gaussian
//! priors on `β` and `θ0`.
//!
//! ```
//! use scora::model::{Dataset, Embedding, ScoraModel};
//! use scora::rootlaw::RootLaw;
//! use scora::solver::{solve_map, SolverConfig};
//!
//! let model = ScoraModel::with_unit_priors(Embedding::identity(3)?, RootLaw::KAry(2), RootLaw::KAry(5));
//! let mut data = Dataset::new();
//! data.push_comparison(2, 0, 1.0);
//! data.push_rating(1, -0.5);
//! let fit = solve_map(&model, &data, &SolverConfig::default())?;
//! assert!(fit.scores[2] > fit.scores[0]);
//! # Ok::<(), scora::error::ScoraError>(())
//! ```
//!
//! The guide in `book/` covers each module in turn. Its code blocks run as
//! doc-tests of this crate.

pub mod error;
pub mod experiments;
pub mod io;
pub mod metrics;
pub mod model;
pub mod properties;
pub mod rootlaw;
pub mod solver;
pub mod synth;

pub use error::{Result, ScoraError};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/root-laws.md")]
    mod root_laws {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/estimation.md")]
    mod estimation {}
    #[doc = include_str!("../../../book/src/flexible.md")]
    mod flexible {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/synthetic.md")]
    mod synthetic {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/properties.md")]
    mod properties {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
