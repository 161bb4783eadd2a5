//! Historical-data borrowing for i.i.d. normal models: normalized power
//! priors (NPP), the BHM-matching normalized power prior (BNPP), the
//! independent-discounting NPP (iNPP), and Bayesian hierarchical models
//! (BHM), together with the exact transforms that map priors on the BHM
//! heterogeneity variance to priors on the power-prior discounting
//! parameters and back.
//!
//! Marginal posteriors are computed by deterministic Gauss-Legendre
//! quadrature over the discounting (or variance) parameter and returned as
//! normalized [`DensityGrid`]s; Metropolis-within-Gibbs samplers provide an
//! independent stochastic cross-check and handle the cases quadrature does
//! not cover. All types are immutable after construction and safe to share
//! across threads.

// `!(x > 0.0)` is used as a NaN-catching guard throughout the numeric code,
// and the samplers index several parallel draw matrices by chain.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod approx;
pub mod data;
pub mod error;
pub mod fitting;
pub mod grid;
pub mod mcmc;
pub mod posterior;
pub mod prior;
pub mod quad;
pub(crate) mod special;
pub mod stats;
pub mod transform;

pub use data::{NormalSummary, StudySet};
pub use error::{Error, Result};
pub use grid::{summarize, DensityGrid, PosteriorSummary};
pub use prior::{PriorSpec, Support};
