//! Epps effect under asynchronous Poisson sampling.
//!
//! Synchronous correlation models and their finite-horizon covariances
//! ([`kernels`]), path simulation and previous-tick sampling ([`sampling`]),
//! closed-form predictions for sampled series ([`async_theory`]), empirical
//! estimators ([`estimation`]), spectral deconvolution ([`filtering`]),
//! model fits ([`fitting`]) and the end-to-end workflow ([`pipeline`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod async_theory;
pub mod error;
pub mod estimation;
pub mod exec;
pub mod filtering;
pub mod fitting;
pub mod jet;
pub mod kernels;
pub mod pipeline;
pub mod quadrature;
pub mod sampling;

pub use error::{Error, Result};
pub use exec::Exec;
