//! Spherical Cauchy (SC) and Poisson kernel-based (PKB) distributions on the
//! unit sphere `S^d`: densities, sampling, maximum likelihood, two-sample
//! tests, regression, discriminant analysis and mixture clustering.

pub mod classify;
pub mod density;
pub mod error;
pub mod harness;
pub mod inference;
pub mod io;
pub mod mixtures;
pub mod mle;
pub mod optim;
pub mod regression;
pub mod rng;
pub mod sampling;
pub mod sphere;

pub use error::{Error, Result};
pub use rng::{RngStream, StreamId};
pub use sphere::{gamma_to_rho, rho_to_gamma, DirectionalSample, Family, SphericalParams, UnitVector};
