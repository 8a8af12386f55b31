//! Numerical laboratory for the excess risk of principal component analysis.
//!
//! The crate computes, for Gaussian data with a known population covariance,
//! the exact excess reconstruction risk of empirical rank-`d` projection,
//! evaluates a family of non-asymptotic upper bounds on that risk, verifies
//! the projector-calculus identities the bounds rest on, and runs seeded,
//! thread-count-invariant Monte Carlo experiments over all of it.
//!
//! Organization:
//! - [`spectral`]: dense symmetric matrices, Jacobi eigendecomposition,
//!   spectral projectors, Hilbert-Schmidt and operator norms.
//! - [`models`]: population covariance models (exponential, polynomial,
//!   spiked, isotropic, custom spectra).
//! - [`sampling`]: counter-based seeded Gaussian sampling and sample
//!   covariance matrices.
//! - [`risk`]: per-realization risk quantities (excess risk, risk split,
//!   subspace distance, ERM gap).
//! - [`identities`]: exact projector-interaction identities checked at
//!   floating-point tolerances.
//! - [`bounds`]: closed-form risk bounds with hypothesis tracking.
//! - [`concentration`]: eigenvalue deviation inequalities and weighted
//!   operators.
//! - [`asymptotics`]: weighted chi-square limit laws and the two-sample
//!   Kolmogorov-Smirnov statistic.
//! - [`harness`]: replication driver, experiment sweeps, CSV/JSON output.

pub mod asymptotics;
pub mod bounds;
pub mod concentration;
mod error;
pub mod harness;
pub mod identities;
pub mod models;
pub mod numeric;
pub mod risk;
pub mod sampling;
pub mod spectral;

pub use error::{Error, Result};
pub use models::{CovModel, ModelKind, Spectrum};
pub use risk::{EmpiricalSpectrum, Realization, RiskReport};
pub use sampling::{RngStream, SampleSet};
pub use spectral::{build_projector, hs_inner, op_norm, sym_eig};
pub use spectral::{EigenDecomposition, Mat, Projector, SymMatrix};
