//! Numerics laboratory for eigenvector delocalization of generalized Wigner
//! matrices.
//!
//! The crate is organized around the objects the experiments manipulate:
//!
//! - [`semicircle`]: the semicircle density, its Stieltjes transform and the
//!   classical eigenvalue locations.
//! - [`linalg`]: dense symmetric/Hermitian eigendecomposition and resolvent
//!   quadratic forms.
//! - [`ensembles`]: seeded samplers for GOE/GUE/Bernoulli and generalized
//!   Wigner matrices with variance profiles and moment-matched entry laws.
//! - [`dbm`]: matrix-level Dyson Brownian motion (additive and
//!   Ornstein-Uhlenbeck clocks) and the eigenvector SDE integrator.
//! - [`emf`]: the eigenvector moment flow on particle configurations, both as
//!   a direct ODE and as a Monte Carlo estimator.
//! - [`regularization`]: Helffer-Sjostrand regularized eigenvalues,
//!   regularized eigenvector projections, smoothed observables and good-event
//!   checks.
//! - [`levelrep`]: sub-microscopic intervals, exact GUE kernel counts,
//!   Chernoff tails and GOE/GUE decimation.
//! - [`harness`]: the seeded, parallel experiment runner behind the CLI.

pub mod dbm;
pub mod emf;
pub mod ensembles;
pub mod harness;
pub mod levelrep;
pub mod linalg;
pub mod quad;
pub mod regularization;
pub mod rng;
pub mod semicircle;
pub mod stats;

pub use linalg::{HermMatrix, Spectrum, SymMatrix};
pub use semicircle::HalfPlanePoint;
