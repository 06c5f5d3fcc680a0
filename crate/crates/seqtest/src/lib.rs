//! Near-optimal sequential tests for multiple composite hypotheses over convex
//! parameter sets.
//!
//! The library builds tests that decide, from iid observations, which of several
//! convex parameter sets contains the distribution's parameter. It covers three
//! observation schemes (Gaussian mean with identity covariance, Poisson intensity
//! vectors, and finite discrete distributions), for which the Hellinger-affinity
//! rate function
//!
//! ```text
//! psi(mu, nu) = ln ∫ sqrt(p_mu p_nu)
//! ```
//!
//! has a closed form that is concave in `(mu, nu)`. Maximizing `psi` over a pair
//! of convex bodies yields an affine detector whose worst-case risk is exactly
//! `exp(opt)`; stacks of such detectors, balanced by spectrally optimal shifts,
//! aggregate into multi-hypothesis tests; and a staged construction with
//! geometric sample schedules and cell partitions turns those into sequential
//! tests that stop early when the true parameter sits deep inside its set.
//!
//! Module map:
//! - [`schemes`]: observation schemes, densities, samplers, rate functions,
//!   exponential moments.
//! - [`convexgeom`]: boxes and H-polytopes, the linear-minimization oracle, the
//!   conditional-gradient saddle solver, barrier-based smart cuts, and Monte
//!   Carlo region volumes.
//! - [`pairwise`]: detectors built from saddle points, exact risk verification,
//!   and the repeated-observation calculus.
//! - [`multitest`]: closeness-masked risk matrices, spectral norms, optimal
//!   shifts, and the acceptance rule.
//! - [`sequential`]: stage schedules, cuts, partitions, and the sequential test
//!   builder/runner with JSON persistence.
//! - [`analysis`]: separation, sample-size bounds, and per-parameter stage
//!   bounds.
//! - [`harness`]: config-driven Monte Carlo experiments with CSV/JSON reports.

pub mod analysis;
pub mod convexgeom;
pub mod error;
pub mod harness;
mod linalg;
pub mod multitest;
pub mod pairwise;
pub mod schemes;
pub mod sequential;

pub use error::{Error, Result};
