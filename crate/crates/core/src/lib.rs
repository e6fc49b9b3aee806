//! Maximum-caliber tools over finite kernel families.
//!
//! The crate is organised bottom-up:
//!
//! * [`kernelspace`]: Gram matrices on weighted discrete domains, PSD checks,
//!   cone operations and the Hilbert–Schmidt distance.
//! * [`infogeom`]: Gaussian information gain, Gaussian KL, Hellinger kernel
//!   and Fisher–Rao metric.
//! * [`pathengine`]: exact Gibbs path measures over kernel trajectories
//!   (transfer matrices, enumeration oracle, FFBS sampling, multiplier
//!   calibration).
//! * [`thermo`]: Landauer ledgers, extraction bound and the per-step
//!   speed-limit check.
//! * [`fixedpoints`]: self-consistent kernels of the frozen-kernel objective,
//!   stability classes and bifurcation scans.
//! * [`bloomsim`]: an ASV/AUV lake-bloom sampling simulator with a
//!   switchable GP kernel.
//! * [`harness`]: experiment configs, replicate runs, policy comparison and
//!   result files.

pub mod bloomsim;
pub mod error;
pub mod fixedpoints;
pub mod harness;
pub mod infogeom;
pub mod kernelspace;
mod linalg;
pub mod pathengine;
pub mod thermo;

pub use error::{Error, Result};
pub use infogeom::{DiscreteDistribution, InfoValue};
pub use kernelspace::{DiscreteDomain, KernelMatrix, KernelSpec, ValidationReport};
pub use pathengine::{GibbsPathMeasure, PathMeasureSpec, Trajectory};
pub use thermo::{ThermoConfig, ThermoLedger};

/// Tag attached to every result file whose numbers depend on the Gaussian
/// realisation of the agent/environment mutual information.
pub const INFO_MODEL: &str = "gaussian_logdet";
