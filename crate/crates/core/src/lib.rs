//! Simulation and spectral analysis of Wishart-type matrix processes driven
//! by long-memory Gaussian paths.
//!
//! The library builds matrix paths X(t) = N(t)^T N(t) from a p x n array of
//! independent fractional Brownian motions with Hurst index H in (1/2, 1),
//! tracks their ordered eigenvalues, and provides the machinery to check the
//! pathwise and distributional structure of that spectral process:
//!
//! - exact sampling of fractional Brownian paths ([`fbm`]),
//! - counter-based deterministic random streams ([`rng`]),
//! - eigenvalue perturbation identities, the spectral drift, and mean-drift
//!   verification ([`spectra`]),
//! - the dilated Marchenko-Pastur limit law with its Cauchy-Stieltjes
//!   transform, evolution PDE, and integral evolution equation
//!   ([`limit_law`]),
//! - empirical-measure distances, collision diagnostics, regularity and
//!   inverse-moment scaling estimates, and the joint eigenvalue density
//!   ([`analysis`]),
//! - a reproducible Monte Carlo harness with worker-count-independent
//!   output ([`mc`]).

pub mod analysis;
pub mod error;
pub mod fbm;
pub mod limit_law;
pub mod mat;
pub mod mc;
pub mod quad;
pub mod rng;
pub mod spectra;
mod stats;
pub mod wishart;

pub use error::{Error, Result};
pub use fbm::{FbmMethod, FbmPath, FbmSampler, Hurst, TimeGrid};
pub use limit_law::{DilatedMp, MpParams};
pub use mc::{run_ensemble, simulate_replica, summarize, EnsembleSummary, SimConfig};
pub use wishart::{Scale, SpectrumPath};
