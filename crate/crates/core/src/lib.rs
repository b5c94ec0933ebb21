//! Quantile-based randomized Kaczmarz solvers for linear systems with
//! dense noise and sparse, arbitrarily large corruptions.
//!
//! The crate provides the solvers ([`solvers`]), a generator for corrupted
//! systems ([`sysgen`]), evaluation of the theoretical constants and
//! horizons ([`bounds`]), and the experiment harness ([`experiments`]).

pub mod bounds;
pub mod error;
pub mod experiments;
pub mod fraction;
pub mod io;
pub mod linalg;
pub mod rng;
pub mod solvers;
pub mod sysgen;

pub use bounds::{build_report, BoundReport, Certainty, RobustParams, SigmaSetting, SpectralSummary};
pub use error::{Error, Result};
pub use experiments::{ExperimentResult, ExperimentSpec, Figure, Profile};
pub use fraction::Fraction;
pub use io::RunManifest;
pub use linalg::{DenseMatrix, MultisetQuantileSpec, SigmaMode, SigmaQMinResult};
pub use solvers::{
    horizon_estimate, run, HorizonEstimate, InitPolicy, LinearSystem, Method, ResidualUpdate, RunTrace, SolverConfig,
};
pub use sysgen::{generate, CorruptedProblem, Ensemble, GenSpec};
