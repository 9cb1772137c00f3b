//! Numerical laboratory for stochastic transport equations with
//! form-bounded singular drift.

pub mod drift;
pub mod error;
pub mod experiment;
pub mod flowsim;
pub mod grid;
pub mod initial;
pub mod momentpde;
pub mod regularize;
pub mod report;
pub mod rng;
pub mod spectral;
pub mod weights;

pub use error::{Error, Result};
pub use drift::{DriftConfig, DriftField, FormBoundCertificate};
pub use experiment::ExperimentConfig;
pub use flowsim::{MCEstimate, PathConfig, ProbeConfig};
pub use grid::{BoundaryMode, BoxGrid, MatrixField, ScalarField, VectorField};
pub use regularize::MollifiedDrift;
pub use report::{CheckReport, CheckTag, VerificationReport};
pub use weights::WeightParams;
