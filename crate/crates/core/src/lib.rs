//! Discrete-time multi-competitive SIWS dynamics on a layered network
//! (individuals plus shared resource nodes) and the stability analysis
//! that certifies eradication of a virus.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, sampling and
//! the command line live in the `siws` crate.
//!
//! Module map:
//! - [`linalg`]: dense matrices, spectral radius of nonnegative matrices,
//!   induced 2-norm, symmetric eigen-extrema, discrete Lyapunov series, SCCs.
//! - [`model`]: per-virus layer parameters, system shape, parameter schedules.
//! - [`dynamics`]: block assembly of the linearization, the nonlinear step,
//!   trajectory rollout.
//! - [`assumptions`]: well-posedness checks producing [`AssumptionReport`]s.
//! - [`stability`]: eradication certificates and the Lyapunov decrease audit.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod assumptions;
pub mod dynamics;
pub mod error;
pub mod linalg;
pub mod model;
pub mod stability;

mod num;

pub use assumptions::{AssumptionId, AssumptionReport};
pub use dynamics::{AssembledSystem, LayeredState, Trajectory};
pub use error::{DynamicsError, LinalgError, ModelError, StabilityError};
pub use linalg::DenseMatrix;
pub use model::{ParameterSchedule, SystemShape, VirusLayerParams, VirusSchedule};
pub use stability::{Certificate, CertificateKind, Verdict};
