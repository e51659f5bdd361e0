use thiserror::Error;

use crate::assumptions::AssumptionId;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix is {rows}x{cols}, expected a square matrix")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("entry ({row}, {col}) is not finite")]
    NonFinite { row: usize, col: usize },
    #[error("entry ({row}, {col}) = {value} is negative")]
    NegativeEntry { row: usize, col: usize, value: f64 },
    #[error("tolerance {0} must be positive and finite")]
    BadTolerance(f64),
    #[error("matrix asymmetry {deviation:e} exceeds slack {slack:e}")]
    Asymmetric { deviation: f64, slack: f64 },
    #[error("iteration did not converge after {iterations} squarings (estimate {estimate}, residual {residual:e})")]
    NotConverged {
        iterations: usize,
        estimate: f64,
        residual: f64,
        last_iterate: alloc::vec::Vec<f64>,
    },
    #[error("Lyapunov series divergent: ||M^(2^{squarings})|| = {norm:e} does not contract")]
    LyapunovDivergent { squarings: usize, norm: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid system shape: {0}")]
    Shape(&'static str),
    #[error("{what}: expected {expected}, found {found}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("{what} contains a non-finite value")]
    NonFinite { what: &'static str },
    #[error("{assumption} violated: {what}[{}] = {value}", index + 1)]
    Violation {
        assumption: AssumptionId,
        what: &'static str,
        index: usize,
        value: f64,
    },
    #[error("virus {} out of range (m = {m})", virus + 1)]
    VirusOutOfRange { virus: usize, m: usize },
    #[error("invalid schedule: {0}")]
    Schedule(&'static str),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Which bound of the domain a state left.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainBound {
    InfectionBelowZero,
    InfectionAboveOne,
    InfectionSumAboveOne,
    ContaminationBelowZero,
    ContaminationAboveCap,
}

impl core::fmt::Display for DomainBound {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        let s = match self {
            DomainBound::InfectionBelowZero => "x_i >= 0",
            DomainBound::InfectionAboveOne => "x_i <= 1",
            DomainBound::InfectionSumAboveOne => "sum over viruses of x_i <= 1",
            DomainBound::ContaminationBelowZero => "w_j >= 0",
            DomainBound::ContaminationAboveCap => "w_j <= w_max",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("state left the domain at k = {k}: virus {}, index {}, value {value} violates {bound}", virus + 1, index + 1)]
    DomainViolation {
        k: usize,
        virus: usize,
        index: usize,
        value: f64,
        bound: DomainBound,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StabilityError {
    #[error("sigma = {0} must lie in (0, 1)")]
    BadSigma(f64),
    #[error("invalid slow-variation constants: {0}")]
    BadConstants(&'static str),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}
