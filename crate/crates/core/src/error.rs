use thiserror::Error;

use crate::coefficients::expr::ExprError;

/// Failures raised by the numerical pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("outward normal undefined: |grad psi| = {norm:e} at {point:?}")]
    DegenerateGradient { point: Vec<f64>, norm: f64 },
    #[error("no outflow boundary point among {sampled} samples")]
    EmptyOutflow { sampled: usize },
    #[error("trajectory from {start:?} left the bounding box at s = {time}")]
    LeftBoundingBox { start: Vec<f64>, time: f64 },
    #[error("no boundary crossing from {start:?} within |s| <= {cap} (trapped characteristic)")]
    Trapped { start: Vec<f64>, cap: f64 },
    #[error("characteristic from {start:?} crosses the boundary at tangential point {crossing:?}")]
    TangentialExit { start: Vec<f64>, crossing: Vec<f64> },
    #[error("point {point:?} lies outside the closed domain (psi = {level:e})")]
    OutsideDomain { point: Vec<f64>, level: f64 },
    #[error("leaf rooted at {exit_point:?} has transit time {transit:e} below threshold {threshold:e}")]
    LeafTooShort { exit_point: Vec<f64>, transit: f64, threshold: f64 },
    #[error("no sampled leaf within matching radius of exit point {exit_point:?}")]
    NoMatchingLeaf { exit_point: Vec<f64> },
    #[error("{context}: {source}")]
    Expression {
        context: String,
        #[source]
        source: ExprError,
    },
    #[error("reaction integral {value} exceeds exponential guard {limit}")]
    Overflow { value: f64, limit: f64 },
    #[error("kernel iteration did not converge after {iterations} sweeps (last change {last_change:e})")]
    NoConvergence { iterations: usize, last_change: f64 },
    #[error("velocity vanishes on leaf {leaf_id} at grid index {index}")]
    ZeroSpeed { leaf_id: usize, index: usize },
    #[error("closed-loop run requires gain tables")]
    MissingGains,
    #[error("grid mismatch: state has {state} nodes, gain table has {gain}")]
    GridMismatch { state: usize, gain: usize },
    #[error("leaf {leaf_id} state exceeded {limit:e} at t = {time}")]
    Instability { leaf_id: usize, time: f64, limit: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
