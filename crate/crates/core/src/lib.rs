//! Backstepping boundary control of first-order hyperbolic PDEs on bounded domains
//! in `R^n`, solved leaf by leaf along the characteristics of the transport field.
//!
//! Every numerical stage is generic over [`Real`] (`f32` or `f64`); the aliases at
//! the crate root fix the scalar for the common cases.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::type_complexity)]

pub mod characteristics;
pub mod cli;
pub mod coefficients;
pub mod error;
pub mod field;
pub mod geometry;
pub mod kernel;
pub mod pipeline;
pub mod scalar;
pub mod simulator;
pub mod tri;

pub use characteristics::{
    audit_non_trapping, build_leaf, entry_time, exit_time, flow, psi_inv, psi_inv_exact, psi_map,
    recirculation_point, transit_time, AuditReport, CharCoords, FlowConfig, Leaf, LeafResolution, LeafSet,
};
pub use coefficients::{
    absorb_reaction, leaf_coefficients, rescale_coefficients, transform_coefficients, EpsilonParams, Expr,
    LeafCoefficients, ProblemSpec,
};
pub use error::{Error, Result};
pub use field::{ConstantField, ExprField, FnField, VectorField};
pub use geometry::{BoundaryClass, BoundaryPoint, ImplicitDomain};
pub use kernel::{
    analytic_kernel_recirc, assemble_gain, kernel_residual, solve_kernel, AnalyticKernel, GainTable, KernelTable,
};
pub use scalar::Real;
pub use simulator::{
    control_u, epsilon_at, init_state, snapshot, step, verify_target, EnsembleState, EpsilonState, FieldSnapshot,
    LeafState, Mode,
};
pub use tri::TriMatrix;

pub type Domain64 = ImplicitDomain<f64>;
pub type Domain32 = ImplicitDomain<f32>;
pub type FlowConfig64 = FlowConfig<f64>;
pub type FlowConfig32 = FlowConfig<f32>;
pub type Leaf64 = Leaf<f64>;
pub type Leaf32 = Leaf<f32>;
pub type LeafSet64 = LeafSet<f64>;
pub type LeafSet32 = LeafSet<f32>;
pub type LeafCoefficients64 = LeafCoefficients<f64>;
pub type LeafCoefficients32 = LeafCoefficients<f32>;
pub type KernelTable64 = KernelTable<f64>;
pub type KernelTable32 = KernelTable<f32>;
pub type GainTable64 = GainTable<f64>;
pub type GainTable32 = GainTable<f32>;
pub type LeafState64 = LeafState<f64>;
pub type LeafState32 = LeafState<f32>;
pub type FieldSnapshot64 = FieldSnapshot<f64>;
pub type FieldSnapshot32 = FieldSnapshot<f32>;
