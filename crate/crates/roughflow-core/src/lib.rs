//! Numerical laboratory for a singular divergence-free vector field whose
//! ODE flows are non-unique.
//!
//! The field is supported on two paraboloids meeting at the origin and
//! funnels every trajectory of the upper one into the singularity, after
//! which the trajectory may leave at any angle. This crate provides:
//!
//! - the field, its region geometry, and a smooth approximating family
//!   whose neck swirl selects the post-origin rotation ([`field`]);
//! - closed forms for every flow family, with residual and Jacobian
//!   self-checks, inverses, and transport evaluation ([`flow`]);
//! - measure-preserving circle maps classifying the post-origin
//!   continuations, with empirical push-forward tests ([`circle`]);
//! - adaptive ODE integration of particle ensembles ([`integrate`]);
//! - compression-constant and L¹ flow-distance estimators ([`measure`]);
//! - the scripted selection experiments and figure data ([`experiments`]).

// Validation guards use `!(x > 0.0)` so that NaN fails them too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod circle;
pub mod error;
pub mod experiments;
pub mod field;
pub mod flow;
pub mod geom;
pub mod integrate;
pub mod measure;
mod rng;

pub use circle::{
    build_flow_from_psi, cone_set_measure_check, extract_psi, extract_psi_from,
    is_measure_preserving, pushforward_histogram, CircleMap, Histogram, SAMPLED_GRID,
};
pub use error::{Error, Result};
pub use field::{
    classify, divergence_fd, eval_b, eval_b_smooth, Region, SmoothField, SmoothFieldParams,
};
pub use flow::{
    singular_time, transport_eval, write_trajectories_csv, Continuation, FlowSpec, Trajectory,
};
pub use geom::{Point3, Vector3};
pub use integrate::{
    integrate_ensemble, integrate_trajectory, Ensemble, IntegratorOpts, Method, ParticleFailure,
};
pub use measure::{
    append_distance_log, compression_constant, l1_flow_distance, MeasureReport, ParaboloidSlice,
    Sign,
};
