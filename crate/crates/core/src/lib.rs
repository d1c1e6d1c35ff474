//! Phase-diversity wavefront retrieval by line-search optimization over
//! complex variables.

pub mod error;
pub mod experiment;
pub mod field;
pub mod forward;
pub mod hessian;
pub mod objective;
pub mod optim;
pub mod problems;

pub use error::{Error, Result};
pub use field::{aligned_rms, hadamard, inner, ComplexField, RealField, Shape};
pub use forward::{DiversityPlan, PlaneSpec, PupilGrid};
pub use objective::{MeasurementSet, Model, PhaseObjective};
pub use optim::{Method, RunTrace, SolverConfig};
