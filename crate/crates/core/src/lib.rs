//! Numerical laboratory for approximate *-homomorphisms out of
//! finite-dimensional C*-algebras.
//!
//! The crate measures how far a map `F → M_N` is from being a
//! *-homomorphism and runs a stabilization pipeline (Haar averaging on the
//! unitary group, unitarization, irreducible decomposition, matrix-unit
//! correction, intertwining) that returns an exact *-homomorphism close to
//! the input.

pub mod algebra;
pub mod averaging;
pub mod defect;
pub mod error;
pub mod json;
pub mod linalg;
pub mod perturb;
pub mod pipeline;
pub mod rep;
pub mod synthesis;

mod clock;
mod par;

pub use algebra::{four_unitaries, AlgebraElement, AlgebraShape, HaarSampler};
pub use averaging::{average_once, schedule, stabilize, GroupMap, IterationSchedule, LevelTrace};
pub use defect::{estimate_defect, normalize, ApproxMap, DefectReport};
pub use error::{Result, UlamError};
pub use linalg::{CMat, C64};
pub use perturb::{
    discretize, exact_homomorphism, perturb_additive, perturb_conjugate, EmbeddingSpec,
};
pub use pipeline::{compute_budget, run_pipeline, PipelineBudget, PipelineConfig, PipelineReport};
pub use rep::{
    decompose, lift_projection, stone_generator, unitarize, BlockDecomposition, Unitarizer,
};
pub use synthesis::{
    intertwiner, matrix_unit_correction, near_inclusion_fix, MatrixUnitSystem, Subalgebra,
};
