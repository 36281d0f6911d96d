//! Linear open quantum harmonic oscillator networks: state-space
//! realization, interconnection, partially isolated subsystems, deviation
//! dynamics of the isolated variables, decoherence-time estimates, and
//! direct-coupling optimization.
//!
//! Conventions: `n` system variables are ordered in conjugate pairs
//! `(q1, p1, q2, p2, ...)`; matrices are dense, real, `f64`.

pub mod decoherence;
pub mod error;
pub mod isolation;
pub mod moments;
pub mod numerics;
pub mod oqho;
pub mod optimizer;

pub use decoherence::{
    approx_decoherence_time, decoherence_time, epsilon_sweep, fit_log_slope, tail_bound,
    CrossingOptions, DecoherenceReport, SweepResult, Tau,
};
pub use error::{Error, ErrorClass, Result};
pub use isolation::{
    isolation_basis, isolation_from_rows, isolation_rank, transfer_eval, IsolationDecomposition,
    TransferEval,
};
pub use moments::{
    deviation_spec, deviation_trajectory, short_horizon, DeviationSpec, DeviationTrajectory,
    ShortHorizon,
};
pub use numerics::{ComplexPair, HermitianPair, RealMatrix, RealVector};
pub use oqho::{
    compose, field_mediated_energy, interconnection_blocks, realize, validate_selector,
    CcrStructure, Interconnection, InterconnectionSpec, OqhoParams, StateSpace,
};
pub use optimizer::{
    apply_g, assemble_g, compute_k, gain_scale_from_objective, CouplingProblem,
    OptimizationResult, OptimizerBlocks,
};
