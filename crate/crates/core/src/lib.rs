//! Deterministic pooled-testing designs with NNLAD decoding.
//!
//! * [`design`] builds the circulant-block pooling matrix and its recovery
//!   certificate; [`budget`] sizes designs and compares test counts.
//! * [`nnlad`] solves `min_{z >= 0} ||A z - y||_1`; [`lp`] holds the exact
//!   simplex used as its reference.
//! * [`decode`] turns estimates or raw readouts into infection calls.
//! * [`simulation`] runs the recovery phase diagram.
//! * [`formats`] and [`heatmap`] read and write the interchange files.

pub mod budget;
pub mod decode;
pub mod design;
pub mod formats;
pub mod heatmap;
pub mod lp;
pub mod matrix;
pub mod nnlad;
pub mod simulation;

pub use budget::{budget_disjunct_bound, budget_dorfman, dorfman_optimum, plan_for_population, BudgetError};
pub use decode::{classify_disjunct, classify_nnlad, noise_tolerance, InfectionCall, ThresholdPolicy};
pub use design::{
    certificate, construct_design, max_column_coherence, pinv_one_norm, verify_disjunct, DesignCertificate,
    DesignError, DesignParams, PoolingDesign,
};
pub use matrix::{BinaryMatrix, CscMatrix};
pub use nnlad::{lp_form, solve_nnlad, solve_nnlad_exact, NnladProblem, NnladSolution, SolveStatus, SolverOptions};
pub use simulation::{
    corrupt_readout, draw_signal, region_check, run_phase_diagram, CorruptionKind, CorruptionModel, PhaseConfig,
    PhaseDiagram, SignalModel,
};
