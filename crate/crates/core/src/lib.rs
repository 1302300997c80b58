//! Ridge regression with an L2-SP transfer penalty: exact finite-sample risks,
//! deterministic-equivalent asymptotics, phase boundaries for when a source
//! fit helps a target task, and the source penalty that helps most.

pub mod det_equiv;
pub mod error;
pub mod estimators;
pub mod finite_risk;
pub mod linalg;
pub mod source_opt;
pub mod stats;
pub mod task;
pub mod validation;

pub use det_equiv::{
    asymptotic_boundary, isotropic_a, isotropic_asymptotic_boundary, solve_delta, t_functional, DeContext,
    FixedPoint, Resolvent,
};
pub use error::{Error, Result};
pub use estimators::{fit_scratch, fit_source, fit_transfer, target_risk, EstimatorKind, FittedModel};
pub use finite_risk::{
    conditional_risk_terms, finite_boundary, isotropic_ridgeless_boundary, mc_expected_risk, mc_terms,
    BoundaryVerdict, Criterion, Penalties, RiskReport, RiskTerms,
};
pub use linalg::{Mat, SpdMatrix, Vector};
pub use source_opt::{optimize_source, AlignmentRegime, Regime, SourceOptResult};
pub use stats::RunningStats;
pub use task::{
    make_isotropic_pair, sample_design, Covariance, DesignSample, EntryLaw, PairSpec, TaskPair,
};
