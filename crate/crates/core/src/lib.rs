//! Label-free evaluation of model collections from their mutual consistency.
//!
//! Prediction sets are compared pairwise with a task kernel to form a
//! consistency matrix; estimators turn that matrix into a capability vector
//! whose ranking approximates the ranking against true labels.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the common choices.

mod error;
mod scalar;

pub mod domain;
pub mod estimators;
pub mod matrices;
pub mod metrics;
pub mod synthlab;

pub use domain::{
    cons_abs, cons_discrete, cons_f1, cons_pearson, CapabilityVector, Dataset, DomainKind, Draw, Kernel, KernelKind,
    LabelDomain, Normalization, PredictionSet,
};
pub use error::{Error, Result};
pub use estimators::{
    estimate, estimate_calibrated, estimate_ensemble, estimate_filtered, estimate_poem, estimate_random_pick,
    EstimatorKind, EstimatorSettings, FilterConfig, PoemOutcome, PoemSettings,
};
pub use matrices::{
    build_affinity_matrix, build_affinity_matrix_with, build_consistency_matrix, true_capability, AffinityMatrix,
    AffinityOptions, ConsistencyMatrix,
};
pub use metrics::{correlate, pearson, spearman, CorrelationReport, EvalProtocol};
pub use scalar::Scalar;

pub type ConsistencyMatrixF64 = ConsistencyMatrix<f64>;
pub type ConsistencyMatrixF32 = ConsistencyMatrix<f32>;
pub type AffinityMatrixF64 = AffinityMatrix<f64>;
pub type CapabilityVectorF64 = CapabilityVector<f64>;
pub type CapabilityVectorF32 = CapabilityVector<f32>;
pub type EmStateF64 = estimators::EmState<f64>;
pub type PoemOutcomeF64 = PoemOutcome<f64>;
