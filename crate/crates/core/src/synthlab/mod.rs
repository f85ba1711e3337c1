//! Synthetic worlds with known ground truth: discrete sigma/lambda label
//! models, additive Gaussian score models, and injected error dependence.

mod verify;
mod world;

pub use verify::{
    compare_estimators, verify_insights, verify_theorem, EstimatorComparison, InsightReport, InsightStats,
    em_objective_increasing, ReferencePolicy, SigmaSampler, TheoremReport, WorldBatch,
};
pub use world::{
    Coupling, GeneratedWorld, LabelSpace, Sigma, SynthContinuousModel, SynthDiscreteModel, SynthModel, SynthWorld,
};
