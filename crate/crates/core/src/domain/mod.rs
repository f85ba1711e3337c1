//! Prediction data model and the pairwise consistency kernels.

mod kernels;
pub mod records;
mod types;

pub use kernels::{cons_abs, cons_discrete, cons_f1, cons_pearson, Kernel, KernelKind};
pub use types::{
    CapabilityVector, Dataset, DomainKind, Draw, LabelDomain, Normalization, PredictionSet,
};
