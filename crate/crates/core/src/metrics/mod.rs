//! Correlation metrics and the subsampling evaluation protocol.

pub(crate) mod correlation;
mod protocol;

pub use correlation::{
    average_ranks, correlate, exact_permutation_pvalue, pearson, permutation_pvalue, spearman, CorrelationReport,
    Statistic, DEFAULT_PERMUTATIONS,
};
pub use protocol::{run_protocol, subsample_size, EvalProtocol, ProtocolSummary, RepeatRow};
