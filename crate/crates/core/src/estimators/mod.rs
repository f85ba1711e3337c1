//! Capability estimators mapping a consistency matrix to an estimated B.

mod calibrate;
mod poem;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use calibrate::{
    estimate_calibrated, CalibrationState, CalibrationStep, Calibrator, DEFAULT_MAX_ITERS, DEFAULT_TOL,
};
pub use poem::{estimate_poem, EmState, PoemOutcome, PoemSettings, Termination};

use crate::domain::CapabilityVector;
use crate::error::{Error, Result};
use crate::matrices::ConsistencyMatrix;
use crate::scalar::{mean, Scalar};

/// Baseline: use a single model's consistency column as the estimate.
pub fn estimate_random_pick<F: Scalar>(c: &ConsistencyMatrix<F>, reference: usize) -> Result<CapabilityVector<F>> {
    if reference >= c.len() {
        return Err(Error::IndexOutOfRange { index: reference, len: c.len() });
    }
    CapabilityVector::new(c.roster().to_vec(), c.column(reference))
}

/// Row means of C, diagonal included.
pub fn estimate_ensemble<F: Scalar>(c: &ConsistencyMatrix<F>) -> Result<CapabilityVector<F>> {
    if c.len() < 2 {
        return Err(Error::Config("ensemble needs at least 2 models".into()));
    }
    let values = c.rows().iter().map(|r| mean(r).expect("non-empty row")).collect();
    CapabilityVector::new(c.roster().to_vec(), values)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    /// Keep models whose ensemble score is strictly above the threshold.
    StrictGt,
    #[default]
    Geq,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct FilterConfig<F> {
    /// Fraction of the best ensemble score a reference must reach.
    pub p: F,
    #[serde(default)]
    pub comparison: Comparison,
}

impl<F: Scalar> Default for FilterConfig<F> {
    fn default() -> Self {
        FilterConfig { p: F::of(0.9), comparison: Comparison::Geq }
    }
}

impl<F: Scalar> FilterConfig<F> {
    pub fn validate(&self) -> Result<()> {
        if self.p > F::zero() && self.p <= F::one() {
            Ok(())
        } else {
            Err(Error::Config(format!("filter threshold p must lie in (0, 1], got {}", self.p)))
        }
    }
}

/// Reference set of models whose ensemble score clears `p * max`.
/// Under `geq` the maxima always survive, even when `max` is negative.
pub fn reference_set<F: Scalar>(ensemble: &[F], cfg: &FilterConfig<F>) -> Vec<usize> {
    let best = ensemble.iter().copied().fold(F::neg_infinity(), F::max);
    let threshold = best * cfg.p;
    (0..ensemble.len())
        .filter(|&i| match cfg.comparison {
            Comparison::Geq => ensemble[i] >= threshold || ensemble[i] == best,
            Comparison::StrictGt => ensemble[i] > threshold,
        })
        .collect()
}

/// Averages every model's consistency over the surviving reference columns.
pub fn estimate_filtered<F: Scalar>(
    c: &ConsistencyMatrix<F>,
    cfg: FilterConfig<F>,
) -> Result<(CapabilityVector<F>, Vec<usize>)> {
    cfg.validate()?;
    let ens = estimate_ensemble(c)?;
    let refs = reference_set(ens.values(), &cfg);
    if refs.is_empty() {
        return Err(Error::EmptyReferenceSet);
    }
    let values = (0..c.len())
        .map(|i| refs.iter().map(|&j| c.get(i, j)).sum::<F>() / F::of_usize(refs.len()))
        .collect();
    Ok((CapabilityVector::new(c.roster().to_vec(), values)?, refs))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    RandomPick,
    Ensemble,
    Calibrate,
    Filter,
    Poem,
}

impl EstimatorKind {
    /// The label-free estimators in report order.
    pub const STANDARD: [EstimatorKind; 4] =
        [EstimatorKind::Ensemble, EstimatorKind::Calibrate, EstimatorKind::Filter, EstimatorKind::Poem];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::RandomPick => "random_pick",
            EstimatorKind::Ensemble => "ensemble",
            EstimatorKind::Calibrate => "calibrate",
            EstimatorKind::Filter => "filter",
            EstimatorKind::Poem => "poem",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "random_pick" => Ok(EstimatorKind::RandomPick),
            "ensemble" => Ok(EstimatorKind::Ensemble),
            "calibrate" => Ok(EstimatorKind::Calibrate),
            "filter" => Ok(EstimatorKind::Filter),
            "poem" => Ok(EstimatorKind::Poem),
            _ => Err(Error::Config(format!("unknown estimator `{s}`"))),
        }
    }
}

/// Knobs shared by all estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct EstimatorSettings<F> {
    pub filter: FilterConfig<F>,
    pub poem: PoemSettings<F>,
    /// Reference model index for the random-pick baseline.
    pub reference: usize,
}

impl<F: Scalar> Default for EstimatorSettings<F> {
    fn default() -> Self {
        EstimatorSettings { filter: FilterConfig::default(), poem: PoemSettings::default(), reference: 0 }
    }
}

pub fn estimate<F: Scalar>(
    kind: EstimatorKind,
    c: &ConsistencyMatrix<F>,
    settings: &EstimatorSettings<F>,
) -> Result<CapabilityVector<F>> {
    match kind {
        EstimatorKind::RandomPick => estimate_random_pick(c, settings.reference),
        EstimatorKind::Ensemble => estimate_ensemble(c),
        EstimatorKind::Calibrate => {
            estimate_calibrated(c, settings.poem.tol, settings.poem.max_iters).map(|(b, _)| b)
        }
        EstimatorKind::Filter => estimate_filtered(c, settings.filter).map(|(b, _)| b),
        EstimatorKind::Poem => estimate_poem(c, settings.poem).map(|o| o.estimate),
    }
}
