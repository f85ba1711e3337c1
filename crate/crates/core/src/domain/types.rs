use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    Discrete,
    Continuous,
    AnswerSet,
}

impl fmt::Display for DomainKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DomainKind::Discrete => "discrete",
            DomainKind::Continuous => "continuous",
            DomainKind::AnswerSet => "answer-set",
        })
    }
}

/// Label domain of a prediction set. `cardinality` is only meaningful for
/// discrete labels and, when known, is at least 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelDomain {
    pub kind: DomainKind,
    pub cardinality: Option<usize>,
}

impl LabelDomain {
    pub const CONTINUOUS: LabelDomain = LabelDomain { kind: DomainKind::Continuous, cardinality: None };
    pub const ANSWER_SET: LabelDomain = LabelDomain { kind: DomainKind::AnswerSet, cardinality: None };
    pub const DISCRETE: LabelDomain = LabelDomain { kind: DomainKind::Discrete, cardinality: None };

    pub fn discrete(cardinality: usize) -> Result<Self> {
        let d = LabelDomain { kind: DomainKind::Discrete, cardinality: Some(cardinality) };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        match (self.kind, self.cardinality) {
            (DomainKind::Discrete, Some(t)) if t < 2 => {
                Err(Error::Config(format!("label cardinality must be at least 2, got {t}")))
            }
            (DomainKind::Discrete, _) | (_, None) => Ok(()),
            (kind, Some(_)) => Err(Error::Config(format!("{kind} domain does not take a cardinality"))),
        }
    }
}

/// One sampled prediction.
#[derive(Debug, Clone, PartialEq)]
pub enum Draw {
    Token(Arc<str>),
    Score(f64),
    Options(BTreeSet<String>),
}

impl Draw {
    pub fn token(s: &str) -> Self {
        Draw::Token(Arc::from(s))
    }

    pub fn options<I, S>(items: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Draw::Options(items.into_iter().map(Into::into).collect())
    }

    pub fn kind(&self) -> DomainKind {
        match self {
            Draw::Token(_) => DomainKind::Discrete,
            Draw::Score(_) => DomainKind::Continuous,
            Draw::Options(_) => DomainKind::AnswerSet,
        }
    }
}

/// Token normalization applied before exact-match comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Normalization {
    pub trim: bool,
    pub case_fold: bool,
}

impl Default for Normalization {
    fn default() -> Self {
        Normalization { trim: true, case_fold: false }
    }
}

impl Normalization {
    pub const NONE: Normalization = Normalization { trim: false, case_fold: false };

    pub fn apply(&self, s: &str) -> String {
        let s = if self.trim { s.trim() } else { s };
        if self.case_fold {
            s.to_lowercase()
        } else {
            s.to_owned()
        }
    }
}

/// Predictions of one model: `draw_count` draws for every sample, stored
/// row-major in sample order.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    model_id: String,
    domain: LabelDomain,
    sample_ids: Arc<[String]>,
    draw_count: usize,
    draws: Vec<Draw>,
}

impl PredictionSet {
    pub fn new(
        model_id: impl Into<String>,
        domain: LabelDomain,
        sample_ids: Arc<[String]>,
        draw_count: usize,
        draws: Vec<Draw>,
    ) -> Result<Self> {
        let model_id = model_id.into();
        domain.validate()?;
        if draw_count == 0 {
            return Err(Error::Structural(format!("model `{model_id}`: draw count must be positive")));
        }
        if draws.len() != sample_ids.len() * draw_count {
            return Err(Error::Structural(format!(
                "model `{model_id}`: expected {} draws ({} samples x {draw_count}), got {}",
                sample_ids.len() * draw_count,
                sample_ids.len(),
                draws.len()
            )));
        }
        let mut seen = HashSet::with_capacity(sample_ids.len());
        for id in sample_ids.iter() {
            if !seen.insert(id.as_str()) {
                return Err(Error::Structural(format!("model `{model_id}`: duplicate sample `{id}`")));
            }
        }
        for (k, d) in draws.iter().enumerate() {
            if d.kind() != domain.kind {
                return Err(Error::Domain {
                    kernel: format!("{} draw", d.kind()),
                    domain: format!("{} set `{model_id}` (sample `{}`)", domain.kind, sample_ids[k / draw_count]),
                });
            }
            if let Draw::Score(v) = d {
                if !v.is_finite() {
                    return Err(Error::Structural(format!(
                        "model `{model_id}`: non-finite score on sample `{}`",
                        sample_ids[k / draw_count]
                    )));
                }
            }
        }
        Ok(PredictionSet { model_id, domain, sample_ids, draw_count, draws })
    }

    /// Builds a set from `(sample_id, draws)` pairs, keeping the given sample order.
    pub fn from_entries<S: Into<String>>(
        model_id: impl Into<String>,
        domain: LabelDomain,
        entries: Vec<(S, Vec<Draw>)>,
    ) -> Result<Self> {
        let model_id = model_id.into();
        let draw_count = entries.first().map_or(1, |(_, d)| d.len());
        let mut ids = Vec::with_capacity(entries.len());
        let mut draws = Vec::with_capacity(entries.len() * draw_count);
        for (id, ds) in entries {
            let id = id.into();
            if ds.len() != draw_count {
                return Err(Error::Structural(format!(
                    "model `{model_id}`: sample `{id}` has {} draws, expected {draw_count}",
                    ds.len()
                )));
            }
            ids.push(id);
            draws.extend(ds);
        }
        Self::new(model_id, domain, ids.into(), draw_count, draws)
    }

    /// Single-draw discrete set, one token per sample, sample ids `s0, s1, ...`.
    pub fn discrete_tokens(model_id: impl Into<String>, tokens: &[&str]) -> Result<Self> {
        let entries = tokens
            .iter()
            .enumerate()
            .map(|(j, t)| (format!("s{j}"), vec![Draw::token(t)]))
            .collect();
        Self::from_entries(model_id, LabelDomain::DISCRETE, entries)
    }

    /// Single-draw continuous set, sample ids `s0, s1, ...`.
    pub fn scores(model_id: impl Into<String>, values: &[f64]) -> Result<Self> {
        let entries = values
            .iter()
            .enumerate()
            .map(|(j, v)| (format!("s{j}"), vec![Draw::Score(*v)]))
            .collect();
        Self::from_entries(model_id, LabelDomain::CONTINUOUS, entries)
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn domain(&self) -> LabelDomain {
        self.domain
    }

    pub fn sample_ids(&self) -> &Arc<[String]> {
        &self.sample_ids
    }

    pub fn len(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_ids.is_empty()
    }

    pub fn draw_count(&self) -> usize {
        self.draw_count
    }

    pub fn draws(&self, sample: usize) -> &[Draw] {
        let t = self.draw_count;
        &self.draws[sample * t..(sample + 1) * t]
    }

    pub fn with_model_id(mut self, model_id: impl Into<String>) -> Self {
        self.model_id = model_id.into();
        self
    }

    /// Keeps only the samples at `indices`, in that order.
    pub fn restrict(&self, indices: &[usize]) -> Result<Self> {
        let ids: Vec<String> = indices
            .iter()
            .map(|&j| {
                self.sample_ids
                    .get(j)
                    .cloned()
                    .ok_or(Error::IndexOutOfRange { index: j, len: self.len() })
            })
            .collect::<Result<_>>()?;
        let draws = indices.iter().flat_map(|&j| self.draws(j).iter().cloned()).collect();
        Self::new(self.model_id.clone(), self.domain, ids.into(), self.draw_count, draws)
    }
}

/// The sample universe with optional true labels and human annotator tracks.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub sample_ids: Arc<[String]>,
    pub labels: Option<PredictionSet>,
    pub human_annotations: Vec<PredictionSet>,
}

impl Dataset {
    pub fn new(
        sample_ids: Arc<[String]>,
        labels: Option<PredictionSet>,
        human_annotations: Vec<PredictionSet>,
    ) -> Result<Self> {
        let universe: HashSet<&str> = sample_ids.iter().map(String::as_str).collect();
        for set in labels.iter().chain(&human_annotations) {
            let covered: HashSet<&str> = set.sample_ids().iter().map(String::as_str).collect();
            if covered != universe {
                let missing = universe.difference(&covered).next().or(covered.difference(&universe).next());
                return Err(Error::Structural(format!(
                    "`{}` does not cover the dataset samples (first mismatch: `{}`)",
                    set.model_id(),
                    missing.unwrap_or(&"?")
                )));
            }
        }
        Ok(Dataset { sample_ids, labels, human_annotations })
    }
}

/// Per-model capability values aligned to a roster (B or an estimate of it).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct CapabilityVector<F> {
    roster: Vec<String>,
    values: Vec<F>,
}

impl<F: Scalar> CapabilityVector<F> {
    pub fn new(roster: Vec<String>, values: Vec<F>) -> Result<Self> {
        if roster.len() != values.len() {
            return Err(Error::Structural(format!(
                "roster has {} models but {} values were given",
                roster.len(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::DegenerateInput(format!("non-finite capability for `{}`", roster[i])));
        }
        Ok(CapabilityVector { roster, values })
    }

    pub fn roster(&self) -> &[String] {
        &self.roster
    }

    pub fn values(&self) -> &[F] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, model_id: &str) -> Option<F> {
        self.roster.iter().position(|m| m == model_id).map(|i| self.values[i])
    }

    /// Sub-vector at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        CapabilityVector {
            roster: indices.iter().map(|&i| self.roster[i].clone()).collect(),
            values: indices.iter().map(|&i| self.values[i]).collect(),
        }
    }

    /// Roster indices sorted by descending value; ties keep roster order.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| self.values[b].partial_cmp(&self.values[a]).unwrap_or(std::cmp::Ordering::Equal));
        idx
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_ragged_and_mistyped_sets() {
        let ids: Arc<[String]> = vec!["a".to_string(), "b".to_string()].into();
        let err = PredictionSet::new("m", LabelDomain::DISCRETE, ids.clone(), 2, vec![Draw::token("x")]);
        assert!(matches!(err, Err(Error::Structural(_))));
        let err = PredictionSet::new("m", LabelDomain::DISCRETE, ids.clone(), 1, vec![Draw::token("x"), Draw::Score(1.0)]);
        assert!(matches!(err, Err(Error::Domain { .. })));
        let err = PredictionSet::new("m", LabelDomain::CONTINUOUS, ids, 1, vec![Draw::Score(1.0), Draw::Score(f64::NAN)]);
        assert!(matches!(err, Err(Error::Structural(_))));
    }

    #[test]
    fn cardinality_below_two_is_rejected() {
        assert!(LabelDomain::discrete(1).is_err());
        assert!(LabelDomain::discrete(2).is_ok());
    }

    #[test]
    fn duplicate_samples_are_rejected() {
        let err = PredictionSet::from_entries(
            "m",
            LabelDomain::DISCRETE,
            vec![("a", vec![Draw::token("x")]), ("a", vec![Draw::token("y")])],
        );
        assert!(err.is_err());
    }

    #[test]
    fn normalization_trims_and_folds() {
        let n = Normalization { trim: true, case_fold: true };
        assert_eq!(n.apply("  \\Frac{1}{2} "), "\\frac{1}{2}");
        assert_eq!(Normalization::NONE.apply(" A "), " A ");
    }

    #[test]
    fn dataset_requires_label_coverage() {
        let labels = PredictionSet::discrete_tokens("__labels__", &["a", "b"]).unwrap();
        let ids: Arc<[String]> = vec!["s0".to_string(), "s1".to_string(), "s2".to_string()].into();
        assert!(Dataset::new(ids, Some(labels.clone()), vec![]).is_err());
        assert!(Dataset::new(labels.sample_ids().clone(), Some(labels), vec![]).is_ok());
    }

    #[test]
    fn capability_vector_rejects_nan() {
        assert!(CapabilityVector::new(vec!["a".into()], vec![f64::NAN]).is_err());
        let b = CapabilityVector::new(vec!["a".into(), "b".into(), "c".into()], vec![0.2, 0.9, 0.5]).unwrap();
        assert_eq!(b.ranking(), vec![1, 2, 0]);
        assert_eq!(b.get("c"), Some(0.5));
    }
}
