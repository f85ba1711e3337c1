use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::domain::records::LABELS_MODEL_ID;
use crate::domain::{CapabilityVector, Dataset, Draw, LabelDomain, PredictionSet};
use crate::error::{Error, Result};

/// Probability of predicting the true label, either shared by all samples
/// or given per sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Sigma {
    Scalar(f64),
    PerSample(Vec<f64>),
}

impl Sigma {
    fn at(&self, j: usize) -> f64 {
        match self {
            Sigma::Scalar(s) => *s,
            Sigma::PerSample(v) => v[j],
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Sigma::Scalar(s) => *s,
            Sigma::PerSample(v) => v.iter().sum::<f64>() / v.len() as f64,
        }
    }
}

fn one() -> usize {
    1
}

/// Discrete label model: correct with probability sigma, otherwise the
/// wrong label `(y + 1 + t) mod T` with probability `lambda[t]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthDiscreteModel {
    #[serde(default)]
    pub id: Option<String>,
    pub sigma: Sigma,
    /// Distribution over the T - 1 wrong labels; uniform when absent.
    #[serde(default)]
    pub lambda: Option<Vec<f64>>,
    #[serde(default = "one")]
    pub draws: usize,
}

impl SynthDiscreteModel {
    pub fn new(sigma: f64) -> Self {
        SynthDiscreteModel { id: None, sigma: Sigma::Scalar(sigma), lambda: None, draws: 1 }
    }

    pub fn lambda_or_uniform(&self, cardinality: usize) -> Vec<f64> {
        self.lambda.clone().unwrap_or_else(|| vec![1.0 / (cardinality - 1) as f64; cardinality - 1])
    }
}

/// Score model `y + g` with `g ~ N(0, noise_scale^2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthContinuousModel {
    #[serde(default)]
    pub id: Option<String>,
    pub noise_scale: f64,
    #[serde(default = "one")]
    pub draws: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SynthModel {
    Discrete(SynthDiscreteModel),
    Continuous(SynthContinuousModel),
}

impl SynthModel {
    fn id(&self) -> Option<&str> {
        match self {
            SynthModel::Discrete(m) => m.id.as_deref(),
            SynthModel::Continuous(m) => m.id.as_deref(),
        }
    }

    fn draws(&self) -> usize {
        match self {
            SynthModel::Discrete(m) => m.draws,
            SynthModel::Continuous(m) => m.draws,
        }
    }
}

/// `target` reuses `source`'s error with probability `rho`. Discrete: when
/// both are wrong on a draw, the target copies the source's wrong label.
/// Continuous: the target's noise is the source's noise rescaled to the
/// target's scale. Marginal accuracy of the target is unchanged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub source: usize,
    pub target: usize,
    pub rho: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LabelSpace {
    /// Labels uniform over `cardinality` values.
    Discrete { cardinality: usize },
    /// Labels drawn from N(0, 1).
    Continuous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthWorld {
    pub n_samples: usize,
    #[serde(default)]
    pub seed: u64,
    pub label_space: LabelSpace,
    pub models: Vec<SynthModel>,
    #[serde(default)]
    pub dependence: Vec<Coupling>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedWorld {
    pub dataset: Dataset,
    pub predictions: Vec<PredictionSet>,
    /// Analytic expectation of B: mean sigma (discrete, exact-match kernel)
    /// or `-noise_scale * sqrt(2 / pi)` (continuous, absolute-error kernel).
    pub expected: CapabilityVector<f64>,
}

impl GeneratedWorld {
    pub fn labels(&self) -> &PredictionSet {
        self.dataset.labels.as_ref().expect("generated worlds carry labels")
    }
}

impl SynthWorld {
    /// Discrete world with scalar sigmas and uniform wrong-label profiles.
    pub fn discrete(n_samples: usize, cardinality: usize, sigmas: &[f64], seed: u64) -> Self {
        SynthWorld {
            n_samples,
            seed,
            label_space: LabelSpace::Discrete { cardinality },
            models: sigmas.iter().map(|&s| SynthModel::Discrete(SynthDiscreteModel::new(s))).collect(),
            dependence: Vec::new(),
        }
    }

    pub fn continuous(n_samples: usize, noise_scales: &[f64], seed: u64) -> Self {
        SynthWorld {
            n_samples,
            seed,
            label_space: LabelSpace::Continuous,
            models: noise_scales
                .iter()
                .map(|&s| SynthModel::Continuous(SynthContinuousModel { id: None, noise_scale: s, draws: 1 }))
                .collect(),
            dependence: Vec::new(),
        }
    }

    pub fn with_coupling(mut self, source: usize, target: usize, rho: f64) -> Self {
        self.dependence.push(Coupling { source, target, rho });
        self
    }

    pub fn model_ids(&self) -> Vec<String> {
        self.models
            .iter()
            .enumerate()
            .map(|(i, m)| m.id().map_or_else(|| format!("model_{i:02}"), str::to_owned))
            .collect()
    }

    pub fn expected_capability(&self) -> Vec<f64> {
        let scale = (2.0 / std::f64::consts::PI).sqrt();
        self.models
            .iter()
            .map(|m| match m {
                SynthModel::Discrete(d) => d.sigma.mean(),
                SynthModel::Continuous(c) => -c.noise_scale * scale,
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |msg: String| Err(Error::Config(msg));
        if self.n_samples == 0 {
            return cfg("world needs at least one sample".into());
        }
        if self.models.is_empty() {
            return cfg("world needs at least one model".into());
        }
        for (i, m) in self.models.iter().enumerate() {
            if m.draws() == 0 {
                return cfg(format!("model {i}: draws must be positive"));
            }
            match (m, self.label_space) {
                (SynthModel::Discrete(d), LabelSpace::Discrete { cardinality }) => {
                    if cardinality < 2 {
                        return cfg(format!("cardinality must be at least 2, got {cardinality}"));
                    }
                    let sig: Vec<f64> = match &d.sigma {
                        Sigma::Scalar(s) => vec![*s],
                        Sigma::PerSample(v) if v.len() == self.n_samples => v.clone(),
                        Sigma::PerSample(v) => {
                            return cfg(format!("model {i}: {} per-sample sigmas for {} samples", v.len(), self.n_samples))
                        }
                    };
                    if sig.iter().any(|s| !(0.0..=1.0).contains(s)) {
                        return cfg(format!("model {i}: sigma must lie in [0, 1]"));
                    }
                    let lambda = d.lambda_or_uniform(cardinality);
                    if lambda.len() != cardinality - 1 || lambda.iter().any(|&l| !(l >= 0.0)) {
                        return cfg(format!("model {i}: lambda needs {} nonnegative entries", cardinality - 1));
                    }
                    if (lambda.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                        return cfg(format!("model {i}: lambda must sum to 1"));
                    }
                }
                (SynthModel::Continuous(c), LabelSpace::Continuous) => {
                    if !(c.noise_scale > 0.0 && c.noise_scale.is_finite()) {
                        return cfg(format!("model {i}: noise_scale must be positive and finite"));
                    }
                }
                _ => return cfg(format!("model {i} does not match the world's label space")),
            }
        }
        for c in &self.dependence {
            if c.source == c.target {
                return cfg(format!("model {} cannot be coupled to itself", c.source));
            }
            if c.source >= self.models.len() || c.target >= self.models.len() {
                return cfg(format!("coupling ({}, {}) refers to a missing model", c.source, c.target));
            }
            if !(0.0..=1.0).contains(&c.rho) {
                return cfg(format!("coupling rho must lie in [0, 1], got {}", c.rho));
            }
        }
        self.generation_order().map(|_| ())
    }

    /// Models ordered so every coupling source precedes its target.
    fn generation_order(&self) -> Result<Vec<usize>> {
        let l = self.models.len();
        let mut indegree = vec![0usize; l];
        for c in &self.dependence {
            indegree[c.target] += 1;
        }
        let mut order = Vec::with_capacity(l);
        let mut done = vec![false; l];
        while order.len() < l {
            let next = (0..l).find(|&i| !done[i] && indegree[i] == 0).ok_or_else(|| {
                Error::Config("coupling graph has a cycle".into())
            })?;
            done[next] = true;
            order.push(next);
            for c in self.dependence.iter().filter(|c| c.source == next) {
                indegree[c.target] -= 1;
            }
        }
        Ok(order)
    }

    pub fn generate(&self) -> Result<GeneratedWorld> {
        self.validate()?;
        let n = self.n_samples;
        let ids: Arc<[String]> = (0..n).map(|j| format!("s{j:05}")).collect::<Vec<_>>().into();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let order = self.generation_order()?;
        let names = self.model_ids();

        let (labels, predictions) = match self.label_space {
            LabelSpace::Discrete { cardinality } => self.generate_discrete(cardinality, &order, &mut rng, &ids, &names)?,
            LabelSpace::Continuous => self.generate_continuous(&order, &mut rng, &ids, &names)?,
        };
        Ok(GeneratedWorld {
            dataset: Dataset::new(ids, Some(labels), Vec::new())?,
            predictions,
            expected: CapabilityVector::new(names, self.expected_capability())?,
        })
    }

    fn generate_discrete(
        &self,
        t: usize,
        order: &[usize],
        rng: &mut ChaCha8Rng,
        ids: &Arc<[String]>,
        names: &[String],
    ) -> Result<(PredictionSet, Vec<PredictionSet>)> {
        let n = self.n_samples;
        let tokens: Vec<Arc<str>> = (0..t).map(|v| Arc::from(v.to_string())).collect();
        let truth: Vec<usize> = (0..n).map(|_| rng.random_range(0..t)).collect();
        // drawn[i][j * draws + k] = label index.
        let mut drawn: Vec<Vec<usize>> = vec![Vec::new(); self.models.len()];
        for &i in order {
            let SynthModel::Discrete(m) = &self.models[i] else { unreachable!("validated") };
            let cumulative: Vec<f64> = m
                .lambda_or_uniform(t)
                .iter()
                .scan(0.0, |acc, &l| {
                    *acc += l;
                    Some(*acc)
                })
                .collect();
            let sources: Vec<(usize, f64)> =
                self.dependence.iter().filter(|c| c.target == i).map(|c| (c.source, c.rho)).collect();
            let mut out = Vec::with_capacity(n * m.draws);
            for (j, &y) in truth.iter().enumerate() {
                for k in 0..m.draws {
                    if rng.random::<f64>() < m.sigma.at(j) {
                        out.push(y);
                        continue;
                    }
                    let mut label = None;
                    for &(src, rho) in &sources {
                        let sd = self.models[src].draws();
                        let theirs = drawn[src][j * sd + k % sd];
                        if theirs != y && rng.random::<f64>() < rho {
                            label = Some(theirs);
                            break;
                        }
                    }
                    let label = label.unwrap_or_else(|| {
                        let u: f64 = rng.random();
                        let offset = cumulative.iter().position(|&c| u < c).unwrap_or(t - 2);
                        (y + 1 + offset) % t
                    });
                    out.push(label);
                }
            }
            drawn[i] = out;
        }
        let domain = LabelDomain::discrete(t)?;
        let to_set = |name: &str, labels: &[usize], draws: usize| {
            let ds = labels.iter().map(|&v| Draw::Token(tokens[v].clone())).collect();
            PredictionSet::new(name, domain, ids.clone(), draws, ds)
        };
        let labels = to_set(LABELS_MODEL_ID, &truth, 1)?;
        let preds = self
            .models
            .iter()
            .enumerate()
            .map(|(i, m)| to_set(&names[i], &drawn[i], m.draws()))
            .collect::<Result<Vec<_>>>()?;
        Ok((labels, preds))
    }

    fn generate_continuous(
        &self,
        order: &[usize],
        rng: &mut ChaCha8Rng,
        ids: &Arc<[String]>,
        names: &[String],
    ) -> Result<(PredictionSet, Vec<PredictionSet>)> {
        let n = self.n_samples;
        let truth: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        let scale = |i: usize| match &self.models[i] {
            SynthModel::Continuous(c) => c.noise_scale,
            SynthModel::Discrete(_) => unreachable!("validated"),
        };
        let mut noise: Vec<Vec<f64>> = vec![Vec::new(); self.models.len()];
        for &i in order {
            let draws = self.models[i].draws();
            let normal = Normal::new(0.0, scale(i)).map_err(|e| Error::Config(e.to_string()))?;
            let sources: Vec<(usize, f64)> =
                self.dependence.iter().filter(|c| c.target == i).map(|c| (c.source, c.rho)).collect();
            let mut out = Vec::with_capacity(n * draws);
            for j in 0..n {
                for k in 0..draws {
                    let mut g = None;
                    for &(src, rho) in &sources {
                        if rng.random::<f64>() < rho {
                            let sd = self.models[src].draws();
                            g = Some(noise[src][j * sd + k % sd] * scale(i) / scale(src));
                            break;
                        }
                    }
                    out.push(g.unwrap_or_else(|| normal.sample(rng)));
                }
            }
            noise[i] = out;
        }
        let labels = PredictionSet::new(
            LABELS_MODEL_ID,
            LabelDomain::CONTINUOUS,
            ids.clone(),
            1,
            truth.iter().map(|&y| Draw::Score(y)).collect(),
        )?;
        let preds = self
            .models
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let d = m.draws();
                let draws = noise[i].iter().enumerate().map(|(k, g)| Draw::Score(truth[k / d] + g)).collect();
                PredictionSet::new(names[i].clone(), LabelDomain::CONTINUOUS, ids.clone(), d, draws)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((labels, preds))
    }
}
