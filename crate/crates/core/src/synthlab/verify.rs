use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::world::{Coupling, GeneratedWorld, LabelSpace, SynthContinuousModel, SynthDiscreteModel, SynthModel, SynthWorld};
use crate::domain::{Kernel, PredictionSet};
use crate::error::{Error, Result};
use crate::estimators::{estimate, estimate_ensemble, estimate_poem, EstimatorKind, EstimatorSettings, PoemOutcome};
use crate::matrices::{build_affinity_matrix_with, build_consistency_matrix, true_capability, AffinityOptions};
use crate::metrics::{pearson, spearman};

/// Per-world model quality: sigma for discrete worlds, noise scale for
/// continuous ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SigmaSampler {
    /// The same values in every world, in the given order.
    Grid { values: Vec<f64> },
    /// `count` values drawn uniformly from `[low, high]` per world, ordered
    /// from the weakest model to the strongest.
    Uniform { count: usize, low: f64, high: f64 },
}

fn one() -> usize {
    1
}

/// A family of seeded worlds sharing one shape. Coupling indices refer to
/// positions in the quality order, so with a uniform sampler model 0 is
/// always the weakest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldBatch {
    pub worlds: usize,
    #[serde(default)]
    pub base_seed: u64,
    pub n_samples: usize,
    pub label_space: LabelSpace,
    pub quality: SigmaSampler,
    #[serde(default = "one")]
    pub draws: usize,
    #[serde(default)]
    pub dependence: Vec<Coupling>,
}

impl WorldBatch {
    pub fn discrete(worlds: usize, n_samples: usize, cardinality: usize, quality: SigmaSampler) -> Self {
        WorldBatch {
            worlds,
            base_seed: 0,
            n_samples,
            label_space: LabelSpace::Discrete { cardinality },
            quality,
            draws: 1,
            dependence: Vec::new(),
        }
    }

    pub fn with_seed(mut self, base_seed: u64) -> Self {
        self.base_seed = base_seed;
        self
    }

    pub fn with_coupling(mut self, source: usize, target: usize, rho: f64) -> Self {
        self.dependence.push(Coupling { source, target, rho });
        self
    }

    pub fn seed(&self, world: usize) -> u64 {
        self.base_seed.wrapping_add(world as u64)
    }

    fn qualities(&self, seed: u64) -> Result<Vec<f64>> {
        match &self.quality {
            SigmaSampler::Grid { values } => Ok(values.clone()),
            SigmaSampler::Uniform { count, low, high } => {
                if !(low <= high) {
                    return Err(Error::Config(format!("empty quality range [{low}, {high}]")));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(1);
                let mut v: Vec<f64> = (0..*count).map(|_| rng.random_range(*low..=*high)).collect();
                match self.label_space {
                    LabelSpace::Discrete { .. } => v.sort_by(f64::total_cmp),
                    LabelSpace::Continuous => v.sort_by(|a, b| b.total_cmp(a)),
                }
                Ok(v)
            }
        }
    }

    /// The `k`-th world of the batch.
    pub fn world(&self, k: usize) -> Result<SynthWorld> {
        let seed = self.seed(k);
        let models = self
            .qualities(seed)?
            .into_iter()
            .map(|q| match self.label_space {
                LabelSpace::Discrete { .. } => {
                    SynthModel::Discrete(SynthDiscreteModel { draws: self.draws, ..SynthDiscreteModel::new(q) })
                }
                LabelSpace::Continuous => {
                    SynthModel::Continuous(SynthContinuousModel { id: None, noise_scale: q, draws: self.draws })
                }
            })
            .collect();
        let world = SynthWorld {
            n_samples: self.n_samples,
            seed,
            label_space: self.label_space,
            models,
            dependence: self.dependence.clone(),
        };
        world.validate()?;
        Ok(world)
    }

    /// Runs `f` on every world in parallel, results in world order.
    fn map_worlds<T: Send>(&self, f: impl Fn(usize, SynthWorld) -> Result<T> + Sync) -> Result<Vec<T>> {
        (0..self.worlds).into_par_iter().map(|k| f(k, self.world(k)?)).collect()
    }
}

/// Which model serves as the label surrogate in [`verify_theorem`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReferencePolicy {
    /// The model with the highest expected capability; it is not scored.
    Best,
    /// A fixed world model; it is not scored.
    Index { index: usize },
    /// An extra independent model of the given quality appended to each
    /// world; all world models are scored.
    External { quality: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub worlds: usize,
    pub gap: f64,
    /// Model pairs whose true capability gap reached `gap`.
    pub pairs_scored: usize,
    /// Share of scored pairs ordered the same way by consistency with the
    /// reference and by true capability; consistency ties count one half.
    pub agreement_rate: f64,
    /// Per world r_s between reference consistency and true capability.
    pub rs: Vec<Option<f64>>,
    pub mean_rs: Option<f64>,
    /// Per world r_s between the ensemble estimate and true capability.
    pub ensemble_rs: Vec<Option<f64>>,
    pub mean_ensemble_rs: Option<f64>,
    /// Worlds where a correlation was undefined.
    pub degenerate_worlds: Vec<usize>,
}

fn mean_defined(v: &[Option<f64>]) -> Option<f64> {
    let defined: Vec<f64> = v.iter().flatten().copied().collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}

struct TheoremWorld {
    pairs: usize,
    agreement: f64,
    rs: Option<f64>,
    ensemble_rs: Option<f64>,
}

fn external_model(space: LabelSpace, quality: f64) -> SynthModel {
    match space {
        LabelSpace::Discrete { .. } => SynthModel::Discrete(SynthDiscreteModel {
            id: Some("reference".into()),
            ..SynthDiscreteModel::new(quality)
        }),
        LabelSpace::Continuous => {
            SynthModel::Continuous(SynthContinuousModel { id: Some("reference".into()), noise_scale: quality, draws: 1 })
        }
    }
}

/// Checks that consistency with a reference orders models like their true
/// capability, across a batch of worlds.
pub fn verify_theorem(batch: &WorldBatch, kernel: Kernel, policy: ReferencePolicy, gap: f64) -> Result<TheoremReport> {
    let per_world = batch.map_worlds(|_, mut world| {
        let l = world.models.len();
        if let ReferencePolicy::External { quality } = policy {
            world.models.push(external_model(world.label_space, quality));
        }
        let generated = world.generate()?;
        let labels = generated.labels();
        let all = &generated.predictions;
        let (reference, scored): (usize, Vec<usize>) = match policy {
            ReferencePolicy::External { .. } => (l, (0..l).collect()),
            ReferencePolicy::Best | ReferencePolicy::Index { .. } => {
                let r = match policy {
                    ReferencePolicy::Index { index } if index < l => index,
                    ReferencePolicy::Index { index } => return Err(Error::IndexOutOfRange { index, len: l }),
                    _ => {
                        let e = generated.expected.values();
                        (0..l).fold(0, |best, i| if e[i] > e[best] { i } else { best })
                    }
                };
                (r, (0..l).filter(|&i| i != r).collect())
            }
        };
        let truth = true_capability::<f64>(&all[..l], labels, kernel)?;
        let b = truth.values();
        let cons = scored.iter().map(|&i| kernel.eval::<f64>(&all[i], &all[reference])).collect::<Result<Vec<_>>>()?;
        let b_scored: Vec<f64> = scored.iter().map(|&i| b[i]).collect();

        let (mut pairs, mut agreement) = (0, 0.0);
        for x in 0..scored.len() {
            for y in x + 1..scored.len() {
                let db = b_scored[x] - b_scored[y];
                if db.abs() < gap {
                    continue;
                }
                pairs += 1;
                let dc = cons[x] - cons[y];
                agreement += if dc == 0.0 {
                    0.5
                } else if (dc > 0.0) == (db > 0.0) {
                    1.0
                } else {
                    0.0
                };
            }
        }
        let c = build_consistency_matrix::<f64>(&all[..l], kernel)?;
        let ens = estimate_ensemble(&c)?;
        Ok(TheoremWorld {
            pairs,
            agreement,
            rs: spearman(&cons, &b_scored).ok(),
            ensemble_rs: spearman(ens.values(), b).ok(),
        })
    })?;

    let pairs_scored = per_world.iter().map(|w| w.pairs).sum();
    let agreement: f64 = per_world.iter().map(|w| w.agreement).sum();
    let rs: Vec<Option<f64>> = per_world.iter().map(|w| w.rs).collect();
    let ensemble_rs: Vec<Option<f64>> = per_world.iter().map(|w| w.ensemble_rs).collect();
    Ok(TheoremReport {
        worlds: batch.worlds,
        gap,
        pairs_scored,
        agreement_rate: if pairs_scored == 0 { f64::NAN } else { agreement / pairs_scored as f64 },
        mean_rs: mean_defined(&rs),
        mean_ensemble_rs: mean_defined(&ensemble_rs),
        degenerate_worlds: per_world
            .iter()
            .enumerate()
            .filter(|(_, w)| w.rs.is_none() || w.ensemble_rs.is_none())
            .map(|(k, _)| k)
            .collect(),
        rs,
        ensemble_rs,
    })
}

/// The three diagnostic correlations of one world. Diagonal entries of C
/// and A are left out of every statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InsightStats {
    /// r_p(mean_j C_ij, B_i).
    pub consistency_vs_capability: Option<f64>,
    /// r_p over i of (r_p(C_i., B), B_i).
    pub row_alignment_vs_capability: Option<f64>,
    /// r_p(mean_j |A_ij|, -B_i).
    pub affinity_vs_weakness: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InsightReport {
    pub worlds: Vec<InsightStats>,
    /// Share of worlds where each statistic is defined and positive.
    pub positive_fraction: [f64; 3],
    pub mean: [Option<f64>; 3],
}

fn off_diagonal(row: &[f64], i: usize) -> Vec<f64> {
    row.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &v)| v).collect()
}

pub(crate) fn insight_stats(c: &crate::matrices::ConsistencyMatrix<f64>, b: &crate::domain::CapabilityVector<f64>) -> InsightStats {
    let l = c.len();
    let bv = b.values();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let row_means: Vec<f64> = (0..l).map(|i| mean(&off_diagonal(c.row(i), i))).collect();
    let first = pearson(&row_means, bv).ok();

    let aligned: Option<Vec<f64>> =
        (0..l).map(|i| pearson(&off_diagonal(c.row(i), i), &off_diagonal(bv, i)).ok()).collect();
    let second = aligned.and_then(|a| pearson(&a, bv).ok());

    let third = build_affinity_matrix_with(c, b, AffinityOptions { include_diagonal: false }).ok().and_then(|a| {
        let spread: Vec<f64> =
            (0..l).map(|i| off_diagonal(a.row(i), i).iter().map(|v| v.abs()).sum::<f64>() / (l - 1) as f64).collect();
        let weakness: Vec<f64> = bv.iter().map(|v| -v).collect();
        pearson(&spread, &weakness).ok()
    });
    InsightStats { consistency_vs_capability: first, row_alignment_vs_capability: second, affinity_vs_weakness: third }
}

/// Computes the three insight statistics for every world of the batch with
/// the exact-match kernel (discrete) or absolute-error kernel (continuous).
pub fn verify_insights(batch: &WorldBatch) -> Result<InsightReport> {
    let kernel = default_kernel(batch.label_space);
    let worlds = batch.map_worlds(|_, world| {
        let g = world.generate()?;
        let c = build_consistency_matrix::<f64>(&g.predictions, kernel)?;
        let b = true_capability::<f64>(&g.predictions, g.labels(), kernel)?;
        Ok(insight_stats(&c, &b))
    })?;
    let pick = |s: &InsightStats, k: usize| match k {
        0 => s.consistency_vs_capability,
        1 => s.row_alignment_vs_capability,
        _ => s.affinity_vs_weakness,
    };
    let n = worlds.len().max(1) as f64;
    let positive_fraction =
        [0, 1, 2].map(|k| worlds.iter().filter(|s| pick(s, k).is_some_and(|v| v > 0.0)).count() as f64 / n);
    let mean = [0, 1, 2].map(|k| mean_defined(&worlds.iter().map(|s| pick(s, k)).collect::<Vec<_>>()));
    Ok(InsightReport { worlds, positive_fraction, mean })
}

pub(crate) fn default_kernel(space: LabelSpace) -> Kernel {
    match space {
        LabelSpace::Discrete { .. } => crate::domain::KernelKind::Discrete.into(),
        LabelSpace::Continuous => crate::domain::KernelKind::Abs.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorComparison {
    pub estimators: Vec<EstimatorKind>,
    /// `rs[e][w]`: r_s of estimator `e` against true capability in world `w`.
    pub rs: Vec<Vec<Option<f64>>>,
    pub rp: Vec<Vec<Option<f64>>>,
    pub mean_rs: Vec<Option<f64>>,
    pub mean_rp: Vec<Option<f64>>,
    /// Worlds whose EM objective was not strictly increasing up to the
    /// selected state (only tracked when PoEM is compared).
    pub non_monotone_worlds: Vec<usize>,
}

/// Scores each estimator against true capability in every world.
pub fn compare_estimators(
    batch: &WorldBatch,
    kernel: Kernel,
    kinds: &[EstimatorKind],
    settings: &EstimatorSettings<f64>,
) -> Result<EstimatorComparison> {
    let per_world = batch.map_worlds(|_, world| {
        let g = world.generate()?;
        let c = build_consistency_matrix::<f64>(&g.predictions, kernel)?;
        let b = true_capability::<f64>(&g.predictions, g.labels(), kernel)?;
        let mut monotone = true;
        let scores: Vec<(Option<f64>, Option<f64>)> = kinds
            .iter()
            .map(|&kind| {
                let est = if kind == EstimatorKind::Poem {
                    estimate_poem(&c, settings.poem).map(|o| {
                        monotone &= em_objective_increasing(&o);
                        o.estimate
                    })
                } else {
                    estimate(kind, &c, settings)
                };
                match est {
                    Ok(e) => (spearman(e.values(), b.values()).ok(), pearson(e.values(), b.values()).ok()),
                    Err(_) => (None, None),
                }
            })
            .collect();
        Ok((scores, monotone))
    })?;
    let rs: Vec<Vec<Option<f64>>> = (0..kinds.len()).map(|e| per_world.iter().map(|w| w.0[e].0).collect()).collect();
    let rp: Vec<Vec<Option<f64>>> = (0..kinds.len()).map(|e| per_world.iter().map(|w| w.0[e].1).collect()).collect();
    Ok(EstimatorComparison {
        estimators: kinds.to_vec(),
        mean_rs: rs.iter().map(|v| mean_defined(v)).collect(),
        mean_rp: rp.iter().map(|v| mean_defined(v)).collect(),
        rs,
        rp,
        non_monotone_worlds: per_world.iter().enumerate().filter(|(_, w)| !w.1).map(|(k, _)| k).collect(),
    })
}

/// True when the objective strictly increases over states `0..=selected`.
pub fn em_objective_increasing(outcome: &PoemOutcome<f64>) -> bool {
    outcome.trajectory[..=outcome.selected].windows(2).all(|w| w[1].objective > w[0].objective)
}

impl GeneratedWorld {
    /// Predictions followed by the labels, ready for the prediction file format.
    pub fn all_sets(&self) -> Vec<&PredictionSet> {
        self.predictions.iter().chain(self.dataset.labels.iter()).collect()
    }
}
