use std::io::Write;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::correlation::{pearson, spearman};
use crate::domain::{Kernel, PredictionSet};
use crate::error::{Error, Result};
use crate::estimators::{estimate, EstimatorKind, EstimatorSettings};
use crate::matrices::{build_consistency_matrix_on, ConsistencyMatrix};
use crate::scalar::Scalar;

/// Repeated model/sample subsampling used to score an estimator against B.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalProtocol {
    pub q_model: f64,
    pub q_sample: f64,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for EvalProtocol {
    fn default() -> Self {
        EvalProtocol { q_model: 0.7, q_sample: 1.0, repeats: 500, seed: 0 }
    }
}

/// `ceil(q * n)`, ignoring float noise such as `0.7 * 10 = 7.000000000000001`.
pub fn subsample_size(q: f64, n: usize) -> usize {
    ((q * n as f64) - 1e-9).ceil().max(1.0) as usize
}

impl EvalProtocol {
    pub fn validate(&self, models: usize) -> Result<()> {
        for (name, q) in [("q_model", self.q_model), ("q_sample", self.q_sample)] {
            if !(q > 0.0 && q <= 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1], got {q}")));
            }
        }
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be positive".into()));
        }
        let m = subsample_size(self.q_model, models);
        if m < 3 {
            return Err(Error::Protocol(format!(
                "q_model = {} keeps {m} of {models} models; correlations need at least 3",
                self.q_model
            )));
        }
        Ok(())
    }

    /// RNG for one repeat; depends only on `(seed, repeat)`.
    fn rng(&self, repeat: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(repeat as u64);
        rng
    }

    /// Sorted model and sample indices for one repeat. Samples are a prefix of
    /// a seeded shuffle, so draws at different `q_sample` are nested.
    pub fn draw(&self, repeat: usize, models: usize, samples: usize) -> (Vec<usize>, Vec<usize>) {
        let mut rng = self.rng(repeat);
        let mut m = index::sample(&mut rng, models, subsample_size(self.q_model, models)).into_vec();
        m.sort_unstable();
        let mut order: Vec<usize> = (0..samples).collect();
        order.shuffle(&mut rng);
        let mut s = order[..subsample_size(self.q_sample, samples)].to_vec();
        s.sort_unstable();
        (m, s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatRow {
    pub repeat: usize,
    pub models: usize,
    pub samples: usize,
    pub r_p: f64,
    pub r_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolSummary {
    pub estimator: EstimatorKind,
    pub protocol: EvalProtocol,
    pub mean_rp: f64,
    pub mean_rs: f64,
    pub std_rp: f64,
    pub std_rs: f64,
    pub rows: Vec<RepeatRow>,
}

impl ProtocolSummary {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| Error::Structural(format!("csv output failed: {e}"));
        for row in &self.rows {
            w.serialize(row).map_err(err)?;
        }
        w.flush().map_err(|e| Error::Structural(format!("csv output failed: {e}")))
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Correlation of one estimate against B. The random-pick baseline is
/// averaged over every choice of reference model.
fn score<F: Scalar>(
    c: &ConsistencyMatrix<F>,
    truth: &[F],
    kind: EstimatorKind,
    settings: &EstimatorSettings<F>,
) -> Result<(f64, f64)> {
    let refs: Vec<usize> = match kind {
        EstimatorKind::RandomPick => (0..c.len()).collect(),
        _ => vec![settings.reference],
    };
    let (mut rp, mut rs) = (0.0, 0.0);
    for &r in &refs {
        let s = EstimatorSettings { reference: r, ..*settings };
        let est = estimate(kind, c, &s)?;
        rp += pearson(est.values(), truth)?.to_f64_lossy();
        rs += spearman(est.values(), truth)?.to_f64_lossy();
    }
    Ok((rp / refs.len() as f64, rs / refs.len() as f64))
}

pub fn run_protocol<F: Scalar>(
    preds: &[PredictionSet],
    labels: &PredictionSet,
    kernel: Kernel,
    estimator: EstimatorKind,
    settings: &EstimatorSettings<F>,
    protocol: &EvalProtocol,
) -> Result<ProtocolSummary> {
    protocol.validate(preds.len())?;
    let n = labels.len();
    if n == 0 {
        return Err(Error::Protocol("no samples".into()));
    }
    let rows = (0..protocol.repeats)
        .into_par_iter()
        .map(|repeat| {
            let (models, samples) = protocol.draw(repeat, preds.len(), n);
            let chosen: Vec<&PredictionSet> = models.iter().map(|&i| &preds[i]).collect();
            // Sample indices are in label order; put labels first so the
            // subset is translated into each model's own order.
            let mut with_labels = vec![labels];
            with_labels.extend(&chosen);
            let c_full: ConsistencyMatrix<F> = build_consistency_matrix_on(&with_labels, kernel, Some(&samples))?;
            let idx: Vec<usize> = (1..with_labels.len()).collect();
            let c = c_full.submatrix(&idx);
            let truth: Vec<F> = c_full.row(0)[1..].to_vec();
            let (r_p, r_s) = score(&c, &truth, estimator, settings)
                .map_err(|e| Error::Protocol(format!("repeat {repeat}: {e}")))?;
            Ok(RepeatRow { repeat, models: models.len(), samples: samples.len(), r_p, r_s })
        })
        .collect::<Result<Vec<_>>>()?;
    let rp: Vec<f64> = rows.iter().map(|r| r.r_p).collect();
    let rs: Vec<f64> = rows.iter().map(|r| r.r_s).collect();
    let (mean_rp, std_rp) = mean_std(&rp);
    let (mean_rs, std_rs) = mean_std(&rs);
    Ok(ProtocolSummary { estimator, protocol: *protocol, mean_rp, mean_rs, std_rp, std_rs, rows })
}
