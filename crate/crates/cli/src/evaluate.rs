//! Library composition behind `eval`, `protocol` and `human-compare`.

use mutcon::domain::records::human_model_id;
use mutcon::estimators::{
    estimate, estimate_calibrated, estimate_filtered, estimate_poem, EstimatorKind, EstimatorSettings, PoemOutcome,
};
use mutcon::matrices::build_consistency_matrix_on;
use mutcon::metrics::{run_protocol, ProtocolSummary};
use mutcon::{
    build_affinity_matrix, build_consistency_matrix, correlate, pearson, spearman, true_capability, AffinityMatrix,
    CapabilityVector, ConsistencyMatrix, CorrelationReport, Kernel, PredictionSet,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::ingest::Ingested;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateEntry {
    pub estimator: EstimatorKind,
    pub roster: Vec<String>,
    pub values: Vec<f64>,
    /// Surviving reference models (filter, poem).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_set: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibration_iterations: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationEntry {
    pub estimator: EstimatorKind,
    #[serde(flatten)]
    pub report: CorrelationReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub kernel: Kernel,
    pub consistency: ConsistencyMatrix<f64>,
    pub truth: Option<CapabilityVector<f64>>,
    pub affinity: Option<AffinityMatrix<f64>>,
    pub estimates: Vec<EstimateEntry>,
    pub poem: Option<PoemOutcome<f64>>,
    pub correlations: Vec<CorrelationEntry>,
    pub protocols: Vec<ProtocolSummary>,
}

fn names(c: &ConsistencyMatrix<f64>, idx: &[usize]) -> Vec<String> {
    idx.iter().map(|&i| c.roster()[i].clone()).collect()
}

fn entry(
    kind: EstimatorKind,
    c: &ConsistencyMatrix<f64>,
    settings: &EstimatorSettings<f64>,
    poem: &mut Option<PoemOutcome<f64>>,
) -> Result<EstimateEntry> {
    let (est, reference_set, calibration_iterations) = match kind {
        EstimatorKind::Calibrate => {
            let (b, state) = estimate_calibrated(c, settings.poem.tol, settings.poem.max_iters)?;
            (b, None, Some(state.iteration))
        }
        EstimatorKind::Filter => {
            let (b, refs) = estimate_filtered(c, settings.filter)?;
            (b, Some(names(c, &refs)), None)
        }
        EstimatorKind::Poem => {
            let out = estimate_poem(c, settings.poem)?;
            let refs = names(c, &out.selected_state().ref_set);
            let b = out.estimate.clone();
            *poem = Some(out);
            (b, Some(refs), None)
        }
        _ => (estimate(kind, c, settings)?, None, None),
    };
    Ok(EstimateEntry {
        estimator: kind,
        roster: est.roster().to_vec(),
        values: est.values().to_vec(),
        reference_set,
        calibration_iterations,
    })
}

pub fn kernel_of(cfg: &RunConfig, data: &Ingested) -> Kernel {
    cfg.kernel_for(data.domain())
}

pub fn evaluate(cfg: &RunConfig, data: &Ingested) -> Result<Evaluation> {
    let kernel = kernel_of(cfg, data);
    let kinds = cfg.estimator_kinds()?;
    let settings = cfg.settings()?;
    let consistency = build_consistency_matrix::<f64>(&data.predictions, kernel)?;
    let labels = data.dataset.labels.as_ref();
    let truth = labels.map(|l| true_capability::<f64>(&data.predictions, l, kernel)).transpose()?;
    let affinity = match &truth {
        Some(b) if kernel.kind.is_nonnegative() => Some(build_affinity_matrix(&consistency, b)?),
        _ => None,
    };

    let mut poem = None;
    let estimates =
        kinds.iter().map(|&k| entry(k, &consistency, &settings, &mut poem)).collect::<Result<Vec<_>>>()?;
    let correlations = match &truth {
        Some(b) => estimates
            .iter()
            .map(|e| {
                let report = correlate(&e.values, b.values(), cfg.correlation.permutations, cfg.correlation.seed)?;
                Ok(CorrelationEntry { estimator: e.estimator, report })
            })
            .collect::<Result<Vec<_>>>()?,
        None => Vec::new(),
    };
    let protocols = if cfg.protocol.is_some() { protocol_sweep(cfg, data, &kinds)? } else { Vec::new() };
    Ok(Evaluation { kernel, consistency, truth, affinity, estimates, poem, correlations, protocols })
}

/// One protocol run per estimator and q_sample value.
pub fn protocol_sweep(cfg: &RunConfig, data: &Ingested, kinds: &[EstimatorKind]) -> Result<Vec<ProtocolSummary>> {
    let labels = data
        .dataset
        .labels
        .as_ref()
        .ok_or_else(|| CliError::Config("the evaluation protocol needs `__labels__` records".into()))?;
    let kernel = kernel_of(cfg, data);
    let settings = cfg.settings()?;
    let base = cfg.protocol.unwrap_or_default();
    let mut out = Vec::new();
    for &kind in kinds {
        for q in cfg.q_grid() {
            let protocol = mutcon::EvalProtocol { q_sample: q, ..base };
            out.push(run_protocol(&data.predictions, labels, kernel, kind, &settings, &protocol)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HumanCompareRow {
    pub q_sample: f64,
    pub method: String,
    pub mean_rp: f64,
    pub std_rp: f64,
    pub mean_rs: f64,
    pub std_rs: f64,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

pub const HUMAN_BASELINE: &str = "human_reference";

/// Human-as-reference baseline against PoEM over the roster plus the
/// annotator, scored on the non-human models for every q_sample value.
pub fn compare_human_baseline(cfg: &RunConfig, data: &Ingested) -> Result<Vec<HumanCompareRow>> {
    let labels = data
        .dataset
        .labels
        .as_ref()
        .ok_or_else(|| CliError::Config("human-compare needs `__labels__` records".into()))?;
    let human_id = human_model_id(cfg.human);
    let human = data
        .dataset
        .human_annotations
        .iter()
        .find(|h| h.model_id() == human_id)
        .ok_or_else(|| CliError::Config(format!("no annotator track `{human_id}` in the input")))?;
    let models: Vec<&PredictionSet> =
        data.predictions.iter().filter(|p| !data.humans_in_roster.iter().any(|h| h == p.model_id())).collect();
    let kernel = kernel_of(cfg, data);
    let settings = cfg.settings()?;
    let base = cfg.protocol.unwrap_or_default();
    base.validate(models.len())?;

    let mut rows = Vec::new();
    for q in cfg.q_grid() {
        let protocol = mutcon::EvalProtocol { q_sample: q, ..base };
        protocol.validate(models.len())?;
        let scores = (0..protocol.repeats)
            .into_par_iter()
            .map(|repeat| {
                let (chosen, samples) = protocol.draw(repeat, models.len(), labels.len());
                let m = chosen.len();
                let mut sets = vec![labels];
                sets.extend(chosen.iter().map(|&i| models[i]));
                sets.push(human);
                let full = build_consistency_matrix_on::<f64>(&sets, kernel, Some(&samples))?;
                let truth = &full.row(0)[1..=m];
                let baseline: Vec<f64> = (1..=m).map(|i| full.get(i, m + 1)).collect();
                let roster: Vec<usize> = (1..=m + 1).collect();
                let poem = estimate_poem(&full.submatrix(&roster), settings.poem)?;
                let est = &poem.estimate.values()[..m];
                let fail = |e: mutcon::Error| CliError::Core(mutcon::Error::Protocol(format!("repeat {repeat}: {e}")));
                Ok([
                    pearson(&baseline, truth).map_err(fail)?,
                    spearman(&baseline, truth).map_err(fail)?,
                    pearson(est, truth).map_err(fail)?,
                    spearman(est, truth).map_err(fail)?,
                ])
            })
            .collect::<Result<Vec<[f64; 4]>>>()?;
        for (method, offset) in [(HUMAN_BASELINE, 0), ("poem", 2)] {
            let rp: Vec<f64> = scores.iter().map(|s| s[offset]).collect();
            let rs: Vec<f64> = scores.iter().map(|s| s[offset + 1]).collect();
            let (mean_rp, std_rp) = mean_std(&rp);
            let (mean_rs, std_rs) = mean_std(&rs);
            rows.push(HumanCompareRow { q_sample: q, method: method.into(), mean_rp, std_rp, mean_rs, std_rs });
        }
    }
    Ok(rows)
}
