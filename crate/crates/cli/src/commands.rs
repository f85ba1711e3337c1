//! One function per subcommand. Each returns a JSON summary for stdout.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use mutcon::domain::records::write_jsonl;
use mutcon::metrics::ProtocolSummary;
use mutcon::synthlab::{verify_insights, verify_theorem, ReferencePolicy, SynthWorld, WorldBatch};
use mutcon::{Kernel, KernelKind};
use serde::Serialize;
use serde_json::{json, Value};

use crate::bundle::{digest_file, Bundle, Manifest};
use crate::config::{hash_of, RunConfig};
use crate::error::{CliError, Result};
use crate::evaluate::{compare_human_baseline, evaluate, protocol_sweep, Evaluation};
use crate::ingest::{ingest, Ingested};

fn csv_err(e: csv::Error) -> CliError {
    CliError::Io { path: "csv".into(), message: e.to_string() }
}

fn run_manifest(command: &str, cfg: &RunConfig, data: &Ingested) -> Result<Manifest> {
    let mut m = Manifest::new(command, &cfg.without_output(), cfg.hash());
    m.seeds.insert("permutation".into(), cfg.correlation.seed);
    if let Some(p) = cfg.protocol {
        m.seeds.insert("protocol".into(), p.seed);
    }
    m.inputs = cfg.inputs.iter().map(|p| digest_file(p)).collect::<Result<_>>()?;
    m.roster = data.predictions.iter().map(|p| p.model_id().to_owned()).collect();
    m.samples = data.dataset.sample_ids.len();
    Ok(m)
}

fn load(cfg: &RunConfig) -> Result<Ingested> {
    ingest(&cfg.inputs, cfg.normalization, cfg.include_humans)
}

#[derive(Serialize)]
struct ProtocolHeadline<'a> {
    estimator: mutcon::estimators::EstimatorKind,
    protocol: &'a mutcon::EvalProtocol,
    mean_rp: f64,
    std_rp: f64,
    mean_rs: f64,
    std_rs: f64,
    rows: String,
}

fn write_protocols(bundle: &mut Bundle, summaries: &[ProtocolSummary]) -> Result<()> {
    let mut headlines = Vec::new();
    for s in summaries {
        let rows = format!("protocol/{}_q{}.csv", s.estimator, s.protocol.q_sample);
        bundle.write_with(&rows, |out| Ok(s.write_csv(out)?))?;
        headlines.push(ProtocolHeadline {
            estimator: s.estimator,
            protocol: &s.protocol,
            mean_rp: s.mean_rp,
            std_rp: s.std_rp,
            mean_rs: s.mean_rs,
            std_rs: s.std_rs,
            rows,
        });
    }
    bundle.write_json("protocol/summary.json", &headlines)
}

fn write_capability(out: &mut dyn Write, roster: &[String], values: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["model", "value"]).map_err(csv_err)?;
    for (id, v) in roster.iter().zip(values) {
        w.write_record([id.clone(), v.to_string()]).map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::Io { path: "csv".into(), message: e.to_string() })
}

pub fn write_eval_bundle(dir: &Path, eval: &Evaluation, manifest: Manifest) -> Result<PathBuf> {
    let mut b = Bundle::create(dir)?;
    b.write_with("consistency.csv", |out| Ok(eval.consistency.write_csv(out)?))?;
    b.write_with("consistency_heatmap.csv", |out| Ok(eval.consistency.write_heatmap(out)?))?;
    if let Some(truth) = &eval.truth {
        b.write_with("capability.csv", |out| write_capability(out, truth.roster(), truth.values()))?;
    }
    if let Some(a) = &eval.affinity {
        b.write_with("affinity.csv", |out| Ok(a.write_csv(out)?))?;
        b.write_with("affinity_heatmap.csv", |out| Ok(a.write_heatmap(out)?))?;
    }
    b.write_with("estimates.csv", |out| {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["model".to_string()];
        header.extend(eval.estimates.iter().map(|e| e.estimator.to_string()));
        w.write_record(&header).map_err(csv_err)?;
        for (i, id) in eval.consistency.roster().iter().enumerate() {
            let mut row = vec![id.clone()];
            row.extend(eval.estimates.iter().map(|e| e.values[i].to_string()));
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush().map_err(|e| CliError::Io { path: "estimates.csv".into(), message: e.to_string() })
    })?;
    b.write_json("estimates.json", &eval.estimates)?;
    if let Some(poem) = &eval.poem {
        b.write_json("em_trajectory.json", poem)?;
    }
    if eval.truth.is_some() {
        b.write_json("correlations.json", &eval.correlations)?;
    }
    if !eval.protocols.is_empty() {
        write_protocols(&mut b, &eval.protocols)?;
    }
    b.finish(manifest)
}

pub fn run_eval(cfg: &RunConfig) -> Result<Value> {
    let dir = cfg.output_dir()?;
    let data = load(cfg)?;
    let eval = evaluate(cfg, &data)?;
    let manifest = run_manifest("eval", cfg, &data)?;
    write_eval_bundle(dir, &eval, manifest)?;
    Ok(json!({
        "bundle": dir.display().to_string(),
        "models": data.predictions.len(),
        "samples": data.dataset.sample_ids.len(),
        "kernel": eval.kernel.kind,
        "labels": eval.truth.is_some(),
        "estimators": eval.estimates.iter().map(|e| e.estimator).collect::<Vec<_>>(),
    }))
}

pub fn run_protocol(cfg: &RunConfig) -> Result<Value> {
    let dir = cfg.output_dir()?;
    let mut cfg = cfg.clone();
    cfg.protocol.get_or_insert_with(Default::default);
    let data = load(&cfg)?;
    let summaries = protocol_sweep(&cfg, &data, &cfg.estimator_kinds()?)?;
    let mut b = Bundle::create(dir)?;
    write_protocols(&mut b, &summaries)?;
    b.write_with("protocol/sweep.csv", |out| {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["estimator", "q_sample", "mean_rp", "std_rp", "mean_rs", "std_rs"]).map_err(csv_err)?;
        for s in &summaries {
            w.write_record([
                s.estimator.to_string(),
                s.protocol.q_sample.to_string(),
                s.mean_rp.to_string(),
                s.std_rp.to_string(),
                s.mean_rs.to_string(),
                s.std_rs.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| CliError::Io { path: "sweep.csv".into(), message: e.to_string() })
    })?;
    b.finish(run_manifest("protocol", &cfg, &data)?)?;
    Ok(json!({
        "bundle": dir.display().to_string(),
        "sweep": summaries.iter().map(|s| json!({
            "estimator": s.estimator,
            "q_sample": s.protocol.q_sample,
            "mean_rp": s.mean_rp,
            "mean_rs": s.mean_rs,
        })).collect::<Vec<_>>(),
    }))
}

pub const DEFAULT_HUMAN_GRID: [f64; 6] = [0.1, 0.2, 0.4, 0.6, 0.8, 1.0];

pub fn run_human_compare(cfg: &RunConfig) -> Result<Value> {
    let dir = cfg.output_dir()?;
    let mut cfg = cfg.clone();
    if cfg.q_sample_grid.is_empty() {
        cfg.q_sample_grid = DEFAULT_HUMAN_GRID.to_vec();
    }
    cfg.protocol.get_or_insert_with(Default::default);
    let data = load(&cfg)?;
    let rows = compare_human_baseline(&cfg, &data)?;
    let mut b = Bundle::create(dir)?;
    b.write_json("human_compare.json", &rows)?;
    b.write_with("human_compare.csv", |out| {
        let mut w = csv::Writer::from_writer(out);
        for r in &rows {
            w.serialize(r).map_err(csv_err)?;
        }
        w.flush().map_err(|e| CliError::Io { path: "human_compare.csv".into(), message: e.to_string() })
    })?;
    b.finish(run_manifest("human-compare", &cfg, &data)?)?;
    Ok(json!({ "bundle": dir.display().to_string(), "rows": rows }))
}

/// Generates a synthetic world and writes it as prediction records (labels
/// last), optionally with its expected capability vector.
pub fn run_synth(world: &SynthWorld, output: &Path, expected: Option<&Path>) -> Result<Value> {
    let g = world.generate()?;
    let file = File::create(output).map_err(CliError::io(output))?;
    write_jsonl(BufWriter::new(file), g.all_sets()).map_err(CliError::io(output))?;
    if let Some(path) = expected {
        let text = serde_json::to_string_pretty(&g.expected).expect("capability vector serializes") + "\n";
        std::fs::write(path, text).map_err(CliError::io(path))?;
    }
    Ok(json!({
        "output": output.display().to_string(),
        "models": g.predictions.len(),
        "samples": g.dataset.sample_ids.len(),
        "expected": g.expected,
    }))
}

#[derive(Debug, Clone, Serialize)]
pub struct TheoremRun {
    pub batch: WorldBatch,
    pub kernel: Kernel,
    pub reference: ReferencePolicy,
    pub gap: f64,
    pub insights: bool,
}

pub fn run_theorem(run: &TheoremRun, output: &Path) -> Result<Value> {
    let report = verify_theorem(&run.batch, run.kernel, run.reference, run.gap)?;
    let mut b = Bundle::create(output)?;
    b.write_json("theorem.json", &report)?;
    let insights = if run.insights {
        let r = verify_insights(&run.batch)?;
        b.write_json("insights.json", &r)?;
        Some(r)
    } else {
        None
    };
    let mut manifest = Manifest::new("theorem", run, hash_of(run));
    manifest.seeds.insert("base_seed".into(), run.batch.base_seed);
    b.finish(manifest)?;
    Ok(json!({
        "bundle": output.display().to_string(),
        "worlds": report.worlds,
        "pairs_scored": report.pairs_scored,
        "agreement_rate": report.agreement_rate,
        "mean_rs": report.mean_rs,
        "mean_ensemble_rs": report.mean_ensemble_rs,
        "insight_positive_fraction": insights.map(|r| r.positive_fraction),
    }))
}

/// Parses `best`, `index:<n>` or `external:<quality>`.
pub fn parse_reference(s: &str) -> Result<ReferencePolicy> {
    let bad = || CliError::Config(format!("unknown reference policy `{s}` (best, index:<n>, external:<quality>)"));
    match s.split_once(':') {
        None if s == "best" => Ok(ReferencePolicy::Best),
        Some(("index", n)) => n.parse().map(|index| ReferencePolicy::Index { index }).map_err(|_| bad()),
        Some(("external", q)) => q.parse().map(|quality| ReferencePolicy::External { quality }).map_err(|_| bad()),
        _ => Err(bad()),
    }
}

pub fn default_kernel(batch: &WorldBatch) -> Kernel {
    match batch.label_space {
        mutcon::synthlab::LabelSpace::Discrete { .. } => KernelKind::Discrete.into(),
        mutcon::synthlab::LabelSpace::Continuous => KernelKind::Abs.into(),
    }
}
