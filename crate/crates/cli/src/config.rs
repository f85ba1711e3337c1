use std::path::{Path, PathBuf};

use clap::Args;
use mutcon::estimators::{Comparison, EstimatorKind, EstimatorSettings, FilterConfig, PoemSettings};
use mutcon::{DomainKind, EvalProtocol, Kernel, KernelKind, Normalization};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorOptions {
    /// Filter threshold relative to the best ensemble score.
    pub p: f64,
    /// Use `>` instead of `>=` against the filter threshold.
    pub strict: bool,
    pub tol: f64,
    pub max_iters: usize,
    pub min_refs: usize,
    /// Reference model for the random-pick baseline.
    pub reference: usize,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        let poem = PoemSettings::<f64>::default();
        EstimatorOptions {
            p: FilterConfig::<f64>::default().p,
            strict: false,
            tol: poem.tol,
            max_iters: poem.max_iters,
            min_refs: poem.min_refs,
            reference: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrelationOptions {
    pub permutations: usize,
    pub seed: u64,
}

impl Default for CorrelationOptions {
    fn default() -> Self {
        CorrelationOptions { permutations: mutcon::metrics::DEFAULT_PERMUTATIONS, seed: 0 }
    }
}

/// Everything one run depends on. Loaded from TOML (or JSON) and then
/// overridden by command-line flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub inputs: Vec<PathBuf>,
    /// Consistency kernel; inferred from the prediction domain when absent.
    pub kernel: Option<KernelKind>,
    pub degenerate_as_zero: bool,
    /// Estimator names, or `all` for ensemble, calibrate, filter and poem.
    pub estimators: Vec<String>,
    pub estimator: EstimatorOptions,
    pub normalization: Normalization,
    /// Evaluate `__human_<k>__` tracks as ordinary models.
    pub include_humans: bool,
    /// Annotator used by `human-compare`.
    pub human: usize,
    pub correlation: CorrelationOptions,
    pub protocol: Option<EvalProtocol>,
    /// q_sample values swept by `protocol` and `human-compare`.
    pub q_sample_grid: Vec<f64>,
    pub output: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            inputs: Vec::new(),
            kernel: None,
            degenerate_as_zero: false,
            estimators: vec!["all".into()],
            estimator: EstimatorOptions::default(),
            normalization: Normalization::default(),
            include_humans: false,
            human: 0,
            correlation: CorrelationOptions::default(),
            protocol: None,
            q_sample_grid: Vec::new(),
            output: None,
        }
    }
}

/// Reads TOML, or JSON when the file name ends in `.json`.
pub fn load_structured<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    let bad = |message: String| CliError::Config(format!("{}: {message}", path.display()));
    if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| bad(e.to_string()))
    } else {
        toml::from_str(&text).map_err(|e| bad(e.to_string()))
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        load_structured(path)
    }

    pub fn estimator_kinds(&self) -> Result<Vec<EstimatorKind>> {
        let mut kinds = Vec::new();
        for name in &self.estimators {
            let expanded = if name == "all" {
                EstimatorKind::STANDARD.to_vec()
            } else {
                vec![name.parse::<EstimatorKind>()?]
            };
            for k in expanded {
                if !kinds.contains(&k) {
                    kinds.push(k);
                }
            }
        }
        if kinds.is_empty() {
            return Err(CliError::Config("select at least one estimator".into()));
        }
        Ok(kinds)
    }

    pub fn settings(&self) -> Result<EstimatorSettings<f64>> {
        let o = &self.estimator;
        let filter = FilterConfig {
            p: o.p,
            comparison: if o.strict { Comparison::StrictGt } else { Comparison::Geq },
        };
        filter.validate()?;
        if !(o.tol > 0.0) {
            return Err(CliError::Config(format!("tol must be positive, got {}", o.tol)));
        }
        Ok(EstimatorSettings {
            filter,
            poem: PoemSettings { tol: o.tol, max_iters: o.max_iters, min_refs: o.min_refs },
            reference: o.reference,
        })
    }

    /// The configured kernel, or the natural kernel of `domain`.
    pub fn kernel_for(&self, domain: DomainKind) -> Kernel {
        let kind = self.kernel.unwrap_or(match domain {
            DomainKind::Discrete => KernelKind::Discrete,
            DomainKind::Continuous => KernelKind::Pearson,
            DomainKind::AnswerSet => KernelKind::F1,
        });
        Kernel { kind, degenerate_as_zero: self.degenerate_as_zero }
    }

    pub fn q_grid(&self) -> Vec<f64> {
        if !self.q_sample_grid.is_empty() {
            self.q_sample_grid.clone()
        } else {
            vec![self.protocol.unwrap_or_default().q_sample]
        }
    }

    pub fn output_dir(&self) -> Result<&Path> {
        self.output.as_deref().ok_or_else(|| CliError::Config("no output directory given (--output)".into()))
    }

    /// SHA-256 of the configuration without its output location, so the
    /// same run written to two places hashes the same.
    pub fn hash(&self) -> String {
        hash_of(&self.without_output())
    }

    pub fn without_output(&self) -> RunConfig {
        RunConfig { output: None, ..self.clone() }
    }
}

pub fn hash_of<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("configuration serializes");
    format!("{:x}", Sha256::digest(bytes))
}

/// Flags shared by `eval`, `protocol` and `human-compare`; each one
/// overrides the matching config-file entry.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// TOML (or .json) run configuration.
    #[arg(long, short = 'c')]
    pub config: Option<PathBuf>,
    /// Prediction file (JSONL); repeatable.
    #[arg(long = "input", short = 'i')]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub kernel: Option<KernelKind>,
    /// Estimator name or `all`; repeatable.
    #[arg(long = "estimator", short = 'e')]
    pub estimators: Vec<String>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub strict: bool,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub min_refs: Option<usize>,
    #[arg(long)]
    pub reference: Option<usize>,
    #[arg(long)]
    pub include_humans: bool,
    #[arg(long)]
    pub human: Option<usize>,
    #[arg(long)]
    pub case_fold: bool,
    #[arg(long)]
    pub no_trim: bool,
    #[arg(long)]
    pub permutations: Option<usize>,
    #[arg(long)]
    pub permutation_seed: Option<u64>,
    #[arg(long)]
    pub q_model: Option<f64>,
    #[arg(long)]
    pub q_sample: Option<f64>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated q_sample values.
    #[arg(long, value_delimiter = ',')]
    pub q_sample_grid: Vec<f64>,
    #[arg(long, short = 'o')]
    pub output: Option<PathBuf>,
}

impl RunArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if !self.inputs.is_empty() {
            cfg.inputs = self.inputs.clone();
        }
        if self.kernel.is_some() {
            cfg.kernel = self.kernel;
        }
        if !self.estimators.is_empty() {
            cfg.estimators = self.estimators.clone();
        }
        let o = &mut cfg.estimator;
        o.p = self.p.unwrap_or(o.p);
        o.strict |= self.strict;
        o.tol = self.tol.unwrap_or(o.tol);
        o.max_iters = self.max_iters.unwrap_or(o.max_iters);
        o.min_refs = self.min_refs.unwrap_or(o.min_refs);
        o.reference = self.reference.unwrap_or(o.reference);
        cfg.include_humans |= self.include_humans;
        cfg.human = self.human.unwrap_or(cfg.human);
        cfg.normalization.case_fold |= self.case_fold;
        if self.no_trim {
            cfg.normalization.trim = false;
        }
        cfg.correlation.permutations = self.permutations.unwrap_or(cfg.correlation.permutations);
        cfg.correlation.seed = self.permutation_seed.unwrap_or(cfg.correlation.seed);
        if self.q_model.is_some() || self.q_sample.is_some() || self.repeats.is_some() || self.seed.is_some() {
            let p = cfg.protocol.get_or_insert_with(EvalProtocol::default);
            p.q_model = self.q_model.unwrap_or(p.q_model);
            p.q_sample = self.q_sample.unwrap_or(p.q_sample);
            p.repeats = self.repeats.unwrap_or(p.repeats);
            p.seed = self.seed.unwrap_or(p.seed);
        }
        if !self.q_sample_grid.is_empty() {
            cfg.q_sample_grid = self.q_sample_grid.clone();
        }
        if self.output.is_some() {
            cfg.output = self.output.clone();
        }
        if cfg.inputs.is_empty() {
            return Err(CliError::Config("no prediction files given (--input or `inputs`)".into()));
        }
        cfg.estimator_kinds()?;
        cfg.settings()?;
        Ok(cfg)
    }
}
