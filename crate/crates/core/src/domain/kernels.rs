use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::types::{DomainKind, Draw, PredictionSet};
use crate::error::{Error, Result};
use crate::metrics::correlation::pearson_r;
use crate::scalar::Scalar;

/// Which consistency function to apply between two prediction sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    /// Mean exact-match rate over all draw pairs.
    Discrete,
    /// Pearson correlation of per-sample mean scores.
    Pearson,
    /// Negative mean absolute difference of per-sample mean scores.
    Abs,
    /// Mean set-F1 over all draw pairs.
    F1,
}

impl KernelKind {
    pub const ALL: [KernelKind; 4] = [KernelKind::Discrete, KernelKind::Pearson, KernelKind::Abs, KernelKind::F1];

    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Discrete => "discrete",
            KernelKind::Pearson => "pearson",
            KernelKind::Abs => "abs",
            KernelKind::F1 => "f1",
        }
    }

    pub fn domain(self) -> DomainKind {
        match self {
            KernelKind::Discrete => DomainKind::Discrete,
            KernelKind::Pearson | KernelKind::Abs => DomainKind::Continuous,
            KernelKind::F1 => DomainKind::AnswerSet,
        }
    }

    /// Kernels whose values live in [0, 1].
    pub fn is_nonnegative(self) -> bool {
        matches!(self, KernelKind::Discrete | KernelKind::F1)
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        KernelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown kernel `{s}` (expected discrete, pearson, abs or f1)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Kernel {
    pub kind: KernelKind,
    /// Map a constant score vector to 0 instead of failing (Pearson only).
    #[serde(default)]
    pub degenerate_as_zero: bool,
}

impl From<KernelKind> for Kernel {
    fn from(kind: KernelKind) -> Self {
        Kernel { kind, degenerate_as_zero: false }
    }
}

impl Kernel {
    pub fn eval<F: Scalar>(&self, a: &PredictionSet, b: &PredictionSet) -> Result<F> {
        self.eval_on(a, b, None)
    }

    /// Evaluates the kernel on a subset of samples, given as indices into
    /// `a`'s sample order.
    pub(crate) fn eval_on<F: Scalar>(
        &self,
        a: &PredictionSet,
        b: &PredictionSet,
        samples: Option<&[usize]>,
    ) -> Result<F> {
        let want = self.kind.domain();
        for set in [a, b] {
            if set.domain().kind != want {
                return Err(Error::Domain {
                    kernel: self.kind.name().to_owned(),
                    domain: format!("{} (`{}`)", set.domain().kind, set.model_id()),
                });
            }
        }
        let pairs = Pairing::new(a, b, samples)?;
        match self.kind {
            KernelKind::Discrete => Ok(discrete(a, b, &pairs)),
            KernelKind::F1 => Ok(f1(a, b, &pairs)),
            KernelKind::Abs => Ok(abs(a, b, &pairs)),
            KernelKind::Pearson => match pearson(a, b, &pairs) {
                Err(Error::DegenerateVariance(_)) if self.degenerate_as_zero => Ok(F::zero()),
                r => r,
            },
        }
    }
}

pub fn cons_discrete<F: Scalar>(a: &PredictionSet, b: &PredictionSet) -> Result<F> {
    Kernel::from(KernelKind::Discrete).eval(a, b)
}

pub fn cons_pearson<F: Scalar>(a: &PredictionSet, b: &PredictionSet) -> Result<F> {
    Kernel::from(KernelKind::Pearson).eval(a, b)
}

pub fn cons_abs<F: Scalar>(a: &PredictionSet, b: &PredictionSet) -> Result<F> {
    Kernel::from(KernelKind::Abs).eval(a, b)
}

pub fn cons_f1<F: Scalar>(a: &PredictionSet, b: &PredictionSet) -> Result<F> {
    Kernel::from(KernelKind::F1).eval(a, b)
}

/// Sample index pairs `(index in a, index in b)` that are compared.
struct Pairing {
    pairs: Vec<(usize, usize)>,
}

impl Pairing {
    fn new(a: &PredictionSet, b: &PredictionSet, samples: Option<&[usize]>) -> Result<Self> {
        let (ia, ib) = (a.sample_ids(), b.sample_ids());
        if ia.len() != ib.len() {
            return Err(Error::Structural(format!(
                "`{}` has {} samples, `{}` has {}",
                a.model_id(),
                ia.len(),
                b.model_id(),
                ib.len()
            )));
        }
        let lookup: Option<HashMap<&str, usize>> = if std::sync::Arc::ptr_eq(ia, ib) || ia == ib {
            None
        } else {
            Some(ib.iter().enumerate().map(|(k, s)| (s.as_str(), k)).collect())
        };
        let map = |j: usize| -> Result<(usize, usize)> {
            let id = ia.get(j).ok_or(Error::IndexOutOfRange { index: j, len: ia.len() })?;
            match &lookup {
                None => Ok((j, j)),
                Some(m) => m.get(id.as_str()).map(|&k| (j, k)).ok_or_else(|| {
                    Error::Structural(format!("sample `{id}` of `{}` missing from `{}`", a.model_id(), b.model_id()))
                }),
            }
        };
        let pairs = match samples {
            Some(s) => s.iter().map(|&j| map(j)).collect::<Result<Vec<_>>>()?,
            None => (0..ia.len()).map(map).collect::<Result<Vec<_>>>()?,
        };
        if pairs.is_empty() {
            return Err(Error::Structural("no samples to compare".into()));
        }
        Ok(Pairing { pairs })
    }
}

fn discrete<F: Scalar>(a: &PredictionSet, b: &PredictionSet, p: &Pairing) -> F {
    let mut hits: u64 = 0;
    for &(ja, jb) in &p.pairs {
        for u in a.draws(ja) {
            for v in b.draws(jb) {
                if let (Draw::Token(x), Draw::Token(y)) = (u, v) {
                    hits += u64::from(x == y);
                }
            }
        }
    }
    let total = p.pairs.len() * a.draw_count() * b.draw_count();
    F::of(hits as f64) / F::of_usize(total)
}

pub(crate) fn set_f1(s: &std::collections::BTreeSet<String>, r: &std::collections::BTreeSet<String>) -> f64 {
    match (s.is_empty(), r.is_empty()) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        _ => 2.0 * s.intersection(r).count() as f64 / (s.len() + r.len()) as f64,
    }
}

fn f1<F: Scalar>(a: &PredictionSet, b: &PredictionSet, p: &Pairing) -> F {
    let mut total = F::zero();
    let mut scratch = Vec::with_capacity(a.draw_count() * b.draw_count());
    for &(ja, jb) in &p.pairs {
        scratch.clear();
        for u in a.draws(ja) {
            for v in b.draws(jb) {
                if let (Draw::Options(s), Draw::Options(r)) = (u, v) {
                    scratch.push(set_f1(s, r));
                }
            }
        }
        // Summing in sorted order makes the value independent of argument order.
        scratch.sort_by(f64::total_cmp);
        total = total + scratch.iter().map(|&x| F::of(x)).sum::<F>();
    }
    total / F::of_usize(p.pairs.len() * a.draw_count() * b.draw_count())
}

fn sample_mean<F: Scalar>(set: &PredictionSet, j: usize) -> F {
    let draws = set.draws(j);
    let sum: F = draws
        .iter()
        .map(|d| match d {
            Draw::Score(v) => F::of(*v),
            _ => unreachable!("validated at construction"),
        })
        .sum();
    sum / F::of_usize(draws.len())
}

fn abs<F: Scalar>(a: &PredictionSet, b: &PredictionSet, p: &Pairing) -> F {
    let total: F = p
        .pairs
        .iter()
        .map(|&(ja, jb)| (sample_mean::<F>(a, ja) - sample_mean::<F>(b, jb)).abs())
        .sum();
    -(total / F::of_usize(p.pairs.len()))
}

fn pearson<F: Scalar>(a: &PredictionSet, b: &PredictionSet, p: &Pairing) -> Result<F> {
    let x: Vec<F> = p.pairs.iter().map(|&(ja, _)| sample_mean(a, ja)).collect();
    let y: Vec<F> = p.pairs.iter().map(|&(_, jb)| sample_mean(b, jb)).collect();
    pearson_r(&x, &y).ok_or_else(|| {
        Error::DegenerateVariance(format!("constant score vector between `{}` and `{}`", a.model_id(), b.model_id()))
    })
}
