use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DEFAULT_PERMUTATIONS: usize = 10_000;

/// Sample Pearson correlation, or `None` when either input is constant.
/// Lengths must already match.
pub(crate) fn pearson_r<F: Scalar>(x: &[F], y: &[F]) -> Option<F> {
    debug_assert_eq!(x.len(), y.len());
    let constant = |v: &[F]| v.iter().all(|&a| a == v[0]);
    if x.is_empty() || constant(x) || constant(y) {
        return None;
    }
    let n = F::of_usize(x.len());
    let mx = x.iter().copied().sum::<F>() / n;
    let my = y.iter().copied().sum::<F>() / n;
    let (mut sxy, mut sxx, mut syy) = (F::zero(), F::zero(), F::zero());
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy = sxy + dx * dy;
        sxx = sxx + dx * dx;
        syy = syy + dy * dy;
    }
    let denom = (sxx * syy).sqrt();
    if !(denom > F::zero()) {
        return None;
    }
    Some((sxy / denom).max(-F::one()).min(F::one()))
}

fn check_pair<F>(x: &[F], y: &[F]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Structural(format!("vectors differ in length ({} vs {})", x.len(), y.len())));
    }
    if x.len() < 3 {
        return Err(Error::Structural(format!("correlation needs at least 3 points, got {}", x.len())));
    }
    Ok(())
}

pub fn pearson<F: Scalar>(x: &[F], y: &[F]) -> Result<F> {
    check_pair(x, y)?;
    pearson_r(x, y).ok_or_else(|| Error::DegenerateVariance("constant input to pearson".into()))
}

/// Ranks starting at 1; tied values share the mean of their positions.
pub fn average_ranks<F: Scalar>(x: &[F]) -> Vec<F> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).unwrap_or(Ordering::Equal));
    let mut ranks = vec![F::zero(); x.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && x[idx[end]] == x[idx[start]] {
            end += 1;
        }
        // Positions start+1 ..= end share their mean.
        let rank = F::of_usize(start + 1 + end) / F::of(2.0);
        for &k in &idx[start..end] {
            ranks[k] = rank;
        }
        start = end;
    }
    ranks
}

pub fn spearman<F: Scalar>(x: &[F], y: &[F]) -> Result<F> {
    check_pair(x, y)?;
    pearson_r(&average_ranks(x), &average_ranks(y))
        .ok_or_else(|| Error::DegenerateVariance("all-tied input to spearman".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    Pearson,
    Spearman,
}

/// Inputs to the permutation loop: Spearman permutes ranks.
fn prepared<F: Scalar>(x: &[F], y: &[F], stat: Statistic) -> Result<(Vec<F>, Vec<F>, F)> {
    check_pair(x, y)?;
    let (x, y) = match stat {
        Statistic::Pearson => (x.to_vec(), y.to_vec()),
        Statistic::Spearman => (average_ranks(x), average_ranks(y)),
    };
    let observed = pearson_r(&x, &y).ok_or_else(|| Error::DegenerateVariance("constant input".into()))?;
    Ok((x, y, observed))
}

fn at_least_as_extreme<F: Scalar>(r: F, observed: F) -> bool {
    r.abs() >= observed.abs() - F::epsilon() * F::of(16.0)
}

/// Two-sided permutation p-value `(1 + #{|r_perm| >= |r_obs|}) / (perms + 1)`,
/// permuting `y` with a ChaCha stream seeded by `seed`.
pub fn permutation_pvalue<F: Scalar>(x: &[F], y: &[F], stat: Statistic, perms: usize, seed: u64) -> Result<f64> {
    if perms < 100 {
        return Err(Error::Config(format!("need at least 100 permutations, got {perms}")));
    }
    let (x, mut y, observed) = prepared(x, y, stat)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut extreme = 0usize;
    for _ in 0..perms {
        y.shuffle(&mut rng);
        if pearson_r(&x, &y).is_some_and(|r| at_least_as_extreme(r, observed)) {
            extreme += 1;
        }
    }
    Ok((1 + extreme) as f64 / (perms + 1) as f64)
}

/// Exhaustive version over all n! orderings of `y` (n <= 8), same add-one formula.
pub fn exact_permutation_pvalue<F: Scalar>(x: &[F], y: &[F], stat: Statistic) -> Result<f64> {
    if x.len() > 8 {
        return Err(Error::Config(format!("exhaustive permutation test limited to n <= 8, got {}", x.len())));
    }
    let (x, y, observed) = prepared(x, y, stat)?;
    let mut order: Vec<usize> = (0..y.len()).collect();
    let mut permuted = y.clone();
    let (mut total, mut extreme) = (0usize, 0usize);
    loop {
        for (slot, &k) in permuted.iter_mut().zip(&order) {
            *slot = y[k];
        }
        total += 1;
        if pearson_r(&x, &permuted).is_some_and(|r| at_least_as_extreme(r, observed)) {
            extreme += 1;
        }
        if !next_permutation(&mut order) {
            break;
        }
    }
    Ok((1 + extreme) as f64 / (total + 1) as f64)
}

fn next_permutation(v: &mut [usize]) -> bool {
    let Some(i) = (1..v.len()).rev().find(|&i| v[i - 1] < v[i]) else {
        return false;
    };
    let j = (i..v.len()).rev().find(|&j| v[j] > v[i - 1]).expect("pivot has a successor");
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub r_p: f64,
    pub r_s: f64,
    pub p_value_rp: f64,
    pub p_value_rs: f64,
    pub n: usize,
}

/// Pearson and Spearman with permutation p-values (shared seed).
pub fn correlate<F: Scalar>(x: &[F], y: &[F], perms: usize, seed: u64) -> Result<CorrelationReport> {
    Ok(CorrelationReport {
        r_p: pearson(x, y)?.to_f64_lossy(),
        r_s: spearman(x, y)?.to_f64_lossy(),
        p_value_rp: permutation_pvalue(x, y, Statistic::Pearson, perms, seed)?,
        p_value_rs: permutation_pvalue(x, y, Statistic::Spearman, perms, seed)?,
        n: x.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_examples() {
        let x: [f64; 4] = [1.0, 2.0, 3.0, 4.0];
        assert!((pearson(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        let y: Vec<f64> = x.iter().map(|v| 7.0 - v).collect();
        assert!((pearson(&x, &y).unwrap() + 1.0).abs() < 1e-12);
        let r = pearson(&x, &[1.0, 2.0, 3.0, 5.0]).unwrap();
        assert!((r - 0.9827).abs() < 1e-3);
        assert!(matches!(pearson(&x, &[2.0; 4]), Err(Error::DegenerateVariance(_))));
        assert!(pearson(&x[..2], &x[..2]).is_err());
        assert!(pearson(&x, &x[..3]).is_err());
    }

    #[test]
    fn spearman_examples() {
        assert!((spearman::<f64>(&[1.0, 2.0, 3.0], &[2.0, 1.0, 3.0]).unwrap() - 0.5).abs() < 1e-12);
        let r = spearman::<f64>(&[1.0, 1.0, 2.0], &[3.0, 4.0, 5.0]).unwrap();
        assert!((r - 0.866).abs() < 1e-3);
        let x = [0.3, 1.2, 2.5, 4.0, 4.1];
        let y: Vec<f64> = x.iter().map(|v: &f64| v.exp()).collect();
        assert_eq!(spearman(&x, &y).unwrap(), 1.0);
        assert!(matches!(spearman(&[1.0; 3], &x[..3]), Err(Error::DegenerateVariance(_))));
    }

    #[test]
    fn average_ranks_handles_ties() {
        assert_eq!(average_ranks(&[1.0, 1.0, 2.0]), vec![1.5, 1.5, 3.0]);
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 3.0]), vec![3.0, 1.0, 3.0, 3.0]);
    }

    #[test]
    fn permutation_identity_is_significant() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let p = permutation_pvalue(&x, &x, Statistic::Pearson, 1000, 7).unwrap();
        assert!(p <= 0.01, "{p}");
        assert_eq!(p, permutation_pvalue(&x, &x, Statistic::Pearson, 1000, 7).unwrap());
        assert!(permutation_pvalue(&x, &x, Statistic::Pearson, 99, 7).is_err());
    }

    #[test]
    fn exhaustive_resolution_for_three_points() {
        // All 6 orderings of a perfectly ranked triple: r = +-1 twice, +-0.5 four times.
        let x = [1.0, 2.0, 3.0];
        let p = exact_permutation_pvalue(&x, &x, Statistic::Spearman).unwrap();
        assert!((p - 3.0 / 7.0).abs() < 1e-15);
        let k = p * 7.0;
        assert!((k - k.round()).abs() < 1e-12);
    }

    #[test]
    fn next_permutation_enumerates_all() {
        let mut v = vec![0, 1, 2, 3];
        let mut n = 1;
        while next_permutation(&mut v) {
            n += 1;
        }
        assert_eq!(n, 24);
    }
}
