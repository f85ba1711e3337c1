//! Consistency matrix C, affinity matrix A, and ground-truth capability B.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{CapabilityVector, Kernel, PredictionSet};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Symmetric L x L matrix of pairwise consistencies, diagonal included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct ConsistencyMatrix<F> {
    roster: Vec<String>,
    values: Vec<Vec<F>>,
}

impl<F: Scalar> ConsistencyMatrix<F> {
    pub fn new(roster: Vec<String>, values: Vec<Vec<F>>) -> Result<Self> {
        check_square(&roster, &values)?;
        let l = roster.len();
        for i in 0..l {
            for j in 0..i {
                if values[i][j] != values[j][i] {
                    return Err(Error::Structural(format!(
                        "consistency matrix is not symmetric at ({}, {})",
                        roster[i], roster[j]
                    )));
                }
            }
        }
        Ok(ConsistencyMatrix { roster, values })
    }

    /// Matrix with generated model ids `m0, m1, ...`.
    pub fn from_rows(values: Vec<Vec<F>>) -> Result<Self> {
        let roster = (0..values.len()).map(|i| format!("m{i}")).collect();
        Self::new(roster, values)
    }

    pub fn len(&self) -> usize {
        self.roster.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roster.is_empty()
    }

    pub fn roster(&self) -> &[String] {
        &self.roster
    }

    pub fn get(&self, i: usize, j: usize) -> F {
        self.values[i][j]
    }

    pub fn row(&self, i: usize) -> &[F] {
        &self.values[i]
    }

    pub fn rows(&self) -> &[Vec<F>] {
        &self.values
    }

    pub fn column(&self, j: usize) -> Vec<F> {
        self.values.iter().map(|r| r[j]).collect()
    }

    /// Principal submatrix on `indices` (in that order).
    pub fn submatrix(&self, indices: &[usize]) -> Self {
        ConsistencyMatrix {
            roster: indices.iter().map(|&i| self.roster[i].clone()).collect(),
            values: indices.iter().map(|&i| indices.iter().map(|&j| self.values[i][j]).collect()).collect(),
        }
    }

    pub fn scaled(&self, factor: F) -> Self {
        ConsistencyMatrix {
            roster: self.roster.clone(),
            values: self.values.iter().map(|r| r.iter().map(|&v| v * factor).collect()).collect(),
        }
    }

    pub fn min_value(&self) -> F {
        self.values.iter().flatten().copied().fold(F::infinity(), F::min)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_square_csv(out, &self.roster, &self.values)
    }

    pub fn write_heatmap<W: Write>(&self, out: W) -> Result<()> {
        write_triples(out, &self.roster, &self.values)
    }
}

/// Bias diagnostic `A[i][j] = C[i][j] / sum(C[i]) - B[j] / sum(B)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct AffinityMatrix<F> {
    roster: Vec<String>,
    values: Vec<Vec<F>>,
}

impl<F: Scalar> AffinityMatrix<F> {
    pub fn roster(&self) -> &[String] {
        &self.roster
    }

    pub fn get(&self, i: usize, j: usize) -> F {
        self.values[i][j]
    }

    pub fn row(&self, i: usize) -> &[F] {
        &self.values[i]
    }

    pub fn len(&self) -> usize {
        self.roster.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roster.is_empty()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_square_csv(out, &self.roster, &self.values)
    }

    pub fn write_heatmap<W: Write>(&self, out: W) -> Result<()> {
        write_triples(out, &self.roster, &self.values)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AffinityOptions {
    /// Count the self-consistency term in `sum(C[i])`. When false the
    /// diagonal is dropped from both normalizers and `A[i][i]` is 0.
    pub include_diagonal: bool,
}

impl Default for AffinityOptions {
    fn default() -> Self {
        AffinityOptions { include_diagonal: true }
    }
}

fn check_square<F: Scalar>(roster: &[String], values: &[Vec<F>]) -> Result<()> {
    let l = roster.len();
    if values.len() != l || values.iter().any(|r| r.len() != l) {
        return Err(Error::Structural(format!("matrix must be {l} x {l} to match the roster")));
    }
    if values.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateInput("matrix has non-finite entries".into()));
    }
    Ok(())
}

/// `values[i][j] = kernel(preds[i], preds[j])` for every pair including i = j.
pub fn build_consistency_matrix<F: Scalar>(preds: &[PredictionSet], kernel: Kernel) -> Result<ConsistencyMatrix<F>> {
    let refs: Vec<&PredictionSet> = preds.iter().collect();
    build_consistency_matrix_on(&refs, kernel, None)
}

/// Same as [`build_consistency_matrix`] restricted to a sample subset given
/// as indices into `preds[0]`'s sample order.
pub fn build_consistency_matrix_on<F: Scalar>(
    preds: &[&PredictionSet],
    kernel: Kernel,
    samples: Option<&[usize]>,
) -> Result<ConsistencyMatrix<F>> {
    if preds.len() < 2 {
        return Err(Error::Config(format!("need at least 2 models, got {}", preds.len())));
    }
    let local = local_indices(preds, samples)?;
    let l = preds.len();
    let pairs: Vec<(usize, usize)> = (0..l).flat_map(|i| (i..l).map(move |j| (i, j))).collect();
    let evaluated: Vec<Result<F>> = pairs
        .par_iter()
        .map(|&(i, j)| kernel.eval_on(preds[i], preds[j], local[i].as_deref()))
        .collect();
    let mut values = vec![vec![F::zero(); l]; l];
    for (&(i, j), v) in pairs.iter().zip(evaluated) {
        let v = v?;
        values[i][j] = v;
        values[j][i] = v;
    }
    let roster = preds.iter().map(|p| p.model_id().to_owned()).collect();
    ConsistencyMatrix::new(roster, values)
}

/// Translates a subset of `preds[0]`'s samples into each set's own indices.
fn local_indices(preds: &[&PredictionSet], samples: Option<&[usize]>) -> Result<Vec<Option<Vec<usize>>>> {
    let Some(samples) = samples else {
        return Ok(vec![None; preds.len()]);
    };
    let base = preds[0].sample_ids();
    preds
        .iter()
        .map(|p| {
            if p.sample_ids() == base {
                return Ok(Some(samples.to_vec()));
            }
            let pos: std::collections::HashMap<&str, usize> =
                p.sample_ids().iter().enumerate().map(|(k, s)| (s.as_str(), k)).collect();
            samples
                .iter()
                .map(|&j| {
                    let id = base.get(j).ok_or(Error::IndexOutOfRange { index: j, len: base.len() })?;
                    pos.get(id.as_str())
                        .copied()
                        .ok_or_else(|| Error::Structural(format!("sample `{id}` missing from `{}`", p.model_id())))
                })
                .collect::<Result<Vec<_>>>()
                .map(Some)
        })
        .collect()
}

/// `B[i] = kernel(preds[i], labels)`.
pub fn true_capability<F: Scalar>(
    preds: &[PredictionSet],
    labels: &PredictionSet,
    kernel: Kernel,
) -> Result<CapabilityVector<F>> {
    let refs: Vec<&PredictionSet> = preds.iter().collect();
    true_capability_on(&refs, labels, kernel, None)
}

pub fn true_capability_on<F: Scalar>(
    preds: &[&PredictionSet],
    labels: &PredictionSet,
    kernel: Kernel,
    samples: Option<&[usize]>,
) -> Result<CapabilityVector<F>> {
    let values = preds
        .iter()
        .map(|p| kernel.eval_on(p, labels, samples))
        .collect::<Result<Vec<F>>>()?;
    CapabilityVector::new(preds.iter().map(|p| p.model_id().to_owned()).collect(), values)
}

pub fn build_affinity_matrix<F: Scalar>(c: &ConsistencyMatrix<F>, b: &CapabilityVector<F>) -> Result<AffinityMatrix<F>> {
    build_affinity_matrix_with(c, b, AffinityOptions::default())
}

pub fn build_affinity_matrix_with<F: Scalar>(
    c: &ConsistencyMatrix<F>,
    b: &CapabilityVector<F>,
    opts: AffinityOptions,
) -> Result<AffinityMatrix<F>> {
    if c.roster() != b.roster() {
        return Err(Error::Structural("capability vector roster differs from the matrix roster".into()));
    }
    let l = c.len();
    let b = b.values();
    let total_b: F = b.iter().copied().sum();
    let mut values = vec![vec![F::zero(); l]; l];
    for (i, out) in values.iter_mut().enumerate() {
        let keep = |j: usize| opts.include_diagonal || j != i;
        let row_sum: F = (0..l).filter(|&j| keep(j)).map(|j| c.get(i, j)).sum();
        let b_sum = if opts.include_diagonal { total_b } else { total_b - b[i] };
        if !(row_sum > F::zero()) {
            return Err(Error::DegenerateInput(format!("row `{}` of C does not have a positive sum", c.roster()[i])));
        }
        if !(b_sum > F::zero()) {
            return Err(Error::DegenerateInput("capability vector does not have a positive sum".into()));
        }
        for j in (0..l).filter(|&j| keep(j)) {
            out[j] = c.get(i, j) / row_sum - b[j] / b_sum;
        }
    }
    Ok(AffinityMatrix { roster: c.roster().to_vec(), values })
}

fn csv_err(e: impl std::fmt::Display) -> Error {
    Error::Structural(format!("csv output failed: {e}"))
}

fn write_square_csv<F: Scalar, W: Write>(out: W, roster: &[String], values: &[Vec<F>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["model".to_owned()];
    header.extend(roster.iter().cloned());
    w.write_record(&header).map_err(csv_err)?;
    for (id, row) in roster.iter().zip(values) {
        let mut rec = vec![id.clone()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(csv_err)
}

fn write_triples<F: Scalar, W: Write>(out: W, roster: &[String], values: &[Vec<F>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["row", "col", "value"]).map_err(csv_err)?;
    for (r, row) in roster.iter().zip(values) {
        for (c, v) in roster.iter().zip(row) {
            w.write_record([r.as_str(), c.as_str(), &v.to_string()]).map_err(csv_err)?;
        }
    }
    w.flush().map_err(csv_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::KernelKind;

    fn hand_c() -> ConsistencyMatrix<f64> {
        ConsistencyMatrix::from_rows(vec![vec![1.0, 0.5, 0.2], vec![0.5, 1.0, 0.4], vec![0.2, 0.4, 1.0]]).unwrap()
    }

    fn cap(values: Vec<f64>) -> CapabilityVector<f64> {
        let roster = (0..values.len()).map(|i| format!("m{i}")).collect();
        CapabilityVector::new(roster, values).unwrap()
    }

    #[test]
    fn identical_models_give_all_ones() {
        let a = PredictionSet::discrete_tokens("a", &["1", "2", "3"]).unwrap();
        let b = a.clone().with_model_id("b");
        let c: ConsistencyMatrix<f64> = build_consistency_matrix(&[a, b], KernelKind::Discrete.into()).unwrap();
        assert_eq!(c.rows(), &[vec![1.0, 1.0], vec![1.0, 1.0]]);
    }

    #[test]
    fn three_model_matrix_matches_pairwise_counts() {
        let a = PredictionSet::discrete_tokens("a", &["1", "2", "3", "4"]).unwrap();
        let b = PredictionSet::discrete_tokens("b", &["1", "2", "0", "0"]).unwrap();
        let c = PredictionSet::discrete_tokens("c", &["1", "0", "3", "0"]).unwrap();
        let m: ConsistencyMatrix<f64> = build_consistency_matrix(&[a, b, c], KernelKind::Discrete.into()).unwrap();
        // a-b agree on s0,s1; a-c on s0,s2; b-c on s0,s3.
        let want = vec![vec![1.0, 0.5, 0.5], vec![0.5, 1.0, 0.5], vec![0.5, 0.5, 1.0]];
        assert_eq!(m.rows(), want.as_slice());
    }

    #[test]
    fn rejects_single_model_and_asymmetry() {
        let a = PredictionSet::discrete_tokens("a", &["1"]).unwrap();
        assert!(build_consistency_matrix::<f64>(&[a], KernelKind::Discrete.into()).is_err());
        assert!(ConsistencyMatrix::from_rows(vec![vec![1.0, 0.2], vec![0.3, 1.0]]).is_err());
        assert!(ConsistencyMatrix::from_rows(vec![vec![1.0, 0.2]]).is_err());
    }

    #[test]
    fn true_capability_against_labels() {
        let labels = PredictionSet::discrete_tokens("__labels__", &["a", "b", "c", "d"]).unwrap();
        let perfect = labels.clone().with_model_id("p");
        let half = PredictionSet::discrete_tokens("h", &["a", "b", "x", "x"]).unwrap();
        let b: CapabilityVector<f64> = true_capability(&[perfect, half], &labels, KernelKind::Discrete.into()).unwrap();
        assert_eq!(b.values(), &[1.0, 0.5]);
    }

    #[test]
    fn affinity_hand_case() {
        let a = build_affinity_matrix(&hand_c(), &cap(vec![0.9, 0.6, 0.3])).unwrap();
        // Row sums 1.7, 1.9, 1.6; sum(B) = 1.8.
        let want = [
            [1.0 / 1.7 - 0.5, 0.5 / 1.7 - 1.0 / 3.0, 0.2 / 1.7 - 1.0 / 6.0],
            [0.5 / 1.9 - 0.5, 1.0 / 1.9 - 1.0 / 3.0, 0.4 / 1.9 - 1.0 / 6.0],
            [0.2 / 1.6 - 0.5, 0.4 / 1.6 - 1.0 / 3.0, 1.0 / 1.6 - 1.0 / 6.0],
        ];
        for i in 0..3 {
            for j in 0..3 {
                assert!((a.get(i, j) - want[i][j]).abs() < 1e-15);
            }
            assert!(a.row(i).iter().sum::<f64>().abs() < 1e-12);
        }
    }

    #[test]
    fn affinity_of_ideal_world_is_zero() {
        let ones = ConsistencyMatrix::from_rows(vec![vec![1.0; 3]; 3]).unwrap();
        let a = build_affinity_matrix(&ones, &cap(vec![1.0; 3])).unwrap();
        assert!((0..3).all(|i| a.row(i).iter().all(|v| v.abs() < 1e-15)));
    }

    #[test]
    fn affinity_row_proportional_to_b_is_zero() {
        let b = cap(vec![0.8, 0.4, 0.2]);
        // Row 0 = 0.5 * B; other rows arbitrary but symmetric.
        let c = ConsistencyMatrix::from_rows(vec![vec![0.4, 0.2, 0.1], vec![0.2, 1.0, 0.3], vec![0.1, 0.3, 1.0]]).unwrap();
        let a = build_affinity_matrix(&c, &b).unwrap();
        assert!(a.row(0).iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn affinity_degenerate_inputs() {
        let zero = ConsistencyMatrix::from_rows(vec![vec![0.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(build_affinity_matrix(&zero, &cap(vec![0.5, 0.5])), Err(Error::DegenerateInput(_))));
        let c = ConsistencyMatrix::from_rows(vec![vec![1.0, 0.5], vec![0.5, 1.0]]).unwrap();
        assert!(matches!(build_affinity_matrix(&c, &cap(vec![0.0, 0.0])), Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn affinity_without_diagonal_still_sums_to_zero() {
        let opts = AffinityOptions { include_diagonal: false };
        let a = build_affinity_matrix_with(&hand_c(), &cap(vec![0.9, 0.6, 0.3]), opts).unwrap();
        for i in 0..3 {
            assert_eq!(a.get(i, i), 0.0);
            assert!(a.row(i).iter().sum::<f64>().abs() < 1e-12);
        }
        assert!((a.get(0, 1) - (0.5 / 0.7 - 0.6 / 0.9)).abs() < 1e-12);
    }

    #[test]
    fn csv_layout() {
        let mut buf = Vec::new();
        hand_c().write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("model,m0,m1,m2"));
        assert_eq!(text.lines().nth(1), Some("m0,1,0.5,0.2"));
        let mut buf = Vec::new();
        hand_c().write_heatmap(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 10);
    }
}
