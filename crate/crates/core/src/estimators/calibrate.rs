use serde::{Deserialize, Serialize};

use crate::domain::CapabilityVector;
use crate::error::{Error, Result};
use crate::matrices::ConsistencyMatrix;
use crate::scalar::Scalar;

pub const DEFAULT_TOL: f64 = 1e-2;
pub const DEFAULT_MAX_ITERS: usize = 1000;

/// Converged calibration weights. `alpha` are the weights behind the
/// returned estimate; `iteration` counts weight updates performed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct CalibrationState<F> {
    pub alpha: Vec<F>,
    pub iteration: usize,
}

/// One reweighting step: `estimate = C * alpha_prev`, `alpha = estimate / sum(estimate)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationStep<F> {
    pub iteration: usize,
    pub estimate: Vec<F>,
    pub alpha: Vec<F>,
    /// Mean absolute change between `alpha` and the previous weights.
    pub change: F,
}

/// Fixed-point iteration of the capability-proportional weights, starting
/// from uniform weights. Yields one [`CalibrationStep`] per update and never
/// terminates on its own.
pub struct Calibrator<'a, F> {
    c: &'a ConsistencyMatrix<F>,
    alpha: Vec<F>,
    iteration: usize,
}

impl<'a, F: Scalar> Calibrator<'a, F> {
    pub fn new(c: &'a ConsistencyMatrix<F>) -> Self {
        let l = c.len();
        Calibrator { c, alpha: vec![F::one() / F::of_usize(l); l], iteration: 0 }
    }

    pub fn alpha(&self) -> &[F] {
        &self.alpha
    }
}

impl<F: Scalar> Iterator for Calibrator<'_, F> {
    type Item = Result<CalibrationStep<F>>;

    fn next(&mut self) -> Option<Self::Item> {
        let estimate: Vec<F> = (0..self.c.len())
            .map(|i| self.c.row(i).iter().zip(&self.alpha).map(|(&c, &a)| c * a).sum())
            .collect();
        let total: F = estimate.iter().copied().sum();
        if !(total > F::zero()) || !total.is_finite() {
            return Some(Err(Error::DegenerateInput(
                "calibrated estimates do not have a positive sum; weights need a nonnegative matrix".into(),
            )));
        }
        let alpha: Vec<F> = estimate.iter().map(|&b| b / total).collect();
        let change = alpha.iter().zip(&self.alpha).map(|(&a, &b)| (a - b).abs()).sum::<F>() / F::of_usize(alpha.len());
        self.iteration += 1;
        self.alpha = alpha.clone();
        Some(Ok(CalibrationStep { iteration: self.iteration, estimate, alpha, change }))
    }
}

/// Capability-weighted ensemble. Iterates until the mean absolute weight
/// change drops below `tol` and returns `C * alpha` for the weights that met
/// the criterion.
pub fn estimate_calibrated<F: Scalar>(
    c: &ConsistencyMatrix<F>,
    tol: F,
    max_iters: usize,
) -> Result<(CapabilityVector<F>, CalibrationState<F>)> {
    if c.is_empty() {
        return Err(Error::Config("empty consistency matrix".into()));
    }
    let mut cal = Calibrator::new(c);
    for _ in 0..max_iters {
        let step = cal.next().expect("calibrator is unbounded")?;
        if step.change < tol {
            let estimate = (0..c.len())
                .map(|i| c.row(i).iter().zip(&step.alpha).map(|(&v, &a)| v * a).sum())
                .collect();
            let state = CalibrationState { alpha: step.alpha, iteration: step.iteration };
            return Ok((CapabilityVector::new(c.roster().to_vec(), estimate)?, state));
        }
    }
    Err(Error::IterationLimit { iterations: max_iters, last_alpha: cal.alpha().iter().map(|a| a.to_f64_lossy()).collect() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_ones_is_a_fixed_point() {
        let c = ConsistencyMatrix::from_rows(vec![vec![1.0; 4]; 4]).unwrap();
        let (b, state) = estimate_calibrated(&c, 1e-2, 100).unwrap();
        assert_eq!(b.values(), &[1.0; 4]);
        assert_eq!(state.alpha, vec![0.25; 4]);
        assert_eq!(state.iteration, 1);
    }

    #[test]
    fn hand_case_matches_fixed_point_oracle() {
        // Exact rational iteration: alpha^1 = (17, 19, 16) / 52 moves 0.0214 from
        // uniform; alpha^2 = (99, 113, 90) / 302 moves 0.0065 < 1e-2, so the
        // estimate is C * alpha^2 = (347/604, 397/604, 155/302).
        let c = ConsistencyMatrix::from_rows(vec![vec![1.0, 0.5, 0.2], vec![0.5, 1.0, 0.4], vec![0.2, 0.4, 1.0]])
            .unwrap();
        let (b, state) = estimate_calibrated(&c, 1e-2, 100).unwrap();
        let want_alpha: [f64; 3] = [99.0 / 302.0, 113.0 / 302.0, 90.0 / 302.0];
        let want_b: [f64; 3] = [347.0 / 604.0, 397.0 / 604.0, 155.0 / 302.0];
        for i in 0..3 {
            assert!((state.alpha[i] - want_alpha[i]).abs() < 1e-15);
            assert!((b.values()[i] - want_b[i]).abs() < 1e-12);
        }
        assert_eq!(b.ranking(), vec![1, 0, 2]);
    }

    #[test]
    fn weights_stay_on_the_simplex() {
        let c = ConsistencyMatrix::from_rows(vec![
            vec![1.0, 0.9, 0.1, 0.3],
            vec![0.9, 1.0, 0.2, 0.0],
            vec![0.1, 0.2, 1.0, 0.7],
            vec![0.3, 0.0, 0.7, 1.0],
        ])
        .unwrap();
        for step in Calibrator::new(&c).take(50) {
            let step = step.unwrap();
            assert!((step.alpha.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(step.alpha.iter().all(|&a| a >= 0.0));
        }
    }

    #[test]
    fn iteration_limit_carries_last_state() {
        // Bipartite structure oscillates forever.
        let c = ConsistencyMatrix::from_rows(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let c2 = ConsistencyMatrix::from_rows(vec![
            vec![0.0, 0.0, 1.0],
            vec![0.0, 0.0, 0.2],
            vec![1.0, 0.2, 0.0],
        ])
        .unwrap();
        assert!(estimate_calibrated(&c, 1e-2, 10).is_ok());
        match estimate_calibrated(&c2, 1e-6, 10) {
            Err(Error::IterationLimit { iterations, last_alpha }) => {
                assert_eq!(iterations, 10);
                assert_eq!(last_alpha.len(), 3);
            }
            other => panic!("expected iteration limit, got {other:?}"),
        }
    }

    #[test]
    fn nonpositive_matrix_is_rejected() {
        let c = ConsistencyMatrix::from_rows(vec![vec![0.0, -0.5], vec![-0.5, 0.0]]).unwrap();
        assert!(matches!(estimate_calibrated(&c, 1e-2, 10), Err(Error::DegenerateInput(_))));
    }
}
