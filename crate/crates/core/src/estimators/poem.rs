//! Alternating weight calibration (E-step) and reference filtering (M-step).

use serde::{Deserialize, Serialize};

use super::calibrate::{estimate_calibrated, DEFAULT_MAX_ITERS, DEFAULT_TOL};
use crate::domain::CapabilityVector;
use crate::error::{Error, Result};
use crate::matrices::ConsistencyMatrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct PoemSettings<F> {
    /// Calibration tolerance used by every E-step.
    pub tol: F,
    pub max_iters: usize,
    /// Smallest reference set the M-step may leave behind.
    pub min_refs: usize,
}

impl<F: Scalar> Default for PoemSettings<F> {
    fn default() -> Self {
        PoemSettings { tol: F::of(DEFAULT_TOL), max_iters: DEFAULT_MAX_ITERS, min_refs: 2 }
    }
}

/// One point of the EM trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct EmState<F> {
    pub iteration: usize,
    /// Reference weights over the whole roster, zero outside `ref_set` and
    /// summing to one on it.
    pub alpha: Vec<F>,
    pub beta: Vec<bool>,
    pub ref_set: Vec<usize>,
    /// Mean estimated capability over the reference set.
    pub objective: F,
    /// Model dropped by this iteration's M-step.
    pub removed: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// The objective dropped for the first time; the state before the drop is kept.
    ObjectiveDecrease,
    /// The reference set reached `min_refs` without any drop.
    ReferenceFloor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct PoemOutcome<F> {
    pub estimate: CapabilityVector<F>,
    /// States 0..=selected, plus the probe state that triggered termination
    /// when it was an objective decrease.
    pub trajectory: Vec<EmState<F>>,
    pub selected: usize,
    pub termination: Termination,
}

impl<F: Scalar> PoemOutcome<F> {
    pub fn selected_state(&self) -> &EmState<F> {
        &self.trajectory[self.selected]
    }

    pub fn floor_terminated(&self) -> bool {
        self.termination == Termination::ReferenceFloor
    }
}

fn weighted_row<F: Scalar>(c: &ConsistencyMatrix<F>, i: usize, alpha: &[F], refs: &[usize]) -> F {
    refs.iter().map(|&j| c.get(i, j) * alpha[j]).sum()
}

fn objective<F: Scalar>(c: &ConsistencyMatrix<F>, alpha: &[F], refs: &[usize]) -> F {
    let total: F = refs.iter().map(|&i| weighted_row(c, i, alpha, refs)).sum();
    total / F::of_usize(refs.len())
}

pub fn estimate_poem<F: Scalar>(c: &ConsistencyMatrix<F>, settings: PoemSettings<F>) -> Result<PoemOutcome<F>> {
    let l = c.len();
    if settings.min_refs == 0 {
        return Err(Error::Config("min_refs must be at least 1".into()));
    }
    if l < settings.min_refs + 1 {
        return Err(Error::Config(format!("need at least {} models for min_refs = {}", settings.min_refs + 1, settings.min_refs)));
    }

    let all: Vec<usize> = (0..l).collect();
    let uniform = vec![F::one() / F::of_usize(l); l];
    let mut trajectory = vec![EmState {
        iteration: 0,
        objective: objective(c, &uniform, &all),
        alpha: uniform,
        beta: vec![true; l],
        ref_set: all,
        removed: None,
    }];

    let (selected, termination) = loop {
        let prev = trajectory.last().expect("trajectory starts non-empty");
        let k = prev.iteration + 1;
        if prev.ref_set.len() <= settings.min_refs {
            break (prev.iteration, Termination::ReferenceFloor);
        }

        // E-step: calibrate on the current reference submatrix.
        let sub = c.submatrix(&prev.ref_set);
        let (_, cal) = estimate_calibrated(&sub, settings.tol, settings.max_iters)?;
        let mut alpha = vec![F::zero(); l];
        for (&i, &a) in prev.ref_set.iter().zip(&cal.alpha) {
            alpha[i] = a;
        }

        // M-step: drop the lowest-weight reference, lowest index on ties.
        let mut drop = prev.ref_set[0];
        for &i in &prev.ref_set[1..] {
            if alpha[i] < alpha[drop] {
                drop = i;
            }
        }
        let ref_set: Vec<usize> = prev.ref_set.iter().copied().filter(|&i| i != drop).collect();
        alpha[drop] = F::zero();
        let mass: F = ref_set.iter().map(|&i| alpha[i]).sum();
        if !(mass > F::zero()) {
            return Err(Error::DegenerateInput("reference weights vanished after filtering".into()));
        }
        for a in alpha.iter_mut() {
            *a = *a / mass;
        }
        let mut beta = prev.beta.clone();
        beta[drop] = false;

        let state = EmState {
            iteration: k,
            objective: objective(c, &alpha, &ref_set),
            alpha,
            beta,
            ref_set,
            removed: Some(drop),
        };
        let decreased = prev.objective > state.objective;
        let prev_iteration = prev.iteration;
        trajectory.push(state);
        if decreased {
            break (prev_iteration, Termination::ObjectiveDecrease);
        }
    };

    let chosen = &trajectory[selected];
    let values = (0..l).map(|i| weighted_row(c, i, &chosen.alpha, &chosen.ref_set)).collect();
    Ok(PoemOutcome {
        estimate: CapabilityVector::new(c.roster().to_vec(), values)?,
        trajectory,
        selected,
        termination,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::estimate_calibrated;

    #[test]
    fn constant_matrix_runs_to_the_floor_with_constant_estimate() {
        let c = ConsistencyMatrix::from_rows(vec![vec![1.0; 5]; 5]).unwrap();
        let out = estimate_poem(&c, PoemSettings::default()).unwrap();
        assert_eq!(out.termination, Termination::ReferenceFloor);
        assert_eq!(out.selected_state().ref_set.len(), 2);
        let (full, _) = estimate_calibrated(&c, 1e-2, 100).unwrap();
        assert_eq!(out.estimate.values(), full.values());
        assert!(out.trajectory.iter().all(|s| s.objective == 1.0));
        // Ties removed in roster order.
        assert_eq!(out.trajectory[1].removed, Some(0));
        assert_eq!(out.trajectory[2].removed, Some(1));
    }

    #[test]
    fn weak_cluster_is_filtered_out() {
        // Models 3 and 4 are weak and agree with each other far more than
        // with anyone else.
        let c = ConsistencyMatrix::from_rows(vec![
            vec![1.00, 0.80, 0.70, 0.20, 0.20],
            vec![0.80, 1.00, 0.65, 0.20, 0.20],
            vec![0.70, 0.65, 1.00, 0.25, 0.25],
            vec![0.20, 0.20, 0.25, 1.00, 0.90],
            vec![0.20, 0.20, 0.25, 0.90, 1.00],
        ])
        .unwrap();
        let out = estimate_poem(&c, PoemSettings::default()).unwrap();
        let refs = &out.selected_state().ref_set;
        assert!(!refs.contains(&3) || !refs.contains(&4), "{refs:?}");
        assert!(out.estimate.values()[3] < out.estimate.values()[2]);
    }

    #[test]
    fn state_invariants_hold() {
        let c = ConsistencyMatrix::from_rows(vec![
            vec![1.0, 0.6, 0.5, 0.3],
            vec![0.6, 1.0, 0.4, 0.35],
            vec![0.5, 0.4, 1.0, 0.2],
            vec![0.3, 0.35, 0.2, 1.0],
        ])
        .unwrap();
        let out = estimate_poem(&c, PoemSettings::default()).unwrap();
        for s in &out.trajectory {
            let mass: f64 = s.ref_set.iter().map(|&i| s.alpha[i]).sum();
            assert!((mass - 1.0).abs() < 1e-9);
            assert!(s.ref_set.len() >= 2);
            assert_eq!(s.ref_set, (0..4).filter(|&i| s.beta[i]).collect::<Vec<_>>());
        }
        for w in out.trajectory.windows(2) {
            assert!(w[0].beta.iter().zip(&w[1].beta).all(|(a, b)| a >= b));
        }
    }

    #[test]
    fn too_few_models() {
        let c = ConsistencyMatrix::from_rows(vec![vec![1.0, 0.5], vec![0.5, 1.0]]).unwrap();
        assert!(matches!(estimate_poem(&c, PoemSettings::default()), Err(Error::Config(_))));
        let s = PoemSettings { min_refs: 1, ..PoemSettings::default() };
        assert!(estimate_poem(&c, s).is_ok());
    }
}
