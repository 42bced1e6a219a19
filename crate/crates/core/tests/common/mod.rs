#![allow(dead_code)]

use policysim_core::estimators::EstimatorOptions;
use policysim_core::panel::{PanelDataset, PanelObservation, TreatmentSchedule};
use policysim_core::EstimatorResult;
use rand::Rng;

pub const FIRST: i32 = 1999;
pub const LAST: i32 = 2016;

pub fn state_name(s: usize) -> String {
    format!("s{s:03}")
}

/// Balanced panel over `years` with `(outcome, covariate)` from `f(state, year index)`.
pub fn panel(n_states: usize, years: std::ops::RangeInclusive<i32>, mut f: impl FnMut(usize, usize) -> (f64, f64)) -> PanelDataset {
    let first = *years.start();
    let mut obs = Vec::new();
    for s in 0..n_states {
        for year in years.clone() {
            let (outcome, covariate) = f(s, (year - first) as usize);
            obs.push(PanelObservation {
                state: state_name(s),
                year,
                outcome,
                covariate,
                treated: false,
            });
        }
    }
    PanelDataset::from_observations(obs)
}

pub fn schedule(data: &PanelDataset, adoption: &[Option<i32>]) -> TreatmentSchedule {
    TreatmentSchedule::from_parts(data, adoption.to_vec()).unwrap()
}

pub fn options(use_covariate: bool) -> EstimatorOptions {
    EstimatorOptions {
        use_covariate,
        bootstrap_reps: 40,
        ..EstimatorOptions::default()
    }
}

pub fn estimate(result: &EstimatorResult, e: i32) -> f64 {
    result
        .effect(e)
        .unwrap_or_else(|| panic!("{} has no estimate at event time {e}: {:?}", result.estimator, result.diagnostics))
        .estimate
}

/// Single-cohort panel: `n_treated` states adopting in `adopt`, the rest
/// never treated. Outcomes are `a_i + b_t` before `adopt` for every state
/// (so pre-period gaps between any two states are constant) and arbitrary
/// afterwards.
pub fn single_cohort_panel<R: Rng>(
    rng: &mut R,
    n_states: usize,
    n_treated: usize,
    adopt: i32,
) -> (PanelDataset, TreatmentSchedule) {
    let a: Vec<f64> = (0..n_states).map(|_| rng.random_range(5.0..25.0)).collect();
    let n_years = (LAST - FIRST + 1) as usize;
    let b: Vec<f64> = (0..n_years).map(|_| rng.random_range(0.0..5.0)).collect();
    let post: Vec<f64> = (0..n_states * n_years).map(|_| rng.random_range(-3.0..3.0)).collect();
    let x: Vec<f64> = (0..n_states * n_years).map(|_| rng.random_range(2.0..10.0)).collect();
    let cut = (adopt - FIRST) as usize;
    let data = panel(n_states, FIRST..=LAST, |s, t| {
        let shock = if t >= cut { post[s * n_years + t] } else { 0.0 };
        (a[s] + b[t] + shock, x[s * n_years + t])
    });
    let adoption: Vec<Option<i32>> = (0..n_states).map(|s| (s < n_treated).then_some(adopt)).collect();
    let sched = schedule(&data, &adoption);
    (data, sched)
}

pub fn assert_close(a: f64, b: f64, tol: f64, what: &str) {
    assert!((a - b).abs() <= tol, "{what}: {a} vs {b} (tol {tol})");
}
