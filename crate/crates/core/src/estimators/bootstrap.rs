use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::view::PanelView;
use super::EstimatorError;

/// Standard errors from resampling whole states with replacement and
/// re-running `estimate` on each draw.
///
/// Draws on which `estimate` fails (e.g. no never-treated state drawn) are
/// skipped and counted. Event times missing from a draw are skipped for
/// that event time only. Returns the SE per requested event time (NaN when
/// fewer than two draws succeed) and the number of failed draws.
pub(crate) fn cluster_bootstrap_se<F>(
    view: &PanelView,
    event_times: &[i32],
    reps: usize,
    seed: u64,
    estimate: F,
) -> (BTreeMap<i32, f64>, usize)
where
    F: Fn(&PanelView) -> Result<BTreeMap<i32, f64>, EstimatorError>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draws: BTreeMap<i32, Vec<f64>> = event_times.iter().map(|&e| (e, Vec::new())).collect();
    let mut failures = 0;
    let mut units = vec![0; view.n_units];
    for _ in 0..reps {
        for u in units.iter_mut() {
            *u = rng.random_range(0..view.n_units);
        }
        let sample = view.resample(&units);
        match estimate(&sample) {
            Ok(est) => {
                for (e, values) in draws.iter_mut() {
                    if let Some(v) = est.get(e).filter(|v| v.is_finite()) {
                        values.push(*v);
                    }
                }
            }
            Err(_) => failures += 1,
        }
    }
    let se = draws
        .into_iter()
        .map(|(e, v)| {
            let n = v.len();
            if n < 2 {
                return (e, f64::NAN);
            }
            let mean = v.iter().sum::<f64>() / n as f64;
            let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (e, var.sqrt())
        })
        .collect();
    (se, failures)
}
