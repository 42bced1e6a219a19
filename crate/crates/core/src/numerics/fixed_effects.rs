use nalgebra::{DMatrix, DVector};

use super::NumericError;

const TOLERANCE: f64 = 1e-10;
const MAX_SWEEPS: usize = 10_000;

/// Unit and time effects of an additive two-way fit, plus the residual
/// after removing them.
#[derive(Debug, Clone)]
pub struct TwoWayEffects {
    pub unit: Vec<f64>,
    pub time: Vec<f64>,
    pub residuals: Vec<f64>,
}

impl TwoWayEffects {
    pub fn fitted(&self, unit: usize, time: usize) -> f64 {
        self.unit[unit] + self.time[time]
    }
}

fn group_sizes(ids: &[usize]) -> Vec<f64> {
    let n = ids.iter().max().map_or(0, |m| m + 1);
    let mut counts = vec![0.0; n];
    for &g in ids {
        counts[g] += 1.0;
    }
    counts
}

/// Removes group means of `r` in place. Returns the largest absolute mean
/// removed.
fn sweep(r: &mut [f64], ids: &[usize], counts: &[f64], sums: &mut [f64]) -> f64 {
    sums.iter_mut().for_each(|s| *s = 0.0);
    for (v, &g) in r.iter().zip(ids) {
        sums[g] += v;
    }
    let mut change = 0.0f64;
    for (s, &c) in sums.iter_mut().zip(counts) {
        if c > 0.0 {
            *s /= c;
            change = change.max(s.abs());
        }
    }
    for (v, &g) in r.iter_mut().zip(ids) {
        *v -= sums[g];
    }
    change
}

fn check_ids(n: usize, units: &[usize], times: &[usize]) -> Result<(), NumericError> {
    if n != units.len() || n != times.len() {
        return Err(NumericError::Dimension(format!(
            "{} values, {} unit ids, {} time ids",
            n,
            units.len(),
            times.len()
        )));
    }
    if n == 0 {
        return Err(NumericError::Empty);
    }
    Ok(())
}

/// Least-squares fit of `y = unit effect + time effect + residual` on an
/// arbitrary (possibly unbalanced) set of cells.
///
/// Unit effects are concentrated out and the time effects solved from the
/// reduced normal equations, so the cost is dominated by a `T × T` solve.
/// The split between the two sets of effects is only identified up to a
/// constant (per connected component); the minimum-norm time effects are
/// returned. Units or times with no observations get effect 0.
pub fn two_way_effects(
    y: &[f64],
    units: &[usize],
    times: &[usize],
) -> Result<TwoWayEffects, NumericError> {
    check_ids(y.len(), units, times)?;
    let unit_counts = group_sizes(units);
    let n_times = times.iter().max().map_or(0, |m| m + 1);

    // Per-unit totals: Σy and the count of each time.
    let mut unit_sum = vec![0.0; unit_counts.len()];
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); unit_counts.len()];
    for (i, &u) in units.iter().enumerate() {
        unit_sum[u] += y[i];
        rows[u].push(i);
    }
    let mut m = DMatrix::<f64>::zeros(n_times, n_times);
    let mut b = DVector::<f64>::zeros(n_times);
    let mut d = vec![0.0; n_times];
    for (u, members) in rows.iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        let n_u = unit_counts[u];
        let mean = unit_sum[u] / n_u;
        let mut touched = Vec::with_capacity(members.len());
        for &i in members {
            let t = times[i];
            if d[t] == 0.0 {
                touched.push(t);
            }
            d[t] += 1.0;
            m[(t, t)] += 1.0;
            b[t] += y[i] - mean;
        }
        for &s in &touched {
            for &t in &touched {
                m[(s, t)] -= d[s] * d[t] / n_u;
            }
        }
        for &t in &touched {
            d[t] = 0.0;
        }
    }
    let time = m
        .svd(true, true)
        .solve(&b, 1e-10)
        .map_err(|_| NumericError::Singular("two-way normal equations"))?;
    let mut unit = vec![0.0; unit_counts.len()];
    for (u, members) in rows.iter().enumerate() {
        if !members.is_empty() {
            unit[u] = members.iter().map(|&i| y[i] - time[times[i]]).sum::<f64>() / unit_counts[u];
        }
    }
    let residuals = (0..y.len()).map(|i| y[i] - unit[units[i]] - time[times[i]]).collect();
    Ok(TwoWayEffects {
        unit,
        time: time.iter().copied().collect(),
        residuals,
    })
}

/// Alternating projections on one column.
fn absorb_column(y: &[f64], units: &[usize], times: &[usize], unit_counts: &[f64], time_counts: &[f64]) -> Result<Vec<f64>, NumericError> {
    let mut unit_sums = vec![0.0; unit_counts.len()];
    let mut time_sums = vec![0.0; time_counts.len()];
    let scale = y.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut r = y.to_vec();
    for iteration in 1..=MAX_SWEEPS {
        let a = sweep(&mut r, units, unit_counts, &mut unit_sums);
        let b = sweep(&mut r, times, time_counts, &mut time_sums);
        if iteration > 1 && a.max(b) < TOLERANCE * scale {
            return Ok(r);
        }
    }
    Err(NumericError::NotConverged {
        what: "two-way fixed-effect absorption",
        iterations: MAX_SWEEPS,
    })
}

/// Removes unit and time means from every column of `values` by
/// alternating projections until the largest change falls below 1e-10.
pub fn absorb_two_way(
    values: &DMatrix<f64>,
    units: &[usize],
    times: &[usize],
) -> Result<DMatrix<f64>, NumericError> {
    check_ids(values.nrows(), units, times)?;
    let unit_counts = group_sizes(units);
    let time_counts = group_sizes(times);
    let mut out = DMatrix::zeros(values.nrows(), values.ncols());
    for (j, col) in values.column_iter().enumerate() {
        let column: Vec<f64> = col.iter().copied().collect();
        let r = absorb_column(&column, units, times, &unit_counts, &time_counts)?;
        out.column_mut(j).copy_from_slice(&r);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_hand_values() {
        let y = DMatrix::from_column_slice(4, 1, &[1.0, 2.0, 3.0, 5.0]);
        let units = [0, 0, 1, 1];
        let times = [0, 1, 0, 1];
        let out = absorb_two_way(&y, &units, &times).unwrap();
        // Oracle: y - unit mean - time mean + grand mean.
        let unit_mean = [1.5, 4.0];
        let time_mean = [2.0, 3.5];
        let expected: Vec<f64> = (0..4).map(|i| y[i] - unit_mean[units[i]] - time_mean[times[i]] + 2.75).collect();
        assert_eq!(expected, vec![0.25, -0.25, -0.25, 0.25]);
        for (a, b) in out.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_column_vanishes_and_idempotent() {
        let units = [0, 0, 0, 1, 1, 2, 2, 2];
        let times = [0, 1, 2, 0, 2, 0, 1, 2];
        let x = DMatrix::from_fn(8, 2, |i, j| if j == 0 { 3.0 } else { (i * i) as f64 * 0.7 - 1.0 });
        let once = absorb_two_way(&x, &units, &times).unwrap();
        assert!(once.column(0).iter().all(|v| v.abs() < 1e-10));
        let twice = absorb_two_way(&once, &units, &times).unwrap();
        assert!((twice - &once).amax() < 1e-10);
    }

    #[test]
    fn effects_reproduce_additive_data() {
        let units = [0, 0, 0, 1, 1, 2, 2, 2];
        let times = [0, 1, 2, 0, 2, 0, 1, 2];
        let a = [1.0, -2.0, 0.5];
        let d = [0.0, 3.0, 7.0];
        let y: Vec<f64> = units.iter().zip(&times).map(|(&u, &t)| a[u] + d[t]).collect();
        let fit = two_way_effects(&y, &units, &times).unwrap();
        for (i, (&u, &t)) in units.iter().zip(&times).enumerate() {
            assert!((fit.fitted(u, t) - y[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn direct_fit_matches_absorption_residuals() {
        // Unbalanced cells with noise: both routes give the same residual.
        let units = [0, 0, 0, 1, 1, 2, 2, 2, 3, 3];
        let times = [0, 1, 2, 0, 2, 0, 1, 2, 1, 2];
        let y = [1.0, 4.0, 2.5, -1.0, 0.3, 2.2, 5.0, 1.1, 0.7, 9.0];
        let fit = two_way_effects(&y, &units, &times).unwrap();
        let col = DMatrix::from_column_slice(10, 1, &y);
        let absorbed = absorb_two_way(&col, &units, &times).unwrap();
        for i in 0..10 {
            assert!((fit.residuals[i] - absorbed[i]).abs() < 1e-8, "{i}");
        }
    }
}
