//! Least squares over the probability simplex, solved by accelerated
//! projected gradient (FISTA with gradient-based restart).

use nalgebra::{DMatrix, DVector};

use super::NumericError;

const MAX_ITERATIONS: usize = 50_000;

/// Euclidean projection onto `{w : w ≥ 0, Σw = 1}` (sort-based).
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut w = v.to_vec();
    if !w.is_empty() {
        project_in_place(&mut w, &mut Vec::with_capacity(v.len()));
    }
    w
}

/// Solution of a simplex-constrained problem.
#[derive(Debug, Clone)]
pub struct SimplexSolution {
    /// One weight vector per unit.
    pub weights: Vec<Vec<f64>>,
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Jointly fits simplex weights for several target units against a shared
/// donor pool, trading off each unit's own imbalance against the imbalance
/// of the average unit:
///
/// `(1-ν)/J Σ_j ‖t_j - D_j w_j‖² + ν ‖(1/J) Σ_j (t_j - D_j w_j)‖²`
///
/// Row `ℓ` of every `D_j`/`t_j` must refer to the same lag relative to that
/// unit's own reference date; units with shorter histories contribute zero
/// to the pooled term beyond their last row.
#[derive(Debug, Clone)]
pub struct PooledProblem {
    pub donors: Vec<DMatrix<f64>>,
    pub targets: Vec<DVector<f64>>,
    pub nu: f64,
}

impl PooledProblem {
    fn n_donors(&self) -> usize {
        self.donors.first().map_or(0, |d| d.ncols())
    }

    fn max_rows(&self) -> usize {
        self.targets.iter().map(|t| t.len()).max().unwrap_or(0)
    }

    fn residuals(&self, w: &[Vec<f64>]) -> Vec<DVector<f64>> {
        self.donors
            .iter()
            .zip(&self.targets)
            .zip(w)
            .map(|((d, t), wj)| t - d * DVector::from_column_slice(wj))
            .collect()
    }

    fn pooled(&self, residuals: &[DVector<f64>]) -> DVector<f64> {
        let j = residuals.len() as f64;
        let mut p = DVector::zeros(self.max_rows());
        for e in residuals {
            for (l, v) in e.iter().enumerate() {
                p[l] += v / j;
            }
        }
        p
    }

    pub fn objective(&self, w: &[Vec<f64>]) -> f64 {
        let e = self.residuals(w);
        let j = e.len() as f64;
        let own: f64 = e.iter().map(|r| r.norm_squared()).sum::<f64>() / j;
        (1.0 - self.nu) * own + self.nu * self.pooled(&e).norm_squared()
    }

    /// Upper bound on the gradient's Lipschitz constant along the simplex.
    /// Donor columns are centred row-wise first: the simplex tangent space
    /// is orthogonal to the all-ones direction, so shifts common to every
    /// donor do not change the bound.
    fn lipschitz(&self) -> f64 {
        let j = self.donors.len() as f64;
        let max_sq = self
            .donors
            .iter()
            .map(|d| {
                let mut c = d.clone();
                for mut row in c.row_iter_mut() {
                    let m = row.mean();
                    row.add_scalar_mut(-m);
                }
                largest_eigenvalue(&(c.transpose() * &c))
            })
            .fold(0.0f64, f64::max);
        (2.0 / j * max_sq).max(f64::MIN_POSITIVE)
    }
}

fn largest_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    if n == 0 {
        return 0.0;
    }
    // Power iteration from a fixed start; the bound is inflated slightly
    // to stay above the true value.
    let mut v = DVector::from_fn(n, |i, _| 1.0 + 0.01 * i as f64);
    v.normalize_mut();
    let mut lambda = 0.0;
    for _ in 0..200 {
        let mv = m * &v;
        let norm = mv.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = norm;
        v = mv / norm;
        if (next - lambda).abs() <= 1e-12 * next {
            lambda = next;
            break;
        }
        lambda = next;
    }
    let frob = m.norm();
    (lambda * 1.05).min(frob).max(lambda)
}

/// Solves a [`PooledProblem`] from an optional warm start.
///
/// The KKT residual is the infinity norm of the projected-gradient step
/// `w - P(w - ∇f/L)`, which is zero exactly at an optimum and invariant to
/// rescaling the data. On non-convergence the last iterate is returned with
/// `converged = false`; weights always lie on the simplex.
pub fn pooled_simplex_weights(
    problem: &PooledProblem,
    warm_start: Option<&[Vec<f64>]>,
    tol: f64,
) -> Result<SimplexSolution, NumericError> {
    let n_units = problem.donors.len();
    let n_donors = problem.n_donors();
    if n_units == 0 || n_donors == 0 {
        return Err(NumericError::Empty);
    }
    if problem.targets.len() != n_units
        || problem
            .donors
            .iter()
            .zip(&problem.targets)
            .any(|(d, t)| d.ncols() != n_donors || d.nrows() != t.len() || t.is_empty())
    {
        return Err(NumericError::Dimension("donor/target shapes disagree".into()));
    }

    let step = 1.0 / problem.lipschitz();
    let mut ws = Workspace::new(problem);
    let mut x: Vec<f64> = match warm_start {
        Some(w) if w.len() == n_units && w.iter().all(|v| v.len() == n_donors) => {
            w.iter().flat_map(|v| project_simplex(v)).collect()
        }
        _ => vec![1.0 / n_donors as f64; n_units * n_donors],
    };
    let mut y = x.clone();
    let mut next = x.clone();
    let mut grad = vec![0.0; x.len()];
    let mut t = 1.0f64;
    let mut residual = f64::INFINITY;

    for iteration in 1..=MAX_ITERATIONS {
        ws.gradient(&y, &mut grad);
        ws.projected_step(&y, &grad, step, &mut next);
        // The step length at the extrapolated point is a cheap proxy; the
        // KKT residual proper is only evaluated once it is small.
        let proxy = next.iter().zip(&y).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        if proxy < tol {
            residual = ws.kkt_residual(&next, step);
            if residual < tol {
                return Ok(ws.solution(next, residual, iteration, true));
            }
        }

        // Restart momentum when it points uphill.
        let uphill: f64 = grad
            .iter()
            .zip(next.iter().zip(&x))
            .map(|(g, (a, b))| g * (a - b))
            .sum();
        let (t_next, beta) = if uphill > 0.0 {
            (1.0, 0.0)
        } else {
            let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
            (t_next, (t - 1.0) / t_next)
        };
        for ((yi, a), b) in y.iter_mut().zip(&next).zip(&x) {
            *yi = a + beta * (a - b);
        }
        std::mem::swap(&mut x, &mut next);
        t = t_next;
    }
    residual = ws.kkt_residual(&x, step).min(residual);
    Ok(ws.solution(x, residual, MAX_ITERATIONS, false))
}

/// Flat buffers for the solver's inner loop. Weights are stored unit-major
/// in one vector of length `units × donors`.
struct Workspace<'a> {
    problem: &'a PooledProblem,
    n_donors: usize,
    residuals: Vec<Vec<f64>>,
    pooled: Vec<f64>,
    scratch: Vec<f64>,
    sorted: Vec<f64>,
}

impl<'a> Workspace<'a> {
    fn new(problem: &'a PooledProblem) -> Self {
        Self {
            problem,
            n_donors: problem.n_donors(),
            residuals: problem.targets.iter().map(|t| vec![0.0; t.len()]).collect(),
            pooled: vec![0.0; problem.max_rows()],
            scratch: Vec::new(),
            sorted: Vec::new(),
        }
    }

    /// Fills the per-unit and pooled residuals at `w`; returns the objective.
    fn evaluate(&mut self, w: &[f64]) -> f64 {
        let p = self.problem;
        let j = p.donors.len() as f64;
        self.pooled.iter_mut().for_each(|v| *v = 0.0);
        let mut own = 0.0;
        for (u, (d, t)) in p.donors.iter().zip(&p.targets).enumerate() {
            let wu = &w[u * self.n_donors..(u + 1) * self.n_donors];
            let e = &mut self.residuals[u];
            e.copy_from_slice(t.as_slice());
            for (c, &wc) in wu.iter().enumerate() {
                if wc != 0.0 {
                    for (ei, di) in e.iter_mut().zip(d.column(c).iter()) {
                        *ei -= wc * di;
                    }
                }
            }
            for (l, v) in e.iter().enumerate() {
                own += v * v;
                self.pooled[l] += v / j;
            }
        }
        let pooled: f64 = self.pooled.iter().map(|v| v * v).sum();
        (1.0 - p.nu) * own / j + p.nu * pooled
    }

    fn gradient(&mut self, w: &[f64], grad: &mut [f64]) -> f64 {
        let objective = self.evaluate(w);
        let p = self.problem;
        let j = p.donors.len() as f64;
        let (a, b) = (-2.0 * (1.0 - p.nu) / j, -2.0 * p.nu / j);
        for (u, d) in p.donors.iter().enumerate() {
            let e = &self.residuals[u];
            self.scratch.clear();
            self.scratch
                .extend(e.iter().zip(&self.pooled).map(|(ei, pi)| a * ei + b * pi));
            for (c, g) in grad[u * self.n_donors..(u + 1) * self.n_donors].iter_mut().enumerate() {
                *g = d.column(c).iter().zip(&self.scratch).map(|(x, y)| x * y).sum();
            }
        }
        objective
    }

    fn projected_step(&mut self, w: &[f64], grad: &[f64], step: f64, out: &mut [f64]) {
        let n = self.n_donors;
        for ((o, wu), gu) in out.chunks_mut(n).zip(w.chunks(n)).zip(grad.chunks(n)) {
            for ((oi, wi), gi) in o.iter_mut().zip(wu).zip(gu) {
                *oi = wi - step * gi;
            }
            project_in_place(o, &mut self.sorted);
        }
    }

    fn kkt_residual(&mut self, w: &[f64], step: f64) -> f64 {
        let mut grad = vec![0.0; w.len()];
        let mut moved = vec![0.0; w.len()];
        self.gradient(w, &mut grad);
        self.projected_step(w, &grad, step, &mut moved);
        moved.iter().zip(w).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    }

    fn solution(&mut self, w: Vec<f64>, kkt_residual: f64, iterations: usize, converged: bool) -> SimplexSolution {
        let objective = self.evaluate(&w);
        SimplexSolution {
            weights: w.chunks(self.n_donors).map(<[f64]>::to_vec).collect(),
            objective,
            kkt_residual,
            iterations,
            converged,
        }
    }
}

/// [`project_simplex`] without allocating.
fn project_in_place(v: &mut [f64], sorted: &mut Vec<f64>) {
    let n = v.len();
    sorted.clear();
    sorted.extend_from_slice(v);
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (i, &ui) in sorted.iter().enumerate() {
        cumulative += ui;
        let t = (cumulative - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    let mut s = 0.0;
    for x in v.iter_mut() {
        *x = (*x - theta).max(0.0);
        s += *x;
    }
    if s > 0.0 {
        v.iter_mut().for_each(|x| *x /= s);
    } else {
        v.iter_mut().for_each(|x| *x = 1.0 / n as f64);
    }
}

/// Donor weights `w ≥ 0, Σw = 1` minimising `‖target - donors·w‖²`.
///
/// `donors` is periods × donors. Fails with the last iterate attached when
/// the KKT residual does not fall below `tol`.
pub fn simplex_weights(
    donors: &DMatrix<f64>,
    target: &DVector<f64>,
    tol: f64,
) -> Result<Vec<f64>, NumericError> {
    if donors.ncols() == 0 || donors.nrows() == 0 {
        return Err(NumericError::Empty);
    }
    let problem = PooledProblem {
        donors: vec![donors.clone()],
        targets: vec![target.clone()],
        nu: 0.0,
    };
    let sol = pooled_simplex_weights(&problem, None, tol)?;
    let w = sol.weights.into_iter().next().unwrap_or_default();
    if sol.converged {
        Ok(w)
    } else {
        Err(NumericError::SimplexNotConverged {
            iterations: sol.iterations,
            residual: sol.kkt_residual,
            best: w,
        })
    }
}
