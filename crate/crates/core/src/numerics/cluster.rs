use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use super::ols::expand;
use super::{FitResult, NumericError};

/// Cluster membership per observation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterSpec {
    ids: Vec<usize>,
    n_clusters: usize,
}

impl ClusterSpec {
    /// Relabels arbitrary ids to `0..G` in order of first appearance.
    pub fn new<T: std::hash::Hash + Eq + Clone>(labels: &[T]) -> Self {
        let mut map = HashMap::new();
        let ids = labels
            .iter()
            .map(|l| {
                let next = map.len();
                *map.entry(l.clone()).or_insert(next)
            })
            .collect();
        Self {
            ids,
            n_clusters: map.len(),
        }
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn n_clusters(&self) -> usize {
        self.n_clusters
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Small-sample scaling of the clustered sandwich.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CovarianceKind {
    /// No correction.
    Cr0,
    /// `G/(G-1) · (N-1)/(N-K)`.
    #[default]
    Cr1,
}

/// Meat `Σ_g (Σ_{i∈g} sᵢ)(Σ_{i∈g} sᵢ)'` for per-observation score rows `sᵢ`.
pub(crate) fn cluster_meat(scores: &DMatrix<f64>, clusters: &ClusterSpec) -> DMatrix<f64> {
    let k = scores.ncols();
    let mut sums = DMatrix::<f64>::zeros(clusters.n_clusters(), k);
    for (i, &g) in clusters.ids().iter().enumerate() {
        for j in 0..k {
            sums[(g, j)] += scores[(i, j)];
        }
    }
    sums.transpose() * sums
}

pub(crate) fn small_sample_factor(kind: CovarianceKind, g: usize, n: usize, k: usize) -> f64 {
    match kind {
        CovarianceKind::Cr0 => 1.0,
        CovarianceKind::Cr1 => {
            let g = g as f64;
            let n = n as f64;
            let k = k as f64;
            if n > k {
                (g / (g - 1.0)) * ((n - 1.0) / (n - k))
            } else {
                g / (g - 1.0)
            }
        }
    }
}

/// Cluster-robust sandwich `(X'WX)⁻¹ [c Σ_g X_g'W e_g e_g'W X_g] (X'WX)⁻¹`.
///
/// `extra_params` adds parameters absorbed outside `X` (e.g. time fixed
/// effects) to the `K` of the CR1 factor.
pub fn cluster_robust_vcov(
    fit: &FitResult,
    x: &DMatrix<f64>,
    clusters: &ClusterSpec,
    kind: CovarianceKind,
    extra_params: usize,
) -> Result<DMatrix<f64>, NumericError> {
    let n = x.nrows();
    if clusters.len() != n || fit.residuals.len() != n {
        return Err(NumericError::Dimension(format!(
            "{n} rows, {} cluster ids, {} residuals",
            clusters.len(),
            fit.residuals.len()
        )));
    }
    if clusters.n_clusters() < 2 {
        return Err(NumericError::SingleCluster);
    }
    let k = fit.kept.len();
    let mut scores = DMatrix::<f64>::zeros(n, k);
    for i in 0..n {
        let w = fit.weights.as_ref().map_or(1.0, |w: &DVector<f64>| w[i]);
        let e = fit.residuals[i] * w;
        for (a, &j) in fit.kept.iter().enumerate() {
            scores[(i, a)] = x[(i, j)] * e;
        }
    }
    let meat = cluster_meat(&scores, clusters);
    let c = small_sample_factor(kind, clusters.n_clusters(), n, k + extra_params);
    let inner = &fit.xtx_inv * meat * &fit.xtx_inv * c;
    let inner = (&inner + inner.transpose()) * 0.5;
    Ok(expand(x.ncols(), &fit.kept, &inner))
}
