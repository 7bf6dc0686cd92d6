//! Brownian-bridge moments for proposing locations at potential switches.

use nalgebra::{Cholesky, DMatrix, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::numeric::LN_2PI;

/// Conditional moments at the new times, per coordinate: `mean_*` is `m x d`, `cov_*` is
/// `m x m` and shared by every coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct BridgeMoments {
    pub mean_i: DMatrix<f64>,
    pub cov_i: DMatrix<f64>,
    pub mean_d: DMatrix<f64>,
    pub cov_d: DMatrix<f64>,
}

fn bridge_into(
    (l, xl): (f64, &[f64]),
    (r, xr): (f64, &[f64]),
    rows: &[(usize, f64)],
    omega: f64,
    mean: &mut DMatrix<f64>,
    cov: &mut DMatrix<f64>,
) {
    let span = r - l;
    for &(k, s) in rows {
        let w = (s - l) / span;
        for d in 0..xl.len() {
            mean[(k, d)] = xl[d] + w * (xr[d] - xl[d]);
        }
        for &(k2, s2) in rows {
            let (lo, hi) = if s <= s2 { (s, s2) } else { (s2, s) };
            cov[(k, k2)] = (omega * (lo - l) * (r - hi) / span).max(0.0);
        }
    }
}

/// `I`: one bridge from `(t_a, x_a)` to `(t_b, x_b)`. `D`: independent bridges through
/// `x_a`, each anchor in turn, and `x_b`. Both have volatility `omega`.
pub fn bridge_moments(
    x_a: &[f64],
    x_b: &[f64],
    t_a: f64,
    t_b: f64,
    anchors: &[(f64, &[f64])],
    times_new: &[f64],
    omega: f64,
) -> BridgeMoments {
    let (m, d) = (times_new.len(), x_a.len());
    let mut mean_i = DMatrix::zeros(m, d);
    let mut cov_i = DMatrix::zeros(m, m);
    let all: Vec<(usize, f64)> = times_new.iter().copied().enumerate().collect();
    bridge_into((t_a, x_a), (t_b, x_b), &all, omega, &mut mean_i, &mut cov_i);

    let mut knots: Vec<(f64, &[f64])> = Vec::with_capacity(anchors.len() + 2);
    knots.push((t_a, x_a));
    knots.extend_from_slice(anchors);
    knots.push((t_b, x_b));
    let mut mean_d = DMatrix::zeros(m, d);
    let mut cov_d = DMatrix::zeros(m, m);
    let mut start = 0;
    let n_windows = knots.len() - 1;
    for (idx, w) in knots.windows(2).enumerate() {
        let mut rows = Vec::new();
        while start < m && (times_new[start] <= w[1].0 || idx + 1 == n_windows) {
            rows.push((start, times_new[start]));
            start += 1;
        }
        bridge_into(w[0], w[1], &rows, omega, &mut mean_d, &mut cov_d);
    }
    BridgeMoments { mean_i, cov_i, mean_d, cov_d }
}

/// `N(p mu_I + (1-p) mu_D, p^2 Sigma_I + (1-p)^2 Sigma_D)` applied to each coordinate.
#[derive(Debug, Clone)]
pub struct MixtureGaussian {
    mean: DMatrix<f64>,
    chol: Option<Cholesky<f64, Dyn>>,
}

impl MixtureGaussian {
    pub fn new(moments: &BridgeMoments, p: f64) -> Self {
        let q = 1.0 - p;
        let mean = &moments.mean_i * p + &moments.mean_d * q;
        let cov = &moments.cov_i * (p * p) + &moments.cov_d * (q * q);
        MixtureGaussian { mean, chol: Cholesky::new(cov) }
    }

    pub fn len(&self) -> usize {
        self.mean.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.nrows() == 0
    }

    /// Draws one location per row; `None` if the covariance is singular.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<Vec<Vec<f64>>> {
        let (m, d) = self.mean.shape();
        if m == 0 {
            return Some(Vec::new());
        }
        let l = self.chol.as_ref()?.l();
        let z = DMatrix::from_fn(m, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let x = &self.mean + l * z;
        Some((0..m).map(|k| x.row(k).iter().copied().collect()).collect())
    }

    /// Joint log density of `locs` (one row per new time).
    pub fn log_density(&self, locs: &[Vec<f64>]) -> f64 {
        let (m, d) = self.mean.shape();
        if m == 0 {
            return 0.0;
        }
        let Some(chol) = &self.chol else {
            return f64::NEG_INFINITY;
        };
        let resid = DMatrix::from_fn(m, d, |k, j| locs[k][j] - self.mean[(k, j)]);
        let solved = chol.l().solve_lower_triangular(&resid).expect("triangular factor");
        let log_det: f64 = chol.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
        -0.5 * (d as f64 * (m as f64 * LN_2PI + log_det) + solved.norm_squared())
    }
}
