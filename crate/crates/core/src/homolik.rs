//! Likelihood for spatially homogeneous models with linear-Gaussian movement, where the
//! locations at potential switches are integrated out analytically.
//!
//! For each observation interval the matrix `f_ij` collects, over every sequence of
//! states visited between the switch times, the probability of that sequence times the
//! Gaussian density of the resulting displacement. A forward pass over observations
//! then sums out the states at observation times.

use nalgebra::DMatrix;

use crate::error::{InchError, Result};
use crate::model::{GaussianTransition, ModelSpec, MovementKernel};
use crate::numeric::{iso_gauss_logpdf, logsumexp, sq_dist, LogSumExp};
use crate::track::ObservationTrack;
use crate::uniformization::SwitchSet;

/// Default bound on `n^(M-1)` interior sequences per interval.
pub const DEFAULT_SEQUENCE_GUARD: f64 = 1e6;

/// `log f_ij` for one observation interval, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalKernelMatrix {
    n: usize,
    log_values: Vec<f64>,
}

impl IntervalKernelMatrix {
    pub fn n_states(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn log(&self, i: usize, j: usize) -> f64 {
        self.log_values[i * self.n + j]
    }

    pub fn log_values(&self) -> &[f64] {
        &self.log_values
    }

    pub fn to_log_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.log_values)
    }
}

/// Displacement variance per coordinate of Brownian movement that spends
/// `(t_{c,1} - t_c)` in `i`, then `(t_{c,k+1} - t_{c,k})` in `seq[k-1]`, and the final
/// stretch up to `t_next` in `j`.
pub fn weighted_variance(
    speeds: &[f64],
    i: usize,
    j: usize,
    seq: &[usize],
    t_c: f64,
    switch_times: &[f64],
    t_next: f64,
) -> Result<f64> {
    let m = switch_times.len();
    if m == 0 || seq.len() != m - 1 {
        return Err(InchError::SequenceLengthMismatch {
            expected: m.saturating_sub(1),
            got: seq.len(),
        });
    }
    let mut var = (switch_times[0] - t_c) * speeds[i];
    for k in 0..m - 1 {
        var += (switch_times[k + 1] - switch_times[k]) * speeds[seq[k]];
    }
    var += (t_next - switch_times[m - 1]) * speeds[j];
    Ok(var)
}

/// Composition of the exact transitions of consecutive `(kernel, dt)` segments.
pub fn compose_gaussian(dim: usize, segments: &[(&MovementKernel, f64)]) -> GaussianTransition {
    segments
        .iter()
        .fold(GaussianTransition::identity(dim), |acc, (k, dt)| acc.then(&k.transition(dim, *dt)))
}

/// Mixed-radix counter over state paths; the last position turns fastest.
struct Odometer {
    digits: Vec<usize>,
    base: usize,
}

impl Odometer {
    fn new(len: usize, base: usize) -> Self {
        Odometer { digits: vec![0; len], base }
    }

    /// Advances and returns the leftmost changed position, or `None` when exhausted.
    fn advance(&mut self) -> Option<usize> {
        let mut pos = self.digits.len();
        while pos > 0 {
            pos -= 1;
            self.digits[pos] += 1;
            if self.digits[pos] < self.base {
                return Some(pos);
            }
            self.digits[pos] = 0;
        }
        None
    }
}

/// `f_ij(x_next | x_c, T_c)` for every endpoint pair, in log space.
#[allow(clippy::too_many_arguments)]
pub fn interval_kernel(
    model: &ModelSpec,
    kappa: f64,
    x_c: &[f64],
    x_next: &[f64],
    t_c: f64,
    switch_times: &[f64],
    t_next: f64,
    guard: f64,
) -> Result<IntervalKernelMatrix> {
    if !model.is_homogeneous() {
        return Err(InchError::PreconditionViolation(
            "integrated likelihood requires a spatially homogeneous model".into(),
        ));
    }
    let n = model.n_states();
    let m = switch_times.len();
    let mut log_values = vec![f64::NEG_INFINITY; n * n];
    if m == 0 {
        for i in 0..n {
            log_values[i * n + i] = model.segment_log_density(i, x_c, x_next, t_next - t_c)?;
        }
        return Ok(IntervalKernelMatrix { n, log_values });
    }
    let sequences = (n as f64).powi(m as i32 - 1);
    if sequences > guard {
        return Err(InchError::TooManySwitches { sequences, guard });
    }

    let log_p: Vec<Vec<f64>> = if model.rates().is_constant() {
        vec![model.log_transition_probs(kappa, switch_times[0], x_c)?; m]
    } else {
        switch_times
            .iter()
            .map(|&t| model.log_transition_probs(kappa, t, x_c))
            .collect::<Result<_>>()?
    };
    let mut durations = Vec::with_capacity(m + 1);
    durations.push(switch_times[0] - t_c);
    durations.extend(switch_times.windows(2).map(|w| w[1] - w[0]));
    durations.push(t_next - switch_times[m - 1]);

    let mut acc = vec![LogSumExp::new(); n * n];
    let segs = m + 1;
    let mut odo = Odometer::new(segs, n);
    let mut prefix_lp = vec![0.0; segs];

    if let Some(speeds) = model.speeds() {
        let sq = sq_dist(x_c, x_next);
        let dim = x_c.len();
        let mut prefix_var = vec![0.0; segs];
        let mut from = 0;
        loop {
            let s = &odo.digits;
            for p in from..segs {
                let (lp, var) = if p == 0 { (0.0, 0.0) } else { (prefix_lp[p - 1], prefix_var[p - 1]) };
                prefix_lp[p] = if p == 0 { 0.0 } else { lp + log_p[p - 1][s[p - 1] * n + s[p]] };
                prefix_var[p] = var + durations[p] * speeds[s[p]];
            }
            let lp = prefix_lp[segs - 1];
            if lp > f64::NEG_INFINITY {
                acc[s[0] * n + s[segs - 1]].add(lp + iso_gauss_logpdf(sq, prefix_var[segs - 1], dim));
            }
            match odo.advance() {
                Some(p) => from = p,
                None => break,
            }
        }
    } else {
        let dim = model.dim();
        let steps: Vec<Vec<GaussianTransition>> = durations
            .iter()
            .map(|&dt| model.kernels().iter().map(|k| k.transition(dim, dt)).collect())
            .collect();
        let mut prefix_g = vec![GaussianTransition::identity(dim); segs];
        let mut from = 0;
        loop {
            let s = odo.digits.clone();
            for p in from..segs {
                if p == 0 {
                    prefix_lp[0] = 0.0;
                    prefix_g[0] = steps[0][s[0]].clone();
                } else {
                    prefix_lp[p] = prefix_lp[p - 1] + log_p[p - 1][s[p - 1] * n + s[p]];
                    prefix_g[p] = prefix_g[p - 1].then(&steps[p][s[p]]);
                }
            }
            let lp = prefix_lp[segs - 1];
            if lp > f64::NEG_INFINITY {
                acc[s[0] * n + s[segs - 1]].add(lp + prefix_g[segs - 1].log_density(x_c, x_next)?);
            }
            match odo.advance() {
                Some(p) => from = p,
                None => break,
            }
        }
    }
    for (v, a) in log_values.iter_mut().zip(&acc) {
        *v = a.value();
    }
    Ok(IntervalKernelMatrix { n, log_values })
}

/// Interval kernels for every interval of `track`.
pub fn interval_kernels(
    track: &ObservationTrack,
    switches: &SwitchSet,
    model: &ModelSpec,
    kappa: f64,
    guard: f64,
) -> Result<Vec<IntervalKernelMatrix>> {
    (0..track.n_intervals())
        .map(|c| interval_kernel_at(track, switches, model, kappa, c, guard))
        .collect()
}

/// Kernel of interval `c` of a track.
pub fn interval_kernel_at(
    track: &ObservationTrack,
    switches: &SwitchSet,
    model: &ModelSpec,
    kappa: f64,
    c: usize,
    guard: f64,
) -> Result<IntervalKernelMatrix> {
    interval_kernel(
        model,
        kappa,
        track.location(c),
        track.location(c + 1),
        track.times()[c],
        &switches.interval(c).times,
        track.times()[c + 1],
        guard,
    )
}

/// `alpha'(j) = logsumexp_i alpha(i) + log f_ij`.
pub fn hom_forward_step(alpha: &[f64], kernel: &IntervalKernelMatrix) -> Vec<f64> {
    let n = alpha.len();
    (0..n)
        .map(|j| {
            let mut acc = LogSumExp::new();
            for (i, a) in alpha.iter().enumerate() {
                acc.add(a + kernel.log(i, j));
            }
            acc.value()
        })
        .collect()
}

/// `beta(i) = logsumexp_j log f_ij + beta'(j)`.
pub fn hom_backward_step(beta_next: &[f64], kernel: &IntervalKernelMatrix) -> Vec<f64> {
    let n = beta_next.len();
    (0..n)
        .map(|i| {
            let mut acc = LogSumExp::new();
            for (j, b) in beta_next.iter().enumerate() {
                acc.add(kernel.log(i, j) + b);
            }
            acc.value()
        })
        .collect()
}

/// Log likelihood of the observed track given potential switch times, with both the
/// behavioural states and the locations at the switches integrated out.
pub fn hom_forward_loglik(
    track: &ObservationTrack,
    switches: &SwitchSet,
    model: &ModelSpec,
    kappa: f64,
    guard: f64,
) -> Result<f64> {
    switches.validate(track.times(), track.dim())?;
    let mut alpha = model.log_initial().to_vec();
    for c in 0..track.n_intervals() {
        let k = interval_kernel_at(track, switches, model, kappa, c, guard)?;
        alpha = hom_forward_step(&alpha, &k);
    }
    Ok(logsumexp(&alpha))
}
