//! Forward algorithm for the discrete-time HMM induced by conditioning an InCH on its
//! potential switching times and the locations at them.
//!
//! Grid points `tau_0 < .. < tau_K` merge observation times and potential switches.
//! The hidden chain holds one state per segment `(tau_k, tau_{k+1})`. Each segment emits
//! `x(tau_{k+1})` from `x(tau_k)` under the kernel of its state; then the chain moves
//! with the uniformized matrix at a potential switch, or stays put at an observation.
//!
//! Messages are kept in log space. `alpha[k]` is the joint log density of the
//! locations up to `tau_k` and the state of segment `k`; `beta[k]` is the log density
//! of the remaining locations given that state.

use nalgebra::DMatrix;

use crate::error::{InchError, Result};
use crate::model::{GaussianTransition, ModelSpec};
use crate::numeric::{logsumexp, LogSumExp};
use crate::track::ObservationTrack;
use crate::uniformization::SwitchSet;

/// Kind of a grid point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridKind {
    Observation,
    PotentialSwitch,
}

/// Merged grid of observation times and potential switches, with a location at each.
#[derive(Debug, Clone, PartialEq)]
pub struct EventGrid {
    times: Vec<f64>,
    kinds: Vec<GridKind>,
    locations: Vec<Vec<f64>>,
}

impl EventGrid {
    pub fn new(times: Vec<f64>, kinds: Vec<GridKind>, locations: Vec<Vec<f64>>) -> Result<Self> {
        if times.len() < 2 || kinds.len() != times.len() || locations.len() != times.len() {
            return Err(InchError::PreconditionViolation(
                "grid needs at least two points with a kind and location each".into(),
            ));
        }
        if kinds[0] != GridKind::Observation || *kinds.last().unwrap() != GridKind::Observation {
            return Err(InchError::PreconditionViolation(
                "grid must start and end with an observation".into(),
            ));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(InchError::PreconditionViolation(
                "grid times must be strictly increasing".into(),
            ));
        }
        let dim = locations[0].len();
        if locations.iter().any(|x| x.len() != dim) {
            return Err(InchError::PreconditionViolation(
                "grid locations differ in dimension".into(),
            ));
        }
        Ok(EventGrid { times, kinds, locations })
    }

    /// Interleaves a track with switch times and their sampled locations.
    pub fn merge(track: &ObservationTrack, switches: &SwitchSet) -> Result<Self> {
        switches.validate(track.times(), track.dim())?;
        let mut times = Vec::with_capacity(track.len() + switches.total());
        let mut kinds = Vec::with_capacity(times.capacity());
        let mut locations = Vec::with_capacity(times.capacity());
        for c in 0..track.len() {
            times.push(track.times()[c]);
            kinds.push(GridKind::Observation);
            locations.push(track.location(c).to_vec());
            if c + 1 < track.len() {
                let iv = switches.interval(c);
                let locs = iv.locations.as_ref().ok_or_else(|| {
                    InchError::PreconditionViolation(format!(
                        "interval {c} has no switch locations"
                    ))
                })?;
                for (t, x) in iv.times.iter().zip(locs) {
                    times.push(*t);
                    kinds.push(GridKind::PotentialSwitch);
                    locations.push(x.clone());
                }
            }
        }
        EventGrid::new(times, kinds, locations)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn kinds(&self) -> &[GridKind] {
        &self.kinds
    }

    pub fn locations(&self) -> &[Vec<f64>] {
        &self.locations
    }

    /// Number of segments `K`.
    pub fn segments(&self) -> usize {
        self.times.len() - 1
    }

    pub fn observation_indices(&self) -> Vec<usize> {
        (0..self.times.len())
            .filter(|&k| self.kinds[k] == GridKind::Observation)
            .collect()
    }
}

/// Per-segment emissions and per-point log transition matrices of a grid.
#[derive(Debug, Clone)]
pub struct GridTerms {
    n: usize,
    /// `emissions[k][i]`: log density of segment `k` under state `i`.
    pub emissions: Vec<Vec<f64>>,
    /// Row-major log transition applied at `tau_{k+1}`; `None` is the identity.
    pub transitions: Vec<Option<Vec<f64>>>,
}

impl GridTerms {
    pub fn compute(grid: &EventGrid, model: &ModelSpec, kappa: f64) -> Result<Self> {
        let n = model.n_states();
        if grid.locations[0].len() != model.dim() {
            return Err(InchError::PreconditionViolation(format!(
                "grid locations have dimension {}, model expects {}",
                grid.locations[0].len(),
                model.dim()
            )));
        }
        let k_max = grid.segments();
        let mut emissions = Vec::with_capacity(k_max);
        let mut transitions = Vec::with_capacity(k_max);
        for k in 0..k_max {
            let (x0, x1) = (&grid.locations[k], &grid.locations[k + 1]);
            let dt = grid.times[k + 1] - grid.times[k];
            let e = (0..n)
                .map(|i| {
                    let v = model.segment_log_density(i, x0, x1, dt)?;
                    if v.is_nan() || v == f64::NEG_INFINITY {
                        return Err(InchError::NumericalUnderflow(format!(
                            "segment {k} density is zero under state {i}"
                        )));
                    }
                    Ok(v)
                })
                .collect::<Result<Vec<f64>>>()?;
            emissions.push(e);
            transitions.push(match grid.kinds[k + 1] {
                GridKind::Observation => None,
                GridKind::PotentialSwitch => {
                    Some(model.log_transition_probs(kappa, grid.times[k + 1], x1)?)
                }
            });
        }
        Ok(GridTerms { n, emissions, transitions })
    }

    pub fn n_states(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.emissions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.emissions.is_empty()
    }
}

/// One forward step: emit segment `k`, then apply the transition at its right end.
pub fn forward_step(alpha: &[f64], emission: &[f64], transition: Option<&[f64]>) -> Vec<f64> {
    let n = alpha.len();
    let emitted: Vec<f64> = alpha.iter().zip(emission).map(|(a, e)| a + e).collect();
    match transition {
        None => emitted,
        Some(logq) => (0..n)
            .map(|j| {
                let mut acc = LogSumExp::new();
                for (i, a) in emitted.iter().enumerate() {
                    acc.add(a + logq[i * n + j]);
                }
                acc.value()
            })
            .collect(),
    }
}

/// One backward step, the adjoint of [`forward_step`].
pub fn backward_step(beta_next: &[f64], emission: &[f64], transition: Option<&[f64]>) -> Vec<f64> {
    let n = beta_next.len();
    match transition {
        None => beta_next.iter().zip(emission).map(|(b, e)| b + e).collect(),
        Some(logq) => (0..n)
            .map(|i| {
                let mut acc = LogSumExp::new();
                for (j, b) in beta_next.iter().enumerate() {
                    acc.add(logq[i * n + j] + b);
                }
                emission[i] + acc.value()
            })
            .collect(),
    }
}

/// `alpha_0 .. alpha_K` starting from `alpha_0 = log nu`.
pub fn forward_messages_from_terms(log_initial: &[f64], terms: &GridTerms) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(terms.len() + 1);
    out.push(log_initial.to_vec());
    for k in 0..terms.len() {
        let next = forward_step(&out[k], &terms.emissions[k], terms.transitions[k].as_deref());
        out.push(next);
    }
    out
}

/// `beta_0 .. beta_K` with `beta_K = 0`.
pub fn backward_messages_from_terms(terms: &GridTerms) -> Vec<Vec<f64>> {
    let k_max = terms.len();
    let mut out = vec![Vec::new(); k_max + 1];
    out[k_max] = vec![0.0; terms.n];
    for k in (0..k_max).rev() {
        out[k] = backward_step(&out[k + 1], &terms.emissions[k], terms.transitions[k].as_deref());
    }
    out
}

pub fn forward_messages(grid: &EventGrid, model: &ModelSpec, kappa: f64) -> Result<Vec<Vec<f64>>> {
    let terms = GridTerms::compute(grid, model, kappa)?;
    Ok(forward_messages_from_terms(model.log_initial(), &terms))
}

pub fn backward_messages(grid: &EventGrid, model: &ModelSpec, kappa: f64) -> Result<Vec<Vec<f64>>> {
    let terms = GridTerms::compute(grid, model, kappa)?;
    Ok(backward_messages_from_terms(&terms))
}

/// Log likelihood of all grid locations with every behavioural state summed out.
pub fn forward_loglik(grid: &EventGrid, model: &ModelSpec, kappa: f64) -> Result<f64> {
    let terms = GridTerms::compute(grid, model, kappa)?;
    let mut alpha = model.log_initial().to_vec();
    for k in 0..terms.len() {
        alpha = forward_step(&alpha, &terms.emissions[k], terms.transitions[k].as_deref());
    }
    Ok(logsumexp(&alpha))
}

/// Largest number of sequences [`brute_force_loglik`] will enumerate.
pub const BRUTE_FORCE_LIMIT: f64 = 1e7;

/// Same quantity as [`forward_loglik`], by explicit enumeration of all `n^K` segment
/// state sequences. Used as a cross-check.
pub fn brute_force_loglik(grid: &EventGrid, model: &ModelSpec, kappa: f64) -> Result<f64> {
    let n = model.n_states();
    let k_max = grid.segments();
    let count = (n as f64).powi(k_max as i32);
    if count > BRUTE_FORCE_LIMIT {
        return Err(InchError::TooLarge { count, limit: BRUTE_FORCE_LIMIT });
    }
    let mut seg = vec![vec![0.0; n]; k_max];
    for (k, row) in seg.iter_mut().enumerate() {
        let dt = grid.times[k + 1] - grid.times[k];
        for (i, v) in row.iter_mut().enumerate() {
            *v = model.segment_log_density(i, &grid.locations[k], &grid.locations[k + 1], dt)?;
        }
    }
    // probs[k] is the matrix between segment k-1 and segment k (k >= 1).
    let mut probs: Vec<Option<DMatrix<f64>>> = vec![None; k_max];
    for k in 1..k_max {
        if grid.kinds[k] == GridKind::PotentialSwitch {
            probs[k] = Some(model.uniform_transition_probs(kappa, grid.times[k], &grid.locations[k])?);
        }
    }
    let mut seq = vec![0usize; k_max];
    let mut terms = Vec::with_capacity(count as usize);
    loop {
        let mut lp = model.log_initial()[seq[0]] + seg[0][seq[0]];
        for k in 1..k_max {
            let step = match &probs[k] {
                Some(p) => p[(seq[k - 1], seq[k])].ln(),
                None if seq[k - 1] == seq[k] => 0.0,
                None => f64::NEG_INFINITY,
            };
            lp += step + seg[k][seq[k]];
        }
        terms.push(lp);
        // Odometer increment.
        let mut pos = 0;
        loop {
            if pos == k_max {
                return Ok(logsumexp(&terms));
            }
            seq[pos] += 1;
            if seq[pos] < n {
                break;
            }
            seq[pos] = 0;
            pos += 1;
        }
    }
}

/// `log f_ij(x1 | x0)` over one observation interval of a spatially homogeneous model,
/// with the switch locations integrated out, computed by propagating Gaussian-mixture
/// messages forward over the switch grid with endpoint states pinned.
pub fn pinned_interval_log_density(
    model: &ModelSpec,
    kappa: f64,
    x0: &[f64],
    x1: &[f64],
    t0: f64,
    switch_times: &[f64],
    t1: f64,
) -> Result<DMatrix<f64>> {
    if !model.is_homogeneous() {
        return Err(InchError::PreconditionViolation(
            "location integration needs a spatially homogeneous model".into(),
        ));
    }
    let n = model.n_states();
    let dim = model.dim();
    let mut bounds = vec![t0];
    bounds.extend_from_slice(switch_times);
    bounds.push(t1);
    let mut out = DMatrix::from_element(n, n, f64::NEG_INFINITY);
    for i in 0..n {
        // messages[s]: (log weight, composed transition) for paths currently in state s.
        let mut messages: Vec<Vec<(f64, GaussianTransition)>> = vec![Vec::new(); n];
        messages[i].push((0.0, GaussianTransition::identity(dim)));
        for k in 0..bounds.len() - 1 {
            let dt = bounds[k + 1] - bounds[k];
            for (s, msgs) in messages.iter_mut().enumerate() {
                let step = model.kernel(s).transition(dim, dt);
                for (_, g) in msgs.iter_mut() {
                    *g = g.then(&step);
                }
            }
            if k + 1 < bounds.len() - 1 {
                let p = model.uniform_transition_probs(kappa, bounds[k + 1], x0)?;
                let mut next: Vec<Vec<(f64, GaussianTransition)>> = vec![Vec::new(); n];
                for (s, msgs) in messages.iter().enumerate() {
                    for (w, g) in msgs {
                        for (j, bucket) in next.iter_mut().enumerate() {
                            if p[(s, j)] > 0.0 {
                                bucket.push((w + p[(s, j)].ln(), g.clone()));
                            }
                        }
                    }
                }
                messages = next;
            }
        }
        for (j, msgs) in messages.iter().enumerate() {
            let terms = msgs
                .iter()
                .map(|(w, g)| Ok(w + g.log_density(x0, x1)?))
                .collect::<Result<Vec<f64>>>()?;
            out[(i, j)] = logsumexp(&terms);
        }
    }
    Ok(out)
}
