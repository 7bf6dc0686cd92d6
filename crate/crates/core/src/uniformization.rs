//! Uniformization: the rate-`kappa` Poisson process of potential switches, and exact
//! forward simulation of InCH paths by dynamic thinning of that process.

use std::io::Write;

use nalgebra::{Cholesky, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, Exp, Poisson, StandardNormal};

use crate::error::{InchError, Result};
use crate::model::{ModelSpec, MovementKernel};

/// Potential switching times (and optionally locations) inside one observation interval.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct IntervalSwitches {
    pub times: Vec<f64>,
    pub locations: Option<Vec<Vec<f64>>>,
}

impl IntervalSwitches {
    pub fn times_only(times: Vec<f64>) -> Self {
        IntervalSwitches {
            times,
            locations: None,
        }
    }

    pub fn with_locations(times: Vec<f64>, locations: Vec<Vec<f64>>) -> Self {
        IntervalSwitches {
            times,
            locations: Some(locations),
        }
    }

    pub fn count(&self) -> usize {
        self.times.len()
    }
}

/// Potential switches for every interval `(t_c, t_{c+1})` of an observation track.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchSet {
    intervals: Vec<IntervalSwitches>,
}

impl SwitchSet {
    pub fn new(intervals: Vec<IntervalSwitches>) -> Self {
        SwitchSet { intervals }
    }

    /// No potential switches in any of `n_intervals` intervals.
    pub fn empty(n_intervals: usize, with_locations: bool) -> Self {
        let iv = if with_locations {
            IntervalSwitches::with_locations(Vec::new(), Vec::new())
        } else {
            IntervalSwitches::default()
        };
        SwitchSet {
            intervals: vec![iv; n_intervals],
        }
    }

    /// Draws switch times for every interval from the rate-`kappa` Poisson prior.
    pub fn sample_prior<R: Rng + ?Sized>(obs_times: &[f64], kappa: f64, rng: &mut R) -> Self {
        let intervals = obs_times
            .windows(2)
            .map(|w| IntervalSwitches::times_only(sample_potential_switches(w[0], w[1], kappa, rng)))
            .collect();
        SwitchSet { intervals }
    }

    pub fn intervals(&self) -> &[IntervalSwitches] {
        &self.intervals
    }

    pub fn interval(&self, c: usize) -> &IntervalSwitches {
        &self.intervals[c]
    }

    pub fn set_interval(&mut self, c: usize, iv: IntervalSwitches) {
        self.intervals[c] = iv;
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn counts(&self) -> Vec<usize> {
        self.intervals.iter().map(IntervalSwitches::count).collect()
    }

    pub fn total(&self) -> usize {
        self.intervals.iter().map(IntervalSwitches::count).sum()
    }

    pub fn has_locations(&self) -> bool {
        self.intervals.iter().all(|iv| iv.locations.is_some())
    }

    /// Checks ordering and containment against the bracketing observation times.
    pub fn validate(&self, obs_times: &[f64], dim: usize) -> Result<()> {
        if self.intervals.len() + 1 != obs_times.len() {
            return Err(InchError::PreconditionViolation(format!(
                "switch set has {} intervals for {} observations",
                self.intervals.len(),
                obs_times.len()
            )));
        }
        for (c, iv) in self.intervals.iter().enumerate() {
            let (lo, hi) = (obs_times[c], obs_times[c + 1]);
            let mut prev = lo;
            for &t in &iv.times {
                if !(t > prev && t < hi) {
                    return Err(InchError::PreconditionViolation(format!(
                        "switch time {t} in interval {c} is not strictly increasing inside ({lo}, {hi})"
                    )));
                }
                prev = t;
            }
            if let Some(locs) = &iv.locations {
                if locs.len() != iv.times.len() || locs.iter().any(|x| x.len() != dim) {
                    return Err(InchError::PreconditionViolation(format!(
                        "interval {c}: switch locations do not match switch times"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// `kappa = max_i sum_{j != i} u_ij`, the smallest uniformization rate valid for every
/// rate function allowed by the prior bounds.
pub fn choose_kappa(model: &ModelSpec) -> Result<f64> {
    let b = model.rates().bounds();
    let n = model.n_states();
    for i in 0..n {
        for j in 0..n {
            if i != j && !b[(i, j)].is_finite() {
                return Err(InchError::UnboundedPrior { i, j });
            }
        }
    }
    Ok(model.max_bound_out_rate())
}

/// Draws the potential switches of a rate-`kappa` Poisson process on `(t0, t1)`, sorted.
pub fn sample_potential_switches<R: Rng + ?Sized>(t0: f64, t1: f64, kappa: f64, rng: &mut R) -> Vec<f64> {
    let mean = kappa * (t1 - t0);
    if !(mean > 0.0) {
        return Vec::new();
    }
    let m = Poisson::new(mean).expect("finite positive mean").sample(rng) as usize;
    let mut times: Vec<f64> = (0..m)
        .map(|_| loop {
            let t = rng.random_range(t0..t1);
            if t > t0 {
                break t;
            }
        })
        .collect();
    times.sort_by(f64::total_cmp);
    times
}

/// Kind of a trajectory event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Observation,
    /// Potential switch that changed the state.
    Switch,
    /// Potential switch thinned away; the state is unchanged.
    Potential,
}

impl EventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::Observation => "observation",
            EventKind::Switch => "switch",
            EventKind::Potential => "potential",
        }
    }
}

/// Simulated path: one row per event, state after the event and location at it.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<usize>,
    pub locations: Vec<Vec<f64>>,
    pub kinds: Vec<EventKind>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Final state of the path.
    pub fn final_state(&self) -> usize {
        *self.states.last().expect("trajectory has a start event")
    }

    /// Rows of kind `Observation`, as (time, state, location).
    pub fn observations(&self) -> impl Iterator<Item = (f64, usize, &[f64])> {
        (0..self.len())
            .filter(|&k| self.kinds[k] == EventKind::Observation)
            .map(move |k| (self.times[k], self.states[k], self.locations[k].as_slice()))
    }

    /// Fraction of `[t_first, t_last]` spent in each of `n` states.
    pub fn occupancy(&self, n: usize) -> Vec<f64> {
        let mut occ = vec![0.0; n];
        for k in 0..self.len().saturating_sub(1) {
            occ[self.states[k]] += self.times[k + 1] - self.times[k];
        }
        let span = self.times.last().unwrap_or(&0.0) - self.times.first().unwrap_or(&0.0);
        if span > 0.0 {
            occ.iter_mut().for_each(|o| *o /= span);
        }
        occ
    }

    /// CSV with columns `time,state,x1..xd,event_kind`; states are written 1-based.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let dim = self.locations.first().map_or(0, Vec::len);
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["time".to_string(), "state".to_string()];
        header.extend((1..=dim).map(|k| format!("x{k}")));
        header.push("event_kind".into());
        w.write_record(&header)?;
        for k in 0..self.len() {
            let mut row = vec![format!("{}", self.times[k]), format!("{}", self.states[k] + 1)];
            row.extend(self.locations[k].iter().map(|v| format!("{v}")));
            row.push(self.kinds[k].as_str().into());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Draws `x1 | x0` over `dt` under `kernel`.
pub fn sample_segment<R: Rng + ?Sized>(
    kernel: &MovementKernel,
    x0: &[f64],
    dt: f64,
    rng: &mut R,
) -> Vec<f64> {
    match kernel {
        MovementKernel::Brownian { speed } => {
            let sd = (speed * dt).sqrt();
            x0.iter()
                .map(|x| x + sd * rng.sample::<f64, _>(StandardNormal))
                .collect()
        }
        MovementKernel::LinearGaussian { .. } => {
            let dim = x0.len();
            let tr = kernel.transition(dim, dt);
            let z = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
            let noise = match Cholesky::new(tr.cov.clone()) {
                Some(ch) => ch.l() * z,
                None => {
                    let eig = SymmetricEigen::new(tr.cov.clone());
                    let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
                    &eig.eigenvectors * DVector::from_fn(dim, |i, _| sqrt_vals[i] * z[i])
                }
            };
            (tr.mean(x0) + noise).iter().copied().collect()
        }
    }
}

/// Exact draw of `(X, S)` on `[t0, t1]` from `z0 = (state, location)`.
pub fn simulate<R: Rng + ?Sized>(
    model: &ModelSpec,
    z0: (usize, &[f64]),
    t0: f64,
    t1: f64,
    kappa: f64,
    rng: &mut R,
) -> Result<Trajectory> {
    simulate_observed(model, z0, &[t0, t1], kappa, rng)
}

/// Exact simulation recording the path at each of `obs_times` (the first is the start).
pub fn simulate_observed<R: Rng + ?Sized>(
    model: &ModelSpec,
    z0: (usize, &[f64]),
    obs_times: &[f64],
    kappa: f64,
    rng: &mut R,
) -> Result<Trajectory> {
    let (mut state, x0) = z0;
    let n = model.n_states();
    if state >= n || x0.len() != model.dim() {
        return Err(InchError::PreconditionViolation(format!(
            "initial state {state} / location of dimension {} invalid for the model",
            x0.len()
        )));
    }
    if obs_times.is_empty() || obs_times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(InchError::PreconditionViolation(
            "observation times must be nonempty and strictly increasing".into(),
        ));
    }
    if !(kappa >= 0.0) || !kappa.is_finite() {
        return Err(InchError::PreconditionViolation(format!("invalid kappa {kappa}")));
    }
    let gap = if kappa > 0.0 { Some(Exp::new(kappa).expect("positive rate")) } else { None };
    let mut traj = Trajectory {
        times: vec![obs_times[0]],
        states: vec![state],
        locations: vec![x0.to_vec()],
        kinds: vec![EventKind::Observation],
    };
    let mut t = obs_times[0];
    let mut x = x0.to_vec();
    let mut next = gap.as_ref().map_or(f64::INFINITY, |g| t + g.sample(rng));
    for &obs in &obs_times[1..] {
        // Ties resolve with the potential event first.
        while next <= obs {
            x = sample_segment(model.kernel(state), &x, next - t, rng);
            t = next;
            let u = rng.random::<f64>() * kappa;
            let mut cum = 0.0;
            let mut target = state;
            for j in (0..n).filter(|&j| j != state) {
                cum += model.rate(state, j, t, &x);
                if cum > kappa * (1.0 + 1e-12) {
                    return Err(InchError::PreconditionViolation(format!(
                        "retention probability {} exceeds 1 at t={t}",
                        cum / kappa
                    )));
                }
                if u < cum && target == state {
                    target = j;
                }
            }
            let kind = if target != state { EventKind::Switch } else { EventKind::Potential };
            state = target;
            traj.times.push(t);
            traj.states.push(state);
            traj.locations.push(x.clone());
            traj.kinds.push(kind);
            next = t + gap.as_ref().expect("events only occur when kappa > 0").sample(rng);
        }
        x = sample_segment(model.kernel(state), &x, obs - t, rng);
        t = obs;
        traj.times.push(t);
        traj.states.push(state);
        traj.locations.push(x.clone());
        traj.kinds.push(EventKind::Observation);
    }
    Ok(traj)
}
