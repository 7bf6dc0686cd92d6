//! Comparison sampler for spatially homogeneous Brownian models that keeps the behavioural
//! state after every potential switch as part of the chain state.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{InchError, Result};
use crate::mcmc::params::{propose_rates, propose_speeds};
use crate::mcmc::{AcceptanceStats, Priors, Sampler, Tuning};
use crate::model::ModelSpec;
use crate::numeric::{iso_gauss_logpdf, sq_dist};
use crate::track::ObservationTrack;
use crate::uniformization::{sample_potential_switches, IntervalSwitches, SwitchSet};

/// Potential switch times of one interval with the state entered at each.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabelledInterval {
    pub times: Vec<f64>,
    pub labels: Vec<usize>,
}

/// Initial state plus labelled potential switches; together they fix `S(t)` everywhere.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelledSwitchSet {
    pub initial: usize,
    pub intervals: Vec<LabelledInterval>,
}

impl LabelledSwitchSet {
    pub fn validate(&self, obs_times: &[f64], n_states: usize) -> Result<()> {
        let times = SwitchSet::new(self.intervals.iter().map(|iv| IntervalSwitches::times_only(iv.times.clone())).collect());
        times.validate(obs_times, 1)?;
        if self.initial >= n_states {
            return Err(InchError::PreconditionViolation(format!("initial state {} out of range", self.initial)));
        }
        for (c, iv) in self.intervals.iter().enumerate() {
            if iv.labels.len() != iv.times.len() {
                return Err(InchError::SequenceLengthMismatch { expected: iv.times.len(), got: iv.labels.len() });
            }
            if let Some(s) = iv.labels.iter().find(|&&s| s >= n_states) {
                return Err(InchError::PreconditionViolation(format!("label {s} in interval {c} out of range")));
            }
        }
        Ok(())
    }

    pub fn switch_set(&self) -> SwitchSet {
        SwitchSet::new(self.intervals.iter().map(|iv| IntervalSwitches::times_only(iv.times.clone())).collect())
    }

    /// State in force at each observation time.
    pub fn states_at_observations(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.intervals.len() + 1);
        let mut s = self.initial;
        out.push(s);
        for iv in &self.intervals {
            if let Some(&l) = iv.labels.last() {
                s = l;
            }
            out.push(s);
        }
        out
    }

    pub fn total(&self) -> usize {
        self.intervals.iter().map(|iv| iv.times.len()).sum()
    }
}

/// Log transition probabilities at one switch, cached when the rates are constant.
struct TransitionTable<'m> {
    model: &'m ModelSpec,
    kappa: f64,
    constant: Option<Vec<f64>>,
}

impl<'m> TransitionTable<'m> {
    fn new(model: &'m ModelSpec, kappa: f64, origin: &[f64]) -> Result<Self> {
        let constant = if model.rates().is_constant() {
            Some(model.log_transition_probs(kappa, 0.0, origin)?)
        } else {
            None
        };
        Ok(TransitionTable { model, kappa, constant })
    }

    fn log_p(&self, from: usize, to: usize, t: f64, x: &[f64]) -> Result<f64> {
        let n = self.model.n_states();
        Ok(match &self.constant {
            Some(p) => p[from * n + to],
            None => self.model.log_transition_probs(self.kappa, t, x)?[from * n + to],
        })
    }
}

/// Log density of one interval's displacement and labelled transitions given the state
/// entering it; also returns the state leaving it. `observe = false` keeps only the
/// transition terms.
#[allow(clippy::too_many_arguments)]
fn interval_contribution(
    table: &TransitionTable,
    speeds: &[f64],
    x0: &[f64],
    x1: &[f64],
    t0: f64,
    t1: f64,
    entering: usize,
    iv: &LabelledInterval,
    observe: bool,
) -> Result<(f64, usize)> {
    let mut lp = 0.0;
    let mut var = 0.0;
    let (mut prev, mut tp) = (entering, t0);
    for (&t, &l) in iv.times.iter().zip(&iv.labels) {
        var += (t - tp) * speeds[prev];
        lp += table.log_p(prev, l, t, x0)?;
        prev = l;
        tp = t;
    }
    var += (t1 - tp) * speeds[prev];
    if observe {
        lp += iso_gauss_logpdf(sq_dist(x0, x1), var, x0.len());
    }
    Ok((lp, prev))
}

fn brownian_speeds(model: &ModelSpec) -> Result<Vec<f64>> {
    if !model.is_homogeneous() {
        return Err(InchError::PreconditionViolation("baseline requires a spatially homogeneous model".into()));
    }
    model
        .speeds()
        .ok_or_else(|| InchError::PreconditionViolation("baseline requires Brownian movement kernels".into()))
}

/// Log likelihood of the track and the labelled transitions given the full state path,
/// including the initial-state probability.
pub fn conditional_loglik(
    track: &ObservationTrack,
    labelled: &LabelledSwitchSet,
    model: &ModelSpec,
    kappa: f64,
) -> Result<f64> {
    labelled.validate(track.times(), model.n_states())?;
    let speeds = brownian_speeds(model)?;
    let table = TransitionTable::new(model, kappa, track.location(0))?;
    let mut total = model.log_initial()[labelled.initial];
    let mut s = labelled.initial;
    for (c, iv) in labelled.intervals.iter().enumerate() {
        let t = track.times();
        let (lp, exit) =
            interval_contribution(&table, &speeds, track.location(c), track.location(c + 1), t[c], t[c + 1], s, iv, true)?;
        total += lp;
        s = exit;
    }
    Ok(total)
}

/// Sampler state: labelled switches with per-interval contributions and entering states.
#[derive(Debug, Clone)]
pub struct BaselineChain<'a> {
    track: &'a ObservationTrack,
    model: ModelSpec,
    speeds: Vec<f64>,
    kappa: f64,
    tuning: Tuning,
    priors: Priors,
    flat: bool,
    state: LabelledSwitchSet,
    entering: Vec<usize>,
    contrib: Vec<f64>,
    loglik: f64,
    stats: AcceptanceStats,
    work: u64,
}

/// Per-interval terms after a change: `(interval, contribution, state leaving it)`.
type Updates = Vec<(usize, f64, usize)>;

impl<'a> BaselineChain<'a> {
    /// Starts from prior switch times with labels simulated from the uniformized chain.
    pub fn new<R: Rng + ?Sized>(
        model: ModelSpec,
        track: &'a ObservationTrack,
        kappa: f64,
        tuning: Tuning,
        priors: Priors,
        flat: bool,
        rng: &mut R,
    ) -> Result<Self> {
        let speeds = brownian_speeds(&model).map_err(|e| InchError::config("run.sampler", e.to_string()))?;
        let n = model.n_states();
        let draw = |probs: &[f64], rng: &mut R| {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (k, p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    return k;
                }
            }
            probs.len() - 1
        };
        let initial = draw(model.initial(), rng);
        let mut s = initial;
        let times = track.times();
        let mut intervals = Vec::with_capacity(track.n_intervals());
        for c in 0..track.n_intervals() {
            let ts = sample_potential_switches(times[c], times[c + 1], kappa, rng);
            let mut labels = Vec::with_capacity(ts.len());
            for &t in &ts {
                let p = model.uniform_transition_probs(kappa, t, track.location(c))?;
                let row: Vec<f64> = (0..n).map(|j| p[(s, j)]).collect();
                s = draw(&row, rng);
                labels.push(s);
            }
            intervals.push(LabelledInterval { times: ts, labels });
        }
        let mut chain = BaselineChain {
            track,
            model,
            speeds,
            kappa,
            tuning,
            priors,
            flat,
            state: LabelledSwitchSet { initial, intervals },
            entering: Vec::new(),
            contrib: Vec::new(),
            loglik: 0.0,
            stats: AcceptanceStats::default(),
            work: 0,
        };
        let model = chain.model.clone();
        let (contrib, entering) = chain.all_contributions(&model)?;
        chain.contrib = contrib;
        chain.entering = entering;
        chain.sum_loglik();
        Ok(chain)
    }

    pub fn labelled(&self) -> &LabelledSwitchSet {
        &self.state
    }

    fn sum_loglik(&mut self) {
        self.loglik = self.model.log_initial()[self.state.initial] + self.contrib.iter().sum::<f64>();
    }

    fn all_contributions(&mut self, model: &ModelSpec) -> Result<(Vec<f64>, Vec<usize>)> {
        let speeds = model.speeds().expect("Brownian model");
        let table = TransitionTable::new(model, self.kappa, self.track.location(0))?;
        let t = self.track.times();
        let mut contrib = Vec::with_capacity(self.state.intervals.len());
        let mut entering = Vec::with_capacity(self.state.intervals.len() + 1);
        let mut s = self.state.initial;
        entering.push(s);
        for (c, iv) in self.state.intervals.iter().enumerate() {
            let (lp, exit) = interval_contribution(
                &table,
                &speeds,
                self.track.location(c),
                self.track.location(c + 1),
                t[c],
                t[c + 1],
                s,
                iv,
                !self.flat,
            )?;
            self.work += 1 + iv.times.len() as u64;
            contrib.push(lp);
            entering.push(exit);
            s = exit;
        }
        Ok((contrib, entering))
    }

    /// Contributions after replacing intervals `lo..lo+new.len()` (and the initial state),
    /// continuing past the block until the entering state agrees with the current path.
    fn evaluate(&mut self, lo: usize, new: &[LabelledInterval], initial: usize) -> Result<(f64, Updates)> {
        let table = TransitionTable::new(&self.model, self.kappa, self.track.location(0))?;
        let t = self.track.times();
        let hi = lo + new.len();
        let n_int = self.state.intervals.len();
        let mut delta = 0.0;
        let mut updates = Vec::new();
        let mut s = if lo == 0 { initial } else { self.entering[lo] };
        if lo == 0 {
            delta += self.model.log_initial()[initial] - self.model.log_initial()[self.state.initial];
        }
        let mut c = lo;
        while c < n_int {
            if c >= hi && s == self.entering[c] {
                break;
            }
            let iv = if c < hi { &new[c - lo] } else { &self.state.intervals[c] };
            let (lp, exit) = interval_contribution(
                &table,
                &self.speeds,
                self.track.location(c),
                self.track.location(c + 1),
                t[c],
                t[c + 1],
                s,
                iv,
                !self.flat,
            )?;
            self.work += 1 + iv.times.len() as u64;
            delta += lp - self.contrib[c];
            updates.push((c, lp, exit));
            s = exit;
            c += 1;
        }
        Ok((delta, updates))
    }

    fn apply(&mut self, lo: usize, new: Vec<LabelledInterval>, initial: usize, updates: Updates) {
        for (k, iv) in new.into_iter().enumerate() {
            self.state.intervals[lo + k] = iv;
        }
        self.state.initial = initial;
        self.entering[0] = initial;
        for (c, lp, exit) in updates {
            self.contrib[c] = lp;
            self.entering[c + 1] = exit;
        }
        self.sum_loglik();
    }

    /// Redraws times (Poisson prior) and labels (uniform) on intervals `[a, b)`, and the
    /// initial state when `a = 0`.
    pub fn block_move<R: Rng + ?Sized>(&mut self, a: usize, b: usize, rng: &mut R) -> Result<bool> {
        let n = self.model.n_states();
        let times = self.track.times();
        let initial = if a == 0 { rng.random_range(0..n) } else { self.state.initial };
        let mut new = Vec::with_capacity(b - a);
        let mut d_count = 0.0;
        for c in a..b {
            let ts = sample_potential_switches(times[c], times[c + 1], self.kappa, rng);
            let labels = (0..ts.len()).map(|_| rng.random_range(0..n)).collect();
            d_count += ts.len() as f64 - self.state.intervals[c].times.len() as f64;
            new.push(LabelledInterval { times: ts, labels });
        }
        let (delta, updates) = self.evaluate(a, &new, initial)?;
        let accept = crate::mcmc::hom::accept_log(delta + d_count * (n as f64).ln(), rng);
        if accept {
            self.apply(a, new, initial, updates);
        }
        AcceptanceStats::record(&mut self.stats.trajectory, accept);
        Ok(accept)
    }

    /// Redraws a window of consecutive labels in the sequence `initial, labels...` uniformly.
    pub fn label_move<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<bool> {
        let n = self.model.n_states();
        let len = self.state.total() + 1;
        let w = self.tuning.label_window.min(len);
        let start = rng.random_range(0..=len - w);
        let mut initial = self.state.initial;
        let mut new: Vec<LabelledInterval> = Vec::new();
        let mut lo = None;
        let mut pos = 1;
        if start == 0 {
            initial = rng.random_range(0..n);
            lo = Some(0);
        }
        for (c, iv) in self.state.intervals.iter().enumerate() {
            if pos >= start + w {
                break;
            }
            let m = iv.labels.len();
            if pos + m > start && m > 0 {
                let mut changed = iv.clone();
                for (k, l) in changed.labels.iter_mut().enumerate() {
                    if (start..start + w).contains(&(pos + k)) {
                        *l = rng.random_range(0..n);
                    }
                }
                let lo_c = *lo.get_or_insert(c);
                while lo_c + new.len() < c {
                    new.push(self.state.intervals[lo_c + new.len()].clone());
                }
                new.push(changed);
            }
            pos += m;
        }
        let lo = lo.unwrap_or(0);
        let (delta, updates) = self.evaluate(lo, &new, initial)?;
        let accept = crate::mcmc::hom::accept_log(delta, rng);
        if accept {
            self.apply(lo, new, initial, updates);
        }
        AcceptanceStats::record(&mut self.stats.labels, accept);
        Ok(accept)
    }

    fn param_move<R: Rng + ?Sized>(&mut self, proposed: Option<(ModelSpec, f64)>, rng: &mut R) -> Result<bool> {
        let Some((model, log_jac)) = proposed else {
            return Ok(false);
        };
        let (contrib, entering) = self.all_contributions(&model)?;
        let ll = model.log_initial()[self.state.initial] + contrib.iter().sum::<f64>();
        if !crate::mcmc::hom::accept_log(ll - self.loglik + log_jac, rng) {
            return Ok(false);
        }
        self.speeds = model.speeds().expect("Brownian model");
        self.model = model;
        self.contrib = contrib;
        self.entering = entering;
        self.sum_loglik();
        Ok(true)
    }

    /// Absolute difference between the cached and a freshly computed log likelihood.
    pub fn cache_error(&self) -> Result<f64> {
        let fresh = if self.flat {
            let mut copy = self.clone();
            let model = copy.model.clone();
            let (c, _) = copy.all_contributions(&model)?;
            self.model.log_initial()[self.state.initial] + c.iter().sum::<f64>()
        } else {
            conditional_loglik(self.track, &self.state, &self.model, self.kappa)?
        };
        let entering_ok = self.entering == self.state.states_at_observations();
        Ok(if entering_ok { (fresh - self.loglik).abs() } else { f64::INFINITY })
    }

    /// Fraction of the observation period spent in each state.
    pub fn occupancy(&self) -> Vec<f64> {
        let n = self.model.n_states();
        let t = self.track.times();
        let mut occ = vec![0.0; n];
        for (c, iv) in self.state.intervals.iter().enumerate() {
            let (mut s, mut tp) = (self.entering[c], t[c]);
            for (&tk, &l) in iv.times.iter().zip(&iv.labels) {
                occ[s] += tk - tp;
                s = l;
                tp = tk;
            }
            occ[s] += t[c + 1] - tp;
        }
        let span = t[t.len() - 1] - t[0];
        occ.iter().map(|v| v / span).collect()
    }
}

impl Sampler for BaselineChain<'_> {
    fn step(&mut self, rng: &mut ChaCha8Rng, update_params: bool) -> Result<()> {
        let (a, b) = self.tuning.sample_block(self.track.n_intervals(), rng);
        self.block_move(a, b, rng)?;
        self.label_move(rng)?;
        if update_params {
            let p = propose_speeds(&self.model, self.tuning.speed_step, &self.priors, rng)?;
            let ok = self.param_move(p, rng)?;
            AcceptanceStats::record(&mut self.stats.speeds, ok);
            if self.model.rates().params().is_some() {
                let p = propose_rates(&self.model, self.tuning.rate_step, rng)?;
                let ok = self.param_move(p, rng)?;
                AcceptanceStats::record(&mut self.stats.rates, ok);
            }
        }
        Ok(())
    }

    fn model(&self) -> &ModelSpec {
        &self.model
    }

    fn loglik(&self) -> f64 {
        self.loglik
    }

    fn switch_counts(&self) -> Vec<usize> {
        self.state.intervals.iter().map(|iv| iv.times.len()).collect()
    }

    fn state_summary(&self) -> Vec<f64> {
        self.occupancy()
    }

    fn stats(&self) -> &AcceptanceStats {
        &self.stats
    }

    fn work(&self) -> u64 {
        self.work
    }
}
