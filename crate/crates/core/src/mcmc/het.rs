//! Sampler over potential switch times and the locations at them, for rate functions that
//! may depend on space and time.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::bridge::{bridge_moments, MixtureGaussian};
use super::hom::accept_log;
use super::params::{propose_rates, propose_speeds};
use super::{AcceptanceStats, Priors, Sampler, Tuning};
use crate::error::Result;
use crate::forward::{
    backward_messages_from_terms, forward_messages_from_terms, forward_step, EventGrid, GridKind, GridTerms,
};
use crate::model::ModelSpec;
use crate::numeric::{logsumexp, order_stats_logpdf, poisson_logpmf};
use crate::track::ObservationTrack;
use crate::uniformization::{sample_potential_switches, IntervalSwitches, SwitchSet};

/// Replacement fragments for intervals `a..b` with their proposal densities.
#[derive(Debug, Clone)]
pub struct HetProposal {
    pub a: usize,
    pub fragments: Vec<IntervalSwitches>,
    pub log_q_forward: f64,
    pub log_q_reverse: f64,
}

fn fragment_log_q(
    track: &ObservationTrack,
    c: usize,
    target: &IntervalSwitches,
    anchor: &IntervalSwitches,
    tuning: &Tuning,
    kappa: f64,
) -> f64 {
    let (t0, t1) = (track.times()[c], track.times()[c + 1]);
    let len = t1 - t0;
    let m = target.count();
    let locs = target.locations.as_deref().unwrap_or(&[]);
    let anchors: Vec<(f64, &[f64])> = anchor
        .times
        .iter()
        .zip(anchor.locations.as_deref().unwrap_or(&[]))
        .map(|(t, x)| (*t, x.as_slice()))
        .collect();
    let mom = bridge_moments(track.location(c), track.location(c + 1), t0, t1, &anchors, &target.times, tuning.omega);
    poisson_logpmf(m, kappa * len) + order_stats_logpdf(m, len) + MixtureGaussian::new(&mom, tuning.p_mix).log_density(locs)
}

/// Draws new switch times from the Poisson prior and locations from the blended bridge,
/// for every interval in `[a, b)`. The reverse density uses D-bridges anchored on the new
/// points. `None` if a location covariance is singular.
pub fn propose_het_block<R: Rng + ?Sized>(
    track: &ObservationTrack,
    switches: &SwitchSet,
    a: usize,
    b: usize,
    tuning: &Tuning,
    kappa: f64,
    rng: &mut R,
) -> Option<HetProposal> {
    let mut fragments = Vec::with_capacity(b - a);
    let mut log_q_forward = 0.0;
    let mut log_q_reverse = 0.0;
    for c in a..b {
        let (t0, t1) = (track.times()[c], track.times()[c + 1]);
        let old = switches.interval(c);
        let times = sample_potential_switches(t0, t1, kappa, rng);
        let anchors: Vec<(f64, &[f64])> = old
            .times
            .iter()
            .zip(old.locations.as_deref().unwrap_or(&[]))
            .map(|(t, x)| (*t, x.as_slice()))
            .collect();
        let mom = bridge_moments(track.location(c), track.location(c + 1), t0, t1, &anchors, &times, tuning.omega);
        let locs = MixtureGaussian::new(&mom, tuning.p_mix).sample(rng)?;
        let new = IntervalSwitches::with_locations(times, locs);
        log_q_forward += fragment_log_q(track, c, &new, old, tuning, kappa);
        log_q_reverse += fragment_log_q(track, c, old, &new, tuning, kappa);
        fragments.push(new);
    }
    Some(HetProposal { a, fragments, log_q_forward, log_q_reverse })
}

/// Log prior density of one interval's switch times under the rate-`kappa` Poisson process.
fn log_prior_times(iv: &IntervalSwitches, len: f64, kappa: f64) -> f64 {
    poisson_logpmf(iv.count(), kappa * len) + order_stats_logpdf(iv.count(), len)
}

/// Chain state holding the merged event grid and its forward/backward messages.
#[derive(Debug, Clone)]
pub struct HetChain<'a> {
    track: &'a ObservationTrack,
    model: ModelSpec,
    kappa: f64,
    tuning: Tuning,
    priors: Priors,
    flat: bool,
    switches: SwitchSet,
    terms: GridTerms,
    alpha: Vec<Vec<f64>>,
    beta: Vec<Vec<f64>>,
    obs_index: Vec<usize>,
    loglik: f64,
    stats: AcceptanceStats,
    work: u64,
}

impl<'a> HetChain<'a> {
    /// Starts from prior switch times with locations drawn from independent bridges.
    pub fn new<R: Rng + ?Sized>(
        model: ModelSpec,
        track: &'a ObservationTrack,
        kappa: f64,
        tuning: Tuning,
        priors: Priors,
        flat: bool,
        rng: &mut R,
    ) -> Result<Self> {
        let init = Tuning { p_mix: 1.0, ..tuning.clone() };
        let empty = SwitchSet::empty(track.n_intervals(), true);
        let prop = propose_het_block(track, &empty, 0, track.n_intervals(), &init, kappa, rng)
            .expect("independent bridge covariance is positive definite");
        let switches = SwitchSet::new(prop.fragments);
        let terms = GridTerms::compute(&EventGrid::merge(track, &switches)?, &model, kappa)?;
        let mut chain = HetChain {
            track,
            model,
            kappa,
            tuning,
            priors,
            flat,
            switches,
            terms,
            alpha: Vec::new(),
            beta: Vec::new(),
            obs_index: Vec::new(),
            loglik: 0.0,
            stats: AcceptanceStats::default(),
            work: 0,
        };
        let model = chain.model.clone();
        chain.rebuild(&model)?;
        Ok(chain)
    }

    pub fn switches(&self) -> &SwitchSet {
        &self.switches
    }

    fn rebuild(&mut self, model: &ModelSpec) -> Result<()> {
        let grid = EventGrid::merge(self.track, &self.switches)?;
        self.terms = GridTerms::compute(&grid, model, self.kappa)?;
        self.alpha = forward_messages_from_terms(model.log_initial(), &self.terms);
        self.beta = backward_messages_from_terms(&self.terms);
        self.obs_index = grid.observation_indices();
        let n = model.n_states() as u64;
        self.work += 3 * self.terms.len() as u64 * (n + n * n);
        self.loglik = if self.flat { 0.0 } else { logsumexp(&self.alpha[self.terms.len()]) };
        Ok(())
    }

    /// Likelihood after replacing intervals `a..a+len` by `fragments`, from the cached
    /// messages at the bracketing observations.
    fn block_loglik(&mut self, a: usize, fragments: &[IntervalSwitches]) -> Result<f64> {
        let b = a + fragments.len();
        let mut times = Vec::new();
        let mut kinds = Vec::new();
        let mut locations = Vec::new();
        for (c, iv) in (a..b).zip(fragments) {
            times.push(self.track.times()[c]);
            kinds.push(GridKind::Observation);
            locations.push(self.track.location(c).to_vec());
            times.extend_from_slice(&iv.times);
            kinds.extend(std::iter::repeat_n(GridKind::PotentialSwitch, iv.count()));
            locations.extend(iv.locations.iter().flatten().cloned());
        }
        times.push(self.track.times()[b]);
        kinds.push(GridKind::Observation);
        locations.push(self.track.location(b).to_vec());
        let grid = EventGrid::new(times, kinds, locations)?;
        let terms = match GridTerms::compute(&grid, &self.model, self.kappa) {
            Ok(t) => t,
            Err(crate::InchError::NumericalUnderflow(_)) => return Ok(f64::NEG_INFINITY),
            Err(e) => return Err(e),
        };
        let mut msg = self.alpha[self.obs_index[a]].clone();
        for k in 0..terms.len() {
            msg = forward_step(&msg, &terms.emissions[k], terms.transitions[k].as_deref());
        }
        let n = self.model.n_states() as u64;
        self.work += terms.len() as u64 * (n + n * n);
        let joint: Vec<f64> = msg.iter().zip(&self.beta[self.obs_index[b]]).map(|(x, y)| x + y).collect();
        Ok(logsumexp(&joint))
    }

    pub fn block_move<R: Rng + ?Sized>(&mut self, a: usize, b: usize, rng: &mut R) -> Result<bool> {
        let Some(prop) = propose_het_block(self.track, &self.switches, a, b, &self.tuning, self.kappa, rng) else {
            AcceptanceStats::record(&mut self.stats.trajectory, false);
            return Ok(false);
        };
        let times = self.track.times();
        let mut log_prior = 0.0;
        for (c, iv) in (a..b).zip(&prop.fragments) {
            let len = times[c + 1] - times[c];
            log_prior += log_prior_times(iv, len, self.kappa) - log_prior_times(self.switches.interval(c), len, self.kappa);
        }
        let new_ll = if self.flat { 0.0 } else { self.block_loglik(a, &prop.fragments)? };
        let log_ratio = new_ll - self.loglik + log_prior + prop.log_q_reverse - prop.log_q_forward;
        let accept = accept_log(log_ratio, rng);
        if accept {
            for (c, iv) in (a..b).zip(prop.fragments) {
                self.switches.set_interval(c, iv);
            }
            let model = self.model.clone();
            self.rebuild(&model)?;
        }
        AcceptanceStats::record(&mut self.stats.trajectory, accept);
        Ok(accept)
    }

    fn param_move<R: Rng + ?Sized>(&mut self, proposed: Option<(ModelSpec, f64)>, rng: &mut R) -> Result<bool> {
        let Some((model, log_jac)) = proposed else {
            return Ok(false);
        };
        let ll = if self.flat {
            0.0
        } else {
            let grid = EventGrid::merge(self.track, &self.switches)?;
            match GridTerms::compute(&grid, &model, self.kappa) {
                Ok(terms) => {
                    let n = model.n_states() as u64;
                    self.work += terms.len() as u64 * (n + n * n);
                    let alpha = forward_messages_from_terms(model.log_initial(), &terms);
                    logsumexp(&alpha[terms.len()])
                }
                Err(crate::InchError::NumericalUnderflow(_)) => f64::NEG_INFINITY,
                Err(e) => return Err(e),
            }
        };
        if !accept_log(ll - self.loglik + log_jac, rng) {
            return Ok(false);
        }
        self.model = model.clone();
        self.rebuild(&model)?;
        Ok(true)
    }

    /// Absolute difference between the cached and a freshly computed log likelihood.
    pub fn cache_error(&self) -> Result<f64> {
        let grid = EventGrid::merge(self.track, &self.switches)?;
        let fresh = crate::forward::forward_loglik(&grid, &self.model, self.kappa)?;
        let cached = if self.flat { fresh } else { self.loglik };
        let from_beta =
            logsumexp(&self.model.log_initial().iter().zip(&self.beta[0]).map(|(a, b)| a + b).collect::<Vec<_>>());
        Ok((cached - fresh).abs().max((from_beta - fresh).abs()))
    }
}


impl Sampler for HetChain<'_> {
    fn step(&mut self, rng: &mut ChaCha8Rng, update_params: bool) -> Result<()> {
        let (a, b) = self.tuning.sample_block(self.track.n_intervals(), rng);
        self.block_move(a, b, rng)?;
        if update_params {
            if self.model.speeds().is_some() {
                let p = propose_speeds(&self.model, self.tuning.speed_step, &self.priors, rng)?;
                let ok = self.param_move(p, rng)?;
                AcceptanceStats::record(&mut self.stats.speeds, ok);
            }
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
        self.switches.counts()
    }

    fn stats(&self) -> &AcceptanceStats {
        &self.stats
    }

    fn work(&self) -> u64 {
        self.work
    }
}
