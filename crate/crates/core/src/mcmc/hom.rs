//! Sampler over potential switch times for spatially homogeneous models.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::params::{propose_rates, propose_speeds};
use super::{AcceptanceStats, Priors, Sampler, Tuning};
use crate::error::{InchError, Result};
use crate::homolik::{hom_backward_step, hom_forward_step, interval_kernel, interval_kernel_at, IntervalKernelMatrix};
use crate::model::ModelSpec;
use crate::numeric::logsumexp;
use crate::track::ObservationTrack;
use crate::uniformization::{sample_potential_switches, IntervalSwitches, SwitchSet};

/// Chain state with per-interval kernels and forward/backward messages cached at every
/// observation, so a block update only evaluates the refreshed intervals.
#[derive(Debug, Clone)]
pub struct HomChain<'a> {
    track: &'a ObservationTrack,
    model: ModelSpec,
    kappa: f64,
    tuning: Tuning,
    priors: Priors,
    flat: bool,
    switches: SwitchSet,
    kernels: Vec<IntervalKernelMatrix>,
    alpha: Vec<Vec<f64>>,
    beta: Vec<Vec<f64>>,
    loglik: f64,
    stats: AcceptanceStats,
    work: u64,
    breaches: u64,
}

const INIT_ATTEMPTS: usize = 1000;

fn kernel_cost(n: usize, m: usize) -> u64 {
    (n as u64).saturating_pow(m as u32 + 1)
}

impl<'a> HomChain<'a> {
    /// Starts from switch times drawn from the prior, redrawing any that breach the guard.
    pub fn new<R: Rng + ?Sized>(
        model: ModelSpec,
        track: &'a ObservationTrack,
        kappa: f64,
        tuning: Tuning,
        priors: Priors,
        flat: bool,
        rng: &mut R,
    ) -> Result<Self> {
        if !model.is_homogeneous() {
            return Err(InchError::config(
                "run.sampler",
                "inch-hom requires a spatially homogeneous rate family",
            ));
        }
        let times = track.times();
        let mut intervals = Vec::with_capacity(track.n_intervals());
        let mut kernels = Vec::with_capacity(track.n_intervals());
        let mut work = 0;
        for c in 0..track.n_intervals() {
            let mut attempt = 0;
            loop {
                let iv = IntervalSwitches::times_only(sample_potential_switches(times[c], times[c + 1], kappa, rng));
                let single = SwitchSet::new(vec![iv.clone()]);
                let sub = ObservationTrack::new(
                    vec![times[c], times[c + 1]],
                    vec![track.location(c).to_vec(), track.location(c + 1).to_vec()],
                )?;
                match interval_kernel_at(&sub, &single, &model, kappa, 0, tuning.guard) {
                    Ok(k) => {
                        work += kernel_cost(model.n_states(), iv.count());
                        intervals.push(iv);
                        kernels.push(k);
                        break;
                    }
                    Err(e) if e.is_guard_breach() && attempt < INIT_ATTEMPTS => attempt += 1,
                    Err(e) => return Err(e),
                }
            }
        }
        let mut chain = HomChain {
            track,
            model,
            kappa,
            tuning,
            priors,
            flat,
            switches: SwitchSet::new(intervals),
            kernels,
            alpha: Vec::new(),
            beta: Vec::new(),
            loglik: 0.0,
            stats: AcceptanceStats::default(),
            work,
            breaches: 0,
        };
        chain.refresh_messages(0, chain.kernels.len());
        Ok(chain)
    }

    pub fn switches(&self) -> &SwitchSet {
        &self.switches
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Recomputes forward messages from `from` onwards and backward messages below `to`.
    fn refresh_messages(&mut self, from: usize, to: usize) {
        let n_int = self.kernels.len();
        if self.alpha.len() != n_int + 1 {
            self.alpha = vec![Vec::new(); n_int + 1];
            self.beta = vec![Vec::new(); n_int + 1];
            self.alpha[0] = self.model.log_initial().to_vec();
            self.beta[n_int] = vec![0.0; self.model.n_states()];
            return self.refresh_messages(0, n_int);
        }
        for c in from..n_int {
            self.alpha[c + 1] = hom_forward_step(&self.alpha[c], &self.kernels[c]);
        }
        for c in (0..to).rev() {
            self.beta[c] = hom_backward_step(&self.beta[c + 1], &self.kernels[c]);
        }
        self.work += ((n_int - from + to) * self.model.n_states().pow(2)) as u64;
        self.loglik = if self.flat { 0.0 } else { logsumexp(&self.alpha[n_int]) };
    }

    fn kernels_for(&mut self, model: &ModelSpec, switches: &SwitchSet, range: std::ops::Range<usize>) -> Result<Vec<IntervalKernelMatrix>> {
        range
            .map(|c| {
                self.work += kernel_cost(model.n_states(), switches.interval(c).count());
                interval_kernel_at(self.track, switches, model, self.kappa, c, self.tuning.guard)
            })
            .collect()
    }

    /// Refreshes the switch times of intervals `[a, b)` from the prior and accepts by the
    /// likelihood ratio alone.
    pub fn block_move<R: Rng + ?Sized>(&mut self, a: usize, b: usize, rng: &mut R) -> Result<bool> {
        let times = self.track.times();
        let n = self.model.n_states();
        let mut fresh = Vec::with_capacity(b - a);
        let mut new_kernels = Vec::with_capacity(b - a);
        for c in a..b {
            let iv = sample_potential_switches(times[c], times[c + 1], self.kappa, rng);
            self.work += kernel_cost(n, iv.len());
            let k = interval_kernel(
                &self.model,
                self.kappa,
                self.track.location(c),
                self.track.location(c + 1),
                times[c],
                &iv,
                times[c + 1],
                self.tuning.guard,
            );
            match k {
                Ok(k) => new_kernels.push(k),
                Err(e) if e.is_guard_breach() => {
                    if self.breaches == 0 {
                        log::warn!("{e}; proposal rejected (further breaches are counted silently)");
                    }
                    self.breaches += 1;
                    AcceptanceStats::record(&mut self.stats.trajectory, false);
                    return Ok(false);
                }
                Err(e) => return Err(e),
            }
            fresh.push(iv);
        }
        let accept = if self.flat {
            true
        } else {
            let mut msg = self.alpha[a].clone();
            for k in &new_kernels {
                msg = hom_forward_step(&msg, k);
            }
            self.work += ((b - a) * n * n) as u64;
            let joint: Vec<f64> = msg.iter().zip(&self.beta[b]).map(|(x, y)| x + y).collect();
            let new_ll = logsumexp(&joint);
            accept_log(new_ll - self.loglik, rng)
        };
        if accept {
            for ((c, k), iv) in (a..b).zip(new_kernels).zip(fresh) {
                self.kernels[c] = k;
                self.switches.set_interval(c, IntervalSwitches::times_only(iv));
            }
            self.refresh_messages(a, b);
        }
        AcceptanceStats::record(&mut self.stats.trajectory, accept);
        Ok(accept)
    }

    /// Log likelihood of the whole track under `model` with the current switch times.
    fn full_loglik(&mut self, model: &ModelSpec) -> Result<(f64, Vec<IntervalKernelMatrix>)> {
        let switches = self.switches.clone();
        let kernels = self.kernels_for(model, &switches, 0..self.kernels.len())?;
        let mut alpha = model.log_initial().to_vec();
        for k in &kernels {
            alpha = hom_forward_step(&alpha, k);
        }
        self.work += (kernels.len() * model.n_states().pow(2)) as u64;
        Ok((logsumexp(&alpha), kernels))
    }

    fn param_move<R: Rng + ?Sized>(&mut self, proposed: Option<(ModelSpec, f64)>, rng: &mut R) -> Result<bool> {
        let Some((model, log_jac)) = proposed else {
            return Ok(false);
        };
        let (ll, kernels) = if self.flat {
            (0.0, Vec::new())
        } else {
            self.full_loglik(&model)?
        };
        if !accept_log(ll - self.loglik + log_jac, rng) {
            return Ok(false);
        }
        self.model = model;
        if self.flat {
            let switches = self.switches.clone();
            let model = self.model.clone();
            self.kernels = self.kernels_for(&model, &switches, 0..self.kernels.len())?;
        } else {
            self.kernels = kernels;
        }
        self.refresh_messages(0, self.kernels.len());
        Ok(true)
    }

    /// Largest absolute difference between the cached log likelihood and a fresh evaluation.
    pub fn cache_error(&self) -> Result<f64> {
        let fresh = crate::homolik::hom_forward_loglik(self.track, &self.switches, &self.model, self.kappa, self.tuning.guard)?;
        let from_beta = logsumexp(
            &self.model.log_initial().iter().zip(&self.beta[0]).map(|(a, b)| a + b).collect::<Vec<_>>(),
        );
        let cached = if self.flat { fresh } else { self.loglik };
        Ok((cached - fresh).abs().max((from_beta - fresh).abs()))
    }
}

pub(crate) fn accept_log<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
    if log_ratio >= 0.0 {
        return true;
    }
    if log_ratio.is_nan() || log_ratio == f64::NEG_INFINITY {
        return false;
    }
    rng.random::<f64>().ln() < log_ratio
}

impl Sampler for HomChain<'_> {
    fn step(&mut self, rng: &mut ChaCha8Rng, update_params: bool) -> Result<()> {
        let (a, b) = self.tuning.sample_block(self.track.n_intervals(), rng);
        self.block_move(a, b, rng)?;
        if update_params {
            let speeds = propose_speeds(&self.model, self.tuning.speed_step, &self.priors, rng)?;
            let ok = self.param_move(speeds, rng)?;
            AcceptanceStats::record(&mut self.stats.speeds, ok);
            if self.model.rates().params().is_some() {
                let rates = propose_rates(&self.model, self.tuning.rate_step, rng)?;
                let ok = self.param_move(rates, rng)?;
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

    fn guard_breaches(&self) -> u64 {
        self.breaches
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mcmc::{run_chain, RunSettings, SamplerKind};
    use crate::numeric::poisson_logpmf;
    use nalgebra::dmatrix;
    use rand::SeedableRng;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn two_state() -> ModelSpec {
        ModelSpec::brownian(2, &[0.5, 3.0], dmatrix![0.0, 0.05; 0.08, 0.0], dmatrix![0.0, 0.1; 0.1, 0.0]).unwrap()
    }

    fn track(n: usize) -> ObservationTrack {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let mut x = vec![0.0, 0.0];
        let mut locs = Vec::new();
        for _ in 0..n {
            locs.push(x.clone());
            x[0] += rng.random_range(-3.0..3.0);
            x[1] += rng.random_range(-3.0..3.0);
        }
        ObservationTrack::new((0..n).map(|k| 10.0 * k as f64).collect(), locs).unwrap()
    }

    #[test]
    fn cached_messages_stay_coherent() {
        let t = track(25);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let tuning = Tuning { resample_frac: 0.2, ..Tuning::default() };
        let mut chain = HomChain::new(two_state(), &t, 0.1, tuning, Priors::default(), false, &mut rng).unwrap();
        let mut accepted = 0;
        for _ in 0..300 {
            chain.step(&mut rng, true).unwrap();
            assert!(chain.cache_error().unwrap() < 1e-9);
            accepted += chain.stats().trajectory.0;
        }
        assert!(accepted > 0);
    }

    #[test]
    fn equal_speeds_always_accept() {
        let t = track(10);
        let m = ModelSpec::new(
            2,
            vec![
                crate::model::MovementKernel::LinearGaussian {
                    drift: nalgebra::DMatrix::zeros(2, 2),
                    offset: nalgebra::DVector::zeros(2),
                    diffusion: nalgebra::DMatrix::identity(2, 2),
                };
                2
            ],
            crate::model::RateFunction::constant(dmatrix![0.0, 0.05; 0.05, 0.0], dmatrix![0.0, 0.1; 0.1, 0.0]),
            None,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut chain = HomChain::new(m, &t, 0.1, Tuning::default(), Priors::default(), false, &mut rng).unwrap();
        for _ in 0..200 {
            let (a, b) = chain.tuning.sample_block(9, &mut rng);
            assert!(chain.block_move(a, b, &mut rng).unwrap());
        }
    }

    #[test]
    fn flat_likelihood_recovers_poisson_counts() {
        let t = track(3);
        let settings = RunSettings {
            iters: 20_000,
            burn_in: 0,
            thin: 1,
            update_params: false,
            flat_likelihood: true,
            seed: 11,
            ..RunSettings::default()
        };
        let tuning = Tuning { resample_frac: 0.5, max_block: Some(1), ..Tuning::default() };
        let out = run_chain(SamplerKind::InchHom, &two_state(), &t, 0.1, &tuning, &Priors::default(), &settings).unwrap();
        // Interval 0 is refreshed independently every other iteration on average; thin by 10.
        let counts: Vec<usize> = out.samples.iter().step_by(10).map(|s| s.switch_counts[0]).collect();
        let n = counts.len() as f64;
        let mut obs = [0.0; 4];
        for &m in &counts {
            obs[m.min(3)] += 1.0;
        }
        let mut exp = [0.0; 4];
        for (m, e) in exp.iter_mut().enumerate().take(3) {
            *e = poisson_logpmf(m, 1.0).exp() * n;
        }
        exp[3] = n - exp[..3].iter().sum::<f64>();
        let chi2: f64 = obs.iter().zip(&exp).map(|(o, e)| (o - e).powi(2) / e).sum();
        let p = 1.0 - ChiSquared::new(3.0).unwrap().cdf(chi2);
        assert!(p > 0.001, "chi2 {chi2}, p {p}, obs {obs:?}");
    }

    #[test]
    fn guard_breach_rejects_and_counts() {
        let t = track(4);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let tuning = Tuning { guard: 4.0, ..Tuning::default() };
        let mut chain = HomChain::new(two_state(), &t, 0.3, tuning, Priors::default(), false, &mut rng).unwrap();
        for _ in 0..300 {
            chain.block_move(0, 3, &mut rng).unwrap();
        }
        assert!(chain.guard_breaches() > 0);
        assert!(chain.switches().counts().iter().all(|&m| m <= 3));
    }

    #[test]
    fn rejects_heterogeneous_models() {
        let t = track(4);
        let m = ModelSpec::new(
            2,
            vec![crate::model::MovementKernel::brownian(1.0), crate::model::MovementKernel::brownian(2.0)],
            crate::model::RateFunction::custom("space", dmatrix![0.0, 0.1; 0.1, 0.0], false, |_, _, _, x: &[f64]| {
                0.05 + 0.05 * x[0].tanh()
            }),
            None,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(HomChain::new(m, &t, 0.2, Tuning::default(), Priors::default(), false, &mut rng).is_err());
    }
}
