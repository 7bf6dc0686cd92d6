//! Metropolis-Hastings samplers over potential switching times (and, for spatially
//! heterogeneous models, the locations at them), with behavioural states summed out
//! by the forward algorithm, plus random-walk parameter moves.

pub mod bridge;
pub mod het;
pub mod hom;
pub mod params;
pub mod tune;

use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baseline::BaselineChain;
use crate::error::{InchError, Result};
use crate::homolik::DEFAULT_SEQUENCE_GUARD;
use crate::model::ModelSpec;
use crate::track::ObservationTrack;

pub use bridge::{bridge_moments, BridgeMoments};
pub use het::{propose_het_block, HetChain, HetProposal};
pub use hom::HomChain;

/// Which trajectory sampler drives the chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerKind {
    /// Switch times only; locations and states integrated out.
    InchHom,
    /// Switch times and locations; states integrated out.
    InchHet,
    /// Switch times and explicit state labels.
    Baseline,
}

impl SamplerKind {
    pub fn name(&self) -> &'static str {
        match self {
            SamplerKind::InchHom => "inch-hom",
            SamplerKind::InchHet => "inch-het",
            SamplerKind::Baseline => "baseline",
        }
    }
}

/// Proposal tuning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tuning {
    /// Bridge volatility for location proposals (distance^2 / time).
    pub omega: f64,
    /// Weight of the independent bridge in the location proposal.
    pub p_mix: f64,
    /// Expected fraction of intervals refreshed by one trajectory move.
    pub resample_frac: f64,
    /// Hard cap on the block length, in intervals.
    pub max_block: Option<usize>,
    /// Standard deviation of the log-speed random walk.
    pub speed_step: f64,
    /// Standard deviation of the log-rate random walk.
    pub rate_step: f64,
    /// Number of consecutive labels redrawn by the baseline's relabelling move.
    pub label_window: usize,
    /// Limit on interior state sequences per interval for the integrated likelihood.
    pub guard: f64,
}

impl Default for Tuning {
    fn default() -> Self {
        Tuning {
            omega: 1.0,
            p_mix: 0.5,
            resample_frac: 0.05,
            max_block: None,
            speed_step: 0.1,
            rate_step: 0.3,
            label_window: 3,
            guard: DEFAULT_SEQUENCE_GUARD,
        }
    }
}

impl Tuning {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            return Err(InchError::config("tuning.omega", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.p_mix) {
            return Err(InchError::config("tuning.p_mix", "must lie in [0, 1]"));
        }
        if !(self.resample_frac > 0.0 && self.resample_frac <= 1.0) {
            return Err(InchError::config("tuning.resample_frac", "must lie in (0, 1]"));
        }
        if self.max_block == Some(0) {
            return Err(InchError::config("tuning.max_block", "must be at least 1"));
        }
        if !(self.speed_step >= 0.0) || !(self.rate_step >= 0.0) {
            return Err(InchError::config("tuning.speed_step", "step sizes must be nonnegative"));
        }
        if self.label_window == 0 {
            return Err(InchError::config("tuning.label_window", "must be at least 1"));
        }
        if !(self.guard >= 1.0) {
            return Err(InchError::config("tuning.guard", "must be at least 1"));
        }
        Ok(())
    }

    /// Longest block; lengths are uniform on `1..=cap` so the mean is `resample_frac * n`.
    pub fn block_cap(&self, n_intervals: usize) -> usize {
        let target = (2.0 * self.resample_frac * n_intervals as f64 - 1.0).round().max(1.0) as usize;
        let cap = self.max_block.map_or(target, |m| target.min(m));
        cap.clamp(1, n_intervals.max(1))
    }

    /// Draws a block of intervals `[a, b)`.
    pub fn sample_block<R: Rng + ?Sized>(&self, n_intervals: usize, rng: &mut R) -> (usize, usize) {
        let len = rng.random_range(1..=self.block_cap(n_intervals));
        let a = rng.random_range(0..=n_intervals - len);
        (a, a + len)
    }
}

/// Bounded priors: speeds uniform on `(0, speed_max)` subject to ordering; each rate
/// `lambda_ij` uniform on `(0, u_ij)` with `u` taken from the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Priors {
    pub speed_max: f64,
}

impl Default for Priors {
    fn default() -> Self {
        Priors { speed_max: 100.0 }
    }
}

/// Time base for `elapsed_s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Clock {
    /// Wall-clock seconds.
    Wall,
    /// Deterministic cost model: counted density evaluations times `seconds_per_unit`.
    Work { seconds_per_unit: f64 },
}

impl Default for Clock {
    fn default() -> Self {
        Clock::Work {
            seconds_per_unit: DEFAULT_SECONDS_PER_UNIT,
        }
    }
}

/// Rough cost of one log-density term on commodity hardware.
pub const DEFAULT_SECONDS_PER_UNIT: f64 = 2.0e-8;

/// Iteration schedule and harness switches for [`run_chain`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub iters: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub update_params: bool,
    /// Replace the likelihood by a constant, so the chain targets the prior.
    pub flat_likelihood: bool,
    pub clock: Clock,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            iters: 100_000,
            burn_in: 10_000,
            thin: 100,
            seed: 1,
            update_params: true,
            flat_likelihood: false,
            clock: Clock::default(),
        }
    }
}

/// One retained draw.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub iter: usize,
    pub loglik: f64,
    pub speeds: Vec<f64>,
    /// Off-diagonal rate parameters, row-major.
    pub rates: Vec<f64>,
    pub total_switches: usize,
    pub elapsed_s: f64,
    /// Sampler-specific summary (the baseline's time fraction per state).
    pub state_summary: Vec<f64>,
    /// Switch counts per interval.
    pub switch_counts: Vec<usize>,
}

/// Acceptance counters per move type.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceStats {
    pub trajectory: (u64, u64),
    pub labels: (u64, u64),
    pub speeds: (u64, u64),
    pub rates: (u64, u64),
}

impl AcceptanceStats {
    pub fn rate(pair: (u64, u64)) -> f64 {
        if pair.1 == 0 {
            0.0
        } else {
            pair.0 as f64 / pair.1 as f64
        }
    }

    pub(crate) fn record(pair: &mut (u64, u64), accepted: bool) {
        pair.1 += 1;
        if accepted {
            pair.0 += 1;
        }
    }
}

/// Common interface of the trajectory samplers.
pub trait Sampler {
    /// One full iteration: trajectory move(s), then parameter moves if enabled.
    fn step(&mut self, rng: &mut ChaCha8Rng, update_params: bool) -> Result<()>;
    fn model(&self) -> &ModelSpec;
    fn loglik(&self) -> f64;
    fn switch_counts(&self) -> Vec<usize>;
    fn state_summary(&self) -> Vec<f64> {
        Vec::new()
    }
    fn stats(&self) -> &AcceptanceStats;
    /// Counted log-density terms so far.
    fn work(&self) -> u64;
    fn guard_breaches(&self) -> u64 {
        0
    }
}

/// Result of a chain run.
#[derive(Debug, Clone)]
pub struct ChainOutput {
    pub sampler: SamplerKind,
    pub samples: Vec<SampleRecord>,
    pub acceptance: AcceptanceStats,
    pub elapsed_s: f64,
    pub wall_s: f64,
    pub work_units: u64,
    pub guard_breaches: u64,
    pub iters: usize,
    pub thin: usize,
    pub n_states: usize,
}

impl ChainOutput {
    /// Names of the tracked scalar quantities, matching [`ChainOutput::series`].
    pub fn quantity_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (1..=self.samples.first().map_or(0, |s| s.speeds.len()))
            .map(|k| format!("v_{k}"))
            .collect();
        names.extend(rate_names(self.n_states).into_iter().take(self.samples.first().map_or(0, |s| s.rates.len())));
        names
    }

    /// Trace of every speed and rate parameter.
    pub fn series(&self) -> Vec<Vec<f64>> {
        let Some(first) = self.samples.first() else {
            return Vec::new();
        };
        let mut out = Vec::new();
        for k in 0..first.speeds.len() {
            out.push(self.samples.iter().map(|s| s.speeds[k]).collect());
        }
        for k in 0..first.rates.len() {
            out.push(self.samples.iter().map(|s| s.rates[k]).collect());
        }
        out
    }

    /// Sample CSV: `iter,loglik,v_1..v_n,rate_i_j..,total_switch_count,elapsed_s`, plus
    /// `occ_1..occ_n` for samplers that track explicit states.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["iter".to_string(), "loglik".to_string()];
        header.extend(self.quantity_names());
        header.push("total_switch_count".into());
        header.push("elapsed_s".into());
        let n_summary = self.samples.first().map_or(0, |s| s.state_summary.len());
        header.extend((1..=n_summary).map(|k| format!("occ_{k}")));
        w.write_record(&header)?;
        for s in &self.samples {
            let mut row = vec![s.iter.to_string(), format!("{}", s.loglik)];
            row.extend(s.speeds.iter().chain(&s.rates).map(|v| format!("{v}")));
            row.push(s.total_switches.to_string());
            row.push(format!("{}", s.elapsed_s));
            row.extend(s.state_summary.iter().map(|v| format!("{v}")));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `rate_i_j` labels (1-based) for the off-diagonal entries, row-major.
pub fn rate_names(n: usize) -> Vec<String> {
    let mut names = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                names.push(format!("rate_{}_{}", i + 1, j + 1));
            }
        }
    }
    names
}

pub(crate) fn offdiag(model: &ModelSpec) -> Vec<f64> {
    let n = model.n_states();
    match model.rates().params() {
        Some(m) => {
            let mut v = Vec::with_capacity(n * (n - 1));
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        v.push(m[(i, j)]);
                    }
                }
            }
            v
        }
        None => Vec::new(),
    }
}

/// Runs one chain. `kappa` must dominate every out-rate the priors allow.
#[allow(clippy::too_many_arguments)]
pub fn run_chain(
    kind: SamplerKind,
    model: &ModelSpec,
    track: &ObservationTrack,
    kappa: f64,
    tuning: &Tuning,
    priors: &Priors,
    settings: &RunSettings,
) -> Result<ChainOutput> {
    tuning.validate()?;
    if settings.thin == 0 {
        return Err(InchError::config("run.thin", "must be at least 1"));
    }
    if settings.iters < settings.burn_in {
        return Err(InchError::config("run.iters", "must be at least run.burn_in"));
    }
    if track.len() < 2 {
        return Err(InchError::config("data", "track needs at least two observations"));
    }
    if track.dim() != model.dim() {
        return Err(InchError::config(
            "model.dim",
            format!("model dimension {} does not match data dimension {}", model.dim(), track.dim()),
        ));
    }
    if !(kappa > 0.0) || kappa < model.max_bound_out_rate() * (1.0 - 1e-12) {
        return Err(InchError::config(
            "run.kappa",
            format!("kappa {kappa} must be positive and at least the bounded out-rate {}", model.max_bound_out_rate()),
        ));
    }
    if let Some(speeds) = model.speeds() {
        if speeds.iter().any(|&v| v >= priors.speed_max) {
            return Err(InchError::config("priors.speed_max", "initial speeds exceed the prior bound"));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut sampler: Box<dyn Sampler + '_> = match kind {
        SamplerKind::InchHom => Box::new(HomChain::new(
            model.clone(),
            track,
            kappa,
            tuning.clone(),
            priors.clone(),
            settings.flat_likelihood,
            &mut rng,
        )?),
        SamplerKind::InchHet => Box::new(HetChain::new(
            model.clone(),
            track,
            kappa,
            tuning.clone(),
            priors.clone(),
            settings.flat_likelihood,
            &mut rng,
        )?),
        SamplerKind::Baseline => Box::new(BaselineChain::new(
            model.clone(),
            track,
            kappa,
            tuning.clone(),
            priors.clone(),
            settings.flat_likelihood,
            &mut rng,
        )?),
    };

    let start = Instant::now();
    let elapsed = |s: &dyn Sampler| match settings.clock {
        Clock::Wall => start.elapsed().as_secs_f64(),
        Clock::Work { seconds_per_unit } => s.work() as f64 * seconds_per_unit,
    };
    let mut samples = Vec::with_capacity((settings.iters - settings.burn_in) / settings.thin + 1);
    for iter in 0..settings.iters {
        sampler.step(&mut rng, settings.update_params)?;
        if iter >= settings.burn_in && (iter - settings.burn_in).is_multiple_of(settings.thin) {
            let m = sampler.model();
            let counts = sampler.switch_counts();
            samples.push(SampleRecord {
                iter,
                loglik: sampler.loglik(),
                speeds: m.speeds().unwrap_or_default(),
                rates: offdiag(m),
                total_switches: counts.iter().sum(),
                elapsed_s: elapsed(sampler.as_ref()),
                state_summary: sampler.state_summary(),
                switch_counts: counts,
            });
        }
    }
    Ok(ChainOutput {
        sampler: kind,
        samples,
        acceptance: sampler.stats().clone(),
        elapsed_s: elapsed(sampler.as_ref()),
        wall_s: start.elapsed().as_secs_f64(),
        work_units: sampler.work(),
        guard_breaches: sampler.guard_breaches(),
        iters: settings.iters,
        thin: settings.thin,
        n_states: model.n_states(),
    })
}
