//! Coarse grid search over block size and parameter step sizes using short pilot chains.

use serde::{Deserialize, Serialize};

use super::{run_chain, Clock, Priors, RunSettings, SamplerKind, Tuning};
use crate::diagnostics::EfficiencyReport;
use crate::error::{InchError, Result};
use crate::model::ModelSpec;
use crate::track::ObservationTrack;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneGrid {
    pub resample_frac: Vec<f64>,
    /// Multipliers applied to both parameter step sizes.
    pub step_scale: Vec<f64>,
    pub pilot_iters: usize,
    pub pilot_thin: usize,
}

impl Default for TuneGrid {
    fn default() -> Self {
        TuneGrid {
            resample_frac: vec![0.02, 0.05, 0.1, 0.2],
            step_scale: vec![0.5, 1.0, 2.0],
            pilot_iters: 5000,
            pilot_thin: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneTrial {
    pub resample_frac: f64,
    pub step_scale: f64,
    pub min_ess: f64,
    pub ess_per_second: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub best: Tuning,
    pub trials: Vec<TuneTrial>,
}

/// Runs one pilot chain per grid point and keeps the tuning with the highest ESS/s.
#[allow(clippy::too_many_arguments)]
pub fn grid_search(
    kind: SamplerKind,
    model: &ModelSpec,
    track: &ObservationTrack,
    kappa: f64,
    base: &Tuning,
    priors: &Priors,
    grid: &TuneGrid,
    seed: u64,
    clock: Clock,
) -> Result<TuneResult> {
    if grid.resample_frac.is_empty() || grid.step_scale.is_empty() {
        return Err(InchError::config("tune", "grid axes must be non-empty"));
    }
    if grid.pilot_thin == 0 || grid.pilot_iters < 10 * grid.pilot_thin * 5 / 4 + 1 {
        return Err(InchError::config("tune.pilot_iters", "too short for ten retained pilot draws"));
    }
    let settings = RunSettings {
        iters: grid.pilot_iters,
        burn_in: grid.pilot_iters / 5,
        thin: grid.pilot_thin,
        seed,
        clock,
        ..RunSettings::default()
    };
    let mut trials = Vec::new();
    let mut best: Option<(f64, Tuning)> = None;
    for &frac in &grid.resample_frac {
        for &scale in &grid.step_scale {
            let tuning = Tuning {
                resample_frac: frac,
                speed_step: base.speed_step * scale,
                rate_step: base.rate_step * scale,
                ..base.clone()
            };
            let out = run_chain(kind, model, track, kappa, &tuning, priors, &settings)?;
            let report = EfficiencyReport::from_chain(&out)?;
            trials.push(TuneTrial {
                resample_frac: frac,
                step_scale: scale,
                min_ess: report.min_ess,
                ess_per_second: report.ess_per_second,
            });
            if best.as_ref().is_none_or(|(e, _)| report.ess_per_second > *e) {
                best = Some((report.ess_per_second, tuning));
            }
        }
    }
    Ok(TuneResult { best: best.expect("non-empty grid").1, trials })
}
