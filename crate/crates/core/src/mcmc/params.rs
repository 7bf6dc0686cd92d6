//! Random-walk proposals on log speeds and log rate parameters.

use rand::Rng;
use rand_distr::StandardNormal;

use super::Priors;
use crate::error::Result;
use crate::model::ModelSpec;

/// Proposes `log v' = log v + step * z` jointly for all speeds. Returns the proposed model
/// and the log Hastings correction `sum log v' - sum log v`, or `None` when the proposal
/// leaves the ordered prior support (and so must be rejected).
pub fn propose_speeds<R: Rng + ?Sized>(
    model: &ModelSpec,
    step: f64,
    priors: &Priors,
    rng: &mut R,
) -> Result<Option<(ModelSpec, f64)>> {
    let Some(speeds) = model.speeds() else {
        return Ok(None);
    };
    if step == 0.0 {
        return Ok(None);
    }
    let proposed: Vec<f64> = speeds
        .iter()
        .map(|v| v * (step * rng.sample::<f64, _>(StandardNormal)).exp())
        .collect();
    if !speeds_in_support(&proposed, priors) {
        return Ok(None);
    }
    let log_jac: f64 = proposed.iter().zip(&speeds).map(|(a, b)| a.ln() - b.ln()).sum();
    Ok(Some((model.with_speeds(&proposed)?, log_jac)))
}

pub fn speeds_in_support(speeds: &[f64], priors: &Priors) -> bool {
    speeds.iter().all(|&v| v > 0.0 && v < priors.speed_max) && speeds.windows(2).all(|w| w[0] < w[1])
}

/// Log random walk on every free off-diagonal rate parameter with a positive bound; the
/// prior is uniform on `(0, u_ij)`.
pub fn propose_rates<R: Rng + ?Sized>(model: &ModelSpec, step: f64, rng: &mut R) -> Result<Option<(ModelSpec, f64)>> {
    let Some(params) = model.rates().params() else {
        return Ok(None);
    };
    if step == 0.0 {
        return Ok(None);
    }
    let bounds = model.rates().bounds();
    let n = model.n_states();
    let mut proposed = params.clone();
    let mut log_jac = 0.0;
    let mut inside = true;
    for i in 0..n {
        for j in 0..n {
            if i == j || !(bounds[(i, j)] > 0.0) || !(params[(i, j)] > 0.0) {
                continue;
            }
            let v = params[(i, j)] * (step * rng.sample::<f64, _>(StandardNormal)).exp();
            inside &= v < bounds[(i, j)];
            log_jac += v.ln() - params[(i, j)].ln();
            proposed[(i, j)] = v;
        }
    }
    if !inside {
        return Ok(None);
    }
    Ok(Some((model.with_rate_params(proposed)?, log_jac)))
}
