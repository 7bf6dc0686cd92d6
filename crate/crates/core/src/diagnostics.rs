//! Effective sample size and ESS-per-second efficiency reports.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{InchError, Result};
use crate::mcmc::ChainOutput;

pub const MIN_SERIES_LEN: usize = 10;

/// Effective sample size by Geyer's initial positive (monotone) sequence estimator,
/// clamped to `[1, N]`. A constant series has ESS 1.
pub fn ess(series: &[f64]) -> Result<f64> {
    let n = series.len();
    if n < MIN_SERIES_LEN {
        return Err(InchError::PreconditionViolation(format!(
            "ESS needs at least {MIN_SERIES_LEN} draws, got {n}"
        )));
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let centred: Vec<f64> = series.iter().map(|x| x - mean).collect();
    let gamma0 = centred.iter().map(|x| x * x).sum::<f64>() / n as f64;
    if !(gamma0 > 1e-300 * mean.abs().max(1.0)) {
        return Ok(1.0);
    }
    let rho = |lag: usize| -> f64 {
        centred[..n - lag].iter().zip(&centred[lag..]).map(|(a, b)| a * b).sum::<f64>() / n as f64 / gamma0
    };
    let mut tau = -1.0;
    let mut prev_pair = f64::INFINITY;
    let mut k = 0;
    while 2 * k + 1 < n {
        let pair = if k == 0 { 1.0 + rho(1) } else { rho(2 * k) + rho(2 * k + 1) };
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev_pair);
        tau += 2.0 * pair;
        prev_pair = pair;
        k += 1;
    }
    Ok((n as f64 / tau).clamp(1.0, n as f64))
}

/// ESS and posterior summary of one tracked quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantityEss {
    pub name: String,
    pub ess: f64,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub quantities: Vec<QuantityEss>,
    pub min_ess: f64,
    pub elapsed_s: f64,
    pub ess_per_second: f64,
    pub iterations: usize,
    pub thinning: usize,
    pub retained: usize,
}

/// Minimum ESS over the named series divided by `elapsed_s`.
pub fn efficiency_report(
    names: &[String],
    series: &[Vec<f64>],
    elapsed_s: f64,
    iterations: usize,
    thinning: usize,
) -> Result<EfficiencyReport> {
    if !(elapsed_s > 0.0) {
        return Err(InchError::PreconditionViolation("elapsed time must be positive".into()));
    }
    if names.len() != series.len() || series.is_empty() {
        return Err(InchError::PreconditionViolation("need one name per non-empty series list".into()));
    }
    let quantities = names
        .iter()
        .zip(series)
        .map(|(name, s)| {
            let n = s.len() as f64;
            let mean = s.iter().sum::<f64>() / n;
            let sd = (s.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
            Ok(QuantityEss { name: name.clone(), ess: ess(s)?, mean, sd })
        })
        .collect::<Result<Vec<_>>>()?;
    let min_ess = quantities.iter().map(|q| q.ess).fold(f64::INFINITY, f64::min);
    Ok(EfficiencyReport {
        min_ess,
        elapsed_s,
        ess_per_second: min_ess / elapsed_s,
        iterations,
        thinning,
        retained: series[0].len(),
        quantities,
    })
}

impl EfficiencyReport {
    /// Report over every speed and rate parameter of a chain.
    pub fn from_chain(out: &ChainOutput) -> Result<Self> {
        efficiency_report(&out.quantity_names(), &out.series(), out.elapsed_s, out.iters, out.thin)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

impl fmt::Display for EfficiencyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<12} {:>12} {:>12} {:>10}", "quantity", "mean", "sd", "ess")?;
        for q in &self.quantities {
            writeln!(f, "{:<12} {:>12.5} {:>12.5} {:>10.1}", q.name, q.mean, q.sd, q.ess)?;
        }
        writeln!(f, "min ESS {:.1} over {} draws ({} iterations, thin {})", self.min_ess, self.retained, self.iterations, self.thinning)?;
        write!(f, "elapsed {:.3} s, {:.4} ESS/s", self.elapsed_s, self.ess_per_second)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn ar1(rho: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x: f64 = rng.sample::<f64, _>(StandardNormal) / (1.0 - rho * rho).sqrt();
        (0..n)
            .map(|_| {
                x = rho * x + rng.sample::<f64, _>(StandardNormal);
                x
            })
            .collect()
    }

    #[test]
    fn iid_noise_has_full_ess() {
        let e = ess(&ar1(0.0, 10_000, 1)).unwrap();
        assert!((9_000.0..=11_000.0).contains(&e), "{e}");
    }

    #[test]
    fn ar1_matches_analytic_value() {
        let target = 10_000.0 * 0.1 / 1.9;
        let e = ess(&ar1(0.9, 10_000, 2)).unwrap();
        assert!((e - target).abs() < 0.2 * target, "{e} vs {target}");
    }

    #[test]
    fn constant_and_short_series() {
        assert_eq!(ess(&[3.5; 50]).unwrap(), 1.0);
        assert!(ess(&[1.0; 5]).is_err());
    }

    #[test]
    fn ess_decreases_with_autocorrelation() {
        let mut last = f64::INFINITY;
        for rho in [0.0, 0.3, 0.6, 0.8, 0.95] {
            let e = ess(&ar1(rho, 20_000, 7)).unwrap();
            assert!(e < last, "rho {rho}: {e} >= {last}");
            last = e;
        }
    }

    #[test]
    fn report_takes_minimum_then_divides() {
        let s = ar1(0.0, 400, 3);
        let e = ess(&s).unwrap();
        let single = efficiency_report(&["a".into()], std::slice::from_ref(&s), 4.0, 400, 1).unwrap();
        assert!((single.ess_per_second - e / 4.0).abs() < 1e-12);
        let r = ar1(0.8, 400, 4);
        let both = efficiency_report(&["a".into(), "b".into()], &[s, r.clone()], 100.0, 400, 1).unwrap();
        assert_eq!(both.min_ess, ess(&r).unwrap().min(e));
        assert!(both.to_json().unwrap().contains("\"ess_per_second\""));
        assert!(both.to_string().contains("ESS/s"));
        assert!(efficiency_report(&["a".into()], &[ar1(0.0, 20, 1)], 0.0, 20, 1).is_err());
    }

    proptest! {
        #[test]
        fn ess_is_affine_invariant(seed in 0u64..1000, scale in 0.01f64..100.0, shift in -1e3f64..1e3, rho in 0.0f64..0.9) {
            let s = ar1(rho, 500, seed);
            let t: Vec<f64> = s.iter().map(|x| scale * x + shift).collect();
            let (a, b) = (ess(&s).unwrap(), ess(&t).unwrap());
            prop_assert!((a - b).abs() <= 1e-6 * a);
            prop_assert!((1.0..=500.0).contains(&a));
        }
    }
}
