//! Log-space arithmetic and small density helpers shared by the likelihood code.

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `log(sum(exp(xs)))`, returning `-inf` for an empty or all `-inf` slice.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = xs.iter().map(|x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Streaming log-sum-exp accumulator.
#[derive(Debug, Clone, Copy)]
pub struct LogSumExp {
    max: f64,
    sum: f64,
}

impl Default for LogSumExp {
    fn default() -> Self {
        Self::new()
    }
}

impl LogSumExp {
    pub fn new() -> Self {
        LogSumExp {
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        if x == f64::NEG_INFINITY {
            return;
        }
        if x <= self.max {
            self.sum += (x - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - x).exp() + 1.0;
            self.max = x;
        }
    }

    pub fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.sum.ln()
        }
    }
}

/// Log density of an isotropic Gaussian displacement `N(0, var * I_d)` at squared norm `sq`.
#[inline]
pub fn iso_gauss_logpdf(sq: f64, var: f64, dim: usize) -> f64 {
    -0.5 * dim as f64 * (LN_2PI + var.ln()) - 0.5 * sq / var
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn ln_factorial(m: usize) -> f64 {
    (2..=m).map(|k| (k as f64).ln()).sum()
}

/// Log probability mass of `Poisson(mean)` at `m`.
pub fn poisson_logpmf(m: usize, mean: f64) -> f64 {
    if mean == 0.0 {
        return if m == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    m as f64 * mean.ln() - mean - ln_factorial(m)
}

/// Log density of the sorted sample of `m` uniforms on an interval of length `len`.
pub fn order_stats_logpdf(m: usize, len: f64) -> f64 {
    ln_factorial(m) - m as f64 * len.ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn logsumexp_matches_direct_sum() {
        let xs = [-1.0, 0.5, 2.0];
        let direct: f64 = xs.iter().map(|x: &f64| x.exp()).sum::<f64>().ln();
        assert!((logsumexp(&xs) - direct).abs() < 1e-14);
        let mut acc = LogSumExp::new();
        for x in xs {
            acc.add(x);
        }
        assert!((acc.value() - direct).abs() < 1e-14);
    }

    #[test]
    fn logsumexp_handles_neg_infinity() {
        assert_eq!(logsumexp(&[]), f64::NEG_INFINITY);
        assert_eq!(logsumexp(&[f64::NEG_INFINITY; 3]), f64::NEG_INFINITY);
        assert_eq!(logsumexp(&[f64::NEG_INFINITY, 0.0]), 0.0);
        assert_eq!(LogSumExp::new().value(), f64::NEG_INFINITY);
    }

    #[test]
    fn logsumexp_is_stable_for_large_magnitudes() {
        let v = logsumexp(&[-1000.0, -1000.0]);
        assert!((v - (-1000.0 + 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn poisson_mass_at_unit_mean() {
        let p: Vec<f64> = (0..3).map(|m| poisson_logpmf(m, 1.0).exp()).collect();
        assert!((p[0] - 0.367_879_441).abs() < 1e-9);
        assert!((p[1] - 0.367_879_441).abs() < 1e-9);
        assert!((p[2] - 0.183_939_721).abs() < 1e-9);
    }

    #[test]
    fn ln2pi_constant() {
        assert!((LN_2PI - (2.0 * PI).ln()).abs() < 1e-15);
    }
}
