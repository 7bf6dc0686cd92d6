//! Domain types for integrated continuous-time hidden Markov models: behavioural
//! state space, per-state movement kernels, switching-rate functions, and the
//! uniformized transition probabilities they induce.

use std::fmt;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{InchError, Result};
use crate::numeric::{iso_gauss_logpdf, sq_dist, LN_2PI};

const STOCHASTIC_TOL: f64 = 1e-12;

/// Movement process followed while the animal is in one behavioural state.
#[derive(Debug, Clone, PartialEq)]
pub enum MovementKernel {
    /// Isotropic Brownian motion, displacement over `dt` is `N(0, dt * speed * I)`.
    Brownian { speed: f64 },
    /// Linear SDE `dX = (A X + b) dt + dW` with `Cov(dW) = diffusion * dt`.
    LinearGaussian {
        drift: DMatrix<f64>,
        offset: DVector<f64>,
        diffusion: DMatrix<f64>,
    },
}

impl MovementKernel {
    pub fn brownian(speed: f64) -> Self {
        MovementKernel::Brownian { speed }
    }

    pub fn speed(&self) -> Option<f64> {
        match self {
            MovementKernel::Brownian { speed } => Some(*speed),
            MovementKernel::LinearGaussian { .. } => None,
        }
    }

    fn validate(&self, dim: usize, state: usize) -> Result<()> {
        match self {
            MovementKernel::Brownian { speed } => {
                if !(speed.is_finite() && *speed > 0.0) {
                    return Err(InchError::InvalidModel(format!(
                        "state {state}: Brownian speed must be positive and finite, got {speed}"
                    )));
                }
            }
            MovementKernel::LinearGaussian {
                drift,
                offset,
                diffusion,
            } => {
                if drift.shape() != (dim, dim)
                    || offset.len() != dim
                    || diffusion.shape() != (dim, dim)
                {
                    return Err(InchError::InvalidModel(format!(
                        "state {state}: linear-Gaussian kernel dimensions do not match dim={dim}"
                    )));
                }
                let asym = (diffusion - diffusion.transpose()).abs().max();
                if asym > 1e-12 * (1.0 + diffusion.abs().max()) {
                    return Err(InchError::InvalidModel(format!(
                        "state {state}: diffusion matrix is not symmetric"
                    )));
                }
                let eig = SymmetricEigen::new(diffusion.clone());
                let min = eig.eigenvalues.min();
                if min < -1e-12 * (1.0 + diffusion.abs().max()) {
                    return Err(InchError::InvalidModel(format!(
                        "state {state}: diffusion matrix is not positive semi-definite (eigenvalue {min})"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Exact Gaussian transition law of this kernel over `dt`.
    pub fn transition(&self, dim: usize, dt: f64) -> GaussianTransition {
        match self {
            MovementKernel::Brownian { speed } => GaussianTransition {
                map: DMatrix::identity(dim, dim),
                shift: DVector::zeros(dim),
                cov: DMatrix::identity(dim, dim) * (speed * dt),
            },
            MovementKernel::LinearGaussian {
                drift,
                offset,
                diffusion,
            } => {
                // Augmented exponential gives e^{A dt} and (int_0^dt e^{As} ds) b.
                let mut aug = DMatrix::zeros(dim + 1, dim + 1);
                aug.view_mut((0, 0), (dim, dim)).copy_from(&(drift * dt));
                aug.view_mut((0, dim), (dim, 1)).copy_from(&(offset * dt));
                let aug = aug.exp();
                let map = aug.view((0, 0), (dim, dim)).into_owned();
                let shift = aug.view((0, dim), (dim, 1)).column(0).into_owned();

                // Van Loan block exponential for the integrated covariance.
                let mut vl = DMatrix::zeros(2 * dim, 2 * dim);
                vl.view_mut((0, 0), (dim, dim)).copy_from(&(-drift * dt));
                vl.view_mut((0, dim), (dim, dim)).copy_from(&(diffusion * dt));
                vl.view_mut((dim, dim), (dim, dim))
                    .copy_from(&(drift.transpose() * dt));
                let vl = vl.exp();
                let f12 = vl.view((0, dim), (dim, dim));
                let f22 = vl.view((dim, dim), (dim, dim));
                let cov = f22.transpose() * f12;
                let cov = (&cov + cov.transpose()) * 0.5;
                GaussianTransition { map, shift, cov }
            }
        }
    }
}

/// Affine-Gaussian transition `x1 | x0 ~ N(map * x0 + shift, cov)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianTransition {
    pub map: DMatrix<f64>,
    pub shift: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianTransition {
    pub fn identity(dim: usize) -> Self {
        GaussianTransition {
            map: DMatrix::identity(dim, dim),
            shift: DVector::zeros(dim),
            cov: DMatrix::zeros(dim, dim),
        }
    }

    /// Follow `self` by `next`.
    pub fn then(&self, next: &GaussianTransition) -> GaussianTransition {
        GaussianTransition {
            map: &next.map * &self.map,
            shift: &next.map * &self.shift + &next.shift,
            cov: &next.map * &self.cov * next.map.transpose() + &next.cov,
        }
    }

    pub fn mean(&self, x0: &[f64]) -> DVector<f64> {
        &self.map * DVector::from_column_slice(x0) + &self.shift
    }

    pub fn log_density(&self, x0: &[f64], x1: &[f64]) -> Result<f64> {
        let resid = DVector::from_column_slice(x1) - self.mean(x0);
        gaussian_logpdf(&resid, &self.cov)
    }
}

/// Log density of `N(0, cov)` at `resid`.
pub fn gaussian_logpdf(resid: &DVector<f64>, cov: &DMatrix<f64>) -> Result<f64> {
    let d = resid.len();
    let chol = Cholesky::new(cov.clone()).ok_or_else(|| {
        InchError::DegenerateCovariance("covariance is not positive definite".into())
    })?;
    let l = chol.l();
    let log_det: f64 = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
    if !log_det.is_finite() {
        return Err(InchError::DegenerateCovariance(
            "covariance determinant underflows".into(),
        ));
    }
    let z = l
        .solve_lower_triangular(resid)
        .ok_or_else(|| InchError::DegenerateCovariance("singular Cholesky factor".into()))?;
    Ok(-0.5 * (d as f64 * LN_2PI + log_det + z.norm_squared()))
}

/// Log density of moving from `x0` to `x1` over `dt` under `kernel`.
pub fn segment_log_density(kernel: &MovementKernel, x0: &[f64], x1: &[f64], dt: f64) -> Result<f64> {
    if !(dt > 0.0) {
        return Err(InchError::PreconditionViolation(format!(
            "segment duration must be positive, got {dt}"
        )));
    }
    match kernel {
        MovementKernel::Brownian { speed } => {
            let var = speed * dt;
            if !(var > 0.0 && var.is_finite()) {
                return Err(InchError::DegenerateCovariance(format!(
                    "Brownian variance {var} over dt={dt}"
                )));
            }
            Ok(iso_gauss_logpdf(sq_dist(x0, x1), var, x0.len()))
        }
        MovementKernel::LinearGaussian { .. } => {
            kernel.transition(x0.len(), dt).log_density(x0, x1)
        }
    }
}

type RateEval = dyn Fn(usize, usize, f64, &[f64]) -> f64 + Send + Sync;

/// User-supplied switching-rate function.
#[derive(Clone)]
pub struct CustomRates {
    pub name: String,
    pub bounds: DMatrix<f64>,
    pub homogeneous: bool,
    eval: Arc<RateEval>,
}

impl fmt::Debug for CustomRates {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomRates")
            .field("name", &self.name)
            .field("bounds", &self.bounds)
            .field("homogeneous", &self.homogeneous)
            .finish_non_exhaustive()
    }
}

/// Switching rates `lambda_ij(t, x)` together with their prior upper bounds `u_ij`.
#[derive(Debug, Clone)]
pub enum RateFunction {
    /// Time- and space-independent rates.
    Constant {
        rates: DMatrix<f64>,
        bounds: DMatrix<f64>,
    },
    /// `base_ij * r^2 / (r^2 + scale^2)` with `r` the distance from `centre`:
    /// switching is suppressed near the centre and saturates far from it.
    Radial {
        base: DMatrix<f64>,
        bounds: DMatrix<f64>,
        centre: Vec<f64>,
        scale: f64,
    },
    Custom(CustomRates),
}

impl RateFunction {
    pub fn constant(rates: DMatrix<f64>, bounds: DMatrix<f64>) -> Self {
        RateFunction::Constant { rates, bounds }
    }

    /// Registers an arbitrary rate function. `homogeneous` must be true only if `eval`
    /// ignores its location argument.
    pub fn custom<F>(name: impl Into<String>, bounds: DMatrix<f64>, homogeneous: bool, eval: F) -> Self
    where
        F: Fn(usize, usize, f64, &[f64]) -> f64 + Send + Sync + 'static,
    {
        RateFunction::Custom(CustomRates {
            name: name.into(),
            bounds,
            homogeneous,
            eval: Arc::new(eval),
        })
    }

    #[inline]
    pub fn eval(&self, i: usize, j: usize, t: f64, x: &[f64]) -> f64 {
        match self {
            RateFunction::Constant { rates, .. } => rates[(i, j)],
            RateFunction::Radial {
                base, centre, scale, ..
            } => {
                let r2 = sq_dist(x, centre);
                base[(i, j)] * r2 / (r2 + scale * scale)
            }
            RateFunction::Custom(c) => (c.eval)(i, j, t, x),
        }
    }

    pub fn bounds(&self) -> &DMatrix<f64> {
        match self {
            RateFunction::Constant { bounds, .. } | RateFunction::Radial { bounds, .. } => bounds,
            RateFunction::Custom(c) => &c.bounds,
        }
    }

    pub fn is_homogeneous(&self) -> bool {
        match self {
            RateFunction::Constant { .. } => true,
            RateFunction::Radial { .. } => false,
            RateFunction::Custom(c) => c.homogeneous,
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, RateFunction::Constant { .. })
    }

    /// The free rate parameters, when the family has them.
    pub fn params(&self) -> Option<&DMatrix<f64>> {
        match self {
            RateFunction::Constant { rates, .. } => Some(rates),
            RateFunction::Radial { base, .. } => Some(base),
            RateFunction::Custom(_) => None,
        }
    }

    fn with_params(&self, params: DMatrix<f64>) -> Option<RateFunction> {
        match self {
            RateFunction::Constant { bounds, .. } => Some(RateFunction::Constant {
                rates: params,
                bounds: bounds.clone(),
            }),
            RateFunction::Radial {
                bounds,
                centre,
                scale,
                ..
            } => Some(RateFunction::Radial {
                base: params,
                bounds: bounds.clone(),
                centre: centre.clone(),
                scale: *scale,
            }),
            RateFunction::Custom(_) => None,
        }
    }

    pub fn family_name(&self) -> &str {
        match self {
            RateFunction::Constant { .. } => "constant",
            RateFunction::Radial { .. } => "radial",
            RateFunction::Custom(c) => &c.name,
        }
    }

    fn validate(&self, n: usize, dim: usize) -> Result<()> {
        let bounds = self.bounds();
        if bounds.shape() != (n, n) {
            return Err(InchError::InvalidModel(format!(
                "rate bounds must be {n}x{n}, got {:?}",
                bounds.shape()
            )));
        }
        for i in 0..n {
            for j in 0..n {
                if i != j && !(bounds[(i, j)] >= 0.0) {
                    return Err(InchError::InvalidModel(format!(
                        "rate bound u[{i}][{j}] must be nonnegative"
                    )));
                }
            }
        }
        let check = |i: usize, j: usize, v: f64| -> Result<()> {
            let u = bounds[(i, j)];
            if !(v >= 0.0) || v > u * (1.0 + 1e-12) {
                return Err(InchError::InvalidModel(format!(
                    "rate lambda[{i}][{j}] = {v} outside [0, {u}]"
                )));
            }
            Ok(())
        };
        match self {
            RateFunction::Constant { rates: m, .. } | RateFunction::Radial { base: m, .. } => {
                if m.shape() != (n, n) {
                    return Err(InchError::InvalidModel(format!(
                        "rate matrix must be {n}x{n}, got {:?}",
                        m.shape()
                    )));
                }
                if let RateFunction::Radial { centre, scale, .. } = self {
                    if centre.len() != dim {
                        return Err(InchError::InvalidModel(format!(
                            "radial centre has {} coordinates, expected {dim}",
                            centre.len()
                        )));
                    }
                    if !(*scale > 0.0) {
                        return Err(InchError::InvalidModel("radial scale must be positive".into()));
                    }
                }
                for i in 0..n {
                    for j in 0..n {
                        if i != j {
                            check(i, j, m[(i, j)])?;
                        }
                    }
                }
            }
            RateFunction::Custom(c) => {
                // Spot-check the bound at scattered times and locations.
                let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
                for _ in 0..256 {
                    let t = rng.random_range(0.0..1.0e4);
                    let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0e3..1.0e3)).collect();
                    for i in 0..n {
                        for j in 0..n {
                            if i != j {
                                check(i, j, (c.eval)(i, j, t, &x))?;
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// A fully specified InCH model on `R^dim x {0, .., n-1}`.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    dim: usize,
    kernels: Vec<MovementKernel>,
    rates: RateFunction,
    initial: Vec<f64>,
    log_initial: Vec<f64>,
}

impl ModelSpec {
    /// Builds and validates a model. `initial` defaults to the uniform distribution.
    pub fn new(
        dim: usize,
        kernels: Vec<MovementKernel>,
        rates: RateFunction,
        initial: Option<Vec<f64>>,
    ) -> Result<Self> {
        let n = kernels.len();
        if n == 0 {
            return Err(InchError::InvalidModel("at least one state is required".into()));
        }
        if dim == 0 {
            return Err(InchError::InvalidModel("spatial dimension must be positive".into()));
        }
        for (i, k) in kernels.iter().enumerate() {
            k.validate(dim, i)?;
        }
        if kernels.iter().all(|k| k.speed().is_some()) {
            for w in kernels.windows(2) {
                if !(w[0].speed() < w[1].speed()) {
                    return Err(InchError::InvalidModel(
                        "Brownian speeds must be strictly increasing across states".into(),
                    ));
                }
            }
        }
        rates.validate(n, dim)?;
        let initial = initial.unwrap_or_else(|| vec![1.0 / n as f64; n]);
        if initial.len() != n {
            return Err(InchError::InvalidModel(format!(
                "initial distribution has {} entries, expected {n}",
                initial.len()
            )));
        }
        if initial.iter().any(|p| !(*p >= 0.0)) {
            return Err(InchError::InvalidModel(
                "initial distribution has negative entries".into(),
            ));
        }
        let total: f64 = initial.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(InchError::InvalidModel(format!(
                "initial distribution sums to {total}"
            )));
        }
        let log_initial = initial.iter().map(|p| p.ln()).collect();
        Ok(ModelSpec {
            dim,
            kernels,
            rates,
            initial,
            log_initial,
        })
    }

    /// Brownian states with constant switching rates.
    pub fn brownian(
        dim: usize,
        speeds: &[f64],
        rates: DMatrix<f64>,
        bounds: DMatrix<f64>,
    ) -> Result<Self> {
        let kernels = speeds.iter().map(|&v| MovementKernel::brownian(v)).collect();
        ModelSpec::new(dim, kernels, RateFunction::constant(rates, bounds), None)
    }

    pub fn n_states(&self) -> usize {
        self.kernels.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kernels(&self) -> &[MovementKernel] {
        &self.kernels
    }

    pub fn kernel(&self, i: usize) -> &MovementKernel {
        &self.kernels[i]
    }

    pub fn rates(&self) -> &RateFunction {
        &self.rates
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn log_initial(&self) -> &[f64] {
        &self.log_initial
    }

    pub fn is_homogeneous(&self) -> bool {
        self.rates.is_homogeneous()
    }

    /// Speeds of an all-Brownian model.
    pub fn speeds(&self) -> Option<Vec<f64>> {
        self.kernels.iter().map(MovementKernel::speed).collect()
    }

    pub fn with_speeds(&self, speeds: &[f64]) -> Result<Self> {
        if speeds.len() != self.n_states() || self.speeds().is_none() {
            return Err(InchError::InvalidModel(
                "speeds can only be replaced on an all-Brownian model of the same size".into(),
            ));
        }
        let kernels = speeds.iter().map(|&v| MovementKernel::brownian(v)).collect();
        ModelSpec::new(self.dim, kernels, self.rates.clone(), Some(self.initial.clone()))
    }

    pub fn with_rate_params(&self, params: DMatrix<f64>) -> Result<Self> {
        let rates = self.rates.with_params(params).ok_or_else(|| {
            InchError::InvalidModel(format!(
                "rate family `{}` has no free parameters",
                self.rates.family_name()
            ))
        })?;
        ModelSpec::new(self.dim, self.kernels.clone(), rates, Some(self.initial.clone()))
    }

    pub fn with_initial(&self, initial: Vec<f64>) -> Result<Self> {
        ModelSpec::new(self.dim, self.kernels.clone(), self.rates.clone(), Some(initial))
    }

    #[inline]
    pub fn rate(&self, i: usize, j: usize, t: f64, x: &[f64]) -> f64 {
        self.rates.eval(i, j, t, x)
    }

    /// Rate of switching out of state `i` at `(t, x)`.
    pub fn out_rate(&self, i: usize, t: f64, x: &[f64]) -> f64 {
        (0..self.n_states())
            .filter(|&j| j != i)
            .map(|j| self.rates.eval(i, j, t, x))
            .sum()
    }

    /// Transition matrix of the uniformized chain at a potential switch at `(t, x)`.
    pub fn uniform_transition_probs(&self, kappa: f64, t: f64, x: &[f64]) -> Result<DMatrix<f64>> {
        let n = self.n_states();
        let mut p = DMatrix::zeros(n, n);
        for i in 0..n {
            let mut out = 0.0;
            for j in 0..n {
                if j != i {
                    let l = self.rates.eval(i, j, t, x);
                    p[(i, j)] = l / kappa;
                    out += l;
                }
            }
            if out > kappa * (1.0 + STOCHASTIC_TOL) {
                return Err(InchError::PreconditionViolation(format!(
                    "out-rate {out} of state {i} exceeds kappa {kappa}"
                )));
            }
            p[(i, i)] = (1.0 - out / kappa).max(0.0);
        }
        Ok(p)
    }

    /// Row-major `log p_ij` at a potential switch.
    pub fn log_transition_probs(&self, kappa: f64, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        let p = self.uniform_transition_probs(kappa, t, x)?;
        let n = self.n_states();
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                out.push(p[(i, j)].ln());
            }
        }
        Ok(out)
    }

    pub fn segment_log_density(&self, state: usize, x0: &[f64], x1: &[f64], dt: f64) -> Result<f64> {
        segment_log_density(&self.kernels[state], x0, x1, dt)
    }

    /// Largest supremum out-rate permitted by the prior bounds.
    pub fn max_bound_out_rate(&self) -> f64 {
        let b = self.rates.bounds();
        (0..self.n_states())
            .map(|i| (0..self.n_states()).filter(|&j| j != i).map(|j| b[(i, j)]).sum())
            .fold(0.0, f64::max)
    }
}
