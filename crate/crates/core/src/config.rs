//! JSON run configuration with field-path error reporting, and the registry of named
//! rate-function families.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{InchError, Result};
use crate::mcmc::tune::TuneGrid;
use crate::mcmc::{Clock, Priors, RunSettings, SamplerKind, Tuning};
use crate::model::{ModelSpec, MovementKernel, RateFunction};
use crate::track::{ObservationTrack, TimeUnit};
use crate::uniformization::{choose_kappa, simulate_observed, Trajectory};

fn parse_at<T: DeserializeOwned>(value: Value, prefix: &str) -> Result<T> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let inner = e.path().to_string();
        let path = match (prefix.is_empty(), inner.as_str()) {
            (true, _) => inner.clone(),
            (false, ".") => prefix.to_string(),
            (false, p) => format!("{prefix}.{p}"),
        };
        InchError::config(path, e.into_inner().to_string())
    })
}

fn matrix(rows: &[Vec<f64>], path: &str, n: usize) -> Result<DMatrix<f64>> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(InchError::config(path, format!("expected a {n}x{n} matrix")));
    }
    for (i, r) in rows.iter().enumerate() {
        for (j, v) in r.iter().enumerate() {
            if !v.is_finite() || *v < 0.0 {
                return Err(InchError::config(format!("{path}[{i}][{j}]"), "must be finite and nonnegative"));
            }
        }
    }
    Ok(DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { rows[i][j] }))
}

type RateBuilder = dyn Fn(Value, usize, usize) -> Result<RateFunction> + Send + Sync;

/// Named constructors for rate families, keyed by the `model.rates.family` field.
#[derive(Clone)]
pub struct RateRegistry {
    builders: BTreeMap<String, Arc<RateBuilder>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstantRates {
    #[serde(rename = "family")]
    _family: String,
    rates: Vec<Vec<f64>>,
    bounds: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RadialRates {
    #[serde(rename = "family")]
    _family: String,
    base: Vec<Vec<f64>>,
    bounds: Vec<Vec<f64>>,
    centre: Vec<f64>,
    scale: f64,
}

impl Default for RateRegistry {
    fn default() -> Self {
        let mut reg = RateRegistry { builders: BTreeMap::new() };
        reg.register("constant", |v, n, _| {
            let c: ConstantRates = parse_at(v, "model.rates")?;
            Ok(RateFunction::constant(
                matrix(&c.rates, "model.rates.rates", n)?,
                matrix(&c.bounds, "model.rates.bounds", n)?,
            ))
        });
        reg.register("radial", |v, n, dim| {
            let r: RadialRates = parse_at(v, "model.rates")?;
            if r.centre.len() != dim {
                return Err(InchError::config("model.rates.centre", format!("expected {dim} coordinates")));
            }
            if !(r.scale > 0.0) {
                return Err(InchError::config("model.rates.scale", "must be positive"));
            }
            Ok(RateFunction::Radial {
                base: matrix(&r.base, "model.rates.base", n)?,
                bounds: matrix(&r.bounds, "model.rates.bounds", n)?,
                centre: r.centre,
                scale: r.scale,
            })
        });
        reg
    }
}

impl RateRegistry {
    pub fn register<F>(&mut self, name: &str, builder: F)
    where
        F: Fn(Value, usize, usize) -> Result<RateFunction> + Send + Sync + 'static,
    {
        self.builders.insert(name.to_string(), Arc::new(builder));
    }

    pub fn families(&self) -> Vec<&str> {
        self.builders.keys().map(String::as_str).collect()
    }

    pub fn build(&self, spec: &Value, n: usize, dim: usize) -> Result<RateFunction> {
        let family = spec
            .get("family")
            .and_then(Value::as_str)
            .ok_or_else(|| InchError::config("model.rates.family", "missing rate family name"))?;
        let builder = self.builders.get(family).ok_or_else(|| {
            InchError::config(
                "model.rates.family",
                format!("unknown family `{family}`; registered: {}", self.families().join(", ")),
            )
        })?;
        builder(spec.clone(), n, dim)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelConfig {
    Brownian { speed: f64 },
    LinearGaussian { drift: Vec<Vec<f64>>, offset: Vec<f64>, diffusion: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "default_dim")]
    pub dim: usize,
    /// Brownian speeds, one per state; shorthand for `kernels`.
    #[serde(default)]
    pub speeds: Option<Vec<f64>>,
    #[serde(default)]
    pub kernels: Option<Vec<KernelConfig>>,
    pub rates: Value,
    #[serde(default)]
    pub initial: Option<Vec<f64>>,
}

fn default_dim() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub sampler: SamplerKind,
    /// Samplers compared by the benchmark command.
    pub samplers: Vec<SamplerKind>,
    pub iters: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub kappa: Option<f64>,
    /// Nominal observation interval; sets `kappa = 1 / nominal_interval` unless `kappa` is given.
    pub nominal_interval: Option<f64>,
    pub time_unit: TimeUnit,
    pub clock: Clock,
    pub update_params: bool,
    /// Tune with the grid-search helper before the main run.
    pub autotune: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let s = RunSettings::default();
        RunConfig {
            sampler: SamplerKind::InchHom,
            samplers: vec![SamplerKind::InchHom, SamplerKind::Baseline],
            iters: s.iters,
            burn_in: s.burn_in,
            thin: s.thin,
            seed: s.seed,
            kappa: None,
            nominal_interval: None,
            time_unit: TimeUnit::default(),
            clock: s.clock,
            update_params: true,
            autotune: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub n_obs: usize,
    /// Observation gaps, drawn uniformly from this list.
    pub intervals: Vec<f64>,
    /// Probability that a fix is lost, widening the interval around it.
    pub missing_prob: f64,
    /// 1-based initial state; drawn from the initial distribution when absent.
    pub start_state: Option<usize>,
    pub start_location: Option<Vec<f64>>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            n_obs: 61,
            intervals: vec![10.0],
            missing_prob: 0.0,
            start_state: None,
            start_location: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub model: ModelConfig,
    #[serde(default)]
    pub priors: Priors,
    #[serde(default)]
    pub tuning: Tuning,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub tune: TuneGrid,
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text)?;
        parse_at(value, "")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn build_model(&self, registry: &RateRegistry) -> Result<ModelSpec> {
        let m = &self.model;
        if m.dim == 0 {
            return Err(InchError::config("model.dim", "must be positive"));
        }
        let kernels: Vec<MovementKernel> = match (&m.speeds, &m.kernels) {
            (Some(_), Some(_)) => {
                return Err(InchError::config("model", "give either `speeds` or `kernels`, not both"))
            }
            (None, None) => return Err(InchError::config("model.speeds", "missing movement model")),
            (Some(speeds), None) => speeds
                .iter()
                .enumerate()
                .map(|(k, &v)| {
                    if v > 0.0 && v.is_finite() {
                        Ok(MovementKernel::brownian(v))
                    } else {
                        Err(InchError::config(format!("model.speeds[{k}]"), "must be positive"))
                    }
                })
                .collect::<Result<_>>()?,
            (None, Some(ks)) => ks
                .iter()
                .enumerate()
                .map(|(k, kc)| kernel(kc, m.dim, &format!("model.kernels[{k}]")))
                .collect::<Result<_>>()?,
        };
        if kernels.is_empty() {
            return Err(InchError::config("model.speeds", "need at least one state"));
        }
        let n = kernels.len();
        let rates = registry.build(&m.rates, n, m.dim)?;
        if let Some(v) = &m.speeds {
            if v.iter().any(|&s| s >= self.priors.speed_max) {
                return Err(InchError::config("priors.speed_max", "must exceed every initial speed"));
            }
        }
        ModelSpec::new(m.dim, kernels, rates, m.initial.clone()).map_err(|e| InchError::config("model", e.to_string()))
    }

    /// `run.kappa` if given, else `1 / run.nominal_interval`, else the smallest rate that
    /// dominates the prior bounds.
    pub fn resolve_kappa(&self, model: &ModelSpec) -> Result<f64> {
        let floor = choose_kappa(model).map_err(|e| InchError::config("model.rates.bounds", e.to_string()))?;
        let (kappa, path) = match (self.run.kappa, self.run.nominal_interval) {
            (Some(k), _) => (k, "run.kappa"),
            (None, Some(dt)) if dt > 0.0 => (1.0 / dt, "run.nominal_interval"),
            (None, Some(_)) => return Err(InchError::config("run.nominal_interval", "must be positive")),
            (None, None) => (floor, "model.rates.bounds"),
        };
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(InchError::config(path, "uniformization rate must be positive and finite"));
        }
        if kappa < floor * (1.0 - 1e-12) {
            return Err(InchError::config(
                path,
                format!("uniformization rate {kappa} is below the largest bounded out-rate {floor}"),
            ));
        }
        Ok(kappa)
    }

    pub fn run_settings(&self) -> RunSettings {
        RunSettings {
            iters: self.run.iters,
            burn_in: self.run.burn_in,
            thin: self.run.thin,
            seed: self.run.seed,
            update_params: self.run.update_params,
            flat_likelihood: false,
            clock: self.run.clock,
        }
    }

    /// Checks every section and returns the model and uniformization rate.
    pub fn resolve(&self, registry: &RateRegistry) -> Result<(ModelSpec, f64)> {
        let model = self.build_model(registry)?;
        let kappa = self.resolve_kappa(&model)?;
        self.tuning.validate()?;
        if !(self.priors.speed_max > 0.0) {
            return Err(InchError::config("priors.speed_max", "must be positive"));
        }
        if self.run.thin == 0 {
            return Err(InchError::config("run.thin", "must be at least 1"));
        }
        if self.run.iters < self.run.burn_in {
            return Err(InchError::config("run.iters", "must be at least run.burn_in"));
        }
        if let Clock::Work { seconds_per_unit } = self.run.clock {
            if !(seconds_per_unit > 0.0) {
                return Err(InchError::config("run.clock.seconds_per_unit", "must be positive"));
            }
        }
        if self.run.samplers.is_empty() {
            return Err(InchError::config("run.samplers", "need at least one sampler"));
        }
        let s = &self.simulate;
        if s.n_obs < 2 {
            return Err(InchError::config("simulate.n_obs", "need at least two observations"));
        }
        if s.intervals.is_empty() || s.intervals.iter().any(|v| !(*v > 0.0)) {
            return Err(InchError::config("simulate.intervals", "need positive observation gaps"));
        }
        if !(0.0..1.0).contains(&s.missing_prob) {
            return Err(InchError::config("simulate.missing_prob", "must lie in [0, 1)"));
        }
        if let Some(k) = s.start_state {
            if k == 0 || k > model.n_states() {
                return Err(InchError::config("simulate.start_state", "1-based state index out of range"));
            }
        }
        if let Some(x) = &s.start_location {
            if x.len() != model.dim() {
                return Err(InchError::config("simulate.start_location", "wrong dimension"));
            }
        }
        Ok((model, kappa))
    }
}

/// Simulates a path and observes it at gaps drawn from `sim.intervals`; interior fixes are
/// then lost independently with probability `sim.missing_prob`.
pub fn simulate_track<R: Rng + ?Sized>(
    model: &ModelSpec,
    kappa: f64,
    sim: &SimulateConfig,
    unit: TimeUnit,
    rng: &mut R,
) -> Result<(ObservationTrack, Trajectory)> {
    let state = match sim.start_state {
        Some(k) => k - 1,
        None => {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            model.initial().iter().position(|p| {
                acc += p;
                u < acc
            }).unwrap_or(model.n_states() - 1)
        }
    };
    let x0 = sim.start_location.clone().unwrap_or_else(|| vec![0.0; model.dim()]);
    let mut times = Vec::with_capacity(sim.n_obs);
    let mut t = 0.0;
    for _ in 0..sim.n_obs {
        times.push(t);
        t += sim.intervals[rng.random_range(0..sim.intervals.len())];
    }
    let traj = simulate_observed(model, (state, &x0), &times, kappa, rng)?;
    let last = sim.n_obs - 1;
    let mut obs_t = Vec::with_capacity(sim.n_obs);
    let mut obs_x = Vec::with_capacity(sim.n_obs);
    for (k, (t, _, x)) in traj.observations().enumerate() {
        let lost = k != 0 && k != last && sim.missing_prob > 0.0 && rng.random::<f64>() < sim.missing_prob;
        if !lost {
            obs_t.push(t);
            obs_x.push(x.to_vec());
        }
    }
    Ok((ObservationTrack::with_unit(obs_t, obs_x, unit)?, traj))
}

fn kernel(kc: &KernelConfig, dim: usize, path: &str) -> Result<MovementKernel> {
    match kc {
        KernelConfig::Brownian { speed } => {
            if *speed > 0.0 && speed.is_finite() {
                Ok(MovementKernel::brownian(*speed))
            } else {
                Err(InchError::config(format!("{path}.speed"), "must be positive"))
            }
        }
        KernelConfig::LinearGaussian { drift, offset, diffusion } => {
            let square = |rows: &Vec<Vec<f64>>, name: &str| -> Result<DMatrix<f64>> {
                if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                    return Err(InchError::config(format!("{path}.{name}"), format!("expected a {dim}x{dim} matrix")));
                }
                Ok(DMatrix::from_fn(dim, dim, |i, j| rows[i][j]))
            };
            if offset.len() != dim {
                return Err(InchError::config(format!("{path}.offset"), format!("expected {dim} entries")));
            }
            Ok(MovementKernel::LinearGaussian {
                drift: square(drift, "drift")?,
                offset: DVector::from_column_slice(offset),
                diffusion: square(diffusion, "diffusion")?,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    const BASIC: &str = r#"{
        "model": {
            "speeds": [0.1, 1.0, 5.0],
            "rates": {
                "family": "constant",
                "rates": [[0, 0.02, 0.02], [0.02, 0, 0.02], [0.02, 0.02, 0]],
                "bounds": [[0, 0.05, 0.05], [0.05, 0, 0.05], [0.05, 0.05, 0]]
            }
        },
        "run": {"nominal_interval": 10, "iters": 1000, "burn_in": 100, "thin": 10}
    }"#;

    fn path_of(e: InchError) -> String {
        match e {
            InchError::Config { path, .. } => path,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn parses_and_resolves() {
        let cfg = Config::from_json(BASIC).unwrap();
        let (model, kappa) = cfg.resolve(&RateRegistry::default()).unwrap();
        assert_eq!(model.n_states(), 3);
        assert!((kappa - 0.1).abs() < 1e-15);
        assert_eq!(cfg.run.sampler, SamplerKind::InchHom);
        assert_eq!(cfg.run_settings().iters, 1000);
        let back = Config::from_json(&cfg.to_json().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn default_kappa_is_bound_out_rate() {
        let mut cfg = Config::from_json(BASIC).unwrap();
        cfg.run.nominal_interval = None;
        let m = cfg.build_model(&RateRegistry::default()).unwrap();
        assert!((cfg.resolve_kappa(&m).unwrap() - 0.1).abs() < 1e-15);
        cfg.run.kappa = Some(0.05);
        assert_eq!(path_of(cfg.resolve_kappa(&m).unwrap_err()), "run.kappa");
    }

    #[test]
    fn errors_carry_field_paths() {
        let bad_type = BASIC.replace("\"iters\": 1000", "\"iters\": \"many\"");
        assert_eq!(path_of(Config::from_json(&bad_type).unwrap_err()), "run.iters");
        let unknown = BASIC.replace("\"thin\": 10", "\"thin\": 10, \"colour\": 1");
        assert_eq!(path_of(Config::from_json(&unknown).unwrap_err()), "run.colour");
        let neg = BASIC.replace("[0.1, 1.0, 5.0]", "[0.1, -1.0, 5.0]");
        let cfg = Config::from_json(&neg).unwrap();
        assert_eq!(path_of(cfg.resolve(&RateRegistry::default()).unwrap_err()), "model.speeds[1]");
        let fam = BASIC.replace("\"constant\"", "\"wavy\"");
        let cfg = Config::from_json(&fam).unwrap();
        assert_eq!(path_of(cfg.resolve(&RateRegistry::default()).unwrap_err()), "model.rates.family");
        let shape = BASIC.replace("[[0, 0.02, 0.02], [0.02, 0, 0.02], [0.02, 0.02, 0]]", "[[0, 0.02], [0.02, 0]]");
        let cfg = Config::from_json(&shape).unwrap();
        assert_eq!(path_of(cfg.resolve(&RateRegistry::default()).unwrap_err()), "model.rates.rates");
        let over = BASIC.replace("\"iters\": 1000", "\"iters\": 10");
        let cfg = Config::from_json(&over).unwrap();
        assert_eq!(path_of(cfg.resolve(&RateRegistry::default()).unwrap_err()), "run.iters");
        let tuning = BASIC.replace("\"run\":", "\"tuning\": {\"p_mix\": 2.0}, \"run\":");
        let cfg = Config::from_json(&tuning).unwrap();
        assert_eq!(path_of(cfg.resolve(&RateRegistry::default()).unwrap_err()), "tuning.p_mix");
    }

    #[test]
    fn radial_and_custom_families() {
        let radial = r#"{
            "model": {
                "speeds": [0.5, 2.0],
                "rates": {"family": "radial", "base": [[0, 0.05], [0.05, 0]], "bounds": [[0, 0.05], [0.05, 0]],
                          "centre": [0, 0], "scale": 3.0}
            },
            "run": {"sampler": "inch-het"}
        }"#;
        let cfg = Config::from_json(radial).unwrap();
        let (m, kappa) = cfg.resolve(&RateRegistry::default()).unwrap();
        assert!(!m.is_homogeneous());
        assert!((kappa - 0.05).abs() < 1e-15);

        let mut reg = RateRegistry::default();
        reg.register("daily", |v, n, _| {
            let amp = v.get("amplitude").and_then(Value::as_f64).ok_or_else(|| InchError::config("model.rates.amplitude", "missing"))?;
            Ok(RateFunction::custom("daily", DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { 2.0 * amp }), true, move |i, j, t, _| {
                if i == j { 0.0 } else { amp * (1.0 + (t / 1440.0 * std::f64::consts::TAU).sin()) }
            }))
        });
        let custom = radial.replace(
            r#"{"family": "radial", "base": [[0, 0.05], [0.05, 0]], "bounds": [[0, 0.05], [0.05, 0]],
                          "centre": [0, 0], "scale": 3.0}"#,
            r#"{"family": "daily", "amplitude": 0.01}"#,
        );
        let cfg = Config::from_json(&custom).unwrap();
        let (m, kappa) = cfg.resolve(&reg).unwrap();
        assert!(m.is_homogeneous());
        assert!((kappa - 0.02).abs() < 1e-15);
        assert!(reg.families().contains(&"daily"));
    }

    #[test]
    fn linear_gaussian_kernels() {
        let text = r#"{
            "model": {
                "kernels": [
                    {"type": "brownian", "speed": 1.0},
                    {"type": "linear_gaussian", "drift": [[-0.1, 0], [0, -0.1]], "offset": [0, 0], "diffusion": [[1, 0], [0, 1]]}
                ],
                "rates": {"family": "constant", "rates": [[0, 0.01], [0.01, 0]], "bounds": [[0, 0.02], [0.02, 0]]}
            }
        }"#;
        let (m, _) = Config::from_json(text).unwrap().resolve(&RateRegistry::default()).unwrap();
        assert!(m.speeds().is_none());
        let bad = text.replace("\"offset\": [0, 0]", "\"offset\": [0]");
        let cfg = Config::from_json(&bad).unwrap();
        assert_eq!(path_of(cfg.resolve(&RateRegistry::default()).unwrap_err()), "model.kernels[1].offset");
    }

    #[test]
    fn simulated_track_follows_schedule() {
        let mut cfg = Config::from_json(BASIC).unwrap();
        cfg.simulate = SimulateConfig { n_obs: 40, intervals: vec![9.0, 11.0], missing_prob: 0.2, start_state: Some(2), start_location: Some(vec![1.0, -1.0]) };
        let (m, kappa) = cfg.resolve(&RateRegistry::default()).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let (track, traj) = simulate_track(&m, kappa, &cfg.simulate, TimeUnit::Minutes, &mut rng).unwrap();
        assert_eq!(traj.observations().count(), 40);
        assert!(track.len() < 40 && track.len() > 20);
        assert_eq!(track.location(0), &[1.0, -1.0]);
        assert_eq!(traj.states[0], 1);
        assert!(track.intervals().all(|d| [9.0, 11.0].iter().any(|g| ((d / g).round() * g - d).abs() < 1e-9 || d >= 18.0)));
    }

    #[test]
    fn one_state_simulation_has_brownian_msd() {
        let cfg = Config::from_json(
            r#"{"model": {"speeds": [2.0], "rates": {"family": "constant", "rates": [[0]], "bounds": [[0]]}},
                "run": {"kappa": 0.1},
                "simulate": {"n_obs": 4001, "intervals": [10]}}"#,
        )
        .unwrap();
        let (model, kappa) = cfg.resolve(&RateRegistry::default()).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let (track, _) = simulate_track(&model, kappa, &cfg.simulate, TimeUnit::Minutes, &mut rng).unwrap();
        let n = track.n_intervals() as f64;
        let slope = (0..track.n_intervals())
            .map(|c| crate::numeric::sq_dist(track.location(c), track.location(c + 1)) / 10.0)
            .sum::<f64>()
            / n;
        // |dx|^2 / (v dt) is chi-square with 2 degrees of freedom.
        let se = 2.0 * (4.0 / n).sqrt();
        assert!((slope - 4.0).abs() < 4.0 * se, "slope {slope}");
    }
}
