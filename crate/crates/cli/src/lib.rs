//! The `simulate`, `fit` and `benchmark` commands behind the `inch` binary.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use inch::config::simulate_track;
use inch::mcmc::tune::{grid_search, TuneResult};
use inch::mcmc::{AcceptanceStats, Clock};
use inch::track::ingest_csv;
use inch::{
    run_chain, ChainOutput, Config, EfficiencyReport, InchError, ModelSpec, ObservationTrack, RateRegistry, Result,
    SamplerKind, TimeUnit, Tuning,
};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_GUARD: i32 = 3;

/// Process exit code for an error.
pub fn exit_code(e: &InchError) -> i32 {
    match e {
        _ if e.is_guard_breach() => EXIT_GUARD,
        InchError::InvalidModel(_)
        | InchError::PreconditionViolation(_)
        | InchError::UnboundedPrior { .. }
        | InchError::SequenceLengthMismatch { .. }
        | InchError::Parse { .. }
        | InchError::NonMonotoneTime { .. }
        | InchError::Config { .. }
        | InchError::Io(_)
        | InchError::Csv(_)
        | InchError::Json(_) => EXIT_VALIDATION,
        _ => EXIT_FAILURE,
    }
}

/// Reads a track and expresses its times in `unit`.
pub fn load_track(path: &Path, unit: TimeUnit) -> Result<ObservationTrack> {
    Ok(ingest_csv(path)?.to_unit(unit))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Simulates a track from the configured model and writes it (and optionally the full
/// latent path) as CSV.
pub fn cmd_simulate(
    cfg: &Config,
    registry: &RateRegistry,
    seed: u64,
    out: &Path,
    trajectory_out: Option<&Path>,
) -> Result<ObservationTrack> {
    let (model, kappa) = cfg.resolve(registry)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (track, traj) = simulate_track(&model, kappa, &cfg.simulate, cfg.run.time_unit, &mut rng)?;
    track.save(out)?;
    if let Some(p) = trajectory_out {
        traj.write_csv(BufWriter::new(File::create(p)?))?;
    }
    Ok(track)
}

/// Outcome of one sampler run, as written to `efficiency.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub sampler: SamplerKind,
    pub n_obs: usize,
    pub kappa: f64,
    pub seed: u64,
    pub clock: Clock,
    pub tuning: Tuning,
    pub acceptance: AcceptanceStats,
    pub guard_breaches: u64,
    pub work_units: u64,
    pub report: EfficiencyReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tune: Option<TuneResult>,
}

/// Runs one sampler, tuning it first when `run.autotune` is set.
pub fn run_sampler(
    cfg: &Config,
    kind: SamplerKind,
    model: &ModelSpec,
    track: &ObservationTrack,
    kappa: f64,
    seed: u64,
) -> Result<(ChainOutput, FitSummary)> {
    let tune = if cfg.run.autotune {
        Some(grid_search(kind, model, track, kappa, &cfg.tuning, &cfg.priors, &cfg.tune, seed, cfg.run.clock)?)
    } else {
        None
    };
    let tuning = tune.as_ref().map_or_else(|| cfg.tuning.clone(), |t| t.best.clone());
    let settings = inch::RunSettings { seed, ..cfg.run_settings() };
    let out = run_chain(kind, model, track, kappa, &tuning, &cfg.priors, &settings)?;
    log::info!(
        "{}: {} iterations in {:.2} s wall time ({} guard breaches)",
        kind.name(),
        out.iters,
        out.wall_s,
        out.guard_breaches
    );
    let report = EfficiencyReport::from_chain(&out)?;
    let summary = FitSummary {
        sampler: kind,
        n_obs: track.len(),
        kappa,
        seed,
        clock: cfg.run.clock,
        tuning,
        acceptance: out.acceptance.clone(),
        guard_breaches: out.guard_breaches,
        work_units: out.work_units,
        report,
        tune,
    };
    Ok((out, summary))
}

/// Fits the configured sampler to `data`, writing `samples.csv` and `efficiency.json`.
pub fn cmd_fit(cfg: &Config, registry: &RateRegistry, data: &Path, seed: u64, out_dir: &Path) -> Result<FitSummary> {
    let (model, kappa) = cfg.resolve(registry)?;
    let track = load_track(data, cfg.run.time_unit)?;
    if track.dim() != model.dim() {
        return Err(InchError::Config {
            path: "model.dim".into(),
            msg: format!("data has {} coordinates, model expects {}", track.dim(), model.dim()),
        });
    }
    fs::create_dir_all(out_dir)?;
    let (out, summary) = run_sampler(cfg, cfg.run.sampler, &model, &track, kappa, seed)?;
    out.write_csv(BufWriter::new(File::create(out_dir.join("samples.csv"))?))?;
    write_json(&out_dir.join("efficiency.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerResult {
    pub sampler: SamplerKind,
    pub tuning: Tuning,
    pub min_ess: f64,
    pub elapsed_s: f64,
    pub ess_per_second: f64,
    pub acceptance: AcceptanceStats,
    pub guard_breaches: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackBenchmark {
    pub data: String,
    pub n_obs: usize,
    pub results: Vec<SamplerResult>,
    /// ESS/s of the first integrated sampler over that of the baseline.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub seed: u64,
    pub iters: usize,
    pub clock: Clock,
    pub tracks: Vec<TrackBenchmark>,
    /// Ratio on the last track divided by the ratio on the first.
    pub scaling: Option<f64>,
}

impl BenchmarkReport {
    pub fn table(&self) -> String {
        let mut s = format!("{:<28} {:>6} {:<10} {:>10} {:>12} {:>12}\n", "data", "n_obs", "sampler", "min ESS", "elapsed s", "ESS/s");
        for t in &self.tracks {
            for r in &t.results {
                s.push_str(&format!(
                    "{:<28} {:>6} {:<10} {:>10.1} {:>12.3} {:>12.4}\n",
                    t.data,
                    t.n_obs,
                    r.sampler.name(),
                    r.min_ess,
                    r.elapsed_s,
                    r.ess_per_second
                ));
            }
            if let Some(ratio) = t.ratio {
                s.push_str(&format!("{:<28} efficiency ratio {ratio:.3}\n", t.data));
            }
        }
        if let Some(x) = self.scaling {
            s.push_str(&format!("ratio growth from first to last track: {x:.3}\n"));
        }
        s
    }
}

fn stem(p: &Path) -> String {
    p.file_stem().map_or_else(|| "data".into(), |s| s.to_string_lossy().into_owned())
}

/// Runs every sampler in `run.samplers` on each data file from the same seed and writes
/// per-sampler sample files plus `benchmark.json`.
pub fn cmd_benchmark(
    cfg: &Config,
    registry: &RateRegistry,
    data: &[PathBuf],
    seed: u64,
    out_dir: &Path,
) -> Result<BenchmarkReport> {
    if data.is_empty() {
        return Err(InchError::Config { path: "data".into(), msg: "need at least one track".into() });
    }
    let (model, kappa) = cfg.resolve(registry)?;
    fs::create_dir_all(out_dir)?;
    let mut tracks = Vec::new();
    for path in data {
        let track = load_track(path, cfg.run.time_unit)?;
        let mut results = Vec::new();
        for &kind in &cfg.run.samplers {
            let (out, summary) = run_sampler(cfg, kind, &model, &track, kappa, seed)?;
            let file = out_dir.join(format!("samples_{}_{}.csv", stem(path), kind.name()));
            out.write_csv(BufWriter::new(File::create(file)?))?;
            results.push(SamplerResult {
                sampler: kind,
                tuning: summary.tuning,
                min_ess: summary.report.min_ess,
                elapsed_s: summary.report.elapsed_s,
                ess_per_second: summary.report.ess_per_second,
                acceptance: summary.acceptance,
                guard_breaches: summary.guard_breaches,
            });
        }
        let inch = results.iter().find(|r| r.sampler != SamplerKind::Baseline);
        let base = results.iter().find(|r| r.sampler == SamplerKind::Baseline);
        let ratio = match (inch, base) {
            (Some(a), Some(b)) => Some(a.ess_per_second / b.ess_per_second),
            _ => None,
        };
        tracks.push(TrackBenchmark {
            data: path.file_name().map_or_else(String::new, |s| s.to_string_lossy().into_owned()),
            n_obs: track.len(),
            results,
            ratio,
        });
    }
    let scaling = match (tracks.first().and_then(|t| t.ratio), tracks.last().and_then(|t| t.ratio)) {
        (Some(a), Some(b)) if tracks.len() > 1 => Some(b / a),
        _ => None,
    };
    let report = BenchmarkReport { seed, iters: cfg.run.iters, clock: cfg.run.clock, tracks, scaling };
    write_json(&out_dir.join("benchmark.json"), &report)?;
    Ok(report)
}

/// Bundled example configuration and synthetic tracks.
pub mod bundled {
    use std::path::PathBuf;

    pub fn data_dir() -> PathBuf {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data")
    }

    pub fn config() -> PathBuf {
        data_dir().join("synthetic.json")
    }

    pub fn track_61() -> PathBuf {
        data_dir().join("synthetic_61.csv")
    }

    pub fn track_301() -> PathBuf {
        data_dir().join("synthetic_301.csv")
    }

    /// Seeds passed to `inch simulate` to produce the bundled tracks.
    pub const SEED_61: u64 = 61;
    pub const SEED_301: u64 = 301;
}
