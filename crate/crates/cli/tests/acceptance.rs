//! Acceptance suite: one pass/fail line per criterion, non-zero exit if any fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::Instant;

use inch::baseline::conditional_loglik;
use inch::forward::{brute_force_loglik, forward_loglik, pinned_interval_log_density, EventGrid, GridKind};
use inch::homolik::{hom_forward_loglik, interval_kernel};
use inch::mcmc::Clock;
use inch::numeric::logsumexp;
use inch::uniformization::{sample_potential_switches, simulate};
use inch::{
    ess, run_chain, Config, IntervalSwitches, LabelledInterval, LabelledSwitchSet, ModelSpec, MovementKernel,
    ObservationTrack, Priors, RateFunction, RateRegistry, RunSettings, SamplerKind, SwitchSet, Tuning,
};
use inch_cli::{bundled, cmd_benchmark, load_track};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn random_rates(n: usize, rng: &mut ChaCha8Rng) -> (DMatrix<f64>, DMatrix<f64>) {
    let rates = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { rng.random_range(0.05..1.5) });
    let bounds = rates.map(|r| 1.5 * r);
    (rates, bounds)
}

fn random_speeds(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut v = 0.0;
    (0..n)
        .map(|_| {
            v += rng.random_range(0.2..3.0);
            v
        })
        .collect()
}

fn random_model(n: usize, dim: usize, rng: &mut ChaCha8Rng) -> (ModelSpec, Vec<f64>, DMatrix<f64>) {
    let speeds = random_speeds(n, rng);
    let (rates, bounds) = random_rates(n, rng);
    let mut initial: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = initial.iter().sum();
    initial.iter_mut().for_each(|p| *p /= total);
    let last = 1.0 - initial[..n - 1].iter().sum::<f64>();
    initial[n - 1] = last;
    let kernels = speeds.iter().map(|&v| MovementKernel::brownian(v)).collect();
    let model = ModelSpec::new(dim, kernels, RateFunction::constant(rates.clone(), bounds), Some(initial)).unwrap();
    (model, speeds, rates)
}

fn max_out(rates: &DMatrix<f64>) -> f64 {
    (0..rates.nrows()).map(|i| rates.row(i).sum() * 1.5).fold(0.0, f64::max)
}

/// Uniformized transition matrix written from the rate matrix.
fn jump_matrix(rates: &DMatrix<f64>, kappa: f64) -> DMatrix<f64> {
    let n = rates.nrows();
    DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 - rates.row(i).sum() / kappa } else { rates[(i, j)] / kappa })
}

fn brownian_log_density(x0: &[f64], x1: &[f64], var: f64) -> f64 {
    let d = x0.len() as f64;
    let sq: f64 = x0.iter().zip(x1).map(|(a, b)| (b - a).powi(2)).sum();
    -0.5 * d * (2.0 * std::f64::consts::PI * var).ln() - sq / (2.0 * var)
}

/// Sum over every state sequence on the merged grid, one state per segment.
fn enumerated_loglik(
    times: &[f64],
    is_switch: &[bool],
    locs: &[Vec<f64>],
    speeds: &[f64],
    initial: &[f64],
    p: &DMatrix<f64>,
) -> f64 {
    let n = speeds.len();
    let k = times.len() - 1;
    let mut terms = Vec::new();
    let mut seq = vec![0usize; k];
    loop {
        let mut lp = initial[seq[0]].ln();
        for s in 0..k {
            if s > 0 {
                lp += if is_switch[s] {
                    p[(seq[s - 1], seq[s])].ln()
                } else if seq[s] == seq[s - 1] {
                    0.0
                } else {
                    f64::NEG_INFINITY
                };
            }
            lp += brownian_log_density(&locs[s], &locs[s + 1], speeds[seq[s]] * (times[s + 1] - times[s]));
        }
        terms.push(lp);
        let mut pos = 0;
        while pos < k && seq[pos] == n - 1 {
            seq[pos] = 0;
            pos += 1;
        }
        if pos == k {
            break;
        }
        seq[pos] += 1;
    }
    logsumexp(&terms)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    let instances = 250;
    for _ in 0..instances {
        let n = rng.random_range(1..=3);
        let dim = rng.random_range(1..=2);
        let (model, speeds, rates) = random_model(n, dim, &mut rng);
        let kappa = max_out(&rates).max(0.1) * rng.random_range(1.0..2.0);
        let budget = rng.random_range(1..=8usize);
        let n_obs = rng.random_range(2..=budget.min(4) + 1);
        let mut t = 0.0;
        let obs_times: Vec<f64> = (0..n_obs)
            .map(|_| {
                let now = t;
                t += rng.random_range(0.2..2.0);
                now
            })
            .collect();
        let loc = |rng: &mut ChaCha8Rng| (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect::<Vec<f64>>();
        let obs_locs: Vec<Vec<f64>> = (0..n_obs).map(|_| loc(&mut rng)).collect();
        let mut spare = budget - (n_obs - 1);
        let intervals: Vec<IntervalSwitches> = obs_times
            .windows(2)
            .map(|w| {
                let m = rng.random_range(0..=spare);
                spare -= m;
                let mut ts: Vec<f64> = (0..m).map(|_| rng.random_range(w[0]..w[1])).collect();
                ts.sort_by(f64::total_cmp);
                let ls = (0..m).map(|_| loc(&mut rng)).collect();
                IntervalSwitches::with_locations(ts, ls)
            })
            .collect();
        let track = ObservationTrack::new(obs_times, obs_locs).unwrap();
        let switches = SwitchSet::new(intervals);
        let grid = EventGrid::merge(&track, &switches).unwrap();
        if grid.segments() > 8 {
            return Err(format!("instance with {} segments", grid.segments()));
        }
        let fwd = forward_loglik(&grid, &model, kappa).map_err(|e| e.to_string())?;
        let brute = brute_force_loglik(&grid, &model, kappa).map_err(|e| e.to_string())?;
        let is_switch: Vec<bool> =
            grid.kinds().iter().map(|k| *k == GridKind::PotentialSwitch).collect();
        let oracle = enumerated_loglik(
            grid.times(),
            &is_switch,
            grid.locations(),
            &speeds,
            model.initial(),
            &jump_matrix(&rates, kappa),
        );
        worst = worst.max(rel_err(fwd, brute)).max(rel_err(fwd, oracle));
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst <= 1e-10 && secs < 10.0,
        format!("{instances} instances, max relative error {worst:.2e}, {secs:.2} s"),
    )
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst_kernel: f64 = 0.0;
    let instances = 150;
    for _ in 0..instances {
        let n = rng.random_range(1..=3);
        let dim = rng.random_range(1..=2);
        let (model, _, rates) = random_model(n, dim, &mut rng);
        let kappa = max_out(&rates).max(0.1) * rng.random_range(1.0..2.0);
        let m = rng.random_range(0..=5);
        let t1 = rng.random_range(0.5..3.0);
        let mut ts: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..t1)).collect();
        ts.sort_by(f64::total_cmp);
        let x0: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        let x1: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        let k = interval_kernel(&model, kappa, &x0, &x1, 0.0, &ts, t1, 1e9).map_err(|e| e.to_string())?;
        let pinned = pinned_interval_log_density(&model, kappa, &x0, &x1, 0.0, &ts, t1).map_err(|e| e.to_string())?;
        for i in 0..n {
            for j in 0..n {
                let (a, b) = (k.log(i, j), pinned[(i, j)]);
                if a == f64::NEG_INFINITY || b == f64::NEG_INFINITY {
                    if a != b {
                        return Err(format!("support mismatch at ({i},{j}): {a} vs {b}"));
                    }
                    continue;
                }
                worst_kernel = worst_kernel.max(rel_err(a.exp(), b.exp()));
            }
        }
    }

    let mut worst_marginal: f64 = 0.0;
    let marginal_instances = 60;
    for _ in 0..marginal_instances {
        let n = rng.random_range(2..=3);
        let (model, _, rates) = random_model(n, 2, &mut rng);
        let kappa = max_out(&rates) * rng.random_range(1.0..2.0);
        let n_obs = rng.random_range(2..=4);
        let times: Vec<f64> = (0..n_obs).map(|c| c as f64 * rng.random_range(0.8..1.2)).collect();
        let locs: Vec<Vec<f64>> = (0..n_obs).map(|_| vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]).collect();
        let track = ObservationTrack::new(times.clone(), locs).unwrap();
        // n^(1 + total switches) labellings, at most 3^6.
        let max_total = if n == 3 { 5 } else { 9 };
        let mut spare: usize = rng.random_range(0..=max_total);
        let switch_times: Vec<Vec<f64>> = times
            .windows(2)
            .map(|w| {
                let m = rng.random_range(0..=spare);
                spare -= m;
                let mut ts: Vec<f64> = (0..m).map(|_| rng.random_range(w[0]..w[1])).collect();
                ts.sort_by(f64::total_cmp);
                ts
            })
            .collect();
        let total: usize = switch_times.iter().map(Vec::len).sum();
        let slots = 1 + total;
        let mut terms = Vec::new();
        for code in 0..n.pow(slots as u32) {
            let mut digits = (0..slots).scan(code, |c, _| {
                let d = *c % n;
                *c /= n;
                Some(d)
            });
            let initial = digits.next().unwrap();
            let intervals = switch_times
                .iter()
                .map(|ts| LabelledInterval { times: ts.clone(), labels: digits.by_ref().take(ts.len()).collect() })
                .collect();
            let labelled = LabelledSwitchSet { initial, intervals };
            terms.push(conditional_loglik(&track, &labelled, &model, kappa).map_err(|e| e.to_string())?);
        }
        let switches = SwitchSet::new(switch_times.into_iter().map(IntervalSwitches::times_only).collect());
        let hom = hom_forward_loglik(&track, &switches, &model, kappa, 1e9).map_err(|e| e.to_string())?;
        worst_marginal = worst_marginal.max(rel_err(logsumexp(&terms), hom));
    }
    check(
        worst_kernel <= 1e-10 && worst_marginal <= 1e-10,
        format!(
            "{instances} kernels, max relative error {worst_kernel:.2e}; {marginal_instances} marginalizations, max relative error {worst_marginal:.2e}"
        ),
    )
}

fn final_state_counts(model: &ModelSpec, horizon: f64, kappa: f64, reps: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0.0; model.n_states()];
    let x0 = vec![0.0; model.dim()];
    for _ in 0..reps {
        let traj = simulate(model, (0, &x0), 0.0, horizon, kappa, &mut rng).unwrap();
        counts[traj.final_state()] += 1.0;
    }
    counts
}

fn criterion_3() -> Outcome {
    let rates = DMatrix::from_row_slice(3, 3, &[0.0, 0.6, 0.2, 0.3, 0.0, 0.5, 0.4, 0.1, 0.0]);
    let bounds = rates.map(|r| 1.25 * r);
    let model = ModelSpec::brownian(2, &[0.5, 1.0, 2.0], rates.clone(), bounds).map_err(|e| e.to_string())?;
    let kappa = model.max_bound_out_rate();
    let horizon = 1.7;
    let reps = 100_000;
    let mut generator = rates.clone();
    for i in 0..3 {
        generator[(i, i)] = -rates.row(i).sum();
    }
    let exact = (generator * horizon).exp();
    let a = final_state_counts(&model, horizon, kappa, reps, 303);
    let b = final_state_counts(&model, horizon, 2.0 * kappa, reps, 304);
    let mut worst_z: f64 = 0.0;
    for j in 0..3 {
        let p = exact[(0, j)];
        let se = (p * (1.0 - p) / reps as f64).sqrt();
        worst_z = worst_z.max((a[j] / reps as f64 - p).abs() / se).max((b[j] / reps as f64 - p).abs() / se);
    }
    let mut stat = 0.0;
    for j in 0..3 {
        let pooled = (a[j] + b[j]) / (2.0 * reps as f64);
        let e = pooled * reps as f64;
        stat += (a[j] - e).powi(2) / e + (b[j] - e).powi(2) / e;
    }
    let p_value = 1.0 - ChiSquared::new(2.0).unwrap().cdf(stat);
    check(
        worst_z <= 3.0 && p_value > 0.01,
        format!("max |z| against the matrix exponential {worst_z:.2}, kappa vs 2 kappa chi-square p = {p_value:.3}"),
    )
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let draws = 100_000;
    let (kappa, dt) = (0.1, 10.0);
    let mut counts = [0.0; 3];
    for _ in 0..draws {
        let m = sample_potential_switches(0.0, dt, kappa, &mut rng).len();
        if m < 3 {
            counts[m] += 1.0;
        }
    }
    let e = (-1.0f64).exp();
    let expected = [e, e, e / 2.0];
    let mut worst_z: f64 = 0.0;
    let mut freqs = Vec::new();
    for m in 0..3 {
        let p = expected[m];
        let f = counts[m] / draws as f64;
        worst_z = worst_z.max((f - p).abs() / (p * (1.0 - p) / draws as f64).sqrt());
        freqs.push(format!("{f:.4}"));
    }
    check(worst_z <= 3.0, format!("P(M=0,1,2) = {}, max |z| {worst_z:.2}", freqs.join("/")))
}

fn gauss_legendre(k: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; k];
    let mut weights = vec![0.0; k];
    for i in 0..k {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (k as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=k {
                let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            let dp = k as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                let dp = {
                    let (mut q0, mut q1) = (1.0, x);
                    for j in 2..=k {
                        let q2 = ((2 * j - 1) as f64 * x * q1 - (j - 1) as f64 * q0) / j as f64;
                        q0 = q1;
                        q1 = q2;
                    }
                    k as f64 * (x * q1 - q0) / (x * x - 1.0)
                };
                weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
                break;
            }
        }
        nodes[i] = x;
    }
    (nodes, weights)
}

/// Integral of `f` over `lo < t_1 < ... < t_m < hi` by nested Gauss-Legendre rules.
fn simplex_integral(m: usize, lo: f64, hi: f64, rule: &(Vec<f64>, Vec<f64>), prefix: &mut Vec<f64>, f: &dyn Fn(&[f64]) -> f64) -> f64 {
    if prefix.len() == m {
        return f(prefix);
    }
    let start = prefix.last().copied().unwrap_or(lo);
    let half = 0.5 * (hi - start);
    let mut total = 0.0;
    for (x, w) in rule.0.iter().zip(&rule.1) {
        prefix.push(start + half * (x + 1.0));
        total += w * half * simplex_integral(m, lo, hi, rule, prefix, f);
        prefix.pop();
    }
    total
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let speeds = [0.5, 4.0];
    let rates = DMatrix::from_row_slice(2, 2, &[0.0, 0.8, 1.2, 0.0]);
    let model = ModelSpec::brownian(1, &speeds, rates.clone(), rates.clone()).map_err(|e| e.to_string())?;
    let kappa = 2.0;
    let dt = 1.0;
    let (x0, x1) = (0.0, 3.0);
    let track = ObservationTrack::new(vec![0.0, dt], vec![vec![x0], vec![x1]]).unwrap();
    let p = jump_matrix(&rates, kappa);
    let m_max = 5;

    let rule = gauss_legendre(14);
    let mut oracle = Vec::new();
    let mut log_fact = 0.0;
    for m in 0..=m_max {
        if m > 0 {
            log_fact += (m as f64).ln();
        }
        let lik = |ts: &[f64]| -> f64 {
            let mut bounds = vec![0.0];
            bounds.extend_from_slice(ts);
            bounds.push(dt);
            let mut total = 0.0;
            for code in 0..2usize.pow(m as u32 + 1) {
                let seq: Vec<usize> = (0..=m).map(|k| (code >> k) & 1).collect();
                let mut w = 0.5;
                let mut var = 0.0;
                for k in 0..=m {
                    if k > 0 {
                        w *= p[(seq[k - 1], seq[k])];
                    }
                    var += speeds[seq[k]] * (bounds[k + 1] - bounds[k]);
                }
                total += w * brownian_log_density(&[x0], &[x1], var).exp();
            }
            total
        };
        let integral = simplex_integral(m, 0.0, dt, &rule, &mut Vec::new(), &lik);
        let log_pois = -kappa * dt + m as f64 * (kappa * dt).ln() - log_fact;
        // Ordered uniform times have density m!/dt^m, cancelling the 1/m! of the Poisson term.
        oracle.push(log_pois + log_fact - m as f64 * dt.ln() + integral.ln());
    }
    let norm = logsumexp(&oracle);
    let oracle: Vec<f64> = oracle.iter().map(|l| (l - norm).exp()).collect();

    let draws = 100_000;
    let burn_in = 5_000;
    let settings = RunSettings {
        iters: burn_in + draws,
        burn_in,
        thin: 1,
        seed: 505,
        update_params: false,
        flat_likelihood: false,
        clock: Clock::default(),
    };
    let tuning = Tuning { max_block: Some(1), ..Tuning::default() };
    let out = run_chain(SamplerKind::InchHom, &model, &track, kappa, &tuning, &Priors::default(), &settings)
        .map_err(|e| e.to_string())?;
    let counts: Vec<usize> = out.samples.iter().map(|s| s.switch_counts[0]).collect();
    let kept: Vec<usize> = counts.iter().copied().filter(|&m| m <= m_max).collect();
    let mut worst_z: f64 = 0.0;
    let mut cells = Vec::new();
    for m in 0..=m_max {
        let series: Vec<f64> = counts.iter().filter(|&&c| c <= m_max).map(|&c| f64::from(u8::from(c == m))).collect();
        let freq = series.iter().sum::<f64>() / kept.len() as f64;
        let n_eff = ess(&series).map_err(|e| e.to_string())?;
        let se = (oracle[m] * (1.0 - oracle[m]) / n_eff).sqrt();
        worst_z = worst_z.max((freq - oracle[m]).abs() / se);
        cells.push(format!("{m}: {freq:.4} vs {:.4}", oracle[m]));
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst_z <= 3.0 && secs < 120.0,
        format!("{} draws with M <= {m_max}; {}; max |z| {worst_z:.2}; {secs:.1} s", kept.len(), cells.join(", ")),
    )
}

fn bundled_config() -> Config {
    Config::load(bundled::config()).expect("bundled config parses")
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let cfg = bundled_config();
    let (model, kappa) = cfg.resolve(&RateRegistry::default()).map_err(|e| e.to_string())?;
    let truth = model.speeds().unwrap();
    let track = load_track(&bundled::track_301(), cfg.run.time_unit).map_err(|e| e.to_string())?;
    let out = run_chain(SamplerKind::InchHom, &model, &track, kappa, &cfg.tuning, &cfg.priors, &cfg.run_settings())
        .map_err(|e| e.to_string())?;
    let mut ok = true;
    let mut cells = Vec::new();
    for (k, v) in truth.iter().enumerate() {
        let draws: Vec<f64> = out.samples.iter().map(|s| s.speeds[k]).collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let sd = (draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (draws.len() - 1) as f64).sqrt();
        ok &= (mean - v).abs() <= 3.0 * sd;
        cells.push(format!("v_{} {mean:.3} (sd {sd:.3}, true {v})", k + 1));
    }
    let secs = start.elapsed().as_secs_f64();
    check(ok && secs < 1800.0, format!("{}; {secs:.1} s", cells.join(", ")))
}

fn criterion_7() -> Outcome {
    let mut cfg = bundled_config();
    cfg.run.clock = Clock::Wall;
    cfg.run.autotune = true;
    cfg.run.samplers = vec![SamplerKind::InchHom, SamplerKind::Baseline];
    if cfg.run.iters != 100_000 {
        return Err(format!("bundled config runs {} iterations", cfg.run.iters));
    }
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let report = cmd_benchmark(
        &cfg,
        &RateRegistry::default(),
        &[bundled::track_61(), bundled::track_301()],
        cfg.run.seed,
        dir.path(),
    )
    .map_err(|e| e.to_string())?;
    let ratios: Vec<String> = report
        .tracks
        .iter()
        .map(|t| format!("{} obs ratio {:.3}", t.n_obs, t.ratio.unwrap_or(f64::NAN)))
        .collect();
    let scaling = report.scaling.unwrap_or(f64::NAN);
    check(scaling >= 2.0, format!("{}; growth {scaling:.2}", ratios.join(", ")))
}

fn read_dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

fn run_inch(args: &[&str]) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_inch"))
        .args(args)
        .env("RUST_LOG", "warn")
        .stdout(Stdio::null())
        .status()
        .map_err(|e| e.to_string())?;
    if status.success() {
        Ok(())
    } else {
        Err(format!("inch {} exited with {status}", args.join(" ")))
    }
}

fn criterion_8() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = dir.path();
    let mut cfg = bundled_config();
    cfg.run.iters = 12_000;
    cfg.run.burn_in = 2_000;
    cfg.run.thin = 10;
    let config = root.join("config.json");
    std::fs::write(&config, cfg.to_json().map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let config = config.to_str().unwrap();
    let data = bundled::track_61();
    let data = data.to_str().unwrap();
    let mut compared = 0;
    for sampler in ["inch-hom", "inch-het", "baseline"] {
        let mut fit_cfg = cfg.clone();
        fit_cfg.run.sampler = serde_json::from_value(serde_json::Value::from(sampler)).unwrap();
        let path = root.join(format!("fit_{sampler}.json"));
        std::fs::write(&path, fit_cfg.to_json().map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let mut outs: Vec<BTreeMap<String, Vec<u8>>> = Vec::new();
        for rep in 0..2 {
            let out: PathBuf = root.join(format!("fit_{sampler}_{rep}"));
            run_inch(&["fit", "--config", path.to_str().unwrap(), "--data", data, "--seed", "8", "--out", out.to_str().unwrap()])?;
            outs.push(read_dir_bytes(&out));
        }
        if outs[0] != outs[1] {
            return Err(format!("fit with {sampler} differs between runs"));
        }
        compared += outs[0].len();
    }

    let mut sims = Vec::new();
    for rep in 0..2 {
        let out = root.join(format!("sim_{rep}"));
        std::fs::create_dir_all(&out).unwrap();
        let track = out.join("track.csv");
        let traj = out.join("trajectory.csv");
        run_inch(&["simulate", "--config", config, "--seed", "8", "--out", track.to_str().unwrap(), "--trajectory", traj.to_str().unwrap()])?;
        sims.push(read_dir_bytes(&out));
    }
    if sims[0] != sims[1] {
        return Err("simulate output differs between runs".into());
    }
    compared += sims[0].len();

    let mut benches = Vec::new();
    for rep in 0..2 {
        let out = root.join(format!("bench_{rep}"));
        run_inch(&["benchmark", "--config", config, "--data", data, "--data", data, "--seed", "8", "--out", out.to_str().unwrap()])?;
        benches.push(read_dir_bytes(&out));
    }
    if benches[0] != benches[1] {
        return Err("benchmark output differs between runs".into());
    }
    compared += benches[0].len();
    check(compared >= 10, format!("{compared} output files bit-identical across reruns of simulate, fit and benchmark"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("oracle equivalence", criterion_1),
        ("homogeneous integration", criterion_2),
        ("thinning correctness", criterion_3),
        ("Poisson regime", criterion_4),
        ("sampler exactness", criterion_5),
        ("parameter recovery", criterion_6),
        ("scaling experiment", criterion_7),
        ("determinism", criterion_8),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (status, detail) = match f() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {} {name}: {status} ({detail}) [{:.1} s]", k + 1, start.elapsed().as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
    println!("all {} criteria passed", criteria.len());
}
