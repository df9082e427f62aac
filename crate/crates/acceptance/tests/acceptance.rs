//! Acceptance suite. Runs every criterion at its stated parameters and
//! prints one PASS/FAIL line per criterion; exits nonzero if any fails.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use mvsde_cli::{run, run_to_dir, ExperimentConfig, ExperimentOutput, RunOptions};
use mvsde_core::analysis::{bihari_bound, check_modulus_domination, log_grid, RhoEta, DEFAULT_ETA};
use mvsde_core::kernels::CATALOG;
use mvsde_core::measure::{wasserstein_1d, wasserstein_assignment, wasserstein_brute_force};
use mvsde_core::numeric::MeanEstimate;
use mvsde_core::picard::linear_moments;
use mvsde_core::rng::{mix_seed, CounterRng, Domain};
use mvsde_core::{
    catalog_kernel, euler_interacting, generate_bundle, picard_solve, sample_initial, EmpiricalMeasure, InitialLaw,
    TimeGrid,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

/// The `make reproduce` suite.
const REPRODUCE: &[&str] =
    &["chaos_linear", "chaos_loglip", "euler_rate_linear", "euler_rate_loglip", "moments_linear", "moments_loglip"];

fn load(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(&configs_dir().join(format!("{name}.toml"))).expect("config loads")
}

fn run_config(config: &ExperimentConfig) -> Result<ExperimentOutput, String> {
    let experiment = config.experiment.expect("config names its experiment");
    run(experiment, config, &RunOptions::default()).map_err(|e| e.to_string())
}

fn checks_outcome(outputs: &[(&str, ExperimentOutput)]) -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for (label, out) in outputs {
        for c in &out.checks {
            ok &= c.passed;
            lines.push(format!("{label}/{}: {} ({})", c.name, if c.passed { "ok" } else { "FAILED" }, c.detail));
        }
    }
    let text = lines.join("; ");
    if ok {
        Ok(text)
    } else {
        Err(text)
    }
}

fn linear_mean_oracle() -> Outcome {
    let (a, c, s, m0, v0) = (-1.0, 0.5, 0.2, 1.0, 0.04);
    let (n, reps) = (2000, 32);
    let grid = TimeGrid::new(1.0, 1 << 10).unwrap();
    let kernel = catalog_kernel(
        "linear",
        &[("a", a), ("c", c), ("s", s)].iter().map(|(k, v)| (k.to_string(), vec![*v])).collect(),
        1,
    )
    .unwrap();
    let law = InitialLaw::gaussian(vec![m0], vec![v0]).unwrap();
    let mut means = Vec::new();
    let mut vars = Vec::new();
    for r in 0..reps {
        let init = sample_initial(mix_seed(11, r), &law, n).unwrap();
        let bundle = generate_bundle(mix_seed(12, r), n, 1, grid).unwrap();
        let t = euler_interacting(&kernel, &init, &bundle, &grid).map_err(|e| e.to_string())?;
        let cloud = t.terminal().states();
        let m = cloud.mean()[0];
        means.push(m);
        // unbiased within-cloud variance
        vars.push((cloud.moment(2.0) - m * m) * n as f64 / (n - 1) as f64);
    }
    let (mean_t, var_t) = linear_moments(a, c, s, m0, v0, 1.0);
    let em = MeanEstimate::from_samples(&means);
    let ev = MeanEstimate::from_samples(&vars);
    let mean_ok = (em.mean - mean_t).abs() <= 3.0 * em.stderr;
    let var_ok = (ev.mean - var_t).abs() <= 3.0 * ev.stderr;
    let text = format!(
        "mean {:.6} +/- {:.1e} vs {mean_t:.6}; variance {:.6} +/- {:.1e} vs {var_t:.6}",
        em.mean, em.stderr, ev.mean, ev.stderr
    );
    if mean_ok && var_ok {
        Ok(text)
    } else {
        Err(text)
    }
}

fn chaos() -> Outcome {
    let config = load("chaos_linear");
    let out = run_config(&config)?;
    checks_outcome(&[("linear", out)])
}

fn euler_rate() -> Outcome {
    let lin = run_config(&load("euler_rate_linear"))?;
    let log = run_config(&load("euler_rate_loglip"))?;
    checks_outcome(&[("linear", lin), ("loglip", log)])
}

fn moments() -> Outcome {
    let lin = run_config(&load("moments_linear"))?;
    let log = run_config(&load("moments_loglip"))?;
    checks_outcome(&[("linear", lin), ("loglip", log)])
}

fn increments() -> Outcome {
    let out = run_config(&load("increments_kuramoto"))?;
    checks_outcome(&[("kuramoto", out)])
}

fn centered() -> Outcome {
    let lin = run_config(&load("centered_linear"))?;
    let mut kur = load("centered_linear");
    kur.kernel = mvsde_cli::config::NamedSpec::new("kuramoto", &[("kappa", 1.0), ("s", 0.5)]);
    kur.initial_law = mvsde_cli::config::NamedSpec::new(
        "uniform_box",
        &[("lo", -std::f64::consts::PI), ("hi", std::f64::consts::PI)],
    );
    let kur = run_config(&kur)?;
    checks_outcome(&[("linear", lin), ("kuramoto", kur)])
}

fn picard_all() -> Outcome {
    let grid = TimeGrid::new(1.0, 1 << 9).unwrap();
    let law = InitialLaw::gaussian(vec![0.0], vec![1.0]).unwrap();
    let mut lines = Vec::new();
    let mut ok = true;
    for name in CATALOG {
        let kernel = catalog_kernel(name, &Default::default(), 1).unwrap();
        let t0 = Instant::now();
        match picard_solve(&kernel, &law, &grid, 4000, 1e-6, 30, 0) {
            Ok((_, report)) => {
                let good = report.converged && report.is_monotone();
                ok &= good;
                lines.push(format!(
                    "{name}: {} iterations, gap {:.2e}, monotone {} ({:.0} s)",
                    report.iterations,
                    report.terminal_gap(),
                    report.is_monotone(),
                    t0.elapsed().as_secs_f64()
                ));
            }
            Err(e) => {
                ok = false;
                lines.push(format!("{name}: {e}"));
            }
        }
    }
    let text = lines.join("; ");
    if ok {
        Ok(text)
    } else {
        Err(text)
    }
}

fn rk4_comparison(g0: f64, q: f64, eta: f64, steps: usize) -> Vec<(f64, f64)> {
    let rho = RhoEta::new(eta).unwrap();
    let dq = q / steps as f64;
    let mut g = g0;
    let mut out = vec![(0.0, g0)];
    for k in 0..steps {
        let k1 = rho.value(g);
        let k2 = rho.value(g + 0.5 * dq * k1);
        let k3 = rho.value(g + 0.5 * dq * k2);
        let k4 = rho.value(g + dq * k3);
        g += dq / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        out.push(((k + 1) as f64 * dq, g));
    }
    out
}

fn analytic_units() -> Outcome {
    let mut failures = Vec::new();
    for eta in [DEFAULT_ETA, 0.05, 0.3] {
        let rho = RhoEta::new(eta).unwrap();
        let jump = (rho.value(eta * (1.0 + 1e-15)) - rho.value(eta * (1.0 - 1e-15))).abs();
        if jump > 1e-12 {
            failures.push(format!("rho jump {jump:e} at eta {eta}"));
        }
        let grid = log_grid(1e-12, 1e3, 20000);
        if grid.windows(2).any(|w| rho.value(w[0]) >= rho.value(w[1])) {
            failures.push(format!("rho not strictly increasing for eta {eta}"));
        }
        let r = CounterRng::new(eta.to_bits());
        for i in 0..20000u32 {
            let (u, v) = r.uniforms(Domain::Validation, i, 0, 0);
            let (x, y) = (10f64.powf(-9.0 + 12.0 * u), 10f64.powf(-9.0 + 12.0 * v));
            let mid = rho.value(0.5 * (x + y));
            if mid < 0.5 * (rho.value(x) + rho.value(y)) - 1e-15 * mid.abs().max(1.0) {
                failures.push(format!("midpoint concavity fails at ({x:e}, {y:e})"));
                break;
            }
        }
        for g0 in [1e-6, 1e-3, 0.5 * eta] {
            let q = 3.0;
            for (qk, g) in rk4_comparison(g0, q, eta, 30000).into_iter().step_by(100) {
                let b = bihari_bound(g0, qk, eta).unwrap();
                if b < g - 1e-6 {
                    failures.push(format!("bihari {b} below ODE {g} at g0 {g0}, Q {qk}, eta {eta}"));
                    break;
                }
            }
        }
    }
    let grid = log_grid(1e-9, 10.0, 2000);
    for name in CATALOG {
        let k = catalog_kernel(name, &Default::default(), 1).unwrap();
        for (label, gamma) in [("gamma1", &k.gamma1), ("gamma2", &k.gamma2)] {
            let d = check_modulus_domination(gamma, DEFAULT_ETA, &grid).unwrap();
            if !d.passed {
                failures.push(format!("{name} {label} domination fails (eta {:e})", d.eta));
            }
        }
    }
    let r = CounterRng::new(99);
    let mut cases = 0;
    for n in 1..=6usize {
        for trial in 0..20u32 {
            let pts = |which: u32| -> Vec<f64> {
                (0..n as u32).map(|i| r.normal(Domain::Validation, trial, i, which as u16)).collect()
            };
            let mu = EmpiricalMeasure::from_scalars(&pts(1)).unwrap();
            let nu = EmpiricalMeasure::from_scalars(&pts(2)).unwrap();
            for p in [1.0, 2.0] {
                let a = wasserstein_1d(&mu, &nu, p).unwrap();
                let b = wasserstein_brute_force(&mu, &nu, p).unwrap();
                let c = wasserstein_assignment(&mu, &nu, p).unwrap().cost;
                if (a - b).abs() > 1e-12 || (a - c).abs() > 1e-12 {
                    failures.push(format!("W{p} mismatch n={n}: sorted {a}, brute {b}, assignment {c}"));
                }
                cases += 1;
            }
        }
    }
    if failures.is_empty() {
        Ok(format!("rho, bihari, domination over {} catalog kernels, {cases} Wasserstein cases", CATALOG.len()))
    } else {
        Err(failures.join("; "))
    }
}

fn result_csvs(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                if p.file_name().is_some_and(|n| n != "cache") {
                    stack.push(p);
                }
            } else if p.extension().is_some_and(|e| e == "csv") && p.file_name().is_some_and(|n| n != "timings.csv") {
                files.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    files.sort();
    files
}

fn determinism() -> Outcome {
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut compared = 0;
    for name in REPRODUCE {
        let mut config = load(name);
        config.seed = 42;
        let experiment = config.experiment.unwrap();
        let mut outs = Vec::new();
        for threads in [1, 3] {
            let dir = root.path().join(format!("{name}_t{threads}"));
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| e.to_string())?;
            pool.install(|| run_to_dir(experiment, &config, Some(&dir), false)).map_err(|e| e.to_string())?;
            outs.push(result_csvs(&dir));
        }
        if outs[0].is_empty() || outs[0] != outs[1] {
            return Err(format!("{name}: result CSVs differ between 1 and 3 threads"));
        }
        compared += outs[0].len();
    }
    Ok(format!("{compared} reproduce-suite CSV files byte-identical across 1 and 3 threads"))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("1 linear exact-mean oracle", linear_mean_oracle),
        ("2 propagation of chaos", chaos),
        ("3 Euler rate envelope", euler_rate),
        ("4 uniform moment bounds", moments),
        ("5 increment regularity", increments),
        ("6 centered-kernel orthogonality and variance", centered),
        ("7 Picard convergence", picard_all),
        ("8 analytic-unit properties", analytic_units),
        ("9 determinism across thread counts", determinism),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let t0 = Instant::now();
        let outcome = f();
        let secs = t0.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS [{secs:6.1} s] criterion {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL [{secs:6.1} s] criterion {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
