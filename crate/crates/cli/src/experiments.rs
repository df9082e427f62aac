//! The named experiments: each runs replications of one study and collects
//! tables, fitted rates and pass/fail checks.

use std::path::PathBuf;
use std::time::Instant;

use mvsde_core::analysis::{
    alpha_envelope_check, check_modulus_domination, envelope_margin, fit_rate, log_grid, RateFit, DEFAULT_ETA,
};
use mvsde_core::kernels::{validate_conditions, KernelPair};
use mvsde_core::numeric::{compensated_mean, NeumaierSum};
use mvsde_core::paths::{generate_bundle, sample_initial, BrownianBundle, InitialLaw, InitialSample, TimeGrid};
use mvsde_core::picard::{linear_moments, picard_solve, LawFlow, LawFlowCache};
use mvsde_core::rng::mix_seed;
use mvsde_core::simulator::{
    centered_kernel_stats, coupled_chaos_error, euler_interacting, euler_limit_particles, reference_interacting,
    sup_sq_gap, CenteredReport, CenteredSample, Trajectory,
};
use mvsde_core::{Error, Result};
use rayon::prelude::*;
use serde_json::{json, Map, Value};

use crate::config::{Experiment, ExperimentConfig, LawSource};
use crate::output::{Check, ExperimentOutput, ResultRow, Table};

/// Acceptance bands and constants applied by `--check`.
pub const CHAOS_SLOPE_BAND: (f64, f64) = (-1.35, -0.65);
pub const CHAOS_SCALED_RATIO: f64 = 4.0;
pub const EULER_ALPHA: f64 = 0.4;
pub const EULER_LIPSCHITZ_SLOPE_BAND: (f64, f64) = (0.8, 1.2);
pub const MOMENT_SLOPE_TOL: f64 = 0.1;
pub const MOMENT_RATIO: f64 = 3.0;
pub const INCREMENT_SLOPE_BAND: (f64, f64) = (0.9, 1.1);

const STREAM_INIT: u64 = 1;
const STREAM_BUNDLE: u64 = 2;
const STREAM_PICARD: u64 = 3;
const STREAM_VALIDATE: u64 = 4;

/// Settings that do not change results.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub dump_paths: bool,
    /// Law-flow cache; `None` disables caching.
    pub cache_dir: Option<PathBuf>,
}

/// Seed of one replication's initial sample or bundle. Shared across the
/// parameter ladder, so nested `N` reuse the same leading particles.
pub fn replication_seed(seed: u64, replication: usize, stream: u64) -> u64 {
    mix_seed(mix_seed(seed, replication as u64), stream)
}

struct Replication {
    init: InitialSample,
    bundle: BrownianBundle,
}

fn replication(config: &ExperimentConfig, law: &InitialLaw, r: usize, n: usize, grid: TimeGrid) -> Result<Replication> {
    let init = sample_initial(replication_seed(config.seed, r, STREAM_INIT), law, n)?;
    let bundle = generate_bundle(replication_seed(config.seed, r, STREAM_BUNDLE), n, config.dim, grid)?;
    Ok(Replication { init, bundle })
}

fn par_reps<T: Send>(r: usize, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    (0..r).into_par_iter().map(f).collect()
}

pub fn run(experiment: Experiment, config: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentOutput> {
    config.validate(experiment)?;
    match experiment {
        Experiment::Chaos => run_chaos(config, opts),
        Experiment::EulerRate => run_euler_rate(config, opts),
        Experiment::Picard => run_picard(config, opts),
        Experiment::Moments => run_moments(config, opts),
        Experiment::Increments => run_increments(config, opts),
        Experiment::CenteredStats => run_centered_stats(config, opts),
        Experiment::ValidateKernel => run_validate_kernel(config, opts),
    }
}

fn fmt_param_h(h: f64) -> String {
    crate::output::fmt_float(h)
}

fn fit_json(fit: &RateFit) -> Value {
    json!({ "slope": fit.slope, "intercept": fit.intercept, "r_squared": fit.r_squared, "residuals": fit.residuals })
}

/// Fit over the positive entries, or a reason why none is possible.
fn try_fit(xs: &[f64], ys: &[f64]) -> std::result::Result<RateFit, &'static str> {
    let pts: Vec<(f64, f64)> = xs.iter().copied().zip(ys.iter().copied()).filter(|p| p.1 > 0.0).collect();
    if ys.iter().all(|&y| y == 0.0) {
        return Err("degenerate: all estimates are zero");
    }
    if pts.len() < 3 {
        return Err("fewer than 3 positive points");
    }
    let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    fit_rate(&x, &y).map_err(|_| "fit failed")
}

fn max_min_ratio(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

fn linear_params(kernel: &KernelPair) -> Option<(f64, f64, f64)> {
    if kernel.name() != "linear" || kernel.dim() != 1 {
        return None;
    }
    let get = |k: &str| kernel.params().iter().find(|(n, _)| n == k).map(|(_, v)| *v);
    Some((get("a")?, get("c")?, get("s")?))
}

fn scalar_start(law: &InitialLaw) -> Option<(f64, f64)> {
    match law {
        InitialLaw::Gaussian { mean, cov } if mean.len() == 1 => Some((mean[0], cov[0])),
        InitialLaw::PointMass { point } if point.len() == 1 => Some((point[0], 0.0)),
        _ => None,
    }
}

/// The law flow on `grid` for limit-particle experiments.
fn law_flow(
    config: &ExperimentConfig,
    kernel: &KernelPair,
    law: &InitialLaw,
    grid: TimeGrid,
    opts: &RunOptions,
    summary: &mut Map<String, Value>,
) -> Result<(LawFlow, LawSource)> {
    let analytic = linear_params(kernel).zip(scalar_start(law));
    let source = config.law_source.unwrap_or(if analytic.is_some() { LawSource::Analytic } else { LawSource::Picard });
    match source {
        LawSource::Analytic => {
            let ((a, c, s), (m0, v0)) = analytic.ok_or_else(|| {
                Error::Config(
                    "law_source = \"analytic\" needs the scalar linear kernel and a gaussian or point_mass start"
                        .into(),
                )
            })?;
            Ok((LawFlow::analytic_linear(a, c, s, m0, v0, grid, config.picard.m_law)?, source))
        }
        LawSource::Picard => {
            let p = &config.picard;
            let seed = mix_seed(config.seed, STREAM_PICARD);
            let (flow, report) = match &opts.cache_dir {
                Some(dir) => LawFlowCache::new(dir).solve(kernel, law, &grid, p.m_law, p.tol, p.max_iter, seed)?,
                None => {
                    let (f, r) = picard_solve(kernel, law, &grid, p.m_law, p.tol, p.max_iter, seed)?;
                    (f, Some(r))
                }
            };
            summary.insert(
                "picard".into(),
                match report {
                    Some(r) => json!({ "iterations": r.iterations, "gap_history": r.gap_history, "cached": false }),
                    None => json!({ "cached": true }),
                },
            );
            Ok((flow, source))
        }
    }
}

pub fn run_chaos(config: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentOutput> {
    let kernel = config.kernel()?;
    let law = config.initial_law()?;
    let grid = config.fine_grid()?;
    let mut out = ExperimentOutput::default();
    let (flow, source) = law_flow(config, &kernel, &law, grid, opts, &mut out.summary)?;
    out.summary.insert("law_source".into(), json!(source));

    let mut errors = Table::new("chaos");
    let mut scaled = Table::new("chaos_scaled");
    for &n in &config.n_list {
        let t0 = Instant::now();
        let per_rep = par_reps(config.replications, |r| {
            let rep = replication(config, &law, r, n, grid)?;
            let e = coupled_chaos_error(&kernel, &rep.init, &rep.bundle, &grid, &flow)?;
            let dump = (opts.dump_paths && r == 0).then(|| (e.interacting.clone(), e.limit.clone()));
            Ok((e.mean, dump))
        })?;
        let raw: Vec<f64> = per_rep.iter().map(|p| p.0).collect();
        if let Some((a, b)) = per_rep.into_iter().next().and_then(|p| p.1) {
            out.paths.push((format!("chaos_N{n}_interacting"), a));
            out.paths.push((format!("chaos_N{n}_limit"), b));
        }
        scaled.rows.push(ResultRow::from_raw(n.to_string(), raw.iter().map(|e| e * n as f64).collect()));
        errors.rows.push(ResultRow::from_raw(n.to_string(), raw));
        out.timings.push((format!("N={n}"), t0.elapsed().as_secs_f64()));
    }

    let ns: Vec<f64> = config.n_list.iter().map(|&n| n as f64).collect();
    let ratio = max_min_ratio(&scaled.estimates());
    out.summary.insert("n_error_max_over_min".into(), json!(finite_or_null(ratio)));
    if config.n_list.len() == 1 {
        out.summary.insert("estimate".into(), json!(errors.rows[0].estimate));
    } else {
        match try_fit(&ns, &errors.estimates()) {
            Ok(fit) => {
                let (lo, hi) = CHAOS_SLOPE_BAND;
                out.checks.push(Check::new(
                    "chaos_slope",
                    (lo..=hi).contains(&fit.slope),
                    format!("slope {:.4} in [{lo}, {hi}]", fit.slope),
                ));
                out.checks.push(Check::new(
                    "chaos_scaled_ratio",
                    ratio <= CHAOS_SCALED_RATIO,
                    format!("max/min of N*error {ratio:.3} <= {CHAOS_SCALED_RATIO}"),
                ));
                out.summary.insert("fit".into(), fit_json(&fit));
            }
            Err(reason) => {
                out.summary.insert("fit".into(), Value::Null);
                out.summary.insert("degenerate".into(), json!(reason));
            }
        }
    }
    out.tables.push(errors);
    out.tables.push(scaled);
    Ok(out)
}

fn finite_or_null(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

pub fn run_euler_rate(config: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentOutput> {
    let kernel = config.kernel()?;
    let law = config.initial_law()?;
    let fine = config.fine_grid()?;
    let grids = config.coarse_grids()?;
    let mut out = ExperimentOutput::default();
    let mut results = Map::new();
    for &n in &config.n_list {
        let t0 = Instant::now();
        let per_rep = par_reps(config.replications, |r| {
            let rep = replication(config, &law, r, n, fine)?;
            let reference = reference_interacting(&kernel, &rep.init, &rep.bundle, &fine)?;
            let errs = grids
                .iter()
                .map(|g| {
                    let coarse = euler_interacting(&kernel, &rep.init, &rep.bundle, g)?;
                    Ok(compensated_mean(&sup_sq_gap(&coarse, &reference)?))
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok((errs, (opts.dump_paths && r == 0).then_some(reference)))
        })?;
        let mut table = Table::new(format!("euler_rate_N{n}"));
        for (j, &h) in config.h_list.iter().enumerate() {
            table.rows.push(ResultRow::from_raw(fmt_param_h(h), per_rep.iter().map(|p| p.0[j]).collect()));
        }
        if let Some(t) = per_rep.into_iter().next().and_then(|p| p.1) {
            out.paths.push((format!("euler_rate_N{n}_reference"), t));
        }
        out.timings.push((format!("N={n}"), t0.elapsed().as_secs_f64()));

        let pts: Vec<(f64, f64)> = config.h_list.iter().copied().zip(table.estimates()).collect();
        let envelope = alpha_envelope_check(&pts, EULER_ALPHA);
        let margin = envelope_margin(&pts, EULER_ALPHA);
        out.checks.push(Check::new(
            format!("euler_envelope_N{n}"),
            envelope,
            match margin {
                Some(m) => {
                    format!("err(h) <= C h^{} with C fixed at the coarsest h (max ratio {m:.4})", 2.0 * EULER_ALPHA)
                }
                None => "no positive errors".to_string(),
            },
        ));
        let mut entry =
            json!({ "envelope_alpha": EULER_ALPHA, "envelope_passed": envelope, "envelope_margin": margin });
        match try_fit(&config.h_list, &table.estimates()) {
            Ok(fit) => {
                if kernel.name() == "linear" {
                    let (lo, hi) = EULER_LIPSCHITZ_SLOPE_BAND;
                    out.checks.push(Check::new(
                        format!("euler_slope_N{n}"),
                        (lo..=hi).contains(&fit.slope),
                        format!("slope {:.4} in [{lo}, {hi}]", fit.slope),
                    ));
                }
                entry["fit"] = fit_json(&fit);
            }
            Err(reason) => entry["fit"] = json!(reason),
        }
        results.insert(format!("N={n}"), entry);
        out.tables.push(table);
    }
    out.summary.insert("by_n".into(), Value::Object(results));
    Ok(out)
}

pub fn run_moments(config: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentOutput> {
    let kernel = config.kernel()?;
    let law = config.initial_law()?;
    let fine = config.fine_grid()?;
    let grids = config.coarse_grids()?;
    let mut out = ExperimentOutput::default();
    let mut reference = Table::new("moments_reference");
    let mut euler: Vec<Table> =
        config.h_list.iter().enumerate().map(|(j, _)| Table::new(format!("moments_h{j}"))).collect();
    for &n in &config.n_list {
        let t0 = Instant::now();
        let per_rep = par_reps(config.replications, |r| {
            let rep = replication(config, &law, r, n, fine)?;
            let fine_t = reference_interacting(&kernel, &rep.init, &rep.bundle, &fine)?;
            let coarse = grids
                .iter()
                .map(|g| Ok(euler_interacting(&kernel, &rep.init, &rep.bundle, g)?.mean_sup_sq()))
                .collect::<Result<Vec<f64>>>()?;
            let value = fine_t.mean_sup_sq();
            Ok((value, coarse, (opts.dump_paths && r == 0).then_some(fine_t)))
        })?;
        reference.rows.push(ResultRow::from_raw(n.to_string(), per_rep.iter().map(|p| p.0).collect()));
        for (j, t) in euler.iter_mut().enumerate() {
            t.rows.push(ResultRow::from_raw(n.to_string(), per_rep.iter().map(|p| p.1[j]).collect()));
        }
        if let Some(t) = per_rep.into_iter().next().and_then(|p| p.2) {
            out.paths.push((format!("moments_N{n}_reference"), t));
        }
        out.timings.push((format!("N={n}"), t0.elapsed().as_secs_f64()));
    }
    let ns: Vec<f64> = config.n_list.iter().map(|&n| n as f64).collect();
    let mut fits = Map::new();
    let mut steps = vec![("moments_reference".to_string(), config.h_fine)];
    steps.extend(config.h_list.iter().enumerate().map(|(j, &h)| (format!("moments_h{j}"), h)));
    for (table, (name, h)) in std::iter::once(&reference).chain(euler.iter()).zip(steps) {
        let ratio = max_min_ratio(&table.estimates());
        let mut entry = json!({ "h": h, "max_over_min": finite_or_null(ratio) });
        if let Ok(fit) = try_fit(&ns, &table.estimates()) {
            out.checks.push(Check::new(
                format!("{name}_slope"),
                fit.slope.abs() <= MOMENT_SLOPE_TOL,
                format!("h = {h}: slope {:.4} within {MOMENT_SLOPE_TOL} of 0", fit.slope),
            ));
            entry["fit"] = fit_json(&fit);
        }
        out.checks.push(Check::new(
            format!("{name}_ratio"),
            ratio <= MOMENT_RATIO,
            format!("h = {h}: max/min {ratio:.4} <= {MOMENT_RATIO}"),
        ));
        fits.insert(name, entry);
    }
    out.summary.insert("tables".into(), Value::Object(fits));
    out.tables.push(reference);
    out.tables.extend(euler);
    Ok(out)
}

/// Mean over particles and over all windows `[t_j, t_{j+lag}]` of `|X_t - X_s|²`.
fn mean_increment(t: &Trajectory, lag: usize) -> f64 {
    let clouds = t.clouds();
    let mut acc = NeumaierSum::new();
    let mut count = 0usize;
    for j in 0..clouds.len() - lag {
        for (x, y) in clouds[j].states().iter().zip(clouds[j + lag].states().iter()) {
            acc.add(x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum());
            count += 1;
        }
    }
    acc.value() / count as f64
}

pub fn run_increments(config: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentOutput> {
    let kernel = config.kernel()?;
    let law = config.initial_law()?;
    let fine = config.fine_grid()?;
    let strides = config.lag_strides()?;
    let mut out = ExperimentOutput::default();
    for &n in &config.n_list {
        let t0 = Instant::now();
        let per_rep = par_reps(config.replications, |r| {
            let rep = replication(config, &law, r, n, fine)?;
            let t = euler_interacting(&kernel, &rep.init, &rep.bundle, &fine)?;
            let v: Vec<f64> = strides.iter().map(|&s| mean_increment(&t, s)).collect();
            Ok((v, (opts.dump_paths && r == 0).then_some(t)))
        })?;
        let mut table = Table::new(format!("increments_N{n}"));
        for (j, &h) in config.h_list.iter().enumerate() {
            table.rows.push(ResultRow::from_raw(fmt_param_h(h), per_rep.iter().map(|p| p.0[j]).collect()));
        }
        if let Some(t) = per_rep.into_iter().next().and_then(|p| p.1) {
            out.paths.push((format!("increments_N{n}"), t));
        }
        out.timings.push((format!("N={n}"), t0.elapsed().as_secs_f64()));
        let lo = config.h_list.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = config.h_list.iter().copied().fold(0.0, f64::max);
        let decades = (hi / lo).log10();
        let mut entry = json!({ "decades": decades, "constant_diffusion": kernel.has_constant_diffusion() });
        if let Ok(fit) = try_fit(&config.h_list, &table.estimates()) {
            if kernel.has_constant_diffusion() {
                let (a, b) = INCREMENT_SLOPE_BAND;
                out.checks.push(Check::new(
                    format!("increments_slope_N{n}"),
                    (a..=b).contains(&fit.slope) && decades >= 2.0 - 1e-9,
                    format!("slope {:.4} in [{a}, {b}] over {decades:.2} decades of lags", fit.slope),
                ));
            }
            entry["fit"] = fit_json(&fit);
        }
        out.summary.insert(format!("N={n}"), entry);
        out.tables.push(table);
    }
    Ok(out)
}

pub fn run_centered_stats(config: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentOutput> {
    let kernel = config.kernel()?;
    let law = config.initial_law()?;
    let grid = config.fine_grid()?;
    let mut out = ExperimentOutput::default();
    let (flow, source) = law_flow(config, &kernel, &law, grid, opts, &mut out.summary)?;
    out.summary.insert("law_source".into(), json!(source));
    // variance of the law at the terminal time
    let terminal_var = match (linear_params(&kernel), scalar_start(&law), source) {
        (Some((a, c, s)), Some((m0, v0)), LawSource::Analytic) => linear_moments(a, c, s, m0, v0, config.horizon).1,
        _ => {
            let mu = flow.measure(grid.steps());
            mu.moment(2.0) - mu.mean().iter().map(|m| m * m).sum::<f64>()
        }
    };
    for &n in &config.n_list {
        let t0 = Instant::now();
        let samples: Vec<(CenteredSample, Option<Trajectory>)> = par_reps(config.replications, |r| {
            let rep = replication(config, &law, r, n, grid)?;
            let t = euler_limit_particles(&kernel, &rep.init, &rep.bundle, &grid, &flow)?;
            Ok((centered_kernel_stats(&kernel, &t, &flow)?, (opts.dump_paths && r == 0).then_some(t)))
        })?;
        let stats: Vec<CenteredSample> = samples.iter().map(|s| s.0).collect();
        if let Some(t) = samples.into_iter().next().and_then(|s| s.1) {
            out.paths.push((format!("centered_N{n}_limit"), t));
        }
        let report = CenteredReport::from_samples(&stats)?;
        let mut table = Table::new(format!("centered_N{n}"));
        let col = |f: fn(&CenteredSample) -> f64| stats.iter().map(f).collect::<Vec<f64>>();
        table.rows.push(ResultRow::from_raw("drift_cross", col(|s| s.drift_cross)));
        table.rows.push(ResultRow::from_raw("drift_avg_sq", col(|s| s.drift_avg_sq)));
        table.rows.push(ResultRow::from_raw("diffusion_cross", col(|s| s.diffusion_cross)));
        table.rows.push(ResultRow::from_raw("diffusion_avg_sq", col(|s| s.diffusion_avg_sq)));
        out.timings.push((format!("N={n}"), t0.elapsed().as_secs_f64()));

        let band = report.correlation_band;
        out.checks.push(Check::new(
            format!("centered_drift_correlation_N{n}"),
            report.drift_correlation.abs() <= band,
            format!("corr {:.4}, |corr| <= 4/sqrt(R) = {band:.4}", report.drift_correlation),
        ));
        out.checks.push(Check::new(
            format!("centered_diffusion_correlation_N{n}"),
            report.diffusion_correlation.abs() <= band,
            format!("corr {:.4}, |corr| <= {band:.4}", report.diffusion_correlation),
        ));
        let mut entry = json!({
            "drift_correlation": report.drift_correlation,
            "diffusion_correlation": report.diffusion_correlation,
            "correlation_band": band,
            "drift_variance": report.drift_variance.mean,
            "drift_variance_stderr": report.drift_variance.stderr,
            "terminal_law_variance": terminal_var,
        });
        if let Some((_, c, _)) = linear_params(&kernel) {
            let target = c * c * terminal_var / n as f64;
            let est = report.drift_variance;
            out.checks.push(Check::new(
                format!("centered_linear_variance_N{n}"),
                (est.mean - target).abs() <= 3.0 * est.stderr,
                format!("E|avg b~|^2 = {:.6e} +/- {:.2e} vs c^2 Var/N = {target:.6e}", est.mean, est.stderr),
            ));
            entry["linear_target"] = json!(target);
        }
        out.summary.insert(format!("N={n}"), entry);
        out.tables.push(table);
    }
    Ok(out)
}

pub fn run_picard(config: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentOutput> {
    let kernel = config.kernel()?;
    let law = config.initial_law()?;
    let grid = config.fine_grid()?;
    let p = &config.picard;
    let t0 = Instant::now();
    let seed = mix_seed(config.seed, STREAM_PICARD);
    let (flow, report) = picard_solve(&kernel, &law, &grid, p.m_law, p.tol, p.max_iter, seed)?;
    if let Some(dir) = &opts.cache_dir {
        let text = mvsde_core::picard::cache_key_text(&kernel, &law, &grid, p.m_law, seed, p.tol);
        LawFlowCache::new(dir).store(&text, &flow)?;
    }
    let mut out = ExperimentOutput::default();
    out.timings.push(("solve".into(), t0.elapsed().as_secs_f64()));
    let mut gaps = Table::new("picard_gap");
    for (j, g) in report.gap_history.iter().enumerate() {
        gaps.rows.push(ResultRow::from_raw((j + 2).to_string(), vec![*g]));
    }
    let mut moments = Table::new("picard_moments");
    for (k, m) in flow.second_moments().iter().enumerate() {
        moments.rows.push(ResultRow::from_raw(k.to_string(), vec![*m]));
    }
    out.checks.push(Check::new(
        "picard_converged",
        report.converged,
        format!("{} iterations, terminal gap {:e} <= {:e}", report.iterations, report.terminal_gap(), p.tol),
    ));
    out.checks.push(Check::new("picard_monotone", report.is_monotone(), "gap_{k+1} <= gap_k for k >= 2"));
    out.summary.insert(
        "report".into(),
        json!({
            "iterations": report.iterations,
            "gap_history": report.gap_history,
            "contraction_ratio": report.contraction_ratio,
            "converged": report.converged,
            "tol": report.tol,
        }),
    );
    out.tables.push(gaps);
    out.tables.push(moments);
    Ok(out)
}

pub fn run_validate_kernel(config: &ExperimentConfig, _opts: &RunOptions) -> Result<ExperimentOutput> {
    let kernel = config.kernel()?;
    let law = config.initial_law()?;
    let t0 = Instant::now();
    let report = validate_conditions(&kernel, &law, config.samples, mix_seed(config.seed, STREAM_VALIDATE))?;
    let grid = log_grid(1e-9, 10.0, 2000);
    let dom1 = check_modulus_domination(&kernel.gamma1, DEFAULT_ETA, &grid)?;
    let dom2 = check_modulus_domination(&kernel.gamma2, DEFAULT_ETA, &grid)?;
    let mut out = ExperimentOutput::default();
    out.timings.push(("validate".into(), t0.elapsed().as_secs_f64()));
    let mut table = Table::new("validation");
    table.rows.push(ResultRow::from_raw("growth_ratio", vec![report.growth_ratio]));
    table.rows.push(ResultRow::from_raw("drift_modulus_ratio", vec![report.drift_modulus_ratio]));
    table.rows.push(ResultRow::from_raw("diffusion_modulus_ratio", vec![report.diffusion_modulus_ratio]));
    table.rows.push(ResultRow::from_raw("eta_gamma1", vec![dom1.eta]));
    table.rows.push(ResultRow::from_raw("eta_gamma2", vec![dom2.eta]));
    let tol = report.tolerance;
    out.checks.push(Check::new(
        "growth",
        report.growth_ok(),
        format!("max ratio {:.6} <= 1 + {tol:e}", report.growth_ratio),
    ));
    out.checks.push(Check::new(
        "drift_modulus",
        report.drift_modulus_ok(),
        format!("max ratio {:.6} <= 1 + {tol:e}", report.drift_modulus_ratio),
    ));
    out.checks.push(Check::new(
        "diffusion_modulus",
        report.diffusion_modulus_ok(),
        format!("max ratio {:.6} <= 1 + {tol:e}", report.diffusion_modulus_ratio),
    ));
    for (name, d) in [("gamma1_domination", &dom1), ("gamma2_domination", &dom2)] {
        out.checks.push(Check::new(name, d.passed, format!("eta {:.6e}, violation {:?}", d.eta, d.violation)));
    }
    out.summary.insert("kernel".into(), json!(kernel.describe()));
    out.summary.insert("samples".into(), json!(report.samples));
    out.tables.push(table);
    Ok(out)
}
