//! Euler schemes for the interacting particle system and for independent
//! particles driven by a prescribed law flow, under shared initial samples
//! and Brownian increments.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::{Evaluation, KernelPair, MeanField};
use crate::measure::EmpiricalMeasure;
use crate::numeric::{MeanEstimate, NeumaierSum};
use crate::paths::{BrownianBundle, InitialSample, TimeGrid};
use crate::picard::LawFlow;

/// Particle states at one grid time.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleCloud {
    pub time: f64,
    states: EmpiricalMeasure,
}

impl ParticleCloud {
    pub fn states(&self) -> &EmpiricalMeasure {
        &self.states
    }

    pub fn into_measure(self) -> EmpiricalMeasure {
        self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Clouds at every grid time plus running suprema of `|X_t^i|²`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    grid: TimeGrid,
    clouds: Vec<ParticleCloud>,
    sup_sq: Vec<f64>,
    sup_sq_mean: Vec<f64>,
}

impl Trajectory {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn clouds(&self) -> &[ParticleCloud] {
        &self.clouds
    }

    pub fn cloud(&self, k: usize) -> &ParticleCloud {
        &self.clouds[k]
    }

    pub fn terminal(&self) -> &ParticleCloud {
        self.clouds.last().expect("trajectory has at least the initial cloud")
    }

    pub fn n_particles(&self) -> usize {
        self.clouds[0].len()
    }

    pub fn dim(&self) -> usize {
        self.clouds[0].states.dim()
    }

    /// `max_k |X_{t_k}^i|²` per particle.
    pub fn sup_sq(&self) -> &[f64] {
        &self.sup_sq
    }

    /// Mean over particles of the running supremum `max_{j<=k} |X_{t_j}^i|²`.
    pub fn sup_sq_history(&self) -> &[f64] {
        &self.sup_sq_mean
    }

    /// `(1/N) Σ_i max_k |X_{t_k}^i|²`.
    pub fn mean_sup_sq(&self) -> f64 {
        *self.sup_sq_mean.last().expect("nonempty")
    }

    /// The path of one particle.
    pub fn path(&self, particle: usize) -> Vec<Vec<f64>> {
        self.clouds.iter().map(|c| c.states.point(particle).to_vec()).collect()
    }
}

/// Simulation switches that do not change the scheme.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SimOptions {
    pub evaluation: Evaluation,
}

enum Driver<'a> {
    Interacting,
    Law { flow: &'a LawFlow, index: Vec<usize> },
}

fn check_inputs(
    kernel: &KernelPair,
    init: &InitialSample,
    bundle: &BrownianBundle,
    grid: &TimeGrid,
) -> Result<BrownianBundle> {
    let d = kernel.dim();
    if init.dim() != d {
        return Err(Error::Dimension { expected: d, got: init.dim() });
    }
    if bundle.dim() != d {
        return Err(Error::Dimension { expected: d, got: bundle.dim() });
    }
    if bundle.n_particles() != init.len() {
        return Err(Error::arg(format!(
            "bundle carries {} particles but the initial sample has {}",
            bundle.n_particles(),
            init.len()
        )));
    }
    bundle.restrict(grid)
}

fn evolve(
    kernel: &KernelPair,
    init: &InitialSample,
    bundle: &BrownianBundle,
    grid: &TimeGrid,
    driver: Driver<'_>,
    opts: SimOptions,
) -> Result<Trajectory> {
    let bundle = check_inputs(kernel, init, bundle, grid)?;
    let d = kernel.dim();
    let n = init.len();
    let h = grid.step();
    let mut clouds = Vec::with_capacity(grid.steps() + 1);
    let mut current = init.points.clone();
    let mut running: Vec<f64> = current.iter().map(crate::numeric::norm_sq).collect();
    let mut sup_sq_mean = vec![running.iter().copied().collect::<NeumaierSum>().value() / n as f64];
    clouds.push(ParticleCloud { time: 0.0, states: current.clone() });

    for k in 0..grid.steps() {
        let law_k = match &driver {
            Driver::Interacting => &current,
            Driver::Law { flow, index } => flow.measure(index[k]),
        };
        let field = MeanField::new(kernel, law_k, opts.evaluation)?;
        let mut next = vec![0.0; n * d];
        let states = current.as_flat();
        next.par_chunks_mut(d).enumerate().with_min_len(32).for_each_init(
            || (vec![0.0; d], vec![0.0; d * d], vec![0.0; d]),
            |(b, s, dw), (i, out)| {
                let x = &states[i * d..(i + 1) * d];
                field.evaluate(x, b, s);
                bundle.increment_into(i, k, dw);
                for r in 0..d {
                    let noise: f64 = (0..d).map(|c| s[r * d + c] * dw[c]).sum();
                    out[r] = x[r] + b[r] * h + noise;
                }
            },
        );
        if let Some(i) = next.chunks_exact(d).position(|x| x.iter().any(|v| !v.is_finite())) {
            return Err(Error::BlowUp { step: k + 1, time: grid.time(k + 1), particle: i });
        }
        current = EmpiricalMeasure::from_raw(d, next);
        for (r, x) in running.iter_mut().zip(current.iter()) {
            *r = r.max(crate::numeric::norm_sq(x));
        }
        sup_sq_mean.push(running.iter().copied().collect::<NeumaierSum>().value() / n as f64);
        clouds.push(ParticleCloud { time: grid.time(k + 1), states: current.clone() });
    }
    Ok(Trajectory { grid: *grid, clouds, sup_sq: running, sup_sq_mean })
}

/// Euler scheme for the `N`-particle system; every particle reads the
/// step-`k` cloud.
pub fn euler_interacting(
    kernel: &KernelPair,
    init: &InitialSample,
    bundle: &BrownianBundle,
    grid: &TimeGrid,
) -> Result<Trajectory> {
    euler_interacting_with(kernel, init, bundle, grid, SimOptions::default())
}

pub fn euler_interacting_with(
    kernel: &KernelPair,
    init: &InitialSample,
    bundle: &BrownianBundle,
    grid: &TimeGrid,
    opts: SimOptions,
) -> Result<Trajectory> {
    evolve(kernel, init, bundle, grid, Driver::Interacting, opts)
}

/// The interacting system on the finest grid, standing in for continuous time.
pub fn reference_interacting(
    kernel: &KernelPair,
    init: &InitialSample,
    bundle: &BrownianBundle,
    fine_grid: &TimeGrid,
) -> Result<Trajectory> {
    euler_interacting(kernel, init, bundle, fine_grid)
}

/// Euler scheme for independent particles whose coefficients are averaged
/// against `law` at each grid time.
pub fn euler_limit_particles(
    kernel: &KernelPair,
    init: &InitialSample,
    bundle: &BrownianBundle,
    grid: &TimeGrid,
    law: &LawFlow,
) -> Result<Trajectory> {
    euler_limit_particles_with(kernel, init, bundle, grid, law, SimOptions::default())
}

pub fn euler_limit_particles_with(
    kernel: &KernelPair,
    init: &InitialSample,
    bundle: &BrownianBundle,
    grid: &TimeGrid,
    law: &LawFlow,
    opts: SimOptions,
) -> Result<Trajectory> {
    if law.dim() != kernel.dim() {
        return Err(Error::Dimension { expected: kernel.dim(), got: law.dim() });
    }
    let index = law.index_map(grid).map_err(|e| Error::arg(format!("law flow does not cover the grid: {e}")))?;
    evolve(kernel, init, bundle, grid, Driver::Law { flow: law, index }, opts)
}

/// Per-particle `max_k |X_{t_k}^i - Y_{t_k}^i|²` over the times of the
/// coarser of the two nested grids.
pub fn sup_sq_gap(a: &Trajectory, b: &Trajectory) -> Result<Vec<f64>> {
    if a.n_particles() != b.n_particles() || a.dim() != b.dim() {
        return Err(Error::arg("trajectories differ in particle count or dimension"));
    }
    let (coarse, fine) = if a.grid.steps() <= b.grid.steps() { (a, b) } else { (b, a) };
    let stride = fine.grid.stride_to(&coarse.grid)?;
    let mut sup = vec![0.0f64; a.n_particles()];
    for (k, c) in coarse.clouds.iter().enumerate() {
        let f = &fine.clouds[k * stride];
        for ((s, x), y) in sup.iter_mut().zip(c.states.iter()).zip(f.states.iter()) {
            *s = s.max(crate::numeric::dist_sq(x, y));
        }
    }
    Ok(sup)
}

/// Result of [`coupled_chaos_error`].
#[derive(Debug, Clone)]
pub struct ChaosError {
    /// `max_k |X_{t_k}^{N,i} - X_{t_k}^i|²` per particle.
    pub per_particle: Vec<f64>,
    /// Mean of `per_particle`.
    pub mean: f64,
    pub interacting: Trajectory,
    pub limit: Trajectory,
}

/// Runs both systems on the same `(init, bundle)` and compares them pathwise.
pub fn coupled_chaos_error(
    kernel: &KernelPair,
    init: &InitialSample,
    bundle: &BrownianBundle,
    grid: &TimeGrid,
    law: &LawFlow,
) -> Result<ChaosError> {
    let interacting = euler_interacting(kernel, init, bundle, grid)?;
    let limit = euler_limit_particles(kernel, init, bundle, grid, law)?;
    let per_particle = sup_sq_gap(&interacting, &limit)?;
    let mean = per_particle.iter().copied().collect::<NeumaierSum>().value() / per_particle.len() as f64;
    Ok(ChaosError { per_particle, mean, interacting, limit })
}

/// Centered-kernel statistics from one limit-particle run at one time.
///
/// With `b̃(x, x') = b(x, x') - ∫ b(x, y) μ_t(dy)`: the products for the
/// disjoint triple `(i, j, k) = (0, 1, 2)`, and the particle average of
/// `|(1/N) Σ_j b̃(X^i, X^j)|²`. The same for `σ` with Frobenius products.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CenteredSample {
    pub n_particles: usize,
    pub drift_cross: f64,
    pub drift_sq_ij: f64,
    pub drift_sq_ik: f64,
    pub drift_avg_sq: f64,
    pub diffusion_cross: f64,
    pub diffusion_sq_ij: f64,
    pub diffusion_sq_ik: f64,
    pub diffusion_avg_sq: f64,
}

/// [`centered_kernel_stats_at`] at the terminal time.
pub fn centered_kernel_stats(kernel: &KernelPair, limit: &Trajectory, law: &LawFlow) -> Result<CenteredSample> {
    centered_kernel_stats_at(kernel, limit, law, limit.grid.steps())
}

pub fn centered_kernel_stats_at(
    kernel: &KernelPair,
    limit: &Trajectory,
    law: &LawFlow,
    step: usize,
) -> Result<CenteredSample> {
    let n = limit.n_particles();
    if n < 3 {
        return Err(Error::arg(format!("centered statistics need at least 3 particles, got {n}")));
    }
    if step > limit.grid.steps() {
        return Err(Error::arg(format!("step {step} beyond the trajectory")));
    }
    let index = law.index_map(&limit.grid)?;
    let cloud = &limit.clouds[step].states;
    let mu = law.measure(index[step]);
    let d = kernel.dim();
    let exact = MeanField::new(kernel, mu, Evaluation::Structured)?;
    let empirical = MeanField::new(kernel, cloud, Evaluation::Structured)?;

    let centered = |x: &[f64], y: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let mut b = vec![0.0; d];
        let mut s = vec![0.0; d * d];
        let mut bm = vec![0.0; d];
        let mut sm = vec![0.0; d * d];
        kernel.drift_into(x, y, &mut b);
        kernel.diffusion_into(x, y, &mut s);
        exact.evaluate(x, &mut bm, &mut sm);
        (b.iter().zip(&bm).map(|(u, v)| u - v).collect(), s.iter().zip(&sm).map(|(u, v)| u - v).collect())
    };
    let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    let (x0, x1, x2) = (cloud.point(0), cloud.point(1), cloud.point(2));
    let (bij, sij) = centered(x0, x1);
    let (bik, sik) = centered(x0, x2);

    let per: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .with_min_len(32)
        .map(|i| {
            let x = cloud.point(i);
            let (mut be, mut se) = (vec![0.0; d], vec![0.0; d * d]);
            let (mut bm, mut sm) = (vec![0.0; d], vec![0.0; d * d]);
            empirical.evaluate(x, &mut be, &mut se);
            exact.evaluate(x, &mut bm, &mut sm);
            let db: f64 = be.iter().zip(&bm).map(|(u, v)| (u - v) * (u - v)).sum();
            let ds: f64 = se.iter().zip(&sm).map(|(u, v)| (u - v) * (u - v)).sum();
            (db, ds)
        })
        .collect();
    let drift_avg_sq = per.iter().map(|p| p.0).collect::<NeumaierSum>().value() / n as f64;
    let diffusion_avg_sq = per.iter().map(|p| p.1).collect::<NeumaierSum>().value() / n as f64;
    Ok(CenteredSample {
        n_particles: n,
        drift_cross: dot(&bij, &bik),
        drift_sq_ij: dot(&bij, &bij),
        drift_sq_ik: dot(&bik, &bik),
        drift_avg_sq,
        diffusion_cross: dot(&sij, &sik),
        diffusion_sq_ij: dot(&sij, &sij),
        diffusion_sq_ik: dot(&sik, &sik),
        diffusion_avg_sq,
    })
}

/// Aggregate of [`CenteredSample`]s over independent replications.
#[derive(Debug, Clone, PartialEq)]
pub struct CenteredReport {
    pub replications: usize,
    /// Correlation of `b̃(X^i, X^j)` and `b̃(X^i, X^k)`; 0 when both vanish.
    pub drift_correlation: f64,
    pub diffusion_correlation: f64,
    /// Half-width `4/√R` of the band the correlations should fall in.
    pub correlation_band: f64,
    pub drift_variance: MeanEstimate,
    pub diffusion_variance: MeanEstimate,
}

fn correlation(cross: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let sum = |v: &[f64]| v.iter().copied().collect::<NeumaierSum>().value();
    let den = (sum(a) * sum(b)).sqrt();
    if den == 0.0 {
        0.0
    } else {
        sum(cross) / den
    }
}

impl CenteredReport {
    pub fn from_samples(samples: &[CenteredSample]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::arg("no centered samples"));
        }
        let col = |f: fn(&CenteredSample) -> f64| samples.iter().map(f).collect::<Vec<f64>>();
        Ok(Self {
            replications: samples.len(),
            drift_correlation: correlation(&col(|s| s.drift_cross), &col(|s| s.drift_sq_ij), &col(|s| s.drift_sq_ik)),
            diffusion_correlation: correlation(
                &col(|s| s.diffusion_cross),
                &col(|s| s.diffusion_sq_ij),
                &col(|s| s.diffusion_sq_ik),
            ),
            correlation_band: 4.0 / (samples.len() as f64).sqrt(),
            drift_variance: MeanEstimate::from_samples(&col(|s| s.drift_avg_sq)),
            diffusion_variance: MeanEstimate::from_samples(&col(|s| s.diffusion_avg_sq)),
        })
    }
}
