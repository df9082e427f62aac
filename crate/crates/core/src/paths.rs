//! Time grids, Brownian increment bundles and initial samples.
//!
//! Increments are drawn from a counter-based generator keyed by
//! `(seed, particle, fine step, coordinate)` and rounded to the dyadic
//! lattice `2^-40`. On that lattice every partial sum of increments is exact
//! in `f64` (as long as the accumulated magnitude stays below `2^13`), so a
//! coarse increment built from fine ones has the same bits no matter how or
//! in which order the fine increments are grouped.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::measure::EmpiricalMeasure;
use crate::rng::{CounterRng, Domain};

/// Spacing of the lattice that increments are rounded to.
pub const INCREMENT_QUANTUM: f64 = 1.0 / (1u64 << 40) as f64;

/// Default cap on materialized bundle size, in `f64` values (1 GiB).
pub const DEFAULT_MEMORY_BUDGET: usize = 1 << 27;

/// Uniform grid `t_k = k T / M`, `k = 0..=M`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::arg(format!("horizon must be positive, got {horizon}")));
        }
        if steps == 0 {
            return Err(Error::arg("a time grid needs at least one step"));
        }
        Ok(Self { horizon, steps })
    }

    /// Grid with step `h`; `T / h` must be an integer.
    pub fn with_step(horizon: f64, h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::arg(format!("step must be positive, got {h}")));
        }
        let ratio = horizon / h;
        let steps = ratio.round();
        if steps < 1.0 || (ratio - steps).abs() > 1e-9 * steps.max(1.0) {
            return Err(Error::arg(format!("step {h} does not divide horizon {horizon}")));
        }
        Self::new(horizon, steps as usize)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        debug_assert!(k <= self.steps);
        if k == self.steps {
            self.horizon
        } else {
            self.horizon * k as f64 / self.steps as f64
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|k| self.time(k)).collect()
    }

    /// Index of the last grid point at or before `t`.
    pub fn floor_index(&self, t: f64) -> usize {
        let x = t * self.steps as f64 / self.horizon;
        let r = x.round();
        let k = if (x - r).abs() <= 1e-9 * r.max(1.0) { r } else { x.floor() };
        (k.max(0.0) as usize).min(self.steps)
    }

    /// `h * floor(t / h)`, the freezing time of the Euler scheme.
    pub fn floor_map(&self, t: f64) -> f64 {
        self.time(self.floor_index(t))
    }

    /// Number of steps of `self` per step of `coarse`, when `coarse` is nested
    /// in `self`.
    pub fn stride_to(&self, coarse: &TimeGrid) -> Result<usize> {
        if self.horizon != coarse.horizon {
            return Err(Error::arg(format!("grids have different horizons ({} vs {})", self.horizon, coarse.horizon)));
        }
        if coarse.steps == 0 || !self.steps.is_multiple_of(coarse.steps) {
            return Err(Error::arg(format!(
                "grid with {} steps is not nested in grid with {} steps",
                coarse.steps, self.steps
            )));
        }
        Ok(self.steps / coarse.steps)
    }
}

#[derive(Debug, Clone)]
enum Storage {
    /// `[particle][step][coord]` increments on this view's grid.
    Materialized(Arc<[f64]>),
    /// Generated on demand as the sum of `stride` fine increments.
    Streaming { stride: usize },
}

/// Brownian increments for `N` independent `d`-dimensional motions.
#[derive(Debug, Clone)]
pub struct BrownianBundle {
    seed: u64,
    n_particles: usize,
    dim: usize,
    fine_grid: TimeGrid,
    grid: TimeGrid,
    storage: Storage,
}

#[inline]
fn quantize(x: f64) -> f64 {
    (x / INCREMENT_QUANTUM).round() * INCREMENT_QUANTUM
}

fn to_u32(value: usize, what: &str) -> Result<u32> {
    u32::try_from(value).map_err(|_| Error::arg(format!("{what} {value} exceeds the u32 counter range")))
}

impl BrownianBundle {
    /// Materializes all increments, refusing bundles above `budget` values.
    pub fn generate(seed: u64, n_particles: usize, dim: usize, fine_grid: TimeGrid, budget: usize) -> Result<Self> {
        let mut bundle = Self::streaming(seed, n_particles, dim, fine_grid)?;
        let required =
            n_particles.checked_mul(fine_grid.steps()).and_then(|v| v.checked_mul(dim)).unwrap_or(usize::MAX);
        if required > budget {
            return Err(Error::MemoryBudget { required, budget });
        }
        let m = fine_grid.steps();
        let mut data = vec![0.0; required];
        use rayon::prelude::*;
        data.par_chunks_mut(m * dim).enumerate().for_each(|(i, chunk)| {
            for k in 0..m {
                bundle.fine_increment_into(i, k, &mut chunk[k * dim..(k + 1) * dim]);
            }
        });
        bundle.storage = Storage::Materialized(data.into());
        Ok(bundle)
    }

    /// A bundle that regenerates increments on demand instead of storing them.
    pub fn streaming(seed: u64, n_particles: usize, dim: usize, fine_grid: TimeGrid) -> Result<Self> {
        if n_particles == 0 || dim == 0 {
            return Err(Error::arg("a bundle needs at least one particle and one dimension"));
        }
        to_u32(n_particles, "particle count")?;
        to_u32(fine_grid.steps(), "step count")?;
        if dim > u16::MAX as usize {
            return Err(Error::arg(format!("dimension {dim} exceeds the counter range")));
        }
        Ok(Self { seed, n_particles, dim, fine_grid, grid: fine_grid, storage: Storage::Streaming { stride: 1 } })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn fine_grid(&self) -> &TimeGrid {
        &self.fine_grid
    }

    pub fn is_streaming(&self) -> bool {
        matches!(self.storage, Storage::Streaming { .. })
    }

    #[inline]
    fn fine_increment_into(&self, particle: usize, step: usize, out: &mut [f64]) {
        let rng = CounterRng::new(self.seed);
        let scale = self.fine_grid.step().sqrt();
        for (c, slot) in out.iter_mut().enumerate() {
            let z = rng.normal(Domain::Brownian, step as u32, particle as u32, c as u16);
            *slot = quantize(z * scale);
        }
    }

    /// Writes the increment of `particle` over `[t_k, t_{k+1}]` of this view's
    /// grid into `out` (length d).
    #[inline]
    pub fn increment_into(&self, particle: usize, step: usize, out: &mut [f64]) {
        debug_assert!(particle < self.n_particles && step < self.grid.steps());
        let d = self.dim;
        match &self.storage {
            Storage::Materialized(data) => {
                let m = self.grid.steps();
                let base = (particle * m + step) * d;
                out.copy_from_slice(&data[base..base + d]);
            }
            Storage::Streaming { stride } => {
                if *stride == 1 {
                    self.fine_increment_into(particle, step, out);
                    return;
                }
                out.iter_mut().for_each(|v| *v = 0.0);
                let mut buf = [0.0f64; 8];
                let mut heap;
                let tmp: &mut [f64] = if d <= 8 {
                    &mut buf[..d]
                } else {
                    heap = vec![0.0; d];
                    &mut heap
                };
                for j in 0..*stride {
                    self.fine_increment_into(particle, step * stride + j, tmp);
                    for (o, t) in out.iter_mut().zip(tmp.iter()) {
                        *o += *t;
                    }
                }
            }
        }
    }

    pub fn increment(&self, particle: usize, step: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.increment_into(particle, step, &mut out);
        out
    }

    /// `W_{t_k}` for one particle on this view's grid (sum of increments).
    pub fn path(&self, particle: usize) -> Vec<Vec<f64>> {
        let mut w = vec![0.0; self.dim];
        let mut out = vec![w.clone()];
        let mut inc = vec![0.0; self.dim];
        for k in 0..self.grid.steps() {
            self.increment_into(particle, k, &mut inc);
            for (a, b) in w.iter_mut().zip(&inc) {
                *a += *b;
            }
            out.push(w.clone());
        }
        out
    }

    /// The same Brownian paths seen on a coarser nested grid.
    pub fn restrict(&self, coarse: &TimeGrid) -> Result<Self> {
        let stride = self.grid.stride_to(coarse)?;
        if stride == 1 {
            return Ok(self.clone());
        }
        let d = self.dim;
        let storage = match &self.storage {
            Storage::Streaming { stride: s } => Storage::Streaming { stride: s * stride },
            Storage::Materialized(data) => {
                let m_fine = self.grid.steps();
                let m = coarse.steps();
                let mut out = vec![0.0; self.n_particles * m * d];
                for i in 0..self.n_particles {
                    for k in 0..m {
                        let dst = &mut out[(i * m + k) * d..(i * m + k + 1) * d];
                        for j in 0..stride {
                            let src = (i * m_fine + k * stride + j) * d;
                            for c in 0..d {
                                dst[c] += data[src + c];
                            }
                        }
                    }
                }
                Storage::Materialized(out.into())
            }
        };
        Ok(Self { grid: *coarse, storage, ..self.clone() })
    }

    /// Bundle whose particle `i` carries the increments of particle
    /// `order[i]` of `self`. Materializes the result.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.n_particles {
            return Err(Error::arg("permutation length must equal the particle count"));
        }
        let m = self.grid.steps();
        let d = self.dim;
        let mut data = vec![0.0; self.n_particles * m * d];
        for (i, &src) in order.iter().enumerate() {
            for k in 0..m {
                self.increment_into(src, k, &mut data[(i * m + k) * d..(i * m + k + 1) * d]);
            }
        }
        Ok(Self { storage: Storage::Materialized(data.into()), ..self.clone() })
    }
}

/// Convenience wrapper that materializes when the budget allows and streams
/// otherwise.
pub fn generate_bundle(seed: u64, n_particles: usize, dim: usize, fine_grid: TimeGrid) -> Result<BrownianBundle> {
    match BrownianBundle::generate(seed, n_particles, dim, fine_grid, DEFAULT_MEMORY_BUDGET) {
        Err(Error::MemoryBudget { .. }) => BrownianBundle::streaming(seed, n_particles, dim, fine_grid),
        other => other,
    }
}

/// Named parameter map used by the kernel and initial-law catalogs. Scalars
/// are one-element lists.
pub type Params = BTreeMap<String, Vec<f64>>;

pub(crate) fn take_scalar(params: &Params, key: &str, default: Option<f64>) -> Result<f64> {
    match params.get(key) {
        Some(v) if v.len() == 1 => Ok(v[0]),
        Some(v) => Err(Error::Config(format!("parameter `{key}` must be a scalar, got {} values", v.len()))),
        None => default.ok_or_else(|| Error::Config(format!("missing parameter `{key}`"))),
    }
}

pub(crate) fn check_known_keys(params: &Params, known: &[&str], what: &str) -> Result<()> {
    for key in params.keys() {
        if !known.contains(&key.as_str()) {
            return Err(Error::Config(format!("unknown parameter `{key}` for {what} (expected one of {known:?})")));
        }
    }
    Ok(())
}

/// Initial distributions available from configuration.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialLaw {
    PointMass {
        point: Vec<f64>,
    },
    /// `cov` is row-major `d x d`.
    Gaussian {
        mean: Vec<f64>,
        cov: Vec<f64>,
    },
    UniformBox {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
}

fn broadcast(params: &Params, key: &str, dim: usize, default: Option<f64>) -> Result<Vec<f64>> {
    match params.get(key) {
        Some(v) if v.len() == 1 => Ok(vec![v[0]; dim]),
        Some(v) if v.len() == dim => Ok(v.clone()),
        Some(v) => Err(Error::Config(format!("parameter `{key}` needs 1 or {dim} values, got {}", v.len()))),
        None => default.map(|d| vec![d; dim]).ok_or_else(|| Error::Config(format!("missing parameter `{key}`"))),
    }
}

impl InitialLaw {
    pub fn from_name(name: &str, params: &Params, dim: usize) -> Result<Self> {
        match name {
            "point_mass" => {
                check_known_keys(params, &["x0"], "point_mass")?;
                Ok(Self::PointMass { point: broadcast(params, "x0", dim, None)? })
            }
            "gaussian" => {
                check_known_keys(params, &["mean", "var", "cov"], "gaussian")?;
                let mean = broadcast(params, "mean", dim, Some(0.0))?;
                let cov = match (params.get("var"), params.get("cov")) {
                    (Some(_), Some(_)) => return Err(Error::Config("give either `var` or `cov`, not both".into())),
                    (_, Some(c)) if c.len() == dim * dim => c.clone(),
                    (_, Some(c)) => {
                        return Err(Error::Config(format!("`cov` needs {} entries, got {}", dim * dim, c.len())))
                    }
                    (var, None) => {
                        let diag = match var {
                            Some(_) => broadcast(params, "var", dim, None)?,
                            None => vec![1.0; dim],
                        };
                        let mut c = vec![0.0; dim * dim];
                        for k in 0..dim {
                            c[k * dim + k] = diag[k];
                        }
                        c
                    }
                };
                Self::gaussian(mean, cov)
            }
            "uniform_box" => {
                check_known_keys(params, &["lo", "hi"], "uniform_box")?;
                let lo = broadcast(params, "lo", dim, None)?;
                let hi = broadcast(params, "hi", dim, None)?;
                if lo.iter().zip(&hi).any(|(a, b)| !(a < b)) {
                    return Err(Error::Config("uniform_box needs lo < hi in every coordinate".into()));
                }
                Ok(Self::UniformBox { lo, hi })
            }
            other => Err(Error::Config(format!(
                "unknown initial law `{other}` (expected point_mass, gaussian or uniform_box)"
            ))),
        }
    }

    pub fn gaussian(mean: Vec<f64>, cov: Vec<f64>) -> Result<Self> {
        let d = mean.len();
        if cov.len() != d * d {
            return Err(Error::Dimension { expected: d * d, got: cov.len() });
        }
        cholesky(&cov, d)?;
        Ok(Self::Gaussian { mean, cov })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::PointMass { point } => point.len(),
            Self::Gaussian { mean, .. } => mean.len(),
            Self::UniformBox { lo, .. } => lo.len(),
        }
    }

    /// `E|ξ|^2`.
    pub fn second_moment(&self) -> f64 {
        match self {
            Self::PointMass { point } => point.iter().map(|v| v * v).sum(),
            Self::Gaussian { mean, cov } => {
                let d = mean.len();
                mean.iter().map(|v| v * v).sum::<f64>() + (0..d).map(|k| cov[k * d + k]).sum::<f64>()
            }
            Self::UniformBox { lo, hi } => lo.iter().zip(hi).map(|(a, b)| (a * a + a * b + b * b) / 3.0).sum(),
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        match self {
            Self::PointMass { point } => point.clone(),
            Self::Gaussian { mean, .. } => mean.clone(),
            Self::UniformBox { lo, hi } => lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect(),
        }
    }

    /// Stable textual description, used in cache keys and summaries.
    pub fn describe(&self) -> String {
        match self {
            Self::PointMass { point } => format!("point_mass(x0={point:?})"),
            Self::Gaussian { mean, cov } => format!("gaussian(mean={mean:?},cov={cov:?})"),
            Self::UniformBox { lo, hi } => format!("uniform_box(lo={lo:?},hi={hi:?})"),
        }
    }
}

fn cholesky(a: &[f64], d: usize) -> Result<Vec<f64>> {
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i * d + k] * l[j * d + k]).sum();
            if i == j {
                let v = a[i * d + i] - s;
                if !(v > 0.0) {
                    return Err(Error::Config("gaussian covariance must be positive definite".into()));
                }
                l[i * d + i] = v.sqrt();
            } else {
                l[i * d + j] = (a[i * d + j] - s) / l[j * d + j];
            }
        }
    }
    Ok(l)
}

/// `N` i.i.d. draws from an initial law.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialSample {
    pub seed: u64,
    pub points: EmpiricalMeasure,
}

impl InitialSample {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }

    pub fn permuted(&self, order: &[usize]) -> Self {
        Self { seed: self.seed, points: self.points.permuted(order) }
    }
}

/// Draws `n` points from `law`; point `i` depends only on `(seed, i)`.
pub fn sample_initial(seed: u64, law: &InitialLaw, n: usize) -> Result<InitialSample> {
    if n == 0 {
        return Err(Error::arg("initial sample needs at least one point"));
    }
    to_u32(n, "sample size")?;
    let d = law.dim();
    let rng = CounterRng::new(seed);
    let mut points = vec![0.0; n * d];
    let chol = match law {
        InitialLaw::Gaussian { cov, .. } => Some(cholesky(cov, d)?),
        _ => None,
    };
    for i in 0..n {
        let x = &mut points[i * d..(i + 1) * d];
        match law {
            InitialLaw::PointMass { point } => x.copy_from_slice(point),
            InitialLaw::Gaussian { mean, .. } => {
                let l = chol.as_ref().expect("cholesky factor");
                let z: Vec<f64> = (0..d).map(|c| rng.normal(Domain::Initial, i as u32, 0, c as u16)).collect();
                for r in 0..d {
                    x[r] = mean[r] + (0..=r).map(|k| l[r * d + k] * z[k]).sum::<f64>();
                }
            }
            InitialLaw::UniformBox { lo, hi } => {
                for c in 0..d {
                    let (u, _) = rng.uniforms(Domain::Initial, i as u32, 1, c as u16);
                    x[c] = lo[c] + (hi[c] - lo[c]) * (1.0 - u);
                }
            }
        }
    }
    Ok(InitialSample { seed, points: EmpiricalMeasure::new(d, points)? })
}

/// Convenience for the named-law catalog.
pub fn sample_initial_named(seed: u64, law_name: &str, params: &Params, n: usize, dim: usize) -> Result<InitialSample> {
    sample_initial(seed, &InitialLaw::from_name(law_name, params, dim)?, n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(m: usize) -> TimeGrid {
        TimeGrid::new(1.0, m).unwrap()
    }

    #[test]
    fn grid_times_and_floor_map() {
        for (t, m) in [(1.0, 3), (0.7, 10), (2.0, 1024), (1.0, 7)] {
            let g = TimeGrid::new(t, m).unwrap();
            assert_eq!(g.time(m), t);
            for k in 0..=m {
                assert_eq!(g.floor_map(g.time(k)), g.time(k));
                assert_eq!(g.floor_index(g.time(k)), k);
            }
            let mid = 0.5 * (g.time(1) + g.time(2));
            assert_eq!(g.floor_map(mid), g.time(1));
        }
        assert!(TimeGrid::with_step(1.0, 0.3).is_err());
        let g = TimeGrid::with_step(1.0, 0.125).unwrap();
        assert_eq!(g.steps(), 8);
        assert_eq!(g.step() * 8.0, 1.0);
    }

    #[test]
    fn bundle_is_seed_deterministic() {
        let a = BrownianBundle::generate(11, 5, 2, grid(16), usize::MAX).unwrap();
        let b = BrownianBundle::generate(11, 5, 2, grid(16), usize::MAX).unwrap();
        for i in 0..5 {
            for k in 0..16 {
                assert_eq!(a.increment(i, k), b.increment(i, k));
            }
        }
        let c = BrownianBundle::generate(12, 5, 2, grid(16), usize::MAX).unwrap();
        assert_ne!(a.increment(0, 0), c.increment(0, 0));
    }

    #[test]
    fn particle_substreams_do_not_depend_on_population() {
        let two = BrownianBundle::generate(3, 2, 1, grid(32), usize::MAX).unwrap();
        let three = BrownianBundle::generate(3, 3, 1, grid(32), usize::MAX).unwrap();
        for i in 0..2 {
            for k in 0..32 {
                assert_eq!(two.increment(i, k), three.increment(i, k));
            }
        }
    }

    #[test]
    fn restrict_sums_fine_increments() {
        let g = TimeGrid::with_step(1.0, 0.25).unwrap();
        let fine = BrownianBundle::generate(9, 3, 1, g, usize::MAX).unwrap();
        let same = fine.restrict(&g).unwrap();
        assert_eq!(same.increment(1, 2), fine.increment(1, 2));
        let coarse = fine.restrict(&TimeGrid::with_step(1.0, 0.5).unwrap()).unwrap();
        for i in 0..3 {
            assert_eq!(coarse.increment(i, 0)[0], fine.increment(i, 0)[0] + fine.increment(i, 1)[0]);
            assert_eq!(coarse.increment(i, 1)[0], fine.increment(i, 2)[0] + fine.increment(i, 3)[0]);
        }
        assert!(fine.restrict(&TimeGrid::new(1.0, 3).unwrap()).is_err());
        assert!(fine.restrict(&TimeGrid::new(2.0, 2).unwrap()).is_err());
    }

    #[test]
    fn restrict_is_associative_and_streaming_agrees() {
        let fine_grid = grid(64);
        let mid = grid(16);
        let coarse = grid(4);
        let fine = BrownianBundle::generate(5, 4, 3, fine_grid, usize::MAX).unwrap();
        let via_mid = fine.restrict(&mid).unwrap().restrict(&coarse).unwrap();
        let direct = fine.restrict(&coarse).unwrap();
        let streamed =
            BrownianBundle::streaming(5, 4, 3, fine_grid).unwrap().restrict(&mid).unwrap().restrict(&coarse).unwrap();
        for i in 0..4 {
            for k in 0..4 {
                let a = via_mid.increment(i, k);
                let b = direct.increment(i, k);
                let c = streamed.increment(i, k);
                for c_ in 0..3 {
                    assert_eq!(a[c_].to_bits(), b[c_].to_bits());
                    assert_eq!(b[c_].to_bits(), c[c_].to_bits());
                }
            }
        }
    }

    #[test]
    fn memory_budget_is_enforced() {
        let err = BrownianBundle::generate(1, 100, 2, grid(100), 1000).unwrap_err();
        assert!(matches!(err, Error::MemoryBudget { required: 20_000, budget: 1000 }));
        assert!(err.to_string().contains("streaming"));
    }

    #[test]
    fn increments_have_brownian_variance() {
        let g = TimeGrid::new(1.0, 200).unwrap();
        let h = g.step();
        let b = BrownianBundle::generate(2024, 250, 2, g, usize::MAX).unwrap();
        let mut values = Vec::new();
        for i in 0..250 {
            for k in 0..200 {
                values.extend(b.increment(i, k));
            }
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        // sd of the sample mean is sqrt(h / n); sd of the sample variance is
        // h sqrt(2 / (n - 1)) for Gaussian data
        assert!(mean.abs() < 4.0 * (h / n).sqrt(), "mean {mean}");
        assert!((var - h).abs() < 4.0 * h * (2.0 / (n - 1.0)).sqrt(), "var {var} vs {h}");
    }

    #[test]
    fn initial_samples() {
        let pm = InitialLaw::from_name("point_mass", &[("x0".to_string(), vec![1.5])].into(), 2).unwrap();
        let s = sample_initial(1, &pm, 10).unwrap();
        assert!(s.points.iter().all(|x| x == [1.5, 1.5]));

        let g = InitialLaw::gaussian(vec![0.0], vec![1.0]).unwrap();
        let n = 100_000;
        let s = sample_initial(77, &g, n).unwrap();
        let mean = s.points.mean()[0];
        assert!(mean.abs() < 4.0 / (n as f64).sqrt());
        assert_eq!(s, sample_initial(77, &g, n).unwrap());

        let u = InitialLaw::from_name(
            "uniform_box",
            &[("lo".to_string(), vec![-1.0]), ("hi".to_string(), vec![2.0])].into(),
            1,
        )
        .unwrap();
        let s = sample_initial(3, &u, 1000).unwrap();
        assert!(s.points.as_flat().iter().all(|&x| (-1.0..=2.0).contains(&x)));

        assert!(matches!(InitialLaw::from_name("cauchy", &Params::new(), 1), Err(Error::Config(_))));
        assert!(InitialLaw::from_name("gaussian", &[("sd".to_string(), vec![1.0])].into(), 1).is_err());
    }

    #[test]
    fn correlated_gaussian_has_requested_covariance() {
        let law = InitialLaw::gaussian(vec![1.0, -1.0], vec![1.0, 0.6, 0.6, 2.0]).unwrap();
        let n = 50_000;
        let s = sample_initial(5, &law, n).unwrap();
        let m = s.points.mean();
        let cov01 = s.points.iter().map(|x| (x[0] - m[0]) * (x[1] - m[1])).sum::<f64>() / n as f64;
        assert!((cov01 - 0.6).abs() < 0.05, "{cov01}");
        assert!((law.second_moment() - 5.0).abs() < 1e-12);
    }
}
