//! Law flows and the Picard distribution iteration: freeze a flow, solve the
//! resulting classical SDE for a cloud of samples, take its empirical flow,
//! repeat.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::kernels::KernelPair;
use crate::measure::EmpiricalMeasure;
use crate::paths::{generate_bundle, sample_initial, BrownianBundle, InitialLaw, InitialSample, TimeGrid};
use crate::rng::mix_seed;
use crate::simulator::{euler_limit_particles_with, SimOptions, Trajectory};

/// Default number of samples carried by a law flow.
pub const DEFAULT_M_LAW: usize = 4000;

const MAGIC: &[u8; 8] = b"MVLF0001";

/// One empirical measure per grid time, all with the same sample count.
#[derive(Debug, Clone, PartialEq)]
pub struct LawFlow {
    grid: TimeGrid,
    measures: Vec<EmpiricalMeasure>,
}

impl LawFlow {
    pub fn new(grid: TimeGrid, measures: Vec<EmpiricalMeasure>) -> Result<Self> {
        if measures.len() != grid.steps() + 1 {
            return Err(Error::arg(format!(
                "law flow on {} steps needs {} measures, got {}",
                grid.steps(),
                grid.steps() + 1,
                measures.len()
            )));
        }
        let (m, d) = (measures[0].len(), measures[0].dim());
        if m == 0 {
            return Err(Error::arg("law flow measures must be nonempty"));
        }
        if measures.iter().any(|mu| mu.len() != m || mu.dim() != d) {
            return Err(Error::arg("law flow measures must share sample count and dimension"));
        }
        Ok(Self { grid, measures })
    }

    /// The flow that stays at `sample` for all times.
    pub fn constant(grid: TimeGrid, sample: &EmpiricalMeasure) -> Self {
        Self { grid, measures: vec![sample.clone(); grid.steps() + 1] }
    }

    /// The empirical flow of a simulated cloud.
    pub fn from_trajectory(traj: &Trajectory) -> Self {
        Self { grid: *traj.grid(), measures: traj.clouds().iter().map(|c| c.states().clone()).collect() }
    }

    /// Closed-form law of the scalar linear kernel `b = a x + c y`, `σ = s`
    /// started from `N(m0, v0)`: Gaussian with mean `m0 e^{(a+c)t}` and
    /// variance `v0 e^{2at} + s² (e^{2at} - 1) / (2a)`, represented at each
    /// time by `m_law` symmetric quantile points.
    pub fn analytic_linear(a: f64, c: f64, s: f64, m0: f64, v0: f64, grid: TimeGrid, m_law: usize) -> Result<Self> {
        if m_law == 0 || !(v0 >= 0.0) {
            return Err(Error::arg("analytic flow needs m_law >= 1 and v0 >= 0"));
        }
        let std = Normal::new(0.0, 1.0).expect("standard normal");
        let half = m_law / 2;
        let z: Vec<f64> = (0..half).map(|i| std.inverse_cdf((i as f64 + 0.5) / m_law as f64)).collect();
        let measures = grid
            .times()
            .into_iter()
            .map(|t| {
                let (mean, var) = linear_moments(a, c, s, m0, v0, t);
                let sd = var.sqrt();
                let mut pts = Vec::with_capacity(m_law);
                for zi in &z {
                    pts.push(mean + sd * zi);
                    pts.push(mean - sd * zi);
                }
                if m_law % 2 == 1 {
                    pts.push(mean);
                }
                EmpiricalMeasure::from_raw(1, pts)
            })
            .collect();
        Self::new(grid, measures)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn m_law(&self) -> usize {
        self.measures[0].len()
    }

    pub fn dim(&self) -> usize {
        self.measures[0].dim()
    }

    pub fn measures(&self) -> &[EmpiricalMeasure] {
        &self.measures
    }

    pub fn measure(&self, k: usize) -> &EmpiricalMeasure {
        &self.measures[k]
    }

    /// For each time of `grid`, the index of the identical time of this flow.
    /// Requires equal horizons and this flow's grid to refine `grid`.
    pub fn index_map(&self, grid: &TimeGrid) -> Result<Vec<usize>> {
        let stride = self.grid.stride_to(grid)?;
        Ok((0..=grid.steps()).map(|k| k * stride).collect())
    }

    /// The measure at time `t`, which must be a grid time.
    pub fn measure_at(&self, t: f64) -> Result<&EmpiricalMeasure> {
        let k = self.grid.floor_index(t);
        let tk = self.grid.time(k);
        if (tk - t).abs() > 1e-12 * self.grid.horizon().max(1.0) {
            return Err(Error::arg(format!("law flow has no measure at t = {t}")));
        }
        Ok(&self.measures[k])
    }

    /// Per-time means.
    pub fn means(&self) -> Vec<Vec<f64>> {
        self.measures.iter().map(|m| m.mean()).collect()
    }

    /// Per-time second moments.
    pub fn second_moments(&self) -> Vec<f64> {
        self.measures.iter().map(|m| m.moment(2.0)).collect()
    }

    /// Writes `<stem>.times.csv` and `<stem>.points.bin`.
    ///
    /// The binary file is the magic `MVLF0001`, then little-endian `u64`
    /// time count, sample count and dimension, an `f64` horizon, and the
    /// points as `f64` ordered `[time][sample][coord]`.
    pub fn write(&self, stem: &Path) -> Result<()> {
        let times_path = with_suffix(stem, ".times.csv");
        let mut csv = String::from("k,t\n");
        for (k, t) in self.grid.times().iter().enumerate() {
            csv.push_str(&format!("{k},{t:.16e}\n"));
        }
        fs::write(&times_path, csv).map_err(|e| Error::io(&times_path, e))?;

        let bin_path = with_suffix(stem, ".points.bin");
        let file = fs::File::create(&bin_path).map_err(|e| Error::io(&bin_path, e))?;
        let mut w = BufWriter::new(file);
        let mut put = |bytes: &[u8]| w.write_all(bytes).map_err(|e| Error::io(&bin_path, e));
        put(MAGIC)?;
        put(&(self.measures.len() as u64).to_le_bytes())?;
        put(&(self.m_law() as u64).to_le_bytes())?;
        put(&(self.dim() as u64).to_le_bytes())?;
        put(&self.grid.horizon().to_le_bytes())?;
        for m in &self.measures {
            for v in m.as_flat() {
                put(&v.to_le_bytes())?;
            }
        }
        w.flush().map_err(|e| Error::io(&bin_path, e))
    }

    /// Reads a flow written by [`LawFlow::write`].
    pub fn read(stem: &Path) -> Result<Self> {
        let bin_path = with_suffix(stem, ".points.bin");
        let file = fs::File::open(&bin_path).map_err(|e| Error::io(&bin_path, e))?;
        let mut r = BufReader::new(file);
        let bad = |reason: &str| Error::Format { path: bin_path.clone(), reason: reason.to_string() };
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
        if &magic != MAGIC {
            return Err(bad("not a law flow file"));
        }
        let mut word = [0u8; 8];
        let mut next = |r: &mut BufReader<fs::File>| -> Result<[u8; 8]> {
            r.read_exact(&mut word).map_err(|_| bad("truncated file"))?;
            Ok(word)
        };
        let n_times = u64::from_le_bytes(next(&mut r)?) as usize;
        let m = u64::from_le_bytes(next(&mut r)?) as usize;
        let d = u64::from_le_bytes(next(&mut r)?) as usize;
        let horizon = f64::from_le_bytes(next(&mut r)?);
        if n_times < 2 || m == 0 || d == 0 {
            return Err(bad("empty law flow"));
        }
        let grid = TimeGrid::new(horizon, n_times - 1).map_err(|_| bad("invalid grid"))?;
        let mut measures = Vec::with_capacity(n_times);
        let mut buf = vec![0u8; m * d * 8];
        for _ in 0..n_times {
            r.read_exact(&mut buf).map_err(|_| bad("truncated point data"))?;
            let pts: Vec<f64> =
                buf.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))).collect();
            measures.push(EmpiricalMeasure::new(d, pts).map_err(|_| bad("non-finite point"))?);
        }
        if r.read(&mut [0u8; 1]).map_err(|e| Error::io(&bin_path, e))? != 0 {
            return Err(bad("trailing bytes"));
        }
        Self::new(grid, measures)
    }
}

/// Mean and variance of the scalar linear kernel's law at time `t`.
pub fn linear_moments(a: f64, c: f64, s: f64, m0: f64, v0: f64, t: f64) -> (f64, f64) {
    let mean = m0 * ((a + c) * t).exp();
    let var =
        if a == 0.0 { v0 + s * s * t } else { v0 * (2.0 * a * t).exp() + s * s * (2.0 * a * t).exp_m1() / (2.0 * a) };
    (mean, var)
}

fn with_suffix(stem: &Path, suffix: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Convergence record of [`picard_solve`].
#[derive(Debug, Clone, PartialEq)]
pub struct PicardReport {
    /// Number of Picard steps taken.
    pub iterations: usize,
    /// `gap_history[j]` is the gap of iteration `k = j + 2`:
    /// `sup_t (1/M) Σ_m |X_t^{(k),m} - X_t^{(k-1),m}|²`, an upper bound on
    /// `sup_t W₂(μ_t^{(k)}, μ_t^{(k-1)})²`.
    pub gap_history: Vec<f64>,
    /// `exp` of the least-squares slope of `ln gap` against `k`.
    pub contraction_ratio: Option<f64>,
    pub tol: f64,
    pub converged: bool,
}

impl PicardReport {
    pub fn terminal_gap(&self) -> f64 {
        self.gap_history.last().copied().unwrap_or(f64::INFINITY)
    }

    /// Whether every gap is at most its predecessor.
    pub fn is_monotone(&self) -> bool {
        self.gap_history.windows(2).all(|w| w[1] <= w[0])
    }
}

fn contraction_ratio(gaps: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> =
        gaps.iter().enumerate().filter(|(_, g)| **g > 0.0).map(|(k, g)| (k as f64, g.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some((sxy / sxx).exp())
}

/// One Picard step: evolve `init` under the coefficients frozen at
/// `law_prev` and return the resulting trajectory.
pub fn picard_step_trajectory(
    kernel: &KernelPair,
    law_prev: &LawFlow,
    init: &InitialSample,
    bundle: &BrownianBundle,
    grid: &TimeGrid,
    opts: SimOptions,
) -> Result<Trajectory> {
    if law_prev.grid() != grid {
        return Err(Error::arg("picard step: law flow and grid differ"));
    }
    euler_limit_particles_with(kernel, init, bundle, grid, law_prev, opts)
}

/// One Picard step, returning the new empirical law flow.
pub fn picard_step(
    kernel: &KernelPair,
    law_prev: &LawFlow,
    init: &InitialSample,
    bundle: &BrownianBundle,
    grid: &TimeGrid,
) -> Result<LawFlow> {
    picard_step_trajectory(kernel, law_prev, init, bundle, grid, SimOptions::default())
        .map(|t| LawFlow::from_trajectory(&t))
}

/// Picard iteration from the constant flow at the initial sample, reusing
/// the same `(init, bundle)` in every iteration, until the pathwise gap
/// falls to `tol`.
pub fn picard_solve_with(
    kernel: &KernelPair,
    init: &InitialSample,
    bundle: &BrownianBundle,
    grid: &TimeGrid,
    tol: f64,
    max_iter: usize,
    opts: SimOptions,
) -> Result<(LawFlow, PicardReport)> {
    if !(tol > 0.0) {
        return Err(Error::arg(format!("picard tolerance must be positive, got {tol}")));
    }
    if max_iter == 0 {
        return Err(Error::arg("picard needs max_iter >= 1"));
    }
    let mut law = LawFlow::constant(*grid, &init.points);
    let mut prev: Option<Trajectory> = None;
    let mut gaps = Vec::new();
    for k in 1..=max_iter {
        let traj = picard_step_trajectory(kernel, &law, init, bundle, grid, opts)?;
        law = LawFlow::from_trajectory(&traj);
        if let Some(p) = &prev {
            let per = sup_sq_gap_mean(&traj, p)?;
            gaps.push(per);
            if per <= tol {
                let report = PicardReport {
                    iterations: k,
                    contraction_ratio: contraction_ratio(&gaps),
                    gap_history: gaps,
                    tol,
                    converged: true,
                };
                return Ok((law, report));
            }
        }
        prev = Some(traj);
    }
    Err(Error::NonConvergence(Box::new(PicardReport {
        iterations: max_iter,
        contraction_ratio: contraction_ratio(&gaps),
        gap_history: gaps,
        tol,
        converged: false,
    })))
}

/// `sup_t (1/M) Σ_m |X_t^m - Y_t^m|²` over the shared grid.
fn sup_sq_gap_mean(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    let n = a.n_particles() as f64;
    let mut sup = 0.0f64;
    for (ca, cb) in a.clouds().iter().zip(b.clouds()) {
        let total: f64 = ca
            .states()
            .iter()
            .zip(cb.states().iter())
            .map(|(x, y)| x.iter().zip(y).map(|(u, v)| (u - v) * (u - v)).sum::<f64>())
            .collect::<crate::numeric::NeumaierSum>()
            .value();
        sup = sup.max(total / n);
    }
    Ok(sup)
}

/// Seed of the initial sample used by [`picard_solve`].
pub fn picard_init_seed(seed: u64) -> u64 {
    mix_seed(seed, 0x5049_4341_5244_0001)
}

/// Seed of the Brownian bundle used by [`picard_solve`].
pub fn picard_bundle_seed(seed: u64) -> u64 {
    mix_seed(seed, 0x5049_4341_5244_0002)
}

/// Picard iteration with its own `M_law` samples drawn from `nu`.
pub fn picard_solve(
    kernel: &KernelPair,
    nu: &InitialLaw,
    grid: &TimeGrid,
    m_law: usize,
    tol: f64,
    max_iter: usize,
    seed: u64,
) -> Result<(LawFlow, PicardReport)> {
    if nu.dim() != kernel.dim() {
        return Err(Error::Dimension { expected: kernel.dim(), got: nu.dim() });
    }
    let init = sample_initial(picard_init_seed(seed), nu, m_law)?;
    let bundle = generate_bundle(picard_bundle_seed(seed), m_law, kernel.dim(), *grid)?;
    picard_solve_with(kernel, &init, &bundle, grid, tol, max_iter, SimOptions::default())
}

/// Text identifying a cached Picard flow.
pub fn cache_key_text(
    kernel: &KernelPair,
    nu: &InitialLaw,
    grid: &TimeGrid,
    m_law: usize,
    seed: u64,
    tol: f64,
) -> String {
    format!(
        "mvsde-lawflow v{}\nkernel {}\ninitial_law {}\ngrid T={:?} steps={}\nM_law {}\nseed {}\ntol {:?}\n",
        env!("CARGO_PKG_VERSION"),
        kernel.describe(),
        nu.describe(),
        grid.horizon(),
        grid.steps(),
        m_law,
        seed,
        tol
    )
}

/// Directory of cached Picard flows keyed by a SHA-256 of [`cache_key_text`].
#[derive(Debug, Clone)]
pub struct LawFlowCache {
    dir: PathBuf,
}

impl LawFlowCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn key(text: &str) -> String {
        Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    fn stem(&self, key: &str) -> PathBuf {
        self.dir.join(key)
    }

    /// The cached flow for `text`, if present and matching.
    pub fn load(&self, text: &str) -> Result<Option<LawFlow>> {
        let stem = self.stem(&Self::key(text));
        let key_path = with_suffix(&stem, ".key.txt");
        match fs::read_to_string(&key_path) {
            Ok(stored) if stored == text => LawFlow::read(&stem).map(Some),
            Ok(_) => Ok(None),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(Error::io(&key_path, e)),
        }
    }

    pub fn store(&self, text: &str, flow: &LawFlow) -> Result<()> {
        fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        let stem = self.stem(&Self::key(text));
        flow.write(&stem)?;
        let key_path = with_suffix(&stem, ".key.txt");
        fs::write(&key_path, text).map_err(|e| Error::io(&key_path, e))
    }

    /// [`picard_solve`] through the cache. The report is `None` on a hit.
    pub fn solve(
        &self,
        kernel: &KernelPair,
        nu: &InitialLaw,
        grid: &TimeGrid,
        m_law: usize,
        tol: f64,
        max_iter: usize,
        seed: u64,
    ) -> Result<(LawFlow, Option<PicardReport>)> {
        let text = cache_key_text(kernel, nu, grid, m_law, seed, tol);
        if let Some(flow) = self.load(&text)? {
            return Ok((flow, None));
        }
        let (flow, report) = picard_solve(kernel, nu, grid, m_law, tol, max_iter, seed)?;
        self.store(&text, &flow)?;
        Ok((flow, Some(report)))
    }
}
