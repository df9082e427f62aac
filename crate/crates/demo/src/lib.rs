//! Small interactive views over `mvsde-core`, exported to JavaScript.
//!
//! The plain functions are the tested surface; the `#[wasm_bindgen]`
//! wrappers only flatten results into `Float64Array`s.

use mvsde_core::analysis::RhoEta;
use mvsde_core::paths::Params;
use mvsde_core::rng::mix_seed;
use mvsde_core::{
    catalog_kernel, coupled_chaos_error, euler_interacting, generate_bundle, picard_solve, sample_initial, InitialLaw,
    KernelPair, LawFlow, Result, TimeGrid,
};
use wasm_bindgen::prelude::*;

/// Kernels offered by the page.
pub const DEMO_KERNELS: &[&str] = &["linear", "kuramoto", "loglip"];

const LAW_SAMPLES: usize = 1000;

fn kernel(name: &str, strength: f64) -> Result<KernelPair> {
    let mut params = Params::new();
    match name {
        "linear" => {
            params.insert("c".into(), vec![strength]);
        }
        "kuramoto" | "loglip" => {
            params.insert("kappa".into(), vec![strength]);
        }
        _ => {}
    }
    catalog_kernel(name, &params, 1)
}

fn start() -> InitialLaw {
    InitialLaw::gaussian(vec![0.5], vec![1.0]).expect("valid law")
}

/// Histogram of the interacting cloud at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<f64>,
    pub mean: f64,
}

pub fn cloud_histogram(name: &str, strength: f64, n: usize, t: f64, bins: usize, seed: u64) -> Result<Histogram> {
    let k = kernel(name, strength)?;
    let grid = TimeGrid::new(t, ((t * 128.0).ceil() as usize).max(1))?;
    let init = sample_initial(mix_seed(seed, 1), &start(), n)?;
    let bundle = generate_bundle(mix_seed(seed, 2), n, 1, grid)?;
    let traj = euler_interacting(&k, &init, &bundle, &grid)?;
    let xs = traj.terminal().states().as_flat();
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo).max(1e-12);
    let bins = bins.max(1);
    let mut counts = vec![0.0; bins];
    for &x in xs {
        let b = (((x - lo) / width) * bins as f64) as usize;
        counts[b.min(bins - 1)] += 1.0;
    }
    Ok(Histogram { lo, hi, counts, mean: xs.iter().sum::<f64>() / n as f64 })
}

/// `(x, ρ_η(x))` on a uniform grid of `[0, hi]`.
pub fn rho_curve(eta: f64, hi: f64, points: usize) -> Result<Vec<(f64, f64)>> {
    let rho = RhoEta::new(eta)?;
    let n = points.max(2);
    Ok((0..n)
        .map(|i| {
            let x = hi * i as f64 / (n - 1) as f64;
            (x, rho.value(x))
        })
        .collect())
}

fn law_flow(k: &KernelPair, name: &str, strength: f64, grid: TimeGrid, seed: u64) -> Result<LawFlow> {
    if name == "linear" {
        return LawFlow::analytic_linear(-1.0, strength, 0.2, 0.5, 1.0, grid, LAW_SAMPLES);
    }
    let (flow, _) = picard_solve(k, &start(), &grid, LAW_SAMPLES, 1e-6, 30, seed)?;
    Ok(flow)
}

/// Mean coupled chaos error for each `N`, averaged over `reps` replications.
pub fn chaos_curve(name: &str, strength: f64, ns: &[usize], reps: usize, seed: u64) -> Result<Vec<(usize, f64)>> {
    let k = kernel(name, strength)?;
    let grid = TimeGrid::new(1.0, 64)?;
    let flow = law_flow(&k, name, strength, grid, seed)?;
    ns.iter()
        .map(|&n| {
            let mut total = 0.0;
            for r in 0..reps as u64 {
                let s = mix_seed(seed, 100 + r);
                let init = sample_initial(mix_seed(s, 1), &start(), n)?;
                let bundle = generate_bundle(mix_seed(s, 2), n, 1, grid)?;
                total += coupled_chaos_error(&k, &init, &bundle, &grid, &flow)?.mean;
            }
            Ok((n, total / reps.max(1) as f64))
        })
        .collect()
}

fn js_err(e: mvsde_core::Error) -> JsValue {
    JsValue::from_str(&e.to_string())
}

/// `[lo, hi, mean, counts...]`.
#[wasm_bindgen(js_name = cloudHistogram)]
pub fn cloud_histogram_js(
    name: &str,
    strength: f64,
    n: usize,
    t: f64,
    bins: usize,
    seed: u32,
) -> std::result::Result<Vec<f64>, JsValue> {
    let h = cloud_histogram(name, strength, n, t, bins, seed as u64).map_err(js_err)?;
    let mut out = vec![h.lo, h.hi, h.mean];
    out.extend(h.counts);
    Ok(out)
}

/// Interleaved `[x0, y0, x1, y1, ...]`.
#[wasm_bindgen(js_name = rhoCurve)]
pub fn rho_curve_js(eta: f64, hi: f64, points: usize) -> std::result::Result<Vec<f64>, JsValue> {
    Ok(rho_curve(eta, hi, points).map_err(js_err)?.into_iter().flat_map(|(x, y)| [x, y]).collect())
}

/// Interleaved `[N0, err0, N1, err1, ...]`.
#[wasm_bindgen(js_name = chaosCurve)]
pub fn chaos_curve_js(name: &str, strength: f64, reps: usize, seed: u32) -> std::result::Result<Vec<f64>, JsValue> {
    let ns = [8, 16, 32, 64, 128];
    Ok(chaos_curve(name, strength, &ns, reps, seed as u64)
        .map_err(js_err)?
        .into_iter()
        .flat_map(|(n, e)| [n as f64, e])
        .collect())
}
