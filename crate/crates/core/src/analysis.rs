//! Comparison function `ρ_η`, Bihari bounds, modulus domination checks and
//! log-log rate regression.

use crate::error::{Error, Result};
use crate::kernels::ModulusFn;

/// Default `η` for Lipschitz-class moduli.
pub const DEFAULT_ETA: f64 = 0.1353352832366127; // e^-2

/// The concave comparison function with knot `η ∈ (0, 1/e)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhoEta {
    eta: f64,
}

impl RhoEta {
    pub fn new(eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta < (-1.0f64).exp()) {
            return Err(Error::arg(format!("eta must lie in (0, 1/e), got {eta}")));
        }
        Ok(Self { eta })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Slope `ln(1/η) - 1` of the linear branch.
    pub fn tail_slope(&self) -> f64 {
        (1.0 / self.eta).ln() - 1.0
    }

    /// `ρ_η(x)` for `x >= 0`; no sign check.
    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        if x == 0.0 {
            0.0
        } else if x <= self.eta {
            x * (1.0 / x).ln()
        } else {
            self.tail_slope() * x + self.eta
        }
    }

    pub fn evaluate(&self, x: f64) -> Result<f64> {
        if !(x >= 0.0) {
            return Err(Error::arg(format!("rho_eta needs x >= 0, got {x}")));
        }
        Ok(self.value(x))
    }
}

/// `ρ_η(x)`.
pub fn rho_eta(x: f64, eta: f64) -> Result<f64> {
    RhoEta::new(eta)?.evaluate(x)
}

/// Outcome of [`check_modulus_domination`].
#[derive(Debug, Clone, PartialEq)]
pub struct DominationReport {
    pub passed: bool,
    /// Largest `η` found to dominate, or the last one tried on failure.
    pub eta: f64,
    /// A grid point violating domination at the reported `η`.
    pub violation: Option<f64>,
    pub grid_points: usize,
}

const DOMINATION_RTOL: f64 = 1e-12;

fn first_violation(gamma: &ModulusFn, rho: RhoEta, grid: &[f64]) -> Option<f64> {
    grid.iter().copied().find(|&x| {
        let lin = x * gamma.evaluate(x);
        let quad = x * x * gamma.evaluate(x);
        lin > rho.value(x) * (1.0 + DOMINATION_RTOL) || quad > rho.value(x * x) * (1.0 + DOMINATION_RTOL)
    })
}

/// Logarithmic grid of `n` points on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && n >= 2);
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

/// Checks `x γ(x) <= ρ_η(x)` and `x² γ(x) <= ρ_η(x²)` on `grid`, shrinking
/// `η` from `eta` until both hold and then bisecting (in `ln η`) for the
/// largest dominating value. `η` is never taken below the smallest grid
/// point, so the `x ln(1/x)` branch is always exercised.
pub fn check_modulus_domination(gamma: &ModulusFn, eta: f64, grid: &[f64]) -> Result<DominationReport> {
    if grid.is_empty() || grid.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::arg("domination grid must be nonempty and positive"));
    }
    let floor = grid.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi_fail: Option<f64> = None;
    let mut current = RhoEta::new(eta)?.eta();
    let mut violation;
    loop {
        violation = first_violation(gamma, RhoEta { eta: current }, grid);
        if violation.is_none() {
            break;
        }
        hi_fail = Some(current);
        if current <= floor {
            return Ok(DominationReport { passed: false, eta: current, violation, grid_points: grid.len() });
        }
        current = (current * (-1.0f64).exp()).max(floor);
    }
    if let Some(fail) = hi_fail {
        let (mut lo, mut hi) = (current.ln(), fail.ln());
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if first_violation(gamma, RhoEta { eta: mid.exp() }, grid).is_none() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        current = lo.exp();
    }
    Ok(DominationReport { passed: true, eta: current, violation: None, grid_points: grid.len() })
}

/// Bihari comparison bound for `g(t) <= g0 + ∫ q(s) ρ_η(g(s)) ds` given
/// `Q = ∫ q`: the solution of `G' = q ρ_η(G)`, `G(0) = g0`.
///
/// While `G <= η` this is `g0^{exp(-Q)}`; once `G` passes `η` it continues
/// along the linear branch of `ρ_η`.
pub fn bihari_bound(g0: f64, q_integral: f64, eta: f64) -> Result<f64> {
    let rho = RhoEta::new(eta)?;
    if !(g0 > 0.0 && g0 < eta) {
        return Err(Error::Precondition(format!("bihari bound needs 0 < g0 < eta, got g0 = {g0}, eta = {eta}")));
    }
    if !(q_integral >= 0.0) {
        return Err(Error::arg(format!("q integral must be nonnegative, got {q_integral}")));
    }
    let log_inv_g0 = (1.0 / g0).ln();
    let log_inv_eta = (1.0 / eta).ln();
    // Q at which g0^{exp(-Q)} reaches η
    let q_knot = (log_inv_g0 / log_inv_eta).ln();
    if q_integral <= q_knot {
        return Ok(g0.powf((-q_integral).exp()));
    }
    let k = rho.tail_slope();
    let shift = eta / k;
    Ok((eta + shift) * (k * (q_integral - q_knot)).exp() - shift)
}

/// Least-squares line through `(ln x, ln err)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// `ln err_i - (intercept + slope ln x_i)`.
    pub residuals: Vec<f64>,
}

impl RateFit {
    pub fn predict_log(&self, x: f64) -> f64 {
        self.intercept + self.slope * x.ln()
    }
}

pub fn fit_rate(xs: &[f64], errs: &[f64]) -> Result<RateFit> {
    if xs.len() != errs.len() {
        return Err(Error::arg(format!("{} abscissae but {} errors", xs.len(), errs.len())));
    }
    if xs.len() < 3 {
        return Err(Error::arg("rate fit needs at least 3 points"));
    }
    if xs.iter().chain(errs).any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::arg("rate fit needs positive finite abscissae and errors"));
    }
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::arg("rate fit needs distinct abscissae"));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals: Vec<f64> = lx.iter().zip(&ly).map(|(x, y)| y - (intercept + slope * x)).collect();
    let ss_res: f64 = residuals.iter().map(|r| r * r).sum();
    let ss_tot: f64 = ly.iter().map(|y| (y - my) * (y - my)).sum();
    let r_squared = if ss_tot > 0.0 { (1.0 - ss_res / ss_tot).clamp(0.0, 1.0) } else { 1.0 };
    Ok(RateFit { slope, intercept, r_squared, residuals })
}

/// Whether `err(h) <= C h^{2α}` holds for every `(h, err)` pair, with `C`
/// fixed by the coarsest step. Zero errors (the reference step itself) are
/// skipped. Invalid `alpha` yields `false`.
pub fn alpha_envelope_check(errs_by_h: &[(f64, f64)], alpha: f64) -> bool {
    envelope_margin(errs_by_h, alpha).is_some_and(|m| m <= 1.0 + 1e-9)
}

/// Largest `err(h) / (C h^{2α})` over the ladder, `C` fitted at the coarsest `h`.
pub fn envelope_margin(errs_by_h: &[(f64, f64)], alpha: f64) -> Option<f64> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return None;
    }
    let mut pts: Vec<(f64, f64)> = errs_by_h.iter().copied().filter(|&(_, e)| e != 0.0).collect();
    if pts.iter().any(|&(h, e)| !(h > 0.0) || !(e > 0.0) || !e.is_finite()) {
        return None;
    }
    pts.sort_by(|a, b| b.0.total_cmp(&a.0));
    let &(h0, e0) = pts.first()?;
    let c = e0 / h0.powf(2.0 * alpha);
    Some(pts.iter().map(|&(h, e)| e / (c * h.powf(2.0 * alpha))).fold(0.0, f64::max))
}

/// `|estimate - target| <= k * stderr`.
pub fn within_sigmas(estimate: f64, stderr: f64, target: f64, k: f64) -> bool {
    (estimate - target).abs() <= k * stderr
}

#[cfg(test)]
mod tests {
    use super::*;

    const E2: f64 = 0.1353352832366127;

    #[test]
    fn rho_examples() {
        let r = RhoEta::new(E2).unwrap();
        assert!((r.value(E2) - 2.0 * E2).abs() < 1e-15);
        let left = E2 * (1.0 / E2).ln();
        let right = r.tail_slope() * E2 + E2;
        assert!((left - right).abs() < 1e-12);
        assert_eq!(r.value(0.0), 0.0);
        assert!((r.value(1.0) - (1.0 + E2)).abs() < 1e-12);
        assert!(rho_eta(-1.0, E2).is_err());
        assert!(RhoEta::new(1.0 / std::f64::consts::E).is_err());
        assert!(RhoEta::new(0.0).is_err());
    }

    #[test]
    fn domination_examples() {
        let grid = log_grid(1e-9, 10.0, 4000);
        let c = check_modulus_domination(&ModulusFn::constant(0.5), E2, &grid).unwrap();
        assert!(c.passed && c.eta == E2);

        let glued = ModulusFn::log_glued(1.0, E2);
        let fixed = (-3.0f64).exp();
        assert!(first_violation(&glued, RhoEta::new(fixed).unwrap(), &grid).is_none());
        let auto = check_modulus_domination(&glued, E2, &grid).unwrap();
        assert!(auto.passed && auto.eta >= fixed * (1.0 - 1e-9) && auto.eta < E2, "{auto:?}");

        let doubled = ModulusFn::custom(|x| 2.0 * (1.0 / x.min(0.5)).ln(), 2.0, 2.0 * 2f64.ln());
        let bad = check_modulus_domination(&doubled, E2, &grid).unwrap();
        assert!(!bad.passed);
        assert!(bad.violation.unwrap() <= 1e-8);
    }

    #[test]
    fn bihari_examples() {
        let g0 = (-4.0f64).exp();
        assert_eq!(bihari_bound(g0, 0.0, E2).unwrap(), g0);
        assert!((bihari_bound(g0, 2f64.ln(), E2).unwrap() - E2).abs() < 1e-15);
        assert!(matches!(bihari_bound(0.2, 1.0, E2), Err(Error::Precondition(_))));
    }

    fn integrate(g0: f64, t_end: f64, eta: f64, steps: usize) -> f64 {
        let r = RhoEta::new(eta).unwrap();
        let h = t_end / steps as f64;
        let mut g = g0;
        for _ in 0..steps {
            // classical RK4
            let k1 = r.value(g);
            let k2 = r.value(g + 0.5 * h * k1);
            let k3 = r.value(g + 0.5 * h * k2);
            let k4 = r.value(g + h * k3);
            g += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        g
    }

    #[test]
    fn bihari_dominates_the_comparison_ode() {
        let g0 = (-4.0f64).exp();
        for eta in [E2, 0.05, 0.3] {
            for t in [0.25, 1.0, 2.0] {
                let ode = integrate(g0, t, eta, 200_000);
                let bound = bihari_bound(g0, t, eta).unwrap();
                assert!(ode <= bound + 1e-6, "eta {eta} t {t}: {ode} > {bound}");
                // the bound solves the same ODE, so it is tight
                assert!((ode - bound).abs() < 1e-8, "eta {eta} t {t}: {ode} vs {bound}");
            }
        }
        // the pure exponent form undershoots once the solution passes eta
        let ode = integrate(g0, 1.0, E2, 200_000);
        assert!(g0.powf((-1.0f64).exp()) < ode);
    }

    #[test]
    fn fit_examples() {
        let xs = [8.0, 16.0, 32.0, 64.0];
        let f = fit_rate(&xs, &xs.map(|x| 3.0 / x)).unwrap();
        assert!((f.slope + 1.0).abs() < 1e-12 && (f.r_squared - 1.0).abs() < 1e-12);
        let f = fit_rate(&xs, &xs.map(|x| 0.7 * x.powf(0.8))).unwrap();
        assert!((f.slope - 0.8).abs() < 1e-12);
        let f = fit_rate(&[1.0, 2.0, 4.0], &[2.0, 1.0, 0.5]).unwrap();
        assert!((f.slope + 1.0).abs() < 1e-12);
        for ((x, e), r) in [(1.0f64, 2.0f64), (2.0, 1.0), (4.0, 0.5)].iter().zip(&f.residuals) {
            assert!((e.ln() - f.predict_log(*x) - r).abs() < 1e-12);
        }
        assert!(fit_rate(&[1.0, 2.0], &[1.0, 2.0]).is_err());
        assert!(fit_rate(&[1.0, 1.0, 2.0], &[1.0, 2.0, 3.0]).is_err());
        assert!(fit_rate(&[1.0, 2.0, 3.0], &[1.0, 0.0, 3.0]).is_err());
    }

    #[test]
    fn envelope_examples() {
        let hs: Vec<f64> = (4..=8).map(|k| 2f64.powi(-k)).collect();
        let linear: Vec<(f64, f64)> = hs.iter().map(|&h| (h, 0.3 * h)).collect();
        assert!(alpha_envelope_check(&linear, 0.4));
        let flat: Vec<(f64, f64)> = hs.iter().map(|&h| (h, 0.3)).collect();
        assert!(!alpha_envelope_check(&flat, 0.1));
        let boundary: Vec<(f64, f64)> = hs.iter().map(|&h| (h, h.powf(0.8))).collect();
        assert!(alpha_envelope_check(&boundary, 0.4));
        let mut with_ref = linear.clone();
        with_ref.push((2f64.powi(-12), 0.0));
        assert!(alpha_envelope_check(&with_ref, 0.4));
        assert!(!alpha_envelope_check(&linear, 0.5));
    }
}
