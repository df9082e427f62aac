//! Coefficient kernels `b(x, y)`, `σ(x, y)` with their growth and modulus
//! metadata, the kernel catalog, and empirical mean-field averages.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::measure::EmpiricalMeasure;
use crate::numeric::NeumaierSum;
use crate::paths::{check_known_keys, take_scalar, InitialLaw, Params};
use crate::rng::{CounterRng, Domain};

pub type ModulusFnPtr = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum ModulusShape {
    Constant(f64),
    /// `scale * ln(1/r)` for `r <= knot`, held at `scale * ln(1/knot)` beyond.
    LogGlued {
        scale: f64,
        knot: f64,
    },
    Custom(ModulusFnPtr),
}

/// A modulus `γ: (0, ∞) -> (0, ∞)` together with its small-argument log rate
/// `δ = lim γ(x) / ln(1/x)` and its supremum on `[1, ∞)`.
#[derive(Clone)]
pub struct ModulusFn {
    shape: ModulusShape,
    delta: f64,
    bound_on_tail: f64,
}

impl fmt::Debug for ModulusFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let shape = match &self.shape {
            ModulusShape::Constant(k) => format!("Constant({k})"),
            ModulusShape::LogGlued { scale, knot } => format!("LogGlued(scale={scale}, knot={knot})"),
            ModulusShape::Custom(_) => "Custom".to_string(),
        };
        f.debug_struct("ModulusFn")
            .field("shape", &shape)
            .field("delta", &self.delta)
            .field("bound_on_tail", &self.bound_on_tail)
            .finish()
    }
}

impl ModulusFn {
    pub fn constant(value: f64) -> Self {
        assert!(value > 0.0, "modulus must be positive");
        Self { shape: ModulusShape::Constant(value), delta: 0.0, bound_on_tail: value }
    }

    /// `scale * ln(1/r)` glued to a constant at `knot < 1`.
    pub fn log_glued(scale: f64, knot: f64) -> Self {
        assert!(scale > 0.0 && knot > 0.0 && knot < 1.0);
        Self { shape: ModulusShape::LogGlued { scale, knot }, delta: scale, bound_on_tail: scale * (1.0 / knot).ln() }
    }

    pub fn custom(f: impl Fn(f64) -> f64 + Send + Sync + 'static, delta: f64, bound_on_tail: f64) -> Self {
        Self { shape: ModulusShape::Custom(Arc::new(f)), delta, bound_on_tail }
    }

    /// `γ(x)` for `x > 0`.
    #[inline]
    pub fn evaluate(&self, x: f64) -> f64 {
        match &self.shape {
            ModulusShape::Constant(k) => *k,
            ModulusShape::LogGlued { scale, knot } => scale * (1.0 / x.min(*knot)).ln(),
            ModulusShape::Custom(f) => f(x),
        }
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn bound_on_tail(&self) -> f64 {
        self.bound_on_tail
    }

    /// `r γ(r)`, extended by 0 at `r = 0`.
    #[inline]
    pub fn linear_modulus(&self, r: f64) -> f64 {
        if r == 0.0 {
            0.0
        } else {
            r * self.evaluate(r)
        }
    }

    /// `r² γ(r)`, extended by 0 at `r = 0`.
    #[inline]
    pub fn quadratic_modulus(&self, r: f64) -> f64 {
        if r == 0.0 {
            0.0
        } else {
            r * r * self.evaluate(r)
        }
    }

    /// `γ(x) / ln(1/x)`, which should approach `delta` as `x -> 0`.
    pub fn log_rate(&self, x: f64) -> f64 {
        self.evaluate(x) / (1.0 / x).ln()
    }
}

pub type PairFn = Arc<dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync>;

#[derive(Clone)]
enum KernelForm {
    /// `b = a x + c y`, `σ = s I`.
    Linear {
        a: f64,
        c: f64,
        s: f64,
    },
    /// `b_k = κ sin(y_k - x_k)`, `σ = s I`.
    Kuramoto {
        kappa: f64,
        s: f64,
    },
    /// Scalar `b = κ f(x - y)` with the glued `u ln(1/|u|)` profile, `σ = s`.
    LogLip {
        kappa: f64,
        u0: f64,
        s: f64,
    },
    /// Scalar `b = κ f(x - y)`, `σ = s0 + s1 g(x - y)` with `g(u) = u sqrt(ln(1/|u|))` glued.
    LogLipDiffusion {
        kappa: f64,
        u0: f64,
        s0: f64,
        s1: f64,
    },
    Custom {
        drift: PairFn,
        diffusion: PairFn,
        y_independent: bool,
    },
}

/// The coefficient pair `(b, σ)` and the constants it is declared to satisfy:
/// linear growth `c0` and the modulus bounds `(λ1, γ1)`, `(λ2, γ2)`.
#[derive(Clone)]
pub struct KernelPair {
    name: String,
    params: Vec<(String, f64)>,
    dim: usize,
    form: KernelForm,
    pub growth_c0: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub gamma1: ModulusFn,
    pub gamma2: ModulusFn,
}

impl fmt::Debug for KernelPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KernelPair")
            .field("kernel", &self.describe())
            .field("dim", &self.dim)
            .field("growth_c0", &self.growth_c0)
            .field("lambda1", &self.lambda1)
            .field("lambda2", &self.lambda2)
            .field("gamma1", &self.gamma1)
            .field("gamma2", &self.gamma2)
            .finish()
    }
}

/// The glued log-Lipschitz drift profile `f`.
#[inline]
pub fn loglip_profile(u: f64, u0: f64) -> f64 {
    let r = u.abs();
    if r == 0.0 {
        0.0
    } else if r <= u0 {
        loglip_near(u)
    } else {
        u * (1.0 / u0).ln()
    }
}

/// Inner branch `u ln(1/|u|)` of the log-Lipschitz profile.
#[inline]
pub fn loglip_near(u: f64) -> f64 {
    u * (1.0 / u.abs()).ln()
}

/// Outer branch `u ln(1/u0)` of the log-Lipschitz profile.
#[inline]
pub fn loglip_far(u: f64, u0: f64) -> f64 {
    u * (1.0 / u0).ln()
}

/// The glued diffusion profile `g(u) = u sqrt(ln(1/|u|))`, linear beyond `u0`.
#[inline]
pub fn loglip_diffusion_profile(u: f64, u0: f64) -> f64 {
    let r = u.abs();
    if r == 0.0 {
        0.0
    } else if r <= u0 {
        u * (1.0 / r).ln().sqrt()
    } else {
        u * (1.0 / u0).ln().sqrt()
    }
}

/// Worst-case ratio `|f(u1) - f(u2)| / (r γ(r))` of the glued profiles, attained
/// by pairs straddling zero at `r = u0`; the same constant bounds
/// `|g(u1) - g(u2)|² / (r² γ(r))`.
fn loglip_modulus_constant(u0: f64) -> f64 {
    1.0 + std::f64::consts::LN_2 / (1.0 / u0).ln()
}

const MODULUS_MARGIN: f64 = 1.05;

fn fill_scaled_identity(out: &mut [f64], dim: usize, s: f64) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for k in 0..dim {
        out[k * dim + k] = s;
    }
}

impl KernelPair {
    /// `b(x, y) = a x + c y`, `σ ≡ s I`.
    pub fn linear(a: f64, c: f64, s: f64, dim: usize) -> Self {
        let lambda1 = a.abs().max(c.abs());
        Self {
            name: "linear".into(),
            params: vec![("a".into(), a), ("c".into(), c), ("s".into(), s)],
            dim,
            form: KernelForm::Linear { a, c, s },
            growth_c0: positive_or_one(a.abs().max(c.abs()).max(s.abs() * (dim as f64).sqrt())),
            lambda1: positive_or_one(lambda1),
            lambda2: 1.0,
            gamma1: ModulusFn::constant(1.0),
            gamma2: ModulusFn::constant(1.0),
        }
    }

    /// `b_k(x, y) = κ sin(y_k - x_k)`, `σ ≡ s I`.
    pub fn kuramoto(kappa: f64, s: f64, dim: usize) -> Self {
        Self {
            name: "kuramoto".into(),
            params: vec![("kappa".into(), kappa), ("s".into(), s)],
            dim,
            form: KernelForm::Kuramoto { kappa, s },
            growth_c0: positive_or_one((dim as f64).sqrt() * (kappa.abs() + s.abs())),
            lambda1: positive_or_one(kappa.abs()),
            lambda2: 1.0,
            gamma1: ModulusFn::constant(1.0),
            gamma2: ModulusFn::constant(1.0),
        }
    }

    /// Scalar log-Lipschitz drift `κ f(x - y)` with constant diffusion `s`.
    pub fn loglip(kappa: f64, u0: f64, s: f64) -> Result<Self> {
        check_knot(u0)?;
        let l0 = (1.0 / u0).ln();
        Ok(Self {
            name: "loglip".into(),
            params: vec![("kappa".into(), kappa), ("u0".into(), u0), ("s".into(), s)],
            dim: 1,
            form: KernelForm::LogLip { kappa, u0, s },
            // |f(u)| <= u0 l0 + l0 |u| and l0 >= 1
            growth_c0: positive_or_one(kappa.abs() * l0 + s.abs()),
            lambda1: positive_or_one(kappa.abs() * loglip_modulus_constant(u0) * MODULUS_MARGIN),
            lambda2: 1.0,
            gamma1: ModulusFn::log_glued(1.0, u0),
            gamma2: ModulusFn::constant(1.0),
        })
    }

    /// Scalar log-Lipschitz drift with the diffusion `s0 + s1 g(x - y)`.
    pub fn loglip_diffusion(kappa: f64, u0: f64, s0: f64, s1: f64) -> Result<Self> {
        check_knot(u0)?;
        let l0 = (1.0 / u0).ln();
        let k = loglip_modulus_constant(u0);
        Ok(Self {
            name: "loglip-diffusion".into(),
            params: vec![("kappa".into(), kappa), ("u0".into(), u0), ("s0".into(), s0), ("s1".into(), s1)],
            dim: 1,
            form: KernelForm::LogLipDiffusion { kappa, u0, s0, s1 },
            growth_c0: positive_or_one(kappa.abs() * l0 + s0.abs() + s1.abs() * l0.sqrt()),
            lambda1: positive_or_one(kappa.abs() * k * MODULUS_MARGIN),
            // r ↦ r² γ(r) at most doubles under r = a + b relative to the sum
            lambda2: positive_or_one(s1 * s1 * k * 2.0 * MODULUS_MARGIN),
            gamma1: ModulusFn::log_glued(1.0, u0),
            gamma2: ModulusFn::log_glued(1.0, u0),
        })
    }

    /// `b ≡ 0`, `σ ≡ 0`.
    pub fn zero(dim: usize) -> Self {
        let mut k = Self::linear(0.0, 0.0, 0.0, dim);
        k.name = "zero".into();
        k.params.clear();
        k
    }

    /// Kernel from closures. `drift` writes d values, `diffusion` writes a
    /// row-major `d x d` matrix. The constants default to 1 with constant
    /// moduli and can be adjusted with [`KernelPair::with_constants`] and
    /// [`KernelPair::with_moduli`].
    pub fn custom(
        name: &str,
        dim: usize,
        drift: impl Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
        diffusion: impl Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
        y_independent: bool,
    ) -> Self {
        Self {
            name: name.into(),
            params: Vec::new(),
            dim,
            form: KernelForm::Custom { drift: Arc::new(drift), diffusion: Arc::new(diffusion), y_independent },
            growth_c0: 1.0,
            lambda1: 1.0,
            lambda2: 1.0,
            gamma1: ModulusFn::constant(1.0),
            gamma2: ModulusFn::constant(1.0),
        }
    }

    pub fn with_constants(mut self, growth_c0: f64, lambda1: f64, lambda2: f64) -> Self {
        self.growth_c0 = growth_c0;
        self.lambda1 = lambda1;
        self.lambda2 = lambda2;
        self
    }

    pub fn with_moduli(mut self, gamma1: ModulusFn, gamma2: ModulusFn) -> Self {
        self.gamma1 = gamma1;
        self.gamma2 = gamma2;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn params(&self) -> &[(String, f64)] {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Whether `b` and `σ` ignore their second argument.
    pub fn is_y_independent(&self) -> bool {
        match &self.form {
            KernelForm::Linear { c, .. } => *c == 0.0,
            KernelForm::Kuramoto { kappa, .. } => *kappa == 0.0,
            KernelForm::LogLip { kappa, .. } => *kappa == 0.0,
            KernelForm::LogLipDiffusion { kappa, s1, .. } => *kappa == 0.0 && *s1 == 0.0,
            KernelForm::Custom { y_independent, .. } => *y_independent,
        }
    }

    /// Whether `σ` is a constant matrix.
    pub fn has_constant_diffusion(&self) -> bool {
        match &self.form {
            KernelForm::Linear { .. } | KernelForm::Kuramoto { .. } | KernelForm::LogLip { .. } => true,
            KernelForm::LogLipDiffusion { s1, .. } => *s1 == 0.0,
            KernelForm::Custom { .. } => false,
        }
    }

    /// `name(k=v,...)` with parameters at full precision.
    pub fn describe(&self) -> String {
        let params: Vec<String> = self.params.iter().map(|(k, v)| format!("{k}={v:?}")).collect();
        format!("{}[d={}]({})", self.name, self.dim, params.join(","))
    }

    fn check(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::Dimension { expected: self.dim, got: v.len() });
        }
        Ok(())
    }

    /// `b(x, y)`.
    pub fn eval_drift(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        self.check(y)?;
        let mut out = vec![0.0; self.dim];
        self.drift_into(x, y, &mut out);
        Ok(out)
    }

    /// `σ(x, y)` as a row-major `d x d` matrix.
    pub fn eval_diffusion(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        self.check(y)?;
        let mut out = vec![0.0; self.dim * self.dim];
        self.diffusion_into(x, y, &mut out);
        Ok(out)
    }

    #[inline]
    pub(crate) fn drift_into(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        match &self.form {
            KernelForm::Linear { a, c, .. } => {
                for k in 0..self.dim {
                    out[k] = a * x[k] + c * y[k];
                }
            }
            KernelForm::Kuramoto { kappa, .. } => {
                for k in 0..self.dim {
                    out[k] = kappa * (y[k] - x[k]).sin();
                }
            }
            KernelForm::LogLip { kappa, u0, .. } | KernelForm::LogLipDiffusion { kappa, u0, .. } => {
                out[0] = kappa * loglip_profile(x[0] - y[0], *u0);
            }
            KernelForm::Custom { drift, .. } => drift(x, y, out),
        }
    }

    #[inline]
    pub(crate) fn diffusion_into(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        match &self.form {
            KernelForm::Linear { s, .. } | KernelForm::Kuramoto { s, .. } => fill_scaled_identity(out, self.dim, *s),
            KernelForm::LogLip { s, .. } => out[0] = *s,
            KernelForm::LogLipDiffusion { u0, s0, s1, .. } => {
                out[0] = s0 + s1 * loglip_diffusion_profile(x[0] - y[0], *u0);
            }
            KernelForm::Custom { diffusion, .. } => diffusion(x, y, out),
        }
    }
}

fn positive_or_one(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        1.0
    }
}

fn check_knot(u0: f64) -> Result<()> {
    if !(u0 > 0.0 && u0 <= (-1.0f64).exp()) {
        return Err(Error::Config(format!("loglip knot u0 must lie in (0, 1/e], got {u0}")));
    }
    Ok(())
}

/// Builds a catalog kernel from its configuration name and parameters.
/// Missing parameters take their documented defaults.
pub fn catalog_kernel(name: &str, params: &Params, dim: usize) -> Result<KernelPair> {
    let p = |key: &str, default: f64| take_scalar(params, key, Some(default));
    let scalar_only = |what: &str| -> Result<()> {
        if dim != 1 {
            return Err(Error::Config(format!("{what} is a scalar kernel; set dim = 1")));
        }
        Ok(())
    };
    let u0_default = (-2.0f64).exp();
    match name {
        "linear" => {
            check_known_keys(params, &["a", "c", "s"], "linear")?;
            Ok(KernelPair::linear(p("a", -1.0)?, p("c", 0.5)?, p("s", 0.2)?, dim))
        }
        "kuramoto" => {
            check_known_keys(params, &["kappa", "s"], "kuramoto")?;
            Ok(KernelPair::kuramoto(p("kappa", 1.0)?, p("s", 0.5)?, dim))
        }
        "loglip" => {
            check_known_keys(params, &["kappa", "u0", "s"], "loglip")?;
            scalar_only("loglip")?;
            KernelPair::loglip(p("kappa", 1.0)?, p("u0", u0_default)?, p("s", 0.5)?)
        }
        "loglip-diffusion" => {
            check_known_keys(params, &["kappa", "u0", "s0", "s1"], "loglip-diffusion")?;
            scalar_only("loglip-diffusion")?;
            KernelPair::loglip_diffusion(p("kappa", 1.0)?, p("u0", u0_default)?, p("s0", 0.5)?, p("s1", 0.5)?)
        }
        "zero" => {
            check_known_keys(params, &[], "zero")?;
            Ok(KernelPair::zero(dim))
        }
        other => Err(Error::Config(format!(
            "unknown kernel `{other}` (expected linear, kuramoto, loglip, loglip-diffusion or zero)"
        ))),
    }
}

/// Names accepted by [`catalog_kernel`].
pub const CATALOG: &[&str] = &["linear", "kuramoto", "loglip", "loglip-diffusion", "zero"];

/// How interaction averages are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Evaluation {
    /// Exploit the algebraic structure of catalog kernels (moment sums,
    /// sorted prefix sums) where available.
    #[default]
    Structured,
    /// Evaluate the kernel on every pair.
    Direct,
}

enum Prepared {
    /// All atoms coincide, or the kernel ignores `y`.
    Single(Vec<f64>),
    /// Atoms in lexicographic order.
    Pairwise(Vec<f64>),
    Mean(Vec<f64>),
    Trig {
        sin_mean: Vec<f64>,
        cos_mean: Vec<f64>,
    },
    /// Sorted scalar atoms with prefix sums.
    Sorted {
        ys: Vec<f64>,
        prefix: Vec<f64>,
    },
}

/// Interaction averages `∫ b(x, y) μ(dy)` and `∫ σ(x, y) μ(dy)` against one
/// empirical measure, prepared once and then evaluated at many `x`.
///
/// Atoms are summed in sorted order with compensated accumulation, so results
/// do not depend on how the atoms of `μ` are indexed.
pub struct MeanField<'a> {
    kernel: &'a KernelPair,
    n: usize,
    prepared: Prepared,
}

fn sorted_coordinate(measure: &EmpiricalMeasure, k: usize) -> Vec<f64> {
    let mut v: Vec<f64> = measure.iter().map(|x| x[k]).collect();
    v.sort_by(f64::total_cmp);
    v
}

fn all_identical(measure: &EmpiricalMeasure) -> bool {
    let first = measure.point(0);
    measure.iter().all(|x| x.iter().zip(first).all(|(a, b)| a.to_bits() == b.to_bits()))
}

impl<'a> MeanField<'a> {
    pub fn new(kernel: &'a KernelPair, measure: &EmpiricalMeasure, mode: Evaluation) -> Result<Self> {
        if measure.is_empty() {
            return Err(Error::arg("mean-field average over an empty measure"));
        }
        if measure.dim() != kernel.dim() {
            return Err(Error::Dimension { expected: kernel.dim(), got: measure.dim() });
        }
        let n = measure.len();
        let prepared = if kernel.is_y_independent() || all_identical(measure) {
            Prepared::Single(measure.point(0).to_vec())
        } else {
            match (mode, &kernel.form) {
                (Evaluation::Structured, KernelForm::Linear { .. }) => Prepared::Mean(
                    (0..kernel.dim)
                        .map(|k| sorted_coordinate(measure, k).into_iter().collect::<NeumaierSum>().value() / n as f64)
                        .collect(),
                ),
                (Evaluation::Structured, KernelForm::Kuramoto { .. }) => {
                    let mut sin_mean = Vec::with_capacity(kernel.dim);
                    let mut cos_mean = Vec::with_capacity(kernel.dim);
                    for k in 0..kernel.dim {
                        let ys = sorted_coordinate(measure, k);
                        sin_mean.push(ys.iter().map(|y| y.sin()).collect::<NeumaierSum>().value() / n as f64);
                        cos_mean.push(ys.iter().map(|y| y.cos()).collect::<NeumaierSum>().value() / n as f64);
                    }
                    Prepared::Trig { sin_mean, cos_mean }
                }
                (Evaluation::Structured, KernelForm::LogLip { .. } | KernelForm::LogLipDiffusion { .. }) => {
                    let ys = sorted_coordinate(measure, 0);
                    let mut prefix = Vec::with_capacity(n + 1);
                    let mut acc = NeumaierSum::new();
                    prefix.push(0.0);
                    for y in &ys {
                        acc.add(*y);
                        prefix.push(acc.value());
                    }
                    Prepared::Sorted { ys, prefix }
                }
                _ => {
                    let d = kernel.dim;
                    let mut order: Vec<usize> = (0..n).collect();
                    order.sort_by(|&i, &j| {
                        let (a, b) = (measure.point(i), measure.point(j));
                        (0..d).map(|k| a[k].total_cmp(&b[k])).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
                    });
                    Prepared::Pairwise(measure.permuted(&order).into_flat())
                }
            }
        };
        Ok(Self { kernel, n, prepared })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Writes the averaged drift (d values) and diffusion (d x d) at `x`.
    pub fn evaluate(&self, x: &[f64], drift: &mut [f64], diffusion: &mut [f64]) {
        let k = self.kernel;
        let d = k.dim;
        let n = self.n as f64;
        match &self.prepared {
            Prepared::Single(y) => {
                k.drift_into(x, y, drift);
                k.diffusion_into(x, y, diffusion);
            }
            Prepared::Mean(m) => {
                let KernelForm::Linear { a, c, s } = k.form else { unreachable!() };
                for j in 0..d {
                    drift[j] = a * x[j] + c * m[j];
                }
                fill_scaled_identity(diffusion, d, s);
            }
            Prepared::Trig { sin_mean, cos_mean } => {
                let KernelForm::Kuramoto { kappa, s } = k.form else { unreachable!() };
                for j in 0..d {
                    let (sx, cx) = x[j].sin_cos();
                    // mean of sin(y - x) = E[sin y] cos x - E[cos y] sin x
                    drift[j] = kappa * (sin_mean[j] * cx - cos_mean[j] * sx);
                }
                fill_scaled_identity(diffusion, d, s);
            }
            Prepared::Sorted { ys, prefix } => {
                let (kappa, u0, diff) = match k.form {
                    KernelForm::LogLip { kappa, u0, s } => (kappa, u0, (s, 0.0)),
                    KernelForm::LogLipDiffusion { kappa, u0, s0, s1 } => (kappa, u0, (s0, s1)),
                    _ => unreachable!(),
                };
                let x0 = x[0];
                let lo = ys.partition_point(|&y| y < x0 - u0);
                let hi = ys.partition_point(|&y| y <= x0 + u0);
                // far atoms contribute linearly in u = x - y
                let total = prefix[ys.len()];
                let far_u = {
                    let mut acc = NeumaierSum::new();
                    acc.add(lo as f64 * x0);
                    acc.add(-prefix[lo]);
                    acc.add((ys.len() - hi) as f64 * x0);
                    acc.add(-(total - prefix[hi]));
                    acc.value()
                };
                let l0 = (1.0 / u0).ln();
                let mut near_f = NeumaierSum::new();
                let mut near_g = NeumaierSum::new();
                let with_g = diff.1 != 0.0;
                for &y in &ys[lo..hi] {
                    let u = x0 - y;
                    if u == 0.0 {
                        continue;
                    }
                    let r = u.abs();
                    if r <= u0 {
                        let log_inv = (1.0 / r).ln();
                        near_f.add(u * log_inv);
                        if with_g {
                            near_g.add(u * log_inv.sqrt());
                        }
                    } else {
                        near_f.add(u * l0);
                        if with_g {
                            near_g.add(u * l0.sqrt());
                        }
                    }
                }
                drift[0] = kappa * (far_u * l0 + near_f.value()) / n;
                diffusion[0] = if with_g { diff.0 + diff.1 * (far_u * l0.sqrt() + near_g.value()) / n } else { diff.0 };
            }
            Prepared::Pairwise(points) => {
                let mut b_acc = vec![NeumaierSum::new(); d];
                let mut s_acc = vec![NeumaierSum::new(); d * d];
                let mut b = vec![0.0; d];
                let mut s = vec![0.0; d * d];
                for y in points.chunks_exact(d) {
                    k.drift_into(x, y, &mut b);
                    k.diffusion_into(x, y, &mut s);
                    for (acc, v) in b_acc.iter_mut().zip(&b) {
                        acc.add(*v);
                    }
                    for (acc, v) in s_acc.iter_mut().zip(&s) {
                        acc.add(*v);
                    }
                }
                for (o, acc) in drift.iter_mut().zip(&b_acc) {
                    *o = acc.value() / n;
                }
                for (o, acc) in diffusion.iter_mut().zip(&s_acc) {
                    *o = acc.value() / n;
                }
            }
        }
    }

    pub fn drift(&self, x: &[f64]) -> Vec<f64> {
        let d = self.kernel.dim;
        let mut b = vec![0.0; d];
        let mut s = vec![0.0; d * d];
        self.evaluate(x, &mut b, &mut s);
        b
    }

    pub fn diffusion(&self, x: &[f64]) -> Vec<f64> {
        let d = self.kernel.dim;
        let mut b = vec![0.0; d];
        let mut s = vec![0.0; d * d];
        self.evaluate(x, &mut b, &mut s);
        s
    }
}

/// `(1/N) Σ_j b(x, X^j)` over the atoms of `measure`.
pub fn mean_field_drift(kernel: &KernelPair, x: &[f64], measure: &EmpiricalMeasure) -> Result<Vec<f64>> {
    kernel.check(x)?;
    Ok(MeanField::new(kernel, measure, Evaluation::Structured)?.drift(x))
}

/// `(1/N) Σ_j σ(x, X^j)`, averaged entrywise as a `d x d` matrix.
pub fn mean_field_diffusion(kernel: &KernelPair, x: &[f64], measure: &EmpiricalMeasure) -> Result<Vec<f64>> {
    kernel.check(x)?;
    Ok(MeanField::new(kernel, measure, Evaluation::Structured)?.diffusion(x))
}

/// Largest observed ratios of each side of the growth and modulus conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub samples: usize,
    /// `max (|b| + ‖σ‖) / (c0 (1 + |x| + |y|))`.
    pub growth_ratio: f64,
    /// `max |Δb| / (λ1 (|Δx| γ1(|Δx|) + |Δy| γ1(|Δy|)))`.
    pub drift_modulus_ratio: f64,
    /// `max ‖Δσ‖² / (λ2 (|Δx|² γ2(|Δx|) + |Δy|² γ2(|Δy|)))`.
    pub diffusion_modulus_ratio: f64,
    pub tolerance: f64,
}

impl ValidationReport {
    pub fn growth_ok(&self) -> bool {
        self.growth_ratio <= 1.0 + self.tolerance
    }

    pub fn drift_modulus_ok(&self) -> bool {
        self.drift_modulus_ratio <= 1.0 + self.tolerance
    }

    pub fn diffusion_modulus_ok(&self) -> bool {
        self.diffusion_modulus_ratio <= 1.0 + self.tolerance
    }

    pub fn passed(&self) -> bool {
        self.growth_ok() && self.drift_modulus_ok() && self.diffusion_modulus_ok()
    }
}

pub const VALIDATION_TOLERANCE: f64 = 1e-6;

fn ratio(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else if den == 0.0 {
        f64::INFINITY
    } else {
        num / den
    }
}

/// Sampling check of the growth and modulus conditions the kernel declares.
///
/// Base points come from `sampler`. Half of the comparison pairs are drawn
/// independently; the rest are perturbations at scales spread log-uniformly
/// over `[1e-9, 10]` so that the small-distance behaviour of the moduli is
/// exercised.
pub fn validate_conditions(
    kernel: &KernelPair,
    sampler: &InitialLaw,
    n_samples: usize,
    seed: u64,
) -> Result<ValidationReport> {
    if n_samples == 0 {
        return Err(Error::arg("validation needs at least one sample"));
    }
    let d = kernel.dim;
    if sampler.dim() != d {
        return Err(Error::Dimension { expected: d, got: sampler.dim() });
    }
    let base = crate::paths::sample_initial(seed, sampler, 4 * n_samples)?;
    let rng = CounterRng::new(seed);
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let (mut growth, mut dmod, mut smod) = (0.0f64, 0.0f64, 0.0f64);
    let mut b1 = vec![0.0; d];
    let mut b2 = vec![0.0; d];
    let mut s1 = vec![0.0; d * d];
    let mut s2 = vec![0.0; d * d];
    for i in 0..n_samples {
        let x1 = base.points.point(4 * i).to_vec();
        let y1 = base.points.point(4 * i + 1).to_vec();
        let (u, v) = rng.uniforms(Domain::Validation, i as u32, 0, 0);
        let perturb = |p: &[f64], which: u32| -> Vec<f64> {
            let (a, _) = rng.uniforms(Domain::Validation, i as u32, which, 1);
            let scale = 10f64.powf(-9.0 + 10.0 * a);
            let dir: Vec<f64> = (0..d).map(|c| rng.normal(Domain::Validation, i as u32, which, 2 + c as u16)).collect();
            let len = norm(&dir).max(f64::MIN_POSITIVE);
            p.iter().zip(&dir).map(|(x, e)| x + scale * e / len).collect()
        };
        let (x2, y2) = if u < 0.5 {
            (base.points.point(4 * i + 2).to_vec(), base.points.point(4 * i + 3).to_vec())
        } else if v < 1.0 / 3.0 {
            (perturb(&x1, 1), y1.clone())
        } else if v < 2.0 / 3.0 {
            (x1.clone(), perturb(&y1, 2))
        } else {
            (perturb(&x1, 1), perturb(&y1, 2))
        };

        kernel.drift_into(&x1, &y1, &mut b1);
        kernel.diffusion_into(&x1, &y1, &mut s1);
        kernel.drift_into(&x2, &y2, &mut b2);
        kernel.diffusion_into(&x2, &y2, &mut s2);

        growth = growth.max(ratio(norm(&b1) + norm(&s1), kernel.growth_c0 * (1.0 + norm(&x1) + norm(&y1))));
        let dx: Vec<f64> = x1.iter().zip(&x2).map(|(a, b)| a - b).collect();
        let dy: Vec<f64> = y1.iter().zip(&y2).map(|(a, b)| a - b).collect();
        let (rx, ry) = (norm(&dx), norm(&dy));
        let db: Vec<f64> = b1.iter().zip(&b2).map(|(a, b)| a - b).collect();
        let ds: Vec<f64> = s1.iter().zip(&s2).map(|(a, b)| a - b).collect();
        dmod = dmod.max(ratio(
            norm(&db),
            kernel.lambda1 * (kernel.gamma1.linear_modulus(rx) + kernel.gamma1.linear_modulus(ry)),
        ));
        smod = smod.max(ratio(
            ds.iter().map(|a| a * a).sum::<f64>(),
            kernel.lambda2 * (kernel.gamma2.quadratic_modulus(rx) + kernel.gamma2.quadratic_modulus(ry)),
        ));
    }
    Ok(ValidationReport {
        samples: n_samples,
        growth_ratio: growth,
        drift_modulus_ratio: dmod,
        diffusion_modulus_ratio: smod,
        tolerance: VALIDATION_TOLERANCE,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud(v: &[f64]) -> EmpiricalMeasure {
        EmpiricalMeasure::from_scalars(v).unwrap()
    }

    fn naive_average(kernel: &KernelPair, x: &[f64], m: &EmpiricalMeasure) -> (Vec<f64>, Vec<f64>) {
        let d = kernel.dim();
        let mut b = vec![0.0; d];
        let mut s = vec![0.0; d * d];
        for y in m.iter() {
            let bi = kernel.eval_drift(x, y).unwrap();
            let si = kernel.eval_diffusion(x, y).unwrap();
            b.iter_mut().zip(&bi).for_each(|(a, v)| *a += v / m.len() as f64);
            s.iter_mut().zip(&si).for_each(|(a, v)| *a += v / m.len() as f64);
        }
        (b, s)
    }

    #[test]
    fn pointwise_examples() {
        let lin = KernelPair::linear(-1.0, 0.5, 0.2, 1);
        assert_eq!(lin.eval_drift(&[2.0], &[4.0]).unwrap(), vec![0.0]);
        let kur = KernelPair::kuramoto(1.0, 0.3, 1);
        assert_eq!(kur.eval_drift(&[0.0], &[0.0]).unwrap(), vec![0.0]);
        assert!(matches!(lin.eval_drift(&[1.0, 2.0], &[0.0]), Err(Error::Dimension { expected: 1, got: 2 })));
    }

    #[test]
    fn loglip_branches_meet_at_the_knot() {
        let u0 = (-2.0f64).exp();
        for u in [u0, -u0] {
            assert!((loglip_near(u) - loglip_far(u, u0)).abs() < 1e-12);
        }
        let k = KernelPair::loglip(1.0, u0, 0.5).unwrap();
        let at = k.eval_drift(&[u0], &[0.0]).unwrap()[0];
        assert!((at - 2.0 * u0).abs() < 1e-12);
        assert_eq!(loglip_profile(0.0, u0), 0.0);
        // continuity of the diffusion profile too
        let inner = u0 * (1.0 / u0).ln().sqrt();
        assert!((loglip_diffusion_profile(u0, u0) - inner).abs() < 1e-12);
        let just_past = loglip_diffusion_profile(u0 * (1.0 + 1e-12), u0);
        assert!((just_past - inner).abs() < 1e-12);
    }

    #[test]
    fn delta_measure_and_degenerate_clouds() {
        let kernels = [
            KernelPair::linear(-0.7, 0.4, 0.3, 1),
            KernelPair::kuramoto(1.3, 0.2, 1),
            KernelPair::loglip(1.0, 0.1, 0.4).unwrap(),
            KernelPair::loglip_diffusion(-1.0, 0.1, 0.4, 0.8).unwrap(),
        ];
        for k in &kernels {
            for n in [1, 7] {
                let m = cloud(&vec![0.37; n]);
                assert_eq!(mean_field_drift(k, &[-0.2], &m).unwrap(), k.eval_drift(&[-0.2], &[0.37]).unwrap());
                assert_eq!(mean_field_diffusion(k, &[-0.2], &m).unwrap(), k.eval_diffusion(&[-0.2], &[0.37]).unwrap());
            }
        }
        assert!(mean_field_drift(&kernels[0], &[0.0], &cloud(&[1.0]).permuted(&[])).is_err());
    }

    #[test]
    fn linear_average_is_affine_in_the_mean() {
        let (a, c) = (-1.0, 0.5);
        let k = KernelPair::linear(a, c, 0.2, 1);
        let ys = [0.3, -1.1, 2.4, 0.05, 7.0];
        let m: f64 = ys.iter().sum::<f64>() / ys.len() as f64;
        let got = mean_field_drift(&k, &[1.5], &cloud(&ys)).unwrap()[0];
        assert!((got - (a * 1.5 + c * m)).abs() < 1e-14);
    }

    #[test]
    fn diffusion_matrix_is_averaged_entrywise() {
        let s = KernelPair::kuramoto(1.0, 0.7, 2);
        let m = EmpiricalMeasure::new(2, vec![0.0, 1.0, 2.0, -1.0]).unwrap();
        assert_eq!(mean_field_diffusion(&s, &[0.1, 0.2], &m).unwrap(), vec![0.7, 0.0, 0.0, 0.7]);

        let k = KernelPair::loglip_diffusion(1.0, 0.1, 0.5, 0.8).unwrap();
        let (y1, y2) = (0.03, 1.4);
        let two = cloud(&[y1, y2]);
        let want = 0.5 * (k.eval_diffusion(&[0.0], &[y1]).unwrap()[0] + k.eval_diffusion(&[0.0], &[y2]).unwrap()[0]);
        assert!((mean_field_diffusion(&k, &[0.0], &two).unwrap()[0] - want).abs() < 1e-15);
    }

    #[test]
    fn structured_paths_match_pairwise_sums() {
        let u0 = (-2.0f64).exp();
        let kernels = [KernelPair::linear(-1.0, 0.5, 0.2, 2), KernelPair::kuramoto(0.8, 0.3, 2)];
        let pts: Vec<f64> = (0..40).map(|i| ((i * 37 % 23) as f64 - 11.0) * 0.21).collect();
        let m2 = EmpiricalMeasure::new(2, pts.clone()).unwrap();
        for k in &kernels {
            for x in [[0.1, -0.4], [2.0, 3.0]] {
                let fast = MeanField::new(k, &m2, Evaluation::Structured).unwrap();
                let slow = MeanField::new(k, &m2, Evaluation::Direct).unwrap();
                let (nb, ns) = naive_average(k, &x, &m2);
                for (a, b) in fast.drift(&x).iter().zip(&slow.drift(&x)).chain(fast.drift(&x).iter().zip(&nb)) {
                    assert!((a - b).abs() < 1e-12, "{a} vs {b}");
                }
                for (a, b) in fast.diffusion(&x).iter().zip(&ns) {
                    assert!((a - b).abs() < 1e-14);
                }
            }
        }
        // scalar log-Lipschitz kernels: many atoms inside and outside the window
        let pts1: Vec<f64> = (0..200).map(|i| (((i * 7919) % 401) as f64 - 200.0) * 0.004).collect();
        let m1 = cloud(&pts1);
        for k in
            [KernelPair::loglip(1.0, u0, 0.5).unwrap(), KernelPair::loglip_diffusion(-0.6, 0.05, 0.5, 0.9).unwrap()]
        {
            let fast = MeanField::new(&k, &m1, Evaluation::Structured).unwrap();
            for x in [-1.0, -0.13, 0.0, 0.0041, 0.4, 3.0] {
                let (nb, ns) = naive_average(&k, &[x], &m1);
                assert!((fast.drift(&[x])[0] - nb[0]).abs() < 1e-12);
                assert!((fast.diffusion(&[x])[0] - ns[0]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn average_does_not_depend_on_atom_order() {
        let k = KernelPair::loglip(1.0, 0.1, 0.5).unwrap();
        let pts: Vec<f64> = (0..50).map(|i| ((i * 13 % 50) as f64) * 0.01).collect();
        let m = cloud(&pts);
        let order: Vec<usize> = (0..50).rev().collect();
        let p = m.permuted(&order);
        for mode in [Evaluation::Structured, Evaluation::Direct] {
            let a = MeanField::new(&k, &m, mode).unwrap().drift(&[0.21]);
            let b = MeanField::new(&k, &p, mode).unwrap().drift(&[0.21]);
            assert_eq!(a[0].to_bits(), b[0].to_bits());
        }
    }

    #[test]
    fn catalog_round_trip_and_errors() {
        for name in CATALOG {
            let k = catalog_kernel(name, &Params::new(), 1).unwrap();
            assert_eq!(k.name(), *name);
        }
        let p: Params = [("a".to_string(), vec![-2.0]), ("s".to_string(), vec![1.0])].into();
        let k = catalog_kernel("linear", &p, 1).unwrap();
        assert_eq!(k.eval_drift(&[1.0], &[0.0]).unwrap(), vec![-2.0]);
        assert!(matches!(catalog_kernel("linear", &[("b".to_string(), vec![1.0])].into(), 1), Err(Error::Config(_))));
        assert!(matches!(catalog_kernel("gravity", &Params::new(), 1), Err(Error::Config(_))));
        assert!(catalog_kernel("loglip", &Params::new(), 2).is_err());
        assert!(catalog_kernel("loglip", &[("u0".to_string(), vec![0.5])].into(), 1).is_err());
    }

    #[test]
    fn declared_log_rates_match_observed_limits() {
        for name in CATALOG {
            let k = catalog_kernel(name, &Params::new(), 1).unwrap();
            for g in [&k.gamma1, &k.gamma2] {
                let observed = g.log_rate(1e-9);
                let tol = 0.05 * g.delta().max(1.0);
                assert!((observed - g.delta()).abs() <= tol, "{name}: {observed} vs {}", g.delta());
                for x in [1e-3, 1e-6] {
                    assert!((g.log_rate(x) - g.delta()).abs() <= 0.2 * g.delta().max(1.0));
                }
            }
        }
    }

    #[test]
    fn moduli_are_positive_continuous_and_bounded_on_the_tail() {
        for g in [ModulusFn::constant(0.5), ModulusFn::log_glued(1.0, (-2.0f64).exp()), ModulusFn::log_glued(2.0, 0.3)]
        {
            let mut prev = g.evaluate(1e-9);
            let mut max_jump = 0.0f64;
            for i in 1..=20_000 {
                let x = 1e-9 + i as f64 * 5e-4;
                let v = g.evaluate(x);
                assert!(v > 0.0);
                if x >= 1.0 {
                    assert!(v <= g.bound_on_tail() + 1e-15);
                }
                if x > 1e-2 {
                    max_jump = max_jump.max((v - prev).abs());
                }
                prev = v;
            }
            assert!(max_jump < 0.5, "{g:?}");
        }
    }

    #[test]
    fn catalog_kernels_satisfy_their_declared_conditions() {
        let law = InitialLaw::Gaussian { mean: vec![0.0], cov: vec![1.0] };
        for name in CATALOG {
            let k = catalog_kernel(name, &Params::new(), 1).unwrap();
            let r = validate_conditions(&k, &law, 20_000, 11).unwrap();
            assert!(r.passed(), "{name}: {r:?}");
        }
        let law2 = InitialLaw::Gaussian { mean: vec![0.0, 1.0], cov: vec![1.0, 0.0, 0.0, 2.0] };
        for k in [KernelPair::linear(-1.0, 0.5, 0.2, 2), KernelPair::kuramoto(1.0, 0.5, 2)] {
            assert!(validate_conditions(&k, &law2, 5_000, 3).unwrap().passed());
        }
    }

    #[test]
    fn understated_constants_are_caught() {
        let law = InitialLaw::Gaussian { mean: vec![0.0], cov: vec![1.0] };
        let k = KernelPair::loglip(1.0, (-2.0f64).exp(), 0.5).unwrap();
        // a Lipschitz modulus cannot dominate the log-Lipschitz drift
        let lip = k.clone().with_moduli(ModulusFn::constant(1.0), ModulusFn::constant(1.0));
        assert!(!validate_conditions(&lip, &law, 20_000, 5).unwrap().drift_modulus_ok());
        let (l1, l2) = (k.lambda1, k.lambda2);
        let tight = k.with_constants(0.1, l1, l2);
        assert!(!validate_conditions(&tight, &law, 1_000, 5).unwrap().growth_ok());
    }
}
