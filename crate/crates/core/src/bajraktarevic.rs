//! Bajraktarević-type kernels `ψ(x, t) = p(x) (F(x) - f(t))`, their Möbius
//! transforms, and numerical tests for the Möbius relation.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exprparse::{eval_expr, Expr};
use crate::kernel::{OpenInterval, PsiKernel, WeightedSample};
use crate::solver::{generalized_left_inverse, SolverConfig};

pub type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Number of equispaced probes used for monotonicity and sign checks.
pub const PROBE_GRID: usize = 513;
const RANDOM_PAIRS: usize = 100;
const PROBE_SEED: u64 = 0x00b4_17a4_7e01;

#[derive(Clone)]
pub struct BajraktarevicSpec {
    f: RealFn,
    p: RealFn,
    big_f: RealFn,
    f_prime: Option<RealFn>,
    theta: OpenInterval,
}

impl fmt::Debug for BajraktarevicSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BajraktarevicSpec")
            .field("theta", &self.theta)
            .field("f_prime", &self.f_prime.is_some())
            .finish_non_exhaustive()
    }
}

impl BajraktarevicSpec {
    /// `f` is the link on Θ, `p` the positive weight and `big_f` the target map
    /// on observations.
    pub fn new<A, B, C>(f: A, p: B, big_f: C, theta: OpenInterval) -> Self
    where
        A: Fn(f64) -> f64 + Send + Sync + 'static,
        B: Fn(f64) -> f64 + Send + Sync + 'static,
        C: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        BajraktarevicSpec {
            f: Arc::new(f),
            p: Arc::new(p),
            big_f: Arc::new(big_f),
            f_prime: None,
            theta,
        }
    }

    /// Builds the functions from expressions: `f` in `t`, `p` and `F` in `x`.
    /// Evaluation failures surface as NaN and are caught by the callers.
    pub fn from_exprs(f: &Expr, p: &Expr, big_f: &Expr, theta: OpenInterval) -> Self {
        let (f, p, big_f) = (f.clone(), p.clone(), big_f.clone());
        Self::new(
            move |t| eval_expr(&f, 0.0, t).unwrap_or(f64::NAN),
            move |x| eval_expr(&p, x, 0.0).unwrap_or(f64::NAN),
            move |x| eval_expr(&big_f, x, 0.0).unwrap_or(f64::NAN),
            theta,
        )
    }

    pub fn with_f_prime<D>(mut self, d: D) -> Self
    where
        D: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        self.f_prime = Some(Arc::new(d));
        self
    }

    pub fn theta(&self) -> OpenInterval {
        self.theta
    }

    pub fn f(&self, t: f64) -> f64 {
        (self.f)(t)
    }

    pub fn p(&self, x: f64) -> f64 {
        (self.p)(x)
    }

    pub fn big_f(&self, x: f64) -> f64 {
        (self.big_f)(x)
    }

    pub fn f_prime(&self, t: f64) -> Option<f64> {
        self.f_prime.as_ref().map(|d| d(t))
    }

    /// Checks strict increase of `f` on probes, and `p(x) > 0`,
    /// `F(x) ∈ conv f(Θ)` on the given observations.
    pub fn validate(&self, observations: &[f64], cfg: &SolverConfig) -> Result<()> {
        if !sampled_increasing(|t| self.f(t), self.theta)? {
            return Err(Error::InvalidArgument(
                "f is not strictly increasing on the probe grid".into(),
            ));
        }
        for &x in observations {
            let p = self.p(x);
            if !(p > 0.0 && p.is_finite()) {
                return Err(Error::Domain(format!("p({x}) = {p} is not positive")));
            }
            self.theta1(x, cfg)?;
        }
        Ok(())
    }

    /// `f^(-1)(F(x))`.
    pub fn theta1(&self, x: f64, cfg: &SolverConfig) -> Result<f64> {
        let f = self.f.clone();
        generalized_left_inverse(move |t| f(t), self.theta, self.big_f(x), cfg)
    }
}

/// Strict increase on the probe grid and on seeded random pairs.
pub fn sampled_increasing(f: impl Fn(f64) -> f64, theta: OpenInterval) -> Result<bool> {
    let eval = |t: f64| {
        let v = f(t);
        if v.is_nan() {
            Err(Error::Domain(format!("function is undefined at {t}")))
        } else {
            Ok(v)
        }
    };
    let mut prev = f64::NEG_INFINITY;
    for (i, t) in theta.probe_grid(PROBE_GRID).into_iter().enumerate() {
        let v = eval(t)?;
        if i > 0 && v <= prev {
            return Ok(false);
        }
        prev = v;
    }
    // Random pairs stay within the span of the grid, where f64 still resolves the values.
    let u_lo = 1.0 / (PROBE_GRID + 1) as f64;
    let u_hi = 1.0 - u_lo;
    let mut rng = ChaCha8Rng::seed_from_u64(PROBE_SEED);
    for _ in 0..RANDOM_PAIRS {
        let a = theta.from_unit(rng.random_range(u_lo..u_hi));
        let b = theta.from_unit(rng.random_range(u_lo..u_hi));
        if a == b || !theta.contains(a) || !theta.contains(b) {
            continue;
        }
        let (s, u) = if a < b { (a, b) } else { (b, a) };
        if eval(s)? >= eval(u)? {
            return Ok(false);
        }
    }
    Ok(true)
}

pub fn as_kernel(spec: &BajraktarevicSpec) -> PsiKernel {
    let (p, big_f, f) = (spec.p.clone(), spec.big_f.clone(), spec.f.clone());
    let eval = move |x: f64, t: f64| p(x) * (big_f(x) - f(t));

    let s = spec.clone();
    let cfg = SolverConfig::default();
    let theta1 = move |x: f64| s.theta1(x, &cfg).unwrap_or(f64::NAN);

    let (p, big_f) = (spec.p.clone(), spec.big_f.clone());
    let domain = move |x: f64| {
        let w = p(x);
        w > 0.0 && w.is_finite() && big_f(x).is_finite()
    };

    let mut k = PsiKernel::new("bajraktarevic", spec.theta, eval)
        .with_theta1(theta1)
        .with_domain(domain);
    if let Some(d) = spec.f_prime.clone() {
        let p = spec.p.clone();
        k = k.with_d2(move |x, t| -p(x) * d(t));
    }
    k
}

/// `f^(-1)( Σλᵢp(xᵢ)F(xᵢ) / Σλᵢp(xᵢ) )`.
pub fn estimate(spec: &BajraktarevicSpec, sample: &WeightedSample, cfg: &SolverConfig) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, w) in sample.iter() {
        let p = spec.p(x);
        let fx = spec.big_f(x);
        if !(p > 0.0 && p.is_finite() && fx.is_finite()) {
            return Err(Error::Domain(format!("observation {x} is not admissible")));
        }
        num += w * p * fx;
        den += w * p;
    }
    if !(den > 0.0) {
        return Err(Error::InvalidArgument("total p-weight is not positive".into()));
    }
    let f = spec.f.clone();
    generalized_left_inverse(move |t| f(t), spec.theta, num / den, cfg)
}

/// Coefficients of `t ↦ (a t + b) / (c t + d)` with `ad > bc`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MobiusCoefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl MobiusCoefficients {
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Result<Self> {
        if ![a, b, c, d].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("coefficients must be finite".into()));
        }
        if a * d - b * c <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "ad - bc = {} must be positive",
                a * d - b * c
            )));
        }
        Ok(MobiusCoefficients { a, b, c, d })
    }

    pub fn determinant(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    pub fn apply(&self, v: f64) -> f64 {
        (self.a * v + self.b) / (self.c * v + self.d)
    }

    fn negated(&self) -> Self {
        MobiusCoefficients {
            a: -self.a,
            b: -self.b,
            c: -self.c,
            d: -self.d,
        }
    }
}

/// Transformed spec `g = (af+b)/(cf+d)`, `G = (aF+b)/(cF+d)`, `q = (cF+d) p`.
///
/// When `cf + d` is negative on the whole probe grid the coefficients are
/// negated first; this leaves `g` and `G` unchanged and keeps `q` positive.
pub fn apply_mobius(
    spec: &BajraktarevicSpec,
    m: MobiusCoefficients,
    witnesses: &[f64],
) -> Result<BajraktarevicSpec> {
    let grid = spec.theta.probe_grid(PROBE_GRID);
    let denom = |m: &MobiusCoefficients, t: f64| m.c * spec.f(t) + m.d;
    let positive = grid.iter().all(|&t| denom(&m, t) > 0.0);
    let negative = grid.iter().all(|&t| denom(&m, t) < 0.0);
    let m = match (positive, negative) {
        (true, _) => m,
        (_, true) => m.negated(),
        _ => return Err(Error::SignViolation),
    };
    for &x in witnesses {
        if !(m.c * spec.big_f(x) + m.d > 0.0) {
            return Err(Error::SignViolation);
        }
    }
    let (f, big_f, p) = (spec.f.clone(), spec.big_f.clone(), spec.p.clone());
    let g = move |t: f64| m.apply(f(t));
    let big_f2 = big_f.clone();
    let big_g = move |x: f64| m.apply(big_f2(x));
    let q = move |x: f64| (m.c * big_f(x) + m.d) * p(x);
    let mut out = BajraktarevicSpec::new(g, q, big_g, spec.theta);
    if let Some(d) = spec.f_prime.clone() {
        let f = spec.f.clone();
        out = out.with_f_prime(move |t| {
            let den = m.c * f(t) + m.d;
            m.determinant() * d(t) / (den * den)
        });
    }
    Ok(out)
}

/// Default finite-difference step for the Schwarzian at `s`.
pub fn schwarzian_step(s: f64) -> f64 {
    1e-2f64.max(1e-2 * s.abs())
}

struct Derivatives {
    d1: f64,
    d2: f64,
    d3: f64,
}

fn derivatives(h: &impl Fn(f64) -> f64, s: f64, step: f64) -> Result<Derivatives> {
    let v = |k: f64| {
        let y = h(s + k * step);
        if y.is_finite() {
            Ok(y)
        } else {
            Err(Error::Domain(format!(
                "function is not finite at {}",
                s + k * step
            )))
        }
    };
    let (m3, m2, m1, z, p1, p2, p3) = (v(-3.0)?, v(-2.0)?, v(-1.0)?, v(0.0)?, v(1.0)?, v(2.0)?, v(3.0)?);
    let d1 = (-p2 + 8.0 * p1 - 8.0 * m1 + m2) / (12.0 * step);
    let d2 = (-p2 + 16.0 * p1 - 30.0 * z + 16.0 * m1 - m2) / (12.0 * step * step);
    // Fourth-order stencil; the three-point-per-side version keeps h‴ at the
    // same accuracy as h′ and h″.
    let d3 = (-p3 + 8.0 * p2 - 13.0 * p1 + 13.0 * m1 - 8.0 * m2 + m3) / (8.0 * step * step * step);
    Ok(Derivatives { d1, d2, d3 })
}

/// Finite-difference Schwarzian `h‴/h′ - 1.5 (h″/h′)²` at `s`.
pub fn schwarzian(h: impl Fn(f64) -> f64, s: f64, step: f64) -> Result<f64> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidArgument(format!("step {step} must be positive")));
    }
    let d = derivatives(&h, s, step)?;
    if d.d1.abs() <= 1e-8 {
        return Err(Error::DegenerateDerivative { at: s });
    }
    let r = d.d2 / d.d1;
    Ok(d.d3 / d.d1 - 1.5 * r * r)
}

/// Schwarzian of `h = g ∘ f⁻¹` at `f(t)`, via `S_g = (S_h ∘ f) f′² + S_f`.
pub fn relative_schwarzian(f: impl Fn(f64) -> f64, g: impl Fn(f64) -> f64, t: f64, step: f64) -> Result<f64> {
    let df = derivatives(&f, t, step)?.d1;
    if df.abs() <= 1e-8 {
        return Err(Error::DegenerateDerivative { at: t });
    }
    Ok((schwarzian(&g, t, step)? - schwarzian(&f, t, step)?) / (df * df))
}

#[derive(Debug, Clone, PartialEq)]
pub enum MobiusFit {
    Fit {
        coefficients: MobiusCoefficients,
        max_residual: f64,
    },
    NoFit {
        max_residual: f64,
        reason: String,
    },
}

impl MobiusFit {
    pub fn is_fit(&self) -> bool {
        matches!(self, MobiusFit::Fit { .. })
    }
}

fn det3(m: [[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Fits `(c f + d) g = a f + b` through three anchors (first, middle, last
/// probe) and accepts when the relation holds at every probe.
///
/// The coefficient vector has unit norm and is signed so that `cf + d > 0`
/// at the first anchor. Negating all four coefficients leaves `ad - bc`
/// unchanged, so a relation with `ad ≤ bc` (a decreasing transform) is
/// reported as `NoFit`.
pub fn mobius_fit(f_vals: &[(f64, f64)], g_vals: &[(f64, f64)]) -> Result<MobiusFit> {
    if f_vals.len() != g_vals.len() || f_vals.len() < 4 {
        return Err(Error::InvalidArgument("need at least 4 paired probes".into()));
    }
    if f_vals.iter().zip(g_vals).any(|(a, b)| a.0 != b.0) {
        return Err(Error::InvalidArgument("f and g probes use different t".into()));
    }
    let mut fs: Vec<f64> = f_vals.iter().map(|p| p.1).collect();
    fs.sort_by(f64::total_cmp);
    if fs.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidArgument("f values must be distinct".into()));
    }
    if f_vals.iter().chain(g_vals).any(|p| !p.1.is_finite()) {
        return Err(Error::Domain("probe values must be finite".into()));
    }
    let n = f_vals.len();
    let anchors = [0, n / 2, n - 1];
    // Row (f, 1, -fg, -g) · (a, b, c, d) = 0.
    let rows: Vec<[f64; 4]> = anchors
        .iter()
        .map(|&i| {
            let (f, g) = (f_vals[i].1, g_vals[i].1);
            [f, 1.0, -f * g, -g]
        })
        .collect();
    let mut v = [0.0; 4];
    for (j, slot) in v.iter_mut().enumerate() {
        let mut minor = [[0.0; 3]; 3];
        for (r, row) in rows.iter().enumerate() {
            let mut c = 0;
            for (k, val) in row.iter().enumerate() {
                if k != j {
                    minor[r][c] = *val;
                    c += 1;
                }
            }
        }
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        *slot = sign * det3(minor);
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::DegenerateProbes);
    }
    for x in v.iter_mut() {
        *x /= norm;
    }
    let [mut a, mut b, mut c, mut d] = v;
    if c * f_vals[0].1 + d < 0.0 {
        (a, b, c, d) = (-a, -b, -c, -d);
    }
    let mut max_residual: f64 = 0.0;
    let mut ok = true;
    for (fp, gp) in f_vals.iter().zip(g_vals) {
        let (f, g) = (fp.1, gp.1);
        let r = ((c * f + d) * g - (a * f + b)).abs();
        let scale = 1f64.max((c * f * g).abs() + (d * g).abs() + (a * f).abs() + b.abs());
        max_residual = max_residual.max(r / scale);
        if r > 1e-8 * scale {
            ok = false;
        }
    }
    if !ok {
        return Ok(MobiusFit::NoFit {
            max_residual,
            reason: "relation fitted on the anchors fails at other probes".into(),
        });
    }
    match MobiusCoefficients::new(a, b, c, d) {
        Ok(coefficients) => Ok(MobiusFit::Fit {
            coefficients,
            max_residual,
        }),
        Err(_) => Ok(MobiusFit::NoFit {
            max_residual,
            reason: "fitted relation has ad - bc <= 0".into(),
        }),
    }
}

/// Determinant of the 4×4 matrix with rows `1`, `f`, `g`, `f·g` over four
/// probes. It vanishes exactly when `b + a f - d g - c f g = 0` has a
/// nontrivial solution on the probes.
pub fn determinant_test(f: [f64; 4], g: [f64; 4]) -> f64 {
    let mut m = [[0.0; 4]; 4];
    for j in 0..4 {
        m[0][j] = 1.0;
        m[1][j] = f[j];
        m[2][j] = g[j];
        m[3][j] = f[j] * g[j];
    }
    // Gaussian elimination with partial pivoting.
    let mut det = 1.0;
    for col in 0..4 {
        let piv = (col..4)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        if m[piv][col] == 0.0 {
            return 0.0;
        }
        if piv != col {
            m.swap(piv, col);
            det = -det;
        }
        det *= m[col][col];
        for r in col + 1..4 {
            let factor = m[r][col] / m[col][col];
            for k in col..4 {
                m[r][k] -= factor * m[col][k];
            }
        }
    }
    det
}

/// Product of the Euclidean row norms, an upper bound for `|det|`.
pub fn determinant_scale(f: [f64; 4], g: [f64; 4]) -> f64 {
    let norm = |row: [f64; 4]| row.iter().map(|v| v * v).sum::<f64>().sqrt();
    let fg = [f[0] * g[0], f[1] * g[1], f[2] * g[2], f[3] * g[3]];
    2.0 * norm(f) * norm(g) * norm(fg)
}

/// Whether all witnesses share the same single-observation estimate, i.e.
/// the empirical hull of `f^(-1)(F(x))` is empty.
pub fn theta_psi_empty(spec: &BajraktarevicSpec, witnesses: &[f64], cfg: &SolverConfig) -> Result<bool> {
    if witnesses.is_empty() {
        return Err(Error::EmptyData);
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &x in witnesses {
        let t = spec.theta1(x, cfg)?;
        lo = lo.min(t);
        hi = hi.max(t);
    }
    Ok(hi - lo <= 10.0 * cfg.tolerance_at(0.5 * (lo + hi)))
}
