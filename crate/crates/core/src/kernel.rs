//! ψ-kernels, open parameter intervals and weighted samples.
//!
//! A kernel ψ(x, t) maps an observation and a parameter to a real number.
//! For every admissible observation the map `t ↦ ψ(x, t)` is expected to go
//! from positive to negative somewhere inside the parameter interval; the
//! estimator of a weighted sample is the point where `Σ λᵢ ψ(xᵢ, t)` does so.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// A nondegenerate open interval `(lo, hi)`; endpoints may be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpenInterval {
    lo: f64,
    hi: f64,
}

impl OpenInterval {
    pub const REAL: OpenInterval = OpenInterval {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };

    pub const POSITIVE: OpenInterval = OpenInterval {
        lo: 0.0,
        hi: f64::INFINITY,
    };

    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || lo >= hi || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
            return Err(Error::InvalidArgument(format!(
                "({lo}, {hi}) is not a nondegenerate open interval"
            )));
        }
        Ok(OpenInterval { lo, hi })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn contains(&self, t: f64) -> bool {
        self.lo < t && t < self.hi
    }

    /// Maps `u ∈ (0, 1)` increasingly onto the interval.
    ///
    /// Finite sides are reached affinely, infinite sides through `u/(1-u)`
    /// type stretches, so a uniform `u` grid covers unbounded intervals too.
    pub fn from_unit(&self, u: f64) -> f64 {
        let u = u.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
        match (self.lo.is_finite(), self.hi.is_finite()) {
            (true, true) => self.lo + u * (self.hi - self.lo),
            (true, false) => self.lo + u / (1.0 - u),
            (false, true) => self.hi - (1.0 - u) / u,
            (false, false) => (u - 0.5) / (u * (1.0 - u)),
        }
    }

    /// `n` increasing points strictly inside the interval.
    pub fn probe_grid(&self, n: usize) -> Vec<f64> {
        (1..=n)
            .map(|i| self.from_unit(i as f64 / (n + 1) as f64))
            .filter(|t| self.contains(*t))
            .collect()
    }

    /// Default starting point for bracket searches.
    pub fn seed(&self) -> f64 {
        match (self.lo.is_finite(), self.hi.is_finite()) {
            (true, true) => self.lo + 0.5 * (self.hi - self.lo),
            (true, false) => self.lo + 1.0,
            (false, true) => self.hi - 1.0,
            (false, false) => 0.0,
        }
    }
}

impl fmt::Display for OpenInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.lo, self.hi)
    }
}

/// Finite-witness approximation of the interior of `conv(θ₁(X))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Hull {
    Interval(OpenInterval),
    Empty,
}

impl Hull {
    pub fn interval(&self) -> Option<OpenInterval> {
        match self {
            Hull::Interval(i) => Some(*i),
            Hull::Empty => None,
        }
    }
}

pub type EvalFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
pub type MapFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type DomainFn = Arc<dyn Fn(f64) -> bool + Send + Sync>;

/// A function ψ(x, t) on `X × Θ` together with optional closed forms.
#[derive(Clone)]
pub struct PsiKernel {
    name: String,
    theta: OpenInterval,
    eval: EvalFn,
    theta1: Option<MapFn>,
    d2: Option<EvalFn>,
    domain: DomainFn,
}

impl fmt::Debug for PsiKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PsiKernel")
            .field("name", &self.name)
            .field("theta", &self.theta)
            .field("theta1", &self.theta1.is_some())
            .field("d2", &self.d2.is_some())
            .finish()
    }
}

impl PsiKernel {
    /// A kernel with every real observation admissible and no closed forms.
    pub fn new<F>(name: impl Into<String>, theta: OpenInterval, eval: F) -> Self
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        PsiKernel {
            name: name.into(),
            theta,
            eval: Arc::new(eval),
            theta1: None,
            d2: None,
            domain: Arc::new(|x: f64| x.is_finite()),
        }
    }

    pub fn with_theta1<F>(mut self, theta1: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        self.theta1 = Some(Arc::new(theta1));
        self
    }

    pub fn with_d2<F>(mut self, d2: F) -> Self
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        self.d2 = Some(Arc::new(d2));
        self
    }

    /// Restricts the admissible observations; non-finite values are always rejected.
    pub fn with_domain<F>(mut self, domain: F) -> Self
    where
        F: Fn(f64) -> bool + Send + Sync + 'static,
    {
        self.domain = Arc::new(move |x: f64| x.is_finite() && domain(x));
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn theta(&self) -> OpenInterval {
        self.theta
    }

    pub fn eval(&self, x: f64, t: f64) -> f64 {
        (self.eval)(x, t)
    }

    pub fn has_theta1(&self) -> bool {
        self.theta1.is_some()
    }

    pub fn closed_theta1(&self, x: f64) -> Option<f64> {
        self.theta1.as_ref().map(|f| f(x))
    }

    pub fn has_d2(&self) -> bool {
        self.d2.is_some()
    }

    pub fn closed_d2(&self, x: f64, t: f64) -> Option<f64> {
        self.d2.as_ref().map(|f| f(x, t))
    }

    pub fn admits(&self, x: f64) -> bool {
        (self.domain)(x)
    }

    pub fn check_observation(&self, x: f64) -> Result<()> {
        if self.admits(x) {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "observation {x} is not admissible for kernel `{}`",
                self.name
            )))
        }
    }
}

/// Observations with nonnegative weights, at least one of them positive.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSample {
    xs: Vec<f64>,
    weights: Vec<f64>,
}

impl WeightedSample {
    pub fn new(xs: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if xs.is_empty() {
            return Err(Error::EmptyData);
        }
        if xs.len() != weights.len() {
            return Err(Error::InvalidArgument(format!(
                "{} observations but {} weights",
                xs.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "weight {w} is not a finite nonnegative number"
            )));
        }
        if weights.iter().all(|w| *w == 0.0) {
            return Err(Error::InvalidArgument("all weights are zero".into()));
        }
        Ok(WeightedSample { xs, weights })
    }

    pub fn uniform(xs: Vec<f64>) -> Result<Self> {
        let weights = uniform_weights(xs.len().max(1))?;
        Self::new(xs, weights)
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn is_uniform(&self) -> bool {
        self.weights.iter().all(|w| *w == self.weights[0])
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.xs.iter().copied().zip(self.weights.iter().copied())
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// The same observations with every weight multiplied by `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidArgument(format!("scale {c} must be positive")));
        }
        Self::new(self.xs.clone(), self.weights.iter().map(|w| w * c).collect())
    }

    pub fn concat(&self, other: &WeightedSample) -> WeightedSample {
        let mut xs = self.xs.clone();
        xs.extend_from_slice(&other.xs);
        let mut weights = self.weights.clone();
        weights.extend_from_slice(&other.weights);
        WeightedSample { xs, weights }
    }
}

pub fn uniform_weights(n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample size must be at least 1".into()));
    }
    Ok(vec![1.0; n])
}

/// How `weighted_sum` accumulates its terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Summation {
    #[default]
    LeftToRight,
    /// Neumaier's compensated summation.
    Compensated,
}

/// `Σ λᵢ ψ(xᵢ, t)` accumulated left to right. Zero-weight terms are skipped.
pub fn weighted_sum(kernel: &PsiKernel, sample: &WeightedSample, t: f64) -> Result<f64> {
    weighted_sum_with(kernel, sample, t, Summation::LeftToRight)
}

pub fn weighted_sum_with(
    kernel: &PsiKernel,
    sample: &WeightedSample,
    t: f64,
    mode: Summation,
) -> Result<f64> {
    if !kernel.theta.contains(t) {
        return Err(Error::Domain(format!(
            "parameter {t} lies outside {}",
            kernel.theta
        )));
    }
    let mut sum = 0.0;
    let mut comp = 0.0;
    for (x, w) in sample.iter() {
        kernel.check_observation(x)?;
        if w == 0.0 {
            continue;
        }
        let v = kernel.eval(x, t);
        if v.is_nan() {
            return Err(Error::NonFinite { x, t });
        }
        let term = w * v;
        match mode {
            Summation::LeftToRight => sum += term,
            Summation::Compensated => {
                let s = sum + term;
                if sum.abs() >= term.abs() {
                    comp += (sum - s) + term;
                } else {
                    comp += (term - s) + sum;
                }
                sum = s;
            }
        }
    }
    let total = sum + comp;
    if total.is_nan() {
        // +inf and -inf terms cancelled; the sign is undefined.
        return Err(Error::NonFinite { x: f64::NAN, t });
    }
    Ok(total)
}

/// `(min θ₁, max θ₁)` over the witnesses, or `Empty` when all values coincide.
pub fn empirical_theta1_hull(kernel: &PsiKernel, witnesses: &[f64]) -> Result<Hull> {
    let Some(theta1) = kernel.theta1.as_ref() else {
        return Err(Error::MissingClosedForm(kernel.name.clone()));
    };
    if witnesses.is_empty() {
        return Err(Error::EmptyData);
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &x in witnesses {
        kernel.check_observation(x)?;
        let v = theta1(x);
        lo = lo.min(v);
        hi = hi.max(v);
    }
    hull_from_bounds(lo, hi)
}

pub(crate) fn hull_from_bounds(lo: f64, hi: f64) -> Result<Hull> {
    if lo.is_nan() || hi.is_nan() {
        return Err(Error::Domain("theta1 evaluated to NaN".into()));
    }
    if lo < hi {
        Ok(Hull::Interval(OpenInterval::new(lo, hi)?))
    } else {
        Ok(Hull::Empty)
    }
}
