//! Sign-change search on open, possibly unbounded, parameter intervals.
//!
//! The search only ever looks at signs. A value of exactly zero counts as
//! non-positive, so the upper end of the bracket moves onto it. This makes
//! the routine correct for kernels that jump across zero without vanishing.

use crate::error::{Error, Result};
use crate::kernel::{weighted_sum_with, OpenInterval, PsiKernel, Summation, WeightedSample};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_expand: usize,
    pub max_bisect: usize,
    pub seed_guess: Option<f64>,
    pub summation: Summation,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            abs_tol: 1e-12,
            rel_tol: 1e-12,
            max_expand: 200,
            max_bisect: 200,
            seed_guess: None,
            summation: Summation::LeftToRight,
        }
    }
}

impl SolverConfig {
    pub fn with_tol(tol: f64) -> Self {
        SolverConfig {
            abs_tol: tol,
            rel_tol: tol,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return Err(Error::InvalidArgument("tolerances must be positive".into()));
        }
        Ok(())
    }

    /// Target bracket width around `theta`.
    pub fn tolerance_at(&self, theta: f64) -> f64 {
        self.abs_tol.max(self.rel_tol * theta.abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    NoPositivePart,
    NoNegativePart,
    MaxIterations,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Converged => "Converged",
            SolveStatus::NoPositivePart => "NoPositivePart",
            SolveStatus::NoNegativePart => "NoNegativePart",
            SolveStatus::MaxIterations => "MaxIterations",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignChangeResult {
    pub theta: f64,
    pub bracket_lo: f64,
    pub bracket_hi: f64,
    /// Expansion plus bisection steps.
    pub iterations: usize,
    pub residual: f64,
    pub status: SolveStatus,
}

impl SignChangeResult {
    pub fn is_converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }

    pub fn into_theta(self) -> Result<f64> {
        match self.status {
            SolveStatus::Converged => Ok(self.theta),
            status => Err(Error::Solver { status }),
        }
    }
}

/// Point of sign change of `t ↦ Σ λᵢ ψ(xᵢ, t)`.
pub fn solve_sign_change(
    kernel: &PsiKernel,
    sample: &WeightedSample,
    cfg: &SolverConfig,
) -> Result<SignChangeResult> {
    cfg.validate()?;
    for &x in sample.xs() {
        kernel.check_observation(x)?;
    }
    let f = |t: f64| weighted_sum_with(kernel, sample, t, cfg.summation);
    sign_change(kernel.theta(), f, cfg)
}

/// Single-observation estimator: the closed form when the kernel has one.
pub fn theta1(kernel: &PsiKernel, x: f64, cfg: &SolverConfig) -> Result<f64> {
    kernel.check_observation(x)?;
    if let Some(v) = kernel.closed_theta1(x) {
        return Ok(v);
    }
    let sample = WeightedSample::uniform(vec![x])?;
    solve_sign_change(kernel, &sample, cfg)?.into_theta()
}

/// Generalized left inverse of a strictly increasing `f` on `theta`.
///
/// Bisects on the predicate `f(t) < y`, so values inside a jump gap of `f`
/// map to the jump location. Values slightly outside the range hull are
/// accepted when they lie within the tolerance of an explored endpoint value.
pub fn generalized_left_inverse<F>(f: F, theta: OpenInterval, y: f64, cfg: &SolverConfig) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if !y.is_finite() {
        return Err(Error::OutOfRange { y });
    }
    let h = |t: f64| {
        let v = f(t);
        if v.is_nan() {
            Err(Error::Domain(format!("function is NaN at {t}")))
        } else {
            Ok(y - v)
        }
    };
    let res = sign_change(theta, h, cfg)?;
    let slack = 1e3 * cfg.tolerance_at(y).max(f64::EPSILON * (1.0 + y.abs()));
    match res.status {
        SolveStatus::Converged => Ok(res.theta),
        SolveStatus::NoPositivePart => {
            // f(t) >= y everywhere explored; accept y at the lower closure.
            let t = res.bracket_lo;
            if (f(t) - y).abs() <= slack {
                Ok(t)
            } else {
                Err(Error::OutOfRange { y })
            }
        }
        SolveStatus::NoNegativePart => {
            let t = res.bracket_hi;
            if (y - f(t)).abs() <= slack {
                Ok(t)
            } else {
                Err(Error::OutOfRange { y })
            }
        }
        status => Err(Error::Solver { status }),
    }
}

/// Bracket expansion followed by sign bisection for an arbitrary function.
pub fn sign_change<F>(theta: OpenInterval, f: F, cfg: &SolverConfig) -> Result<SignChangeResult>
where
    F: Fn(f64) -> Result<f64>,
{
    cfg.validate()?;
    let seed = match cfg.seed_guess {
        Some(s) if theta.contains(s) => s,
        _ => theta.seed(),
    };
    let v0 = f(seed)?;
    let mut iterations = 0;

    // t_plus has a positive value, t_minus a non-positive one.
    let (t_plus, t_minus) = if v0 > 0.0 {
        match expand(theta, seed, Side::Up, cfg, &f, |v| v <= 0.0)? {
            Expansion::Found {
                at,
                last_other,
                steps,
            } => {
                iterations += steps;
                (last_other, at)
            }
            Expansion::Exhausted { last, steps } => {
                return Ok(SignChangeResult {
                    theta: last,
                    bracket_lo: last,
                    bracket_hi: last,
                    iterations: iterations + steps,
                    residual: f(last).unwrap_or(f64::NAN),
                    status: SolveStatus::NoNegativePart,
                });
            }
        }
    } else {
        match expand(theta, seed, Side::Down, cfg, &f, |v| v > 0.0)? {
            Expansion::Found {
                at,
                last_other,
                steps,
            } => {
                iterations += steps;
                (at, last_other)
            }
            Expansion::Exhausted { last, steps } => {
                return Ok(SignChangeResult {
                    theta: last,
                    bracket_lo: last,
                    bracket_hi: last,
                    iterations: iterations + steps,
                    residual: f(last).unwrap_or(f64::NAN),
                    status: SolveStatus::NoPositivePart,
                });
            }
        }
    };

    let (mut lo, mut hi) = (t_plus, t_minus);
    let mut status = SolveStatus::MaxIterations;
    for _ in 0..=cfg.max_bisect {
        let mid = lo + 0.5 * (hi - lo);
        if hi - lo <= cfg.tolerance_at(mid) {
            status = SolveStatus::Converged;
            break;
        }
        let split = split_point(lo, hi);
        if split <= lo || split >= hi {
            // No representable point left between the ends.
            status = SolveStatus::Converged;
            break;
        }
        iterations += 1;
        if f(split)? > 0.0 {
            lo = split;
        } else {
            hi = split;
        }
    }
    let theta_hat = lo + 0.5 * (hi - lo);
    Ok(SignChangeResult {
        theta: theta_hat,
        bracket_lo: lo,
        bracket_hi: hi,
        iterations,
        residual: f(theta_hat)?,
        status,
    })
}

/// Arithmetic midpoint, or the geometric one while the bracket spans
/// several orders of magnitude on one side of zero.
fn split_point(lo: f64, hi: f64) -> f64 {
    if lo > 0.0 && hi > 4.0 * lo {
        lo.sqrt() * hi.sqrt()
    } else if hi < 0.0 && lo < 4.0 * hi {
        -((-lo).sqrt() * (-hi).sqrt())
    } else {
        lo + 0.5 * (hi - lo)
    }
}

#[derive(Clone, Copy)]
enum Side {
    Up,
    Down,
}

enum Expansion {
    Found { at: f64, last_other: f64, steps: usize },
    Exhausted { last: f64, steps: usize },
}

/// Growth factor for step `k`: plain doubling first, then accelerating so
/// that extreme scales stay reachable within `max_expand` steps.
fn growth(k: usize) -> f64 {
    if k < 32 {
        2.0
    } else {
        2f64.powi((k - 30).min(1000) as i32).min(1e100)
    }
}

fn expand<F, P>(
    theta: OpenInterval,
    start: f64,
    side: Side,
    cfg: &SolverConfig,
    f: &F,
    wanted: P,
) -> Result<Expansion>
where
    F: Fn(f64) -> Result<f64>,
    P: Fn(f64) -> bool,
{
    let mut t = start;
    let mut step = start.abs().max(1.0);
    for k in 0..cfg.max_expand {
        let factor = growth(k);
        let next = match side {
            Side::Up if theta.hi().is_finite() => {
                let n = theta.hi() - (theta.hi() - t) / factor;
                if n < theta.hi() {
                    n
                } else {
                    theta.hi().next_down()
                }
            }
            Side::Down if theta.lo().is_finite() => {
                let n = theta.lo() + (t - theta.lo()) / factor;
                if n > theta.lo() {
                    n
                } else {
                    theta.lo().next_up()
                }
            }
            Side::Up => {
                let n = t + step;
                step *= factor;
                if n.is_finite() {
                    n
                } else {
                    f64::MAX
                }
            }
            Side::Down => {
                let n = t - step;
                step *= factor;
                if n.is_finite() {
                    n
                } else {
                    -f64::MAX
                }
            }
        };
        if next == t || !theta.contains(next) {
            return Ok(Expansion::Exhausted { last: t, steps: k });
        }
        let v = f(next)?;
        if wanted(v) {
            return Ok(Expansion::Found {
                at: next,
                last_other: t,
                steps: k + 1,
            });
        }
        t = next;
    }
    Ok(Expansion::Exhausted {
        last: t,
        steps: cfg.max_expand,
    })
}
