//! Finite-witness checks of the conditions under which one ψ-estimator is
//! dominated by (or equal to) another for every sample.
//!
//! Every check searches for a counterexample on a finite set of observations,
//! parameter values and samples. A clean run is reported as
//! `NoCounterexample`, never as a proof.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::{hull_from_bounds, weighted_sum_with, Hull, PsiKernel, WeightedSample};
use crate::solver::{solve_sign_change, theta1, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerdictStatus {
    NoCounterexample,
    Counterexample,
    Inconclusive,
}

impl VerdictStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            VerdictStatus::NoCounterexample => "NoCounterexample",
            VerdictStatus::Counterexample => "Counterexample",
            VerdictStatus::Inconclusive => "Inconclusive",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Condition {
    /// Estimator inequality on arbitrary samples.
    Direct,
    /// Estimator inequality on weighted two-point samples.
    TwoPoint,
    /// θ₁ ordering plus the cross-product inequality.
    Ratio,
    /// θ₁ ordering plus a multiplier `p(t)` with `ψ ≤ p φ`.
    Multiplier,
    /// Derivative form for kernels sharing θ₁.
    Derivative,
    /// Estimator equality.
    Equality,
}

impl Condition {
    pub fn as_str(&self) -> &'static str {
        match self {
            Condition::Direct => "direct(i)",
            Condition::TwoPoint => "two-point(ii)",
            Condition::Ratio => "ratio(iii)",
            Condition::Multiplier => "multiplier(iv)",
            Condition::Derivative => "derivative(v)",
            Condition::Equality => "equality",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Witness {
    /// Single-observation estimators in the wrong order (or unequal).
    Theta1 { x: f64, theta_psi: f64, theta_phi: f64 },
    /// A sample whose estimators violate the checked relation.
    Sample {
        xs: Vec<f64>,
        weights: Vec<f64>,
        theta_psi: f64,
        theta_phi: f64,
    },
    /// `ψ(x,t) φ(y,t) > ψ(y,t) φ(x,t)` with `lhs`, `rhs` the two products.
    Ratio {
        x: f64,
        y: f64,
        t: f64,
        lhs: f64,
        rhs: f64,
    },
    /// Derivative-form quotients at `t = θ₁(x)`.
    Derivative {
        x: f64,
        y: f64,
        t: f64,
        lhs: f64,
        rhs: f64,
    },
    /// `ψ(z,t) > p(t) φ(z,t)`.
    Sandwich {
        z: f64,
        t: f64,
        p: f64,
        lhs: f64,
        rhs: f64,
    },
    /// The two weighted sums have different signs at `t`.
    SignMismatch {
        xs: Vec<f64>,
        weights: Vec<f64>,
        t: f64,
        sum_psi: f64,
        sum_phi: f64,
    },
    /// A sample on which one of the estimators could not be computed.
    Failure {
        xs: Vec<f64>,
        weights: Vec<f64>,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GridMeta {
    pub observations: usize,
    pub grid_points: usize,
    pub seed: u64,
    pub hull: Option<(f64, f64)>,
    pub samples_tested: usize,
    pub pairs_tested: usize,
    pub points_tested: usize,
    pub max_n: Option<usize>,
    pub max_km: Option<usize>,
    pub fd_step: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonVerdict {
    pub status: VerdictStatus,
    pub condition: Condition,
    pub witness: Option<Witness>,
    pub grid: GridMeta,
    /// Largest `|θ_ψ - θ_φ|` over the tested samples.
    pub max_abs_diff: Option<f64>,
    /// Largest `(θ_ψ - θ_φ) / tol` over the tested samples.
    pub max_excess: Option<f64>,
    /// Range of the constructed multiplier over the grid.
    pub multiplier_range: Option<(f64, f64)>,
    pub notes: Vec<String>,
}

impl ComparisonVerdict {
    fn new(condition: Condition, ws: &WitnessSet) -> Self {
        ComparisonVerdict {
            status: VerdictStatus::NoCounterexample,
            condition,
            witness: None,
            grid: ws.meta(),
            max_abs_diff: None,
            max_excess: None,
            multiplier_range: None,
            notes: Vec::new(),
        }
    }

    fn found(mut self, status: VerdictStatus, witness: Witness) -> Self {
        self.status = status;
        self.witness = Some(witness);
        self
    }

    /// Recomputes the witness and checks that the reported violation
    /// reproduces. Verdicts without a witness re-verify trivially.
    pub fn reverify(&self, k_psi: &PsiKernel, k_phi: &PsiKernel, cfg: &SolverConfig) -> Result<bool> {
        let Some(w) = &self.witness else {
            return Ok(true);
        };
        if self.status != VerdictStatus::Counterexample {
            return Ok(true);
        }
        let same = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0);
        let ok = match w {
            Witness::Theta1 {
                x,
                theta_psi,
                theta_phi,
            } => {
                let tp = theta1(k_psi, *x, cfg)?;
                let tf = theta1(k_phi, *x, cfg)?;
                let violated = if self.condition == Condition::Equality {
                    (tp - tf).abs() > THETA1_MATCH * tp.abs().max(tf.abs()).max(1.0)
                } else {
                    tp > tf + 10.0 * sample_tol(cfg, tp, tf)
                };
                same(tp, *theta_psi) && same(tf, *theta_phi) && violated
            }
            Witness::Sample {
                xs,
                weights,
                theta_psi,
                theta_phi,
            } => {
                let s = WeightedSample::new(xs.clone(), weights.clone())?;
                let tp = solve_sign_change(k_psi, &s, cfg)?.into_theta()?;
                let tf = solve_sign_change(k_phi, &s, cfg)?.into_theta()?;
                let tol = 10.0 * sample_tol(cfg, tp, tf);
                let violated = if self.condition == Condition::Equality {
                    (tp - tf).abs() > tol
                } else {
                    tp > tf + tol
                };
                same(tp, *theta_psi) && same(tf, *theta_phi) && violated
            }
            Witness::Ratio { x, y, t, lhs, rhs } => {
                let l = k_psi.eval(*x, *t) * k_phi.eval(*y, *t);
                let r = k_psi.eval(*y, *t) * k_phi.eval(*x, *t);
                same(l, *lhs) && same(r, *rhs) && l > r + slack(l, r)
            }
            Witness::Derivative { x, y, t, lhs, rhs } => {
                let fd = self.grid.fd_step.unwrap_or(DEFAULT_FD_STEP);
                let (l, r, closed) = derivative_quotients(k_psi, k_phi, *x, *y, *t, fd)?;
                same(l, *lhs) && same(r, *rhs) && l > r + derivative_slack(l, r, closed)
            }
            Witness::Sandwich { z, t, p, lhs, rhs } => {
                let l = k_psi.eval(*z, *t);
                let r = p * k_phi.eval(*z, *t);
                same(l, *lhs) && same(r, *rhs) && l > r + slack(l, r)
            }
            Witness::SignMismatch {
                xs,
                weights,
                t,
                sum_psi,
                sum_phi,
            } => {
                let s = WeightedSample::new(xs.clone(), weights.clone())?;
                let a = weighted_sum_with(k_psi, &s, *t, cfg.summation)?;
                let b = weighted_sum_with(k_phi, &s, *t, cfg.summation)?;
                same(a, *sum_psi) && same(b, *sum_phi) && sign3(a) != sign3(b)
            }
            Witness::Failure { .. } => false,
        };
        Ok(ok)
    }
}

pub const DEFAULT_GRID: usize = 257;
pub const DEFAULT_FD_STEP: f64 = 1e-5;
const GRID_MARGIN: f64 = 1e-6;
const THETA1_MATCH: f64 = 1e-8;

/// Observations plus parameter probes inside the empirical hull of θ₁φ.
#[derive(Debug, Clone, PartialEq)]
pub struct WitnessSet {
    observations: Vec<f64>,
    grid: Vec<f64>,
    hull: Hull,
    seed: u64,
}

impl WitnessSet {
    /// `grid` equispaced points plus `grid - 1` seeded random points inside the
    /// hull of θ₁φ over the observations, shrunk by a relative margin.
    pub fn build(
        k_psi: &PsiKernel,
        k_phi: &PsiKernel,
        observations: &[f64],
        grid: usize,
        seed: u64,
        cfg: &SolverConfig,
    ) -> Result<Self> {
        if observations.is_empty() {
            return Err(Error::EmptyData);
        }
        for &x in observations {
            k_psi.check_observation(x)?;
            k_phi.check_observation(x)?;
        }
        let t1 = theta1_values(k_phi, observations, cfg)?;
        let lo = t1.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = t1.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let hull = hull_from_bounds(lo, hi)?;
        let mut pts = Vec::new();
        if let Hull::Interval(iv) = hull {
            let w = iv.hi() - iv.lo();
            let (a, b) = (iv.lo() + GRID_MARGIN * w, iv.hi() - GRID_MARGIN * w);
            if grid == 1 {
                pts.push(0.5 * (a + b));
            } else {
                for i in 0..grid {
                    pts.push(a + (b - a) * i as f64 / (grid - 1) as f64);
                }
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..grid.saturating_sub(1) {
                pts.push(rng.random_range(a..b));
            }
        }
        pts.retain(|t| {
            hull.interval().is_some_and(|iv| iv.contains(*t))
                && k_psi.theta().contains(*t)
                && k_phi.theta().contains(*t)
        });
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        Ok(WitnessSet {
            observations: observations.to_vec(),
            grid: pts,
            hull,
            seed,
        })
    }

    pub fn observations(&self) -> &[f64] {
        &self.observations
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn hull(&self) -> Hull {
        self.hull
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn meta(&self) -> GridMeta {
        GridMeta {
            observations: self.observations.len(),
            grid_points: self.grid.len(),
            seed: self.seed,
            hull: self.hull.interval().map(|iv| (iv.lo(), iv.hi())),
            ..GridMeta::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckOptions {
    /// Largest random sample size for the direct and equality checks.
    pub max_n: usize,
    /// Number of random samples (in addition to all singletons).
    pub trials: usize,
    /// Largest `k + m` for the two-point check.
    pub max_km: usize,
    /// Relative step for finite-difference derivatives.
    pub fd_step: f64,
    pub solver: SolverConfig,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            max_n: 6,
            trials: 200,
            max_km: 20,
            fd_step: DEFAULT_FD_STEP,
            solver: SolverConfig::default(),
        }
    }
}

pub fn theta1_values(k: &PsiKernel, xs: &[f64], cfg: &SolverConfig) -> Result<Vec<f64>> {
    xs.iter().map(|&x| theta1(k, x, cfg)).collect()
}

fn sample_tol(cfg: &SolverConfig, a: f64, b: f64) -> f64 {
    cfg.tolerance_at(a.abs().max(b.abs()))
}

fn slack(lhs: f64, rhs: f64) -> f64 {
    1e-10 * lhs.abs().max(rhs.abs()).max(1.0)
}

fn derivative_slack(lhs: f64, rhs: f64, closed: bool) -> f64 {
    let rel = if closed { 1e-10 } else { 1e-6 };
    rel * lhs.abs().max(rhs.abs()).max(1.0)
}

fn sign3(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// All singletons first, then `trials` random samples of size `1..=max_n`
/// drawn with replacement.
fn draw_samples(obs: &[f64], max_n: usize, trials: usize, seed: u64) -> Vec<WeightedSample> {
    let mut out: Vec<WeightedSample> = obs
        .iter()
        .map(|&x| WeightedSample::uniform(vec![x]).unwrap())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    for _ in 0..trials {
        let n = rng.random_range(1..=max_n.max(1));
        let xs: Vec<f64> = (0..n).map(|_| obs[rng.random_range(0..obs.len())]).collect();
        out.push(WeightedSample::uniform(xs).unwrap());
    }
    out
}

type Pair = std::result::Result<(f64, f64), String>;

fn solve_pairs(
    k_psi: &PsiKernel,
    k_phi: &PsiKernel,
    samples: &[WeightedSample],
    cfg: &SolverConfig,
) -> Vec<Pair> {
    samples
        .par_iter()
        .map(|s| {
            let a = solve_sign_change(k_psi, s, cfg).and_then(|r| r.into_theta());
            let b = solve_sign_change(k_phi, s, cfg).and_then(|r| r.into_theta());
            match (a, b) {
                (Ok(a), Ok(b)) => Ok((a, b)),
                (Err(e), _) => Err(format!("psi: {e}")),
                (_, Err(e)) => Err(format!("phi: {e}")),
            }
        })
        .collect()
}

/// Scans solved samples in index order. Returns the verdict for the relation
/// `θψ ≤ θφ` (or `θψ = θφ` when `equality` is set).
fn judge_samples(
    mut v: ComparisonVerdict,
    samples: &[WeightedSample],
    solved: &[Pair],
    cfg: &SolverConfig,
    equality: bool,
) -> ComparisonVerdict {
    let mut max_abs: f64 = 0.0;
    let mut max_excess = f64::NEG_INFINITY;
    let mut failure: Option<Witness> = None;
    let mut counter: Option<Witness> = None;
    for (s, r) in samples.iter().zip(solved) {
        match r {
            Ok((tp, tf)) => {
                let tol = sample_tol(cfg, *tp, *tf);
                let diff = tp - tf;
                max_abs = max_abs.max(diff.abs());
                let excess = if equality { diff.abs() } else { diff } / tol;
                max_excess = max_excess.max(excess);
                if counter.is_none() && excess > 10.0 {
                    counter = Some(Witness::Sample {
                        xs: s.xs().to_vec(),
                        weights: s.weights().to_vec(),
                        theta_psi: *tp,
                        theta_phi: *tf,
                    });
                }
            }
            Err(msg) => {
                if failure.is_none() {
                    failure = Some(Witness::Failure {
                        xs: s.xs().to_vec(),
                        weights: s.weights().to_vec(),
                        message: msg.clone(),
                    });
                }
            }
        }
    }
    v.grid.samples_tested = samples.len();
    v.max_abs_diff = Some(max_abs);
    v.max_excess = Some(max_excess);
    if let Some(w) = counter {
        v.found(VerdictStatus::Counterexample, w)
    } else if let Some(w) = failure {
        v.found(VerdictStatus::Inconclusive, w)
    } else {
        v
    }
}

/// Searches samples of size up to `max_n` for `θψ > θφ + 10·tol`.
pub fn check_direct(
    k_psi: &PsiKernel,
    k_phi: &PsiKernel,
    ws: &WitnessSet,
    opts: &CheckOptions,
) -> ComparisonVerdict {
    let mut v = ComparisonVerdict::new(Condition::Direct, ws);
    v.grid.max_n = Some(opts.max_n);
    let samples = draw_samples(&ws.observations, opts.max_n, opts.trials, ws.seed);
    let solved = solve_pairs(k_psi, k_phi, &samples, &opts.solver);
    judge_samples(v, &samples, &solved, &opts.solver, false)
}

fn two_point_samples(x: f64, y: f64, max_km: usize) -> Vec<WeightedSample> {
    let mut out = Vec::new();
    for k in 1..max_km {
        for m in 1..=max_km - k {
            out.push(WeightedSample::new(vec![x, y], vec![k as f64, m as f64]).unwrap());
        }
    }
    out
}

/// Two-point samples `x` with weight `k`, `y` with weight `m`, `k + m ≤ max_km`.
pub fn check_two_point(
    k_psi: &PsiKernel,
    k_phi: &PsiKernel,
    x: f64,
    y: f64,
    max_km: usize,
    cfg: &SolverConfig,
) -> Result<ComparisonVerdict> {
    if x == y {
        return Err(Error::InvalidArgument("two-point check needs x != y".into()));
    }
    for z in [x, y] {
        k_psi.check_observation(z)?;
        k_phi.check_observation(z)?;
    }
    let samples = two_point_samples(x, y, max_km);
    let solved = solve_pairs(k_psi, k_phi, &samples, cfg);
    let mut v = ComparisonVerdict {
        status: VerdictStatus::NoCounterexample,
        condition: Condition::TwoPoint,
        witness: None,
        grid: GridMeta {
            observations: 2,
            pairs_tested: 1,
            max_km: Some(max_km),
            ..GridMeta::default()
        },
        max_abs_diff: None,
        max_excess: None,
        multiplier_range: None,
        notes: Vec::new(),
    };
    v = judge_samples(v, &samples, &solved, cfg, false);
    Ok(v)
}

/// `check_two_point` over every pair of distinct witnesses.
pub fn check_two_point_all(
    k_psi: &PsiKernel,
    k_phi: &PsiKernel,
    ws: &WitnessSet,
    opts: &CheckOptions,
) -> ComparisonVerdict {
    let mut obs = ws.observations.clone();
    obs.sort_by(f64::total_cmp);
    obs.dedup();
    let mut samples = Vec::new();
    let mut pairs = 0;
    for i in 0..obs.len() {
        for j in i + 1..obs.len() {
            samples.extend(two_point_samples(obs[i], obs[j], opts.max_km));
            pairs += 1;
        }
    }
    let mut v = ComparisonVerdict::new(Condition::TwoPoint, ws);
    v.grid.max_km = Some(opts.max_km);
    v.grid.pairs_tested = pairs;
    if pairs == 0 {
        v.notes
            .push("fewer than two distinct observations; nothing to test".into());
        v.status = VerdictStatus::Inconclusive;
        return v;
    }
    let solved = solve_pairs(k_psi, k_phi, &samples, &opts.solver);
    judge_samples(v, &samples, &solved, &opts.solver, false)
}

/// First witness with `θ₁ψ(x) > θ₁φ(x) + 10·tol`, if any.
fn theta1_violation(
    k_psi: &PsiKernel,
    k_phi: &PsiKernel,
    obs: &[f64],
    cfg: &SolverConfig,
) -> Result<Option<Witness>> {
    for &x in obs {
        let tp = theta1(k_psi, x, cfg)?;
        let tf = theta1(k_phi, x, cfg)?;
        if tp > tf + 10.0 * sample_tol(cfg, tp, tf) {
            return Ok(Some(Witness::Theta1 {
                x,
                theta_psi: tp,
                theta_phi: tf,
            }));
        }
    }
    Ok(None)
}

fn inconclusive(mut v: ComparisonVerdict, e: Error) -> ComparisonVerdict {
    v.status = VerdictStatus::Inconclusive;
    v.notes.push(format!("evaluation failed: {e}"));
    v
}

/// θ₁ ordering on witnesses, then `ψ(x,t)φ(y,t) ≤ ψ(y,t)φ(x,t) + slack` for
/// all witness pairs and grid points with `θ₁φ(x) < t < θ₁φ(y)`.
pub fn check_ratio_condition(
    k_psi: &PsiKernel,
    k_phi: &PsiKernel,
    ws: &WitnessSet,
    cfg: &SolverConfig,
) -> ComparisonVerdict {
    let v = ComparisonVerdict::new(Condition::Ratio, ws);
    match theta1_violation(k_psi, k_phi, &ws.observations, cfg) {
        Err(e) => return inconclusive(v, e),
        Ok(Some(w)) => return v.found(VerdictStatus::Counterexample, w),
        Ok(None) => {}
    }
    let t1 = match theta1_values(k_phi, &ws.observations, cfg) {
        Ok(t) => t,
        Err(e) => return inconclusive(v, e),
    };
    let obs = &ws.observations;
    let mut v = v;
    let mut pairs = 0;
    let mut points = 0;
    for i in 0..obs.len() {
        for j in 0..obs.len() {
            if !(t1[i] < t1[j]) {
                continue;
            }
            pairs += 1;
            let (x, y) = (obs[i], obs[j]);
            for &t in ws.grid.iter().filter(|t| t1[i] < **t && **t < t1[j]) {
                points += 1;
                let lhs = k_psi.eval(x, t) * k_phi.eval(y, t);
                let rhs = k_psi.eval(y, t) * k_phi.eval(x, t);
                if lhs > rhs + slack(lhs, rhs) {
                    v.grid.pairs_tested = pairs;
                    v.grid.points_tested = points;
                    return v.found(
                        VerdictStatus::Counterexample,
                        Witness::Ratio { x, y, t, lhs, rhs },
                    );
                }
            }
        }
    }
    v.grid.pairs_tested = pairs;
    v.grid.points_tested = points;
    if ws.grid.is_empty() {
        v.notes
            .push("empirical hull of theta1(phi) is empty; only the theta1 stage applies".into());
    }
    v
}

/// `p(t) = min { ψ(x,t)/φ(x,t) : θ₁φ(x) < t }` over the witnesses.
pub fn construct_multiplier(
    k_psi: &PsiKernel,
    k_phi: &PsiKernel,
    ws: &WitnessSet,
    t: f64,
    cfg: &SolverConfig,
) -> Result<f64> {
    let t1 = theta1_values(k_phi, &ws.observations, cfg)?;
    let mut p = f64::INFINITY;
    for (&x, &tx) in ws.observations.iter().zip(&t1) {
        if tx < t {
            p = p.min(k_psi.eval(x, t) / k_phi.eval(x, t));
        }
    }
    if p == f64::INFINITY {
        return Err(Error::EmptyLowerSet { t });
    }
    Ok(p)
}

/// Builds `p(t)` on the grid and checks `ψ(z,t) ≤ p(t) φ(z,t) + slack` and
/// `p(t) ≥ 0` for every witness `z`.
pub fn check_multiplier(
    k_psi: &PsiKernel,
    k_phi: &PsiKernel,
    ws: &WitnessSet,
    cfg: &SolverConfig,
) -> ComparisonVerdict {
    let mut v = ComparisonVerdict::new(Condition::Multiplier, ws);
    match theta1_violation(k_psi, k_phi, &ws.observations, cfg) {
        Err(e) => return inconclusive(v, e),
        Ok(Some(w)) => return v.found(VerdictStatus::Counterexample, w),
        Ok(None) => {}
    }
    let mut range = (f64::INFINITY, f64::NEG_INFINITY);
    let mut points = 0;
    for &t in &ws.grid {
        let p = match construct_multiplier(k_psi, k_phi, ws, t, cfg) {
            Ok(p) => p,
            Err(Error::EmptyLowerSet { .. }) => continue,
            Err(e) => return inconclusive(v, e),
        };
        range = (range.0.min(p), range.1.max(p));
        for &z in &ws.observations {
            points += 1;
            let lhs = k_psi.eval(z, t);
            let rhs = p * k_phi.eval(z, t);
            if !(p >= 0.0) || lhs > rhs + slack(lhs, rhs) {
                v.grid.points_tested = points;
                v.multiplier_range = Some(range);
                return v.found(
                    VerdictStatus::Counterexample,
                    Witness::Sandwich { z, t, p, lhs, rhs },
                );
            }
        }
    }
    v.grid.points_tested = points;
    if range.0 <= range.1 {
        v.multiplier_range = Some(range);
    } else {
        v.notes
            .push("empirical hull of theta1(phi) is empty; only the theta1 stage applies".into());
    }
    v
}

/// `∂ψ/∂t` at `(x, t)`: the closed form when present, else a central
/// difference with step `fd_step·max(1,|t|)` shrunk to stay inside Θ.
fn partial_t(k: &PsiKernel, x: f64, t: f64, fd_step: f64) -> Result<(f64, bool)> {
    if let Some(d) = k.closed_d2(x, t) {
        return Ok((d, true));
    }
    let mut h = fd_step * t.abs().max(1.0);
    let theta = k.theta();
    while !(theta.contains(t - h) && theta.contains(t + h)) {
        h *= 0.5;
        if h < f64::EPSILON * t.abs().max(1.0) {
            return Err(Error::Domain(format!("no room for a difference quotient at {t}")));
        }
    }
    let d = (k.eval(x, t + h) - k.eval(x, t - h)) / (2.0 * h);
    if d.is_nan() {
        return Err(Error::NonFinite { x, t });
    }
    Ok((d, false))
}

fn derivative_quotients(
    k_psi: &PsiKernel,
    k_phi: &PsiKernel,
    x: f64,
    y: f64,
    t: f64,
    fd_step: f64,
) -> Result<(f64, f64, bool)> {
    let (dp, cp) = partial_t(k_psi, x, t, fd_step)?;
    let (df, cf) = partial_t(k_phi, x, t, fd_step)?;
    for d in [dp, df] {
        if d.abs() < 1e-8 {
            return Err(Error::DegenerateDerivative { at: t });
        }
    }
    Ok((-k_psi.eval(y, t) / dp, -k_phi.eval(y, t) / df, cp && cf))
}

/// `-ψ(y,θ₁(x))/∂₂ψ(x,θ₁(x)) ≤ -φ(y,θ₁(x))/∂₂φ(x,θ₁(x)) + slack` for all
/// witness pairs. Requires both kernels to share θ₁ on the witnesses;
/// otherwise the verdict is `Inconclusive`.
pub fn check_derivative_condition(
    k_psi: &PsiKernel,
    k_phi: &PsiKernel,
    ws: &WitnessSet,
    fd_step: f64,
    cfg: &SolverConfig,
) -> Result<ComparisonVerdict> {
    let mut v = ComparisonVerdict::new(Condition::Derivative, ws);
    v.grid.fd_step = Some(fd_step);
    let obs = &ws.observations;
    let tp = theta1_values(k_psi, obs, cfg)?;
    let tf = theta1_values(k_phi, obs, cfg)?;
    if let Some(i) =
        (0..obs.len()).find(|&i| (tp[i] - tf[i]).abs() > THETA1_MATCH * tp[i].abs().max(tf[i].abs()).max(1.0))
    {
        v.status = VerdictStatus::Inconclusive;
        v.notes.push(format!(
            "precondition failed: theta1 differs at x={} ({} vs {})",
            obs[i], tp[i], tf[i]
        ));
        return Ok(v);
    }
    let mut any_fd = false;
    let mut pairs = 0;
    for (i, &x) in obs.iter().enumerate() {
        let t = tf[i];
        for &y in obs {
            pairs += 1;
            let (lhs, rhs, closed) = derivative_quotients(k_psi, k_phi, x, y, t, fd_step)?;
            any_fd |= !closed;
            if lhs > rhs + derivative_slack(lhs, rhs, closed) {
                v.grid.pairs_tested = pairs;
                return Ok(v.found(
                    VerdictStatus::Counterexample,
                    Witness::Derivative { x, y, t, lhs, rhs },
                ));
            }
        }
    }
    v.grid.pairs_tested = pairs;
    if any_fd {
        v.notes.push(
            "unverified hypotheses: derivatives taken by finite differences; differentiability at theta1 not checked".into(),
        );
    }
    Ok(v)
}

/// Estimator equality: θ₁ agreement, `|θψ - θφ| ≤ 10·tol` on random samples,
/// and equal signs of the two weighted sums on the grid.
pub fn check_equality(
    k_psi: &PsiKernel,
    k_phi: &PsiKernel,
    ws: &WitnessSet,
    opts: &CheckOptions,
) -> Result<ComparisonVerdict> {
    let cfg = &opts.solver;
    let mut v = ComparisonVerdict::new(Condition::Equality, ws);
    v.grid.max_n = Some(opts.max_n);
    for &x in &ws.observations {
        let tp = theta1(k_psi, x, cfg)?;
        let tf = theta1(k_phi, x, cfg)?;
        if (tp - tf).abs() > THETA1_MATCH * tp.abs().max(tf.abs()).max(1.0) {
            return Ok(v.found(
                VerdictStatus::Counterexample,
                Witness::Theta1 {
                    x,
                    theta_psi: tp,
                    theta_phi: tf,
                },
            ));
        }
    }
    let samples = draw_samples(&ws.observations, opts.max_n, opts.trials, ws.seed);
    let solved = solve_pairs(k_psi, k_phi, &samples, cfg);
    v = judge_samples(v, &samples, &solved, cfg, true);
    if v.status != VerdictStatus::NoCounterexample {
        return Ok(v);
    }
    let mismatch = samples
        .par_iter()
        .zip(solved.par_iter())
        .map(|(s, r)| -> Option<Witness> {
            let (theta, _) = *r.as_ref().ok()?;
            let skip = 10.0 * cfg.tolerance_at(theta);
            for &t in &ws.grid {
                if (t - theta).abs() <= skip {
                    continue;
                }
                let a = weighted_sum_with(k_psi, s, t, cfg.summation).ok()?;
                let b = weighted_sum_with(k_phi, s, t, cfg.summation).ok()?;
                if sign3(a) != sign3(b) {
                    return Some(Witness::SignMismatch {
                        xs: s.xs().to_vec(),
                        weights: s.weights().to_vec(),
                        t,
                        sum_psi: a,
                        sum_phi: b,
                    });
                }
            }
            None
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .next();
    v.grid.points_tested = samples.len() * ws.grid.len();
    if let Some(w) = mismatch {
        return Ok(v.found(VerdictStatus::Counterexample, w));
    }
    Ok(v)
}

/// Direct, two-point, ratio, multiplier and derivative checks.
pub fn check_all(
    k_psi: &PsiKernel,
    k_phi: &PsiKernel,
    ws: &WitnessSet,
    opts: &CheckOptions,
) -> Vec<ComparisonVerdict> {
    let derivative =
        check_derivative_condition(k_psi, k_phi, ws, opts.fd_step, &opts.solver).unwrap_or_else(|e| {
            let mut v = ComparisonVerdict::new(Condition::Derivative, ws);
            v.grid.fd_step = Some(opts.fd_step);
            inconclusive(v, e)
        });
    vec![
        check_direct(k_psi, k_phi, ws, opts),
        check_two_point_all(k_psi, k_phi, ws, opts),
        check_ratio_condition(k_psi, k_phi, ws, &opts.solver),
        check_multiplier(k_psi, k_phi, ws, &opts.solver),
        derivative,
    ]
}

/// Combined status of `check_all`: any counterexample wins; otherwise an
/// inconclusive direct, two-point or ratio check makes the whole run
/// inconclusive. An inapplicable derivative check does not.
pub fn combined_status(verdicts: &[ComparisonVerdict]) -> VerdictStatus {
    if verdicts.iter().any(|v| v.status == VerdictStatus::Counterexample) {
        return VerdictStatus::Counterexample;
    }
    let core = [
        Condition::Direct,
        Condition::TwoPoint,
        Condition::Ratio,
        Condition::Multiplier,
    ];
    if verdicts
        .iter()
        .any(|v| core.contains(&v.condition) && v.status == VerdictStatus::Inconclusive)
    {
        return VerdictStatus::Inconclusive;
    }
    VerdictStatus::NoCounterexample
}
