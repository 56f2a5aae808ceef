//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Run with `cargo test --test acceptance`.

mod common;

use std::time::Instant;

use common::links::{positive_sample_below, random_coefficients, separated_coefficients, Gen, Link};
use common::{
    corpus, draw_sample, draw_weighted, golden_dir, random_closed_form_spec, random_spec, rng, run_cli,
    GOLDEN,
};
use psiest::bajraktarevic::{
    apply_mobius, determinant_scale, determinant_test, estimate, mobius_fit, relative_schwarzian,
    schwarzian_step,
};
use psiest::comparison::{
    check_derivative_condition, check_direct, check_multiplier, check_ratio_condition, check_two_point_all,
    construct_multiplier, CheckOptions, VerdictStatus, Witness, WitnessSet, DEFAULT_GRID,
};
use psiest::families::{beta_alpha_bounds, closed_form_estimate, digamma, make_kernel, FamilySpec};
use psiest::{solve_sign_change, theta1, OpenInterval, PsiKernel, SolveStatus, SolverConfig, WeightedSample};
use rand::Rng;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn solve(k: &PsiKernel, s: &WeightedSample, c: &SolverConfig) -> Result<f64, String> {
    let r = solve_sign_change(k, s, c).map_err(|e| e.to_string())?;
    ensure(r.status == SolveStatus::Converged, || {
        format!("{}: {:?}", k.name(), r.status)
    })?;
    Ok(r.theta)
}

fn closed_form_agreement() -> Outcome {
    let c = SolverConfig::default();
    let mut r = rng(1001);
    let mut worst = 0.0f64;
    for family in 0..6 {
        for _ in 0..100 {
            let spec = random_closed_form_spec(&mut r, family);
            let n = r.random_range(1..=50);
            let s = draw_sample(&spec, &mut r, n);
            let a = closed_form_estimate(&spec, &s).map_err(|e| e.to_string())?;
            let b = solve(&make_kernel(&spec).unwrap(), &s, &c)?;
            worst = worst.max((a - b).abs());
            ensure((a - b).abs() <= 1e-8, || {
                format!("{spec}: closed {a} vs solver {b}")
            })?;
        }
    }
    Ok(format!("600 samples, max |diff| {worst:.3e}"))
}

fn mean_type_property() -> Outcome {
    let c = SolverConfig::default();
    let mut r = rng(1002);
    let mut strict = 0;
    for _ in 0..500 {
        let spec = random_spec(&mut r);
        let k = make_kernel(&spec).unwrap();
        let n = r.random_range(1..12);
        let s = draw_weighted(&spec, &mut r, n);
        let t = solve(&k, &s, &c)?;
        let t1: Vec<f64> = s.xs().iter().map(|&x| theta1(&k, x, &c).unwrap()).collect();
        let lo = t1.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = t1.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let slack = 2.0 * c.tolerance_at(t);
        ensure(lo - slack <= t && t <= hi + slack, || {
            format!("{spec}: {t} outside [{lo}, {hi}]")
        })?;
        if hi - lo > 4.0 * slack {
            strict += 1;
            ensure(lo < t && t < hi, || {
                format!("{spec}: {t} not strictly inside ({lo}, {hi})")
            })?;
        }
    }
    Ok(format!("500 draws, {strict} strict"))
}

fn ordered_pairs() -> Vec<(FamilySpec, FamilySpec, &'static [f64])> {
    use FamilySpec::*;
    vec![
        (
            Expectile { alpha: 0.3 },
            Expectile { alpha: 0.7 },
            &[0.0, 1.0, 2.0, 5.0],
        ),
        (
            BetaAlpha { beta: 1.0 },
            BetaAlpha { beta: 2.0 },
            &[0.1, 0.3, 0.5, 0.7, 0.9],
        ),
        (
            GammaShape { lambda: 1.0 },
            GammaShape { lambda: 2.0 },
            &[0.5, 1.0, 2.0, 5.0],
        ),
        (
            LomaxRateLambda { alpha: 1.0 },
            LomaxRateLambda { alpha: 2.0 },
            &[0.5, 1.0, 2.0, 5.0],
        ),
        (
            LomaxShapeAlpha { lambda: 1.0 },
            LomaxShapeAlpha { lambda: 2.0 },
            &[0.5, 1.0, 2.0, 5.0],
        ),
    ]
}

fn witness_set(
    kp: &PsiKernel,
    kf: &PsiKernel,
    obs: &[f64],
    seed: u64,
    opts: &CheckOptions,
) -> Result<WitnessSet, String> {
    WitnessSet::build(kp, kf, obs, DEFAULT_GRID, seed, &opts.solver).map_err(|e| e.to_string())
}

fn positive_direction() -> Outcome {
    let opts = CheckOptions::default();
    let mut worst = f64::NEG_INFINITY;
    for (i, (psi, phi, obs)) in ordered_pairs().into_iter().enumerate() {
        let (kp, kf) = (make_kernel(&psi).unwrap(), make_kernel(&phi).unwrap());
        let ws = witness_set(&kp, &kf, obs, i as u64, &opts)?;
        let v = check_direct(&kp, &kf, &ws, &opts);
        ensure(v.status == VerdictStatus::NoCounterexample, || {
            format!("{psi} vs {phi}: {:?}", v.status)
        })?;
        let excess = v.max_excess.unwrap_or(f64::NEG_INFINITY);
        worst = worst.max(excess);
        ensure(excess <= 10.0, || format!("{psi} vs {phi}: excess {excess} tol"))?;
    }
    Ok(format!(
        "5 pairs, max_n 6, 200 trials, worst excess {worst:.3} tol"
    ))
}

fn negative_direction() -> Outcome {
    let opts = CheckOptions::default();
    for (i, (phi, psi, obs)) in ordered_pairs().into_iter().enumerate() {
        let (kp, kf) = (make_kernel(&psi).unwrap(), make_kernel(&phi).unwrap());
        let ws = witness_set(&kp, &kf, obs, i as u64, &opts)?;
        let v = check_direct(&kp, &kf, &ws, &opts);
        ensure(v.status == VerdictStatus::Counterexample, || {
            format!("{psi} vs {phi}: {:?}", v.status)
        })?;
        let again = v.reverify(&kp, &kf, &opts.solver).map_err(|e| e.to_string())?;
        ensure(again, || format!("{psi} vs {phi}: witness does not reverify"))?;
    }
    Ok("5 reversed pairs, all witnesses reverify".into())
}

fn condition_equivalence() -> Outcome {
    let opts = CheckOptions::default();
    let mut derivative = 0;
    let pairs = corpus();
    for (i, p) in pairs.iter().enumerate() {
        let (kp, kf) = (make_kernel(&p.psi).unwrap(), make_kernel(&p.phi).unwrap());
        let ws = witness_set(&kp, &kf, p.witnesses, i as u64, &opts)?;
        let d = check_direct(&kp, &kf, &ws, &opts).status;
        let t = check_two_point_all(&kp, &kf, &ws, &opts).status;
        let r = check_ratio_condition(&kp, &kf, &ws, &opts.solver).status;
        ensure(d == t && t == r, || {
            format!("pair {i} {} vs {}: {d:?} {t:?} {r:?}", p.psi, p.phi)
        })?;
        let want = if p.ordered {
            VerdictStatus::NoCounterexample
        } else {
            VerdictStatus::Counterexample
        };
        ensure(d == want, || format!("pair {i}: {d:?}, expected {want:?}"))?;
        let v = check_derivative_condition(&kp, &kf, &ws, opts.fd_step, &opts.solver)
            .map_err(|e| e.to_string())?;
        if v.status != VerdictStatus::Inconclusive {
            derivative += 1;
            ensure(v.status == d, || {
                format!("pair {i}: derivative {:?} vs direct {d:?}", v.status)
            })?;
        }
    }
    Ok(format!(
        "{} pairs, derivative applied to {derivative}",
        pairs.len()
    ))
}

fn multiplier_sandwich() -> Outcome {
    let opts = CheckOptions::default();
    let mut points = 0;
    for (i, p) in corpus().iter().enumerate().filter(|(_, p)| p.ordered) {
        let (kp, kf) = (make_kernel(&p.psi).unwrap(), make_kernel(&p.phi).unwrap());
        let ws = witness_set(&kp, &kf, p.witnesses, i as u64, &opts)?;
        let v = check_multiplier(&kp, &kf, &ws, &opts.solver);
        ensure(v.status == VerdictStatus::NoCounterexample, || {
            format!("pair {i}: {:?}", v.witness)
        })?;
        for &t in ws.grid() {
            let Ok(m) = construct_multiplier(&kp, &kf, &ws, t, &opts.solver) else {
                continue;
            };
            for &z in p.witnesses {
                let (lhs, rhs) = (kp.eval(z, t), m * kf.eval(z, t));
                let scale = lhs.abs().max(rhs.abs()).max(1.0);
                ensure(lhs <= rhs + 1e-10 * scale, || {
                    format!("pair {i}: psi({z},{t}) = {lhs} > {rhs}")
                })?;
                points += 1;
            }
        }
    }
    let (kp, kf) = (
        make_kernel(&FamilySpec::LognormalMu { sigma2: 1.0 }).unwrap(),
        make_kernel(&FamilySpec::LognormalMu { sigma2: 4.0 }).unwrap(),
    );
    let ws = witness_set(&kp, &kf, &[0.5, 1.0, 2.0, 5.0], 3, &opts)?;
    let mut hits = 0;
    for &t in ws.grid() {
        if let Ok(m) = construct_multiplier(&kp, &kf, &ws, t, &opts.solver) {
            hits += 1;
            ensure((m - 4.0).abs() <= 1e-12, || format!("lognormal p({t}) = {m}"))?;
        }
    }
    ensure(hits > 0, || "lognormal multiplier never constructed".into())?;
    Ok(format!(
        "{points} sandwich points, lognormal p = 4 at {hits} points"
    ))
}

fn mobius_invariance() -> Outcome {
    let c = SolverConfig::default();
    let mut r = rng(1007);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let g = Gen::moderate(&mut r);
        let spec = g.spec();
        let m = random_coefficients(&mut r, g.link.floor());
        let witnesses: Vec<f64> = (0..8).map(|_| r.random_range(0.1..3.0)).collect();
        let moved = apply_mobius(&spec, m, &witnesses).map_err(|e| format!("{g:?} {m:?}: {e}"))?;
        for _ in 0..20 {
            let n = r.random_range(1..10);
            let s = positive_sample_below(&mut r, n, 3.0);
            let a = estimate(&spec, &s, &c).map_err(|e| e.to_string())?;
            let b = estimate(&moved, &s, &c).map_err(|e| e.to_string())?;
            let rel = (a - b).abs() / a.abs().max(1.0);
            worst = worst.max(rel);
            ensure(rel <= 1e-9, || format!("{g:?} {m:?}: {a} vs {b}"))?;
        }
    }
    Ok(format!("50 transforms x 20 samples, max rel diff {worst:.3e}"))
}

fn determinant_and_schwarzian() -> Outcome {
    let theta = OpenInterval::new(1.0, 4.0).unwrap();
    let mut r = rng(1008);
    let (mut det_worst, mut s_worst) = (0.0f64, 0.0f64);
    for _ in 0..20 {
        let link = Link::random(&mut r);
        let m = separated_coefficients(&mut r, link.eval(1.0));
        let f = move |t: f64| link.eval(t);
        let g = move |t: f64| m.apply(link.eval(t));
        for _ in 0..5 {
            let ts: [f64; 4] = std::array::from_fn(|_| r.random_range(1.0..4.0));
            let (fv, gv) = (ts.map(f), ts.map(g));
            let ratio = determinant_test(fv, gv).abs() / determinant_scale(fv, gv);
            det_worst = det_worst.max(ratio);
            ensure(ratio <= 1e-9, || format!("{link:?} {m:?}: |det|/scale = {ratio}"))?;
        }
        for t in theta.probe_grid(8) {
            let mut h = schwarzian_step(t);
            while !(theta.contains(t - 3.0 * h) && theta.contains(t + 3.0 * h)) {
                h *= 0.5;
            }
            let s = relative_schwarzian(f, g, t, h).map_err(|e| e.to_string())?.abs();
            s_worst = s_worst.max(s);
            ensure(s <= 1e-4, || format!("{link:?} {m:?}: |S| = {s} at {t}"))?;
        }
    }
    let ts = [1.0, 2.0, 3.0, 4.0];
    let cube = ts.map(|t: f64| t * t * t);
    let det = determinant_test(ts, cube);
    // Rows 1, t, t^3, t^4 at t = 1..4: a Schur-function multiple of the
    // Vandermonde determinant 12, with e_2(1,2,3,4) = 35.
    ensure((det.abs() - 420.0).abs() <= 1e-9 * 420.0, || {
        format!("(t, t^3) det = {det}, expected +-420")
    })?;
    let fv: Vec<(f64, f64)> = ts.iter().map(|&t| (t, t)).collect();
    let gv: Vec<(f64, f64)> = ts.iter().zip(cube).map(|(&t, c)| (t, c)).collect();
    let fit = mobius_fit(&fv, &gv).map_err(|e| e.to_string())?;
    ensure(!fit.is_fit(), || format!("(t, t^3) fitted: {fit:?}"))?;
    Ok(format!(
        "100 quadruples, max |det|/scale {det_worst:.3e}, max |S| {s_worst:.3e}, (t, t^3) det {det}"
    ))
}

fn unit_sample(r: &mut impl Rng, n: usize) -> WeightedSample {
    WeightedSample::uniform((0..n).map(|_| r.random_range(0.02..0.98)).collect()).unwrap()
}

fn beta_beta_bounds() -> Outcome {
    let c = SolverConfig::default();
    let mut r = rng(1009);
    for _ in 0..200 {
        let alpha = r.random_range(0.2..5.0);
        let n = r.random_range(1..30);
        let s = unit_sample(&mut r, n);
        let b = solve(&make_kernel(&FamilySpec::BetaBeta { alpha }).unwrap(), &s, &c)?;
        let (lo, hi) = beta_alpha_bounds(alpha, &s).map_err(|e| e.to_string())?;
        let slack = 10.0 * c.tolerance_at(b);
        ensure(lo - slack <= b && b <= hi + slack, || {
            format!("alpha {alpha}: {b} not in [{lo}, {hi}]")
        })?;
    }
    let mut last_width = 0.0f64;
    for _ in 0..20 {
        let n = r.random_range(1..20);
        let s = unit_sample(&mut r, n);
        let limit = -(n as f64) / s.xs().iter().map(|x| x.ln()).sum::<f64>();
        let at_one = solve(
            &make_kernel(&FamilySpec::BetaBeta { alpha: 1.0 }).unwrap(),
            &s,
            &c,
        )?;
        ensure((at_one - limit).abs() <= 1e-9, || {
            format!("alpha 1: {at_one} vs {limit}")
        })?;
        for side in [1.0, -1.0] {
            let mut prev = f64::INFINITY;
            for k in 1..=20 {
                let (lo, hi) =
                    beta_alpha_bounds(1.0 + side * 2f64.powi(-k), &s).map_err(|e| e.to_string())?;
                ensure(hi - lo < prev, || format!("width not shrinking at k={k}"))?;
                prev = hi - lo;
            }
            ensure(prev <= 1e-4 * limit, || {
                format!("width {prev} at k=20 for limit {limit}")
            })?;
            last_width = last_width.max(prev);
        }
    }
    Ok(format!(
        "200 draws inside bounds, alpha=1 matches, width at 2^-20 <= {last_width:.3e}"
    ))
}

fn expectile_limit() -> Outcome {
    let c = SolverConfig::default();
    let k = make_kernel(&FamilySpec::Expectile { alpha: 0.3 }).unwrap();
    let mut prev = f64::INFINITY;
    for n in 1..=64usize {
        let mut xs = vec![0.0; n];
        xs.push(1.0);
        let t = solve(&k, &WeightedSample::uniform(xs).unwrap(), &c)?;
        let oracle = 0.3 / (0.3 + 0.7 * n as f64);
        ensure((t - oracle).abs() <= 1e-10, || format!("n={n}: {t} vs {oracle}"))?;
        ensure(t.abs() <= 1.0 / n as f64, || format!("n={n}: {t} > 1/n"))?;
        ensure(t < prev, || format!("not decreasing at n={n}"))?;
        prev = t;
    }
    Ok("n = 1..64 matches 0.3/(0.3 + 0.7n)".into())
}

fn digamma_checks() -> Outcome {
    let d1 = digamma(1.0).map_err(|e| e.to_string())?;
    ensure((d1 + 0.5772156649015329).abs() <= 1e-12, || {
        format!("digamma(1) = {d1}")
    })?;
    let mut r = rng(1011);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let x = 10f64.powf(r.random_range(-3.0..3.0));
        let gap = (digamma(x + 1.0).unwrap() - digamma(x).unwrap() - 1.0 / x).abs();
        worst = worst.max(gap);
        ensure(gap <= 1e-12, || format!("recurrence off by {gap} at {x}"))?;
    }
    Ok(format!(
        "digamma(1) off by {:.1e}, recurrence max {worst:.1e}",
        (d1 + 0.5772156649015329).abs()
    ))
}

fn shifted_linear_pair() -> Outcome {
    let psi = PsiKernel::new("-jt", OpenInterval::REAL, |x, t| -x * t);
    let phi = PsiKernel::new("-j(t+1)", OpenInterval::REAL, |x, t| -x * (t + 1.0));
    let opts = CheckOptions::default();
    let ws = witness_set(&psi, &phi, &[1.0, 2.0, 3.0], 12, &opts)?;
    let v = check_direct(&psi, &phi, &ws, &opts);
    ensure(v.status == VerdictStatus::Counterexample, || {
        format!("{:?}", v.status)
    })?;
    match v.witness {
        Some(Witness::Sample {
            xs,
            theta_psi,
            theta_phi,
            ..
        }) => {
            ensure(xs.len() == 1, || format!("witness has n = {}", xs.len()))?;
            ensure(
                theta_psi.abs() <= 1e-10 && (theta_phi + 1.0).abs() <= 1e-10,
                || format!("theta_psi {theta_psi}, theta_phi {theta_phi}"),
            )?;
            Ok(format!("counterexample at n = 1, x = {}", xs[0]))
        }
        other => Err(format!("unexpected witness {other:?}")),
    }
}

fn cli_determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_psiest");
    for (name, args, code) in GOLDEN {
        let (c1, first, _) = run_cli(bin, args);
        let (c2, second, _) = run_cli(bin, args);
        ensure(c1 == code && c2 == code, || {
            format!("{name}: exit {c1}/{c2}, expected {code}")
        })?;
        ensure(first == second, || format!("{name}: runs differ"))?;
        let path = golden_dir().join(format!("{name}.json"));
        let want = std::fs::read(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        ensure(first == want, || format!("{name}: differs from golden file"))?;
    }
    Ok(format!("{} invocations byte-identical", GOLDEN.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 13] = [
        ("closed-form agreement", closed_form_agreement),
        ("mean-type property", mean_type_property),
        ("comparison, positive direction", positive_direction),
        ("comparison, negative direction", negative_direction),
        ("condition equivalence", condition_equivalence),
        ("multiplier sandwich", multiplier_sandwich),
        ("Möbius invariance", mobius_invariance),
        ("determinant and Schwarzian", determinant_and_schwarzian),
        ("Beta-beta bounds", beta_beta_bounds),
        ("expectile limit", expectile_limit),
        ("digamma", digamma_checks),
        ("n = 1 counterexample", shifted_linear_pair),
        ("CLI determinism", cli_determinism),
    ];
    let start = Instant::now();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let ms = t.elapsed().as_millis();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} ({ms} ms)", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail} ({ms} ms)", i + 1);
            }
        }
    }
    println!(
        "{} passed, {failed} failed in {:.1} s",
        criteria.len() - failed,
        start.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
