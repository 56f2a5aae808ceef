//! Command-line front end. Every subcommand prints one JSON document on stdout.
//!
//! Exit codes: 0 success (or no counterexample), 1 usage error, 2 computation
//! failure (or inconclusive comparison), 3 counterexample found.

use std::ffi::OsString;
use std::io::Write;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use crate::bajraktarevic::{
    as_kernel, determinant_scale, determinant_test, estimate as bajraktarevic_estimate, mobius_fit,
    relative_schwarzian, schwarzian_step, BajraktarevicSpec, MobiusFit,
};
use crate::comparison::{
    check_all, check_derivative_condition, check_direct, check_equality, check_multiplier,
    check_ratio_condition, check_two_point_all, combined_status, CheckOptions, ComparisonVerdict,
    VerdictStatus, Witness, WitnessSet, DEFAULT_FD_STEP, DEFAULT_GRID,
};
use crate::error::{Error, Result};
use crate::exprparse::{eval_expr, parse, Expr};
use crate::families::{
    beta_alpha_bounds, beta_beta_residual, closed_form_estimate, make_kernel, FamilySpec, FAMILY_IDS,
};
use crate::json::{num, to_string_pretty};
use crate::kernel::{weighted_sum, OpenInterval, PsiKernel, WeightedSample};
use crate::solver::{solve_sign_change, SignChangeResult, SolveStatus, SolverConfig};

pub const SEED_ENV: &str = "PSIEST_SEED";

#[derive(Parser, Debug)]
#[command(
    name = "psiest",
    version,
    about = "Sign-change (psi-) estimators and their comparison"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate the parameter of a sample.
    Estimate(EstimateArgs),
    /// Check whether one estimator is dominated by, or equal to, another.
    Compare(CompareArgs),
    /// Test whether g is a Moebius transform of f.
    MobiusTest(MobiusArgs),
    /// Bounds for the Beta second-shape estimator.
    Bounds(BoundsArgs),
}

#[derive(Args, Debug)]
struct EstimateArgs {
    /// Catalog family id.
    #[arg(long)]
    family: Option<String>,
    /// Known family parameter as name=value.
    #[arg(long = "param", value_name = "NAME=VALUE", allow_hyphen_values = true)]
    params: Vec<String>,
    /// Kernel psi(x, t) as an expression.
    #[arg(long, allow_hyphen_values = true)]
    psi: Option<String>,
    /// Parameter interval as lo,hi (inf allowed).
    #[arg(long, allow_hyphen_values = true)]
    theta: Option<String>,
    /// Link f(t) of a Bajraktarevic kernel p(x)(F(x) - f(t)).
    #[arg(long = "f", allow_hyphen_values = true)]
    link: Option<String>,
    /// Weight p(x) of a Bajraktarevic kernel (default 1).
    #[arg(long = "p", allow_hyphen_values = true)]
    weight: Option<String>,
    /// Target F(x) of a Bajraktarevic kernel.
    #[arg(long = "F", allow_hyphen_values = true)]
    target: Option<String>,
    /// Data file or inline list such as [1,2,3].
    #[arg(long)]
    data: String,
    /// Weights file or inline list, overriding any weight column.
    #[arg(long)]
    weights: Option<String>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Use the explicit estimator instead of the sign-change search.
    #[arg(long)]
    closed_form: bool,
}

#[derive(Args, Debug)]
struct CompareArgs {
    /// First kernel: family:name=value or an expression in x and t.
    #[arg(long, allow_hyphen_values = true)]
    psi: String,
    /// Second kernel, same syntax as --psi.
    #[arg(long, allow_hyphen_values = true)]
    phi: String,
    /// Parameter interval for expression kernels.
    #[arg(long, allow_hyphen_values = true)]
    theta: Option<String>,
    /// Witness observations (file or inline list).
    #[arg(long)]
    data: String,
    #[arg(long, default_value = "all")]
    condition: String,
    #[arg(long, default_value_t = DEFAULT_GRID)]
    grid: usize,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long = "max-n", default_value_t = 6)]
    max_n: usize,
    #[arg(long = "max-km", default_value_t = 20)]
    max_km: usize,
    #[arg(long = "fd-step", default_value_t = DEFAULT_FD_STEP)]
    fd_step: f64,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct MobiusArgs {
    #[arg(long = "f", allow_hyphen_values = true)]
    f: String,
    #[arg(long = "g", allow_hyphen_values = true)]
    g: String,
    #[arg(long, allow_hyphen_values = true)]
    theta: String,
    #[arg(long, default_value_t = 8)]
    probes: usize,
}

#[derive(Args, Debug)]
struct BoundsArgs {
    #[arg(long)]
    alpha: f64,
    #[arg(long)]
    data: String,
    #[arg(long)]
    tol: Option<f64>,
}

/// Usage problems exit with 1, computation problems with 2.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Compute(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(_)
            | Error::InvalidParameter(_)
            | Error::NoClosedForm(_)
            | Error::Expr(_)
            | Error::Parse { .. }
            | Error::EmptyData
            | Error::NegativeWeight { .. } => Failure::Usage(e.to_string()),
            _ => Failure::Compute(e.to_string()),
        }
    }
}

impl From<crate::exprparse::ExprError> for Failure {
    fn from(e: crate::exprparse::ExprError) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn usage<T>(msg: impl Into<String>) -> std::result::Result<T, Failure> {
    Err(Failure::Usage(msg.into()))
}

type Outcome = std::result::Result<(Value, i32), Failure>;

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            if code == 0 {
                let _ = write!(out, "{text}");
            } else {
                let _ = write!(err, "{text}");
            }
            return code;
        }
    };
    let result = match cli.command {
        Command::Estimate(a) => cmd_estimate(a),
        Command::Compare(a) => cmd_compare(a),
        Command::MobiusTest(a) => cmd_mobius_test(a),
        Command::Bounds(a) => cmd_bounds(a),
    };
    match result {
        Ok((report, code)) => {
            let _ = out.write_all(to_string_pretty(&report).as_bytes());
            code
        }
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            1
        }
        Err(Failure::Compute(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            2
        }
    }
}

fn resolve_seed(flag: Option<u64>) -> std::result::Result<u64, Failure> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Failure::Usage(format!("{SEED_ENV}={v} is not an unsigned integer"))),
        Err(_) => Ok(0),
    }
}

fn solver_config(tol: Option<f64>) -> std::result::Result<SolverConfig, Failure> {
    match tol {
        None => Ok(SolverConfig::default()),
        Some(t) if t > 0.0 && t.is_finite() => Ok(SolverConfig::with_tol(t)),
        Some(t) => usage(format!("--tol {t} must be positive")),
    }
}

fn parse_theta(s: &str) -> Result<OpenInterval> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(Error::InvalidArgument(format!("--theta `{s}` must be lo,hi")));
    }
    let p = |v: &str| {
        v.trim()
            .parse::<f64>()
            .map_err(|_| Error::InvalidArgument(format!("`{v}` is not a number")))
    };
    OpenInterval::new(p(parts[0])?, p(parts[1])?)
}

fn endpoint(v: f64) -> Value {
    if v == f64::INFINITY {
        Value::from("inf")
    } else if v == f64::NEG_INFINITY {
        Value::from("-inf")
    } else {
        num(v)
    }
}

fn interval_json(i: OpenInterval) -> Value {
    json!([endpoint(i.lo()), endpoint(i.hi())])
}

fn parse_number(line: usize, field: &str) -> Result<f64> {
    let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
        line,
        msg: format!("`{}` is not a number", field.trim()),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            msg: format!("`{}` is not finite", field.trim()),
        });
    }
    Ok(v)
}

/// Observations from an inline `[a,b,c]` literal or a file with one
/// `value` or `value,weight` record per line. `#` starts a comment.
pub fn read_data(source: &str) -> Result<WeightedSample> {
    let trimmed = source.trim();
    if let Some(inner) = trimmed.strip_prefix('[') {
        let Some(inner) = inner.strip_suffix(']') else {
            return Err(Error::Parse {
                line: 1,
                msg: "inline list must end with `]`".into(),
            });
        };
        if inner.trim().is_empty() {
            return Err(Error::EmptyData);
        }
        let xs = inner
            .split(',')
            .map(|f| parse_number(1, f))
            .collect::<Result<Vec<_>>>()?;
        return WeightedSample::uniform(xs);
    }
    let text = std::fs::read_to_string(source)
        .map_err(|e| Error::InvalidArgument(format!("cannot read `{source}`: {e}")))?;
    parse_records(&text)
}

/// Parses the line-oriented data format.
pub fn parse_records(text: &str) -> Result<WeightedSample> {
    let mut xs = Vec::new();
    let mut ws = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let fields: Vec<&str> = body.split(',').collect();
        match fields.as_slice() {
            [v] => {
                xs.push(parse_number(line, v)?);
                ws.push(1.0);
            }
            [v, w] => {
                xs.push(parse_number(line, v)?);
                let w = parse_number(line, w)?;
                if w < 0.0 {
                    return Err(Error::NegativeWeight { line });
                }
                ws.push(w);
            }
            _ => {
                return Err(Error::Parse {
                    line,
                    msg: "expected `value` or `value,weight`".into(),
                })
            }
        }
    }
    if xs.is_empty() {
        return Err(Error::EmptyData);
    }
    WeightedSample::new(xs, ws)
}

fn read_weights(source: &str, n: usize) -> Result<Vec<f64>> {
    let s = read_data(source)?;
    if s.weights().iter().any(|w| *w != 1.0) {
        return Err(Error::InvalidArgument(
            "weights file must have a single column".into(),
        ));
    }
    if let Some(pos) = s.xs().iter().position(|w| *w < 0.0) {
        return Err(Error::NegativeWeight { line: pos + 1 });
    }
    if s.len() != n {
        return Err(Error::InvalidArgument(format!(
            "{} weights for {n} observations",
            s.len()
        )));
    }
    Ok(s.xs().to_vec())
}

fn split_param(p: &str) -> Result<(String, String)> {
    match p.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
        _ => Err(Error::InvalidArgument(format!(
            "--param `{p}` must be name=value"
        ))),
    }
}

fn family_json(spec: &FamilySpec) -> Value {
    let (name, raw) = spec.param();
    let value = match spec {
        FamilySpec::Mathieu { .. } => Value::from(raw),
        _ => num(raw.parse().unwrap_or(f64::NAN)),
    };
    let mut params = Map::new();
    params.insert(name.to_string(), value);
    json!({ "family": spec.id(), "params": params })
}

fn expr_kernel(e: &Expr, theta: OpenInterval) -> PsiKernel {
    let e2 = e.clone();
    PsiKernel::new(format!("psi(x,t) = {e}"), theta, move |x, t| {
        eval_expr(&e2, x, t).unwrap_or(f64::NAN)
    })
}

fn solver_json(r: &SignChangeResult) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("status".into(), Value::from(r.status.as_str()));
    m.insert("theta".into(), num(r.theta));
    m.insert("bracket".into(), json!([num(r.bracket_lo), num(r.bracket_hi)]));
    m.insert("iterations".into(), Value::from(r.iterations));
    m.insert("residual".into(), num(r.residual));
    m
}

fn closed_json(theta: f64, residual: Option<f64>) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("status".into(), Value::from(SolveStatus::Converged.as_str()));
    m.insert("theta".into(), num(theta));
    m.insert("bracket".into(), Value::Null);
    m.insert("iterations".into(), Value::Null);
    m.insert("residual".into(), residual.map(num).unwrap_or(Value::Null));
    m
}

fn residual_at(k: &PsiKernel, s: &WeightedSample, theta: f64) -> Option<f64> {
    weighted_sum(k, s, theta).ok()
}

fn cmd_estimate(a: EstimateArgs) -> Outcome {
    let cfg = solver_config(a.tol)?;
    let seed = resolve_seed(a.seed)?;
    let mut sample = read_data(&a.data)?;
    if let Some(w) = &a.weights {
        let weights = read_weights(w, sample.len())?;
        sample = WeightedSample::new(sample.xs().to_vec(), weights)?;
    }

    let sources = [
        a.family.is_some(),
        a.psi.is_some(),
        a.link.is_some() || a.target.is_some(),
    ];
    if sources.iter().filter(|s| **s).count() != 1 {
        return usage("give exactly one of --family, --psi, or --f/--F");
    }

    let mut weighted_extension = false;
    let (kernel_json, method, result) = if let Some(id) = &a.family {
        let params = a
            .params
            .iter()
            .map(|p| split_param(p))
            .collect::<Result<Vec<_>>>()?;
        let spec = FamilySpec::from_params(id, &params)?;
        let k = make_kernel(&spec)?;
        if a.closed_form {
            let theta = closed_form_estimate(&spec, &sample)?;
            weighted_extension = !sample.is_uniform();
            (
                family_json(&spec),
                "closed_form",
                closed_json(theta, residual_at(&k, &sample, theta)),
            )
        } else {
            let r = solve_sign_change(&k, &sample, &cfg)?;
            (family_json(&spec), "sign_change", solver_json(&r))
        }
    } else if let Some(src) = &a.psi {
        if !a.params.is_empty() {
            return usage("--param only applies to --family");
        }
        if a.closed_form {
            return usage("expression kernels have no closed form");
        }
        let Some(theta) = &a.theta else {
            return usage("--psi needs --theta lo,hi");
        };
        let theta = parse_theta(theta)?;
        let e = parse(src)?;
        let k = expr_kernel(&e, theta);
        let r = solve_sign_change(&k, &sample, &cfg)?;
        (
            json!({ "psi": e.to_string(), "theta": interval_json(theta) }),
            "sign_change",
            solver_json(&r),
        )
    } else {
        let (Some(f_src), Some(t_src)) = (&a.link, &a.target) else {
            return usage("a Bajraktarevic kernel needs both --f and --F");
        };
        let Some(theta) = &a.theta else {
            return usage("--f/--F need --theta lo,hi");
        };
        let theta = parse_theta(theta)?;
        let f = parse(f_src)?;
        let p = parse(a.weight.as_deref().unwrap_or("1"))?;
        let big_f = parse(t_src)?;
        let spec = BajraktarevicSpec::from_exprs(&f, &p, &big_f, theta);
        spec.validate(sample.xs(), &cfg)?;
        let k = as_kernel(&spec);
        let echo = json!({
            "f": f.to_string(),
            "p": p.to_string(),
            "F": big_f.to_string(),
            "theta": interval_json(theta),
        });
        if a.closed_form {
            let theta = bajraktarevic_estimate(&spec, &sample, &cfg)?;
            (
                echo,
                "closed_form",
                closed_json(theta, residual_at(&k, &sample, theta)),
            )
        } else {
            let r = solve_sign_change(&k, &sample, &cfg)?;
            (echo, "sign_change", solver_json(&r))
        }
    };

    let converged = result.get("status") == Some(&Value::from("Converged"));
    let mut report = Map::new();
    report.insert("command".into(), Value::from("estimate"));
    report.insert("kernel".into(), kernel_json);
    report.insert("method".into(), Value::from(method));
    report.extend(result);
    report.insert("n".into(), Value::from(sample.len()));
    report.insert("weighted".into(), Value::from(!sample.is_uniform()));
    report.insert("weighted_extension".into(), Value::from(weighted_extension));
    report.insert(
        "tolerance".into(),
        json!({ "abs": num(cfg.abs_tol), "rel": num(cfg.rel_tol) }),
    );
    report.insert("seed".into(), Value::from(seed));
    Ok((Value::Object(report), if converged { 0 } else { 2 }))
}

/// `family:name=value` or an expression in `x` and `t`.
fn kernel_from_spec(s: &str, theta: Option<OpenInterval>) -> Result<(PsiKernel, Value)> {
    if let Some((head, rest)) = s.split_once(':') {
        let id = head.trim();
        if FAMILY_IDS.contains(&id) {
            let params = if rest.trim().is_empty() {
                Vec::new()
            } else {
                vec![split_param(rest)?]
            };
            let spec = FamilySpec::from_params(id, &params)?;
            return Ok((make_kernel(&spec)?, family_json(&spec)));
        }
        return Err(Error::InvalidArgument(format!("unknown family `{id}`")));
    }
    let e = parse(s)?;
    let Some(theta) = theta else {
        return Err(Error::InvalidArgument(format!(
            "expression kernel `{s}` needs --theta lo,hi"
        )));
    };
    Ok((
        expr_kernel(&e, theta),
        json!({ "psi": e.to_string(), "theta": interval_json(theta) }),
    ))
}

fn witness_json(w: &Witness) -> Value {
    match w {
        Witness::Theta1 {
            x,
            theta_psi,
            theta_phi,
        } => json!({
            "kind": "theta1", "x": num(*x), "theta_psi": num(*theta_psi), "theta_phi": num(*theta_phi),
        }),
        Witness::Sample {
            xs,
            weights,
            theta_psi,
            theta_phi,
        } => json!({
            "kind": "sample",
            "xs": xs.iter().map(|v| num(*v)).collect::<Vec<_>>(),
            "weights": weights.iter().map(|v| num(*v)).collect::<Vec<_>>(),
            "theta_psi": num(*theta_psi),
            "theta_phi": num(*theta_phi),
        }),
        Witness::Ratio { x, y, t, lhs, rhs } => json!({
            "kind": "ratio", "x": num(*x), "y": num(*y), "t": num(*t), "lhs": num(*lhs), "rhs": num(*rhs),
        }),
        Witness::Derivative { x, y, t, lhs, rhs } => json!({
            "kind": "derivative", "x": num(*x), "y": num(*y), "t": num(*t), "lhs": num(*lhs), "rhs": num(*rhs),
        }),
        Witness::Sandwich { z, t, p, lhs, rhs } => json!({
            "kind": "sandwich", "z": num(*z), "t": num(*t), "p": num(*p), "lhs": num(*lhs), "rhs": num(*rhs),
        }),
        Witness::SignMismatch {
            xs,
            weights,
            t,
            sum_psi,
            sum_phi,
        } => json!({
            "kind": "sign_mismatch",
            "xs": xs.iter().map(|v| num(*v)).collect::<Vec<_>>(),
            "weights": weights.iter().map(|v| num(*v)).collect::<Vec<_>>(),
            "t": num(*t),
            "sum_psi": num(*sum_psi),
            "sum_phi": num(*sum_phi),
        }),
        Witness::Failure { xs, weights, message } => json!({
            "kind": "failure",
            "xs": xs.iter().map(|v| num(*v)).collect::<Vec<_>>(),
            "weights": weights.iter().map(|v| num(*v)).collect::<Vec<_>>(),
            "message": message,
        }),
    }
}

fn opt_usize(v: Option<usize>) -> Value {
    v.map(Value::from).unwrap_or(Value::Null)
}

fn opt_num(v: Option<f64>) -> Value {
    v.map(num).unwrap_or(Value::Null)
}

fn verdict_json(v: &ComparisonVerdict) -> Value {
    json!({
        "condition": v.condition.as_str(),
        "status": v.status.as_str(),
        "witness": v.witness.as_ref().map(witness_json).unwrap_or(Value::Null),
        "samples_tested": v.grid.samples_tested,
        "pairs_tested": v.grid.pairs_tested,
        "points_tested": v.grid.points_tested,
        "max_n": opt_usize(v.grid.max_n),
        "max_km": opt_usize(v.grid.max_km),
        "fd_step": opt_num(v.grid.fd_step),
        "max_abs_diff": opt_num(v.max_abs_diff),
        "max_excess": opt_num(v.max_excess),
        "multiplier_range": v.multiplier_range.map(|(a, b)| json!([num(a), num(b)])).unwrap_or(Value::Null),
        "notes": v.notes,
    })
}

fn exit_code(status: VerdictStatus) -> i32 {
    match status {
        VerdictStatus::NoCounterexample => 0,
        VerdictStatus::Counterexample => 3,
        VerdictStatus::Inconclusive => 2,
    }
}

fn cmd_compare(a: CompareArgs) -> Outcome {
    let cfg = solver_config(a.tol)?;
    let seed = resolve_seed(a.seed)?;
    if a.grid == 0 || a.max_n == 0 || a.max_km < 2 {
        return usage("--grid and --max-n must be positive and --max-km at least 2");
    }
    if !(a.fd_step > 0.0 && a.fd_step.is_finite()) {
        return usage("--fd-step must be positive");
    }
    let theta = a.theta.as_deref().map(parse_theta).transpose()?;
    let (k_psi, psi_json) = kernel_from_spec(&a.psi, theta)?;
    let (k_phi, phi_json) = kernel_from_spec(&a.phi, theta)?;
    let obs = read_data(&a.data)?.xs().to_vec();
    let opts = CheckOptions {
        max_n: a.max_n,
        trials: a.trials,
        max_km: a.max_km,
        fd_step: a.fd_step,
        solver: cfg,
    };
    let ws = WitnessSet::build(&k_psi, &k_phi, &obs, a.grid, seed, &cfg)?;
    let verdicts: Vec<ComparisonVerdict> = match a.condition.as_str() {
        "all" => check_all(&k_psi, &k_phi, &ws, &opts),
        "direct" => vec![check_direct(&k_psi, &k_phi, &ws, &opts)],
        "two-point" => vec![check_two_point_all(&k_psi, &k_phi, &ws, &opts)],
        "ratio" => vec![check_ratio_condition(&k_psi, &k_phi, &ws, &cfg)],
        "multiplier" => vec![check_multiplier(&k_psi, &k_phi, &ws, &cfg)],
        "derivative" => vec![check_derivative_condition(&k_psi, &k_phi, &ws, a.fd_step, &cfg)?],
        "equality" => vec![check_equality(&k_psi, &k_phi, &ws, &opts)?],
        other => return usage(format!(
            "unknown condition `{other}` (direct, two-point, ratio, multiplier, derivative, equality, all)"
        )),
    };
    let status = if a.condition == "all" {
        combined_status(&verdicts)
    } else {
        verdicts[0].status
    };
    let report = json!({
        "command": "compare",
        "psi": psi_json,
        "phi": phi_json,
        "condition": a.condition,
        "status": status.as_str(),
        "witness_set": {
            "observations": obs.iter().map(|v| num(*v)).collect::<Vec<_>>(),
            "grid_points": ws.grid().len(),
            "hull": ws.hull().interval().map(interval_json).unwrap_or(Value::Null),
            "seed": seed,
        },
        "options": {
            "grid": a.grid,
            "trials": a.trials,
            "max_n": a.max_n,
            "max_km": a.max_km,
            "fd_step": num(a.fd_step),
            "tolerance": { "abs": num(cfg.abs_tol), "rel": num(cfg.rel_tol) },
        },
        "verdicts": verdicts.iter().map(verdict_json).collect::<Vec<_>>(),
    });
    Ok((report, exit_code(status)))
}

/// Largest step not above the default that keeps `t ± 3·step` inside Θ.
fn fitted_step(theta: OpenInterval, t: f64) -> f64 {
    let mut h = schwarzian_step(t);
    while !(theta.contains(t - 3.0 * h) && theta.contains(t + 3.0 * h)) && h > 1e-8 {
        h *= 0.5;
    }
    h
}

fn cmd_mobius_test(a: MobiusArgs) -> Outcome {
    if a.probes < 4 {
        return usage("--probes must be at least 4");
    }
    let theta = parse_theta(&a.theta)?;
    let f = parse(&a.f)?;
    let g = parse(&a.g)?;
    let ts = theta.probe_grid(a.probes);
    let eval_all = |e: &Expr| -> Result<Vec<(f64, f64)>> {
        ts.iter().map(|&t| Ok((t, eval_expr(e, 0.0, t)?))).collect()
    };
    let f_vals = eval_all(&f).map_err(|e| Failure::Compute(e.to_string()))?;
    let g_vals = eval_all(&g).map_err(|e| Failure::Compute(e.to_string()))?;

    let n = ts.len();
    let mut quadruples = 0usize;
    let (mut max_abs, mut max_rel) = (0.0f64, 0.0f64);
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                for l in k + 1..n {
                    let fq = [f_vals[i].1, f_vals[j].1, f_vals[k].1, f_vals[l].1];
                    let gq = [g_vals[i].1, g_vals[j].1, g_vals[k].1, g_vals[l].1];
                    let d = determinant_test(fq, gq).abs();
                    max_abs = max_abs.max(d);
                    max_rel = max_rel.max(d / determinant_scale(fq, gq).max(f64::MIN_POSITIVE));
                    quadruples += 1;
                }
            }
        }
    }

    let fe = |t: f64| eval_expr(&f, 0.0, t).unwrap_or(f64::NAN);
    let ge = |t: f64| eval_expr(&g, 0.0, t).unwrap_or(f64::NAN);
    let mut s_max = 0.0f64;
    for &t in &ts {
        let s = relative_schwarzian(fe, ge, t, fitted_step(theta, t))
            .map_err(|e| Failure::Compute(e.to_string()))?;
        s_max = s_max.max(s.abs());
    }

    let fit = mobius_fit(&f_vals, &g_vals).map_err(|e| Failure::Compute(e.to_string()))?;
    let fit_json = match &fit {
        MobiusFit::Fit {
            coefficients: m,
            max_residual,
        } => json!({
            "status": "Fit",
            "a": num(m.a), "b": num(m.b), "c": num(m.c), "d": num(m.d),
            "max_residual": num(*max_residual),
        }),
        MobiusFit::NoFit { max_residual, reason } => json!({
            "status": "NoFit",
            "max_residual": num(*max_residual),
            "reason": reason,
        }),
    };
    let report = json!({
        "command": "mobius-test",
        "f": f.to_string(),
        "g": g.to_string(),
        "theta": interval_json(theta),
        "probes": ts.iter().map(|v| num(*v)).collect::<Vec<_>>(),
        "determinant": {
            "quadruples": quadruples,
            "max_abs": num(max_abs),
            "max_relative": num(max_rel),
            "relative_tolerance": num(1e-9),
            "vanishes": max_rel <= 1e-9,
        },
        "schwarzian": {
            "max_abs": num(s_max),
            "tolerance": num(1e-4),
            "vanishes": s_max <= 1e-4,
        },
        "fit": fit_json,
        "mobius": fit.is_fit(),
    });
    Ok((report, 0))
}

fn cmd_bounds(a: BoundsArgs) -> Outcome {
    let cfg = solver_config(a.tol)?;
    if !(a.alpha > 0.0 && a.alpha.is_finite()) {
        return usage(format!("--alpha {} must be positive", a.alpha));
    }
    let sample = read_data(&a.data)?;
    let (lower, upper) = beta_alpha_bounds(a.alpha, &sample).map_err(|e| Failure::Compute(e.to_string()))?;
    let k = make_kernel(&FamilySpec::BetaBeta { alpha: a.alpha })?;
    let r = solve_sign_change(&k, &sample, &cfg)?;
    let slack = 10.0 * cfg.tolerance_at(r.theta);
    let inside = r.is_converged() && lower - slack <= r.theta && r.theta <= upper + slack;
    let mean_ln: f64 = sample.iter().map(|(x, w)| w * x.ln()).sum::<f64>() / sample.total_weight();
    let report = json!({
        "command": "bounds",
        "alpha": num(a.alpha),
        "n": sample.len(),
        "weighted": !sample.is_uniform(),
        "lower": num(lower),
        "upper": num(upper),
        "estimate": num(r.theta),
        "status": r.status.as_str(),
        "inside": inside,
        "limit_alpha_one": num(-1.0 / mean_ln),
        "equation_residual": num(beta_beta_residual(a.alpha, &sample, r.theta)),
    });
    Ok((report, if r.is_converged() { 0 } else { 2 }))
}
