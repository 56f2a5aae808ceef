//! Shared generators for the integration tests.
#![allow(dead_code)]

pub mod links;

use psiest::exprparse::parse;
use psiest::families::FamilySpec;
use psiest::WeightedSample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// One representative spec per catalog family.
pub fn catalog() -> Vec<FamilySpec> {
    vec![
        FamilySpec::Expectile { alpha: 0.3 },
        FamilySpec::Mathieu {
            f: parse("t^2").unwrap(),
        },
        FamilySpec::NormalVar { m: 0.5 },
        FamilySpec::BetaAlpha { beta: 1.5 },
        FamilySpec::BetaBeta { alpha: 2.0 },
        FamilySpec::GammaShape { lambda: 1.5 },
        FamilySpec::GammaRate { p: 2.0 },
        FamilySpec::LomaxRateLambda { alpha: 1.5 },
        FamilySpec::LomaxShapeAlpha { lambda: 2.0 },
        FamilySpec::LognormalMu { sigma2: 0.5 },
        FamilySpec::LaplaceScale { mu: -1.0 },
    ]
}

/// The families with an explicit estimator, with randomized parameters.
pub fn random_closed_form_spec(r: &mut ChaCha8Rng, which: usize) -> FamilySpec {
    match which % 6 {
        0 => FamilySpec::NormalVar {
            m: r.random_range(-3.0..3.0),
        },
        1 => FamilySpec::BetaAlpha {
            beta: r.random_range(0.2..5.0),
        },
        2 => FamilySpec::GammaRate {
            p: r.random_range(0.2..5.0),
        },
        3 => FamilySpec::LomaxShapeAlpha {
            lambda: r.random_range(0.2..5.0),
        },
        4 => FamilySpec::LognormalMu {
            sigma2: r.random_range(0.1..4.0),
        },
        _ => FamilySpec::LaplaceScale {
            mu: r.random_range(-3.0..3.0),
        },
    }
}

/// A random spec from any family (Mathieu with one of a few fixed links).
pub fn random_spec(r: &mut ChaCha8Rng) -> FamilySpec {
    match r.random_range(0..11) {
        0 => FamilySpec::Expectile {
            alpha: r.random_range(0.05..0.95),
        },
        1 => {
            let links = ["t", "t^2", "t + t^3", "sqrt(t)", "ln(1 + t)"];
            FamilySpec::Mathieu {
                f: parse(links[r.random_range(0..links.len())]).unwrap(),
            }
        }
        2 => FamilySpec::NormalVar {
            m: r.random_range(-3.0..3.0),
        },
        3 => FamilySpec::BetaAlpha {
            beta: r.random_range(0.2..5.0),
        },
        4 => FamilySpec::BetaBeta {
            alpha: r.random_range(0.2..5.0),
        },
        5 => FamilySpec::GammaShape {
            lambda: r.random_range(0.2..5.0),
        },
        6 => FamilySpec::GammaRate {
            p: r.random_range(0.2..5.0),
        },
        7 => FamilySpec::LomaxRateLambda {
            alpha: r.random_range(0.2..5.0),
        },
        8 => FamilySpec::LomaxShapeAlpha {
            lambda: r.random_range(0.2..5.0),
        },
        9 => FamilySpec::LognormalMu {
            sigma2: r.random_range(0.1..4.0),
        },
        _ => FamilySpec::LaplaceScale {
            mu: r.random_range(-3.0..3.0),
        },
    }
}

/// An admissible observation for `spec`, kept away from domain edges.
pub fn draw_obs(spec: &FamilySpec, r: &mut ChaCha8Rng) -> f64 {
    loop {
        let x = match spec {
            FamilySpec::Expectile { .. }
            | FamilySpec::Mathieu { .. }
            | FamilySpec::NormalVar { .. }
            | FamilySpec::LaplaceScale { .. } => r.random_range(-5.0..5.0),
            FamilySpec::BetaAlpha { .. } | FamilySpec::BetaBeta { .. } => r.random_range(0.02..0.98),
            _ => r.random_range(0.1..10.0),
        };
        if spec.admits(x) {
            return x;
        }
    }
}

pub fn draw_sample(spec: &FamilySpec, r: &mut ChaCha8Rng, n: usize) -> WeightedSample {
    WeightedSample::uniform((0..n).map(|_| draw_obs(spec, r)).collect()).unwrap()
}

/// A sample with random positive weights.
pub fn draw_weighted(spec: &FamilySpec, r: &mut ChaCha8Rng, n: usize) -> WeightedSample {
    let xs = (0..n).map(|_| draw_obs(spec, r)).collect();
    let ws = (0..n).map(|_| r.random_range(0.1..3.0)).collect();
    WeightedSample::new(xs, ws).unwrap()
}

/// One entry of the comparison regression corpus.
pub struct CorpusPair {
    pub psi: FamilySpec,
    pub phi: FamilySpec,
    pub witnesses: &'static [f64],
    /// Whether `θψ ≤ θφ` holds for all samples.
    pub ordered: bool,
}

const EXPECTILE_W: &[f64] = &[0.0, 1.0, 2.0, 5.0];
const BETA_W: &[f64] = &[0.1, 0.3, 0.5, 0.7, 0.9];
const POSITIVE_W: &[f64] = &[0.5, 1.0, 2.0, 5.0];
const NORMAL_W: &[f64] = &[-1.0, 0.3, 2.0, 3.0];

pub fn corpus() -> Vec<CorpusPair> {
    use FamilySpec::*;
    let pair = |psi, phi, witnesses, ordered| CorpusPair {
        psi,
        phi,
        witnesses,
        ordered,
    };
    vec![
        pair(
            Expectile { alpha: 0.3 },
            Expectile { alpha: 0.7 },
            EXPECTILE_W,
            true,
        ),
        pair(
            Expectile { alpha: 0.7 },
            Expectile { alpha: 0.3 },
            EXPECTILE_W,
            false,
        ),
        pair(BetaAlpha { beta: 1.0 }, BetaAlpha { beta: 2.0 }, BETA_W, true),
        pair(BetaAlpha { beta: 2.0 }, BetaAlpha { beta: 1.0 }, BETA_W, false),
        pair(
            GammaShape { lambda: 1.0 },
            GammaShape { lambda: 2.0 },
            POSITIVE_W,
            true,
        ),
        pair(
            GammaShape { lambda: 2.0 },
            GammaShape { lambda: 1.0 },
            POSITIVE_W,
            false,
        ),
        pair(
            LomaxRateLambda { alpha: 1.0 },
            LomaxRateLambda { alpha: 2.0 },
            POSITIVE_W,
            true,
        ),
        pair(
            LomaxShapeAlpha { lambda: 2.0 },
            LomaxShapeAlpha { lambda: 1.0 },
            POSITIVE_W,
            false,
        ),
        pair(
            LognormalMu { sigma2: 1.0 },
            LognormalMu { sigma2: 4.0 },
            POSITIVE_W,
            true,
        ),
        pair(NormalVar { m: 0.0 }, NormalVar { m: 1.0 }, NORMAL_W, false),
    ]
}

/// The documented CLI example invocations: golden file stem, arguments,
/// expected exit code.
pub const GOLDEN: [(&str, &[&str], i32); 12] = [
    (
        "estimate_laplace",
        &[
            "estimate",
            "--family",
            "laplace_scale",
            "--param",
            "mu=0",
            "--data",
            "[1,-2,3]",
        ],
        0,
    ),
    (
        "estimate_expectile",
        &[
            "estimate",
            "--family",
            "expectile",
            "--param",
            "alpha=0.5",
            "--data",
            "[1,2,3]",
        ],
        0,
    ),
    (
        "estimate_beta_alpha",
        &[
            "estimate",
            "--family",
            "beta_alpha",
            "--param",
            "beta=1",
            "--data",
            "[0.5]",
        ],
        0,
    ),
    (
        "compare_expectile_ordered",
        &[
            "compare",
            "--psi",
            "expectile:alpha=0.3",
            "--phi",
            "expectile:alpha=0.7",
            "--data",
            "[0,1,2,5]",
        ],
        0,
    ),
    (
        "compare_expectile_reversed",
        &[
            "compare",
            "--psi",
            "expectile:alpha=0.7",
            "--phi",
            "expectile:alpha=0.3",
            "--data",
            "[0,1,2,5]",
        ],
        3,
    ),
    (
        "compare_lognormal_equality",
        &[
            "compare",
            "--psi",
            "lognormal_mu:sigma2=1",
            "--phi",
            "lognormal_mu:sigma2=4",
            "--data",
            "[0.5,1,2,7]",
            "--condition",
            "equality",
        ],
        0,
    ),
    (
        "mobius_fit",
        &[
            "mobius-test",
            "--f",
            "t",
            "--g",
            "(2*t+1)/(t+3)",
            "--theta",
            "0,10",
            "--probes",
            "8",
        ],
        0,
    ),
    (
        "mobius_cubic",
        &[
            "mobius-test",
            "--f",
            "t",
            "--g",
            "t^3",
            "--theta",
            "1,5",
            "--probes",
            "8",
        ],
        0,
    ),
    (
        "mobius_affine",
        &[
            "mobius-test",
            "--f",
            "t",
            "--g",
            "2*t+3",
            "--theta",
            "0,10",
            "--probes",
            "8",
        ],
        0,
    ),
    (
        "bounds_alpha_one",
        &[
            "bounds",
            "--alpha",
            "1",
            "--data",
            "[0.36787944117144233,0.36787944117144233]",
        ],
        0,
    ),
    (
        "bounds_alpha_two",
        &[
            "bounds",
            "--alpha",
            "2",
            "--data",
            "[0.36787944117144233,0.36787944117144233]",
        ],
        0,
    ),
    (
        "bounds_near_one",
        &["bounds", "--alpha", "0.5", "--data", "[0.99]"],
        0,
    ),
];

pub fn golden_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

pub fn schema_path() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schema/report.schema.json")
}

/// Runs the built binary with a clean seed environment.
pub fn run_cli(bin: &str, args: &[&str]) -> (i32, Vec<u8>, Vec<u8>) {
    let out = std::process::Command::new(bin)
        .args(args)
        .env_remove("PSIEST_SEED")
        .output()
        .expect("binary runs");
    (out.status.code().unwrap_or(-1), out.stdout, out.stderr)
}
