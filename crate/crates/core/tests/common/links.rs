//! Link functions and Möbius coefficients for the Bajraktarević tests.

use psiest::bajraktarevic::{BajraktarevicSpec, MobiusCoefficients};
use psiest::{OpenInterval, WeightedSample};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy)]
pub enum Link {
    Id,
    Ln,
    Exp,
    Cube,
    Affine(f64, f64),
}

impl Link {
    pub fn eval(self, t: f64) -> f64 {
        match self {
            Link::Id => t,
            Link::Ln => t.ln(),
            Link::Exp => t.exp(),
            Link::Cube => t * t * t,
            Link::Affine(a, b) => a * t + b,
        }
    }

    pub fn random(r: &mut ChaCha8Rng) -> Self {
        match r.random_range(0..5) {
            0 => Link::Id,
            1 => Link::Ln,
            2 => Link::Exp,
            3 => Link::Cube,
            _ => Link::Affine(r.random_range(0.5..3.0), r.random_range(0.0..2.0)),
        }
    }

    /// Infimum of the link over `(0, ∞)`.
    pub fn floor(self) -> f64 {
        match self {
            Link::Ln => f64::NEG_INFINITY,
            Link::Exp => 1.0,
            Link::Affine(_, b) => b,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Gen {
    pub link: Link,
    pub weight: usize,
    /// `h(x) = a x^b`, so that `F = f ∘ h` and `θ₁(x) = h(x)`.
    pub a: f64,
    pub b: f64,
}

impl Gen {
    pub fn random(r: &mut ChaCha8Rng) -> Self {
        Gen {
            link: Link::random(r),
            weight: r.random_range(0..3),
            a: r.random_range(0.5..2.0),
            b: r.random_range(0.5..2.0),
        }
    }

    /// Keeps `θ₁ = a x^b` below about 10 for `x < 3`. A Möbius image of `exp`
    /// flattens like `e^(-t)`, so larger estimates are not resolved to 1e-9 in f64.
    pub fn moderate(r: &mut ChaCha8Rng) -> Self {
        Gen {
            link: Link::random(r),
            weight: r.random_range(0..3),
            a: r.random_range(0.5..2.0),
            b: r.random_range(0.5..1.5),
        }
    }

    pub fn spec(self) -> BajraktarevicSpec {
        let Gen { link, weight, a, b } = self;
        let p = move |x: f64| match weight {
            0 => 1.0,
            1 => x,
            _ => x.exp().min(1e6),
        };
        BajraktarevicSpec::new(
            move |t| link.eval(t),
            p,
            move |x: f64| link.eval(a * x.powf(b)),
            OpenInterval::POSITIVE,
        )
    }
}

pub fn positive_sample(r: &mut ChaCha8Rng, n: usize) -> WeightedSample {
    positive_sample_below(r, n, 5.0)
}

pub fn positive_sample_below(r: &mut ChaCha8Rng, n: usize, hi: f64) -> WeightedSample {
    let xs = (0..n).map(|_| r.random_range(0.1..hi)).collect();
    let ws = (0..n).map(|_| r.random_range(0.2..3.0)).collect();
    WeightedSample::new(xs, ws).unwrap()
}

/// Coefficients keeping `c f + d > 0` for every value above `floor`.
pub fn random_coefficients(r: &mut ChaCha8Rng, floor: f64) -> MobiusCoefficients {
    let c = if floor.is_finite() {
        r.random_range(0.0..2.0)
    } else {
        0.0
    };
    let d = r.random_range(0.1..2.0) - if c > 0.0 { c * floor.min(0.0) } else { 0.0 };
    let b = r.random_range(-2.0..2.0);
    let a = (b * c + r.random_range(0.1..2.0)) / d;
    MobiusCoefficients::new(a, b, c, d).unwrap()
}

/// Like [`random_coefficients`], with the pole `f = -d/c` at least one unit
/// below `floor`. Finite differences of `g` lose accuracy near the pole.
pub fn separated_coefficients(r: &mut ChaCha8Rng, floor: f64) -> MobiusCoefficients {
    let c = if floor.is_finite() {
        r.random_range(0.0..2.0)
    } else {
        0.0
    };
    let d = r.random_range(0.1..2.0) + c * (1.0 - floor.min(0.0));
    let b = r.random_range(-2.0..2.0);
    let a = (b * c + r.random_range(0.1..2.0)) / d;
    MobiusCoefficients::new(a, b, c, d).unwrap()
}
