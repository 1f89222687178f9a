//! Floating-point scalar abstraction shared by every numerical stage.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, NumCast};

/// Real scalar the solvers are generic over (`f32` or `f64`).
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + NumCast
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal into this scalar.
    #[inline]
    fn lit(v: f64) -> Self {
        <Self as NumCast>::from(v).expect("f64 literal representable")
    }

    /// Converts a count or index into this scalar.
    #[inline]
    fn of_usize(v: usize) -> Self {
        <Self as NumCast>::from(v).expect("usize representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        <f64 as NumCast>::from(self).unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Euclidean norm.
pub fn norm<S: Real>(v: &[S]) -> S {
    v.iter().map(|&x| x * x).sum::<S>().sqrt()
}

pub fn dot<S: Real>(a: &[S], b: &[S]) -> S {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub fn distance<S: Real>(a: &[S], b: &[S]) -> S {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<S>()
        .sqrt()
}

/// Largest absolute entry, zero for an empty slice.
pub fn sup_abs<S: Real>(v: &[S]) -> S {
    v.iter().fold(S::zero(), |m, &x| m.max(x.abs()))
}

/// Composite trapezoidal rule on a uniform grid with spacing `h`.
pub fn trapezoid<S: Real>(values: &[S], h: S) -> S {
    match values.len() {
        0 | 1 => S::zero(),
        n => {
            let half = S::lit(0.5);
            let inner: S = values[1..n - 1].iter().copied().sum();
            h * (half * (values[0] + values[n - 1]) + inner)
        }
    }
}

/// Piecewise-linear interpolation of uniformly spaced samples on `[0, span]`.
/// Arguments outside the interval are clamped.
pub fn lerp_uniform<S: Real>(values: &[S], span: S, x: S) -> S {
    let n = values.len();
    debug_assert!(n >= 1);
    if n == 1 || span <= S::zero() {
        return values[0];
    }
    let cells = n - 1;
    let pos = (x / span * S::of_usize(cells)).max(S::zero());
    let base = pos.floor().to_usize().unwrap_or(0).min(cells - 1);
    let theta = (pos - S::of_usize(base)).min(S::one());
    values[base] + theta * (values[base + 1] - values[base])
}
