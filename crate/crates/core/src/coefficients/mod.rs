//! Problem coefficients and their per-leaf transformations.
//!
//! Along a leaf the coefficients go through three stages:
//!
//! 1. transformed: `lambda_hat(sigma) = lambda(phi)`, `g_hat = g(phi)`,
//!    `f_hat(sigma, sigma') = f(phi, phi') |a(phi')|`, on the leaf grid;
//! 2. rescaled to the unit interval: `lambda_bar = T lambda_hat`, `g_bar = T g_hat`,
//!    `f_bar = T^2 f_hat`, resampled on `i / M`;
//! 3. absorbed: `Lambda` is the running integral of `lambda_bar`, `G = g_bar e^Lambda`,
//!    `F(s, y) = f_bar(s, y) e^{Lambda(s) - Lambda(y)}`.

pub mod expr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use expr::{Bindings, Expr, ExprError, Var};

use crate::characteristics::Leaf;
use crate::error::{Error, Result};
use crate::field::ExprField;
use crate::scalar::{lerp_uniform, Real};
use crate::tri::TriMatrix;

/// Largest admissible `|Lambda|` before exponentiation.
pub const ABSORPTION_LIMIT: f64 = 700.0;

/// Power-law settling parameters of the boundary compatibility offset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonParams {
    pub m1: f64,
    pub m2: f64,
}

impl Default for EpsilonParams {
    fn default() -> Self {
        EpsilonParams { m1: 5.0, m2: 0.5 }
    }
}

/// Velocity, reaction `lambda`, recirculation `g`, nonlocal kernel `f`, initial state `v0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub velocity: Vec<Expr>,
    pub lambda: Expr,
    pub g: Expr,
    pub f: Expr,
    pub v0: Expr,
    pub epsilon: EpsilonParams,
}

fn check_vars(name: &str, e: &Expr, dim: usize, allow_y: bool) -> Result<()> {
    for v in e.variables() {
        let ok = match v {
            Var::X(k) => k < dim,
            Var::Y(k) => allow_y && k < dim,
            Var::T => false,
        };
        if !ok {
            return Err(Error::InvalidParameter(format!(
                "{name} = `{}` uses `{v}`, not a variable of a {dim}-dimensional problem",
                e.source()
            )));
        }
    }
    Ok(())
}

impl ProblemSpec {
    pub fn new(
        velocity: Vec<Expr>,
        lambda: Expr,
        g: Expr,
        f: Expr,
        v0: Expr,
        epsilon: EpsilonParams,
    ) -> Result<Self> {
        let spec = ProblemSpec {
            velocity,
            lambda,
            g,
            f,
            v0,
            epsilon,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.velocity.len();
        if n == 0 {
            return Err(Error::InvalidParameter("velocity has no components".into()));
        }
        for (k, e) in self.velocity.iter().enumerate() {
            check_vars(&format!("velocity[{k}]"), e, n, false)?;
        }
        check_vars("lambda", &self.lambda, n, false)?;
        check_vars("g", &self.g, n, false)?;
        check_vars("v0", &self.v0, n, false)?;
        check_vars("f", &self.f, n, true)?;
        let EpsilonParams { m1, m2 } = self.epsilon;
        if !(m1 > 0.0 && m1.is_finite()) {
            return Err(Error::InvalidParameter(format!("epsilon.m1 = {m1} must be positive")));
        }
        if !(m2 > 0.0 && m2 < 1.0) {
            return Err(Error::InvalidParameter(format!("epsilon.m2 = {m2} must lie in (0, 1)")));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.velocity.len()
    }

    pub fn velocity_field(&self) -> ExprField {
        ExprField::new(self.velocity.clone())
    }

    /// The unit-disk recirculation example: `a = (1, 1)`, `g = gamma e^{b (x1 + x2)}`,
    /// `v0 = 1 - |x|^2`, no reaction and no nonlocal term.
    pub fn disk_example(gamma: f64, b: f64) -> Self {
        let parse = |s: &str| Expr::parse(s).expect("built-in expression");
        ProblemSpec {
            velocity: vec![Expr::constant(1.0), Expr::constant(1.0)],
            lambda: Expr::constant(0.0),
            g: parse(&format!("{gamma:?}*exp({b:?}*(x1+x2))")),
            f: Expr::constant(0.0),
            v0: parse("1 - x1^2 - x2^2"),
            epsilon: EpsilonParams::default(),
        }
    }

    pub fn eval_v0<S: Real>(&self, x: &[S]) -> Result<S> {
        eval_at(&self.v0, &Bindings::x(x), "v0", x)
    }
}

fn eval_at<S: Real>(e: &Expr, b: &Bindings<'_, S>, name: &str, x: &[S]) -> Result<S> {
    e.eval(b).map_err(|source| Error::Expression {
        context: format!("{name} at {:?}", x.iter().map(|v| v.to_f64_lossy()).collect::<Vec<_>>()),
        source,
    })
}

/// All coefficient stages for one leaf. The absorbed arrays are empty until
/// [`rescale_coefficients`] and [`absorb_reaction`] have run.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafCoefficients<S> {
    pub leaf_id: usize,
    pub transit_time: S,
    /// On the leaf grid `sigma_i = i T / N`.
    pub lambda_hat: Vec<S>,
    pub g_hat: Vec<S>,
    /// `None` when `f` is identically zero.
    pub f_hat: Option<TriMatrix<S>>,
    /// On the unit grid `i / M`.
    pub lambda_bar: Vec<S>,
    pub g_bar: Vec<S>,
    pub f_bar: Option<TriMatrix<S>>,
    pub big_lambda: Vec<S>,
    pub big_g: Vec<S>,
    pub big_f: Option<TriMatrix<S>>,
}

impl<S: Real> LeafCoefficients<S> {
    /// `M`, the unit-grid interval count, or zero before rescaling.
    pub fn unit_intervals(&self) -> usize {
        self.lambda_bar.len().saturating_sub(1)
    }

    /// `Lambda(1)`.
    pub fn lambda_total(&self) -> S {
        self.big_lambda.last().copied().unwrap_or_else(S::zero)
    }
}

/// Samples `lambda`, `g` and `f |a|` at the leaf points.
pub fn transform_coefficients<S: Real>(spec: &ProblemSpec, leaf: &Leaf<S>) -> Result<LeafCoefficients<S>> {
    let n = leaf.points.len();
    let scalar = |e: &Expr, name: &str| -> Result<Vec<S>> {
        if let Some(c) = e.constant_value() {
            return Ok(vec![S::lit(c); n]);
        }
        leaf.points
            .iter()
            .enumerate()
            .map(|(i, p)| eval_at(e, &Bindings::x(p), &format!("{name} on leaf {} node {i}", leaf.id), p))
            .collect()
    };
    let lambda_hat = scalar(&spec.lambda, "lambda")?;
    let g_hat = scalar(&spec.g, "g")?;
    let f_hat = if spec.f.is_zero() {
        None
    } else {
        let mut m = TriMatrix::zeros(n - 1);
        for i in 0..n {
            for j in 0..=i {
                let b = Bindings::xy(&leaf.points[i], &leaf.points[j]);
                let v = eval_at(&spec.f, &b, &format!("f on leaf {} nodes ({i}, {j})", leaf.id), &leaf.points[i])?;
                m.set(i, j, v * leaf.speeds[j]);
            }
        }
        Some(m)
    };
    Ok(LeafCoefficients {
        leaf_id: leaf.id,
        transit_time: leaf.transit_time,
        lambda_hat,
        g_hat,
        f_hat,
        lambda_bar: Vec::new(),
        g_bar: Vec::new(),
        f_bar: None,
        big_lambda: Vec::new(),
        big_g: Vec::new(),
        big_f: None,
    })
}

/// Bilinear interpolation of a lower-triangular table on `[0, span]^2`; corners
/// above the diagonal are replaced by their diagonal neighbour.
fn tri_interp<S: Real>(m: &TriMatrix<S>, span: S, s: S, y: S) -> S {
    let n = m.size();
    if n == 0 {
        return m.get(0, 0);
    }
    let scale = S::of_usize(n) / span;
    let pos = |v: S| {
        let p = (v * scale).max(S::zero()).min(S::of_usize(n));
        let b = p.floor().to_usize().unwrap_or(0).min(n - 1);
        (b, p - S::of_usize(b))
    };
    let (i0, ti) = pos(s);
    let (j0, tj) = pos(y);
    let at = |i: usize, j: usize| m.get(i, j.min(i));
    let one = S::one();
    (one - ti) * ((one - tj) * at(i0, j0) + tj * at(i0, j0 + 1))
        + ti * ((one - tj) * at(i0 + 1, j0) + tj * at(i0 + 1, j0 + 1))
}

/// Scales by `T` (`T^2` for `f`) and resamples on the unit grid with `m` intervals.
pub fn rescale_coefficients<S: Real>(lc: &mut LeafCoefficients<S>, m: usize) -> Result<()> {
    if m < 2 {
        return Err(Error::InvalidParameter(format!("unit grid needs at least 2 intervals, got {m}")));
    }
    let t = lc.transit_time;
    let unit = |i: usize| S::of_usize(i) / S::of_usize(m);
    let resample = |v: &[S]| -> Vec<S> { (0..=m).map(|i| t * lerp_uniform(v, t, unit(i) * t)).collect() };
    lc.lambda_bar = resample(&lc.lambda_hat);
    lc.g_bar = resample(&lc.g_hat);
    lc.f_bar = lc
        .f_hat
        .as_ref()
        .map(|fh| TriMatrix::from_fn(m, |i, j| t * t * tri_interp(fh, t, unit(i) * t, unit(j) * t)));
    Ok(())
}

/// Running trapezoidal integral `Lambda`, then `G` and `F`.
pub fn absorb_reaction<S: Real>(lc: &mut LeafCoefficients<S>) -> Result<()> {
    let m = lc.unit_intervals();
    if m == 0 {
        return Err(Error::InvalidParameter("coefficients must be rescaled before absorption".into()));
    }
    let h = S::one() / S::of_usize(m);
    let half = S::lit(0.5);
    let mut big_lambda = Vec::with_capacity(m + 1);
    big_lambda.push(S::zero());
    for i in 1..=m {
        let prev = big_lambda[i - 1];
        big_lambda.push(prev + half * h * (lc.lambda_bar[i - 1] + lc.lambda_bar[i]));
    }
    let peak = big_lambda.iter().fold(S::zero(), |a, &v| a.max(v.abs()));
    if !(peak.to_f64_lossy() <= ABSORPTION_LIMIT) {
        return Err(Error::Overflow {
            value: peak.to_f64_lossy(),
            limit: ABSORPTION_LIMIT,
        });
    }
    lc.big_g = lc
        .g_bar
        .iter()
        .zip(&big_lambda)
        .map(|(&g, &l)| g * l.exp())
        .collect();
    lc.big_f = lc
        .f_bar
        .as_ref()
        .map(|fb| TriMatrix::from_fn(m, |i, j| fb.get(i, j) * (big_lambda[i] - big_lambda[j]).exp()));
    lc.big_lambda = big_lambda;
    Ok(())
}

/// All three stages for one leaf.
pub fn leaf_coefficients<S: Real>(spec: &ProblemSpec, leaf: &Leaf<S>, m: usize) -> Result<LeafCoefficients<S>> {
    let mut lc = transform_coefficients(spec, leaf)?;
    rescale_coefficients(&mut lc, m)?;
    absorb_reaction(&mut lc)?;
    Ok(lc)
}

/// [`leaf_coefficients`] for every leaf, in parallel, in leaf order.
pub fn all_leaf_coefficients<S: Real>(
    spec: &ProblemSpec,
    leaves: &[Leaf<S>],
    m: usize,
) -> Result<Vec<LeafCoefficients<S>>> {
    leaves.par_iter().map(|l| leaf_coefficients(spec, l, m)).collect()
}
