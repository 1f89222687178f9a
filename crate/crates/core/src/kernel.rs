//! Backstepping kernel on the unit triangle `0 <= y <= s <= 1` and the boundary gains.
//!
//! The kernel satisfies
//!
//! ```text
//! k_s + k_y = int_y^s k(s, xi) F(xi, y) dxi - F(s, y)
//! k(s, 0)   = int_0^s k(s, y) G(y) dy - G(s)
//! ```
//!
//! Integrating the first equation along the diagonal direction `(1, 1)` from the edge
//! `y = 0` gives the fixed-point form solved here by successive approximation:
//!
//! ```text
//! k(d + y, y) = e(d) + int_0^y R(d + q, q) dq
//! e(p)        = int_0^p k(p, y) G(y) dy - G(p)
//! R(p, q)     = int_q^p k(p, xi) F(xi, q) dxi - F(p, q)
//! ```

use rayon::prelude::*;
use serde::Serialize;

use crate::characteristics::Leaf;
use crate::coefficients::LeafCoefficients;
use crate::error::{Error, Result};
use crate::scalar::{lerp_uniform, Real};
use crate::tri::TriMatrix;

pub const DEFAULT_TOLERANCE: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 200;

/// Solved kernel `k_ij ~ k(i/M, j/M)` for one leaf.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelTable<S> {
    pub leaf_id: usize,
    pub values: TriMatrix<S>,
    pub iterations: usize,
    pub last_change: S,
    pub residual: Residual<S>,
}

impl<S: Real> KernelTable<S> {
    /// `M`.
    pub fn intervals(&self) -> usize {
        self.values.size()
    }

    /// `k(1, j/M)`.
    pub fn top_row(&self) -> &[S] {
        self.values.row(self.values.size())
    }

    /// Copy with `delta` added at node `(i, j)`.
    pub fn perturbed(&self, i: usize, j: usize, delta: S) -> Self {
        let mut out = self.clone();
        out.values.set(i, j, self.values.get(i, j) + delta);
        out
    }
}

/// Defects of the discrete kernel equations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Residual<S> {
    pub pde: S,
    pub bc: S,
}

/// Edge defect `e(p)` of the boundary condition, trapezoidal in `y`.
fn edge<S: Real>(k: &TriMatrix<S>, g: &[S], h: S) -> Vec<S> {
    let half = S::lit(0.5);
    (0..=k.size())
        .map(|p| {
            let row = k.row(p);
            let integral = if p == 0 {
                S::zero()
            } else {
                let inner: S = (1..p).map(|y| row[y] * g[y]).sum();
                h * (half * (row[0] * g[0] + row[p] * g[p]) + inner)
            };
            integral - g[p]
        })
        .collect()
}

/// `R(p, q)` for every node, trapezoidal in `xi`.
fn source<S: Real>(k: &TriMatrix<S>, f: &TriMatrix<S>, h: S) -> TriMatrix<S> {
    let half = S::lit(0.5);
    TriMatrix::from_fn(k.size(), |p, q| {
        let row = k.row(p);
        let integral = if p == q {
            S::zero()
        } else {
            let inner: S = (q + 1..p).map(|xi| row[xi] * f.get(xi, q)).sum();
            h * (half * (row[q] * f.get(q, q) + row[p] * f.get(p, q)) + inner)
        };
        integral - f.get(p, q)
    })
}

/// One application of the fixed-point map.
pub fn kernel_sweep<S: Real>(k: &TriMatrix<S>, g: &[S], f: Option<&TriMatrix<S>>) -> TriMatrix<S> {
    let m = k.size();
    let h = S::one() / S::of_usize(m);
    let half = S::lit(0.5);
    let e = edge(k, g, h);
    let mut out = TriMatrix::zeros(m);
    match f {
        None => {
            for i in 0..=m {
                for j in 0..=i {
                    out.set(i, j, e[i - j]);
                }
            }
        }
        Some(f) => {
            let r = source(k, f, h);
            for d in 0..=m {
                // Running trapezoid along the diagonal i - j = d.
                let mut acc = S::zero();
                out.set(d, 0, e[d]);
                for j in 1..=m - d {
                    acc += half * h * (r.get(d + j - 1, j - 1) + r.get(d + j, j));
                    out.set(d + j, j, e[d] + acc);
                }
            }
        }
    }
    out
}

fn check_inputs<S: Real>(g: &[S], f: Option<&TriMatrix<S>>, m: usize) -> Result<()> {
    if m < 2 {
        return Err(Error::InvalidParameter(format!("kernel grid needs M >= 2, got {m}")));
    }
    if g.len() != m + 1 {
        return Err(Error::GridMismatch {
            state: g.len(),
            gain: m + 1,
        });
    }
    if let Some(f) = f {
        if f.size() != m {
            return Err(Error::GridMismatch {
                state: f.size() + 1,
                gain: m + 1,
            });
        }
    }
    Ok(())
}

/// Successive approximations from `k0 = sweep(0)` until the largest node change is
/// below `tol`.
pub fn solve_kernel<S: Real>(
    g: &[S],
    f: Option<&TriMatrix<S>>,
    m: usize,
    tol: S,
    max_iter: usize,
) -> Result<KernelTable<S>> {
    if !(tol > S::zero()) {
        return Err(Error::InvalidParameter(format!("kernel tolerance must be positive, got {tol}")));
    }
    check_inputs(g, f, m)?;
    let mut k = kernel_sweep(&TriMatrix::zeros(m), g, f);
    let mut change = S::infinity();
    for it in 1..=max_iter {
        let next = kernel_sweep(&k, g, f);
        change = next.max_diff(&k);
        k = next;
        if !change.is_finite() {
            break;
        }
        if change < tol {
            let residual = kernel_residual(&k, g, f);
            return Ok(KernelTable {
                leaf_id: 0,
                values: k,
                iterations: it,
                last_change: change,
                residual,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        last_change: change.to_f64_lossy(),
    })
}

/// Solves the kernel of one leaf from its absorbed coefficients.
pub fn solve_leaf_kernel<S: Real>(lc: &LeafCoefficients<S>, tol: S, max_iter: usize) -> Result<KernelTable<S>> {
    let mut kt = solve_kernel(&lc.big_g, lc.big_f.as_ref(), lc.unit_intervals(), tol, max_iter)?;
    kt.leaf_id = lc.leaf_id;
    Ok(kt)
}

/// [`solve_leaf_kernel`] over all leaves in parallel, in leaf order.
pub fn solve_all_kernels<S: Real>(
    coefficients: &[LeafCoefficients<S>],
    tol: S,
    max_iter: usize,
) -> Result<Vec<KernelTable<S>>> {
    coefficients
        .par_iter()
        .map(|lc| solve_leaf_kernel(lc, tol, max_iter))
        .collect()
}

/// Residuals of a tabulated kernel: the diagonal derivative by central differences
/// against `R` on nodes `1 <= j <= i <= M - 1`, and the edge condition on `j = 0`.
pub fn kernel_residual<S: Real>(k: &TriMatrix<S>, g: &[S], f: Option<&TriMatrix<S>>) -> Residual<S> {
    let m = k.size();
    let h = S::one() / S::of_usize(m);
    let two_h = h + h;
    let r = f.map(|f| source(k, f, h));
    let mut pde = S::zero();
    for i in 1..m {
        for j in 1..=i {
            let deriv = (k.get(i + 1, j + 1) - k.get(i - 1, j - 1)) / two_h;
            let rhs = r.as_ref().map_or(S::zero(), |r| r.get(i, j));
            pde = pde.max((deriv - rhs).abs());
        }
    }
    let e = edge(k, g, h);
    let bc = (0..=m).fold(S::zero(), |acc, p| acc.max((k.get(p, 0) - e[p]).abs()));
    Residual { pde, bc }
}

/// Closed-form kernel `k(s, y) = -c e^{(beta + c)(s - y)}` of the recirculation
/// family `a = (1, 1)`, `g = gamma e^{b (x1 + x2)}`, `lambda = f = 0`, with
/// `c = gamma T e^{b (rho1 + rho2)}` and `beta = 2 b T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticKernel {
    pub c: f64,
    pub beta: f64,
}

impl AnalyticKernel {
    pub fn recirculation(gamma: f64, b: f64, rho: &[f64], transit: f64) -> Self {
        let rho_sum: f64 = rho.iter().sum();
        AnalyticKernel {
            c: gamma * transit * (b * rho_sum).exp(),
            beta: 2.0 * b * transit,
        }
    }

    /// Constant `g = g0` (`b = 0`): `k(s, y) = -g0 T e^{g0 T (s - y)}`.
    pub fn constant_g(g0: f64, transit: f64) -> Self {
        AnalyticKernel {
            c: g0 * transit,
            beta: 0.0,
        }
    }

    pub fn eval(&self, s: f64, y: f64) -> f64 {
        -self.c * ((self.beta + self.c) * (s - y)).exp()
    }

    /// Nodal values `k((i - j) / M)`.
    pub fn table<S: Real>(&self, m: usize) -> TriMatrix<S> {
        TriMatrix::from_fn(m, |i, j| S::lit(self.eval((i - j) as f64 / m as f64, 0.0)))
    }
}

/// `analytic_kernel_recirc(gamma, b, rho, T)` as a function on the triangle.
pub fn analytic_kernel_recirc(gamma: f64, b: f64, rho: &[f64], transit: f64) -> impl Fn(f64, f64) -> f64 {
    let k = AnalyticKernel::recirculation(gamma, b, rho, transit);
    move |s, y| k.eval(s, y)
}

/// Boundary gains of one leaf on its `sigma` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GainTable<S> {
    pub leaf_id: usize,
    /// `K(sigma_i) = (1/T) k(1, sigma_i/T) e^{Lambda(sigma_i/T) - Lambda(1)}`.
    pub k_sigma: Vec<S>,
    /// `K(z, phi_i) = K(sigma_i) / |a(phi_i)|`, with `z` the leaf's entry point.
    pub k_arc: Vec<S>,
}

impl<S: Real> GainTable<S> {
    pub fn zero(leaf: &Leaf<S>) -> Self {
        let n = leaf.sigma.len();
        GainTable {
            leaf_id: leaf.id,
            k_sigma: vec![S::zero(); n],
            k_arc: vec![S::zero(); n],
        }
    }
}

/// Gains from the top kernel row and `Lambda`, both linearly interpolated onto the leaf grid.
pub fn assemble_gain<S: Real>(kt: &KernelTable<S>, big_lambda: &[S], leaf: &Leaf<S>) -> Result<GainTable<S>> {
    gain_from_row(kt.top_row(), big_lambda, leaf)
}

/// [`assemble_gain`] from the top row `k(1, j/M)` alone.
pub fn gain_from_row<S: Real>(top: &[S], big_lambda: &[S], leaf: &Leaf<S>) -> Result<GainTable<S>> {
    if big_lambda.len() != top.len() {
        return Err(Error::GridMismatch {
            state: big_lambda.len(),
            gain: top.len(),
        });
    }
    let t = leaf.transit_time;
    let lambda_one = big_lambda[big_lambda.len() - 1];
    let mut k_sigma = Vec::with_capacity(leaf.sigma.len());
    let mut k_arc = Vec::with_capacity(leaf.sigma.len());
    for (i, (&s, &speed)) in leaf.sigma.iter().zip(&leaf.speeds).enumerate() {
        if speed == S::zero() {
            return Err(Error::ZeroSpeed { leaf_id: leaf.id, index: i });
        }
        let u = s / t;
        let kv = lerp_uniform(top, S::one(), u) / t * (lerp_uniform(big_lambda, S::one(), u) - lambda_one).exp();
        k_sigma.push(kv);
        k_arc.push(kv / speed);
    }
    Ok(GainTable {
        leaf_id: leaf.id,
        k_sigma,
        k_arc,
    })
}
