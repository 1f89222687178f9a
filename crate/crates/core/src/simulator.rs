//! Time stepping of the per-leaf transport equations
//!
//! ```text
//! u_t = u_sigma + lambda_hat u + g_hat u(0) + int_0^sigma f_hat u dsigma'
//! u(T, t) = U(t) + eps(t)              closed loop
//! u(T, t) = v0(z)                      open loop
//! ```
//!
//! with `dt = T/N` equal to the leaf spacing, so transport is an exact index shift.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::characteristics::{psi_map, CharCoords, FlowConfig, Leaf, LeafSet};
use crate::coefficients::{LeafCoefficients, ProblemSpec};
use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::geometry::ImplicitDomain;
use crate::kernel::{GainTable, KernelTable};
use crate::scalar::{lerp_uniform, sup_abs, trapezoid, Real};

/// Guard on `sup |u|` beyond which a run is declared unstable.
pub const INSTABILITY_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Open,
    Closed,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Open => "open",
            Mode::Closed => "closed",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "open" => Ok(Mode::Open),
            "closed" => Ok(Mode::Closed),
            other => Err(format!("unknown mode `{other}`, expected `open` or `closed`")),
        }
    }
}

/// `u` on one leaf at that leaf's own clock.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafState<S> {
    pub leaf_id: usize,
    pub time: S,
    pub step_index: usize,
    /// `u_i ~ u(sigma_i, t)`, `i = 0..=N`.
    pub values: Vec<S>,
    /// Equals the leaf spacing `T/N`.
    pub dt: S,
    /// Boundary value imposed at `sigma = T` for the current time.
    pub applied_boundary: S,
}

/// Closed-form power-law offset `eps' = -m1 sign(eps) |eps|^m2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonState<S> {
    pub eps0: S,
    pub m1: S,
    pub m2: S,
    /// `t_o = |eps0|^(1-m2) / (m1 (1-m2))`.
    pub settle_time: S,
}

impl<S: Real> EpsilonState<S> {
    pub fn new(eps0: S, m1: S, m2: S) -> Self {
        let p = S::one() - m2;
        EpsilonState {
            eps0,
            m1,
            m2,
            settle_time: eps0.abs().powf(p) / (m1 * p),
        }
    }

    pub fn zero(m1: S, m2: S) -> Self {
        Self::new(S::zero(), m1, m2)
    }

    pub fn at(&self, t: S) -> S {
        if self.eps0 == S::zero() || t >= self.settle_time {
            return S::zero();
        }
        let p = S::one() - self.m2;
        let base = (self.eps0.abs().powf(p) - self.m1 * p * t).max(S::zero());
        self.eps0.signum() * base.powf(S::one() / p)
    }
}

/// `epsilon_at(es, t)`.
pub fn epsilon_at<S: Real>(es: &EpsilonState<S>, t: S) -> S {
    es.at(t)
}

/// Per-leaf states and offsets sharing one mode and output schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleState<S> {
    pub leaves: Vec<LeafState<S>>,
    pub epsilons: Vec<EpsilonState<S>>,
    pub mode: Mode,
    pub schedule: Vec<S>,
}

impl<S: Real> EnsembleState<S> {
    /// `max_leaf (T + t_o)`, the horizon after which every leaf has settled.
    pub fn settle_horizon(&self, leaves: &[Leaf<S>]) -> S {
        leaves
            .iter()
            .zip(&self.epsilons)
            .fold(S::zero(), |m, (l, e)| m.max(l.transit_time + e.settle_time))
    }

    pub fn max_settle_time(&self) -> S {
        self.epsilons.iter().fold(S::zero(), |m, e| m.max(e.settle_time))
    }
}

/// `U = int_0^T K(sigma) u(sigma) dsigma` by the trapezoidal rule on the leaf grid.
pub fn control_u<S: Real>(ls: &LeafState<S>, gains: &GainTable<S>) -> Result<S> {
    if ls.values.len() != gains.k_sigma.len() {
        return Err(Error::GridMismatch {
            state: ls.values.len(),
            gain: gains.k_sigma.len(),
        });
    }
    let ku: Vec<S> = gains.k_sigma.iter().zip(&ls.values).map(|(&k, &u)| k * u).collect();
    Ok(trapezoid(&ku, ls.dt))
}

/// Initial states `u_i = v0(phi_i)`. In closed loop `eps0 = v0(z) - U(v0)` so the
/// modified boundary value matches `v0(z)` at `t = 0`.
pub fn init_state<S: Real>(
    spec: &ProblemSpec,
    leaves: &[Leaf<S>],
    gains: Option<&[GainTable<S>]>,
    mode: Mode,
    schedule: Vec<S>,
) -> Result<EnsembleState<S>> {
    if mode == Mode::Closed && gains.is_none_or(|g| g.len() != leaves.len()) {
        return Err(Error::MissingGains);
    }
    let m1 = S::lit(spec.epsilon.m1);
    let m2 = S::lit(spec.epsilon.m2);
    let mut states = Vec::with_capacity(leaves.len());
    let mut epsilons = Vec::with_capacity(leaves.len());
    for (k, leaf) in leaves.iter().enumerate() {
        let values = leaf
            .points
            .iter()
            .map(|p| spec.eval_v0(p))
            .collect::<Result<Vec<S>>>()?;
        let boundary = *values.last().expect("leaf has nodes");
        let ls = LeafState {
            leaf_id: leaf.id,
            time: S::zero(),
            step_index: 0,
            values,
            dt: leaf.spacing(),
            applied_boundary: boundary,
        };
        let eps = match (mode, gains) {
            (Mode::Closed, Some(g)) => EpsilonState::new(boundary - control_u(&ls, &g[k])?, m1, m2),
            _ => EpsilonState::zero(m1, m2),
        };
        states.push(ls);
        epsilons.push(eps);
    }
    let mut schedule = schedule;
    schedule.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    Ok(EnsembleState {
        leaves: states,
        epsilons,
        mode,
        schedule,
    })
}

/// Right-hand side `lambda_hat u + g_hat u_0 + int f_hat u` at every node but the last.
fn source_terms<S: Real>(u: &[S], lc: &LeafCoefficients<S>, h: S, out: &mut [S]) {
    let n = u.len() - 1;
    let half = S::lit(0.5);
    for i in 0..n {
        let mut s = lc.lambda_hat[i] * u[i] + lc.g_hat[i] * u[0];
        if let Some(f) = &lc.f_hat {
            if i > 0 {
                let row = f.row(i);
                let inner: S = (1..i).map(|j| row[j] * u[j]).sum();
                s += h * (half * (row[0] * u[0] + row[i] * u[i]) + inner);
            }
        }
        out[i] = s;
    }
}

/// Advances one leaf by `dt = T/N`: exact shift plus Heun's rule for the sources, then
/// the boundary node.
///
/// In closed loop `u_N` solves `u_N = U(u_new) + eps(t + dt)`, where the quadrature for
/// `U` includes `u_N` itself with weight `dt/2`; in open loop `u_N` keeps its value.
pub fn step<S: Real>(
    ls: &LeafState<S>,
    coeffs: &LeafCoefficients<S>,
    gains: Option<&GainTable<S>>,
    es: &EpsilonState<S>,
    mode: Mode,
) -> Result<LeafState<S>> {
    let u = &ls.values;
    let n = u.len() - 1;
    if coeffs.lambda_hat.len() != u.len() {
        return Err(Error::GridMismatch {
            state: u.len(),
            gain: coeffs.lambda_hat.len(),
        });
    }
    let h = ls.dt;
    let half = S::lit(0.5);
    let mut s0 = vec![S::zero(); n + 1];
    source_terms(u, coeffs, h, &mut s0[..]);
    // The boundary node carries no source of its own; its shift partner is node N.
    let s_at = |s: &[S], i: usize| if i < n { s[i] } else { source_at_boundary(u, coeffs, h) };
    let mut predictor = vec![S::zero(); n + 1];
    for i in 0..n {
        predictor[i] = u[i + 1] + h * s_at(&s0, i + 1);
    }
    let mut s1 = vec![S::zero(); n + 1];
    source_terms(&predictor, coeffs, h, &mut s1[..]);
    let mut next = vec![S::zero(); n + 1];
    for i in 0..n {
        next[i] = u[i + 1] + half * h * (s_at(&s0, i + 1) + s1[i]);
    }
    let time = ls.time + h;
    let boundary = match mode {
        Mode::Open => ls.applied_boundary,
        Mode::Closed => {
            let gains = gains.ok_or(Error::MissingGains)?;
            if gains.k_sigma.len() != next.len() {
                return Err(Error::GridMismatch {
                    state: next.len(),
                    gain: gains.k_sigma.len(),
                });
            }
            let k = &gains.k_sigma;
            let mut rest = half * k[0] * next[0];
            for i in 1..n {
                rest += k[i] * next[i];
            }
            (h * rest + es.at(time)) / (S::one() - half * h * k[n])
        }
    };
    next[n] = boundary;
    let peak = sup_abs(&next);
    if !(peak.to_f64_lossy() <= INSTABILITY_LIMIT) {
        return Err(Error::Instability {
            leaf_id: ls.leaf_id,
            time: time.to_f64_lossy(),
            limit: INSTABILITY_LIMIT,
        });
    }
    Ok(LeafState {
        leaf_id: ls.leaf_id,
        time,
        step_index: ls.step_index + 1,
        values: next,
        dt: h,
        applied_boundary: boundary,
    })
}

fn source_at_boundary<S: Real>(u: &[S], lc: &LeafCoefficients<S>, h: S) -> S {
    let n = u.len() - 1;
    let half = S::lit(0.5);
    let mut s = lc.lambda_hat[n] * u[n] + lc.g_hat[n] * u[0];
    if let Some(f) = &lc.f_hat {
        let row = f.row(n);
        let inner: S = (1..n).map(|j| row[j] * u[j]).sum();
        s += h * (half * (row[0] * u[0] + row[n] * u[n]) + inner);
    }
    s
}

/// `max |w_bar|` on the unit grid, with `v_bar(s) = u(T s)`, `w = e^Lambda v_bar` and
/// `w_bar = w - int_0^s k(s, y) w(y) dy`.
pub fn verify_target<S: Real>(ls: &LeafState<S>, kt: &KernelTable<S>, big_lambda: &[S]) -> S {
    let m = kt.intervals();
    let h = S::one() / S::of_usize(m);
    let half = S::lit(0.5);
    let w: Vec<S> = (0..=m)
        .map(|i| {
            let s = S::of_usize(i) * h;
            big_lambda[i].exp() * lerp_uniform(&ls.values, S::one(), s)
        })
        .collect();
    (0..=m).fold(S::zero(), |acc, i| {
        let row = kt.values.row(i);
        let integral = if i == 0 {
            S::zero()
        } else {
            let inner: S = (1..i).map(|j| row[j] * w[j]).sum();
            h * (half * (row[0] * w[0] + row[i] * w[i]) + inner)
        };
        acc.max((w[i] - integral).abs())
    })
}

/// Inputs for tracking `max |w_bar|` once a leaf has settled.
#[derive(Debug, Clone, Copy)]
pub struct TargetCheck<'a, S> {
    pub kernel: &'a KernelTable<S>,
    pub big_lambda: &'a [S],
}

/// Result of advancing one leaf through the schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafRun<S> {
    pub leaf_id: usize,
    /// `u` at each schedule time, linearly interpolated between the bracketing steps.
    pub records: Vec<Vec<S>>,
    pub final_state: LeafState<S>,
    /// `max |w_bar|` over steps with `t >= T + t_o`, if tracked.
    pub settled_target: Option<S>,
    /// `max |u|` over steps with `t >= T + t_o`.
    pub settled_sup: S,
}

/// Steps one leaf until the last schedule time is covered.
pub fn run_leaf<S: Real>(
    initial: &LeafState<S>,
    coeffs: &LeafCoefficients<S>,
    gains: Option<&GainTable<S>>,
    es: &EpsilonState<S>,
    mode: Mode,
    schedule: &[S],
    target: Option<TargetCheck<'_, S>>,
) -> Result<LeafRun<S>> {
    let settle = coeffs.transit_time + es.settle_time;
    let mut records = Vec::with_capacity(schedule.len());
    let mut state = initial.clone();
    let mut settled_target = target.map(|_| S::zero());
    let mut settled_sup = S::zero();
    let mut next_record = 0;
    let end = schedule.last().copied().unwrap_or_else(S::zero);
    loop {
        while next_record < schedule.len() && schedule[next_record] <= state.time {
            records.push(state.values.clone());
            next_record += 1;
        }
        if next_record == schedule.len() && state.time >= end {
            break;
        }
        let next = step(&state, coeffs, gains, es, mode)?;
        while next_record < schedule.len() && schedule[next_record] < next.time {
            let theta = (schedule[next_record] - state.time) / (next.time - state.time);
            records.push(
                state
                    .values
                    .iter()
                    .zip(&next.values)
                    .map(|(&a, &b)| if theta == S::zero() { a } else { a + theta * (b - a) })
                    .collect(),
            );
            next_record += 1;
        }
        state = next;
        if state.time >= settle {
            settled_sup = settled_sup.max(sup_abs(&state.values));
            if let (Some(t), Some(acc)) = (target, settled_target.as_mut()) {
                *acc = acc.max(verify_target(&state, t.kernel, t.big_lambda));
            }
        }
    }
    Ok(LeafRun {
        leaf_id: initial.leaf_id,
        records,
        final_state: state,
        settled_target,
        settled_sup,
    })
}

/// Runs every leaf of the ensemble through its schedule, in parallel. Leaves share no
/// state, so the result does not depend on the evaluation order.
pub fn run_ensemble<S: Real>(
    ensemble: &EnsembleState<S>,
    coeffs: &[LeafCoefficients<S>],
    gains: Option<&[GainTable<S>]>,
    targets: Option<(&[KernelTable<S>], &[LeafCoefficients<S>])>,
) -> Result<Vec<LeafRun<S>>> {
    if ensemble.mode == Mode::Closed && gains.is_none() {
        return Err(Error::MissingGains);
    }
    (0..ensemble.leaves.len())
        .into_par_iter()
        .map(|k| {
            let target = targets.map(|(kt, lc)| TargetCheck {
                kernel: &kt[k],
                big_lambda: &lc[k].big_lambda,
            });
            run_leaf(
                &ensemble.leaves[k],
                &coeffs[k],
                gains.map(|g| &g[k]),
                &ensemble.epsilons[k],
                ensemble.mode,
                &ensemble.schedule,
                target,
            )
        })
        .collect()
}

/// Where an off-leaf sample point reads its value.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleLocation<S> {
    pub point: Vec<S>,
    /// Entry time `tau+(x)`. Each stencil leaf is read at the same time to the inflow
    /// boundary, `sigma = T(leaf) - tau+(x)`, so inflow-driven profiles line up.
    pub ahead: S,
    pub stencil: Vec<(usize, S)>,
}

/// Sample points of a snapshot: every leaf node plus located grid points.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePlan<S> {
    pub grid: Vec<SampleLocation<S>>,
    pub skipped: usize,
}

impl<S: Real> SamplePlan<S> {
    /// Locates the given points through `Psi`. Points whose characteristic cannot be
    /// matched to a leaf are counted as skipped.
    pub fn locate(
        a: &dyn VectorField<S>,
        domain: &ImplicitDomain<S>,
        cfg: &FlowConfig<S>,
        leaves: &LeafSet<S>,
        points: &[Vec<S>],
    ) -> Self {
        let located: Vec<Option<SampleLocation<S>>> = points
            .par_iter()
            .map(|x| {
                let CharCoords { sigma, stencil, .. } = psi_map(a, x, domain, cfg, leaves).ok()?;
                let ahead = crate::characteristics::entry_time(a, x, domain, cfg).ok()?;
                if !(sigma + ahead > S::zero()) {
                    return None;
                }
                Some(SampleLocation {
                    point: x.clone(),
                    ahead,
                    stencil,
                })
            })
            .collect();
        let skipped = located.iter().filter(|l| l.is_none()).count();
        SamplePlan {
            grid: located.into_iter().flatten().collect(),
            skipped,
        }
    }
}

/// `v(x, t)` at leaf nodes and plan points for one schedule entry.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSnapshot<S> {
    pub time: S,
    pub points: Vec<Vec<S>>,
    pub values: Vec<S>,
    pub sup_norm: S,
    pub skipped: usize,
}

/// Value of a leaf profile at time `ahead` before its inflow end. A neighbouring leaf
/// shorter than `ahead` is extended linearly past its outflow end.
fn read_leaf<S: Real>(u: &[S], transit: S, ahead: S) -> S {
    let sigma = transit - ahead;
    if sigma >= S::zero() || u.len() < 2 {
        return lerp_uniform(u, transit, sigma);
    }
    let h = transit / S::of_usize(u.len() - 1);
    u[0] + sigma / h * (u[1] - u[0])
}

/// Gathers `v = u o Psi` at schedule entry `index`. `runs` may be in any order.
pub fn snapshot<S: Real>(
    runs: &[LeafRun<S>],
    leaves: &[Leaf<S>],
    plan: &SamplePlan<S>,
    schedule: &[S],
    index: usize,
) -> FieldSnapshot<S> {
    let mut by_id: Vec<Option<&LeafRun<S>>> = vec![None; leaves.len()];
    for r in runs {
        if r.leaf_id < by_id.len() {
            by_id[r.leaf_id] = Some(r);
        }
    }
    let mut points = Vec::new();
    let mut values = Vec::new();
    for (leaf, run) in leaves.iter().zip(&by_id) {
        let Some(run) = run else { continue };
        let u = &run.records[index];
        points.extend(leaf.points.iter().cloned());
        values.extend(u.iter().copied());
    }
    for loc in &plan.grid {
        let mut v = S::zero();
        for &(id, w) in &loc.stencil {
            if let Some(run) = by_id[id] {
                v += w * read_leaf(&run.records[index], leaves[id].transit_time, loc.ahead);
            }
        }
        points.push(loc.point.clone());
        values.push(v);
    }
    let sup_norm = sup_abs(&values);
    FieldSnapshot {
        time: schedule[index],
        points,
        values,
        sup_norm,
        skipped: plan.skipped,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::characteristics::build_leaf;
    use crate::coefficients::{leaf_coefficients, EpsilonParams, Expr};
    use crate::field::ConstantField;
    use crate::kernel::{assemble_gain, solve_leaf_kernel};

    fn interval_leaf(n: usize) -> Leaf<f64> {
        let d = ImplicitDomain::interval(0.0, 1.0).unwrap();
        let c = FlowConfig::for_domain(&d, 1.0, 10.0);
        build_leaf(&ConstantField::new(vec![1.0]), &[0.0], n, &d, &c).unwrap()
    }

    fn spec_1d(g: &str, v0: &str) -> ProblemSpec {
        ProblemSpec::new(
            vec![Expr::constant(1.0)],
            Expr::constant(0.0),
            Expr::parse(g).unwrap(),
            Expr::constant(0.0),
            Expr::parse(v0).unwrap(),
            EpsilonParams::default(),
        )
        .unwrap()
    }

    #[test]
    fn epsilon_closed_form() {
        let e = EpsilonState::<f64>::new(1.0, 5.0, 0.5);
        assert!((e.settle_time - 0.4).abs() < 1e-15);
        assert!((e.at(0.2) - 0.25).abs() < 1e-15);
        assert_eq!(e.at(0.0), 1.0);
        assert_eq!(e.at(0.4), 0.0);
        assert_eq!(e.at(3.0), 0.0);
        let neg = EpsilonState::<f64>::new(-1.0, 5.0, 0.5);
        assert!((neg.at(0.2) + 0.25).abs() < 1e-15);
        let z = EpsilonState::<f64>::zero(5.0, 0.5);
        assert_eq!(z.settle_time, 0.0);
        assert_eq!(z.at(0.0), 0.0);
    }

    #[test]
    fn pure_transport_is_exact_shift() {
        let leaf = interval_leaf(10);
        let spec = spec_1d("0", "sin(3*x1) + 2");
        let lc = leaf_coefficients(&spec, &leaf, 10).unwrap();
        let ens = init_state(&spec, std::slice::from_ref(&leaf), None, Mode::Open, vec![]).unwrap();
        let mut s = ens.leaves[0].clone();
        s.applied_boundary = 0.0;
        s.values[10] = 0.0;
        let u0 = s.values.clone();
        for m in 1..=12 {
            s = step(&s, &lc, None, &ens.epsilons[0], Mode::Open).unwrap();
            for i in 0..=10 {
                let expect = if i + m < 10 { u0[i + m] } else { 0.0 };
                assert_eq!(s.values[i], expect, "step {m} node {i}");
            }
        }
    }

    #[test]
    fn closed_loop_requires_gains() {
        let leaf = interval_leaf(4);
        let spec = spec_1d("1", "x1");
        assert!(matches!(
            init_state(&spec, &[leaf], None, Mode::Closed, vec![]),
            Err(Error::MissingGains)
        ));
    }

    #[test]
    fn control_quadrature() {
        let ls = LeafState {
            leaf_id: 0,
            time: 0.0,
            step_index: 0,
            values: vec![1.0; 5],
            dt: 0.25,
            applied_boundary: 1.0,
        };
        let gains = GainTable {
            leaf_id: 0,
            k_sigma: vec![2.0; 5],
            k_arc: vec![2.0; 5],
        };
        assert_eq!(control_u(&ls, &gains).unwrap(), 2.0);
        let zero = LeafState {
            values: vec![0.0; 5],
            ..ls.clone()
        };
        assert_eq!(control_u(&zero, &gains).unwrap(), 0.0);
        let short = GainTable {
            k_sigma: vec![2.0; 4],
            ..gains
        };
        assert!(matches!(control_u(&ls, &short), Err(Error::GridMismatch { .. })));
    }

    #[test]
    fn closed_loop_1d_settles() {
        let n = 200;
        let leaf = interval_leaf(n);
        let spec = spec_1d("1", "1 + x1");
        let lc = leaf_coefficients(&spec, &leaf, n).unwrap();
        let kt = solve_leaf_kernel(&lc, 1e-12, 200).unwrap();
        let gains = assemble_gain(&kt, &lc.big_lambda, &leaf).unwrap();
        let g = [gains];
        let ens = init_state(&spec, std::slice::from_ref(&leaf), Some(&g), Mode::Closed, vec![0.0, 3.0]).unwrap();
        let es = ens.epsilons[0];
        assert!(es.eps0 != 0.0);
        // Boundary value at t = 0 matches the initial data.
        let u0 = control_u(&ens.leaves[0], &g[0]).unwrap() + es.at(0.0);
        assert!((u0 - 2.0).abs() < 1e-12);
        let runs = run_ensemble(
            &ens,
            std::slice::from_ref(&lc),
            Some(&g),
            Some((std::slice::from_ref(&kt), std::slice::from_ref(&lc))),
        )
        .unwrap();
        let run = &runs[0];
        assert!(1.0 + es.settle_time < 3.0);
        assert!(run.settled_sup < 1e-2, "{}", run.settled_sup);
        assert!(run.settled_target.unwrap() < 5.0 / n as f64);
        // Boundary enforcement after the last step.
        let fs = &run.final_state;
        let u = control_u(fs, &g[0]).unwrap() + es.at(fs.time);
        assert!((fs.values[n] - u).abs() < 1e-12);
        assert_eq!(fs.values[n], fs.applied_boundary);
    }

    #[test]
    fn target_of_zero_state_is_zero() {
        let leaf = interval_leaf(8);
        let spec = spec_1d("1", "0");
        let lc = leaf_coefficients(&spec, &leaf, 8).unwrap();
        let kt = solve_leaf_kernel(&lc, 1e-12, 200).unwrap();
        let ens = init_state(&spec, std::slice::from_ref(&leaf), None, Mode::Open, vec![]).unwrap();
        assert_eq!(verify_target(&ens.leaves[0], &kt, &lc.big_lambda), 0.0);
    }

    #[test]
    fn records_interpolate_in_time() {
        let leaf = interval_leaf(4);
        let spec = spec_1d("0", "x1");
        let lc = leaf_coefficients(&spec, &leaf, 4).unwrap();
        let ens = init_state(&spec, std::slice::from_ref(&leaf), None, Mode::Open, vec![0.0, 0.125, 0.25]).unwrap();
        let runs = run_ensemble(&ens, std::slice::from_ref(&lc), None, None).unwrap();
        let r = &runs[0].records;
        let close = |got: &[f64], want: [f64; 5]| got.iter().zip(want).all(|(a, b)| (a - b).abs() < 1e-12);
        assert!(close(&r[0], [0.0, 0.25, 0.5, 0.75, 1.0]));
        assert!(close(&r[1], [0.125, 0.375, 0.625, 0.875, 1.0]));
        assert!(close(&r[2], [0.25, 0.5, 0.75, 1.0, 1.0]));
        // A schedule time on a step is recorded without interpolation.
        assert_eq!(r[0], ens.leaves[0].values);
    }

    #[test]
    fn leaves_are_read_from_the_inflow_end() {
        let u = [1.0f64, 2.0, 3.0, 4.0, 5.0];
        // T = 2, h = 0.5: ahead 0.75 reads sigma 1.25.
        assert!((read_leaf(&u, 2.0, 0.75) - 3.5).abs() < 1e-15);
        assert_eq!(read_leaf(&u, 2.0, 0.0), 5.0);
        // Past the outflow end the first cell is extended.
        assert!((read_leaf(&u, 2.0, 2.25) - 0.5).abs() < 1e-15);
    }
}
