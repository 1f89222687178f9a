//! Invariant checks behind the `verify` subcommand.

use serde::Serialize;

use crate::characteristics::{find_crossing, flow, psi_inv_exact, psi_map, Direction, Leaf};
use crate::coefficients::{leaf_coefficients, Expr, ProblemSpec};
use crate::error::Result;
use crate::kernel::{kernel_residual, AnalyticKernel};
use crate::pipeline::{self, Discretization, Problem, Traced};
use crate::scalar::distance;
use crate::simulator::{init_state, step, Mode, SamplePlan};

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
}

impl Check {
    fn new(name: &str, value: f64, threshold: f64, detail: String) -> Self {
        Check {
            name: name.to_string(),
            passed: value <= threshold,
            value,
            threshold,
            detail,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub passed: usize,
    pub failed: usize,
    pub checks: Vec<Check>,
}

/// At most `n` indices spread evenly over `0..len`.
fn spread(len: usize, n: usize) -> Vec<usize> {
    if len <= n {
        return (0..len).collect();
    }
    (0..n).map(|k| k * (len - 1) / (n - 1).max(1)).collect()
}

pub fn run_checks(
    problem: &Problem<f64>,
    disc: &Discretization<f64>,
    traced: &Traced<f64>,
    perturb_kernel: bool,
) -> Result<VerifyReport> {
    let mut checks = vec![
        flow_composition(problem, disc, traced)?,
        psi_round_trip(problem, disc, traced)?,
    ];
    let controller = pipeline::design(problem, traced, disc)?;
    checks.push(kernel_residual_check(&controller, perturb_kernel));
    checks.push(target_annihilation(problem, traced, &controller)?);
    checks.push(transport_leaf(problem, disc, traced)?);
    checks.push(transport_grid(problem, disc, traced)?);
    if let Some(c) = one_d_reduction(problem, traced, &controller) {
        checks.push(c);
    }
    let passed = checks.iter().filter(|c| c.passed).count();
    Ok(VerifyReport {
        passed,
        failed: checks.len() - passed,
        checks,
    })
}

/// `phi(s; phi(sigma; rho)) = phi(sigma + s; rho)` on sampled leaves.
fn flow_composition(problem: &Problem<f64>, disc: &Discretization<f64>, traced: &Traced<f64>) -> Result<Check> {
    let a = problem.velocity();
    let leaves = &traced.leaves.leaves;
    let mut worst = 0.0f64;
    let picks = spread(leaves.len(), 16);
    for &k in &picks {
        let leaf = &leaves[k];
        let (sigma, s) = (0.3 * leaf.transit_time, 0.4 * leaf.transit_time);
        let mid = flow(a, &leaf.exit_point, sigma, &problem.domain, &disc.flow)?;
        let two = flow(a, &mid, s, &problem.domain, &disc.flow)?;
        let one = flow(a, &leaf.exit_point, sigma + s, &problem.domain, &disc.flow)?;
        worst = worst.max(distance(&one, &two));
    }
    Ok(Check::new("flow_composition", worst, 1e-8, format!("{} leaves", picks.len())))
}

/// `Psi^-1(Psi(x)) = x` on snapshot grid points.
fn psi_round_trip(problem: &Problem<f64>, disc: &Discretization<f64>, traced: &Traced<f64>) -> Result<Check> {
    let a = problem.velocity();
    let points = pipeline::sample_points(problem, disc);
    let mut worst = 0.0f64;
    let mut tested = 0;
    for &k in &spread(points.len(), 200) {
        let x = &points[k];
        let Ok(c) = psi_map(a, x, &problem.domain, &disc.flow, &traced.leaves) else {
            continue;
        };
        let back = psi_inv_exact(a, &c.exit_point, c.sigma, &problem.domain, &disc.flow)?;
        worst = worst.max(distance(&back, x));
        tested += 1;
    }
    Ok(Check::new("psi_round_trip", worst, 1e-6, format!("{tested} points")))
}

/// Scaled defect of the discrete kernel equations, optionally after a deliberate
/// perturbation of every table.
fn kernel_residual_check(controller: &pipeline::Controller<f64>, perturb: bool) -> Check {
    let mut worst = 0.0f64;
    for (kt, lc) in controller.kernels.iter().zip(&controller.coefficients) {
        let m = kt.intervals();
        let values = if perturb {
            kt.perturbed(m / 2, m / 4, 0.1).values
        } else {
            kt.values.clone()
        };
        let r = kernel_residual(&values, &lc.big_g, lc.big_f.as_ref());
        worst = worst.max(r.pde.max(r.bc) / (1.0 + values.max_abs()));
    }
    let detail = if perturb { "perturbed by 0.1" } else { "as solved" };
    Check::new("kernel_residual", worst, 1e-2, detail.to_string())
}

/// Closed loop: the target state vanishes to discretization accuracy once each leaf
/// has settled. The value is the worst `max |w_bar| / (5 dt)` over leaves.
fn target_annihilation(
    problem: &Problem<f64>,
    traced: &Traced<f64>,
    controller: &pipeline::Controller<f64>,
) -> Result<Check> {
    let gains = Some(controller.gains.as_slice());
    let leaves = &traced.leaves.leaves;
    let probe = init_state(&problem.spec, leaves, gains, Mode::Closed, Vec::new())?;
    let horizon = probe.settle_horizon(leaves) + 0.25 * traced.leaves.t_max();
    let plan = SamplePlan { grid: Vec::new(), skipped: 0 };
    let sim = pipeline::simulate(
        problem,
        traced,
        &controller.coefficients,
        Some(controller),
        Mode::Closed,
        &[horizon],
        &plan,
        true,
    )?;
    let worst = sim
        .runs
        .iter()
        .map(|r| r.settled_target.unwrap_or(f64::INFINITY) / (5.0 * leaves[r.leaf_id].spacing()))
        .fold(0.0f64, f64::max);
    Ok(Check::new("target_annihilation", worst, 1.0, format!("horizon {horizon:.4}")))
}

fn pure_transport(spec: &ProblemSpec) -> ProblemSpec {
    ProblemSpec {
        lambda: Expr::constant(0.0),
        g: Expr::constant(0.0),
        f: Expr::constant(0.0),
        ..spec.clone()
    }
}

/// Exact transport value of node `sigma` of `leaf` after time `t` with the inflow value held.
fn transported(problem: &Problem<f64>, disc: &Discretization<f64>, leaf: &Leaf<f64>, sigma: f64, t: f64) -> Result<f64> {
    if sigma + t < leaf.transit_time {
        let p = flow(problem.velocity(), &leaf.exit_point, sigma + t, &problem.domain, &disc.flow)?;
        problem.spec.eval_v0(&p)
    } else {
        problem.spec.eval_v0(leaf.entry_point())
    }
}

/// Open loop with all couplings removed: leaf nodes follow the exact shift.
fn transport_leaf(problem: &Problem<f64>, disc: &Discretization<f64>, traced: &Traced<f64>) -> Result<Check> {
    let spec = pure_transport(&problem.spec);
    let leaves = &traced.leaves.leaves;
    let picks = spread(leaves.len(), 8);
    let mut worst = 0.0f64;
    for &k in &picks {
        let leaf = &leaves[k];
        let n = leaf.intervals();
        let lc = leaf_coefficients(&spec, leaf, 2)?;
        let ens = init_state(&spec, std::slice::from_ref(leaf), None, Mode::Open, Vec::new())?;
        let mut state = ens.leaves[0].clone();
        let steps = n / 3;
        for _ in 0..steps {
            state = step(&state, &lc, None, &ens.epsilons[0], Mode::Open)?;
        }
        for i in (0..=n).step_by(8) {
            let exact = transported(problem, disc, leaf, leaf.sigma[i], state.time)?;
            worst = worst.max((state.values[i] - exact).abs());
        }
    }
    Ok(Check::new("transport_oracle_leaf", worst, 1e-6, format!("{} leaves", picks.len())))
}

/// Open loop with all couplings removed: interpolated grid values against the exact solution.
fn transport_grid(problem: &Problem<f64>, disc: &Discretization<f64>, traced: &Traced<f64>) -> Result<Check> {
    let a = problem.velocity();
    let transport = Problem {
        spec: pure_transport(&problem.spec),
        ..problem.clone()
    };
    let t = 0.5 * traced.leaves.t_max();
    let coefficients = pipeline::coefficients(&transport, traced, disc)?;
    let plan = pipeline::sample_plan(&transport, traced, disc);
    let sim = pipeline::simulate(&transport, traced, &coefficients, None, Mode::Open, &[t], &plan, false)?;
    let snap = &sim.snapshots[0];
    let grid_start = snap.points.len() - plan.grid.len();
    let mut worst = 0.0f64;
    for (x, &v) in snap.points[grid_start..].iter().zip(&snap.values[grid_start..]) {
        let ahead = find_crossing(a, x, Direction::Forward, &problem.domain, &disc.flow)?;
        let exact = if t < ahead.time {
            problem.spec.eval_v0(&flow(a, x, t, &problem.domain, &disc.flow)?)?
        } else {
            problem.spec.eval_v0(&ahead.point)?
        };
        worst = worst.max((v - exact).abs());
    }
    Ok(Check::new(
        "transport_oracle_grid",
        worst,
        1e-3,
        format!("{} points at t = {t:.4}", plan.grid.len()),
    ))
}

/// One-dimensional problem with constant `g`: the kernel has a closed form.
fn one_d_reduction(
    problem: &Problem<f64>,
    traced: &Traced<f64>,
    controller: &pipeline::Controller<f64>,
) -> Option<Check> {
    let spec = &problem.spec;
    if problem.domain.dim() != 1 || !spec.lambda.is_zero() || !spec.f.is_zero() {
        return None;
    }
    let g0 = spec.g.constant_value()?;
    let mut worst = 0.0f64;
    for (kt, leaf) in controller.kernels.iter().zip(&traced.leaves.leaves) {
        let exact = AnalyticKernel::constant_g(g0, leaf.transit_time).table::<f64>(kt.intervals());
        worst = worst.max(kt.values.max_diff(&exact) / exact.max_abs().max(f64::MIN_POSITIVE));
    }
    Some(Check::new("one_d_reduction", worst, 1e-3, format!("g = {g0}")))
}
