//! Acceptance suite: one line per criterion, nonzero exit if any fails.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use backstep::characteristics::{build_leaf, entry_time, exit_time, flow, psi_inv_exact, psi_map, recirculation_point, transit_time};
use backstep::cli::config::RunConfig;
use backstep::coefficients::leaf_coefficients;
use backstep::kernel::{kernel_residual, solve_leaf_kernel};
use backstep::pipeline::{self, Discretization, Problem, Traced};
use backstep::simulator::{init_state, run_ensemble, snapshot, step, EnsembleState, Mode, SamplePlan};
use backstep::{Expr, ImplicitDomain, ProblemSpec, TriMatrix};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

type Outcome = Result<(bool, String), String>;

fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn config_path(name: &str) -> PathBuf {
    manifest_dir().join("configs").join(name)
}

fn load(name: &str) -> RunConfig {
    RunConfig::load(&config_path(name)).expect("shipped config loads")
}

fn setup(cfg: &RunConfig) -> (Problem<f64>, Discretization<f64>) {
    let problem = cfg.problem().expect("problem");
    let disc = cfg.discretization(&problem).expect("discretization");
    (problem, disc)
}

fn cli(args: &[&str], config: &Path, out: &Path) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_backstep"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    if status.status.success() {
        Ok(())
    } else {
        Err(format!(
            "backstep {} exited with {:?}: {}",
            args.join(" "),
            status.status.code(),
            String::from_utf8_lossy(&status.stderr).trim()
        ))
    }
}

fn read_json(path: &Path) -> Result<serde_json::Value, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| e.to_string())
}

fn secs(d: Duration) -> String {
    format!("{:.2} s", d.as_secs_f64())
}

/// Uniform random point in the disk of radius `r`.
fn disk_point(rng: &mut StdRng, r: f64) -> Vec<f64> {
    loop {
        let x = vec![rng.random_range(-r..r), rng.random_range(-r..r)];
        if x[0] * x[0] + x[1] * x[1] < r * r {
            return x;
        }
    }
}

fn t_max_reproduction() -> Outcome {
    let out = tempfile::tempdir().map_err(|e| e.to_string())?;
    let start = Instant::now();
    cli(&["trace"], &config_path("disk.toml"), out.path())?;
    let elapsed = start.elapsed();
    let audit = read_json(&out.path().join("audit.json"))?;
    let t_max = audit["t_max"].as_f64().ok_or("audit.json lacks t_max")?;
    let leaves = audit["leaves"].as_u64().ok_or("audit.json lacks leaves")?;
    let step = load("disk.toml").discretization.integrator_step;
    let err = (t_max - 2f64.sqrt()).abs();
    let ok = err <= 1e-4 && leaves >= 200 && step <= 1e-3 && elapsed < Duration::from_secs(10);
    Ok((
        ok,
        format!("T_max {t_max:.8}, |T_max - sqrt 2| = {err:.2e} (tol 1e-4), {leaves} leaves, step {step}, {}", secs(elapsed)),
    ))
}

fn closed_form_geometry() -> Outcome {
    let (problem, disc) = setup(&load("disk.toml"));
    let a = problem.velocity();
    let mut rng = StdRng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let x = disk_point(&mut rng, 0.999);
        let s = x[0] + x[1];
        let root = (s * s + 2.0 * (1.0 - x[0] * x[0] - x[1] * x[1])).sqrt();
        let (tau_plus, tau_minus) = ((-s + root) / 2.0, (-s - root) / 2.0);
        let transit = (2.0 - (x[0] - x[1]).powi(2)).sqrt();
        let rho = [x[0] + tau_minus, x[1] + tau_minus];
        let got_plus = entry_time(a, &x, &problem.domain, &disc.flow).map_err(|e| e.to_string())?;
        let got_minus = exit_time(a, &x, &problem.domain, &disc.flow).map_err(|e| e.to_string())?;
        let got_t = transit_time(a, &x, &problem.domain, &disc.flow).map_err(|e| e.to_string())?;
        let got_rho = recirculation_point(a, &x, &problem.domain, &disc.flow).map_err(|e| e.to_string())?;
        worst = worst
            .max((got_plus - tau_plus).abs())
            .max((got_minus - tau_minus).abs())
            .max((got_t - transit).abs())
            .max((got_rho[0] - rho[0]).abs())
            .max((got_rho[1] - rho[1]).abs());
    }
    Ok((worst <= 1e-6, format!("max error over 100 points {worst:.2e} (tol 1e-6)")))
}

/// Closed-form recirculation kernel `eta(s - y)` of the disk example.
fn eta(gamma: f64, b: f64, rho: &[f64], transit: f64, d: f64) -> f64 {
    let e = (b * (rho[0] + rho[1])).exp();
    -gamma * transit * e * ((2.0 * b + gamma * e) * transit * d).exp()
}

fn max_rel(k: &TriMatrix<f64>, oracle: impl Fn(usize, usize) -> f64) -> f64 {
    let m = k.size();
    let (mut diff, mut scale) = (0.0f64, 0.0f64);
    for i in 0..=m {
        for j in 0..=i {
            let o = oracle(i, j);
            diff = diff.max((k.get(i, j) - o).abs());
            scale = scale.max(o.abs());
        }
    }
    diff / scale
}

struct KernelRun {
    m: usize,
    rel: f64,
    elapsed: Duration,
    numeric: (f64, f64),
    analytic: (f64, f64),
}

fn disk_leaf_kernels() -> Result<Vec<KernelRun>, String> {
    let domain = ImplicitDomain::ball(vec![0.0, 0.0], 1.0).map_err(|e| e.to_string())?;
    let (gamma, b) = (2.0, 0.1);
    let problem = Problem::new(domain, ProblemSpec::disk_example(gamma, b)).map_err(|e| e.to_string())?;
    let flow_cfg = problem.flow_config(64, Some(1e-3), 10.0).map_err(|e| e.to_string())?;
    let rho = [-1.0f64, 0.0];
    let transit = (2.0 - (rho[0] - rho[1]) * (rho[0] - rho[1])).sqrt();
    let mut runs = Vec::new();
    for m in [50, 100, 200] {
        let start = Instant::now();
        let leaf = build_leaf(problem.velocity(), &rho, 1000, &problem.domain, &flow_cfg).map_err(|e| e.to_string())?;
        let lc = leaf_coefficients(&problem.spec, &leaf, m).map_err(|e| e.to_string())?;
        let kt = solve_leaf_kernel(&lc, 1e-12, 200).map_err(|e| e.to_string())?;
        let elapsed = start.elapsed();
        let h = 1.0 / m as f64;
        let rel = max_rel(&kt.values, |i, j| eta(gamma, b, &rho, transit, (i - j) as f64 * h));
        let analytic = TriMatrix::from_fn(m, |i, j| eta(gamma, b, &rho, transit, (i - j) as f64 * h));
        let r = kernel_residual(&analytic, &lc.big_g, lc.big_f.as_ref());
        runs.push(KernelRun {
            m,
            rel,
            elapsed,
            numeric: (kt.residual.pde, kt.residual.bc),
            analytic: (r.pde, r.bc),
        });
    }
    Ok(runs)
}

fn kernel_oracle(runs: &[KernelRun]) -> Outcome {
    let last = runs.last().ok_or("no kernel runs")?;
    let monotone = runs.windows(2).all(|w| w[1].rel < w[0].rel);
    let slowest = runs.iter().map(|r| r.elapsed).max().unwrap_or_default();
    let errors: Vec<String> = runs.iter().map(|r| format!("M={} {:.2e}", r.m, r.rel)).collect();
    let ok = last.rel <= 1e-3 && monotone && slowest < Duration::from_secs(30);
    Ok((
        ok,
        format!(
            "relative error {} (tol 1e-3 at M=200, decreasing: {monotone}), slowest {}",
            errors.join(", "),
            secs(slowest)
        ),
    ))
}

fn kernel_residuals(runs: &[KernelRun]) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for r in runs {
        ok &= r.numeric.0 <= 10.0 * r.analytic.0 && r.numeric.1 <= 10.0 * r.analytic.1;
        parts.push(format!(
            "M={}: pde {:.2e} vs {:.2e}, bc {:.2e} vs {:.2e}",
            r.m, r.numeric.0, r.analytic.0, r.numeric.1, r.analytic.1
        ));
    }
    Ok((ok, format!("numeric vs analytic residual (bound 10x): {}", parts.join("; "))))
}

fn sup_norms(out: &Path) -> Result<(Vec<f64>, Vec<f64>), String> {
    let manifest = read_json(&out.join("manifest.json"))?;
    let list = |key: &str| -> Result<Vec<f64>, String> {
        manifest[key]
            .as_array()
            .ok_or(format!("manifest lacks {key}"))?
            .iter()
            .map(|v| v.as_f64().ok_or(format!("{key} entry is not a number")))
            .collect()
    };
    Ok((list("times")?, list("sup_norms")?))
}

fn norm_at(times: &[f64], norms: &[f64], t: f64) -> Result<f64, String> {
    times
        .iter()
        .position(|&s| s == t)
        .map(|k| norms[k])
        .ok_or(format!("no snapshot at t = {t}"))
}

fn closed_loop_stabilization() -> Outcome {
    let cfg = load("disk.toml");
    let d = &cfg.discretization;
    let p = &cfg.problem;
    let out = tempfile::tempdir().map_err(|e| e.to_string())?;
    let start = Instant::now();
    cli(&["simulate", "--mode", "closed"], &config_path("disk.toml"), out.path())?;
    let elapsed = start.elapsed();
    let (times, norms) = sup_norms(out.path())?;
    let leaves = read_json(&out.path().join("manifest.json"))?["leaf_count"].as_u64().unwrap_or(0);
    let (s0, s25) = (norm_at(&times, &norms, 0.0)?, norm_at(&times, &norms, 2.5)?);
    let setup_ok = d.dt <= 5e-3 && leaves >= 200 && p.epsilon.m1 == 5.0 && p.epsilon.m2 == 0.5;
    let ok = setup_ok && s25 <= 1e-2 && (s0 - 1.0).abs() <= 1e-3 && elapsed < Duration::from_secs(300);
    Ok((
        ok,
        format!(
            "sup(0) = {s0:.6} (1 within 1e-3), sup(2.5) = {s25:.3e} (tol 1e-2), {leaves} leaves, dt {}, {}",
            d.dt,
            secs(elapsed)
        ),
    ))
}

fn open_loop_growth() -> Outcome {
    let out = tempfile::tempdir().map_err(|e| e.to_string())?;
    cli(&["simulate", "--mode", "open"], &config_path("disk.toml"), out.path())?;
    let (times, norms) = sup_norms(out.path())?;
    let (s1, s25) = (norm_at(&times, &norms, 1.0)?, norm_at(&times, &norms, 2.5)?);
    Ok((s25 > s1 && s1 > 0.0, format!("sup(1) = {s1:.4}, sup(2.5) = {s25:.4}")))
}

fn target_annihilation() -> Outcome {
    let (problem, disc) = setup(&load("disk.toml"));
    let traced = pipeline::trace(&problem, &disc).map_err(|e| e.to_string())?;
    let controller = pipeline::design(&problem, &traced, &disc).map_err(|e| e.to_string())?;
    let leaves = &traced.leaves.leaves;
    let probe = init_state(&problem.spec, leaves, Some(&controller.gains), Mode::Closed, Vec::new())
        .map_err(|e| e.to_string())?;
    let horizon = probe.settle_horizon(leaves) + 0.25 * traced.leaves.t_max();
    let plan = SamplePlan { grid: Vec::new(), skipped: 0 };
    let sim = pipeline::simulate(
        &problem,
        &traced,
        &controller.coefficients,
        Some(&controller),
        Mode::Closed,
        &[horizon],
        &plan,
        true,
    )
    .map_err(|e| e.to_string())?;
    let mut worst_ratio = 0.0f64;
    let mut worst = 0.0f64;
    for r in &sim.runs {
        let w = r.settled_target.ok_or("target not tracked")?;
        worst = worst.max(w);
        worst_ratio = worst_ratio.max(w / (5.0 * leaves[r.leaf_id].spacing()));
    }
    Ok((
        worst_ratio <= 1.0,
        format!("max |w_bar| after settling {worst:.3e}, worst ratio to 5 dt_leaf {worst_ratio:.3} (tol 1) up to t = {horizon:.3}"),
    ))
}

fn pure_transport(spec: &ProblemSpec) -> ProblemSpec {
    ProblemSpec {
        lambda: Expr::constant(0.0),
        g: Expr::constant(0.0),
        f: Expr::constant(0.0),
        ..spec.clone()
    }
}

/// Exact transported value with zero inflow: `v0(phi(t; x))` before the characteristic
/// through `x` reaches the inflow boundary, zero after.
fn transport_oracle(problem: &Problem<f64>, disc: &Discretization<f64>, x: &[f64], t: f64) -> Result<f64, String> {
    let a = problem.velocity();
    let ahead = entry_time(a, x, &problem.domain, &disc.flow).map_err(|e| e.to_string())?;
    if t < ahead {
        let p = flow(a, x, t, &problem.domain, &disc.flow).map_err(|e| e.to_string())?;
        problem.spec.eval_v0(&p).map_err(|e| e.to_string())
    } else {
        Ok(0.0)
    }
}

fn transport_oracle_check() -> Outcome {
    let cfg = load("disk.toml");
    let (mut problem, mut disc) = setup(&cfg);
    problem.spec = pure_transport(&problem.spec);
    let traced = pipeline::trace(&problem, &disc).map_err(|e| e.to_string())?;
    let a = problem.velocity();

    // Leaf nodes after whole steps of each leaf's own clock.
    let mut leaf_err = 0.0f64;
    for leaf in &traced.leaves.leaves {
        let n = leaf.intervals();
        let lc = leaf_coefficients(&problem.spec, leaf, 2).map_err(|e| e.to_string())?;
        let ens = init_state(&problem.spec, std::slice::from_ref(leaf), None, Mode::Open, Vec::new())
            .map_err(|e| e.to_string())?;
        let mut state = ens.leaves[0].clone();
        for k in 1..=(2 * n) / 3 {
            state = step(&state, &lc, None, &ens.epsilons[0], Mode::Open).map_err(|e| e.to_string())?;
            if k == n / 3 || k == (2 * n) / 3 {
                for (i, &u) in state.values.iter().enumerate() {
                    let s = leaf.sigma[i] + state.time;
                    let exact = if s < leaf.transit_time {
                        let p = flow(a, &leaf.exit_point, s, &problem.domain, &disc.flow).map_err(|e| e.to_string())?;
                        problem.spec.eval_v0(&p).map_err(|e| e.to_string())?
                    } else {
                        0.0
                    };
                    leaf_err = leaf_err.max((u - exact).abs());
                }
            }
        }
    }

    // Off-leaf grid points through the snapshot interpolation.
    disc.dt = 5e-4;
    let traced = pipeline::trace(&problem, &disc).map_err(|e| e.to_string())?;
    let coefficients = pipeline::coefficients(&problem, &traced, &disc).map_err(|e| e.to_string())?;
    let plan = pipeline::sample_plan(&problem, &traced, &disc);
    let times = [0.25, 0.5 * traced.leaves.t_max(), 1.0];
    let sim = pipeline::simulate(&problem, &traced, &coefficients, None, Mode::Open, &times, &plan, false)
        .map_err(|e| e.to_string())?;
    let mut grid_err = 0.0f64;
    for snap in &sim.snapshots {
        let first = snap.points.len() - plan.grid.len();
        for (x, &v) in snap.points[first..].iter().zip(&snap.values[first..]) {
            grid_err = grid_err.max((v - transport_oracle(&problem, &disc, x, snap.time)?).abs());
        }
    }
    Ok((
        leaf_err <= 1e-6 && grid_err <= 1e-3,
        format!(
            "leaf nodes {leaf_err:.2e} (tol 1e-6), {} grid points at dt 5e-4 {grid_err:.2e} (tol 1e-3)",
            plan.grid.len()
        ),
    ))
}

fn one_d_reduction() -> Outcome {
    let cfg = load("interval.toml");
    let (problem, disc) = setup(&cfg);
    let g0 = problem.spec.g.constant_value().ok_or("g is not constant")?;
    let traced = pipeline::trace(&problem, &disc).map_err(|e| e.to_string())?;
    let controller = pipeline::design(&problem, &traced, &disc).map_err(|e| e.to_string())?;
    let kt = &controller.kernels[0];
    let m = kt.intervals();
    let mut kernel_err = 0.0f64;
    for i in 0..=m {
        for j in 0..=i {
            let exact = -g0 * (g0 * (i - j) as f64 / m as f64).exp();
            kernel_err = kernel_err.max((kt.values.get(i, j) - exact).abs());
        }
    }
    let times: Vec<f64> = (0..=8).map(|k| 1.0 + 0.25 * k as f64).collect();
    let plan = pipeline::sample_plan(&problem, &traced, &disc);
    let sim = pipeline::simulate(
        &problem,
        &traced,
        &controller.coefficients,
        Some(&controller),
        Mode::Closed,
        &times,
        &plan,
        false,
    )
    .map_err(|e| e.to_string())?;
    let snap_sup = sim.snapshots.iter().fold(0.0f64, |m, s| m.max(s.sup_norm));
    let step_sup = sim.runs.iter().fold(0.0f64, |m, r| m.max(r.settled_sup));
    let ok = kernel_err <= 1e-3 && snap_sup <= 1e-3 && step_sup <= 1e-3;
    Ok((
        ok,
        format!(
            "kernel error {kernel_err:.2e} at M={m} (tol 1e-3), state for t >= 1: snapshots {snap_sup:.2e}, every settled step {step_sup:.2e} (tol 1e-3)"
        ),
    ))
}

fn nonlinear_problem() -> Result<Problem<f64>, String> {
    let domain = ImplicitDomain::ball(vec![0.0, 0.0], 1.0).map_err(|e| e.to_string())?;
    let mut spec = ProblemSpec::disk_example(2.0, 0.1);
    spec.velocity = vec![
        Expr::parse("1 + 0.3*sin(x2)").map_err(|e| e.to_string())?,
        Expr::parse("0.5 + 0.2*x1^2").map_err(|e| e.to_string())?,
    ];
    Problem::new(domain, spec).map_err(|e| e.to_string())
}

fn flow_composition_property() -> Result<(bool, String), String> {
    let problem = nonlinear_problem()?;
    let cfg = problem.flow_config(64, Some(1e-3), 10.0).map_err(|e| e.to_string())?;
    let a = problem.velocity();
    let mut rng = StdRng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let x = disk_point(&mut rng, 0.9);
        let sigma = rng.random_range(-0.15..0.15);
        let s = rng.random_range(-0.15..0.15);
        let two = flow(a, &flow(a, &x, sigma, &problem.domain, &cfg).map_err(|e| e.to_string())?, s, &problem.domain, &cfg)
            .map_err(|e| e.to_string())?;
        let one = flow(a, &x, sigma + s, &problem.domain, &cfg).map_err(|e| e.to_string())?;
        worst = worst.max(backstep::scalar::distance(&one, &two));
    }
    Ok((worst <= 1e-6, format!("flow composition {worst:.2e}")))
}

fn psi_round_trip_property() -> Result<(bool, String), String> {
    let mut worst = 0.0f64;
    let mut misses = 0;
    for (k, problem) in [setup(&load("disk.toml")).0, nonlinear_problem()?].into_iter().enumerate() {
        let cfg = problem.flow_config(440, Some(1e-3), 10.0).map_err(|e| e.to_string())?;
        let disc = Discretization {
            leaf_count: 440,
            leaf_grid_min: 16,
            dt: 5e-3,
            kernel_m: 20,
            flow: cfg,
            kernel_tol: 1e-10,
            kernel_max_iter: 200,
            snapshot_grid: 11,
            audit_probes: 5,
        };
        let traced = pipeline::trace(&problem, &disc).map_err(|e| e.to_string())?;
        let a = problem.velocity();
        let mut rng = StdRng::seed_from_u64(13 + k as u64);
        for _ in 0..1000 {
            let x = disk_point(&mut rng, 0.99);
            let Ok(c) = psi_map(a, &x, &problem.domain, &cfg, &traced.leaves) else {
                misses += 1;
                continue;
            };
            let back = psi_inv_exact(a, &c.exit_point, c.sigma, &problem.domain, &cfg).map_err(|e| e.to_string())?;
            worst = worst.max(backstep::scalar::distance(&back, &x));
        }
    }
    Ok((worst <= 1e-6 && misses == 0, format!("psi round trip {worst:.2e} ({misses} unmatched)")))
}

fn shuffle_property() -> Result<(bool, String), String> {
    let mut cfg = load("disk.toml");
    cfg.discretization.leaf_count = 120;
    cfg.discretization.dt = 5e-3;
    cfg.discretization.snapshot_grid = 21;
    let (problem, disc) = setup(&cfg);
    let traced: Traced<f64> = pipeline::trace(&problem, &disc).map_err(|e| e.to_string())?;
    let controller = pipeline::design(&problem, &traced, &disc).map_err(|e| e.to_string())?;
    let plan = pipeline::sample_plan(&problem, &traced, &disc);
    let times = [0.0, 1.0, 2.5];
    let reference = pipeline::simulate(
        &problem,
        &traced,
        &controller.coefficients,
        Some(&controller),
        Mode::Closed,
        &times,
        &plan,
        false,
    )
    .map_err(|e| e.to_string())?;

    let mut order: Vec<usize> = (0..traced.leaves.len()).collect();
    order.shuffle(&mut StdRng::seed_from_u64(17));
    let ens = &reference.ensemble;
    let permuted = EnsembleState {
        leaves: order.iter().map(|&k| ens.leaves[k].clone()).collect(),
        epsilons: order.iter().map(|&k| ens.epsilons[k]).collect(),
        mode: ens.mode,
        schedule: ens.schedule.clone(),
    };
    let coeffs: Vec<_> = order.iter().map(|&k| controller.coefficients[k].clone()).collect();
    let gains: Vec<_> = order.iter().map(|&k| controller.gains[k].clone()).collect();
    let runs = run_ensemble(&permuted, &coeffs, Some(&gains), None).map_err(|e| e.to_string())?;
    let mut identical = true;
    for (k, want) in reference.snapshots.iter().enumerate() {
        let got = snapshot(&runs, &traced.leaves.leaves, &plan, &ens.schedule, k);
        identical &= got.values.iter().map(|v| v.to_bits()).eq(want.values.iter().map(|v| v.to_bits()));
        identical &= got.sup_norm.to_bits() == want.sup_norm.to_bits();
    }
    Ok((identical, format!("shuffled leaf order bitwise identical: {identical}")))
}

fn determinism_property() -> Result<(bool, String), String> {
    let dirs = [tempfile::tempdir().map_err(|e| e.to_string())?, tempfile::tempdir().map_err(|e| e.to_string())?];
    for d in &dirs {
        for cmd in [&["classify"][..], &["trace"], &["kernel"], &["simulate", "--mode", "closed"]] {
            let mut args = cmd.to_vec();
            args.extend(["--leaves", "120", "--dt", "0.005"]);
            cli(&args, &config_path("disk.toml"), d.path())?;
        }
    }
    let mut names: Vec<PathBuf> = Vec::new();
    collect_files(dirs[0].path(), dirs[0].path(), &mut names)?;
    let mut identical = !names.is_empty();
    for name in &names {
        let a = std::fs::read(dirs[0].path().join(name)).map_err(|e| e.to_string())?;
        let b = std::fs::read(dirs[1].path().join(name)).map_err(|e| e.to_string())?;
        identical &= a == b;
    }
    Ok((identical, format!("{} output files byte-identical across runs: {identical}", names.len())))
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), String> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_files(root, &p, out)?;
        } else {
            out.push(p.strip_prefix(root).map_err(|e| e.to_string())?.to_path_buf());
        }
    }
    Ok(())
}

fn property_suites() -> Outcome {
    let parts = [
        flow_composition_property()?,
        psi_round_trip_property()?,
        shuffle_property()?,
        determinism_property()?,
    ];
    let ok = parts.iter().all(|p| p.0);
    let detail: Vec<String> = parts.into_iter().map(|p| p.1).collect();
    Ok((ok, format!("{} (tol 1e-6)", detail.join("; "))))
}

fn main() {
    let kernels = disk_leaf_kernels();
    #[allow(clippy::type_complexity)]
    let criteria: Vec<(&str, Box<dyn FnOnce() -> Outcome>)> = vec![
        ("T_max reproduction", Box::new(t_max_reproduction)),
        ("closed-form geometry", Box::new(closed_form_geometry)),
        ("kernel oracle match", Box::new(|| kernel_oracle(kernels.as_ref().map_err(Clone::clone)?))),
        ("kernel residuals", Box::new(|| kernel_residuals(kernels.as_ref().map_err(Clone::clone)?))),
        ("finite-time stabilization", Box::new(closed_loop_stabilization)),
        ("open-loop growth", Box::new(open_loop_growth)),
        ("target annihilation", Box::new(target_annihilation)),
        ("transport oracle", Box::new(transport_oracle_check)),
        ("1D reduction", Box::new(one_d_reduction)),
        ("property suites", Box::new(property_suites)),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.into_iter().enumerate() {
        let (ok, detail) = check().unwrap_or_else(|e| (false, format!("error: {e}")));
        if !ok {
            failed += 1;
        }
        println!("criterion {}: {} {name}: {detail}", k + 1, if ok { "PASS" } else { "FAIL" });
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
