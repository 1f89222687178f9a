//! Subcommand implementations.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{Format, RunConfig};
use super::output::{coordinate_header, real, snapshot_name, write_csv, write_json};
use super::verify::run_checks;
use super::Failure;
use crate::characteristics::AuditReport;
use crate::geometry::BoundaryClass;
use crate::kernel::gain_from_row;
use crate::pipeline::{self, Controller, Discretization, Problem, Traced};
use crate::simulator::Mode;

fn out_dir(cfg: &RunConfig) -> Result<PathBuf, Failure> {
    let dir = cfg.outputs.directory.clone();
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn setup(cfg: &RunConfig) -> Result<(Problem<f64>, Discretization<f64>), Failure> {
    let problem = cfg.problem()?;
    let disc = cfg.discretization(&problem)?;
    Ok((problem, disc))
}

#[derive(Debug, Serialize)]
struct ClassifySummary {
    total: usize,
    inflow: usize,
    outflow: usize,
    tangential: usize,
    tangential_tolerance: f64,
    warnings: Vec<String>,
}

pub fn classify(cfg: &RunConfig) -> Result<(), Failure> {
    let (problem, disc) = setup(cfg)?;
    let dir = out_dir(cfg)?;
    let points = problem
        .domain
        .classify_boundary(problem.velocity(), disc.leaf_count, disc.flow.tangential_tolerance)?;
    let count = |c: BoundaryClass| points.iter().filter(|p| p.class == c).count();
    let mut summary = ClassifySummary {
        total: points.len(),
        inflow: count(BoundaryClass::Inflow),
        outflow: count(BoundaryClass::Outflow),
        tangential: count(BoundaryClass::Tangential),
        tangential_tolerance: disc.flow.tangential_tolerance,
        warnings: Vec::new(),
    };
    if summary.outflow == 0 {
        summary
            .warnings
            .push("no outflow boundary points: no leaves can be built".to_string());
    }
    if cfg.wants(Format::Csv) {
        let n = problem.domain.dim();
        let mut header = vec!["chart".to_string()];
        header.extend(coordinate_header(n));
        header.extend((1..=n).map(|k| format!("nu{k}")));
        header.extend(["flux".to_string(), "class".to_string()]);
        let rows = points.iter().map(|p| {
            let mut row = vec![p.origin.as_ref().map_or(0, |o| o.chart).to_string()];
            row.extend(p.location.iter().map(|&v| real(v)));
            row.extend(p.normal.iter().map(|&v| real(v)));
            row.push(real(p.flux));
            row.push(p.class.to_string());
            row
        });
        write_csv(&dir.join("boundary.csv"), &header, rows)?;
    }
    write_json(&dir.join("classification.json"), &summary)?;
    println!(
        "boundary points: {} inflow, {} outflow, {} tangential",
        summary.inflow, summary.outflow, summary.tangential
    );
    for w in &summary.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct AuditFile<'a> {
    #[serde(flatten)]
    report: &'a AuditReport,
    failures: Vec<String>,
}

fn write_audit(dir: &Path, traced: &Traced<f64>) -> Result<(), Failure> {
    let file = AuditFile {
        report: &traced.audit,
        failures: traced.leaves.failures.iter().map(|(_, e)| e.to_string()).collect(),
    };
    write_json(&dir.join("audit.json"), &file)?;
    Ok(())
}

fn admissible(traced: &Traced<f64>) -> Result<(), Failure> {
    let a = &traced.audit;
    if a.leaves == 0 {
        return Err(Failure::Assumption(format!(
            "no leaves: the outflow boundary is empty or every leaf was rejected ({} trapped probes)",
            a.trapped
        )));
    }
    if a.trapped > 0 {
        return Err(Failure::Assumption(format!(
            "non-trapping assumption violated: {} trapped characteristics",
            a.trapped
        )));
    }
    Ok(())
}

pub fn trace(cfg: &RunConfig) -> Result<(), Failure> {
    let (problem, disc) = setup(cfg)?;
    let dir = out_dir(cfg)?;
    let traced = pipeline::trace(&problem, &disc)?;
    if cfg.wants(Format::Csv) {
        let mut header = vec!["leaf_id".to_string(), "sigma".to_string()];
        header.extend(coordinate_header(problem.domain.dim()));
        header.push("speed".to_string());
        let rows = traced.leaves.leaves.iter().flat_map(|leaf| {
            (0..leaf.sigma.len()).map(move |i| {
                let mut row = vec![leaf.id.to_string(), real(leaf.sigma[i])];
                row.extend(leaf.points[i].iter().map(|&v| real(v)));
                row.push(real(leaf.speeds[i]));
                row
            })
        });
        write_csv(&dir.join("leaves.csv"), &header, rows)?;
    }
    write_audit(&dir, &traced)?;
    println!(
        "leaves: {}, skipped: {}, trapped: {}, t_max: {}",
        traced.audit.leaves, traced.audit.skipped, traced.audit.trapped, traced.audit.t_max
    );
    admissible(&traced)
}

#[derive(Debug, Serialize)]
struct KernelSummary {
    leaf_id: usize,
    exit_point: Vec<f64>,
    transit_time: f64,
    iterations: usize,
    last_change: f64,
    pde_residual: f64,
    bc_residual: f64,
}

/// Kernel top rows cached under the configuration hash.
#[derive(Debug, Serialize, Deserialize)]
struct KernelCache {
    hash: String,
    kernel_m: usize,
    top_rows: Vec<Vec<f64>>,
}

fn cache_path(cfg: &RunConfig) -> PathBuf {
    cfg.outputs
        .directory
        .join("cache")
        .join(format!("kernels-{}.json", cfg.kernel_hash()))
}

fn store_cache(cfg: &RunConfig, controller: &Controller<f64>) -> Result<(), Failure> {
    let path = cache_path(cfg);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let cache = KernelCache {
        hash: cfg.kernel_hash(),
        kernel_m: cfg.discretization.kernel_m,
        top_rows: controller.kernels.iter().map(|k| k.top_row().to_vec()).collect(),
    };
    write_json(&path, &cache)?;
    Ok(())
}

fn load_cache(cfg: &RunConfig, leaves: usize) -> Option<KernelCache> {
    let text = std::fs::read_to_string(cache_path(cfg)).ok()?;
    let cache: KernelCache = serde_json::from_str(&text).ok()?;
    (cache.hash == cfg.kernel_hash()
        && cache.top_rows.len() == leaves
        && cache.top_rows.iter().all(|r| r.len() == cfg.discretization.kernel_m + 1))
        .then_some(cache)
}

pub fn kernel(cfg: &RunConfig, selected: &[usize]) -> Result<(), Failure> {
    let (problem, disc) = setup(cfg)?;
    let dir = out_dir(cfg)?;
    let traced = pipeline::trace(&problem, &disc)?;
    admissible(&traced)?;
    let controller = pipeline::design(&problem, &traced, &disc)?;
    let leaves = &traced.leaves.leaves;
    let summary: Vec<KernelSummary> = controller
        .kernels
        .iter()
        .zip(leaves)
        .map(|(kt, leaf)| KernelSummary {
            leaf_id: leaf.id,
            exit_point: leaf.exit_point.clone(),
            transit_time: leaf.transit_time,
            iterations: kt.iterations,
            last_change: kt.last_change,
            pde_residual: kt.residual.pde,
            bc_residual: kt.residual.bc,
        })
        .collect();
    write_json(&dir.join("kernel_summary.json"), &summary)?;
    let mut ids = selected.to_vec();
    if ids.is_empty() {
        let longest = leaves
            .iter()
            .fold((0, f64::NEG_INFINITY), |best, l| if l.transit_time > best.1 { (l.id, l.transit_time) } else { best })
            .0;
        ids.push(longest);
    }
    if let Some(&bad) = ids.iter().find(|&&id| id >= leaves.len()) {
        return Err(Failure::Config(format!("--leaf {bad}: only {} leaves exist", leaves.len())));
    }
    if cfg.wants(Format::Csv) {
        let header: Vec<String> = ["i", "j", "sigma_bar", "y_bar", "k"].iter().map(|s| s.to_string()).collect();
        for id in ids {
            let kt = &controller.kernels[id];
            let m = kt.intervals();
            let rows = (0..=m).flat_map(|i| {
                (0..=i).map(move |j| {
                    vec![
                        i.to_string(),
                        j.to_string(),
                        real(i as f64 / m as f64),
                        real(j as f64 / m as f64),
                        real(kt.values.get(i, j)),
                    ]
                })
            });
            write_csv(&dir.join(format!("kernel_leaf{id}.csv")), &header, rows)?;
        }
    }
    store_cache(cfg, &controller)?;
    let worst = summary.iter().fold(0.0f64, |m, s| m.max(s.pde_residual).max(s.bc_residual));
    println!("kernels: {}, largest residual: {worst:e}", summary.len());
    Ok(())
}

#[derive(Debug, Serialize)]
struct Manifest {
    mode: Mode,
    times: Vec<f64>,
    sup_norms: Vec<f64>,
    leaf_count: usize,
    skipped_points: usize,
    settle_horizon: f64,
    kernel_cache: Option<String>,
    parameters: Parameters,
}

#[derive(Debug, Serialize)]
struct Parameters {
    config_hash: String,
    samples_per_axis: usize,
    leaf_grid_min: usize,
    dt: f64,
    kernel_m: usize,
    integrator_step: f64,
    trap_cap: f64,
    m1: f64,
    m2: f64,
    snapshot_grid: usize,
}

pub fn simulate(cfg: &RunConfig, mode: Mode) -> Result<(), Failure> {
    let (problem, disc) = setup(cfg)?;
    let dir = out_dir(cfg)?;
    let traced = pipeline::trace(&problem, &disc)?;
    admissible(&traced)?;
    let mut cache_state = None;
    let controller = match mode {
        Mode::Open => None,
        Mode::Closed => match load_cache(cfg, traced.leaves.len()) {
            Some(cache) => {
                let coefficients = pipeline::coefficients(&problem, &traced, &disc)?;
                let gains = traced
                    .leaves
                    .leaves
                    .iter()
                    .zip(&coefficients)
                    .zip(&cache.top_rows)
                    .map(|((leaf, lc), top)| gain_from_row(top, &lc.big_lambda, leaf))
                    .collect::<crate::Result<Vec<_>>>()?;
                cache_state = Some("reused".to_string());
                Some(Controller {
                    coefficients,
                    kernels: Vec::new(),
                    gains,
                })
            }
            None => {
                let c = pipeline::design(&problem, &traced, &disc)?;
                store_cache(cfg, &c)?;
                cache_state = Some("computed".to_string());
                Some(c)
            }
        },
    };
    let coefficients = match &controller {
        Some(c) => c.coefficients.clone(),
        None => pipeline::coefficients(&problem, &traced, &disc)?,
    };
    let plan = pipeline::sample_plan(&problem, &traced, &disc);
    let sim = pipeline::simulate(
        &problem,
        &traced,
        &coefficients,
        controller.as_ref(),
        mode,
        &cfg.outputs.snapshot_times,
        &plan,
        false,
    )?;
    if cfg.wants(Format::Csv) {
        let mut header = coordinate_header(problem.domain.dim());
        header.push("v".to_string());
        for snap in &sim.snapshots {
            let rows = snap.points.iter().zip(&snap.values).map(|(p, &v)| {
                let mut row: Vec<String> = p.iter().map(|&x| real(x)).collect();
                row.push(real(v));
                row
            });
            write_csv(&dir.join(snapshot_name(snap.time)), &header, rows)?;
        }
    }
    let s = sim.summary(&traced.leaves);
    let d = &cfg.discretization;
    let manifest = Manifest {
        mode: s.mode,
        times: s.times,
        sup_norms: s.sup_norms,
        leaf_count: s.leaf_count,
        skipped_points: s.skipped_points,
        settle_horizon: s.settle_horizon,
        kernel_cache: cache_state,
        parameters: Parameters {
            config_hash: cfg.kernel_hash(),
            samples_per_axis: d.leaf_count,
            leaf_grid_min: d.leaf_grid_min,
            dt: d.dt,
            kernel_m: d.kernel_m,
            integrator_step: d.integrator_step,
            trap_cap: d.trap_cap,
            m1: cfg.problem.epsilon.m1,
            m2: cfg.problem.epsilon.m2,
            snapshot_grid: d.snapshot_grid,
        },
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    for (t, v) in manifest.times.iter().zip(&manifest.sup_norms) {
        println!("t = {t}: sup |v| = {v:e}");
    }
    Ok(())
}

pub fn verify(cfg: &RunConfig, perturb_kernel: bool) -> Result<(), Failure> {
    let (problem, disc) = setup(cfg)?;
    let dir = out_dir(cfg)?;
    let traced = pipeline::trace(&problem, &disc)?;
    admissible(&traced)?;
    let report = run_checks(&problem, &disc, &traced, perturb_kernel)?;
    write_json(&dir.join("verify.json"), &report)?;
    for c in &report.checks {
        println!(
            "{:<24} {}  value {:.3e}  threshold {:.3e}",
            c.name,
            if c.passed { "pass" } else { "FAIL" },
            c.value,
            c.threshold
        );
    }
    if report.failed > 0 {
        return Err(Failure::Numerical(format!("{} of {} checks failed", report.failed, report.checks.len())));
    }
    Ok(())
}
