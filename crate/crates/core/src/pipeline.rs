//! End-to-end orchestration: trace leaves, design the controller, simulate, sample.

use serde::Serialize;

use crate::characteristics::{
    audit_non_trapping, interior_grid, AuditReport, FlowConfig, LeafResolution, LeafSet,
};
use crate::coefficients::{all_leaf_coefficients, LeafCoefficients, ProblemSpec};
use crate::error::{Error, Result};
use crate::field::{ExprField, VectorField};
use crate::geometry::ImplicitDomain;
use crate::kernel::{assemble_gain, solve_all_kernels, GainTable, KernelTable};
use crate::scalar::Real;
use crate::simulator::{init_state, run_ensemble, snapshot, EnsembleState, FieldSnapshot, LeafRun, Mode, SamplePlan};

/// Discretization knobs shared by every stage.
#[derive(Debug, Clone, PartialEq)]
pub struct Discretization<S> {
    /// Chart samples per parameter axis on the boundary.
    pub leaf_count: usize,
    /// Minimum number of intervals per leaf.
    pub leaf_grid_min: usize,
    /// Target time step; each leaf uses `T/N` with `N = max(leaf_grid_min, ceil(T/dt))`.
    pub dt: S,
    pub kernel_m: usize,
    pub flow: FlowConfig<S>,
    pub kernel_tol: S,
    pub kernel_max_iter: usize,
    /// Cell-centred snapshot grid points per axis over the bounding box.
    pub snapshot_grid: usize,
    /// Interior probes per axis for the non-trapping audit.
    pub audit_probes: usize,
}

impl<S: Real> Discretization<S> {
    pub fn resolution(&self) -> LeafResolution<S> {
        LeafResolution {
            min_nodes: self.leaf_grid_min,
            target_spacing: Some(self.dt),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.flow.validate()?;
        let bad = |what: &str| Err(Error::InvalidParameter(what.to_string()));
        if self.leaf_count == 0 {
            return bad("leaf_count must be positive");
        }
        if self.leaf_grid_min == 0 {
            return bad("leaf_grid_min must be positive");
        }
        if !(self.dt > S::zero()) {
            return bad("dt must be positive");
        }
        if self.kernel_m < 2 {
            return bad("kernel_m must be at least 2");
        }
        if !(self.kernel_tol > S::zero()) {
            return bad("kernel_tol must be positive");
        }
        if self.kernel_max_iter == 0 {
            return bad("kernel_max_iter must be positive");
        }
        Ok(())
    }
}

/// Domain, coefficients and velocity of one run.
#[derive(Debug, Clone)]
pub struct Problem<S: Real> {
    pub domain: ImplicitDomain<S>,
    pub spec: ProblemSpec,
    pub field: ExprField,
}

impl<S: Real> Problem<S> {
    pub fn new(domain: ImplicitDomain<S>, spec: ProblemSpec) -> Result<Self> {
        spec.validate()?;
        if spec.dim() != domain.dim() {
            return Err(Error::InvalidParameter(format!(
                "velocity has {} components but the domain is {}-dimensional",
                spec.dim(),
                domain.dim()
            )));
        }
        let field = spec.velocity_field();
        Ok(Problem { domain, spec, field })
    }

    pub fn velocity(&self) -> &dyn VectorField<S> {
        &self.field
    }

    /// Largest `|a|` over the boundary samples, used to scale integration steps.
    pub fn speed_scale(&self, per_axis: usize) -> Result<S> {
        let mut peak = S::zero();
        for (_, z) in self.domain.chart_samples(per_axis) {
            peak = peak.max(self.field.speed(&z)?);
        }
        Ok(peak)
    }

    /// Flow configuration from an explicit step and trapping horizon.
    pub fn flow_config(&self, per_axis: usize, step: Option<S>, trap_cap: S) -> Result<FlowConfig<S>> {
        let scale = self.speed_scale(per_axis)?;
        let mut cfg = FlowConfig::for_domain(&self.domain, scale, trap_cap);
        cfg.tangential_tolerance = self.domain.default_tangential_tolerance(&self.field, per_axis)?;
        if let Some(h) = step {
            cfg.step = h;
        }
        Ok(cfg)
    }
}

/// Leaves plus the non-trapping audit.
#[derive(Debug, Clone)]
pub struct Traced<S> {
    pub leaves: LeafSet<S>,
    pub audit: AuditReport,
}

pub fn trace<S: Real>(problem: &Problem<S>, disc: &Discretization<S>) -> Result<Traced<S>> {
    disc.validate()?;
    // Without outflow points there are no leaves; the audit still probes the interior.
    let leaves = match LeafSet::build(
        problem.velocity(),
        &problem.domain,
        disc.leaf_count,
        &disc.resolution(),
        &disc.flow,
    ) {
        Err(Error::EmptyOutflow { .. }) => LeafSet::empty(&problem.domain, disc.leaf_count),
        other => other?,
    };
    let audit = audit_non_trapping(
        problem.velocity(),
        &problem.domain,
        Some(&leaves),
        &disc.flow,
        disc.audit_probes,
    );
    Ok(Traced { leaves, audit })
}

/// Per-leaf coefficients, kernels and gains.
#[derive(Debug, Clone)]
pub struct Controller<S> {
    pub coefficients: Vec<LeafCoefficients<S>>,
    pub kernels: Vec<KernelTable<S>>,
    pub gains: Vec<GainTable<S>>,
}

pub fn coefficients<S: Real>(
    problem: &Problem<S>,
    traced: &Traced<S>,
    disc: &Discretization<S>,
) -> Result<Vec<LeafCoefficients<S>>> {
    all_leaf_coefficients(&problem.spec, &traced.leaves.leaves, disc.kernel_m)
}

pub fn design<S: Real>(problem: &Problem<S>, traced: &Traced<S>, disc: &Discretization<S>) -> Result<Controller<S>> {
    let coefficients = coefficients(problem, traced, disc)?;
    let kernels = solve_all_kernels(&coefficients, disc.kernel_tol, disc.kernel_max_iter)?;
    let gains = gains_from(&traced.leaves, &coefficients, &kernels)?;
    Ok(Controller {
        coefficients,
        kernels,
        gains,
    })
}

/// Assembles gains from previously solved kernels.
pub fn gains_from<S: Real>(
    leaves: &LeafSet<S>,
    coefficients: &[LeafCoefficients<S>],
    kernels: &[KernelTable<S>],
) -> Result<Vec<GainTable<S>>> {
    leaves
        .leaves
        .iter()
        .zip(coefficients)
        .zip(kernels)
        .map(|((leaf, lc), kt)| assemble_gain(kt, &lc.big_lambda, leaf))
        .collect()
}

/// Outcome of a simulation run.
#[derive(Debug, Clone)]
pub struct Simulation<S> {
    pub ensemble: EnsembleState<S>,
    pub runs: Vec<LeafRun<S>>,
    pub snapshots: Vec<FieldSnapshot<S>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationSummary {
    pub mode: Mode,
    pub times: Vec<f64>,
    pub sup_norms: Vec<f64>,
    pub leaf_count: usize,
    pub skipped_points: usize,
    /// `max_leaf (T + t_o)`.
    pub settle_horizon: f64,
}

impl<S: Real> Simulation<S> {
    pub fn summary(&self, leaves: &LeafSet<S>) -> SimulationSummary {
        SimulationSummary {
            mode: self.ensemble.mode,
            times: self.snapshots.iter().map(|s| s.time.to_f64_lossy()).collect(),
            sup_norms: self.snapshots.iter().map(|s| s.sup_norm.to_f64_lossy()).collect(),
            leaf_count: leaves.len(),
            skipped_points: self.snapshots.first().map_or(0, |s| s.skipped),
            settle_horizon: self.ensemble.settle_horizon(&leaves.leaves).to_f64_lossy(),
        }
    }

    /// Largest `max |w_bar|` over leaves after they settle, if tracked.
    pub fn settled_target(&self) -> Option<S> {
        self.runs
            .iter()
            .map(|r| r.settled_target)
            .try_fold(S::zero(), |m, v| v.map(|v| m.max(v)))
    }
}

/// Snapshot grid points strictly inside the domain.
pub fn sample_points<S: Real>(problem: &Problem<S>, disc: &Discretization<S>) -> Vec<Vec<S>> {
    let margin = S::lit(1e-3) * problem.domain.diameter();
    interior_grid(&problem.domain, disc.snapshot_grid, margin)
}

pub fn sample_plan<S: Real>(problem: &Problem<S>, traced: &Traced<S>, disc: &Discretization<S>) -> SamplePlan<S> {
    let points = sample_points(problem, disc);
    SamplePlan::locate(problem.velocity(), &problem.domain, &disc.flow, &traced.leaves, &points)
}

/// Runs the ensemble and samples the field at each of `times`.
#[allow(clippy::too_many_arguments)]
pub fn simulate<S: Real>(
    problem: &Problem<S>,
    traced: &Traced<S>,
    coefficients: &[LeafCoefficients<S>],
    controller: Option<&Controller<S>>,
    mode: Mode,
    times: &[S],
    plan: &SamplePlan<S>,
    track_target: bool,
) -> Result<Simulation<S>> {
    let gains = controller.map(|c| c.gains.as_slice());
    let ensemble = init_state(&problem.spec, &traced.leaves.leaves, gains, mode, times.to_vec())?;
    let targets = match (track_target, controller) {
        (true, Some(c)) => Some((c.kernels.as_slice(), coefficients)),
        _ => None,
    };
    let runs = run_ensemble(&ensemble, coefficients, gains, targets)?;
    let snapshots = (0..ensemble.schedule.len())
        .map(|k| snapshot(&runs, &traced.leaves.leaves, plan, &ensemble.schedule, k))
        .collect();
    Ok(Simulation {
        ensemble,
        runs,
        snapshots,
    })
}
