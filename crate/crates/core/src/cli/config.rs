//! TOML run configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::characteristics::FlowConfig;
use crate::coefficients::{EpsilonParams, Expr, ProblemSpec};
use crate::geometry::ImplicitDomain;
use crate::pipeline::{Discretization, Problem};

/// Configuration failure; always maps to exit code 2.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

/// An expression given as a string or a bare number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ExprValue {
    Number(f64),
    Text(String),
}

impl ExprValue {
    fn parse(&self, path: &str) -> Result<Expr, ConfigError> {
        match self {
            ExprValue::Number(v) => Ok(Expr::constant(*v)),
            ExprValue::Text(s) => Expr::parse(s).map_err(|e| ConfigError(format!("{path}: {e}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub domain: DomainSection,
    pub problem: ProblemSection,
    pub discretization: DiscretizationSection,
    pub outputs: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DomainSection {
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
    Box {
        lower: Vec<f64>,
        upper: Vec<f64>,
        #[serde(default)]
        corner_exclusion: f64,
    },
    Interval {
        lower: f64,
        upper: f64,
    },
    /// Level function `psi(x1..xn) < 0` inside, with boundary charts in `y1..y(n-1)`
    /// over the unit cube.
    Implicit {
        dimension: usize,
        level: ExprValue,
        charts: Vec<Vec<ExprValue>>,
        bounding_box: Vec<[f64; 2]>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub velocity: Vec<ExprValue>,
    pub lambda: ExprValue,
    pub g: ExprValue,
    pub f: ExprValue,
    pub v0: ExprValue,
    pub epsilon: EpsilonParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscretizationSection {
    /// Boundary chart samples per parameter axis.
    pub leaf_count: usize,
    pub leaf_grid_min: usize,
    pub dt: f64,
    pub kernel_m: usize,
    pub integrator_step: f64,
    pub trap_cap: f64,
    pub kernel_tol: f64,
    pub kernel_max_iter: usize,
    pub snapshot_grid: usize,
    pub audit_probes: usize,
    #[serde(default)]
    pub crossing_tolerance: Option<f64>,
    #[serde(default)]
    pub tangential_tolerance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub directory: PathBuf,
    pub snapshot_times: Vec<f64>,
    pub formats: Vec<Format>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub leaves: Option<usize>,
    pub dt: Option<f64>,
    pub kernel_m: Option<usize>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| ConfigError(format!("{}: {}", path.display(), e.0)))
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<(), ConfigError> {
        if let Some(out) = &o.out {
            self.outputs.directory = out.clone();
        }
        if let Some(n) = o.leaves {
            self.discretization.leaf_count = n;
        }
        if let Some(dt) = o.dt {
            self.discretization.dt = dt;
        }
        if let Some(m) = o.kernel_m {
            self.discretization.kernel_m = m;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let d = &self.discretization;
        let positive = [
            ("discretization.dt", d.dt),
            ("discretization.integrator_step", d.integrator_step),
            ("discretization.trap_cap", d.trap_cap),
            ("discretization.kernel_tol", d.kernel_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ConfigError(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("discretization.crossing_tolerance", d.crossing_tolerance),
            ("discretization.tangential_tolerance", d.tangential_tolerance),
        ] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(ConfigError(format!("{name} must be positive, got {v}")));
                }
            }
        }
        let counts = [
            ("discretization.leaf_count", d.leaf_count),
            ("discretization.leaf_grid_min", d.leaf_grid_min),
            ("discretization.kernel_max_iter", d.kernel_max_iter),
            ("discretization.snapshot_grid", d.snapshot_grid),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(ConfigError(format!("{name} must be positive")));
            }
        }
        if d.kernel_m < 2 {
            return Err(ConfigError(format!("discretization.kernel_m must be at least 2, got {}", d.kernel_m)));
        }
        let times = &self.outputs.snapshot_times;
        if times.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
            return Err(ConfigError("outputs.snapshot_times must be finite and non-negative".into()));
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ConfigError("outputs.snapshot_times must be strictly ascending".into()));
        }
        let EpsilonParams { m1, m2 } = self.problem.epsilon;
        if !(m1 > 0.0) {
            return Err(ConfigError(format!("problem.epsilon.m1 must be positive, got {m1}")));
        }
        if !(m2 > 0.0 && m2 < 1.0) {
            return Err(ConfigError(format!("problem.epsilon.m2 must lie in (0, 1), got {m2}")));
        }
        // Surface expression and dimension errors before any computation.
        self.problem()?;
        Ok(())
    }

    pub fn wants(&self, f: Format) -> bool {
        self.outputs.formats.contains(&f)
    }

    pub fn spec(&self) -> Result<ProblemSpec, ConfigError> {
        let p = &self.problem;
        let velocity = p
            .velocity
            .iter()
            .enumerate()
            .map(|(k, e)| e.parse(&format!("problem.velocity[{k}]")))
            .collect::<Result<Vec<_>, _>>()?;
        ProblemSpec::new(
            velocity,
            p.lambda.parse("problem.lambda")?,
            p.g.parse("problem.g")?,
            p.f.parse("problem.f")?,
            p.v0.parse("problem.v0")?,
            p.epsilon,
        )
        .map_err(|e| ConfigError(format!("problem: {e}")))
    }

    pub fn domain(&self) -> Result<ImplicitDomain<f64>, ConfigError> {
        let wrap = |e: crate::Error| ConfigError(format!("domain: {e}"));
        match &self.domain {
            DomainSection::Ball { center, radius } => ImplicitDomain::ball(center.clone(), *radius).map_err(wrap),
            DomainSection::Box {
                lower,
                upper,
                corner_exclusion,
            } => ImplicitDomain::boxed(lower.clone(), upper.clone(), *corner_exclusion).map_err(wrap),
            DomainSection::Interval { lower, upper } => ImplicitDomain::interval(*lower, *upper).map_err(wrap),
            DomainSection::Implicit {
                dimension,
                level,
                charts,
                bounding_box,
            } => {
                let level = level.parse("domain.level")?;
                let charts = charts
                    .iter()
                    .enumerate()
                    .map(|(c, chart)| {
                        chart
                            .iter()
                            .enumerate()
                            .map(|(k, e)| e.parse(&format!("domain.charts[{c}][{k}]")))
                            .collect::<Result<Vec<_>, _>>()
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                let bbox = bounding_box.iter().map(|b| (b[0], b[1])).collect();
                ImplicitDomain::from_expressions(*dimension, level, charts, bbox).map_err(wrap)
            }
        }
    }

    pub fn problem(&self) -> Result<Problem<f64>, ConfigError> {
        Problem::new(self.domain()?, self.spec()?).map_err(|e| ConfigError(e.to_string()))
    }

    /// Discretization with a flow configuration scaled to `problem`.
    pub fn discretization(&self, problem: &Problem<f64>) -> crate::Result<Discretization<f64>> {
        let d = &self.discretization;
        let mut flow: FlowConfig<f64> = problem.flow_config(d.leaf_count, Some(d.integrator_step), d.trap_cap)?;
        if let Some(t) = d.crossing_tolerance {
            flow.crossing_tolerance = t;
        }
        if let Some(t) = d.tangential_tolerance {
            flow.tangential_tolerance = t;
        }
        Ok(Discretization {
            leaf_count: d.leaf_count,
            leaf_grid_min: d.leaf_grid_min,
            dt: d.dt,
            kernel_m: d.kernel_m,
            flow,
            kernel_tol: d.kernel_tol,
            kernel_max_iter: d.kernel_max_iter,
            snapshot_grid: d.snapshot_grid,
            audit_probes: d.audit_probes,
        })
    }

    /// SHA-256 over everything that determines the kernel tables.
    pub fn kernel_hash(&self) -> String {
        #[derive(Serialize)]
        struct Key<'a> {
            version: &'a str,
            domain: &'a DomainSection,
            problem: &'a ProblemSection,
            discretization: &'a DiscretizationSection,
        }
        let mut disc = self.discretization.clone();
        disc.snapshot_grid = 0;
        disc.audit_probes = 0;
        let key = Key {
            version: env!("CARGO_PKG_VERSION"),
            domain: &self.domain,
            problem: &self.problem,
            discretization: &disc,
        };
        let bytes = serde_json::to_vec(&key).expect("config serializes");
        Sha256::digest(&bytes).iter().fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}
