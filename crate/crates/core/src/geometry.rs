//! Spatial domains as implicit level sets with explicit boundary charts.
//!
//! The level function `psi` (negative inside) drives boundary-crossing detection
//! along characteristics. The charts map parameter cubes `[0,1]^(n-1)` onto the
//! boundary and drive sampling of the inflow/outflow sets.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::coefficients::expr::{Bindings, Expr};
use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::scalar::{dot, norm, Real};

/// Level function with `psi < 0` inside the domain.
pub trait LevelSet<S: Real>: Send + Sync {
    fn value(&self, x: &[S]) -> S;

    /// Analytic gradient, when known.
    fn gradient(&self, _x: &[S]) -> Option<Vec<S>> {
        None
    }
}

/// Parameterization of a piece of the boundary by the unit cube `[0,1]^param_dim`.
pub trait BoundaryChart<S: Real>: Send + Sync {
    fn param_dim(&self) -> usize;
    fn point(&self, param: &[S]) -> Vec<S>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum BoundaryClass {
    Inflow,
    Outflow,
    Tangential,
}

impl fmt::Display for BoundaryClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BoundaryClass::Inflow => "inflow",
            BoundaryClass::Outflow => "outflow",
            BoundaryClass::Tangential => "tangential",
        })
    }
}

/// Where a boundary sample came from in the chart parameter grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartSample<S> {
    pub chart: usize,
    /// Multi-index in the per-axis sample grid.
    pub index: Vec<usize>,
    pub param: Vec<S>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryPoint<S> {
    pub location: Vec<S>,
    pub normal: Vec<S>,
    /// `normal . a(location)`.
    pub flux: S,
    pub class: BoundaryClass,
    pub origin: Option<ChartSample<S>>,
}

/// Classifies a flux value against the tangential tolerance.
pub fn classify_flux<S: Real>(flux: S, eps_tangential: S) -> BoundaryClass {
    if flux > eps_tangential {
        BoundaryClass::Inflow
    } else if flux < -eps_tangential {
        BoundaryClass::Outflow
    } else {
        BoundaryClass::Tangential
    }
}

/// Bounded open set `{psi < 0}` with boundary charts.
#[derive(Clone)]
pub struct ImplicitDomain<S: Real> {
    dim: usize,
    level: Arc<dyn LevelSet<S>>,
    charts: Vec<Arc<dyn BoundaryChart<S>>>,
    bounding_box: Vec<(S, S)>,
}

impl<S: Real> fmt::Debug for ImplicitDomain<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ImplicitDomain")
            .field("dim", &self.dim)
            .field("charts", &self.charts.len())
            .field("bounding_box", &self.bounding_box)
            .finish()
    }
}

impl<S: Real> ImplicitDomain<S> {
    pub fn new(
        dim: usize,
        level: Arc<dyn LevelSet<S>>,
        charts: Vec<Arc<dyn BoundaryChart<S>>>,
        bounding_box: Vec<(S, S)>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        if bounding_box.len() != dim {
            return Err(Error::InvalidParameter(format!(
                "bounding box has {} axes, expected {dim}",
                bounding_box.len()
            )));
        }
        if bounding_box.iter().any(|&(lo, hi)| !(lo < hi)) {
            return Err(Error::InvalidParameter("bounding box axes must satisfy lo < hi".into()));
        }
        if charts.is_empty() {
            return Err(Error::InvalidParameter("at least one boundary chart is required".into()));
        }
        if let Some(c) = charts.iter().find(|c| c.param_dim() + 1 != dim) {
            return Err(Error::InvalidParameter(format!(
                "chart parameter dimension {} does not match domain dimension {dim}",
                c.param_dim()
            )));
        }
        Ok(ImplicitDomain {
            dim,
            level,
            charts,
            bounding_box,
        })
    }

    /// Ball `|x - center| < radius` in any dimension, with hyperspherical charts.
    pub fn ball(center: Vec<S>, radius: S) -> Result<Self> {
        let dim = center.len();
        if !(radius > S::zero()) {
            return Err(Error::InvalidParameter("ball radius must be positive".into()));
        }
        let bbox = center.iter().map(|&c| (c - radius, c + radius)).collect();
        let level = Arc::new(BallLevel {
            center: center.clone(),
            radius,
        });
        let charts: Vec<Arc<dyn BoundaryChart<S>>> = if dim == 1 {
            vec![
                Arc::new(PointChart(vec![center[0] - radius])),
                Arc::new(PointChart(vec![center[0] + radius])),
            ]
        } else {
            vec![Arc::new(SphereChart { center, radius })]
        };
        Self::new(dim, level, charts, bbox)
    }

    /// Open interval `(lo, hi)`.
    pub fn interval(lo: S, hi: S) -> Result<Self> {
        let half = S::lit(0.5);
        Self::ball(vec![half * (lo + hi)], half * (hi - lo))
    }

    /// Axis-aligned box. Face charts stay `corner_exclusion` away from edges,
    /// where the boundary is not C1.
    pub fn boxed(lower: Vec<S>, upper: Vec<S>, corner_exclusion: S) -> Result<Self> {
        let dim = lower.len();
        if upper.len() != dim {
            return Err(Error::InvalidParameter("box corners differ in dimension".into()));
        }
        let bbox: Vec<(S, S)> = lower.iter().copied().zip(upper.iter().copied()).collect();
        if bbox
            .iter()
            .any(|&(lo, hi)| !(hi - lo > S::lit(2.0) * corner_exclusion))
        {
            return Err(Error::InvalidParameter("corner exclusion larger than the box".into()));
        }
        let mut charts: Vec<Arc<dyn BoundaryChart<S>>> = Vec::with_capacity(2 * dim);
        for axis in 0..dim {
            for &upper_side in &[false, true] {
                charts.push(Arc::new(FaceChart {
                    bbox: bbox.clone(),
                    axis,
                    upper_side,
                    exclusion: corner_exclusion,
                }));
            }
        }
        Self::new(dim, Arc::new(BoxLevel { bbox: bbox.clone() }), charts, bbox)
    }

    /// Domain whose level function and charts are expressions. Level expressions use
    /// `x1..xn`; chart components use the parameters `y1..y(n-1)` (`t` aliases `y1`).
    pub fn from_expressions(
        dim: usize,
        level: Expr,
        charts: Vec<Vec<Expr>>,
        bounding_box: Vec<(S, S)>,
    ) -> Result<Self> {
        let charts = charts
            .into_iter()
            .map(|components| {
                if components.len() != dim {
                    return Err(Error::InvalidParameter(format!(
                        "chart has {} components, expected {dim}",
                        components.len()
                    )));
                }
                Ok(Arc::new(ExprChart {
                    components,
                    param_dim: dim - 1,
                }) as Arc<dyn BoundaryChart<S>>)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(dim, Arc::new(ExprLevel { expr: level }), charts, bounding_box)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn charts(&self) -> &[Arc<dyn BoundaryChart<S>>] {
        &self.charts
    }

    pub fn bounding_box(&self) -> &[(S, S)] {
        &self.bounding_box
    }

    pub fn level(&self, x: &[S]) -> S {
        self.level.value(x)
    }

    /// Bounding-box diagonal.
    pub fn diameter(&self) -> S {
        self.bounding_box
            .iter()
            .map(|&(lo, hi)| (hi - lo) * (hi - lo))
            .sum::<S>()
            .sqrt()
    }

    pub fn in_bounding_box(&self, x: &[S], margin: S) -> bool {
        x.iter()
            .zip(&self.bounding_box)
            .all(|(&v, &(lo, hi))| v >= lo - margin && v <= hi + margin)
    }

    /// Gradient of the level function; central differences with step
    /// `1e-6 * diameter` when no analytic gradient is supplied.
    pub fn level_gradient(&self, x: &[S]) -> Vec<S> {
        if let Some(g) = self.level.gradient(x) {
            return g;
        }
        let h = S::lit(1e-6) * self.diameter();
        let mut probe = x.to_vec();
        (0..self.dim)
            .map(|k| {
                probe[k] = x[k] + h;
                let up = self.level.value(&probe);
                probe[k] = x[k] - h;
                let down = self.level.value(&probe);
                probe[k] = x[k];
                (up - down) / (h + h)
            })
            .collect()
    }

    /// Unit outward normal `grad psi / |grad psi|`.
    pub fn normal_at(&self, z: &[S]) -> Result<Vec<S>> {
        let g = self.level_gradient(z);
        let n = norm(&g);
        let threshold = S::lit(1e-12).max(S::epsilon());
        if !(n > threshold) {
            return Err(Error::DegenerateGradient {
                point: z.iter().map(|v| v.to_f64_lossy()).collect(),
                norm: n.to_f64_lossy(),
            });
        }
        Ok(g.into_iter().map(|v| v / n).collect())
    }

    pub fn classify_point(
        &self,
        z: &[S],
        a: &dyn VectorField<S>,
        eps_tangential: S,
    ) -> Result<BoundaryPoint<S>> {
        let normal = self.normal_at(z)?;
        let flux = dot(&normal, &a.value(z)?);
        Ok(BoundaryPoint {
            location: z.to_vec(),
            normal,
            flux,
            class: classify_flux(flux, eps_tangential),
            origin: None,
        })
    }

    /// Chart sample grid: cell-centred parameters `(i + 1/2) / per_axis` on every axis,
    /// charts in order, multi-indices in row-major order.
    pub fn chart_samples(&self, per_axis: usize) -> Vec<(ChartSample<S>, Vec<S>)> {
        let per_axis = per_axis.max(1);
        let mut out = Vec::new();
        for (c, chart) in self.charts.iter().enumerate() {
            let d = chart.param_dim();
            let total = per_axis.pow(d as u32);
            for flat in 0..total {
                let index = unflatten(flat, per_axis, d);
                let param: Vec<S> = index
                    .iter()
                    .map(|&i| (S::of_usize(i) + S::lit(0.5)) / S::of_usize(per_axis))
                    .collect();
                let z = chart.point(&param);
                out.push((
                    ChartSample {
                        chart: c,
                        index,
                        param,
                    },
                    z,
                ));
            }
        }
        out
    }

    /// Samples the boundary through the charts and assigns each sample one class.
    pub fn classify_boundary(
        &self,
        a: &dyn VectorField<S>,
        per_axis: usize,
        eps_tangential: S,
    ) -> Result<Vec<BoundaryPoint<S>>> {
        self.chart_samples(per_axis)
            .into_iter()
            .map(|(origin, z)| {
                let mut bp = self.classify_point(&z, a, eps_tangential)?;
                bp.origin = Some(origin);
                Ok(bp)
            })
            .collect()
    }

    /// Outflow samples, the candidate exit points of the characteristic leaves.
    pub fn sample_outflow(
        &self,
        a: &dyn VectorField<S>,
        per_axis: usize,
        eps_tangential: S,
    ) -> Result<Vec<BoundaryPoint<S>>> {
        let all = self.classify_boundary(a, per_axis, eps_tangential)?;
        let sampled = all.len();
        let out: Vec<_> = all
            .into_iter()
            .filter(|p| p.class == BoundaryClass::Outflow)
            .collect();
        if out.is_empty() {
            return Err(Error::EmptyOutflow { sampled });
        }
        Ok(out)
    }

    /// Default tangential tolerance `1e-9 * max |a|` over the boundary samples.
    pub fn default_tangential_tolerance(&self, a: &dyn VectorField<S>, per_axis: usize) -> Result<S> {
        let mut sup = S::zero();
        for (_, z) in self.chart_samples(per_axis) {
            sup = sup.max(crate::scalar::sup_abs(&a.value(&z)?));
        }
        Ok(S::lit(1e-9) * sup)
    }

    /// Largest `|psi|` over the chart samples; zero for consistent charts.
    pub fn chart_defect(&self, per_axis: usize) -> S {
        self.chart_samples(per_axis)
            .iter()
            .fold(S::zero(), |m, (_, z)| m.max(self.level(z).abs()))
    }
}

fn unflatten(mut flat: usize, per_axis: usize, d: usize) -> Vec<usize> {
    let mut index = vec![0; d];
    for slot in index.iter_mut().rev() {
        *slot = flat % per_axis;
        flat /= per_axis;
    }
    index
}

struct BallLevel<S> {
    center: Vec<S>,
    radius: S,
}

impl<S: Real> LevelSet<S> for BallLevel<S> {
    fn value(&self, x: &[S]) -> S {
        let r2: S = x
            .iter()
            .zip(&self.center)
            .map(|(&a, &c)| (a - c) * (a - c))
            .sum();
        r2 - self.radius * self.radius
    }

    fn gradient(&self, x: &[S]) -> Option<Vec<S>> {
        Some(
            x.iter()
                .zip(&self.center)
                .map(|(&a, &c)| S::lit(2.0) * (a - c))
                .collect(),
        )
    }
}

struct PointChart<S>(Vec<S>);

impl<S: Real> BoundaryChart<S> for PointChart<S> {
    fn param_dim(&self) -> usize {
        0
    }

    fn point(&self, _param: &[S]) -> Vec<S> {
        self.0.clone()
    }
}

/// Hyperspherical coordinates; the last angle spans a full turn, the others half a turn.
struct SphereChart<S> {
    center: Vec<S>,
    radius: S,
}

impl<S: Real> BoundaryChart<S> for SphereChart<S> {
    fn param_dim(&self) -> usize {
        self.center.len() - 1
    }

    fn point(&self, param: &[S]) -> Vec<S> {
        let n = self.center.len();
        let angles: Vec<S> = param
            .iter()
            .enumerate()
            .map(|(k, &p)| {
                if k + 2 == n {
                    S::TAU() * p
                } else {
                    S::PI() * p
                }
            })
            .collect();
        let mut out = Vec::with_capacity(n);
        let mut sin_prod = S::one();
        for &phi in &angles {
            out.push(sin_prod * phi.cos());
            sin_prod *= phi.sin();
        }
        out.push(sin_prod);
        out.iter()
            .zip(&self.center)
            .map(|(&u, &c)| c + self.radius * u)
            .collect()
    }
}

struct BoxLevel<S> {
    bbox: Vec<(S, S)>,
}

impl<S: Real> BoxLevel<S> {
    fn active_axis(&self, x: &[S]) -> (usize, S) {
        let half = S::lit(0.5);
        let mut best = (0, S::neg_infinity());
        for (k, (&v, &(lo, hi))) in x.iter().zip(&self.bbox).enumerate() {
            let d = (v - half * (lo + hi)).abs() - half * (hi - lo);
            if d > best.1 {
                best = (k, d);
            }
        }
        best
    }
}

impl<S: Real> LevelSet<S> for BoxLevel<S> {
    fn value(&self, x: &[S]) -> S {
        self.active_axis(x).1
    }

    fn gradient(&self, x: &[S]) -> Option<Vec<S>> {
        let (k, _) = self.active_axis(x);
        let (lo, hi) = self.bbox[k];
        let mut g = vec![S::zero(); x.len()];
        g[k] = if x[k] >= S::lit(0.5) * (lo + hi) {
            S::one()
        } else {
            -S::one()
        };
        Some(g)
    }
}

struct FaceChart<S> {
    bbox: Vec<(S, S)>,
    axis: usize,
    upper_side: bool,
    exclusion: S,
}

impl<S: Real> BoundaryChart<S> for FaceChart<S> {
    fn param_dim(&self) -> usize {
        self.bbox.len() - 1
    }

    fn point(&self, param: &[S]) -> Vec<S> {
        let mut p = param.iter();
        self.bbox
            .iter()
            .enumerate()
            .map(|(k, &(lo, hi))| {
                if k == self.axis {
                    if self.upper_side {
                        hi
                    } else {
                        lo
                    }
                } else {
                    let s = *p.next().expect("face parameter");
                    let a = lo + self.exclusion;
                    let b = hi - self.exclusion;
                    a + s * (b - a)
                }
            })
            .collect()
    }
}

struct ExprLevel {
    expr: Expr,
}

impl<S: Real> LevelSet<S> for ExprLevel {
    /// Evaluation failures read as NaN, which crossing detection reports.
    fn value(&self, x: &[S]) -> S {
        self.expr.eval(&Bindings::x(x)).unwrap_or_else(|_| S::nan())
    }
}

struct ExprChart {
    components: Vec<Expr>,
    param_dim: usize,
}

impl<S: Real> BoundaryChart<S> for ExprChart {
    fn param_dim(&self) -> usize {
        self.param_dim
    }

    fn point(&self, param: &[S]) -> Vec<S> {
        let b = Bindings {
            x: &[],
            y: param,
            t: param.first().copied(),
        };
        self.components
            .iter()
            .map(|e| e.eval(&b).unwrap_or_else(|_| S::nan()))
            .collect()
    }
}
