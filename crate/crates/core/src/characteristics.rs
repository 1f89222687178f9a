//! Characteristic flow `dphi/ds = a(phi)`, boundary-crossing times, leaves and the
//! straightening map `x -> (sigma(x), rho(x))`.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::geometry::{BoundaryClass, BoundaryPoint, ChartSample, ImplicitDomain};
use crate::scalar::{distance, Real};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowConfig<S> {
    /// Upper bound on the RK4 step.
    pub step: S,
    /// Points with `|psi| <= crossing_tolerance` count as boundary points.
    pub crossing_tolerance: S,
    /// Integration horizon; no crossing within it means the point is trapped.
    pub trap_cap: S,
    /// Flux tolerance separating tangential from inflow/outflow points.
    pub tangential_tolerance: S,
    /// Leaves with `T < leaf_skip_fraction * trap_cap` are skipped.
    pub leaf_skip_fraction: S,
}

impl<S: Real> FlowConfig<S> {
    /// Defaults scaled to the domain: step `min(0.01, cap / 1e4) * radius / |a|max`,
    /// crossing tolerance `1e-10 * diameter`, skip fraction `1e-3`.
    pub fn for_domain(domain: &ImplicitDomain<S>, speed_scale: S, trap_cap: S) -> Self {
        let radius = S::lit(0.5) * domain.diameter();
        let speed = if speed_scale > S::zero() { speed_scale } else { S::one() };
        FlowConfig {
            step: S::lit(0.01).min(trap_cap / S::lit(1e4)) * radius / speed,
            crossing_tolerance: S::lit(1e-10) * domain.diameter(),
            trap_cap,
            tangential_tolerance: S::lit(1e-9) * speed,
            leaf_skip_fraction: S::lit(1e-3),
        }
    }

    pub fn skip_threshold(&self) -> S {
        self.leaf_skip_fraction * self.trap_cap
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.step > S::zero()
            && self.crossing_tolerance > S::zero()
            && self.trap_cap > S::zero()
            && self.tangential_tolerance >= S::zero()
            && self.leaf_skip_fraction >= S::zero();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid flow configuration {self:?}")))
        }
    }
}

fn lossy<S: Real>(x: &[S]) -> Vec<f64> {
    x.iter().map(|v| v.to_f64_lossy()).collect()
}

/// One classical RK4 step of size `ds` (may be negative).
pub fn rk4_step<S: Real>(a: &dyn VectorField<S>, x: &[S], ds: S) -> Result<Vec<S>> {
    let n = x.len();
    let half = S::lit(0.5);
    let mut k1 = vec![S::zero(); n];
    let mut k2 = vec![S::zero(); n];
    let mut k3 = vec![S::zero(); n];
    let mut k4 = vec![S::zero(); n];
    let mut tmp = vec![S::zero(); n];
    a.eval(x, &mut k1)?;
    for i in 0..n {
        tmp[i] = x[i] + half * ds * k1[i];
    }
    a.eval(&tmp, &mut k2)?;
    for i in 0..n {
        tmp[i] = x[i] + half * ds * k2[i];
    }
    a.eval(&tmp, &mut k3)?;
    for i in 0..n {
        tmp[i] = x[i] + ds * k3[i];
    }
    a.eval(&tmp, &mut k4)?;
    let sixth = ds / S::lit(6.0);
    Ok((0..n)
        .map(|i| x[i] + sixth * (k1[i] + S::lit(2.0) * (k2[i] + k3[i]) + k4[i]))
        .collect())
}

fn box_margin<S: Real>(domain: &ImplicitDomain<S>) -> S {
    S::lit(0.1) * domain.diameter()
}

/// `phi(s; x)` by fixed-step RK4 with step at most `cfg.step`.
pub fn flow<S: Real>(
    a: &dyn VectorField<S>,
    x: &[S],
    s: S,
    domain: &ImplicitDomain<S>,
    cfg: &FlowConfig<S>,
) -> Result<Vec<S>> {
    let steps = (s.abs() / cfg.step).ceil().to_usize().unwrap_or(0);
    if steps == 0 {
        return Ok(x.to_vec());
    }
    let ds = s / S::of_usize(steps);
    let margin = box_margin(domain);
    let mut p = x.to_vec();
    for k in 1..=steps {
        p = rk4_step(a, &p, ds)?;
        if !domain.in_bounding_box(&p, margin) {
            return Err(Error::LeftBoundingBox {
                start: lossy(x),
                time: (ds * S::of_usize(k)).to_f64_lossy(),
            });
        }
    }
    Ok(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// Boundary crossing along the flow.
#[derive(Debug, Clone, PartialEq)]
pub struct Crossing<S> {
    /// Signed flow time: `tau+ >= 0` forward, `tau- <= 0` backward.
    pub time: S,
    pub point: Vec<S>,
    pub class: BoundaryClass,
}

/// Steps until `psi` changes sign, then bisects the last step down to rounding.
/// The crossing must classify as inflow (forward) or outflow (backward).
pub fn find_crossing<S: Real>(
    a: &dyn VectorField<S>,
    x: &[S],
    direction: Direction,
    domain: &ImplicitDomain<S>,
    cfg: &FlowConfig<S>,
) -> Result<Crossing<S>> {
    let (target, sign) = match direction {
        Direction::Forward => (BoundaryClass::Inflow, S::one()),
        Direction::Backward => (BoundaryClass::Outflow, -S::one()),
    };
    let tol = cfg.crossing_tolerance;
    let psi0 = domain.level(x);
    if psi0.is_nan() || psi0 > tol {
        return Err(Error::OutsideDomain {
            point: lossy(x),
            level: psi0.to_f64_lossy(),
        });
    }
    let tangential = |point: &[S]| Error::TangentialExit {
        start: lossy(x),
        crossing: lossy(point),
    };

    let h = cfg.step;
    let mut elapsed = S::zero();
    let mut p = x.to_vec();
    if psi0.abs() <= tol {
        let bp = domain.classify_point(x, a, cfg.tangential_tolerance)?;
        if bp.class == target {
            return Ok(Crossing {
                time: S::zero(),
                point: x.to_vec(),
                class: bp.class,
            });
        }
        if bp.class == BoundaryClass::Tangential {
            return Err(tangential(x));
        }
        // Enter the interior with a step short enough not to overshoot a thin leaf.
        let mut ds = h;
        let floor = h * S::lit(1e-12);
        loop {
            let q = rk4_step(a, x, sign * ds)?;
            if domain.level(&q) < S::zero() {
                p = q;
                elapsed = ds;
                break;
            }
            ds *= S::lit(0.5);
            if ds < floor {
                return Err(tangential(x));
            }
        }
    }

    let margin = box_margin(domain);
    loop {
        if elapsed > cfg.trap_cap {
            return Err(Error::Trapped {
                start: lossy(x),
                cap: cfg.trap_cap.to_f64_lossy(),
            });
        }
        let q = rk4_step(a, &p, sign * h)?;
        let psi_q = domain.level(&q);
        if psi_q.is_nan() {
            return Err(Error::OutsideDomain {
                point: lossy(&q),
                level: f64::NAN,
            });
        }
        if psi_q >= S::zero() {
            let (offset, point) = bisect(a, &p, sign, h, elapsed, domain)?;
            let bp = domain.classify_point(&point, a, cfg.tangential_tolerance)?;
            if bp.class != target {
                return Err(tangential(&point));
            }
            return Ok(Crossing {
                time: sign * (elapsed + offset),
                point,
                class: bp.class,
            });
        }
        if !domain.in_bounding_box(&q, margin) {
            return Err(Error::LeftBoundingBox {
                start: lossy(x),
                time: (sign * (elapsed + h)).to_f64_lossy(),
            });
        }
        p = q;
        elapsed += h;
    }
}

/// Bisection on `[0, h]` for `psi(phi(sign*s; p)) = 0`, given `psi(p) < 0 <= psi(phi(sign*h; p))`.
fn bisect<S: Real>(
    a: &dyn VectorField<S>,
    p: &[S],
    sign: S,
    h: S,
    offset_scale: S,
    domain: &ImplicitDomain<S>,
) -> Result<(S, Vec<S>)> {
    let mut lo = S::zero();
    let mut hi = h;
    let mut best = (hi, rk4_step(a, p, sign * hi)?);
    for _ in 0..200 {
        let mid = S::lit(0.5) * (lo + hi);
        let q = rk4_step(a, p, sign * mid)?;
        let psi = domain.level(&q);
        best = (mid, q);
        // Refine past `tol` down to rounding so crossing times are reproducible.
        if psi == S::zero() || hi - lo <= S::epsilon() * (offset_scale + h) {
            break;
        }
        if psi < S::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(best)
}

/// Exit time `tau-(x) <= 0`.
pub fn exit_time<S: Real>(
    a: &dyn VectorField<S>,
    x: &[S],
    domain: &ImplicitDomain<S>,
    cfg: &FlowConfig<S>,
) -> Result<S> {
    Ok(find_crossing(a, x, Direction::Backward, domain, cfg)?.time)
}

/// Entry time `tau+(x) >= 0`.
pub fn entry_time<S: Real>(
    a: &dyn VectorField<S>,
    x: &[S],
    domain: &ImplicitDomain<S>,
    cfg: &FlowConfig<S>,
) -> Result<S> {
    Ok(find_crossing(a, x, Direction::Forward, domain, cfg)?.time)
}

/// Transit time `T(x) = tau+(x) - tau-(x)`.
pub fn transit_time<S: Real>(
    a: &dyn VectorField<S>,
    x: &[S],
    domain: &ImplicitDomain<S>,
    cfg: &FlowConfig<S>,
) -> Result<S> {
    Ok(entry_time(a, x, domain, cfg)? - exit_time(a, x, domain, cfg)?)
}

/// Recirculation point `rho(x) = phi(tau-(x); x)` on the outflow boundary.
pub fn recirculation_point<S: Real>(
    a: &dyn VectorField<S>,
    x: &[S],
    domain: &ImplicitDomain<S>,
    cfg: &FlowConfig<S>,
) -> Result<Vec<S>> {
    Ok(find_crossing(a, x, Direction::Backward, domain, cfg)?.point)
}

/// Node count along a leaf: `max(min_nodes, ceil(T / target_spacing))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeafResolution<S> {
    pub min_nodes: usize,
    pub target_spacing: Option<S>,
}

impl<S: Real> LeafResolution<S> {
    pub fn fixed(nodes: usize) -> Self {
        LeafResolution {
            min_nodes: nodes,
            target_spacing: None,
        }
    }

    pub fn nodes_for(&self, transit: S) -> usize {
        let from_spacing = self
            .target_spacing
            .map(|h| (transit / h).ceil().to_usize().unwrap_or(0))
            .unwrap_or(0);
        self.min_nodes.max(from_spacing).max(1)
    }
}

/// One characteristic curve from its exit point `rho` to its entry point, sampled on
/// the uniform grid `sigma_i = i T / N`.
#[derive(Debug, Clone, PartialEq)]
pub struct Leaf<S> {
    pub id: usize,
    pub exit_point: Vec<S>,
    pub origin: Option<ChartSample<S>>,
    pub transit_time: S,
    pub sigma: Vec<S>,
    pub points: Vec<Vec<S>>,
    pub speeds: Vec<S>,
}

impl<S: Real> Leaf<S> {
    /// `N`, the index of the entry node.
    pub fn intervals(&self) -> usize {
        self.sigma.len() - 1
    }

    pub fn spacing(&self) -> S {
        self.transit_time / S::of_usize(self.intervals())
    }

    pub fn entry_point(&self) -> &[S] {
        self.points.last().expect("leaf has nodes")
    }

    /// `Psi^-1(sigma, rho)` by cubic interpolation of the stored nodes.
    pub fn point_at(&self, sigma: S) -> Vec<S> {
        let n = self.intervals();
        let dim = self.exit_point.len();
        if n < 3 {
            let pos = (sigma / self.spacing()).max(S::zero()).min(S::of_usize(n));
            let base = pos.floor().to_usize().unwrap_or(0).min(n - 1);
            let th = pos - S::of_usize(base);
            return (0..dim)
                .map(|k| {
                    let a = self.points[base][k];
                    a + th * (self.points[base + 1][k] - a)
                })
                .collect();
        }
        let pos = (sigma / self.spacing()).max(S::zero()).min(S::of_usize(n));
        let start = (pos.floor().to_usize().unwrap_or(0).max(1) - 1).min(n - 3);
        let xs = pos - S::of_usize(start);
        let w = lagrange4(xs);
        (0..dim)
            .map(|k| (0..4).map(|m| w[m] * self.points[start + m][k]).sum())
            .collect()
    }
}

/// Cubic Lagrange weights for nodes 0, 1, 2, 3 at position `x`.
fn lagrange4<S: Real>(x: S) -> [S; 4] {
    let one = S::one();
    let two = S::lit(2.0);
    let three = S::lit(3.0);
    let six = S::lit(6.0);
    [
        -(x - one) * (x - two) * (x - three) / six,
        x * (x - two) * (x - three) / two,
        -x * (x - one) * (x - three) / two,
        x * (x - one) * (x - two) / six,
    ]
}

/// Builds the leaf rooted at the outflow point `rho` with `n` grid intervals.
pub fn build_leaf<S: Real>(
    a: &dyn VectorField<S>,
    rho: &[S],
    n: usize,
    domain: &ImplicitDomain<S>,
    cfg: &FlowConfig<S>,
) -> Result<Leaf<S>> {
    build_leaf_with(a, rho, &LeafResolution::fixed(n), domain, cfg)
}

pub fn build_leaf_with<S: Real>(
    a: &dyn VectorField<S>,
    rho: &[S],
    resolution: &LeafResolution<S>,
    domain: &ImplicitDomain<S>,
    cfg: &FlowConfig<S>,
) -> Result<Leaf<S>> {
    let transit = match entry_time(a, rho, domain, cfg) {
        Ok(t) => t,
        // A root whose forward flow cannot enter the domain is a degenerate leaf.
        Err(Error::TangentialExit { .. }) => S::zero(),
        Err(e) => return Err(e),
    };
    let threshold = cfg.skip_threshold();
    if !(transit >= threshold) || transit <= S::zero() {
        return Err(Error::LeafTooShort {
            exit_point: lossy(rho),
            transit: transit.to_f64_lossy(),
            threshold: threshold.to_f64_lossy(),
        });
    }
    let n = resolution.nodes_for(transit);
    let dsigma = transit / S::of_usize(n);
    let sub = (dsigma / cfg.step).ceil().to_usize().unwrap_or(1).max(1);
    let ds = dsigma / S::of_usize(sub);
    let mut points = Vec::with_capacity(n + 1);
    points.push(rho.to_vec());
    for i in 1..=n {
        let mut p = points[i - 1].clone();
        for _ in 0..sub {
            p = rk4_step(a, &p, ds)?;
        }
        points.push(p);
    }
    let speeds = points
        .iter()
        .map(|p| a.speed(p))
        .collect::<Result<Vec<_>>>()?;
    let sigma = (0..=n)
        .map(|i| if i == n { transit } else { S::of_usize(i) * dsigma })
        .collect();
    Ok(Leaf {
        id: 0,
        exit_point: rho.to_vec(),
        origin: None,
        transit_time: transit,
        sigma,
        points,
        speeds,
    })
}

/// Leaves rooted at chart-sampled outflow points, with the bookkeeping needed to
/// locate the leaf of an arbitrary exit point.
#[derive(Debug, Clone)]
pub struct LeafSet<S> {
    pub leaves: Vec<Leaf<S>>,
    /// Outflow samples whose leaf fell below the skip threshold.
    pub skipped: Vec<BoundaryPoint<S>>,
    /// Outflow samples whose leaf could not be built.
    pub failures: Vec<(BoundaryPoint<S>, Error)>,
    per_axis: usize,
    chart_samples: Vec<Vec<(Vec<S>, Vec<S>)>>,
    lookup: HashMap<(usize, Vec<usize>), usize>,
}

impl<S: Real> LeafSet<S> {
    /// Samples the outflow boundary (`per_axis` chart samples per parameter axis) and
    /// builds one leaf per sample, in parallel.
    pub fn build(
        a: &dyn VectorField<S>,
        domain: &ImplicitDomain<S>,
        per_axis: usize,
        resolution: &LeafResolution<S>,
        cfg: &FlowConfig<S>,
    ) -> Result<Self> {
        cfg.validate()?;
        let roots = domain.sample_outflow(a, per_axis, cfg.tangential_tolerance)?;
        let built: Vec<Result<Leaf<S>>> = roots
            .par_iter()
            .map(|bp| build_leaf_with(a, &bp.location, resolution, domain, cfg))
            .collect();
        let mut set = LeafSet::empty(domain, per_axis);
        for (bp, leaf) in roots.into_iter().zip(built) {
            match leaf {
                Ok(mut leaf) => {
                    leaf.id = set.leaves.len();
                    leaf.origin = bp.origin.clone();
                    if let Some(o) = &bp.origin {
                        set.lookup.insert((o.chart, o.index.clone()), leaf.id);
                    }
                    set.leaves.push(leaf);
                }
                Err(Error::LeafTooShort { .. }) => set.skipped.push(bp),
                Err(e) => set.failures.push((bp, e)),
            }
        }
        Ok(set)
    }

    /// Leaf set without leaves, still able to invert the charts.
    pub fn empty(domain: &ImplicitDomain<S>, per_axis: usize) -> Self {
        let per_axis = per_axis.max(1);
        let mut chart_samples = vec![Vec::new(); domain.charts().len()];
        for (origin, z) in domain.chart_samples(per_axis) {
            chart_samples[origin.chart].push((origin.param, z));
        }
        LeafSet {
            leaves: Vec::new(),
            skipped: Vec::new(),
            failures: Vec::new(),
            per_axis,
            chart_samples,
            lookup: HashMap::new(),
        }
    }

    pub fn per_axis(&self) -> usize {
        self.per_axis
    }

    pub fn len(&self) -> usize {
        self.leaves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.leaves.is_empty()
    }

    pub fn t_max(&self) -> S {
        self.leaves
            .iter()
            .fold(S::zero(), |m, l| m.max(l.transit_time))
    }

    /// Interpolation stencil `(leaf id, weight)` for an exit point: multilinear in the
    /// chart parameter when every needed neighbour leaf exists, otherwise the nearest
    /// leaf within two sampling intervals.
    pub fn locate(&self, domain: &ImplicitDomain<S>, rho: &[S]) -> Result<Vec<(usize, S)>> {
        let no_match = || Error::NoMatchingLeaf {
            exit_point: lossy(rho),
        };
        let (chart, param, dist) = self.invert_charts(domain, rho).ok_or_else(no_match)?;
        if dist > S::lit(1e-6) * domain.diameter() {
            return Err(no_match());
        }
        let m = self.per_axis;
        let d = param.len();
        let grid: Vec<S> = param
            .iter()
            .map(|&p| p * S::of_usize(m) - S::lit(0.5))
            .collect();

        // Multilinear cell.
        let mut base = Vec::with_capacity(d);
        let mut frac = Vec::with_capacity(d);
        for &g in &grid {
            if m == 1 {
                base.push(0);
                frac.push(S::zero());
                continue;
            }
            let b = g.floor().max(S::zero()).to_usize().unwrap_or(0).min(m - 2);
            base.push(b);
            frac.push((g - S::of_usize(b)).max(S::zero()).min(S::one()));
        }
        let mut stencil = Vec::new();
        let mut complete = true;
        for corner in 0..(1usize << d) {
            let mut w = S::one();
            let mut index = Vec::with_capacity(d);
            for k in 0..d {
                let upper = (corner >> k) & 1 == 1;
                w *= if upper { frac[k] } else { S::one() - frac[k] };
                index.push(base[k] + usize::from(upper));
            }
            if w == S::zero() {
                continue;
            }
            match self.lookup.get(&(chart, index)) {
                Some(&id) => stencil.push((id, w)),
                None => {
                    complete = false;
                    break;
                }
            }
        }
        if complete && !stencil.is_empty() {
            return Ok(stencil);
        }

        // Nearest leaf by chart parameter.
        let radius = S::lit(2.0);
        let mut best: Option<(S, usize)> = None;
        let ranges: Vec<(usize, usize)> = grid
            .iter()
            .map(|&g| {
                let lo = (g - radius).ceil().max(S::zero()).to_usize().unwrap_or(0);
                let hi = (g + radius)
                    .floor()
                    .max(S::zero())
                    .to_usize()
                    .unwrap_or(0)
                    .min(m - 1);
                (lo, hi)
            })
            .collect();
        let mut index: Vec<usize> = ranges.iter().map(|r| r.0).collect();
        if ranges.iter().all(|&(lo, hi)| lo <= hi) {
            loop {
                if let Some(&id) = self.lookup.get(&(chart, index.clone())) {
                    let dist = index
                        .iter()
                        .zip(&grid)
                        .fold(S::zero(), |acc, (&i, &g)| acc.max((S::of_usize(i) - g).abs()));
                    if dist <= radius && best.is_none_or(|(bd, _)| dist < bd) {
                        best = Some((dist, id));
                    }
                }
                // Odometer increment over the search box.
                let mut k = 0;
                loop {
                    if k == d {
                        break;
                    }
                    if index[k] < ranges[k].1 {
                        index[k] += 1;
                        break;
                    }
                    index[k] = ranges[k].0;
                    k += 1;
                }
                if k == d {
                    break;
                }
            }
        }
        best.map(|(_, id)| vec![(id, S::one())]).ok_or_else(no_match)
    }

    /// Chart and parameter closest to `z`: nearest sample, then Gauss-Newton refinement.
    fn invert_charts(&self, domain: &ImplicitDomain<S>, z: &[S]) -> Option<(usize, Vec<S>, S)> {
        let mut best: Option<(usize, Vec<S>, S)> = None;
        for (c, samples) in self.chart_samples.iter().enumerate() {
            let Some((p0, _)) = samples
                .iter()
                .min_by(|a, b| {
                    distance(&a.1, z)
                        .partial_cmp(&distance(&b.1, z))
                        .unwrap_or(std::cmp::Ordering::Equal)
                })
            else {
                continue;
            };
            let chart = &domain.charts()[c];
            let param = refine_param(|p| chart.point(p), p0.clone(), z);
            let dist = distance(&chart.point(&param), z);
            if best.as_ref().is_none_or(|b| dist < b.2) {
                best = Some((c, param, dist));
            }
        }
        best
    }
}

/// Gauss-Newton on `|chart(p) - z|^2` over `p in [0,1]^d`.
fn refine_param<S: Real>(chart: impl Fn(&[S]) -> Vec<S>, mut p: Vec<S>, z: &[S]) -> Vec<S> {
    let d = p.len();
    if d == 0 {
        return p;
    }
    let n = z.len();
    let delta = S::lit(1e-7);
    for _ in 0..50 {
        let c = chart(&p);
        let r: Vec<S> = c.iter().zip(z).map(|(&a, &b)| a - b).collect();
        // Central-difference Jacobian, n x d.
        let mut jac = vec![vec![S::zero(); d]; n];
        for k in 0..d {
            let mut up = p.clone();
            let mut dn = p.clone();
            up[k] += delta;
            dn[k] -= delta;
            let cu = chart(&up);
            let cd = chart(&dn);
            for i in 0..n {
                jac[i][k] = (cu[i] - cd[i]) / (delta + delta);
            }
        }
        let mut normal = vec![vec![S::zero(); d + 1]; d];
        for row in 0..d {
            for col in 0..d {
                normal[row][col] = (0..n).map(|i| jac[i][row] * jac[i][col]).sum();
            }
            normal[row][d] = -(0..n).map(|i| jac[i][row] * r[i]).sum::<S>();
        }
        let Some(step) = solve_dense(normal) else {
            break;
        };
        let mut moved = S::zero();
        for k in 0..d {
            let next = (p[k] + step[k]).max(S::zero()).min(S::one());
            moved = moved.max((next - p[k]).abs());
            p[k] = next;
        }
        if moved <= S::lit(1e-15) {
            break;
        }
    }
    p
}

/// Gaussian elimination with partial pivoting on an augmented `d x (d+1)` system.
fn solve_dense<S: Real>(mut m: Vec<Vec<S>>) -> Option<Vec<S>> {
    let d = m.len();
    for col in 0..d {
        let pivot = (col..d).max_by(|&a, &b| {
            m[a][col]
                .abs()
                .partial_cmp(&m[b][col].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if m[pivot][col].abs() <= S::min_positive_value() {
            return None;
        }
        m.swap(col, pivot);
        for row in col + 1..d {
            let f = m[row][col] / m[col][col];
            for k in col..=d {
                let v = m[col][k];
                m[row][k] -= f * v;
            }
        }
    }
    let mut x = vec![S::zero(); d];
    for row in (0..d).rev() {
        let s: S = (row + 1..d).map(|k| m[row][k] * x[k]).sum();
        x[row] = (m[row][d] - s) / m[row][row];
    }
    Some(x)
}

/// Characteristic coordinates of a point.
#[derive(Debug, Clone, PartialEq)]
pub struct CharCoords<S> {
    /// Time to exit, `-tau-(x)`.
    pub sigma: S,
    /// Exact recirculation point `rho(x)`.
    pub exit_point: Vec<S>,
    /// Leaf with the largest stencil weight.
    pub leaf_id: usize,
    /// Interpolation weights over neighbouring sampled leaves, summing to one.
    pub stencil: Vec<(usize, S)>,
}

/// `Psi(x) = (sigma(x), rho(x))`, with `rho(x)` matched against the sampled leaves.
pub fn psi_map<S: Real>(
    a: &dyn VectorField<S>,
    x: &[S],
    domain: &ImplicitDomain<S>,
    cfg: &FlowConfig<S>,
    leaves: &LeafSet<S>,
) -> Result<CharCoords<S>> {
    let crossing = find_crossing(a, x, Direction::Backward, domain, cfg)?;
    let stencil = leaves.locate(domain, &crossing.point)?;
    let leaf_id = stencil
        .iter()
        .fold((usize::MAX, -S::one()), |best, &(id, w)| if w > best.1 { (id, w) } else { best })
        .0;
    Ok(CharCoords {
        sigma: -crossing.time,
        exit_point: crossing.point,
        leaf_id,
        stencil,
    })
}

/// `Psi^-1(sigma, leaf)` from the stored leaf nodes.
pub fn psi_inv<S: Real>(leaf: &Leaf<S>, sigma: S) -> Vec<S> {
    leaf.point_at(sigma)
}

/// `Psi^-1(sigma, rho) = phi(sigma; rho)` by re-integration.
pub fn psi_inv_exact<S: Real>(
    a: &dyn VectorField<S>,
    rho: &[S],
    sigma: S,
    domain: &ImplicitDomain<S>,
    cfg: &FlowConfig<S>,
) -> Result<Vec<S>> {
    flow(a, rho, sigma, domain, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub t_max: f64,
    pub trapped: usize,
    pub skipped: usize,
    pub leaves: usize,
    pub probes: usize,
}

impl AuditReport {
    /// A run is rejected when any characteristic is trapped or no leaf exists.
    pub fn rejected(&self) -> bool {
        self.trapped > 0 || self.leaves == 0
    }
}

/// Non-trapping audit: `T_max` over the leaves, plus entry/exit searches from an
/// interior probe grid (`probes_per_axis` cell centres per axis).
pub fn audit_non_trapping<S: Real>(
    a: &dyn VectorField<S>,
    domain: &ImplicitDomain<S>,
    leaves: Option<&LeafSet<S>>,
    cfg: &FlowConfig<S>,
    probes_per_axis: usize,
) -> AuditReport {
    let probes = interior_grid(domain, probes_per_axis, cfg.crossing_tolerance);
    let trapped_probes = probes
        .par_iter()
        .filter(|x| {
            [Direction::Backward, Direction::Forward].iter().any(|&dir| {
                matches!(
                    find_crossing(a, x, dir, domain, cfg),
                    Err(Error::Trapped { .. } | Error::LeftBoundingBox { .. })
                )
            })
        })
        .count();
    let (t_max, trapped_leaves, skipped, count) = match leaves {
        Some(set) => (
            set.t_max(),
            set.failures
                .iter()
                .filter(|(_, e)| matches!(e, Error::Trapped { .. } | Error::LeftBoundingBox { .. }))
                .count(),
            set.skipped.len(),
            set.len(),
        ),
        None => (S::zero(), 0, 0, 0),
    };
    AuditReport {
        t_max: t_max.to_f64_lossy(),
        trapped: trapped_leaves + trapped_probes,
        skipped,
        leaves: count,
        probes: probes.len(),
    }
}

/// Cell-centred bounding-box grid points with `psi < -margin`.
pub fn interior_grid<S: Real>(domain: &ImplicitDomain<S>, per_axis: usize, margin: S) -> Vec<Vec<S>> {
    let per_axis = per_axis.max(1);
    let dim = domain.dim();
    let bbox = domain.bounding_box();
    let total = per_axis.pow(dim as u32);
    (0..total)
        .filter_map(|mut flat| {
            let mut x = vec![S::zero(); dim];
            for k in (0..dim).rev() {
                let i = flat % per_axis;
                flat /= per_axis;
                let (lo, hi) = bbox[k];
                x[k] = lo + (hi - lo) * (S::of_usize(i) + S::lit(0.5)) / S::of_usize(per_axis);
            }
            (domain.level(&x) < -margin).then_some(x)
        })
        .collect()
}
