//! Randomized invariants of geometry, characteristics, coefficients, kernel and simulator.

use backstep::characteristics::{
    build_leaf, entry_time, exit_time, find_crossing, flow, psi_map, Direction, FlowConfig, LeafSet,
};
use backstep::coefficients::leaf_coefficients;
use backstep::kernel::{assemble_gain, kernel_sweep, solve_kernel, solve_leaf_kernel};
use backstep::simulator::{control_u, init_state, step, EpsilonState, Mode};
use backstep::{BoundaryClass, ConstantField, Expr, ExprField, ImplicitDomain, LeafResolution, ProblemSpec, TriMatrix};
use proptest::prelude::*;

fn disk() -> ImplicitDomain<f64> {
    ImplicitDomain::ball(vec![0.0, 0.0], 1.0).unwrap()
}

fn diagonal() -> ConstantField<f64> {
    ConstantField::new(vec![1.0, 1.0])
}

fn swirl() -> ExprField {
    ExprField::new(vec![
        Expr::parse("1 + 0.3*sin(x2)").unwrap(),
        Expr::parse("0.5 + 0.2*x1^2").unwrap(),
    ])
}

fn flow_cfg(domain: &ImplicitDomain<f64>, speed: f64) -> FlowConfig<f64> {
    let mut cfg = FlowConfig::for_domain(domain, speed, 10.0);
    cfg.step = 1e-3;
    cfg
}

fn interior(r: f64) -> impl Strategy<Value = Vec<f64>> {
    (0.0..r, 0.0..std::f64::consts::TAU).prop_map(|(rad, th)| vec![rad * th.cos(), rad * th.sin()])
}

/// Outflow point of the disk under `a = (1, 1)`, away from the tangential points.
fn outflow_root() -> impl Strategy<Value = Vec<f64>> {
    let pi = std::f64::consts::PI;
    (0.75 * pi + 0.05..1.75 * pi - 0.05).prop_map(|th: f64| vec![th.cos(), th.sin()])
}

fn spec_with(lambda: &str, g: &str, f: &str) -> ProblemSpec {
    let mut spec = ProblemSpec::disk_example(2.0, 0.1);
    spec.lambda = Expr::parse(lambda).unwrap();
    spec.g = Expr::parse(g).unwrap();
    spec.f = Expr::parse(f).unwrap();
    spec
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn boundary_partition(angle in 0.0..std::f64::consts::TAU, per_axis in 3usize..200) {
        let domain = disk();
        let a = ConstantField::new(vec![angle.cos(), angle.sin()]);
        let eps = 1e-9;
        let points = domain.classify_boundary(&a, per_axis, eps).unwrap();
        prop_assert_eq!(points.len(), per_axis);
        for p in &points {
            let norm: f64 = p.normal.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!((norm - 1.0).abs() <= 1e-12);
            let expected = if p.flux > eps {
                BoundaryClass::Inflow
            } else if p.flux < -eps {
                BoundaryClass::Outflow
            } else {
                BoundaryClass::Tangential
            };
            prop_assert_eq!(p.class, expected);
            let h = 1e-6 * domain.diameter();
            let outside: Vec<f64> = p.location.iter().zip(&p.normal).map(|(z, n)| z + h * n).collect();
            prop_assert!(domain.level(&outside) > 0.0);
        }
    }

    #[test]
    fn flow_composes(x in interior(0.8), sigma in -0.2..0.2f64, s in -0.2..0.2f64) {
        let domain = disk();
        let a = swirl();
        let cfg = flow_cfg(&domain, 1.5);
        let two = flow(&a, &flow(&a, &x, sigma, &domain, &cfg).unwrap(), s, &domain, &cfg).unwrap();
        let one = flow(&a, &x, sigma + s, &domain, &cfg).unwrap();
        let d = ((one[0] - two[0]).powi(2) + (one[1] - two[1]).powi(2)).sqrt();
        prop_assert!(d <= 1e-8, "composition defect {d}");
    }

    #[test]
    fn sigma_is_additive_along_the_flow(x in interior(0.95), frac in 0.0..1.0f64) {
        let domain = disk();
        let a = swirl();
        let cfg = flow_cfg(&domain, 1.5);
        let ahead = entry_time(&a, &x, &domain, &cfg).unwrap();
        let s = frac * ahead * 0.999;
        let moved = flow(&a, &x, s, &domain, &cfg).unwrap();
        let sigma_x = -exit_time(&a, &x, &domain, &cfg).unwrap();
        let sigma_moved = -exit_time(&a, &moved, &domain, &cfg).unwrap();
        prop_assert!((sigma_moved - sigma_x - s).abs() <= 1e-8);
    }

    #[test]
    fn crossings_classify(x in interior(0.95)) {
        let domain = disk();
        let a = swirl();
        let cfg = flow_cfg(&domain, 1.5);
        let back = find_crossing(&a, &x, Direction::Backward, &domain, &cfg).unwrap();
        let ahead = find_crossing(&a, &x, Direction::Forward, &domain, &cfg).unwrap();
        prop_assert_eq!(back.class, BoundaryClass::Outflow);
        prop_assert_eq!(ahead.class, BoundaryClass::Inflow);
        prop_assert!(back.time <= 0.0 && ahead.time >= 0.0);
    }

    #[test]
    fn leaf_invariants(rho in outflow_root(), n in 4usize..200) {
        let domain = disk();
        let a = diagonal();
        let cfg = flow_cfg(&domain, 2f64.sqrt());
        let leaf = build_leaf(&a, &rho, n, &domain, &cfg).unwrap();
        prop_assert_eq!(&leaf.points[0], &rho);
        prop_assert_eq!(leaf.sigma[0], 0.0);
        prop_assert_eq!(leaf.sigma[n], leaf.transit_time);
        prop_assert!(leaf.sigma.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(leaf.speeds.iter().all(|&s| s > 0.0));
        for p in &leaf.points {
            prop_assert!(domain.level(p) <= cfg.crossing_tolerance);
        }
        prop_assert!(domain.level(leaf.entry_point()).abs() <= cfg.crossing_tolerance);
        let closed_form = (2.0 - (rho[0] - rho[1]).powi(2)).sqrt();
        prop_assert!((leaf.transit_time - closed_form).abs() <= 1e-9);
    }

    #[test]
    fn leaves_do_not_intersect(r1 in outflow_root(), r2 in outflow_root()) {
        prop_assume!((r1[0] - r2[0]).abs() + (r1[1] - r2[1]).abs() > 1e-3);
        let domain = disk();
        let a = diagonal();
        let cfg = flow_cfg(&domain, 2f64.sqrt());
        let l1 = build_leaf(&a, &r1, 40, &domain, &cfg).unwrap();
        let l2 = build_leaf(&a, &r2, 40, &domain, &cfg).unwrap();
        let gap = l1.points.iter().flat_map(|p| l2.points.iter().map(move |q| {
            ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
        })).fold(f64::INFINITY, f64::min);
        prop_assert!(gap > 0.0);
    }

    #[test]
    fn char_coords_within_leaf(x in interior(0.95)) {
        let domain = disk();
        let a = diagonal();
        let cfg = flow_cfg(&domain, 2f64.sqrt());
        let leaves = LeafSet::build(&a, &domain, 64, &LeafResolution::fixed(8), &cfg).unwrap();
        let c = psi_map(&a, &x, &domain, &cfg, &leaves).unwrap();
        let transit = (2.0 - (x[0] - x[1]).powi(2)).sqrt();
        prop_assert!(c.sigma >= 0.0 && c.sigma <= transit + 1e-12);
        let total: f64 = c.stencil.iter().map(|s| s.1).sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn linear_reaction_integrates_exactly(rho in outflow_root(), c0 in -2.0..2.0f64, c1 in -2.0..2.0f64, m in 2usize..80) {
        let domain = disk();
        let a = diagonal();
        let cfg = flow_cfg(&domain, 2f64.sqrt());
        let leaf = build_leaf(&a, &rho, 64, &domain, &cfg).unwrap();
        let spec = spec_with(&format!("{c0:?} + {c1:?}*x1"), "1", "0");
        let lc = leaf_coefficients(&spec, &leaf, m).unwrap();
        let t = leaf.transit_time;
        for (i, &l) in lc.big_lambda.iter().enumerate() {
            let s = i as f64 / m as f64;
            let exact = t * (c0 + c1 * rho[0]) * s + c1 * t * t * s * s / 2.0;
            prop_assert!((l - exact).abs() <= 1e-11);
        }
    }

    #[test]
    fn nonlocal_weight_structure(rho in outflow_root(), m in 2usize..40) {
        let domain = disk();
        let a = diagonal();
        let cfg = flow_cfg(&domain, 2f64.sqrt());
        let leaf = build_leaf(&a, &rho, 32, &domain, &cfg).unwrap();
        let spec = spec_with("0.5 - x2", "1", "0.3*x1*y2 + 0.1");
        let lc = leaf_coefficients(&spec, &leaf, m).unwrap();
        let (big_f, f_bar) = (lc.big_f.unwrap(), lc.f_bar.unwrap());
        for i in 0..=m {
            for j in 0..=i {
                let back = big_f.get(i, j) * (lc.big_lambda[j] - lc.big_lambda[i]).exp();
                prop_assert!((back - f_bar.get(i, j)).abs() <= 1e-12 * (1.0 + f_bar.get(i, j).abs()));
            }
        }
    }

    #[test]
    fn zero_data_gives_zero_kernel(m in 2usize..60) {
        let kt = solve_kernel(&vec![0.0; m + 1], Some(&TriMatrix::zeros(m)), m, 1e-12, 50).unwrap();
        prop_assert_eq!(kt.values.max_abs(), 0.0);
    }

    #[test]
    fn converged_kernel_is_stationary(m in 4usize..50, g0 in -2.0..2.0f64, b in -1.0..1.0f64, f0 in -0.5..0.5f64) {
        let g: Vec<f64> = (0..=m).map(|i| g0 * (b * i as f64 / m as f64).exp()).collect();
        let f = TriMatrix::from_fn(m, |i, j| f0 * ((i + 2 * j) as f64 / m as f64).sin());
        let tol = 1e-11;
        let kt = solve_kernel(&g, Some(&f), m, tol, 200).unwrap();
        let again = kernel_sweep(&kt.values, &g, Some(&f));
        prop_assert!(again.max_diff(&kt.values) <= tol);
    }

    #[test]
    fn kernel_depends_on_difference_only(m in 4usize..60, g0 in -2.0..2.0f64, c in -1.0..1.0f64) {
        let g: Vec<f64> = (0..=m).map(|i| g0 * (c * i as f64 / m as f64).exp()).collect();
        let kt = solve_kernel(&g, None, m, 1e-13, 200).unwrap();
        let scale = 1.0 + kt.values.max_abs();
        for i in 0..m {
            for j in 0..=i {
                prop_assert!((kt.values.get(i, j) - kt.values.get(i + 1, j + 1)).abs() <= 1e-10 * scale);
            }
        }
    }

    #[test]
    fn gains_scale_with_speed(rho in outflow_root(), gamma in 0.5..3.0f64) {
        let domain = disk();
        let a = ExprField::new(vec![Expr::parse("1 + 0.2*x2").unwrap(), Expr::constant(1.0)]);
        let cfg = flow_cfg(&domain, 2f64.sqrt());
        let leaf = build_leaf(&a, &rho, 50, &domain, &cfg).unwrap();
        let mut spec = ProblemSpec::disk_example(gamma, 0.1);
        spec.velocity = a.components().to_vec();
        let lc = leaf_coefficients(&spec, &leaf, 40).unwrap();
        let kt = solve_leaf_kernel(&lc, 1e-12, 200).unwrap();
        let gains = assemble_gain(&kt, &lc.big_lambda, &leaf).unwrap();
        for ((&arc, &speed), &k) in gains.k_arc.iter().zip(&leaf.speeds).zip(&gains.k_sigma) {
            // Division then multiplication by the same speed: within one rounding of each.
            prop_assert!((arc * speed - k).abs() <= 2.0 * f64::EPSILON * k.abs());
        }
    }

    #[test]
    fn pure_transport_shifts_exactly(rho in outflow_root(), n in 4usize..120, steps in 1usize..40) {
        let domain = disk();
        let a = diagonal();
        let cfg = flow_cfg(&domain, 2f64.sqrt());
        let leaf = build_leaf(&a, &rho, n, &domain, &cfg).unwrap();
        let spec = spec_with("0", "0", "0");
        let lc = leaf_coefficients(&spec, &leaf, 4).unwrap();
        let ens = init_state(&spec, std::slice::from_ref(&leaf), None, Mode::Open, Vec::new()).unwrap();
        let mut state = ens.leaves[0].clone();
        for _ in 0..steps {
            state = step(&state, &lc, None, &ens.epsilons[0], Mode::Open).unwrap();
        }
        let start = &ens.leaves[0].values;
        for i in 0..=n {
            let expect = start[(i + steps).min(n)];
            prop_assert_eq!(state.values[i].to_bits(), expect.to_bits());
        }
    }

    #[test]
    fn closed_loop_boundary_is_enforced(rho in outflow_root(), gamma in 0.5..3.0f64, steps in 1usize..60) {
        let domain = disk();
        let a = diagonal();
        let cfg = flow_cfg(&domain, 2f64.sqrt());
        let leaf = build_leaf(&a, &rho, 80, &domain, &cfg).unwrap();
        let spec = ProblemSpec::disk_example(gamma, 0.1);
        let lc = leaf_coefficients(&spec, &leaf, 40).unwrap();
        let kt = solve_leaf_kernel(&lc, 1e-12, 200).unwrap();
        let gains = vec![assemble_gain(&kt, &lc.big_lambda, &leaf).unwrap()];
        let ens = init_state(&spec, std::slice::from_ref(&leaf), Some(&gains), Mode::Closed, Vec::new()).unwrap();
        let es = ens.epsilons[0];
        let mut state = ens.leaves[0].clone();
        for _ in 0..steps {
            state = step(&state, &lc, Some(&gains[0]), &es, Mode::Closed).unwrap();
            let n = state.values.len() - 1;
            let target = control_u(&state, &gains[0]).unwrap() + es.at(state.time);
            prop_assert!((state.values[n] - target).abs() <= 1e-12 * (1.0 + target.abs()));
        }
    }

    #[test]
    fn offset_vanishes_in_finite_time(eps0 in -5.0..5.0f64, m1 in 0.5..10.0f64, m2 in 0.05..0.95f64) {
        let es = EpsilonState::new(eps0, m1, m2);
        prop_assert!((es.at(0.0) - eps0).abs() <= 1e-12 * eps0.abs());
        prop_assert_eq!(es.at(es.settle_time), 0.0);
        prop_assert_eq!(es.at(es.settle_time * 2.0 + 1.0), 0.0);
        let mid = es.at(0.5 * es.settle_time);
        prop_assert!(mid.abs() <= eps0.abs() && mid * eps0 >= 0.0);
    }
}
