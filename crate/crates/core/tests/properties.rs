use plap::eigen::{
    default_bumps, estimate_spectrum, linear_spectrum_oracle, lowest_eigenpair, optimize_bumps, refine_eigenpair,
    Certification, RayleighOptions,
};
use plap::grid::divergence;
use plap::minimax::{solve, SolveOptions};
use plap::{
    eval_energy, forward_difference, grad_energy, monotonicity_gap, DomainDescriptor, Field, Grid, NonlinearitySpec,
    ProblemSpec, ProblemSpec64,
};
use proptest::prelude::*;

fn rel(a: f64, b: f64, scale: f64) -> f64 {
    (a - b).abs() / scale.abs().max(f64::MIN_POSITIVE)
}

fn spec_with(n: usize, p: f64, lambda: f64, v: Vec<f64>) -> ProblemSpec64 {
    let grid = Grid::periodic(n, 1.0).unwrap();
    let b = vec![1.0; n];
    ProblemSpec::new(grid, p, lambda, b, v, NonlinearitySpec::pure_power(p + 1.5)).unwrap()
}

fn field(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, n)
}

/// Values with magnitude in `[0.5, 2]` and random signs.
fn nonvanishing(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((0.5f64..2.0, any::<bool>()), n)
        .prop_map(|v| v.into_iter().map(|(a, s)| if s { a } else { -a }).collect())
}

fn sign_changing(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.5, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn summation_by_parts(n in 4usize..48, box2d in any::<bool>(), seed in any::<u64>()) {
        let grid: Grid<f64> = if box2d { Grid::boxed(2, n.min(16), 4.0).unwrap() } else { Grid::periodic(n, 1.3).unwrap() };
        let len = grid.num_dofs();
        let mut s = seed;
        let mut next = || { s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407); (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5 };
        let u = Field::new((0..len).map(|_| next()).collect()).unwrap();
        let v = Field::new((0..len).map(|_| next()).collect()).unwrap();
        let (fu, fv) = (forward_difference(&u, &grid).unwrap(), forward_difference(&v, &grid).unwrap());
        let w = grid.weight();
        let lhs: f64 = (0..grid.dims()).map(|a| fu.axis(a).iter().zip(fv.axis(a)).map(|(x, y)| x * y).sum::<f64>()).sum::<f64>() * w;
        let div = divergence(&fu, &grid);
        let vfull = grid.extend(v.values());
        let rhs: f64 = -div.iter().zip(&vfull).map(|(d, x)| d * x).sum::<f64>() * w;
        prop_assert!(rel(lhs, rhs, lhs.abs().max(1e-300)) < 1e-12, "{lhs} vs {rhs}");
    }

    #[test]
    fn grid_construction_is_pure(n in 2usize..40, dims in 1usize..4, side in 0.5f64..20.0) {
        let d = if dims == 1 { DomainDescriptor::periodic(n + 2, side) } else { DomainDescriptor::boxed(dims, n.min(12) + 2, side) };
        let a = Grid::<f64>::build(&d).unwrap();
        let b = Grid::<f64>::build(&d).unwrap();
        prop_assert_eq!(&a, &b);
        let wa: Vec<u64> = a.weights().iter().map(|x| x.to_bits()).collect();
        let wb: Vec<u64> = b.weights().iter().map(|x| x.to_bits()).collect();
        prop_assert_eq!(wa, wb);
    }

    #[test]
    fn homogeneity_and_euler(p in 1.2f64..4.0, t in -4.0f64..4.0, u in field(32), v in sign_changing(32)) {
        prop_assume!(u.iter().any(|x| x.abs() > 1e-3) && t.abs() > 1e-3);
        let spec = spec_with(32, p, 0.7, v);
        let u = Field::new(u).unwrap();
        let e = eval_energy(&u, &spec).unwrap();
        let et = eval_energy(&u.scaled(t), &spec).unwrap();
        let g = grad_energy(&u, &spec).unwrap();
        let tp = t.abs().powf(p);
        let iscale = e.h.max(e.i.abs());
        prop_assert!(rel(et.h, tp * e.h, tp * e.h) < 1e-12);
        prop_assert!(rel(et.i, tp * e.i, tp * iscale) < 1e-12);
        prop_assert!(rel(g.grad_h.dot(&u), p * e.h, p * e.h) < 1e-12);
        prop_assert!(rel(g.grad_i.dot(&u), p * e.i, p * iscale) < 1e-12);
    }

    #[test]
    fn gradient_matches_central_difference(p in 2.0f64..4.0, u in field(24), d in field(24)) {
        let spec = spec_with(24, p, 0.5, vec![1.0; 24]);
        let (u, d) = (Field::new(u).unwrap(), Field::new(d).unwrap());
        let an = grad_energy(&u, &spec).unwrap().grad_phi.dot(&d);
        prop_assume!(an.abs() > 1e-6);
        let eps = 1e-5;
        let fd = (eval_energy(&u.axpy(eps, &d), &spec).unwrap().phi - eval_energy(&u.axpy(-eps, &d), &spec).unwrap().phi) / (2.0 * eps);
        prop_assert!(rel(fd, an, an) < 1e-6, "{fd} vs {an}");
    }

    #[test]
    fn gradient_below_two_away_from_zero(p in 1.3f64..2.0, u in nonvanishing(24), d in field(24)) {
        let spec = spec_with(24, p, 0.5, vec![1.0; 24]);
        let (u, d) = (Field::new(u).unwrap(), Field::new(d).unwrap());
        let an = grad_energy(&u, &spec).unwrap().grad_phi.dot(&d);
        prop_assume!(an.abs() > 1e-3);
        let eps = 1e-6;
        let fd = (eval_energy(&u.axpy(eps, &d), &spec).unwrap().phi - eval_energy(&u.axpy(-eps, &d), &spec).unwrap().phi) / (2.0 * eps);
        prop_assert!(rel(fd, an, an) < 1e-5, "{fd} vs {an}");
    }

    #[test]
    fn monotonicity_gap_is_nonnegative(p in 1.2f64..4.0, u in field(32), v in field(32), mix in 0.0f64..1.0) {
        let spec = spec_with(32, p, 0.0, vec![1.0; 32]);
        let u = Field::new(u).unwrap();
        // pull v towards a multiple of u half of the time
        let v = Field::new(v).unwrap();
        let v = if mix < 0.5 { u.scaled(2.0 * mix - 0.3).axpy(1e-3, &v) } else { v };
        let gap = monotonicity_gap(&u, &v, &spec).unwrap();
        let scale = 1.0 + eval_energy(&u, &spec).unwrap().norm_w.powf(p) + eval_energy(&v, &spec).unwrap().norm_w.powf(p);
        prop_assert!(gap / scale >= -1e-10, "{gap}");
    }

    #[test]
    fn flip_is_bitwise(p in 1.2f64..4.0, lambda in -50.0f64..50.0, u in field(32), v in sign_changing(32)) {
        let spec = spec_with(32, p, lambda, v);
        let u = Field::new(u).unwrap();
        let a = eval_energy(&u, &spec).unwrap().phi;
        let b = eval_energy(&u, &spec.flipped()).unwrap().phi;
        prop_assert_eq!(a.to_bits(), b.to_bits());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn accepted_pairs_satisfy_eigenvalue_identity(p in prop::sample::select(vec![1.5f64, 2.0, 3.0]), seed in 0u64..1000) {
        let spec = spec_with(64, p, 0.0, (0..64).map(|i| 1.0 + 0.5 * (i as f64 / 10.0).sin()).collect());
        let opts = RayleighOptions { seed, starts: 2, ..Default::default() };
        let pair = lowest_eigenpair(&spec, &opts).unwrap();
        let e = eval_energy(&pair.u, &spec).unwrap();
        prop_assert!((e.i - 1.0).abs() < 1e-12);
        prop_assert!((pair.lambda - e.h).abs() < opts.tol);
    }

    #[test]
    fn p2_descent_agrees_with_oracle(seed in 0u64..1000, amp in 0.0f64..0.8) {
        let v: Vec<f64> = (0..64).map(|i| 1.0 + amp * (2.0 * std::f64::consts::PI * i as f64 / 64.0).cos()).collect();
        let spec = spec_with(64, 2.0, 0.0, v);
        let oracle = linear_spectrum_oracle(&spec).unwrap();
        let opts = RayleighOptions { seed, starts: 2, ..Default::default() };
        let pair = lowest_eigenpair(&spec, &opts).unwrap();
        prop_assert!((pair.lambda - oracle.values()[0]).abs() < 1e-8);
        let refined = refine_eigenpair(oracle.pair(1).unwrap(), &spec, 1e-10).unwrap();
        prop_assert!((refined.lambda - oracle.values()[1]).abs() < 1e-8);
    }
}

#[test]
fn spectrum_is_ordered_and_below_bounds() {
    for p in [1.5, 3.0] {
        let spec = spec_with(128, p, 0.0, vec![1.0; 128]);
        let opts = RayleighOptions::default();
        let s = estimate_spectrum(&spec, 3, &opts).unwrap();
        let values = s.values();
        assert!(values.windows(2).all(|w| w[0] <= w[1]), "{values:?}");
        for e in &s.entries {
            if let (Certification::Refined, Some(ub)) = (e.certification, e.upper_bound) {
                assert!(e.value <= ub + opts.tol, "p={p}: {} > {ub}", e.value);
            }
        }
    }
}

#[test]
fn bump_bounds_are_monotone() {
    for p in [1.5, 2.0, 3.0] {
        let spec = spec_with(128, p, 0.0, vec![1.0; 128]);
        let bumps = default_bumps(3, &spec).unwrap();
        let (_, bounds) = optimize_bumps(&spec, &bumps, 1e-8, 5000).unwrap();
        assert!(!bounds.is_empty());
        for w in bounds.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12), "p={p}: {} after {}", w[1], w[0]);
        }
    }
}

fn linking_spec(n: usize, c: f64) -> ProblemSpec64 {
    let grid = Grid::periodic(n, 1.0).unwrap();
    ProblemSpec::uniform(grid, 2.0, 20.0, 1.0, 1.0, NonlinearitySpec::scaled_power(4.0, c)).unwrap()
}

#[test]
fn linking_minimax_trace_and_level() {
    let r = solve(&linking_spec(128, 1.0), &SolveOptions::default()).unwrap();
    assert!(r.minimax_trace.windows(2).all(|w| w[1] <= w[0]));
    assert!(r.value >= r.geometry.alpha - 1e-8);
    assert!(r.boundary_max.unwrap() <= 1e-8);
}

#[test]
fn critical_value_is_continuous_in_f_scaling() {
    let d = |c: f64| solve(&linking_spec(128, c), &SolveOptions::default()).unwrap().value;
    let d1 = d(1.0);
    let gaps: Vec<f64> = [0.9, 0.99, 1.01, 1.1].iter().map(|&c| (d(c) - d1).abs()).collect();
    assert!(gaps[1] < gaps[0] && gaps[2] < gaps[3], "{gaps:?}");
    assert!(gaps[1] < 0.05 * d1 && gaps[2] < 0.05 * d1, "{gaps:?}");
}

#[test]
fn flipped_solve_sees_identical_energies() {
    let spec = linking_spec(64, 1.0);
    let mut neg = spec.flipped();
    neg.f = spec.f.clone();
    let a = solve(&spec, &SolveOptions::default()).unwrap();
    let b = solve(&neg, &SolveOptions::default()).unwrap();
    assert!(b.geometry.flipped);
    assert_eq!(a.value.to_bits(), b.value.to_bits());
    assert_eq!(a.u.values(), b.u.values());
}
