//! Property tests for field, operator, spectral, solver and routing-loss
//! invariants.

use greedy_route::grf::{sample_indexed, GrfSpec};
use greedy_route::pde::io::{read_field, write_field};
use greedy_route::pde::{dft, idft, project_zero_mean};
use greedy_route::routing::{greedy_select, softmax, surrogate_grad, surrogate_loss, surrogate_weights, CostVector};
use greedy_route::solvers::{jacobi_apply, propagate_error, SolverHandle};
use greedy_route::{DiscreteOperator, EquationKind, Field, GridSpec};
use proptest::prelude::*;

fn grid() -> impl Strategy<Value = GridSpec> {
    prop_oneof![
        prop::sample::select(vec![8usize, 16, 32]).prop_map(|n| GridSpec::one_d(n).unwrap()),
        prop::sample::select(vec![8usize, 16]).prop_map(|n| GridSpec::two_d(n).unwrap()),
    ]
}

fn field_on(grid: GridSpec) -> impl Strategy<Value = Field> {
    prop::collection::vec(-10.0..10.0f64, grid.len()).prop_map(move |v| Field::new(grid, v).unwrap())
}

fn grid_and_fields() -> impl Strategy<Value = (GridSpec, Field, Field)> {
    grid().prop_flat_map(|g| (Just(g), field_on(g), field_on(g)))
}

fn kind() -> impl Strategy<Value = EquationKind> {
    prop_oneof![Just(EquationKind::Poisson), (0.5..50.0f64).prop_map(|a2| EquationKind::Helmholtz { a2 })]
}

fn costs() -> impl Strategy<Value = (CostVector, Vec<f64>)> {
    (2usize..=5).prop_flat_map(|k| {
        (
            prop::collection::vec(0.0..10.0f64, k).prop_map(|c| CostVector::new(c).unwrap()),
            prop::collection::vec(-8.0..8.0f64, k),
        )
    })
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn field_io_round_trips_bit_exactly((_, u, _) in grid_and_fields()) {
        let mut buf = Vec::new();
        write_field(&mut buf, &u).unwrap();
        let back = read_field(buf.as_slice()).unwrap();
        prop_assert_eq!(back.grid(), u.grid());
        prop_assert_eq!(back.values(), u.values());
    }

    #[test]
    fn operator_is_symmetric((g, u, v) in grid_and_fields(), kind in kind()) {
        let op = DiscreteOperator::new(g, kind).unwrap();
        let lu_v = op.apply(&u).unwrap().dot(&v);
        let u_lv = u.dot(&op.apply(&v).unwrap());
        prop_assert!(close(lu_v, u_lv, 1e-10), "{lu_v} vs {u_lv}");
    }

    #[test]
    fn poisson_operator_annihilates_constants(g in grid(), c in -5.0..5.0f64) {
        let op = DiscreteOperator::new(g, EquationKind::Poisson).unwrap();
        let lc = op.apply(&Field::constant(g, c)).unwrap();
        prop_assert!(lc.max_abs() <= 1e-9 * op.diagonal().abs());
    }

    #[test]
    fn dft_is_unitary_and_invertible((g, u, _) in grid_and_fields()) {
        let modes = dft(&u);
        let energy: f64 = modes.iter().map(|z| z.norm_sqr()).sum();
        prop_assert!(close(energy, u.norm_sq(), 1e-12));
        let back = idft(g, &modes).unwrap();
        prop_assert!(back.sub(&u).max_abs() <= 1e-12 * u.max_abs().max(1.0));
    }

    #[test]
    fn reference_solution_has_small_residual((g, f, _) in grid_and_fields(), kind in kind()) {
        let op = DiscreteOperator::new(g, kind).unwrap();
        let f = if kind.is_singular() { project_zero_mean(&f) } else { f };
        let u = op.reference_solution(&f).unwrap();
        let r = op.residual(&u, &f).unwrap();
        prop_assert!(r.norm() <= 1e-9 * f.norm().max(1.0), "residual {}", r.norm());
        if kind.is_singular() {
            prop_assert!(u.mean().abs() <= 1e-9 * u.max_abs().max(1.0));
        }
    }

    #[test]
    fn damped_jacobi_never_grows_zero_mean_error((g, e, _) in grid_and_fields(), omega in 0.05..1.0f64) {
        let op = DiscreteOperator::new(g, EquationKind::Poisson).unwrap();
        let e = project_zero_mean(&e);
        let h = SolverHandle::jacobi(1, omega).unwrap();
        let next = propagate_error(&h, &op, &e).unwrap();
        prop_assert!(next.norm() <= e.norm() * (1.0 + 1e-12));
        let correction = jacobi_apply(&op, &op.apply(&e).unwrap(), omega).unwrap();
        prop_assert!(next.add(&correction).sub(&e).max_abs() <= 1e-9 * e.max_abs().max(1.0));
    }

    #[test]
    fn grf_samples_are_reproducible_and_zero_mean(g in grid(), seed in any::<u64>(), index in 0u64..1000) {
        let spec = GrfSpec::new(g, true, seed);
        let a = sample_indexed(&spec, index).unwrap();
        let again = sample_indexed(&spec, index).unwrap();
        let next = sample_indexed(&spec, index + 1).unwrap();
        prop_assert_eq!(a.values(), again.values());
        prop_assert!(a.mean().abs() <= 1e-12 * a.max_abs().max(1e-300));
        prop_assert_ne!(a.values(), next.values());
    }

    #[test]
    fn softmax_is_a_distribution((_, logits) in costs(), shift in -100.0..100.0f64) {
        let p = softmax(&logits);
        prop_assert!(close(p.iter().sum::<f64>(), 1.0, 1e-12));
        prop_assert!(p.iter().all(|&x| x > 0.0));
        let shifted: Vec<f64> = logits.iter().map(|l| l + shift).collect();
        for (a, b) in p.iter().zip(softmax(&shifted)) {
            prop_assert!(close(*a, b, 1e-9));
        }
    }

    #[test]
    fn surrogate_loss_ignores_logit_shift((c, logits) in costs(), shift in -50.0..50.0f64) {
        let shifted: Vec<f64> = logits.iter().map(|l| l + shift).collect();
        let a = surrogate_loss(&c, &logits).unwrap();
        let b = surrogate_loss(&c, &shifted).unwrap();
        prop_assert!(close(a, b, 1e-9), "{a} vs {b}");
        let g: f64 = surrogate_grad(&c, &logits).unwrap().iter().sum();
        prop_assert!(g.abs() <= 1e-9 * c.values().iter().sum::<f64>().max(1.0));
    }

    #[test]
    fn surrogate_grad_matches_finite_differences((c, logits) in costs()) {
        let g = surrogate_grad(&c, &logits).unwrap();
        let h = 1e-6;
        for j in 0..logits.len() {
            let mut up = logits.clone();
            let mut dn = logits.clone();
            up[j] += h;
            dn[j] -= h;
            let fd = (surrogate_loss(&c, &up).unwrap() - surrogate_loss(&c, &dn).unwrap()) / (2.0 * h);
            prop_assert!((fd - g[j]).abs() <= 1e-5 * fd.abs().max(1.0), "{j}: {fd} vs {}", g[j]);
        }
    }

    #[test]
    fn greedy_select_is_first_minimum((c, _) in costs()) {
        let id = greedy_select(&c).unwrap();
        let v = c.values();
        prop_assert!(v.iter().all(|&x| x >= v[id - 1]));
        prop_assert!(v[..id - 1].iter().all(|&x| x > v[id - 1]));
        let w = surrogate_weights(&c);
        let total: f64 = v.iter().sum();
        prop_assert!(w.iter().zip(v).all(|(w, c)| close(*w, total - c, 1e-12)));
    }
}
