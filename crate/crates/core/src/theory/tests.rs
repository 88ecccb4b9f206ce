use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::neural::{DeepOnet, DeepOnetArch, NeuralSolver};
use crate::pde::{EquationKind, GridSpec};
use crate::routing::CostVector;
use crate::solvers::{MgConfig, Multigrid, SolverKind};

fn op(n: usize, kind: EquationKind) -> DiscreteOperator {
    DiscreteOperator::new(GridSpec::one_d(n).unwrap(), kind).unwrap()
}

fn jacobi_ens(op: DiscreteOperator, omegas: &[f64]) -> Ensemble {
    Ensemble::from_kinds(op, omegas.iter().map(|&omega| SolverKind::WeightedJacobi { omega }).collect()).unwrap()
}

fn random_error(op: &DiscreteOperator, rng: &mut ChaCha8Rng) -> Field {
    let v: Vec<f64> = (0..op.grid().len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let f = Field::new(op.grid(), v).unwrap();
    let f = if op.is_singular() { f.map(|x| x - f.mean()) } else { f };
    f.scaled(1.0 / f.norm())
}

/// Dense error maps built from the assembled matrix, independent of the
/// matrix-free solvers.
fn dense_jacobi(op: &DiscreteOperator, omega: f64) -> DMatrix<f64> {
    let a = op.to_dense();
    let n = a.nrows();
    DMatrix::identity(n, n) - a.map(|x| x * omega / op.diagonal())
}

fn dense_gs(op: &DiscreteOperator) -> DMatrix<f64> {
    let a = op.to_dense();
    let n = a.nrows();
    let lower = a.lower_triangle();
    let inv_a = lower.solve_lower_triangular(&a).unwrap();
    DMatrix::identity(n, n) - inv_a
}

fn zero_mean_projector(n: usize) -> DMatrix<f64> {
    DMatrix::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64)
}

#[test]
fn empty_and_single_step_values() {
    let o = op(8, EquationKind::Poisson);
    let ens = jacobi_ens(o.clone(), &[0.5, 0.9]);
    let e0 = random_error(&o, &mut ChaCha8Rng::seed_from_u64(1));
    assert!((sequence_value(&ens, &[], &e0).unwrap() - e0.norm_sq()).abs() < 1e-15);
    let costs = step_costs(&ens, &e0).unwrap();
    for id in 1..=2 {
        let v = sequence_value(&ens, &[id], &e0).unwrap();
        assert!((v - costs.values()[id - 1]).abs() <= 1e-14 * v);
    }
    assert!(matches!(sequence_value(&ens, &[3], &e0), Err(Error::BadId { .. })));
}

#[test]
fn length_three_matches_dense_product() {
    let o = op(8, EquationKind::Helmholtz { a2: 5.0 });
    let ens = Ensemble::from_kinds(o.clone(), vec![SolverKind::WeightedJacobi { omega: 0.7 }, SolverKind::GaussSeidel])
        .unwrap();
    let maps = [dense_jacobi(&o, 0.7), dense_gs(&o)];
    let e0 = random_error(&o, &mut ChaCha8Rng::seed_from_u64(2));
    for seq in [[1, 2, 1], [2, 2, 1], [1, 1, 2]] {
        let mut v = DVector::from_column_slice(e0.values());
        for &id in &seq {
            v = &maps[id - 1] * v;
        }
        let direct = v.norm_squared();
        assert!((sequence_value(&ens, &seq, &e0).unwrap() - direct).abs() < 1e-12 * direct);
    }
}

#[test]
fn brute_force_basics() {
    let o = op(8, EquationKind::Poisson);
    let e0 = random_error(&o, &mut ChaCha8Rng::seed_from_u64(3));
    let single = jacobi_ens(o.clone(), &[0.8]);
    assert_eq!(brute_force_optimal(&single, &e0, 3).unwrap().sequence, vec![1, 1, 1]);

    let ens = Ensemble::from_kinds(
        o.clone(),
        vec![
            SolverKind::WeightedJacobi { omega: 0.6 },
            SolverKind::GaussSeidel,
            SolverKind::WeightedJacobi { omega: 0.9 },
        ],
    )
    .unwrap();
    let one = brute_force_optimal(&ens, &e0, 1).unwrap();
    assert_eq!(one.sequence, vec![greedy_select(&step_costs(&ens, &e0).unwrap()).unwrap()]);

    let twins = jacobi_ens(o.clone(), &[0.7, 0.7]);
    assert_eq!(brute_force_optimal(&twins, &e0, 3).unwrap().sequence, vec![1, 1, 1]);

    assert!(matches!(brute_force_optimal(&twins, &e0, 20), Err(Error::SearchTooLarge(1_048_576))));
}

#[test]
fn optimum_never_worse_than_greedy() {
    let o = op(8, EquationKind::Poisson);
    let ens = Ensemble::from_kinds(o.clone(), vec![SolverKind::WeightedJacobi { omega: 0.6 }, SolverKind::GaussSeidel])
        .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let e0 = random_error(&o, &mut rng);
        let opt = brute_force_optimal(&ens, &e0, 4).unwrap();
        let greedy = greedy_sequence(&ens, &e0, 4).unwrap();
        assert!(opt.value <= greedy.value);
        assert_eq!(opt.value, sequence_value(&ens, &opt.sequence, &e0).unwrap());
    }
}

#[test]
fn lipschitz_matches_svd() {
    let o = op(8, EquationKind::Poisson);
    let p = zero_mean_projector(8);
    let jac = SolverHandle::jacobi(1, 2.0 / 3.0).unwrap();
    let svd = (&p * dense_jacobi(&o, 2.0 / 3.0) * &p).singular_values().max();
    assert!((lipschitz_constant(&jac, &o).unwrap() - svd).abs() < 1e-6);
    let gs = SolverHandle::gauss_seidel(1);
    let svd = (&p * dense_gs(&o) * &p).singular_values().max();
    assert!((lipschitz_constant(&gs, &o).unwrap() - svd).abs() < 1e-6);
    let h = op(8, EquationKind::Helmholtz { a2: 3.0 });
    let svd = dense_gs(&h).singular_values().max();
    assert!((lipschitz_constant(&gs, &h).unwrap() - svd).abs() < 1e-6);
}

#[test]
fn exact_inverse_has_zero_constant() {
    let o = DiscreteOperator::diagonal_only(GridSpec::one_d(8).unwrap(), 2.5).unwrap();
    assert_eq!(lipschitz_constant(&SolverHandle::jacobi(1, 1.0).unwrap(), &o).unwrap(), 0.0);
}

#[test]
fn damped_solvers_contract() {
    let o = op(16, EquationKind::Poisson);
    for omega in [0.5, 2.0 / 3.0, 0.8] {
        assert!(lipschitz_constant(&SolverHandle::jacobi(1, omega).unwrap(), &o).unwrap() < 1.0);
    }
    let mg = SolverHandle::multigrid(1, &o, MgConfig::for_grid(16, 4).unwrap()).unwrap();
    assert!(lipschitz_constant(&mg, &o).unwrap() < 1.0);
    let small = op(8, EquationKind::Poisson);
    assert!(lipschitz_constant(&SolverHandle::gauss_seidel(1), &small).unwrap() < 1.0);
    // The highest Fourier mode is reflected, not damped.
    let undamped = lipschitz_constant(&SolverHandle::jacobi(1, 1.0).unwrap(), &o).unwrap();
    assert!((undamped - 1.0).abs() < 1e-8);
}

#[test]
fn lipschitz_rejects_nonlinear() {
    let g = GridSpec::one_d(8).unwrap();
    let net = NeuralSolver::new(DeepOnet::zeros(DeepOnetArch::standard(g)).unwrap(), g).unwrap();
    let h = SolverHandle::neural(1, Arc::new(net));
    assert!(matches!(lipschitz_constant(&h, &op(8, EquationKind::Poisson)), Err(Error::NonlinearSolver(_))));
}

#[test]
fn alpha_examples() {
    assert!((alpha_of(&[0.5; 4], 4).unwrap() - 4.0 / 3.0).abs() < 1e-15);
    assert_eq!(alpha_of(&[0.0; 4], 4).unwrap(), 1.0);
    assert!((alpha_of(&[0.0; 3], 3).unwrap() - 4.0 / 3.0).abs() < 1e-15);
    assert_eq!(alpha_of(&[0.0; 5], 5).unwrap(), 1.0);
    assert!(matches!(alpha_of(&[1.0, 1.0], 2), Err(Error::DegenerateDenominator { t: 2, .. })));
    assert!(matches!(alpha_of(&[0.5], 2), Err(Error::LengthMismatch { .. })));
    assert_eq!(phi(1.0, 2), 0.25);
}

#[test]
fn bound_for_single_solver() {
    let o = op(8, EquationKind::Poisson);
    let ens = jacobi_ens(o.clone(), &[0.7]);
    let e0 = random_error(&o, &mut ChaCha8Rng::seed_from_u64(5));
    let r = greedy_bound_check(&ens, &e0, 3).unwrap();
    assert_eq!(r.greedy, r.optimal);
    assert!(r.satisfied);
    let (alpha, phi_v) = (r.alpha, r.phi);
    assert!((r.bound - ((1.0 - phi_v) * r.optimal.value + phi_v * r.empty)).abs() < 1e-15);
    assert!(alpha >= 1.0);
}

#[test]
fn bound_holds_on_random_contractive_ensembles() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut trials = 0;
    let mut skipped = 0;
    while trials < 200 {
        let trial = trials + skipped;
        let kind = if trial % 2 == 0 {
            EquationKind::Poisson
        } else {
            EquationKind::Helmholtz { a2: rng.random_range(0.5..20.0) }
        };
        let o = op(8, kind);
        let k = rng.random_range(1..=3);
        let mut kinds = Vec::new();
        for _ in 0..k {
            kinds.push(if rng.random_bool(0.25) {
                SolverKind::GaussSeidel
            } else {
                SolverKind::WeightedJacobi { omega: rng.random_range(0.2..0.95) }
            });
        }
        let ens = Ensemble::from_kinds(o.clone(), kinds).unwrap();
        let steps = rng.random_range(1..=5);
        let e0 = random_error(&o, &mut rng);
        let rhos = ensemble_lipschitz(&ens).unwrap();
        if rhos.iter().any(|r| *r >= 1.0) {
            skipped += 1;
            continue;
        }
        let r = greedy_bound_check_with(&ens, &e0, steps, &rhos).unwrap();
        assert!(r.satisfied, "trial {trial}: {r:?}");
        trials += 1;
    }
    assert!(skipped < 200);
}

#[test]
fn spectral_formula_matches_direct() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for trial in 0..30 {
        let dim = 1 + trial % 2;
        let n = if dim == 1 { 16 } else { 8 };
        let kind = if trial % 3 == 0 { EquationKind::Helmholtz { a2: 7.0 } } else { EquationKind::Poisson };
        let o = DiscreteOperator::new(GridSpec::new(dim, n).unwrap(), kind).unwrap();
        let omegas: Vec<f64> = (0..3).map(|_| rng.random_range(0.2..1.0)).collect();
        let ens = jacobi_ens(o.clone(), &omegas);
        let e0 = random_error(&o, &mut rng);
        let seq: Vec<usize> = (0..rng.random_range(0..8)).map(|_| rng.random_range(1..=3)).collect();
        let direct = sequence_value(&ens, &seq, &e0).unwrap();
        let spectral = spectral_value(&ens, &seq, &e0).unwrap();
        assert!((spectral - direct).abs() <= 1e-9 * direct, "{spectral} vs {direct}");
    }
}

#[test]
fn spectral_formula_edge_cases() {
    let o = op(8, EquationKind::Poisson);
    let ens = jacobi_ens(o.clone(), &[0.5, 0.8]);
    let e0 = random_error(&o, &mut ChaCha8Rng::seed_from_u64(8));
    assert!((spectral_value(&ens, &[], &e0).unwrap() - e0.norm_sq()).abs() < 1e-14);
    let a = spectral_value(&ens, &[1, 2, 1], &e0).unwrap();
    let b = spectral_value(&ens, &[1, 1, 2], &e0).unwrap();
    assert_eq!(a, b);
    let gs = Ensemble::from_kinds(o.clone(), vec![SolverKind::GaussSeidel]).unwrap();
    assert!(matches!(spectral_value(&gs, &[1], &e0), Err(Error::NotSimultaneouslyDiagonalizable(_))));
}

#[test]
fn commuting_jacobi_is_supermodular() {
    let o = op(8, EquationKind::Poisson);
    let e0 = random_error(&o, &mut ChaCha8Rng::seed_from_u64(9));
    for omegas in [&[0.7][..], &[0.5, 1.0][..]] {
        let reports = supermodularity_check(&jacobi_ens(o.clone(), omegas), &e0, 4).unwrap();
        for r in &reports {
            assert!(r.premises, "{r:?}");
            assert!(r.passed(), "{r:?}");
            assert!(r.trials > 0);
        }
    }
}

#[test]
fn non_commuting_ensemble_is_report_only() {
    let o = op(8, EquationKind::Poisson);
    let mg = Multigrid::new(&o, MgConfig { levels: 2, ..MgConfig::for_grid(8, 4).unwrap() }).unwrap();
    let ens = Ensemble::from_kinds(o.clone(), vec![SolverKind::GaussSeidel, SolverKind::Multigrid(mg)]).unwrap();
    let e0 = random_error(&o, &mut ChaCha8Rng::seed_from_u64(10));
    let reports = supermodularity_check(&ens, &e0, 3).unwrap();
    assert!(reports.iter().all(|r| !r.premises && r.trials > 0));
}

#[test]
fn postfix_monotone_for_invertible_contractions() {
    let o = op(8, EquationKind::Poisson);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let ens = jacobi_ens(o.clone(), &[0.6, 0.8]);
    for _ in 0..5 {
        let r = postfix_monotonicity_check(&ens, &random_error(&o, &mut rng), 4).unwrap();
        assert!(r.premises && r.passed(), "{r:?}");
    }
    // ω = 1 annihilates the quarter-wavelength mode when 4 | n.
    let singular = postfix_monotonicity_check(&jacobi_ens(o.clone(), &[1.0]), &random_error(&o, &mut rng), 2).unwrap();
    assert!(!singular.premises);
}

#[test]
fn loss_identities() {
    let c = CostVector::new(vec![1.0, 3.0]).unwrap();
    assert!(routing_loss_identity_holds(&c, 1).unwrap());
    assert!(routing_loss_identity_holds(&c, 2).unwrap());
    assert!(surrogate_bound_holds(&c, &[0.0, 0.0]).unwrap());
    let zero = CostVector::new(vec![0.0; 3]).unwrap();
    assert!(surrogate_bound_holds(&zero, &[1.0, -2.0, 0.5]).unwrap());
    let equal = CostVector::new(vec![2.0; 4]).unwrap();
    assert!(surrogate_bound_holds(&equal, &[0.3, 0.1, -0.2, 0.0]).unwrap());
    assert!(routing_loss_identity_holds(&CostVector::new(vec![1.0]).unwrap(), 1).is_err());
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..500 {
        let k = rng.random_range(2..7);
        let c = CostVector::new((0..k).map(|_| rng.random_range(0.0..10.0)).collect()).unwrap();
        let logits: Vec<f64> = (0..k).map(|_| rng.random_range(-5.0..5.0)).collect();
        assert!(routing_loss_identity_holds(&c, rng.random_range(1..=k)).unwrap());
        assert!(surrogate_bound_holds(&c, &logits).unwrap());
    }
}
