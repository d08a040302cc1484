use jumprev::expr::Expr;
use jumprev::marginals::{master_equation_marginals, uniform_grid};
use jumprev::model::{DriftField, Embedding, JumpKernel, LevyAtom, LevyDensity, LevyMeasure, RateMatrix, TruncationDelta};
use jumprev::presets;
use jumprev::reversal::{
    backward_drift, check_absolute_continuity, forward_rates, levy_reverse, reversibility_check, solve_flux_equation,
    solve_flux_slice, BackwardCharacteristics, ReversalOptions,
};
use jumprev::Error;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

#[test]
fn uniform_cycle_reverses_to_the_opposite_cycle() {
    let spec = presets::cycle3(&[1.0 / 3.0; 3], 1.0);
    let flow = master_equation_marginals(&spec, &uniform_grid(1.0, 5)).unwrap();
    let s = solve_flux_equation(&flow, &spec.kernel, 0.5, 1e-12).unwrap();
    let expected = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
    assert!(max_abs(&(s.rates - expected)) < 1e-12);
}

#[test]
fn symmetric_two_state_chain_is_its_own_reversal() {
    let spec = presets::finite_chain(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]), &[0.5, 0.5], 1.0);
    let flow = master_equation_marginals(&spec, &uniform_grid(1.0, 3)).unwrap();
    let s = solve_flux_equation(&flow, &spec.kernel, 1.0, 1e-12).unwrap();
    assert!(max_abs(&(s.rates - forward_rates(&spec.kernel, 1.0, &flow).unwrap())) < 1e-12);
}

#[test]
fn poisson_backward_rate_is_k_over_t() {
    for lambda in [1.0, 2.0, 5.0] {
        let spec = presets::poisson_truncated(lambda, 1.0, 51);
        let flow = master_equation_marginals(&spec, &uniform_grid(1.0, 21)).unwrap();
        let s = solve_flux_equation(&flow, &spec.kernel, 0.5, 1e-12).unwrap();
        assert!((s.rates[(2, 1)] - 4.0).abs() < 1e-9, "λ={lambda}: {}", s.rates[(2, 1)]);
        for t in [0.4, 0.5, 0.6] {
            let s = solve_flux_equation(&flow, &spec.kernel, t, 1e-12).unwrap();
            for k in 1..=5 {
                let r = s.rates[(k, k - 1)];
                let exact = k as f64 / t;
                let tol = if k <= 3 { 1e-9 } else { 1e-9 * exact };
                assert!((r - exact).abs() < tol, "λ={lambda} t={t} k={k}: {r}");
            }
        }
    }
}

fn flux_residual_and_double_reversal(spec: &jumprev::model::ProcessSpec) -> (f64, f64) {
    let grid = uniform_grid(spec.horizon, 50);
    let flow = master_equation_marginals(spec, &grid).unwrap();
    let (mut flux, mut double) = (0.0f64, 0.0f64);
    for (k, t) in grid.iter().enumerate().skip(1) {
        let p = flow.probabilities(k);
        let fwd = forward_rates(&spec.kernel, *t, &flow).unwrap();
        let back = solve_flux_slice(*t, &p, &fwd, &flow.support, 1e-12).unwrap().rates;
        for x in 0..p.len() {
            for y in (0..p.len()).filter(|y| *y != x) {
                flux = flux.max((p[x] * fwd[(x, y)] - p[y] * back[(y, x)]).abs());
            }
        }
        let again = solve_flux_slice(*t, &p, &back, &flow.support, 1e-12).unwrap().rates;
        double = double.max(max_abs(&(again - fwd)));
    }
    (flux, double)
}

#[test]
fn flux_equation_holds_entrywise() {
    for spec in [presets::cycle3(&[1.0, 0.0, 0.0], 1.0), presets::random_chain(5, 42, 1.0)] {
        let (flux, double) = flux_residual_and_double_reversal(&spec);
        assert!(flux <= 1e-10, "flux residual {flux}");
        assert!(double <= 1e-9, "double reversal {double}");
    }
}

#[test]
fn reversible_chain_at_stationarity() {
    let spec = presets::reversible5(2.0);
    let flow = master_equation_marginals(&spec, &uniform_grid(2.0, 11)).unwrap();
    let fwd = forward_rates(&spec.kernel, 1.0, &flow).unwrap();
    let p = flow.probabilities_at(1.0).unwrap();
    assert!(reversibility_check(&p, &fwd, 1e-12).is_reversible);
    let bc = BackwardCharacteristics::solve(&spec, &flow, &ReversalOptions::default()).unwrap();
    for r in &bc.rates {
        assert!(max_abs(&(r - &fwd)) <= 1e-10);
    }
}

#[test]
fn cycle_is_not_reversible() {
    let spec = presets::cycle3(&[1.0 / 3.0; 3], 1.0);
    let flow = master_equation_marginals(&spec, &uniform_grid(1.0, 3)).unwrap();
    let r = reversibility_check(&flow.probabilities(1), &forward_rates(&spec.kernel, 0.5, &flow).unwrap(), 1e-12);
    assert!(!r.is_reversible);
    assert!((r.max_flux_asymmetry - 1.0 / 3.0).abs() < 1e-12);
    assert_eq!(r.max_ratio_deviation, 1.0);
}

#[test]
fn symmetric_kernel_with_stationary_law_is_reversible() {
    let rates = DMatrix::from_row_slice(3, 3, &[0.0, 2.0, 0.5, 2.0, 0.0, 1.0, 0.5, 1.0, 0.0]);
    assert!(reversibility_check(&[1.0 / 3.0; 3], &rates, 1e-14).is_reversible);
}

#[test]
fn zero_truncation_negates_the_drift() {
    let b = backward_drift(
        &DriftField::Constant(vec![3.0, -1.0]),
        &JumpKernel::Atomic(vec![jumprev::model::Atom { jump: vec![1.0, 0.0], rate: Expr::constant(2.0) }]),
        &JumpKernel::Atomic(vec![jumprev::model::Atom { jump: vec![-1.0, 0.0], rate: Expr::constant(7.0) }]),
        TruncationDelta::ZERO,
        0.5,
        &[0.0, 0.0],
    )
    .unwrap();
    assert_eq!(b, vec![-3.0, 1.0]);
}

#[test]
fn symmetric_kernel_drift_cancels() {
    let k = JumpKernel::Atomic(vec![
        jumprev::model::Atom { jump: vec![0.5], rate: Expr::constant(1.5) },
        jumprev::model::Atom { jump: vec![-0.5], rate: Expr::constant(1.5) },
    ]);
    let b = backward_drift(&DriftField::Zero(1), &k, &k, TruncationDelta::new(1.0).unwrap(), 0.0, &[0.0]).unwrap();
    assert!(b[0].abs() < 1e-15);
}

#[test]
fn aggregate_drift_identity_on_a_lattice_chain() {
    // Nearest-neighbour walk on 0..6 with drift toward the right, truncated at δ = 1.
    let n = 6;
    let rates = DMatrix::from_fn(n, n, |i, j| match j as i64 - i as i64 {
        1 => 2.0,
        -1 => 0.5,
        2 => 0.3,
        _ => 0.0,
    });
    let mut p0 = vec![0.0; n];
    p0[1] = 0.6;
    p0[2] = 0.4;
    let mut spec = presets::finite_chain(rates, &p0, 1.0);
    spec.delta = TruncationDelta::new(1.0).unwrap();
    let flow = master_equation_marginals(&spec, &uniform_grid(1.0, 21)).unwrap();
    let bc = BackwardCharacteristics::solve(&spec, &flow, &ReversalOptions::default()).unwrap();
    for (k, t) in bc.times.iter().enumerate() {
        let p = &bc.marginal[k];
        let mut total = 0.0;
        let mut scale = 0.0f64;
        for i in 0..n {
            let fwd = spec.drift.evaluate(*t, bc.support.point(i)).unwrap()[0];
            total += p[i] * (fwd + bc.drift[k][i][0]);
            scale = scale.max(p[i] * bc.drift[k][i][0].abs());
        }
        assert!(total.abs() <= 1e-8, "t={t}: {total}");
        assert!(scale > 0.1);
    }
}

#[test]
fn levy_reversal_examples() {
    let atom = LevyMeasure { atoms: vec![LevyAtom { jump: vec![1.0, 0.0], weight: 2.0 }], density: None };
    let (b, r) = levy_reverse(&[1.0, 0.0], &atom);
    assert_eq!(b, vec![-1.0, 0.0]);
    assert_eq!(r.atoms, vec![LevyAtom { jump: vec![-1.0, 0.0], weight: 2.0 }]);

    let symmetric = LevyMeasure {
        atoms: vec![LevyAtom { jump: vec![1.0], weight: 1.0 }, LevyAtom { jump: vec![-1.0], weight: 1.0 }],
        density: None,
    };
    let (b, r) = levy_reverse(&[0.3], &symmetric);
    assert_eq!(b, vec![-0.3]);
    let mut jumps: Vec<f64> = r.atoms.iter().map(|a| a.jump[0]).collect();
    jumps.sort_by(f64::total_cmp);
    assert_eq!(jumps, vec![-1.0, 1.0]);
}

#[test]
fn levy_density_is_mirrored() {
    let d = LevyMeasure {
        atoms: vec![],
        density: Some(LevyDensity { density: Expr::parse("abs(xi)^(-1.5)").unwrap(), lower: 0.0, upper: 1.0, reflected: false }),
    };
    let (_, r) = levy_reverse(&[0.0], &d);
    let rd = r.density.as_ref().unwrap();
    assert_eq!((rd.lower, rd.upper), (-1.0, 0.0));
    for xi in [0.1, 0.5, 0.9] {
        assert_eq!(rd.eval(-xi), d.density.as_ref().unwrap().eval(xi));
    }
    let (b, back) = levy_reverse(&[-0.0], &r);
    assert_eq!(back, d);
    assert_eq!(b, vec![0.0]);
}

proptest! {
    #[test]
    fn levy_reversal_is_an_involution(
        b in prop::collection::vec(-5.0f64..5.0, 2),
        atoms in prop::collection::vec((prop::collection::vec(-3.0f64..3.0, 2), 0.0f64..4.0), 0..6),
    ) {
        let m = LevyMeasure { atoms: atoms.into_iter().map(|(jump, weight)| LevyAtom { jump, weight }).collect(), density: None };
        let (rb, rm) = levy_reverse(&b, &m);
        for (a, r) in m.atoms.iter().zip(&rm.atoms) {
            prop_assert!(a.jump.iter().zip(&r.jump).all(|(x, y)| *x == -*y));
            prop_assert_eq!(a.weight, r.weight);
        }
        let (bb, mm) = levy_reverse(&rb, &rm);
        prop_assert_eq!(bb, b);
        prop_assert_eq!(mm, m);
    }

    #[test]
    fn flux_solution_balances_random_chains(seed in 0u64..200, n in 2usize..7) {
        let spec = presets::random_chain(n, seed, 1.0);
        let flow = master_equation_marginals(&spec, &uniform_grid(1.0, 5)).unwrap();
        let p = flow.probabilities(2);
        let fwd = forward_rates(&spec.kernel, 0.5, &flow).unwrap();
        let back = solve_flux_slice(0.5, &p, &fwd, &flow.support, 1e-12).unwrap().rates;
        for x in 0..n {
            for y in (0..n).filter(|y| *y != x) {
                prop_assert!((p[x] * fwd[(x, y)] - p[y] * back[(y, x)]).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn continuity_checks() {
    let support = Embedding::integers(3);
    let cycle = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
    let ok = check_absolute_continuity(0.5, &[1.0 / 3.0; 3], &cycle, &support, 1e-12);
    assert!(ok.passed && ok.orphan_mass == 0.0);

    let bad = check_absolute_continuity(0.0, &[1.0, 0.0, 0.0], &(cycle.clone() * 2.5), &support, 1e-12);
    assert!(!bad.passed);
    assert_eq!(bad.offending.len(), 1);
    assert_eq!(bad.offending[0].0, 1);
    assert!((bad.orphan_mass - 2.5).abs() < 1e-15);

    let poisson = presets::poisson_truncated(2.0, 1.0, 51);
    let flow = master_equation_marginals(&poisson, &uniform_grid(1.0, 11)).unwrap();
    let bc = BackwardCharacteristics::solve(&poisson, &flow, &ReversalOptions::default()).unwrap();
    assert!(bc.all_valid());
}

#[test]
fn thin_initial_support_is_an_error() {
    let spec = presets::cycle3(&[1.0, 0.0, 0.0], 1.0);
    let flow = master_equation_marginals(&spec, &uniform_grid(1.0, 5)).unwrap();
    let opts = ReversalOptions { include_initial_time: true, ..ReversalOptions::default() };
    match BackwardCharacteristics::solve(&spec, &flow, &opts) {
        Err(Error::AbsoluteContinuityViolation { .. }) => {}
        other => panic!("expected a continuity violation, got {other:?}"),
    }
    assert!(BackwardCharacteristics::solve(&spec, &flow, &ReversalOptions::default()).is_ok());
}

#[test]
fn finite_rate_matrices_are_read_back() {
    let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 3.0, 0.0]);
    let k = JumpKernel::FiniteRateMatrix(RateMatrix::constant(Embedding::integers(2), m.clone()));
    let flow = master_equation_marginals(&presets::finite_chain(m.clone(), &[0.5, 0.5], 1.0), &[0.0, 1.0]).unwrap();
    assert_eq!(forward_rates(&k, 1.0, &flow).unwrap(), m);
}
