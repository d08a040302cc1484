use jumprev::expr::Expr;
use jumprev::marginals::{master_equation_marginals, uniform_grid, MarginalFlow};
use jumprev::model::{Atom, Embedding, JumpKernel, ProcessSpec};
use jumprev::presets;
use jumprev::reversal::{BackwardCharacteristics, ReversalOptions};
use jumprev::simulate::{simulate_forward, Direction, PathEnsemble, SimulationOptions, Trajectory};
use jumprev::verify::{
    apply_generator, carre_du_champ, compare_reversal, estimate_backward_intensity, estimate_intensity, ibp_residual,
    ibp_residual_monte_carlo, CompareOptions, Generator, TestFunction,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn solved(spec: &ProcessSpec, points: usize) -> (MarginalFlow, BackwardCharacteristics) {
    let flow = master_equation_marginals(spec, &uniform_grid(spec.horizon, points)).unwrap();
    let bc = BackwardCharacteristics::solve(spec, &flow, &ReversalOptions::default()).unwrap();
    (flow, bc)
}

fn state_function(n: usize, values: Vec<f64>) -> TestFunction {
    TestFunction::StateValues { support: Embedding::integers(n), values }
}

#[test]
fn backward_estimate_equals_estimate_on_reversed_paths() {
    let spec = presets::random_chain(4, 6, 1.0);
    let ens = simulate_forward(&spec, 3000, 2, &SimulationOptions::default()).unwrap();
    let edges = uniform_grid(1.0, 6);
    let bins = Embedding::integers(4);
    let a = estimate_backward_intensity(&ens, &edges, &bins).unwrap();
    let b = estimate_intensity(&ens.reversed(), &edges, &bins).unwrap();
    assert_eq!(a.clock, Direction::Reversed);
    assert_eq!(a.counts, b.counts);
    for (x, y) in a.occupation.iter().zip(&b.occupation) {
        assert!((x - y).abs() <= 1e-12);
    }
    let again = estimate_backward_intensity(&ens.reversed(), &edges, &bins).unwrap();
    assert_eq!(again.counts, estimate_intensity(&ens, &edges, &bins).unwrap().counts);
}

#[test]
fn uniform_cycle_estimates_the_reversed_cycle() {
    let spec = presets::cycle3(&[1.0 / 3.0; 3], 1.0);
    let ens = simulate_forward(&spec, 20_000, 4, &SimulationOptions::default()).unwrap();
    let est = estimate_backward_intensity(&ens, &uniform_grid(1.0, 5), &Embedding::integers(3)).unwrap();
    for tb in 0..est.n_time_bins() {
        for y in 0..3 {
            let back = (y + 2) % 3;
            let r = est.rate(tb, y, back).unwrap();
            assert!((r - 1.0).abs() <= 4.0 * est.standard_error(tb, y, back).unwrap(), "{r}");
            assert_eq!(est.count(tb, y, (y + 1) % 3), 0);
        }
    }
}

#[test]
fn constant_paths_have_no_jumps() {
    let n = 40;
    let ens = PathEnsemble {
        fingerprint: 0,
        seed: 0,
        direction: Direction::Forward,
        horizon: 1.0,
        paths: vec![Trajectory::constant(vec![1.0], 1.0); n],
    };
    let est = estimate_intensity(&ens, &uniform_grid(1.0, 5), &Embedding::integers(3)).unwrap();
    assert!(est.counts.iter().all(|c| *c == 0));
    for tb in 0..4 {
        assert!((est.occupation(tb, 1) - n as f64 * 0.25).abs() < 1e-12);
        assert_eq!(est.rate(tb, 1, 0), Some(0.0));
        assert_eq!(est.occupation(tb, 0), 0.0);
    }
}

fn poisson_setup(paths: usize) -> (PathEnsemble, BackwardCharacteristics) {
    let spec = presets::poisson(2.0, 1.0);
    let ens = simulate_forward(&spec, paths, 7, &SimulationOptions::default()).unwrap();
    let (_, bc) = solved(&presets::poisson_truncated(2.0, 1.0, 51), 51);
    (ens, bc)
}

#[test]
fn poisson_reversal_passes_and_perturbed_theory_fails() {
    let (ens, bc) = poisson_setup(50_000);
    let est = estimate_backward_intensity(&ens, &uniform_grid(1.0, 11), &bc.support).unwrap();
    let report = compare_reversal(&est, &bc, &CompareOptions::default()).unwrap();
    assert!(report.pass, "within3 {} within4 {}", report.within_3, report.within_4);
    assert!(report.n_usable > 20);
    assert!(report.cells.iter().all(|c| c.t_lo > 0.0 && c.from == c.to + 1));
    let wrong = compare_reversal(&est, &bc, &CompareOptions { theory_scale: 1.2, ..CompareOptions::default() }).unwrap();
    assert!(!wrong.pass);
}

#[test]
fn forward_kernel_is_the_wrong_reversal_of_the_cycle() {
    let spec = presets::cycle3(&[1.0 / 3.0; 3], 1.0);
    let ens = simulate_forward(&spec, 20_000, 9, &SimulationOptions::default()).unwrap();
    let flow = master_equation_marginals(&spec, &uniform_grid(1.0, 21)).unwrap();
    let wrong = BackwardCharacteristics::from_forward(&spec, &flow, &ReversalOptions::default()).unwrap();
    let est = estimate_backward_intensity(&ens, &uniform_grid(1.0, 6), &flow.support).unwrap();
    let report = compare_reversal(&est, &wrong, &CompareOptions::default()).unwrap();
    assert!(!report.pass);
    assert!(report.worst.unwrap().z.abs() > 10.0);
    let right = BackwardCharacteristics::solve(&spec, &flow, &ReversalOptions::default()).unwrap();
    assert!(compare_reversal(&est, &right, &CompareOptions::default()).unwrap().pass);
}

#[test]
fn reversible_chain_matches_its_forward_kernel() {
    let spec = presets::reversible5(2.0);
    let ens = simulate_forward(&spec, 20_000, 5, &SimulationOptions::default()).unwrap();
    let flow = master_equation_marginals(&spec, &uniform_grid(2.0, 41)).unwrap();
    let fwd = BackwardCharacteristics::from_forward(&spec, &flow, &ReversalOptions::default()).unwrap();
    let est = estimate_backward_intensity(&ens, &uniform_grid(2.0, 11), &flow.support).unwrap();
    let report = compare_reversal(&est, &fwd, &CompareOptions::default()).unwrap();
    assert!(report.pass, "within3 {} within4 {}", report.within_3, report.within_4);
}

#[test]
fn forward_estimates_are_refused_by_the_comparison() {
    let (ens, bc) = poisson_setup(100);
    let est = estimate_intensity(&ens, &uniform_grid(1.0, 11), &bc.support).unwrap();
    assert!(compare_reversal(&est, &bc, &CompareOptions::default()).is_err());
}

#[test]
fn carre_du_champ_examples() {
    let k = JumpKernel::Atomic(vec![Atom { jump: vec![1.0], rate: Expr::constant(3.0) }]);
    let c = TestFunction::parse("5").unwrap();
    let v = TestFunction::parse("x^2").unwrap();
    assert_eq!(carre_du_champ(&k, 0.0, &[2.0], &c, &v).unwrap(), 0.0);
    let u = TestFunction::parse("0.5 * x").unwrap();
    assert!((carre_du_champ(&k, 0.0, &[2.0], &u, &u).unwrap() - 3.0 * 0.25).abs() < 1e-15);
}

#[test]
fn generator_examples() {
    let poisson = presets::poisson(2.5, 1.0);
    let gen = Generator::forward(&poisson);
    assert_eq!(apply_generator(&gen, &TestFunction::parse("7").unwrap(), 0.3, &[1.0]).unwrap(), 0.0);
    assert!((apply_generator(&gen, &TestFunction::parse("x").unwrap(), 0.3, &[4.0]).unwrap() - 2.5).abs() < 1e-15);

    let spec = presets::random_chain(4, 8, 1.0);
    let flow = master_equation_marginals(&spec, &[0.0, 1.0]).unwrap();
    let rates = jumprev::reversal::forward_rates(&spec.kernel, 0.5, &flow).unwrap();
    let gen = Generator::forward(&spec);
    for y in 0..4 {
        let mut values = vec![0.0; 4];
        values[y] = 1.0;
        let u = state_function(4, values);
        for x in 0..4 {
            let expected = if x == y { -(0..4).filter(|z| *z != x).map(|z| rates[(x, z)]).sum::<f64>() } else { rates[(x, y)] };
            let got = apply_generator(&gen, &u, 0.5, &[x as f64]).unwrap();
            assert!((got - expected).abs() < 1e-14);
        }
    }
}

fn random_pair(rng: &mut ChaCha8Rng, n: usize) -> (TestFunction, TestFunction) {
    let u = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let v = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    (state_function(n, u), state_function(n, v))
}

#[test]
fn ibp_residual_vanishes_on_finite_chains() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for spec in [presets::cycle3(&[1.0, 0.0, 0.0], 1.0), presets::random_chain(5, 42, 1.0)] {
        let n = spec.space.embedding().unwrap().len();
        let (flow, bc) = solved(&spec, 50);
        for _ in 0..20 {
            let (u, v) = random_pair(&mut rng, n);
            for k in [1, 25, 49] {
                let t = flow.times[k];
                let r = ibp_residual(&spec, &bc, &flow, t, &u, &v).unwrap();
                assert!(r.residual.abs() <= 1e-10, "{}", r.residual);
                assert!(r.consistent());
            }
        }
    }
}

#[test]
fn ibp_with_a_reversible_chain_uses_the_forward_kernel() {
    let spec = presets::reversible5(2.0);
    let flow = master_equation_marginals(&spec, &uniform_grid(2.0, 11)).unwrap();
    let bc = BackwardCharacteristics::from_forward(&spec, &flow, &ReversalOptions::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..10 {
        let (u, v) = random_pair(&mut rng, 5);
        let r = ibp_residual(&spec, &bc, &flow, 1.0, &u, &v).unwrap();
        assert!(r.residual.abs() <= 1e-10);
    }
}

#[test]
fn constant_test_function_gives_zero_residual() {
    let spec = presets::random_chain(5, 3, 1.0);
    let (flow, bc) = solved(&spec, 11);
    let u = state_function(5, vec![2.0; 5]);
    let v = state_function(5, vec![0.3, -1.0, 4.0, 0.0, 2.0]);
    assert_eq!(ibp_residual(&spec, &bc, &flow, 0.5, &u, &v).unwrap().residual, 0.0);
}

#[test]
fn monte_carlo_residual_is_consistent_with_zero() {
    let spec = presets::random_chain(5, 42, 1.0);
    let (flow, bc) = solved(&spec, 11);
    let ens = simulate_forward(&spec, 20_000, 3, &SimulationOptions::default()).unwrap();
    let samples: Vec<Vec<f64>> = ens.paths.iter().map(|p| p.state_at(0.5).unwrap()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (u, v) = random_pair(&mut rng, 5);
    let r = ibp_residual_monte_carlo(&spec, &bc, &flow, 0.5, &samples, &u, &v).unwrap();
    assert!(r.consistent(), "{} ± {}", r.residual, r.error_bar);
}

proptest! {
    #[test]
    fn carre_du_champ_is_symmetric_and_nonnegative(
        seed in 0u64..100,
        u in prop::collection::vec(-3.0f64..3.0, 4),
        v in prop::collection::vec(-3.0f64..3.0, 4),
        x in 0usize..4,
    ) {
        let spec = presets::random_chain(4, seed, 1.0);
        let (u, v) = (state_function(4, u), state_function(4, v));
        let uv = carre_du_champ(&spec.kernel, 0.2, &[x as f64], &u, &v).unwrap();
        let vu = carre_du_champ(&spec.kernel, 0.2, &[x as f64], &v, &u).unwrap();
        prop_assert!((uv - vu).abs() <= 1e-12 * (1.0 + uv.abs()));
        prop_assert!(carre_du_champ(&spec.kernel, 0.2, &[x as f64], &u, &u).unwrap() >= 0.0);
    }

    #[test]
    fn carre_du_champ_on_an_atomic_kernel(a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let k = JumpKernel::Atomic(vec![
            Atom { jump: vec![0.5], rate: Expr::constant(1.0) },
            Atom { jump: vec![-2.0], rate: Expr::constant(0.25) },
        ]);
        let u = TestFunction::parse(&format!("{a} * x + x^2")).unwrap();
        let v = TestFunction::parse(&format!("{b} * x")).unwrap();
        let uv = carre_du_champ(&k, 0.0, &[0.3], &u, &v).unwrap();
        let vu = carre_du_champ(&k, 0.0, &[0.3], &v, &u).unwrap();
        prop_assert!((uv - vu).abs() <= 1e-12 * (1.0 + uv.abs()));
        prop_assert!(carre_du_champ(&k, 0.0, &[0.3], &u, &u).unwrap() >= 0.0);
    }
}

#[test]
fn jumps_outside_the_binned_window_are_ignored() {
    let q = jumprev::simulate::time_quantum(1.0);
    let snap = |t: f64| (t / q).floor() * q;
    let event = |t: f64, a: f64| jumprev::simulate::JumpEvent { time: snap(t), from: vec![a], to: vec![a + 1.0] };
    let path = Trajectory {
        initial_state: vec![0.0],
        terminal_state: vec![3.0],
        events: vec![event(0.1, 0.0), event(0.3, 1.0), event(0.7, 2.0)],
        horizon: 1.0,
        flow: None,
    };
    let ens = PathEnsemble { fingerprint: 0, seed: 0, direction: Direction::Forward, horizon: 1.0, paths: vec![path] };
    let est = estimate_intensity(&ens, &[0.25, 0.5], &Embedding::integers(4)).unwrap();
    assert_eq!(est.counts.iter().sum::<u64>(), 1);
    assert_eq!(est.count(0, 1, 2), 1);
    assert_eq!(est.occupation(0, 0), 0.0);
    assert!((est.occupation(0, 1) - (snap(0.3) - 0.25)).abs() < 1e-12);
    assert!((est.occupation(0, 2) - (0.5 - snap(0.3))).abs() < 1e-12);
}
