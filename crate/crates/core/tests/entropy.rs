use jumprev::entropy::{initial_relative_entropy, path_log_likelihood, relative_entropy, tilt_process};
use jumprev::expr::Expr;
use jumprev::marginals::{master_equation_marginals, uniform_grid};
use jumprev::model::{entropy_h, young_theta, Atom, DriftField, JumpKernel, TruncationDelta};
use jumprev::presets;
use jumprev::simulate::{simulate_forward, time_quantum, JumpEvent, SimulationOptions, Trajectory};
use proptest::prelude::*;

fn h2() -> f64 {
    2.0 * 2f64.ln() - 1.0
}

#[test]
fn unit_tilt_leaves_the_process_alone() {
    let spec = presets::random_chain(4, 1, 1.0);
    assert_eq!(tilt_process(&spec, &Expr::parse("1").unwrap()).unwrap(), spec);
}

#[test]
fn constant_tilt_scales_the_poisson_rate() {
    let spec = presets::poisson(1.0, 1.0);
    let tilted = tilt_process(&spec, &Expr::parse("2").unwrap()).unwrap();
    assert_eq!(tilted.drift, DriftField::Zero(1));
    let mut rates = Vec::new();
    tilted.kernel.for_each_atom(0.3, &[4.0], &mut |xi, r| rates.push((xi.to_vec(), r)));
    assert_eq!(rates, vec![(vec![1.0], 2.0)]);
}

#[test]
fn truncated_tilt_corrects_the_drift() {
    let mut spec = presets::poisson(1.0, 1.0);
    spec.kernel = JumpKernel::Atomic(vec![
        Atom { jump: vec![1.0], rate: Expr::constant(1.0) },
        Atom { jump: vec![-1.0], rate: Expr::constant(1.0) },
    ]);
    spec.delta = TruncationDelta::new(1.0).unwrap();
    let tilt = Expr::parse("1 + xi").unwrap();
    let tilted = tilt_process(&spec, &tilt).unwrap();
    let b = tilted.drift.evaluate(0.5, &[0.0]).unwrap();
    assert!((b[0] - 2.0).abs() < 1e-15);
}

#[test]
fn negative_tilts_are_rejected() {
    assert!(tilt_process(&presets::poisson(1.0, 1.0), &Expr::parse("-1").unwrap()).is_err());
}

fn entropy_of(lambda: f64, tilt: &str) -> jumprev::entropy::EntropyReport {
    let reference = presets::poisson_truncated(lambda, 1.0, 40);
    let tilt = Expr::parse(tilt).unwrap();
    let tilted = tilt_process(&reference, &tilt).unwrap();
    let flow = master_equation_marginals(&tilted, &uniform_grid(1.0, 201)).unwrap();
    relative_entropy(&reference, &tilt, &flow, 0.0).unwrap()
}

#[test]
fn unit_tilt_has_zero_entropy() {
    let r = entropy_of(1.0, "1");
    assert_eq!(r.total, 0.0);
}

#[test]
fn doubled_poisson_entropy_is_h_of_two() {
    let r = entropy_of(1.0, "2");
    assert!((r.running - h2()).abs() <= 1e-6, "{}", r.running);
    assert!(r.error <= 1e-6);
}

#[test]
fn killing_all_jumps_costs_the_total_rate() {
    let r = entropy_of(1.5, "0");
    // The last truncated state has no outgoing jump, but it carries no mass here.
    assert!((r.running - 1.5).abs() <= 1e-9, "{}", r.running);
}

#[test]
fn initial_entropy() {
    assert_eq!(initial_relative_entropy(&[0.5, 0.5], &[0.5, 0.5]), 0.0);
    assert_eq!(initial_relative_entropy(&[1.0, 0.0], &[0.0, 1.0]), f64::INFINITY);
    assert!((initial_relative_entropy(&[1.0, 0.0], &[0.5, 0.5]) - 2f64.ln()).abs() < 1e-15);
}

fn path_with_jumps(n: usize) -> Trajectory {
    let q = time_quantum(1.0);
    let events = (0..n)
        .map(|k| {
            let t = ((k as f64 + 0.5) / n as f64 / q).floor() * q;
            JumpEvent { time: t, from: vec![k as f64], to: vec![k as f64 + 1.0] }
        })
        .collect();
    Trajectory { initial_state: vec![0.0], terminal_state: vec![n as f64], events, horizon: 1.0, flow: None }
}

#[test]
fn poisson_path_likelihood_closed_form() {
    let reference = presets::poisson(1.0, 1.0);
    for n in [0, 1, 4, 9] {
        let path = path_with_jumps(n);
        let one = path_log_likelihood(&reference, &Expr::parse("1").unwrap(), &path).unwrap();
        assert_eq!(one, 0.0);
        let two = path_log_likelihood(&reference, &Expr::parse("2").unwrap(), &path).unwrap();
        assert!((two - (n as f64 * 2f64.ln() - 1.0)).abs() < 1e-12);
    }
    let zero = path_log_likelihood(&reference, &Expr::parse("0").unwrap(), &path_with_jumps(1)).unwrap();
    assert_eq!(zero, f64::NEG_INFINITY);
}

#[test]
fn pathwise_mean_matches_relative_entropy() {
    let reference = presets::poisson(1.0, 1.0);
    let tilt = Expr::parse("2").unwrap();
    let tilted = tilt_process(&reference, &tilt).unwrap();
    let ens = simulate_forward(&tilted, 100_000, 13, &SimulationOptions::default()).unwrap();
    let v: Vec<f64> = ens.paths.iter().map(|p| path_log_likelihood(&reference, &tilt, p).unwrap()).collect();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let se = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
    assert!((mean - h2()).abs() <= 3.0 * se, "{mean} ± {se}");
}

#[test]
fn entropy_report_csv() {
    let mut buf = Vec::new();
    entropy_of(1.0, "2").write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("initial,running,total,error\n"));
}

proptest! {
    #[test]
    fn h_is_nonnegative_and_convex(a in 0.0f64..50.0, b in 0.0f64..50.0, w in 0.0f64..1.0) {
        prop_assert!(entropy_h(a) >= 0.0);
        let mix = entropy_h(w * a + (1.0 - w) * b);
        prop_assert!(mix <= w * entropy_h(a) + (1.0 - w) * entropy_h(b) + 1e-12 * (1.0 + a + b));
    }

    #[test]
    fn theta_is_even_and_matches_h(a in -20.0f64..20.0) {
        prop_assert_eq!(young_theta(a), young_theta(-a));
        prop_assert!((young_theta(a) - entropy_h(a.abs() + 1.0)).abs() <= 1e-12 * (1.0 + a.abs()));
    }
}

#[test]
fn h_fixed_points() {
    assert_eq!(entropy_h(1.0), 0.0);
    assert_eq!(entropy_h(0.0), 1.0);
    assert_eq!(entropy_h(-0.5), f64::INFINITY);
    assert!((entropy_h(2.0) - h2()).abs() < 1e-15);
}
