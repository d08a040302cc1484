//! Ready-made processes: the Poisson process, small finite chains and the
//! reversible `e^{-V}` chain.

use nalgebra::DMatrix;
use rand::Rng;

use crate::expr::Expr;
use crate::model::{
    Atom, DriftField, Embedding, InitialLaw, JumpKernel, ProcessSpec, RateMatrix, StateSpace, TruncationDelta,
};
use crate::rng::path_rng;

/// Rate-`λ` Poisson process on `ℤ` started at 0.
pub fn poisson(rate: f64, horizon: f64) -> ProcessSpec {
    ProcessSpec {
        space: StateSpace::Lattice { dimension: 1, step: 1.0 },
        drift: DriftField::Zero(1),
        kernel: JumpKernel::Atomic(vec![Atom { jump: vec![1.0], rate: Expr::constant(rate) }]),
        delta: TruncationDelta::ZERO,
        initial: InitialLaw::Point(vec![0.0]),
        horizon,
    }
}

/// The Poisson process on the states `0..n`; jumps out of the last state are dropped.
pub fn poisson_truncated(rate: f64, horizon: f64, n_states: usize) -> ProcessSpec {
    poisson(rate, horizon).restrict_to(Embedding::integers(n_states)).expect("Poisson restriction")
}

/// A chain on `0..n` with constant rates, no drift and `δ = 0`.
pub fn finite_chain(rates: DMatrix<f64>, p0: &[f64], horizon: f64) -> ProcessSpec {
    let embedding = Embedding::integers(rates.nrows());
    ProcessSpec {
        initial: InitialLaw::finite(&embedding, p0).expect("initial law length"),
        drift: DriftField::Zero(1),
        kernel: JumpKernel::FiniteRateMatrix(RateMatrix::constant(embedding.clone(), rates)),
        space: StateSpace::Finite { embedding },
        delta: TruncationDelta::ZERO,
        horizon,
    }
}

/// `0 → 1 → 2 → 0` at rate 1.
pub fn cycle3(p0: &[f64], horizon: f64) -> ProcessSpec {
    let mut r = DMatrix::zeros(3, 3);
    r[(0, 1)] = 1.0;
    r[(1, 2)] = 1.0;
    r[(2, 0)] = 1.0;
    finite_chain(r, p0, horizon)
}

/// Dense chain with rates uniform in `[0.2, 2]` and a random initial law.
pub fn random_chain(n: usize, seed: u64, horizon: f64) -> ProcessSpec {
    let mut rng = path_rng(seed, 0);
    let r = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { rng.gen_range(0.2..2.0) });
    let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
    let total: f64 = w.iter().sum();
    let p0: Vec<f64> = w.iter().map(|v| v / total).collect();
    finite_chain(r, &p0, horizon)
}

/// Rates `s(x, y) e^{-(V(y) - V(x))/2}` with symmetric `s`, started in the
/// law proportional to `e^{-V}`.
pub fn reversible_chain(potential: &[f64], symmetric: &DMatrix<f64>, horizon: f64) -> ProcessSpec {
    let n = potential.len();
    let r = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            symmetric[(i, j)] * (-(potential[j] - potential[i]) / 2.0).exp()
        }
    });
    let w: Vec<f64> = potential.iter().map(|v| (-v).exp()).collect();
    let total: f64 = w.iter().sum();
    let p0: Vec<f64> = w.iter().map(|v| v / total).collect();
    finite_chain(r, &p0, horizon)
}

/// The five-state reversible chain used by the demos: nearest-neighbour and
/// next-nearest-neighbour symmetric rates over a tilted double well.
pub fn reversible5(horizon: f64) -> ProcessSpec {
    let v = [0.5, 0.0, 1.0, 0.2, 0.8];
    let s = DMatrix::from_fn(5, 5, |i, j| match i.abs_diff(j) {
        1 => 1.0,
        2 => 0.5,
        _ => 0.0,
    });
    reversible_chain(&v, &s, horizon)
}
