//! Numeric probes of the integrability hypotheses on a jump kernel.

use super::functions::norm;
use super::kernel::Shell;
use super::quadrature::MAX_DYADIC_LEVEL;
use super::spec::ProcessSpec;
use crate::error::{Error, Result};

/// Mass below which a tail `K({|ξ| ≥ r})` counts as empty.
pub const RANGE_MASS_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeValue {
    pub value: f64,
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeEntry {
    pub t: f64,
    pub x: Vec<f64>,
    /// `∫(|ξ|²∧1) K(dξ)`
    pub quadratic: ProbeValue,
    /// `∫1{|ξ|≤1}|ξ| K(dξ)`
    pub bounded_variation: ProbeValue,
    /// `K({|ξ| ≥ 1})`
    pub large_jump_mass: ProbeValue,
    /// `K(ℝⁿ∖{0})`
    pub total_mass: ProbeValue,
    /// Smallest radius outside which the probed mass vanishes.
    pub jump_range: f64,
    pub negative_rate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisReport {
    pub entries: Vec<ProbeEntry>,
    /// Bounded-variation regime at every probe point.
    pub delta_zero_admissible: bool,
    pub finite_activity: bool,
    pub negative_rate: bool,
}

impl HypothesisReport {
    pub fn quadratic_divergent(&self) -> bool {
        self.entries.iter().any(|e| e.quadratic.diverged)
    }
}

fn just_below(v: f64) -> f64 {
    f64::from_bits(v.to_bits() - 1)
}

pub fn probe_hypotheses(spec: &ProcessSpec, grid: &[(f64, Vec<f64>)]) -> Result<HypothesisReport> {
    if grid.is_empty() {
        return Err(Error::InvalidSpec("probe grid is empty".into()));
    }
    let kernel = &spec.kernel;
    let mut entries = Vec::with_capacity(grid.len());
    for (t, x) in grid {
        if !spec.space.within_box(x, 0.0) {
            return Err(Error::InvalidSpec(format!("probe point {x:?} outside the bounding box")));
        }
        let value = |g: &dyn Fn(&[f64]) -> f64, shell: Shell| {
            let q = kernel.integrate(*t, x, g, shell);
            ProbeValue { value: q.value, diverged: q.diverged }
        };
        let quadratic = value(&|xi| norm(xi).powi(2).min(1.0), Shell::ALL);
        let bounded_variation = value(&|xi| norm(xi), Shell::within(1.0));
        let large_jump_mass = value(&|_| 1.0, Shell::above(just_below(1.0)));
        let total_mass = value(&|_| 1.0, Shell::ALL);

        let mut negative_rate = false;
        let mut jump_range = 0.0f64;
        kernel.for_each_atom(*t, x, &mut |xi, rate| {
            if rate < 0.0 || !rate.is_finite() {
                negative_rate = true;
            }
            if rate > 0.0 {
                jump_range = jump_range.max(norm(xi));
            }
        });
        if let Some((lower, upper)) = kernel.density_support() {
            for k in 0..=64 {
                let xi = lower + (upper - lower) * k as f64 / 64.0;
                if kernel.density_at(*t, x, xi) < 0.0 {
                    negative_rate = true;
                }
            }
            let reach = lower.abs().max(upper.abs());
            let mut radius = reach;
            for level in -MAX_DYADIC_LEVEL..64 {
                let r = 2f64.powi(level);
                let tail = kernel.integrate(*t, x, &|_| 1.0, Shell::above(just_below(r)));
                let atoms_beyond = {
                    let mut m = 0.0;
                    kernel.for_each_atom(*t, x, &mut |xi, rate| {
                        if norm(xi) >= r {
                            m += rate;
                        }
                    });
                    m
                };
                if tail.value - atoms_beyond < RANGE_MASS_FLOOR && !tail.diverged {
                    radius = r;
                    break;
                }
                if r > reach {
                    break;
                }
            }
            jump_range = jump_range.max(radius);
        }
        entries.push(ProbeEntry {
            t: *t,
            x: x.clone(),
            quadratic,
            bounded_variation,
            large_jump_mass,
            total_mass,
            jump_range,
            negative_rate,
        });
    }
    let delta_zero_admissible = entries.iter().all(|e| !e.bounded_variation.diverged && !e.quadratic.diverged);
    let finite_activity = entries.iter().all(|e| !e.total_mass.diverged);
    let negative_rate = entries.iter().any(|e| e.negative_rate);
    Ok(HypothesisReport { entries, delta_zero_admissible, finite_activity, negative_rate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::model::{
        Atom, DriftField, InitialLaw, JumpKernel, LevyDensity, LevyMeasure, RateMatrix, StateSpace, TruncationDelta,
    };

    fn spec_with(kernel: JumpKernel, space: StateSpace) -> ProcessSpec {
        ProcessSpec {
            drift: DriftField::Zero(space.dimension()),
            initial: InitialLaw::Point(vec![0.0]),
            space,
            kernel,
            delta: TruncationDelta::new(1.0).unwrap(),
            horizon: 1.0,
        }
    }

    fn levy_density(src: &str) -> JumpKernel {
        JumpKernel::Levy(LevyMeasure {
            atoms: vec![],
            density: Some(LevyDensity { density: Expr::parse(src).unwrap(), lower: 0.0, upper: 1.0, reflected: false }),
        })
    }

    fn continuous() -> StateSpace {
        StateSpace::Continuous { lower: vec![-1.0], upper: vec![1.0] }
    }

    #[test]
    fn poisson_atom() {
        let k = JumpKernel::Atomic(vec![Atom { jump: vec![1.0], rate: Expr::constant(2.0) }]);
        let spec = spec_with(k, StateSpace::Lattice { dimension: 1, step: 1.0 });
        let r = probe_hypotheses(&spec, &[(0.0, vec![0.0])]).unwrap();
        let e = &r.entries[0];
        assert_eq!(e.quadratic.value, 2.0);
        assert_eq!(e.bounded_variation.value, 2.0);
        assert_eq!(e.large_jump_mass.value, 2.0);
        assert_eq!(e.jump_range, 1.0);
        assert!(r.delta_zero_admissible);
        assert!(r.finite_activity);
    }

    #[test]
    fn bounded_variation_stable_like() {
        let spec = spec_with(levy_density("abs(xi)^(-1.5)"), continuous());
        let r = probe_hypotheses(&spec, &[(0.0, vec![0.0])]).unwrap();
        let e = &r.entries[0];
        assert!(!e.bounded_variation.diverged);
        assert!((e.bounded_variation.value - 2.0).abs() < 1e-9);
        assert!((e.quadratic.value - 2.0 / 3.0).abs() < 1e-9);
        assert!(e.total_mass.diverged);
        assert_eq!(e.jump_range, 1.0);
        assert!(r.delta_zero_admissible);
        assert!(!r.finite_activity);
    }

    #[test]
    fn unbounded_variation_stable_like() {
        let spec = spec_with(levy_density("abs(xi)^(-2.5)"), continuous());
        let r = probe_hypotheses(&spec, &[(0.0, vec![0.0])]).unwrap();
        let e = &r.entries[0];
        assert!(e.bounded_variation.diverged);
        assert!(!e.quadratic.diverged);
        assert!((e.quadratic.value - 2.0).abs() < 1e-9);
        assert!(!r.delta_zero_admissible);
    }

    #[test]
    fn finite_chains_are_always_bounded_variation() {
        let mut m = nalgebra::DMatrix::zeros(3, 3);
        m[(0, 1)] = 5.0;
        m[(1, 2)] = 1.0;
        m[(2, 0)] = 0.5;
        let emb = crate::model::Embedding::integers(3);
        let k = JumpKernel::FiniteRateMatrix(RateMatrix::constant(emb.clone(), m));
        let spec = spec_with(k, StateSpace::Finite { embedding: emb });
        let grid: Vec<_> = (0..3).map(|i| (0.5, vec![i as f64])).collect();
        let r = probe_hypotheses(&spec, &grid).unwrap();
        assert!(r.delta_zero_admissible);
        assert_eq!(r.entries[2].jump_range, 2.0);
    }
}
