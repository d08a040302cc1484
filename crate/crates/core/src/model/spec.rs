use rand::Rng;

use super::drift::DriftField;
use super::functions::TruncationDelta;
use super::kernel::JumpKernel;
use super::probe::{probe_hypotheses, HypothesisReport};
use super::space::{Embedding, StateSpace};
use crate::error::{Error, Result};
use crate::expr::{Expr, VarKind, Vars};

/// Law of `X_0`.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialLaw {
    Point(Vec<f64>),
    /// Weighted atoms; weights are normalised on use.
    Atoms(Vec<(Vec<f64>, f64)>),
    /// Unnormalised density on a box, sampled by rejection.
    Density { density: Expr, lower: Vec<f64>, upper: Vec<f64> },
}

const DENSITY_GRID: usize = 64;

impl InitialLaw {
    /// Probability vector over the states of a finite space.
    pub fn finite(embedding: &Embedding, probs: &[f64]) -> Result<Self> {
        if probs.len() != embedding.len() {
            return Err(Error::InvalidSpec(format!(
                "initial vector has {} entries for {} states",
                probs.len(),
                embedding.len()
            )));
        }
        Ok(InitialLaw::Atoms(
            embedding.points().iter().cloned().zip(probs.iter().copied()).collect(),
        ))
    }

    pub fn support_points(&self) -> Vec<Vec<f64>> {
        match self {
            InitialLaw::Point(x) => vec![x.clone()],
            InitialLaw::Atoms(a) => a.iter().filter(|(_, w)| *w > 0.0).map(|(x, _)| x.clone()).collect(),
            InitialLaw::Density { lower, upper, .. } => {
                let mid: Vec<f64> = lower.iter().zip(upper).map(|(l, u)| 0.5 * (l + u)).collect();
                vec![lower.clone(), mid, upper.clone()]
            }
        }
    }

    /// Probabilities of the embedded states, when the law is carried by them.
    pub fn probabilities_on(&self, embedding: &Embedding) -> Result<Vec<f64>> {
        let mut p = vec![0.0; embedding.len()];
        let mut put = |x: &[f64], w: f64| -> Result<()> {
            let i = embedding
                .index_of(x)
                .ok_or_else(|| Error::InvalidSpec(format!("initial atom {x:?} is not a state")))?;
            p[i] += w;
            Ok(())
        };
        match self {
            InitialLaw::Point(x) => put(x, 1.0)?,
            InitialLaw::Atoms(atoms) => {
                for (x, w) in atoms {
                    put(x, *w)?;
                }
            }
            InitialLaw::Density { .. } => {
                return Err(Error::InvalidSpec("a density initial law is not carried by finite states".into()))
            }
        }
        let total: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= total);
        Ok(p)
    }

    fn validate(&self, space: &StateSpace) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        match self {
            InitialLaw::Point(x) => {
                if !space.contains(x) {
                    return bad(format!("initial point {x:?} outside the state space"));
                }
            }
            InitialLaw::Atoms(atoms) => {
                if atoms.is_empty() {
                    return bad("initial law has no atoms".into());
                }
                let mut total = 0.0;
                for (x, w) in atoms {
                    if !space.contains(x) {
                        return bad(format!("initial atom {x:?} outside the state space"));
                    }
                    if !(*w >= 0.0) || !w.is_finite() {
                        return bad(format!("initial weight {w} must be finite and >= 0"));
                    }
                    total += w;
                }
                if !(total > 0.0) {
                    return bad("initial weights sum to zero".into());
                }
            }
            InitialLaw::Density { density, lower, upper } => {
                if space.is_finite() || matches!(space, StateSpace::Lattice { .. }) {
                    return bad("density initial laws need a continuous space".into());
                }
                if lower.len() != space.dimension() || upper.len() != lower.len() {
                    return bad("initial density box has the wrong dimension".into());
                }
                if lower.iter().zip(upper).any(|(l, u)| !(u > l)) {
                    return bad("initial density box must have positive volume".into());
                }
                if !space.within_box(lower, 0.0) || !space.within_box(upper, 0.0) {
                    return bad("initial density box must lie in the bounding box".into());
                }
                density.check_scope(&[VarKind::Point], lower.len())?;
            }
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        match self {
            InitialLaw::Point(x) => Ok(x.clone()),
            InitialLaw::Atoms(atoms) => {
                let total: f64 = atoms.iter().map(|(_, w)| w).sum();
                let mut u = rng.gen::<f64>() * total;
                for (x, w) in atoms {
                    if u < *w {
                        return Ok(x.clone());
                    }
                    u -= w;
                }
                Ok(atoms.iter().rev().find(|(_, w)| *w > 0.0).map(|(x, _)| x.clone()).unwrap_or_default())
            }
            InitialLaw::Density { density, lower, upper } => {
                let bound = 1.5 * density_grid_max(density, lower, upper);
                if !(bound > 0.0) || !bound.is_finite() {
                    return Err(Error::InvalidSpec("initial density has no positive finite maximum".into()));
                }
                let mut x = vec![0.0; lower.len()];
                for _ in 0..1_000_000 {
                    for (c, (l, u)) in x.iter_mut().zip(lower.iter().zip(upper)) {
                        *c = l + rng.gen::<f64>() * (u - l);
                    }
                    let v = density.eval(&Vars::at(0.0, &x));
                    if v > bound {
                        return Err(Error::InvalidSpec("initial density exceeds its rejection bound".into()));
                    }
                    if rng.gen::<f64>() * bound < v {
                        return Ok(x);
                    }
                }
                Err(Error::InvalidSpec("initial density rejection sampler did not accept".into()))
            }
        }
    }
}

fn density_grid_max(density: &Expr, lower: &[f64], upper: &[f64]) -> f64 {
    let dim = lower.len();
    let per = if dim == 1 { 4 * DENSITY_GRID } else { DENSITY_GRID.min(16) };
    let total = per.pow(dim as u32);
    let mut x = vec![0.0; dim];
    let mut best = 0.0f64;
    for flat in 0..total {
        let mut rem = flat;
        for d in 0..dim {
            let k = rem % per;
            rem /= per;
            x[d] = lower[d] + (k as f64 + 0.5) / per as f64 * (upper[d] - lower[d]);
        }
        best = best.max(density.eval(&Vars::at(0.0, &x)));
    }
    best
}

/// Martingale-problem data: state space, drift `b^δ`, jump kernel, truncation
/// `δ`, initial law and horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessSpec {
    pub space: StateSpace,
    pub drift: DriftField,
    pub kernel: JumpKernel,
    pub delta: TruncationDelta,
    pub initial: InitialLaw,
    pub horizon: f64,
}

impl ProcessSpec {
    pub fn dimension(&self) -> usize {
        self.space.dimension()
    }

    /// Checks shapes and the probe conditions at the support of the initial law.
    pub fn validate(&self) -> Result<HypothesisReport> {
        self.space.validate()?;
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::InvalidSpec(format!("horizon must be positive, got {}", self.horizon)));
        }
        let dim = self.dimension();
        self.drift.validate(dim)?;
        self.kernel.validate(dim)?;
        if self.kernel.dimension() != dim {
            return Err(Error::InvalidSpec("kernel dimension differs from the state space".into()));
        }
        self.initial.validate(&self.space)?;
        let grid: Vec<(f64, Vec<f64>)> = self
            .initial
            .support_points()
            .into_iter()
            .flat_map(|x| [0.0, 0.5 * self.horizon, self.horizon].map(|t| (t, x.clone())))
            .collect();
        let report = probe_hypotheses(self, &grid)?;
        if report.negative_rate {
            return Err(Error::InvalidSpec("kernel has a negative rate at a probe point".into()));
        }
        if report.quadratic_divergent() {
            return Err(Error::InvalidSpec("∫(|ξ|²∧1)K(dξ) diverges at a probe point".into()));
        }
        if self.delta.is_zero() && !report.delta_zero_admissible {
            return Err(Error::InvalidSpec(
                "delta = 0 requires ∫1{|ξ|≤1}|ξ|K(dξ) < ∞ (bounded variation)".into(),
            ));
        }
        Ok(report)
    }

    /// The same process restricted to a finite set of lattice points, for
    /// master-equation work. Jumps leaving the set are dropped.
    pub fn restrict_to(&self, embedding: Embedding) -> Result<ProcessSpec> {
        use super::kernel::{RateMatrix, RateSource};
        if self.kernel.has_density() {
            return Err(Error::InvalidSpec("cannot restrict a kernel with a density part".into()));
        }
        if !self.drift.is_zero() && !matches!(self.drift, DriftField::Compensator { .. }) {
            return Err(Error::InvalidSpec("cannot restrict a process that flows between jumps".into()));
        }
        let kernel = JumpKernel::FiniteRateMatrix(RateMatrix {
            embedding: embedding.clone(),
            source: RateSource::Projected(Box::new(self.kernel.clone())),
        });
        let drift = match &self.drift {
            DriftField::Compensator { delta, .. } => {
                DriftField::Compensator { kernel: Box::new(kernel.clone()), delta: *delta }
            }
            other => other.clone(),
        };
        let initial = InitialLaw::finite(&embedding, &self.initial.probabilities_on(&embedding)?)?;
        Ok(ProcessSpec {
            space: StateSpace::Finite { embedding },
            drift,
            kernel,
            delta: self.delta,
            initial,
            horizon: self.horizon,
        })
    }
}
