use super::functions::{norm, TruncationDelta};
use super::kernel::{JumpKernel, Shell};
use super::space::Embedding;
use crate::error::{Error, Result};
use crate::expr::{Expr, VarKind, Vars};

/// Per-state drift values, piecewise constant in time on `[times[i], times[i+1])`.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftTable {
    pub embedding: Embedding,
    pub times: Vec<f64>,
    /// `values[slice][state]` is a vector in ℝⁿ.
    pub values: Vec<Vec<Vec<f64>>>,
}

impl DriftTable {
    pub fn slice_index(&self, t: f64) -> usize {
        self.times.partition_point(|s| *s <= t).saturating_sub(1)
    }
}

/// The drift vector field `b^δ(t, x)`.
#[derive(Debug, Clone, PartialEq)]
pub enum DriftField {
    Zero(usize),
    Constant(Vec<f64>),
    Expression(Vec<Expr>),
    /// `∫ ⌊ξ⌋^δ K_{t,x}(dξ)`: the drift under which a compensated generator
    /// describes a pure-jump process.
    Compensator { kernel: Box<JumpKernel>, delta: TruncationDelta },
    /// `base + ∫ ⌊ξ⌋^δ (j - 1) K_{t,x}(dξ)`, the drift of a tilted process.
    TiltCorrected { base: Box<DriftField>, kernel: Box<JumpKernel>, tilt: Expr, delta: TruncationDelta },
    Table(DriftTable),
}

impl DriftField {
    pub fn dimension(&self) -> usize {
        match self {
            DriftField::Zero(d) => *d,
            DriftField::Constant(v) => v.len(),
            DriftField::Expression(e) => e.len(),
            DriftField::Compensator { kernel, .. } => kernel.dimension(),
            DriftField::TiltCorrected { base, .. } => base.dimension(),
            DriftField::Table(t) => t.embedding.dimension(),
        }
    }

    /// True when the field vanishes identically by construction.
    pub fn is_zero(&self) -> bool {
        match self {
            DriftField::Zero(_) => true,
            DriftField::Constant(v) => v.iter().all(|c| *c == 0.0),
            _ => false,
        }
    }

    pub fn validate(&self, dimension: usize) -> Result<()> {
        if self.dimension() != dimension {
            return Err(Error::InvalidSpec(format!(
                "drift has dimension {}, state space {dimension}",
                self.dimension()
            )));
        }
        match self {
            DriftField::Constant(v) if v.iter().any(|c| !c.is_finite()) => {
                Err(Error::InvalidSpec("constant drift must be finite".into()))
            }
            DriftField::Expression(es) => {
                es.iter().try_for_each(|e| e.check_scope(&[VarKind::Time, VarKind::Point], dimension))
            }
            DriftField::Compensator { kernel, .. } => kernel.validate(dimension),
            DriftField::TiltCorrected { base, kernel, .. } => {
                base.validate(dimension)?;
                kernel.validate(dimension)
            }
            _ => Ok(()),
        }
    }

    pub fn evaluate(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            DriftField::Zero(d) => Ok(vec![0.0; *d]),
            DriftField::Constant(v) => Ok(v.clone()),
            DriftField::Expression(es) => {
                let vars = Vars::at(t, x);
                Ok(es.iter().map(|e| e.eval(&vars)).collect())
            }
            DriftField::Compensator { kernel, delta } => {
                if delta.is_zero() {
                    return Ok(vec![0.0; x.len()]);
                }
                kernel.first_moment(t, x, Shell::within(delta.value()))
            }
            DriftField::TiltCorrected { base, kernel, tilt, delta } => {
                let mut out = base.evaluate(t, x)?;
                if delta.is_zero() {
                    return Ok(out);
                }
                let correction = tilt_correction(kernel, tilt, *delta, t, x)?;
                for (o, c) in out.iter_mut().zip(correction) {
                    *o += c;
                }
                Ok(out)
            }
            DriftField::Table(table) => {
                let i = table.embedding.index_of(x).ok_or_else(|| {
                    Error::InvalidSpec(format!("drift table has no state at {x:?}"))
                })?;
                Ok(table.values[table.slice_index(t)][i].clone())
            }
        }
    }
}

/// `∫ ⌊ξ⌋^δ (j(t,x,x+ξ) - 1) K_{t,x}(dξ)`.
pub fn tilt_correction(
    kernel: &JumpKernel,
    tilt: &Expr,
    delta: TruncationDelta,
    t: f64,
    x: &[f64],
) -> Result<Vec<f64>> {
    let dim = x.len();
    let mut out = vec![0.0; dim];
    if delta.is_zero() {
        return Ok(out);
    }
    let shell = Shell::within(delta.value());
    let weight = |xi: &[f64]| {
        let y: Vec<f64> = x.iter().zip(xi).map(|(a, b)| a + b).collect();
        tilt.eval(&Vars::jump(t, x, &y, xi)) - 1.0
    };
    if !kernel.has_density() {
        kernel.for_each_atom(t, x, &mut |xi, rate| {
            if shell.contains(norm(xi)) {
                let w = weight(xi) * rate;
                for (o, c) in out.iter_mut().zip(xi) {
                    *o += c * w;
                }
            }
        });
        return Ok(out);
    }
    for (d, o) in out.iter_mut().enumerate() {
        let q = kernel.integrate(t, x, &|xi| xi[d] * weight(xi), shell);
        if q.diverged {
            return Err(Error::DriftCorrectionDivergence(format!("component {d} at t={t}, x={x:?}")));
        }
        *o = q.value;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::kernel::Atom;

    fn pm_one() -> JumpKernel {
        JumpKernel::Atomic(vec![
            Atom { jump: vec![1.0], rate: Expr::parse("1").unwrap() },
            Atom { jump: vec![-1.0], rate: Expr::parse("1").unwrap() },
        ])
    }

    #[test]
    fn expression_drift() {
        let d = DriftField::Expression(vec![Expr::parse("1 + t*x").unwrap()]);
        assert_eq!(d.evaluate(2.0, &[3.0]).unwrap(), vec![7.0]);
        assert!(d.validate(1).is_ok());
        assert!(d.validate(2).is_err());
    }

    #[test]
    fn tilt_correction_two_atoms() {
        // j(+1) = 2, j(-1) = 0: (+1)(2-1)·1 + (-1)(0-1)·1 = 2
        let d = DriftField::TiltCorrected {
            base: Box::new(DriftField::Zero(1)),
            kernel: Box::new(pm_one()),
            tilt: Expr::parse("1 + xi").unwrap(),
            delta: TruncationDelta::new(1.0).unwrap(),
        };
        assert_eq!(d.evaluate(0.0, &[0.0]).unwrap(), vec![2.0]);
    }

    #[test]
    fn compensator_of_symmetric_kernel_vanishes() {
        let d = DriftField::Compensator { kernel: Box::new(pm_one()), delta: TruncationDelta::new(1.0).unwrap() };
        assert_eq!(d.evaluate(0.0, &[5.0]).unwrap(), vec![0.0]);
    }
}
