use nalgebra::{DMatrix, DVector};

use super::flow::{check_grid, MarginalFlow, Representation};
use super::ode::dopri5;
use crate::error::{Error, Result};
use crate::model::{Embedding, JumpKernel, ProcessSpec, RateSource};

pub const NEGATIVE_TOLERANCE: f64 = 1e-9;
const ODE_RTOL: f64 = 1e-10;
const ODE_ATOL: f64 = 1e-15;

/// `Q = R - diag(R·1)`.
pub fn generator_matrix(rates: &DMatrix<f64>) -> DMatrix<f64> {
    let mut q = rates.clone();
    for i in 0..q.nrows() {
        q[(i, i)] = 0.0;
        let out: f64 = q.row(i).sum();
        q[(i, i)] = -out;
    }
    q
}

fn propagate(rates: &DMatrix<f64>, p: &DVector<f64>, dt: f64) -> DVector<f64> {
    if dt == 0.0 {
        return p.clone();
    }
    (generator_matrix(rates).transpose() * dt).exp() * p
}

/// Clips round-off negatives and renormalises; returns the mass defect.
fn renormalize(p: &mut [f64], t: f64) -> Result<f64> {
    if let Some(v) = p.iter().copied().find(|v| *v < -NEGATIVE_TOLERANCE || !v.is_finite()) {
        return Err(Error::NegativeProbability { time: t, value: v });
    }
    let total: f64 = p.iter().sum();
    for v in p.iter_mut() {
        *v = v.max(0.0) / total;
    }
    Ok((total - 1.0).abs())
}

/// Breakpoints of a piecewise-constant rate source, if that is what the kernel is.
fn slice_breaks(kernel: &JumpKernel) -> Option<&[f64]> {
    match kernel {
        JumpKernel::FiniteRateMatrix(m) => match &m.source {
            RateSource::Slices { times, .. } => Some(times),
            _ => None,
        },
        _ => None,
    }
}

/// Exact marginals of a finite chain on the given grid: matrix exponentials
/// for constant or piecewise-constant rates, adaptive Dormand-Prince otherwise.
pub fn master_equation_marginals(spec: &ProcessSpec, times: &[f64]) -> Result<MarginalFlow> {
    let Some(embedding) = spec.space.embedding() else {
        return Err(Error::InvalidSpec("the master equation needs a finite state space".into()));
    };
    check_grid(times, spec.horizon)?;
    let p0 = DVector::from_vec(spec.initial.probabilities_on(embedding)?);
    let rates = |t: f64| spec.kernel.rate_matrix_at(t, embedding);
    let raw: Vec<DVector<f64>> = if !spec.kernel.depends_on_time() {
        let r = rates(0.0)?;
        times.iter().map(|t| propagate(&r, &p0, *t)).collect()
    } else if let Some(breaks) = slice_breaks(&spec.kernel) {
        let mut out = Vec::with_capacity(times.len());
        let (mut now, mut p) = (0.0, p0.clone());
        for &target in times {
            let inside: Vec<f64> = breaks.iter().copied().filter(|b| *b > now && *b < target).collect();
            for b in inside {
                p = propagate(&rates(now)?, &p, b - now);
                now = b;
            }
            p = propagate(&rates(now)?, &p, target - now);
            now = target;
            out.push(p.clone());
        }
        out
    } else {
        integrate_inhomogeneous(spec, embedding, &p0, times)?
    };
    let mut probs = Vec::with_capacity(times.len());
    let mut renormalization = Vec::with_capacity(times.len());
    for (p, t) in raw.into_iter().zip(times) {
        let mut p: Vec<f64> = p.iter().copied().collect();
        renormalization.push(renormalize(&mut p, *t)?);
        probs.push(p);
    }
    Ok(MarginalFlow {
        times: times.to_vec(),
        support: embedding.clone(),
        repr: Representation::ProbabilityVectors { probs, renormalization },
    })
}

fn integrate_inhomogeneous(
    spec: &ProcessSpec,
    embedding: &Embedding,
    p0: &DVector<f64>,
    times: &[f64],
) -> Result<Vec<DVector<f64>>> {
    let n = embedding.len();
    spec.kernel.rate_matrix_at(0.0, embedding)?;
    let rhs = |t: f64, p: &[f64], dp: &mut [f64]| {
        dp.iter_mut().for_each(|v| *v = 0.0);
        match spec.kernel.rate_matrix_at(t, embedding) {
            Ok(r) => {
                for i in 0..n {
                    for j in 0..n {
                        if i != j && r[(i, j)] != 0.0 {
                            let flux = p[i] * r[(i, j)];
                            dp[j] += flux;
                            dp[i] -= flux;
                        }
                    }
                }
            }
            Err(_) => dp.iter_mut().for_each(|v| *v = f64::NAN),
        }
    };
    let mut out = Vec::with_capacity(times.len());
    let (mut now, mut p) = (0.0, p0.as_slice().to_vec());
    for &target in times {
        p = dopri5(&rhs, now, &p, target, ODE_RTOL, ODE_ATOL)?;
        now = target;
        out.push(DVector::from_vec(p.clone()));
    }
    Ok(out)
}
