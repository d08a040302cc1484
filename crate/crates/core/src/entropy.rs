//! Girsanov tilts of a reference process and their relative entropy.

use std::cell::RefCell;
use std::io::Write;

use crate::csvfmt::{num, writer};
use crate::error::{Error, Result};
use crate::expr::{Expr, VarKind, Vars};
use crate::marginals::MarginalFlow;
use crate::model::quadrature::gauss_legendre;
use crate::model::{entropy_h, tilt_correction, DriftField, JumpKernel, ProcessSpec, Shell};
use crate::reversal::BackwardCharacteristics;
use crate::simulate::Trajectory;

pub const DIVERGENCE_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyReport {
    pub initial: f64,
    pub running: f64,
    pub total: f64,
    /// `|trapezoid - midpoint|` of the running term.
    pub error: f64,
    pub diverged: bool,
}

impl EntropyReport {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = writer(w, &["initial".into(), "running".into(), "total".into(), "error".into()])?;
        out.write_record([num(self.initial), num(self.running), num(self.total), num(self.error)])?;
        out.flush()?;
        Ok(())
    }
}

fn is_unit(tilt: &Expr) -> bool {
    let free = [VarKind::Time, VarKind::Point, VarKind::Landing, VarKind::Jump].iter().all(|k| !tilt.uses(*k));
    free && tilt.eval(&Vars::at(0.0, &[])) == 1.0
}

fn probe_states(reference: &ProcessSpec) -> Vec<Vec<f64>> {
    match reference.space.embedding() {
        Some(e) => e.points().to_vec(),
        None => reference.initial.support_points(),
    }
}

/// The process `MP_δ(p₀, b^R + ∫⌊y-x⌋^δ (j-1) J^R(dy), j·J^R)`.
pub fn tilt_process(reference: &ProcessSpec, tilt: &Expr) -> Result<ProcessSpec> {
    let dim = reference.dimension();
    tilt.check_scope(&[VarKind::Time, VarKind::Point, VarKind::Landing, VarKind::Jump], dim)?;
    if is_unit(tilt) {
        return Ok(reference.clone());
    }
    let times = [0.0, 0.5 * reference.horizon, reference.horizon];
    for x in probe_states(reference) {
        for t in times {
            let mut negative = None;
            let mut y = vec![0.0; dim];
            reference.kernel.for_each_atom(t, &x, &mut |xi, _| {
                for (l, (a, b)) in y.iter_mut().zip(x.iter().zip(xi)) {
                    *l = a + b;
                }
                let j = tilt.eval(&Vars::jump(t, &x, &y, xi));
                if !(j >= 0.0) {
                    negative = Some(j);
                }
            });
            if let Some(j) = negative {
                return Err(Error::InvalidSpec(format!("tilt is {j} at t={t}, x={x:?}; it must be >= 0")));
            }
            if !reference.delta.is_zero() {
                tilt_correction(&reference.kernel, tilt, reference.delta, t, &x)?;
            }
        }
    }
    let kernel = JumpKernel::tilted(reference.kernel.clone(), tilt.clone());
    let drift = if reference.delta.is_zero() {
        reference.drift.clone()
    } else {
        DriftField::TiltCorrected {
            base: Box::new(reference.drift.clone()),
            kernel: Box::new(reference.kernel.clone()),
            tilt: tilt.clone(),
            delta: reference.delta,
        }
    };
    Ok(ProcessSpec { kernel, drift, ..reference.clone() })
}

/// `∫ h(j(t, x, y)) J^R_{t,x}(dy)`.
fn entropy_rate(kernel: &JumpKernel, tilt: &Expr, t: f64, x: &[f64]) -> Result<f64> {
    let hj = |xi: &[f64]| {
        let y: Vec<f64> = x.iter().zip(xi).map(|(a, b)| a + b).collect();
        entropy_h(tilt.eval(&Vars::jump(t, x, &y, xi)))
    };
    if !kernel.has_density() {
        let mut total = 0.0;
        kernel.for_each_atom(t, x, &mut |xi, rate| {
            if rate != 0.0 {
                total += hj(xi) * rate;
            }
        });
        return Ok(total);
    }
    let q = kernel.integrate(t, x, &hj, Shell::ALL);
    Ok(if q.diverged { f64::INFINITY } else { q.value })
}

/// Trapezoid rule, and the midpoint rule on doubled intervals over the same
/// range (a trailing odd interval is shared by both).
fn trapezoid_and_midpoint(times: &[f64], f: &[f64]) -> (f64, f64) {
    let trap: f64 = times.windows(2).zip(f.windows(2)).map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1])).sum();
    let mut mid = 0.0;
    let mut k = 0;
    while k + 2 < times.len() {
        mid += (times[k + 2] - times[k]) * f[k + 1];
        k += 2;
    }
    if k + 1 < times.len() {
        mid += 0.5 * (times[k + 1] - times[k]) * (f[k] + f[k + 1]);
    }
    (trap, mid)
}

/// `H(P|R) = H(P₀|R₀) + ∫₀ᵀ ∫ p_t(dx) ∫ h(j) J^R_{t,x}(dy) dt`, with the time
/// integral taken by the trapezoid rule on the marginal grid of the tilted process.
pub fn relative_entropy(
    reference: &ProcessSpec,
    tilt: &Expr,
    marginal: &MarginalFlow,
    initial_entropy: f64,
) -> Result<EntropyReport> {
    let times = &marginal.times;
    if times.len() < 2 || times[0] != 0.0 || (times[times.len() - 1] - reference.horizon).abs() > 1e-12 {
        return Err(Error::Config("entropy needs a marginal grid covering [0, T]".into()));
    }
    let mut f = Vec::with_capacity(times.len());
    for (k, t) in times.iter().enumerate() {
        let p = marginal.probabilities(k);
        let mut s = 0.0;
        for (i, w) in p.iter().enumerate() {
            if *w > 0.0 {
                s += w * entropy_rate(&reference.kernel, tilt, *t, marginal.support.point(i))?;
            }
        }
        f.push(s);
    }
    let (running, mid) = trapezoid_and_midpoint(times, &f);
    let diverged = !(running.abs() <= DIVERGENCE_LIMIT);
    let (running, error) = if diverged { (f64::INFINITY, f64::INFINITY) } else { (running, (running - mid).abs()) };
    let total = initial_entropy + running;
    Ok(EntropyReport { initial: initial_entropy, running, total, error, diverged })
}

/// `H(p₀|r₀) = Σ p log(p/r)`, `+∞` when `p` charges a state `r` does not.
pub fn initial_relative_entropy(p0: &[f64], r0: &[f64]) -> f64 {
    p0.iter()
        .zip(r0)
        .filter(|(p, _)| **p > 0.0)
        .map(|(p, r)| if *r > 0.0 { p * (p / r).ln() } else { f64::INFINITY })
        .sum()
}

/// `log dP/dR` along a path: `Σ log j` over its jumps minus
/// `∫₀ᵀ ∫ (j - 1) J^R_{t,X_t}(dy) dt`. A jump with `j = 0` gives `-∞`.
pub fn path_log_likelihood(reference: &ProcessSpec, tilt: &Expr, traj: &Trajectory) -> Result<f64> {
    if reference.kernel.has_density() {
        return Err(Error::InvalidSpec("the pathwise likelihood needs a finite-activity reference".into()));
    }
    let mut jumps = 0.0;
    for e in &traj.events {
        let xi = e.jump();
        let j = tilt.eval(&Vars::jump(e.time, &e.from, &e.to, &xi));
        if !(j > 0.0) {
            return Ok(f64::NEG_INFINITY);
        }
        jumps += j.ln();
    }
    let compensator = |t: f64, x: &[f64]| {
        let mut s = 0.0;
        let mut y = vec![0.0; x.len()];
        reference.kernel.for_each_atom(t, x, &mut |xi, rate| {
            for (l, (a, b)) in y.iter_mut().zip(x.iter().zip(xi)) {
                *l = a + b;
            }
            s += (tilt.eval(&Vars::jump(t, x, &y, xi)) - 1.0) * rate;
        });
        s
    };
    let mut edges = vec![0.0];
    edges.extend(traj.events.iter().map(|e| e.time));
    edges.push(traj.horizon);
    let mut integral = 0.0;
    for (k, w) in edges.windows(2).enumerate() {
        if w[1] <= w[0] {
            continue;
        }
        let start = if k == 0 { &traj.initial_state } else { &traj.events[k - 1].to };
        integral += match &traj.flow {
            None => gauss_legendre(|t| compensator(t, start), w[0], w[1]),
            Some(_) => {
                let err = RefCell::new(None);
                let v = gauss_legendre(
                    |t| match traj.state_at(t) {
                        Ok(x) => compensator(t, &x),
                        Err(e) => {
                            err.borrow_mut().get_or_insert(e);
                            0.0
                        }
                    },
                    w[0],
                    w[1],
                );
                if let Some(e) = err.into_inner() {
                    return Err(e);
                }
                v
            }
        };
    }
    Ok(jumps - integral)
}

/// `j* = J←^P / J←^R` entrywise where `J←^R > 0`, as `(t, from, to, ratio)`.
pub fn backward_tilt_ratio(
    tilted: &BackwardCharacteristics,
    reference: &BackwardCharacteristics,
) -> Result<Vec<(f64, usize, usize, f64)>> {
    if tilted.times != reference.times || !tilted.support.matches(&reference.support) {
        return Err(Error::BinMismatch("backward characteristics on different grids".into()));
    }
    let mut out = Vec::new();
    for ((t, p), r) in tilted.times.iter().zip(&tilted.rates).zip(&reference.rates) {
        for y in 0..r.nrows() {
            for x in 0..r.ncols() {
                if x != y && r[(y, x)] > 0.0 {
                    out.push((*t, y, x, p[(y, x)] / r[(y, x)]));
                }
            }
        }
    }
    Ok(out)
}
