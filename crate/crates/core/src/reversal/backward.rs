use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::flux::{check_absolute_continuity, forward_rates, solve_flux_slice, AbsoluteContinuityReport};
use crate::csvfmt::{num, writer};
use crate::error::{Error, Result};
use crate::marginals::MarginalFlow;
use crate::model::{DriftField, DriftTable, Embedding, JumpKernel, ProcessSpec, RateMatrix, Shell, TruncationDelta};

#[derive(Debug, Clone, PartialEq)]
pub struct ReversalOptions {
    /// Largest incoming `σ`-weighted flux tolerated into a zero-mass state.
    pub tolerance: f64,
    /// Also solve at `t = 0`, where the initial law may have thin support.
    pub include_initial_time: bool,
}

impl Default for ReversalOptions {
    fn default() -> Self {
        ReversalOptions { tolerance: 1e-12, include_initial_time: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SliceValidity {
    pub t: f64,
    pub empty_rows: Vec<usize>,
    pub continuity: AbsoluteContinuityReport,
    pub max_density_ratio: f64,
}

/// Backward drift and kernel on the marginal grid, step functions in `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct BackwardCharacteristics {
    pub delta: TruncationDelta,
    pub horizon: f64,
    pub support: Embedding,
    pub times: Vec<f64>,
    /// `rates[k][(y, x)] = J←(t_k, y → x)`.
    pub rates: Vec<DMatrix<f64>>,
    /// `drift[k][state]`.
    pub drift: Vec<Vec<Vec<f64>>>,
    /// The marginal slice each kernel slice was solved against.
    pub marginal: Vec<Vec<f64>>,
    pub validity: Vec<SliceValidity>,
}

/// `b←^δ = -b→^δ + ∫⌊y - x⌋^δ (J→ + J←)(dy)`; exactly `-b→` when `δ = 0`.
pub fn backward_drift(
    forward_drift: &DriftField,
    forward_kernel: &JumpKernel,
    backward_kernel: &JumpKernel,
    delta: TruncationDelta,
    t: f64,
    x: &[f64],
) -> Result<Vec<f64>> {
    let mut b: Vec<f64> = forward_drift.evaluate(t, x)?.into_iter().map(|v| -v).collect();
    if delta.is_zero() {
        return Ok(b);
    }
    let shell = Shell::within(delta.value());
    let f = forward_kernel.first_moment(t, x, shell)?;
    let g = backward_kernel.first_moment(t, x, shell)?;
    for (o, (p, q)) in b.iter_mut().zip(f.iter().zip(&g)) {
        *o += p + q;
    }
    Ok(b)
}

/// `Σ_y ⌊y - x⌋^δ (F(x, y) + B(x, y))` for every state `x`.
fn truncated_moments(support: &Embedding, delta: TruncationDelta, f: &DMatrix<f64>, b: &DMatrix<f64>) -> Vec<Vec<f64>> {
    let n = support.len();
    let dim = support.dimension();
    (0..n)
        .map(|x| {
            let mut m = vec![0.0; dim];
            if delta.is_zero() {
                return m;
            }
            let px = support.point(x);
            for y in (0..n).filter(|y| *y != x) {
                let w = f[(x, y)] + b[(x, y)];
                if w == 0.0 {
                    continue;
                }
                let xi: Vec<f64> = support.point(y).iter().zip(px).map(|(a, c)| a - c).collect();
                for (o, c) in m.iter_mut().zip(delta.truncate(&xi)) {
                    *o += c * w;
                }
            }
            m
        })
        .collect()
}

fn solve_times(marginal: &MarginalFlow, opts: &ReversalOptions) -> Vec<(usize, f64)> {
    marginal
        .times
        .iter()
        .copied()
        .enumerate()
        .filter(|(_, t)| opts.include_initial_time || *t > 0.0)
        .collect()
}

impl BackwardCharacteristics {
    fn assemble(
        spec: &ProcessSpec,
        marginal: &MarginalFlow,
        opts: &ReversalOptions,
        kernel_of: impl Fn(f64, &[f64], &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<usize>, f64)> + Sync,
    ) -> Result<Self> {
        let slices = solve_times(marginal, opts);
        if slices.is_empty() {
            return Err(Error::Config("no marginal slices to reverse".into()));
        }
        let support = &marginal.support;
        let solved = slices
            .par_iter()
            .map(|&(k, t)| {
                let p = marginal.probabilities(k);
                let forward = forward_rates(&spec.kernel, t, marginal)?;
                let (back, empty_rows, max_density_ratio) = kernel_of(t, &p, &forward)?;
                let moments = truncated_moments(support, spec.delta, &forward, &back);
                let drift = (0..support.len())
                    .map(|i| {
                        let bf = spec.drift.evaluate(t, support.point(i))?;
                        Ok(bf.iter().zip(&moments[i]).map(|(a, m)| if spec.delta.is_zero() { -a } else { -a + m }).collect())
                    })
                    .collect::<Result<Vec<Vec<f64>>>>()?;
                let continuity = check_absolute_continuity(t, &p, &forward, support, opts.tolerance);
                let validity = SliceValidity { t, empty_rows, continuity, max_density_ratio };
                Ok((back, drift, p, validity))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut out = BackwardCharacteristics {
            delta: spec.delta,
            horizon: spec.horizon,
            support: support.clone(),
            times: slices.iter().map(|s| s.1).collect(),
            rates: Vec::new(),
            drift: Vec::new(),
            marginal: Vec::new(),
            validity: Vec::new(),
        };
        for (back, drift, p, validity) in solved {
            out.rates.push(back);
            out.drift.push(drift);
            out.marginal.push(p);
            out.validity.push(validity);
        }
        Ok(out)
    }

    /// Solves the flux equation on every marginal slice and evaluates the
    /// backward drift at every support point.
    pub fn solve(spec: &ProcessSpec, marginal: &MarginalFlow, opts: &ReversalOptions) -> Result<Self> {
        Self::assemble(spec, marginal, opts, |t, p, forward| {
            let s = solve_flux_slice(t, p, forward, &marginal.support, opts.tolerance)?;
            Ok((s.rates, s.empty_rows, s.max_density_ratio))
        })
    }

    /// Characteristics that simply reuse the forward kernel, for processes
    /// known to be reversible.
    pub fn from_forward(spec: &ProcessSpec, marginal: &MarginalFlow, opts: &ReversalOptions) -> Result<Self> {
        Self::assemble(spec, marginal, opts, |_, _, forward| Ok((forward.clone(), Vec::new(), 1.0)))
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn slice_index(&self, t: f64) -> Result<usize> {
        let scale = self.horizon.abs().max(1.0);
        self.times.iter().position(|s| (s - t).abs() <= 1e-12 * scale).ok_or(Error::TimeNotOnGrid(t))
    }

    /// `J←` as a kernel, piecewise constant between slice times.
    pub fn kernel(&self) -> JumpKernel {
        JumpKernel::FiniteRateMatrix(RateMatrix::slices(self.support.clone(), self.times.clone(), self.rates.clone()))
    }

    pub fn drift_field(&self) -> DriftField {
        DriftField::Table(DriftTable { embedding: self.support.clone(), times: self.times.clone(), values: self.drift.clone() })
    }

    pub fn all_valid(&self) -> bool {
        self.validity.iter().all(|v| v.continuity.passed)
    }

    fn index_columns(&self) -> (&'static str, &'static str, &'static str) {
        if self.support.is_grid() {
            ("from_bin", "to_bin", "bin")
        } else {
            ("from", "to", "state")
        }
    }

    /// Rows `t, from, to, rate` for every nonzero backward rate.
    pub fn write_kernel_csv<W: Write>(&self, w: W) -> Result<()> {
        let (from, to, _) = self.index_columns();
        let mut out = writer(w, &["t".into(), from.into(), to.into(), "rate".into()])?;
        for (t, m) in self.times.iter().zip(&self.rates) {
            for y in 0..m.nrows() {
                for x in 0..m.ncols() {
                    if y != x && m[(y, x)] != 0.0 {
                        out.write_record([num(*t), y.to_string(), x.to_string(), num(m[(y, x)])])?;
                    }
                }
            }
        }
        out.flush()?;
        Ok(())
    }

    /// Rows `t, state, b0..`.
    pub fn write_drift_csv<W: Write>(&self, w: W) -> Result<()> {
        let (_, _, state) = self.index_columns();
        let mut header = vec!["t".to_string(), state.to_string()];
        header.extend((0..self.support.dimension()).map(|d| format!("b{d}")));
        let mut out = writer(w, &header)?;
        for (t, slice) in self.times.iter().zip(&self.drift) {
            for (i, b) in slice.iter().enumerate() {
                let mut row = vec![num(*t), i.to_string()];
                row.extend(b.iter().map(|v| num(*v)));
                out.write_record(&row)?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_continuity_csv<W: Write>(&self, w: W) -> Result<()> {
        let reports: Vec<AbsoluteContinuityReport> = self.validity.iter().map(|v| v.continuity.clone()).collect();
        write_continuity_csv(&reports, self.index_columns().2, w)
    }
}

/// Rows `t, state, incoming, passed`: one per zero-mass state receiving flux,
/// or a single row with an empty state for a clean slice.
pub fn write_continuity_csv<W: Write>(reports: &[AbsoluteContinuityReport], state: &str, w: W) -> Result<()> {
    let mut out = writer(w, &["t".into(), state.into(), "incoming".into(), "passed".into()])?;
    for r in reports {
        let passed = u8::from(r.passed).to_string();
        if r.offending.is_empty() {
            out.write_record([num(r.t), String::new(), num(0.0), passed.clone()])?;
        }
        for (i, _, mass) in &r.offending {
            out.write_record([num(r.t), i.to_string(), num(*mass), passed.clone()])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Absolute-continuity checks on every slice that would be solved, without
/// solving the flux equation.
pub fn continuity_reports(
    spec: &ProcessSpec,
    marginal: &MarginalFlow,
    opts: &ReversalOptions,
) -> Result<Vec<AbsoluteContinuityReport>> {
    solve_times(marginal, opts)
        .into_iter()
        .map(|(k, t)| {
            let forward = forward_rates(&spec.kernel, t, marginal)?;
            Ok(check_absolute_continuity(t, &marginal.probabilities(k), &forward, &marginal.support, opts.tolerance))
        })
        .collect()
}
