use crate::error::{Error, Result};
use crate::expr::{Expr, Vars};
use crate::marginals::MarginalFlow;
use crate::model::{DriftField, Embedding, JumpKernel, ProcessSpec, Shell, TruncationDelta};
use crate::reversal::{forward_rates, BackwardCharacteristics};

const DIFF_STEP: f64 = 1e-5;

/// A test function `u(x)`.
#[derive(Debug, Clone, PartialEq)]
pub enum TestFunction {
    /// Closed form in `x`; without a gradient, central differences are used.
    Expression { value: Expr, gradient: Option<Vec<Expr>> },
    /// Values at the points of an embedding, zero elsewhere, with zero gradient.
    StateValues { support: Embedding, values: Vec<f64> },
}

impl TestFunction {
    pub fn parse(source: &str) -> Result<Self> {
        Ok(TestFunction::Expression { value: Expr::parse(source)?, gradient: None })
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            TestFunction::Expression { value, .. } => value.eval(&Vars::at(0.0, x)),
            TestFunction::StateValues { support, values } => support.index_of(x).map_or(0.0, |i| values[i]),
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match self {
            TestFunction::Expression { gradient: Some(g), .. } => g.iter().map(|e| e.eval(&Vars::at(0.0, x))).collect(),
            TestFunction::Expression { .. } => {
                let mut probe = x.to_vec();
                (0..x.len())
                    .map(|d| {
                        probe[d] = x[d] + DIFF_STEP;
                        let up = self.value(&probe);
                        probe[d] = x[d] - DIFF_STEP;
                        let down = self.value(&probe);
                        probe[d] = x[d];
                        (up - down) / (2.0 * DIFF_STEP)
                    })
                    .collect()
            }
            TestFunction::StateValues { .. } => vec![0.0; x.len()],
        }
    }
}

/// `(b, K, δ)` of a jump generator.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub drift: DriftField,
    pub kernel: JumpKernel,
    pub delta: TruncationDelta,
}

impl Generator {
    pub fn forward(spec: &ProcessSpec) -> Self {
        Generator { drift: spec.drift.clone(), kernel: spec.kernel.clone(), delta: spec.delta }
    }

    pub fn backward(bc: &BackwardCharacteristics) -> Self {
        Generator { drift: bc.drift_field(), kernel: bc.kernel(), delta: bc.delta }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

/// `Lu(t, x) = b·∇u + ∫ [u(x+ξ) - u(x) - ∇u·⌊ξ⌋^δ] K_{t,x}(dξ)`.
pub fn apply_generator(gen: &Generator, u: &TestFunction, t: f64, x: &[f64]) -> Result<f64> {
    let needs_gradient = !gen.drift.is_zero() || !gen.delta.is_zero();
    let grad = if needs_gradient { u.gradient(x) } else { vec![0.0; x.len()] };
    let ux = u.value(x);
    let drift = if gen.drift.is_zero() { 0.0 } else { dot(&gen.drift.evaluate(t, x)?, &grad) };
    let delta = gen.delta;
    let integrand = |xi: &[f64]| {
        let y: Vec<f64> = x.iter().zip(xi).map(|(a, b)| a + b).collect();
        let mut g = u.value(&y) - ux;
        if !delta.is_zero() {
            g -= dot(&grad, &delta.truncate(xi));
        }
        g
    };
    let q = gen.kernel.integrate(t, x, &integrand, Shell::ALL);
    if q.diverged {
        return Err(Error::QuadratureDivergence(format!("generator integral at t={t}, x={x:?}")));
    }
    Ok(drift + q.value)
}

/// `Γ(u, v)(t, x) = ∫ (u(x+ξ) - u(x))(v(x+ξ) - v(x)) K_{t,x}(dξ)`.
pub fn carre_du_champ(kernel: &JumpKernel, t: f64, x: &[f64], u: &TestFunction, v: &TestFunction) -> Result<f64> {
    let (ux, vx) = (u.value(x), v.value(x));
    let integrand = |xi: &[f64]| {
        let y: Vec<f64> = x.iter().zip(xi).map(|(a, b)| a + b).collect();
        (u.value(&y) - ux) * (v.value(&y) - vx)
    };
    let q = kernel.integrate(t, x, &integrand, Shell::ALL);
    if q.diverged {
        return Err(Error::QuadratureDivergence(format!("carré du champ at t={t}, x={x:?}")));
    }
    Ok(q.value)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IbpResidual {
    pub residual: f64,
    pub error_bar: f64,
}

impl IbpResidual {
    pub fn consistent(&self) -> bool {
        self.residual.abs() <= self.error_bar
    }
}

/// `[(L→u + L←u) v + Γ(u, v)](x_i)` for every support state at time `t`.
fn ibp_integrand(
    spec: &ProcessSpec,
    backward: &BackwardCharacteristics,
    marginal: &MarginalFlow,
    t: f64,
    u: &TestFunction,
    v: &TestFunction,
) -> Result<Vec<f64>> {
    if !marginal.support.matches(&backward.support) {
        return Err(Error::BinMismatch("marginal and backward characteristics use different supports".into()));
    }
    let k = backward.slice_index(t)?;
    let support = &backward.support;
    let forward = forward_rates(&spec.kernel, t, marginal)?;
    let back = &backward.rates[k];
    let delta = spec.delta;
    let n = support.len();
    let uv: Vec<(f64, f64)> = (0..n).map(|i| (u.value(support.point(i)), v.value(support.point(i)))).collect();
    (0..n)
        .map(|i| {
            let x = support.point(i);
            let grad = u.gradient(x);
            let bf = spec.drift.evaluate(t, x)?;
            let bb = &backward.drift[k][i];
            let mut generators = dot(&bf, &grad) + dot(bb, &grad);
            let mut gamma = 0.0;
            for j in (0..n).filter(|j| *j != i) {
                let (f, b) = (forward[(i, j)], back[(i, j)]);
                if f == 0.0 && b == 0.0 {
                    continue;
                }
                let du = uv[j].0 - uv[i].0;
                let xi: Vec<f64> = support.point(j).iter().zip(x).map(|(a, c)| a - c).collect();
                let drift_part = if delta.is_zero() { 0.0 } else { dot(&grad, &delta.truncate(&xi)) };
                generators += (f + b) * (du - drift_part);
                gamma += f * du * (uv[j].1 - uv[i].1);
            }
            Ok(generators * uv[i].1 + gamma)
        })
        .collect()
}

/// `Σ_x p_t(x) [(L→u + L←u) v + Γ(u, v)](x)`, which vanishes when the
/// backward characteristics are right. The error bar is a rounding bound.
pub fn ibp_residual(
    spec: &ProcessSpec,
    backward: &BackwardCharacteristics,
    marginal: &MarginalFlow,
    t: f64,
    u: &TestFunction,
    v: &TestFunction,
) -> Result<IbpResidual> {
    let f = ibp_integrand(spec, backward, marginal, t, u, v)?;
    let p = marginal.probabilities_at(t)?;
    let residual = p.iter().zip(&f).map(|(a, b)| a * b).sum();
    let scale: f64 = p.iter().zip(&f).map(|(a, b)| (a * b).abs()).sum();
    Ok(IbpResidual { residual, error_bar: 64.0 * f64::EPSILON * scale.max(1e-300) * f.len() as f64 })
}

/// The same identity averaged over sampled states of `X_t`, with a
/// three-standard-error bar.
pub fn ibp_residual_monte_carlo(
    spec: &ProcessSpec,
    backward: &BackwardCharacteristics,
    marginal: &MarginalFlow,
    t: f64,
    samples: &[Vec<f64>],
    u: &TestFunction,
    v: &TestFunction,
) -> Result<IbpResidual> {
    if samples.len() < 2 {
        return Err(Error::EmptyEnsemble);
    }
    let f = ibp_integrand(spec, backward, marginal, t, u, v)?;
    let values = samples
        .iter()
        .map(|x| backward.support.index_of(x).map(|i| f[i]).ok_or_else(|| Error::OutsideBinning(x.clone())))
        .collect::<Result<Vec<f64>>>()?;
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(IbpResidual { residual: mean, error_bar: 3.0 * (var / n).sqrt() })
}
