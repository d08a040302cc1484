use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::marginals::{MarginalFlow, Representation};
use crate::model::quadrature::integrate_radial;
use crate::model::{distance, Embedding, JumpKernel};

/// `π_t(x, y) = p_t(x) J(x → y)` and its transpose `π̃_t(x, y) = π_t(y, x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxMeasure {
    pub t: f64,
    pub pi: DMatrix<f64>,
    pub pi_tilde: DMatrix<f64>,
}

impl FluxMeasure {
    pub fn new(t: f64, p: &[f64], rates: &DMatrix<f64>) -> Self {
        let n = p.len();
        let pi = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { p[i] * rates[(i, j)] });
        let pi_tilde = pi.transpose();
        FluxMeasure { t, pi, pi_tilde }
    }
}

/// One time slice of the backward kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct BackwardSlice {
    pub t: f64,
    /// `rates[(y, x)] = J←(t, y → x)`.
    pub rates: DMatrix<f64>,
    /// States with `p_t(y) = 0`, whose rows are left empty.
    pub empty_rows: Vec<usize>,
    /// Largest `p_t(x) / p_t(y)` over pairs carrying flux.
    pub max_density_ratio: f64,
}

/// `σ(x, y) = 1 ∧ |y - x|²`.
pub fn sigma(x: &[f64], y: &[f64]) -> f64 {
    distance(x, y).powi(2).min(1.0)
}

/// Solves `p(x) J→(x → y) = p(y) J←(y → x)` for `J←` wherever `p(y) > 0`.
pub fn solve_flux_slice(
    t: f64,
    p: &[f64],
    forward: &DMatrix<f64>,
    support: &Embedding,
    tolerance: f64,
) -> Result<BackwardSlice> {
    let n = p.len();
    if forward.nrows() != n || forward.ncols() != n || support.len() != n {
        return Err(Error::BinMismatch(format!("marginal has {n} states, rate matrix {}x{}", forward.nrows(), forward.ncols())));
    }
    let mut rates = DMatrix::zeros(n, n);
    let mut empty_rows = Vec::new();
    let mut max_density_ratio = 0.0f64;
    for y in 0..n {
        if p[y] > 0.0 {
            for x in 0..n {
                if x != y && forward[(x, y)] != 0.0 {
                    rates[(y, x)] = p[x] * forward[(x, y)] / p[y];
                    if p[x] > 0.0 {
                        max_density_ratio = max_density_ratio.max(p[x] / p[y]);
                    }
                }
            }
        } else {
            let incoming: f64 = (0..n)
                .filter(|x| *x != y)
                .map(|x| p[x] * forward[(x, y)] * sigma(support.point(x), support.point(y)))
                .sum();
            if incoming > tolerance {
                return Err(Error::AbsoluteContinuityViolation {
                    time: t,
                    state: support.point(y).to_vec(),
                    incoming,
                });
            }
            empty_rows.push(y);
        }
    }
    Ok(BackwardSlice { t, rates, empty_rows, max_density_ratio })
}

/// Forward rates between the support points of a marginal flow. Histogram
/// and density flows use bin-to-bin rates from the bin centers.
pub fn forward_rates(kernel: &JumpKernel, t: f64, marginal: &MarginalFlow) -> Result<DMatrix<f64>> {
    match marginal.repr {
        Representation::ProbabilityVectors { .. } => kernel.rate_matrix_at(t, &marginal.support),
        _ => binned_rate_matrix(kernel, t, &marginal.support),
    }
}

/// `J(bin i → bin j)`: the kernel at the center of bin `i` integrated over
/// jumps landing in bin `j`. Self-transitions are dropped.
pub fn binned_rate_matrix(kernel: &JumpKernel, t: f64, bins: &Embedding) -> Result<DMatrix<f64>> {
    let n = bins.len();
    let mut out = DMatrix::zeros(n, n);
    let mut landing = vec![0.0; bins.dimension()];
    for i in 0..n {
        let c = bins.point(i);
        kernel.for_each_atom(t, c, &mut |xi, rate| {
            for (l, (a, b)) in landing.iter_mut().zip(c.iter().zip(xi)) {
                *l = a + b;
            }
            if let Some(j) = bins.index_of(&landing) {
                if j != i {
                    out[(i, j)] += rate;
                }
            }
        });
    }
    let Some((lower, upper)) = kernel.density_support() else {
        return Ok(out);
    };
    let Some((origin, width, counts)) = bins.grid_geometry() else {
        return Err(Error::BinMismatch("density kernels need a regular grid of bins".into()));
    };
    if origin.len() != 1 {
        return Err(Error::BinMismatch("density kernels are one-dimensional".into()));
    }
    let (w, m) = (width[0], counts[0]);
    for i in 0..n {
        let c = bins.point(i)[0];
        for j in (0..m).filter(|j| *j != i) {
            let (a, b) = (origin[0] + j as f64 * w - c, origin[0] + (j + 1) as f64 * w - c);
            let (a, b) = (a.max(lower), b.min(upper));
            if b <= a {
                continue;
            }
            let q = if a >= 0.0 {
                integrate_radial(|r| kernel.density_at(t, &[c], r), a, b)
            } else if b <= 0.0 {
                integrate_radial(|r| kernel.density_at(t, &[c], -r), -b, -a)
            } else {
                return Err(Error::BinMismatch("a neighbouring bin straddles zero jump".into()));
            };
            if q.diverged {
                return Err(Error::QuadratureDivergence(format!("kernel mass from bin {i} to bin {j}")));
            }
            out[(i, j)] += q.value;
        }
    }
    Ok(out)
}

/// Flux-equation solve at grid time `t` of a marginal flow.
pub fn solve_flux_equation(
    marginal: &MarginalFlow,
    forward_kernel: &JumpKernel,
    t: f64,
    tolerance: f64,
) -> Result<BackwardSlice> {
    let k = marginal.slice_index(t)?;
    let p = marginal.probabilities(k);
    let forward = forward_rates(forward_kernel, marginal.times[k], marginal)?;
    solve_flux_slice(marginal.times[k], &p, &forward, &marginal.support, tolerance)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReversibilityReport {
    pub is_reversible: bool,
    /// `max |π - π̃|` over entries.
    pub max_flux_asymmetry: f64,
    /// `max |π̃/π - 1|` over entries with `π` above the floor.
    pub max_ratio_deviation: f64,
}

pub const RATIO_FLOOR: f64 = 1e-14;

pub fn reversibility_check(p: &[f64], rates: &DMatrix<f64>, tolerance: f64) -> ReversibilityReport {
    let flux = FluxMeasure::new(0.0, p, rates);
    let mut max_flux_asymmetry = 0.0f64;
    let mut max_ratio_deviation = 0.0f64;
    for (a, b) in flux.pi.iter().zip(flux.pi_tilde.iter()) {
        max_flux_asymmetry = max_flux_asymmetry.max((a - b).abs());
        if *a > RATIO_FLOOR {
            max_ratio_deviation = max_ratio_deviation.max((b / a - 1.0).abs());
        }
    }
    ReversibilityReport { is_reversible: max_flux_asymmetry <= tolerance, max_flux_asymmetry, max_ratio_deviation }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbsoluteContinuityReport {
    pub t: f64,
    /// Mass of `I_qσ` on zero-mass states.
    pub orphan_mass: f64,
    /// `(state index, state, incoming mass)` for every zero-mass state that receives mass.
    pub offending: Vec<(usize, Vec<f64>, f64)>,
    pub passed: bool,
}

/// Checks `I_qσ ≪ q` for `I_qσ(dy) = ∫ q(dx) σ(x, y) J_x(dy)`.
pub fn check_absolute_continuity(
    t: f64,
    p: &[f64],
    rates: &DMatrix<f64>,
    support: &Embedding,
    tolerance: f64,
) -> AbsoluteContinuityReport {
    let n = p.len();
    let mut offending = Vec::new();
    for y in (0..n).filter(|y| !(p[*y] > 0.0)) {
        let incoming: f64 = (0..n)
            .filter(|x| *x != y)
            .map(|x| p[x] * rates[(x, y)] * sigma(support.point(x), support.point(y)))
            .sum();
        if incoming > 0.0 {
            offending.push((y, support.point(y).to_vec(), incoming));
        }
    }
    let orphan_mass = offending.iter().map(|o| o.2).sum();
    AbsoluteContinuityReport { t, orphan_mass, offending, passed: orphan_mass <= tolerance }
}
