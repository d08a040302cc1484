//! One-dimensional quadrature for kernel densities that may be singular at the
//! origin.
//!
//! Radial integrals over `(lo, hi]` are split into dyadic bands
//! `(2^-m, 2^-m+1]` for `m = 1..=40` below one and `[2^k, 2^k+1]` above,
//! with a 16-point Gauss-Legendre rule per band. Divergence is declared when a
//! partial sum exceeds `1e12` or when the innermost band contributions stop
//! decaying; otherwise the remainder below `2^-40` is extrapolated as a
//! geometric tail.

use std::sync::OnceLock;

pub const MAX_DYADIC_LEVEL: i32 = 40;
pub const DIVERGENCE_LIMIT: f64 = 1e12;
const MAX_OUTER_LEVEL: i32 = 64;
const RATIO_WINDOW: usize = 5;
const NON_DECAY_RATIO: f64 = 0.999;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadOutcome {
    pub value: f64,
    pub diverged: bool,
}

impl QuadOutcome {
    pub const ZERO: QuadOutcome = QuadOutcome { value: 0.0, diverged: false };

    pub fn finite(value: f64) -> Self {
        QuadOutcome { value, diverged: false }
    }

    pub fn combine(self, other: QuadOutcome) -> QuadOutcome {
        QuadOutcome { value: self.value + other.value, diverged: self.diverged || other.diverged }
    }
}

fn legendre_rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| legendre_nodes(16))
}

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn legendre_nodes(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = x;
        nodes[n - 1 - i] = -x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

pub fn gauss_legendre(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let (nodes, weights) = legendre_rule();
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    nodes.iter().zip(weights).map(|(x, w)| w * f(mid + half * x)).sum::<f64>() * half
}

/// Band intervals covering `(lo, hi]`, innermost first, tagged with their
/// dyadic level (`Some(m)` for bands below one).
fn bands(lo: f64, hi: f64) -> Vec<(f64, f64, Option<i32>)> {
    let mut out = Vec::new();
    if !(hi > lo) {
        return out;
    }
    for m in (1..=MAX_DYADIC_LEVEL).rev() {
        let a = 2f64.powi(-m);
        let b = 2.0 * a;
        let (ca, cb) = (a.max(lo), b.min(hi));
        if cb > ca {
            out.push((ca, cb, Some(m)));
        }
    }
    for k in 0..MAX_OUTER_LEVEL {
        let a = 2f64.powi(k);
        if a >= hi {
            break;
        }
        let b = 2.0 * a;
        let (ca, cb) = (a.max(lo), b.min(hi));
        if cb > ca {
            out.push((ca, cb, None));
        }
    }
    out
}

/// `∫_(lo, hi] f(r) dr` for `0 <= lo < hi`, singular behaviour allowed at 0.
pub fn integrate_radial(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> QuadOutcome {
    let lo = lo.max(0.0);
    let mut total = 0.0;
    let mut inner: Vec<(i32, f64)> = Vec::new();
    for (a, b, level) in bands(lo, hi) {
        let c = gauss_legendre(&f, a, b);
        if !c.is_finite() {
            return QuadOutcome { value: f64::INFINITY, diverged: true };
        }
        total += c;
        if let Some(m) = level {
            // Only bands lying fully inside the domain say anything about the singularity.
            if a == 2f64.powi(-m) && b == 2f64.powi(1 - m) {
                inner.push((m, c));
            }
        }
        if total.abs() > DIVERGENCE_LIMIT {
            return QuadOutcome { value: f64::INFINITY.copysign(total), diverged: true };
        }
    }
    // `inner` is ordered from the deepest level outwards.
    let deepest: Vec<f64> = inner
        .iter()
        .take_while(|(m, _)| *m > MAX_DYADIC_LEVEL - RATIO_WINDOW as i32)
        .map(|(_, c)| *c)
        .collect();
    if lo == 0.0 && deepest.len() == RATIO_WINDOW && deepest.iter().all(|c| *c != 0.0) {
        // deepest[0] is level 40, deepest[1] level 39, ...
        let non_decaying = deepest.windows(2).all(|w| w[0].abs() >= NON_DECAY_RATIO * w[1].abs());
        if non_decaying {
            return QuadOutcome { value: f64::INFINITY.copysign(total), diverged: true };
        }
        let r = deepest[0] / deepest[1];
        if r > 0.0 && r < 1.0 {
            total += deepest[0] * r / (1.0 - r);
        }
    }
    QuadOutcome::finite(total)
}

/// Partition of `(lo, hi]` into sampling cells: every dyadic band split into
/// `per_band` equal pieces.
pub fn radial_cells(lo: f64, hi: f64, per_band: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for (a, b, _) in bands(lo.max(0.0), hi) {
        let w = (b - a) / per_band as f64;
        for k in 0..per_band {
            let ca = a + k as f64 * w;
            let cb = if k + 1 == per_band { b } else { a + (k + 1) as f64 * w };
            out.push((ca, cb));
        }
    }
    out
}
