use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The jump entropy integrand `h(a) = a ln a - a + 1`, extended by `h(0) = 1`
/// and `h(a) = +inf` for negative `a`.
pub fn entropy_h(a: f64) -> f64 {
    if a > 0.0 {
        a * a.ln() - a + 1.0
    } else if a == 0.0 {
        1.0
    } else {
        f64::INFINITY
    }
}

/// The Young function `theta(a) = h(|a| + 1) = (|a|+1) ln(|a|+1) - |a|`.
pub fn young_theta(a: f64) -> f64 {
    entropy_h(a.abs() + 1.0)
}

/// Small-jump truncation radius. Zero means the generator carries no compensator.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct TruncationDelta(f64);

impl TruncationDelta {
    pub const ZERO: TruncationDelta = TruncationDelta(0.0);

    pub fn new(delta: f64) -> Result<Self> {
        if delta.is_finite() && delta >= 0.0 {
            Ok(TruncationDelta(delta))
        } else {
            Err(Error::InvalidSpec(format!("truncation delta must be finite and >= 0, got {delta}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0.0
    }

    /// Whether a jump of this size lies inside the compensated ball.
    pub fn keeps(self, norm: f64) -> bool {
        self.0 > 0.0 && norm <= self.0
    }

    /// `⌊xi⌋^delta`: the jump itself when `|xi| <= delta`, zero otherwise, and
    /// always zero when `delta = 0`.
    pub fn truncate(self, xi: &[f64]) -> Vec<f64> {
        if self.keeps(norm(xi)) {
            xi.to_vec()
        } else {
            vec![0.0; xi.len()]
        }
    }
}

impl TryFrom<f64> for TruncationDelta {
    type Error = Error;

    fn try_from(v: f64) -> Result<Self> {
        TruncationDelta::new(v)
    }
}

impl From<TruncationDelta> for f64 {
    fn from(d: TruncationDelta) -> f64 {
        d.0
    }
}

/// Free-function form of [`TruncationDelta::truncate`].
pub fn truncate_jump(xi: &[f64], delta: TruncationDelta) -> Vec<f64> {
    delta.truncate(xi)
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>().sqrt()
}
