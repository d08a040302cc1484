use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Points of a discrete state set in ℝⁿ, with a lookup from coordinates back
/// to the state index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    points: Vec<Vec<f64>>,
    lookup: Lookup,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Lookup {
    /// States `0..n` on the real line.
    Integers,
    /// Exact coordinate match.
    Points,
    /// Regular grid cells; any point inside a cell maps to that cell.
    Grid { lower: Vec<f64>, width: Vec<f64>, counts: Vec<usize> },
}

const MATCH_TOL: f64 = 1e-9;

impl Embedding {
    /// The default embedding of `n` states as the integers `0..n`.
    pub fn integers(n: usize) -> Self {
        Embedding { points: (0..n).map(|i| vec![i as f64]).collect(), lookup: Lookup::Integers }
    }

    pub fn from_points(points: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = points.first() else {
            return Err(Error::InvalidSpec("embedding needs at least one point".into()));
        };
        let dim = first.len();
        if dim == 0 || points.iter().any(|p| p.len() != dim || p.iter().any(|c| !c.is_finite())) {
            return Err(Error::InvalidSpec("embedding points must share a positive dimension".into()));
        }
        for (i, a) in points.iter().enumerate() {
            for b in &points[i + 1..] {
                if distance(a, b) <= MATCH_TOL {
                    return Err(Error::InvalidSpec(format!("duplicate embedding point {a:?}")));
                }
            }
        }
        Ok(Embedding { points, lookup: Lookup::Points })
    }

    /// Cell centers of a regular grid; lookup maps every point of a cell to it.
    /// Cells are ordered with the last coordinate varying fastest.
    pub fn grid(lower: Vec<f64>, width: Vec<f64>, counts: Vec<usize>) -> Result<Self> {
        if lower.is_empty()
            || lower.len() != width.len()
            || lower.len() != counts.len()
            || width.iter().any(|w| !(*w > 0.0))
            || counts.iter().any(|c| *c == 0)
        {
            return Err(Error::InvalidSpec("grid needs positive widths and counts per dimension".into()));
        }
        let total: usize = counts.iter().product();
        let mut points = Vec::with_capacity(total);
        for flat in 0..total {
            let mut rem = flat;
            let mut p = vec![0.0; lower.len()];
            for d in (0..lower.len()).rev() {
                let k = rem % counts[d];
                rem /= counts[d];
                p[d] = lower[d] + (k as f64 + 0.5) * width[d];
            }
            points.push(p);
        }
        Ok(Embedding { points, lookup: Lookup::Grid { lower, width, counts } })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.points[0].len()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i]
    }

    pub fn is_grid(&self) -> bool {
        matches!(self.lookup, Lookup::Grid { .. })
    }

    /// Grid geometry `(lower, width, counts)` when this is a grid embedding.
    pub fn grid_geometry(&self) -> Option<(&[f64], &[f64], &[usize])> {
        match &self.lookup {
            Lookup::Grid { lower, width, counts } => Some((lower, width, counts)),
            _ => None,
        }
    }

    pub fn index_of(&self, x: &[f64]) -> Option<usize> {
        if x.len() != self.dimension() {
            return None;
        }
        match &self.lookup {
            Lookup::Integers => {
                let r = x[0].round();
                if (x[0] - r).abs() <= MATCH_TOL && r >= 0.0 && (r as usize) < self.points.len() {
                    Some(r as usize)
                } else {
                    None
                }
            }
            Lookup::Points => self.points.iter().position(|p| distance(p, x) <= MATCH_TOL),
            Lookup::Grid { lower, width, counts } => {
                let mut flat = 0usize;
                for d in 0..lower.len() {
                    let u = (x[d] - lower[d]) / width[d];
                    if !(u >= 0.0) {
                        return None;
                    }
                    let k = u.floor() as usize;
                    // Upper edge belongs to the last cell.
                    let k = if k == counts[d] && u <= counts[d] as f64 + 1e-12 { k - 1 } else { k };
                    if k >= counts[d] {
                        return None;
                    }
                    flat = flat * counts[d] + k;
                }
                Some(flat)
            }
        }
    }

    /// Same points up to `MATCH_TOL`.
    pub fn matches(&self, other: &Embedding) -> bool {
        self.len() == other.len()
            && self.points.iter().zip(&other.points).all(|(a, b)| a.len() == b.len() && distance(a, b) <= MATCH_TOL)
    }
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StateSpace {
    /// Finitely many states embedded in ℝⁿ.
    Finite { embedding: Embedding },
    /// The lattice `step·ℤⁿ`.
    Lattice { dimension: usize, step: f64 },
    /// ℝⁿ with a bounding box used for binning and probing.
    Continuous { lower: Vec<f64>, upper: Vec<f64> },
}

impl StateSpace {
    pub fn finite(n_states: usize) -> Result<Self> {
        if n_states == 0 {
            return Err(Error::InvalidSpec("finite space needs n_states >= 1".into()));
        }
        Ok(StateSpace::Finite { embedding: Embedding::integers(n_states) })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            StateSpace::Finite { embedding } => {
                if embedding.is_empty() {
                    return Err(Error::InvalidSpec("finite space needs n_states >= 1".into()));
                }
            }
            StateSpace::Lattice { dimension, step } => {
                if *dimension == 0 || !(*step > 0.0) || !step.is_finite() {
                    return Err(Error::InvalidSpec("lattice needs dimension >= 1 and step > 0".into()));
                }
            }
            StateSpace::Continuous { lower, upper } => {
                if lower.is_empty() || lower.len() != upper.len() {
                    return Err(Error::InvalidSpec("bounding box needs matching nonempty corners".into()));
                }
                if lower.iter().zip(upper).any(|(l, u)| !(u > l) || !l.is_finite() || !u.is_finite()) {
                    return Err(Error::InvalidSpec("bounding box must have positive volume".into()));
                }
            }
        }
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        match self {
            StateSpace::Finite { embedding } => embedding.dimension(),
            StateSpace::Lattice { dimension, .. } => *dimension,
            StateSpace::Continuous { lower, .. } => lower.len(),
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, StateSpace::Finite { .. })
    }

    pub fn embedding(&self) -> Option<&Embedding> {
        match self {
            StateSpace::Finite { embedding } => Some(embedding),
            _ => None,
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        if x.len() != self.dimension() || x.iter().any(|c| !c.is_finite()) {
            return false;
        }
        match self {
            StateSpace::Finite { embedding } => embedding.index_of(x).is_some(),
            StateSpace::Lattice { step, .. } => {
                x.iter().all(|c| ((c / step) - (c / step).round()).abs() <= MATCH_TOL)
            }
            StateSpace::Continuous { .. } => true,
        }
    }

    /// Whether `x` lies in the bounding box enlarged by `margin` (always true
    /// for discrete spaces).
    pub fn within_box(&self, x: &[f64], margin: f64) -> bool {
        match self {
            StateSpace::Continuous { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(c, (l, u))| *c >= l - margin && *c <= u + margin),
            _ => x.iter().all(|c| c.is_finite()),
        }
    }
}
