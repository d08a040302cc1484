use std::io::{Read, Write};

use crate::csvfmt::{num, read_numeric, writer};
use crate::error::{Error, Result};
use crate::model::Embedding;

/// How a time slice of the marginal flow is stored.
#[derive(Debug, Clone, PartialEq)]
pub enum Representation {
    /// Probabilities of the support states; `renormalization[k]` is how far
    /// slice `k` had drifted from total mass one before it was renormalised.
    ProbabilityVectors { probs: Vec<Vec<f64>>, renormalization: Vec<f64> },
    /// Raw counts per bin out of `n_paths`.
    Histogram { counts: Vec<Vec<u64>>, n_paths: usize },
    /// Kernel-smoothed density at the bin centers, with per-dimension bandwidths.
    Density { values: Vec<Vec<f64>>, bandwidth: Vec<Vec<f64>> },
}

/// The flow `t ↦ p_t` on a time grid. `support` holds the states or bin
/// centers the slices refer to.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalFlow {
    pub times: Vec<f64>,
    pub support: Embedding,
    pub repr: Representation,
}

/// `n` equally spaced times from 0 to `horizon`, both included.
pub fn uniform_grid(horizon: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![horizon],
        _ => (0..n).map(|k| (k as f64 / (n - 1) as f64) * horizon).collect(),
    }
}

pub(crate) fn check_grid(times: &[f64], horizon: f64) -> Result<()> {
    if times.is_empty() {
        return Err(Error::Config("time grid is empty".into()));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Config("time grid must be strictly increasing".into()));
    }
    if !(times[0] >= 0.0) || times[times.len() - 1] > horizon {
        return Err(Error::TimeOutOfRange { t: if times[0] < 0.0 { times[0] } else { times[times.len() - 1] }, horizon });
    }
    Ok(())
}

const GRID_MATCH: f64 = 1e-12;

impl MarginalFlow {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Index of the grid time equal to `t`.
    pub fn slice_index(&self, t: f64) -> Result<usize> {
        let scale = self.times.last().map_or(1.0, |v| v.abs().max(1.0));
        let k = self.times.partition_point(|s| *s < t - GRID_MATCH * scale);
        match self.times.get(k) {
            Some(s) if (s - t).abs() <= GRID_MATCH * scale => Ok(k),
            _ => Err(Error::TimeNotOnGrid(t)),
        }
    }

    /// Slice `k` as probabilities over the support.
    pub fn probabilities(&self, k: usize) -> Vec<f64> {
        match &self.repr {
            Representation::ProbabilityVectors { probs, .. } => probs[k].clone(),
            Representation::Histogram { counts, n_paths } => {
                counts[k].iter().map(|c| *c as f64 / *n_paths as f64).collect()
            }
            Representation::Density { values, .. } => {
                let total: f64 = values[k].iter().sum();
                values[k].iter().map(|v| v / total).collect()
            }
        }
    }

    pub fn probabilities_at(&self, t: f64) -> Result<Vec<f64>> {
        Ok(self.probabilities(self.slice_index(t)?))
    }

    fn mass_rows(&self, k: usize) -> Vec<f64> {
        match &self.repr {
            Representation::ProbabilityVectors { probs, .. } => probs[k].clone(),
            Representation::Histogram { counts, .. } => counts[k].iter().map(|c| *c as f64).collect(),
            Representation::Density { values, .. } => values[k].clone(),
        }
    }

    /// Columns `t, x0.., mass`; one row per (time, state).
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let dim = self.support.dimension();
        let mut header = vec!["t".to_string()];
        header.extend((0..dim).map(|d| format!("x{d}")));
        header.push("mass".into());
        let mut out = writer(w, &header)?;
        for (k, t) in self.times.iter().enumerate() {
            for (i, m) in self.mass_rows(k).into_iter().enumerate() {
                let mut row = vec![num(*t)];
                row.extend(self.support.point(i).iter().map(|c| num(*c)));
                row.push(num(m));
                out.write_record(&row)?;
            }
        }
        out.flush()?;
        Ok(())
    }

    /// Reads a probability-vector flow written by [`MarginalFlow::write_csv`].
    pub fn read_csv<R: Read>(r: R) -> Result<MarginalFlow> {
        let (header, rows) = read_numeric(r)?;
        let dim = header.len().checked_sub(2).filter(|d| *d >= 1);
        let Some(dim) = dim else {
            return Err(Error::Format("marginal CSV needs columns t, x0.., mass".into()));
        };
        if header[0] != "t" || header[dim + 1] != "mass" {
            return Err(Error::Format(format!("unexpected marginal CSV header {header:?}")));
        }
        let mut times: Vec<f64> = Vec::new();
        let mut probs: Vec<Vec<f64>> = Vec::new();
        let mut points: Vec<Vec<f64>> = Vec::new();
        for row in &rows {
            if row.len() != dim + 2 {
                return Err(Error::Format("ragged marginal CSV row".into()));
            }
            let point = row[1..=dim].to_vec();
            if times.last() != Some(&row[0]) {
                times.push(row[0]);
                probs.push(Vec::new());
            }
            let slice = probs.last_mut().unwrap();
            if times.len() == 1 {
                points.push(point);
            } else if points.get(slice.len()) != Some(&point) {
                return Err(Error::Format("marginal CSV slices list different states".into()));
            }
            slice.push(row[dim + 1]);
        }
        if probs.iter().any(|p| p.len() != points.len()) {
            return Err(Error::Format("marginal CSV slices have different lengths".into()));
        }
        let integers = dim == 1 && points.iter().enumerate().all(|(i, p)| p[0] == i as f64);
        let support = if integers { Embedding::integers(points.len()) } else { Embedding::from_points(points)? };
        let n = times.len();
        Ok(MarginalFlow {
            times,
            support,
            repr: Representation::ProbabilityVectors { probs, renormalization: vec![0.0; n] },
        })
    }
}
