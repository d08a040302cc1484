use rayon::prelude::*;

use super::flow::{check_grid, MarginalFlow, Representation};
use crate::error::{Error, Result};
use crate::model::{Embedding, StateSpace};
use crate::simulate::PathEnsemble;

const CHUNK: usize = 1024;
const DENSITY_FLOOR: f64 = 1e-12;
const MIN_MEAN_COUNT: f64 = 20.0;

/// States of every path at every grid time, `out[path_chunk][path][slice]`.
fn sample_states(ens: &PathEnsemble, times: &[f64]) -> Result<Vec<Vec<Vec<Vec<f64>>>>> {
    ens.paths
        .par_chunks(CHUNK)
        .map(|chunk| {
            chunk
                .iter()
                .map(|p| times.iter().map(|t| p.state_at(*t)).collect::<Result<Vec<_>>>())
                .collect::<Result<Vec<_>>>()
        })
        .collect()
}

/// Histogram of `X_t` over the ensemble at every grid time, optionally with
/// a Gaussian product-kernel density estimate at the bin centers.
pub fn empirical_marginals(ens: &PathEnsemble, times: &[f64], bins: &Embedding, smooth: bool) -> Result<MarginalFlow> {
    if ens.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    check_grid(times, ens.horizon)?;
    let states = sample_states(ens, times)?;
    let nb = bins.len();
    let mut counts = vec![vec![0u64; nb]; times.len()];
    for path in states.iter().flatten() {
        for (k, x) in path.iter().enumerate() {
            let i = bins.index_of(x).ok_or_else(|| Error::OutsideBinning(x.clone()))?;
            counts[k][i] += 1;
        }
    }
    let repr = if smooth {
        let (values, bandwidth) = (0..times.len())
            .into_par_iter()
            .map(|k| {
                let sample: Vec<&Vec<f64>> = states.iter().flatten().map(|p| &p[k]).collect();
                kernel_density(&sample, bins)
            })
            .unzip();
        Representation::Density { values, bandwidth }
    } else {
        Representation::Histogram { counts, n_paths: ens.len() }
    };
    Ok(MarginalFlow { times: times.to_vec(), support: bins.clone(), repr })
}

fn kernel_density(sample: &[&Vec<f64>], bins: &Embedding) -> (Vec<f64>, Vec<f64>) {
    let n = sample.len() as f64;
    let dim = bins.dimension();
    let fallback: Vec<f64> = match bins.grid_geometry() {
        Some((_, width, _)) => width.to_vec(),
        None => vec![1.0; dim],
    };
    let h: Vec<f64> = (0..dim)
        .map(|d| {
            let mean = sample.iter().map(|x| x[d]).sum::<f64>() / n;
            let var = sample.iter().map(|x| (x[d] - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
            let bw = 1.06 * var.sqrt() * n.powf(-0.2);
            if bw > 0.0 {
                bw
            } else {
                fallback[d]
            }
        })
        .collect();
    let norm = (2.0 * std::f64::consts::PI).sqrt();
    let values = bins
        .points()
        .iter()
        .map(|c| {
            let s: f64 = sample
                .iter()
                .map(|x| (0..dim).map(|d| (-0.5 * ((c[d] - x[d]) / h[d]).powi(2)).exp() / (norm * h[d])).product::<f64>())
                .sum();
            (s / n).max(DENSITY_FLOOR)
        })
        .collect();
    (values, h)
}

/// Bins for an ensemble: the states themselves on finite spaces, unit cells
/// around lattice points, and on continuous spaces the finest regular grid
/// whose occupied bins hold at least 20 samples on average.
pub fn default_binning(ens: &PathEnsemble, times: &[f64], space: &StateSpace) -> Result<Embedding> {
    if ens.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    if let StateSpace::Finite { embedding } = space {
        return Ok(embedding.clone());
    }
    let states = sample_states(ens, times)?;
    let all: Vec<&Vec<f64>> = states.iter().flatten().flatten().collect();
    let dim = space.dimension();
    let lo: Vec<f64> = (0..dim).map(|d| all.iter().map(|x| x[d]).fold(f64::INFINITY, f64::min)).collect();
    let hi: Vec<f64> = (0..dim).map(|d| all.iter().map(|x| x[d]).fold(f64::NEG_INFINITY, f64::max)).collect();
    if let StateSpace::Lattice { step, .. } = space {
        let lower: Vec<f64> = lo.iter().map(|l| l - 0.5 * step).collect();
        let counts: Vec<usize> = (0..dim).map(|d| ((hi[d] - lo[d]) / step).round() as usize + 1).collect();
        return Embedding::grid(lower, vec![*step; dim], counts);
    }
    let per_slice = ens.len() as f64;
    let mut m = (per_slice / MIN_MEAN_COUNT).powf(1.0 / dim as f64).ceil().max(1.0) as usize;
    loop {
        let width: Vec<f64> = (0..dim).map(|d| ((hi[d] - lo[d]) / m as f64).max(1e-12)).collect();
        let grid = Embedding::grid(lo.clone(), width, vec![m; dim])?;
        let mut occupied = vec![false; grid.len()];
        for x in &all {
            if let Some(i) = grid.index_of(x) {
                occupied[i] = true;
            }
        }
        let n_occ = occupied.iter().filter(|o| **o).count().max(1) as f64;
        let mean = per_slice / n_occ;
        if mean >= MIN_MEAN_COUNT || m == 1 {
            return Ok(grid);
        }
        m = m.div_ceil(2);
    }
}
