use std::io::Write;

use rayon::prelude::*;

use crate::csvfmt::{num, writer};
use crate::error::{Error, Result};
use crate::model::Embedding;
use crate::simulate::{Direction, FlowCursor, PathEnsemble, Trajectory};

const CHUNK: usize = 1024;

/// Jump counts and occupation times of an ensemble on a grid of time bins
/// and state bins, in the clock of the paths that were counted.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityEstimate {
    pub horizon: f64,
    pub time_edges: Vec<f64>,
    pub bins: Embedding,
    /// Direction of the counted paths: `Reversed` means the estimate targets `J←`.
    pub clock: Direction,
    pub n_paths: usize,
    /// `counts[(tb * nb + from) * nb + to]`.
    pub counts: Vec<u64>,
    /// `occupation[tb * nb + from]`.
    pub occupation: Vec<f64>,
}

impl IntensityEstimate {
    pub fn n_time_bins(&self) -> usize {
        self.time_edges.len() - 1
    }

    pub fn n_bins(&self) -> usize {
        self.bins.len()
    }

    pub fn count(&self, tb: usize, from: usize, to: usize) -> u64 {
        let nb = self.n_bins();
        self.counts[(tb * nb + from) * nb + to]
    }

    pub fn occupation(&self, tb: usize, from: usize) -> f64 {
        self.occupation[tb * self.n_bins() + from]
    }

    /// Jump count over occupation time; `None` when the state was never occupied.
    pub fn rate(&self, tb: usize, from: usize, to: usize) -> Option<f64> {
        let occ = self.occupation(tb, from);
        (occ > 0.0).then(|| self.count(tb, from, to) as f64 / occ)
    }

    /// Poisson standard error `√count / occupation`.
    pub fn standard_error(&self, tb: usize, from: usize, to: usize) -> Option<f64> {
        let occ = self.occupation(tb, from);
        (occ > 0.0).then(|| (self.count(tb, from, to) as f64).sqrt() / occ)
    }

    /// Rows `t_lo, t_hi, from, to, count, occupation, rate, se` for occupied cells.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let header = ["t_lo", "t_hi", "from", "to", "count", "occupation", "rate", "se"].map(String::from);
        let mut out = writer(w, &header)?;
        let nb = self.n_bins();
        for tb in 0..self.n_time_bins() {
            for from in 0..nb {
                let occ = self.occupation(tb, from);
                if occ <= 0.0 {
                    continue;
                }
                for to in (0..nb).filter(|to| *to != from) {
                    out.write_record([
                        num(self.time_edges[tb]),
                        num(self.time_edges[tb + 1]),
                        from.to_string(),
                        to.to_string(),
                        self.count(tb, from, to).to_string(),
                        num(occ),
                        num(self.rate(tb, from, to).unwrap_or(0.0)),
                        num(self.standard_error(tb, from, to).unwrap_or(0.0)),
                    ])?;
                }
            }
        }
        out.flush()?;
        Ok(())
    }
}

fn time_bin(edges: &[f64], t: f64) -> usize {
    edges.partition_point(|e| *e <= t).saturating_sub(1).min(edges.len() - 2)
}

struct Accumulator<'a> {
    edges: &'a [f64],
    bins: &'a Embedding,
    counts: Vec<u64>,
    occupation: Vec<f64>,
}

impl Accumulator<'_> {
    fn bin(&self, x: &[f64]) -> Result<usize> {
        self.bins.index_of(x).ok_or_else(|| Error::OutsideBinning(x.to_vec()))
    }

    fn occupy(&mut self, a: f64, b: f64, from: usize) {
        let nb = self.bins.len();
        let first = time_bin(self.edges, a);
        for tb in first..self.edges.len() - 1 {
            let (lo, hi) = (self.edges[tb].max(a), self.edges[tb + 1].min(b));
            if hi > lo {
                self.occupation[tb * nb + from] += hi - lo;
            }
            if self.edges[tb + 1] >= b {
                break;
            }
        }
    }

    fn add(&mut self, p: &Trajectory) -> Result<()> {
        let nb = self.bins.len();
        let mut start = 0.0;
        let mut state = p.initial_state.clone();
        for k in 0..=p.events.len() {
            let end = p.events.get(k).map_or(p.horizon, |e| e.time);
            match &p.flow {
                None => {
                    let i = self.bin(&state)?;
                    self.occupy(start, end, i);
                }
                Some(flow) => {
                    let mut cursor = FlowCursor::new(flow, p.horizon, start, state.clone());
                    let mut a = start;
                    while a < end {
                        let b = (a + flow.step).min(end);
                        let i = self.bin(&cursor.position(0.5 * (a + b))?)?;
                        self.occupy(a, b, i);
                        a = b;
                    }
                }
            }
            if let Some(e) = p.events.get(k) {
                let (from, to) = (self.bin(&e.from)?, self.bin(&e.to)?);
                if e.time >= self.edges[0] && e.time < self.edges[self.edges.len() - 1] {
                    let tb = time_bin(self.edges, e.time);
                    self.counts[(tb * nb + from) * nb + to] += 1;
                }
                start = e.time;
                state = e.to.clone();
            }
        }
        Ok(())
    }
}

fn check_edges(edges: &[f64], horizon: f64) -> Result<()> {
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Config("time bin edges must be increasing with at least one bin".into()));
    }
    if edges[0] < 0.0 || edges[edges.len() - 1] > horizon {
        return Err(Error::TimeOutOfRange { t: edges[edges.len() - 1], horizon });
    }
    Ok(())
}

fn estimate(
    ens: &PathEnsemble,
    edges: &[f64],
    bins: &Embedding,
    clock: Direction,
    prepare: impl Fn(&Trajectory) -> Trajectory + Sync,
) -> Result<IntensityEstimate> {
    if ens.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    check_edges(edges, ens.horizon)?;
    let nb = bins.len();
    let nt = edges.len() - 1;
    let partials = ens
        .paths
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc =
                Accumulator { edges, bins, counts: vec![0; nt * nb * nb], occupation: vec![0.0; nt * nb] };
            for p in chunk {
                acc.add(&prepare(p))?;
            }
            Ok((acc.counts, acc.occupation))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut counts = vec![0u64; nt * nb * nb];
    let mut occupation = vec![0.0; nt * nb];
    for (c, o) in partials {
        counts.iter_mut().zip(c).for_each(|(a, b)| *a += b);
        occupation.iter_mut().zip(o).for_each(|(a, b)| *a += b);
    }
    Ok(IntensityEstimate {
        horizon: ens.horizon,
        time_edges: edges.to_vec(),
        bins: bins.clone(),
        clock,
        n_paths: ens.len(),
        counts,
        occupation,
    })
}

/// Jump intensities of the ensemble's own paths.
pub fn estimate_intensity(ens: &PathEnsemble, edges: &[f64], bins: &Embedding) -> Result<IntensityEstimate> {
    estimate(ens, edges, bins, ens.direction, Trajectory::clone)
}

/// Jump intensities of the reversed paths `X*`; `edges` are in the reversed clock.
pub fn estimate_backward_intensity(ens: &PathEnsemble, edges: &[f64], bins: &Embedding) -> Result<IntensityEstimate> {
    estimate(ens, edges, bins, ens.direction.flipped(), Trajectory::reversed)
}
